//! Run configuration: defaults, named presets, JSON config files and
//! command-line overrides, merged in that order.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glt_core::search::SearchConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// Row-normalize node features after loading.
    pub row_normalize: bool,
    pub preset: Option<String>,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub search: SearchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            row_normalize: false,
            preset: None,
            out: PathBuf::from("out"),
            seeds: vec![0],
            jobs: 1,
            search: SearchConfig::default(),
        }
    }
}

pub const PRESETS: [&str; 4] = ["cora", "citeseer", "pubmed", "acceptance"];

/// Per-dataset training settings. `acceptance` is the Cora setting at the
/// reduced hidden width used for desk-scale checks.
pub fn preset(name: &str) -> Option<Value> {
    let train = |lr: f64, wd: f64, l1: f64, l2: f64| json!({ "lr": lr, "weight_decay": wd, "lambda1": l1, "lambda2": l2, "epochs": 200 });
    let v = match name.to_ascii_lowercase().as_str() {
        "cora" => json!({ "search": { "train": train(6e-2, 6e-5, 2e-3, 2e-3), "ace": { "refine_epochs": 30 } } }),
        "citeseer" => json!({ "search": { "train": train(1e-2, 5e-4, 1e-6, 1e-4), "ace": { "refine_epochs": 30 } } }),
        "pubmed" => json!({ "search": { "train": train(1e-2, 5e-4, 1e-2, 1e-2), "ace": { "refine_epochs": 30 } } }),
        "acceptance" => json!({ "search": { "hidden": 128, "delta": 1.0, "train": train(6e-2, 6e-5, 2e-3, 2e-3) } }),
        _ => return None,
    };
    Some(v)
}

/// Recursive object merge; `patch` wins on every leaf it sets.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Reads a config file as a JSON object without filling defaults, so it
/// can be layered.
pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if !v.is_object() {
        bail!("config {} must be a JSON object", path.display());
    }
    Ok(v)
}

/// defaults ← preset ← file ← overrides. The preset named by the
/// overrides wins over one named in the file.
pub fn resolve(file: Option<&Value>, overrides: &Value) -> Result<RunConfig> {
    let mut v = serde_json::to_value(RunConfig::default())?;
    let name = overrides
        .get("preset")
        .or_else(|| file.and_then(|f| f.get("preset")))
        .and_then(Value::as_str)
        .map(str::to_owned);
    if let Some(name) = &name {
        let Some(p) = preset(name) else {
            bail!("unknown preset '{name}' (known: {})", PRESETS.join(", "));
        };
        merge(&mut v, &p);
    }
    if let Some(f) = file {
        merge(&mut v, f);
    }
    merge(&mut v, overrides);
    let cfg: RunConfig = serde_json::from_value(v).context("bad configuration value")?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if self.jobs == 0 {
            bail!("jobs must be >= 1");
        }
        Ok(())
    }

    /// The search configuration of one seed.
    pub fn for_seed(&self, seed: u64) -> SearchConfig {
        let mut s = self.search.clone();
        s.train.seed = seed;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_apply_in_order() {
        let file = json!({ "preset": "cora", "search": { "train": { "lr": 0.5 } }, "seeds": [4, 5] });
        let cfg = resolve(Some(&file), &json!({ "seeds": [9] })).unwrap();
        assert_eq!(cfg.search.train.lr, 0.5);
        assert_eq!(cfg.search.train.weight_decay, 6e-5);
        assert_eq!(cfg.seeds, vec![9]);
        let cfg = resolve(Some(&file), &json!({ "preset": "citeseer" })).unwrap();
        assert_eq!(cfg.search.train.lambda1, 1e-6);
        assert_eq!(cfg.search.train.lr, 0.5);
    }

    #[test]
    fn unknown_preset_and_fields_rejected() {
        assert!(resolve(None, &json!({ "preset": "ogbn" })).is_err());
        assert!(resolve(None, &json!({ "sedes": [1] })).is_err());
        assert!(resolve(None, &json!({ "seeds": [] })).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = resolve(
            None,
            &json!({ "preset": "acceptance", "search": { "fixed": "graph@0.05" } }),
        )
        .unwrap();
        let back: RunConfig = serde_json::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
