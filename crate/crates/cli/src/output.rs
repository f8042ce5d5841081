//! Run-directory layout and file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use glt_core::search::{max_glt_sparsity, SearchResult, TicketEval, TicketRecord};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const SUMMARY_HEADER: &str =
    "method,seed,round,graph_sparsity,model_sparsity,test_acc,val_acc,dense_acc,is_glt,macs";

pub fn run_dir(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join(format!("{label}_seed{seed}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseResult {
    pub test_acc: f64,
    pub val_acc: f64,
    pub best_epoch: usize,
}

impl From<&TicketEval> for DenseResult {
    fn from(t: &TicketEval) -> Self {
        Self {
            test_acc: t.test_acc,
            val_acc: t.val_acc,
            best_epoch: t.best_epoch,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxGlt {
    pub round: usize,
    pub graph_sparsity: f64,
    pub model_sparsity: f64,
    pub compound_sparsity: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub engine_version: String,
    pub timestamp: u64,
    pub config: RunConfig,
    pub seed: u64,
    pub dense: DenseResult,
    pub records: Vec<TicketRecord>,
    /// `None` when no round qualifies as a GLT.
    pub max_glt: Option<MaxGlt>,
    /// Highest ticket test accuracy over every round.
    pub best_acc_all: Option<f64>,
    /// Highest ticket test accuracy over GLT rounds only.
    pub best_acc_glt: Option<f64>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn max_of(it: impl Iterator<Item = f64>) -> Option<f64> {
    it.fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

impl Results {
    pub fn new(config: &RunConfig, seed: u64, res: &SearchResult) -> Self {
        let max_glt = max_glt_sparsity(&res.records).ok().flatten().map(|r| MaxGlt {
            round: r.round,
            graph_sparsity: r.graph_sparsity,
            model_sparsity: r.model_sparsity,
            compound_sparsity: r.compound_sparsity(),
            test_acc: r.test_acc,
        });
        Self {
            engine_version: glt_core::VERSION.to_string(),
            timestamp: now(),
            config: config.clone(),
            seed,
            dense: DenseResult::from(&res.dense),
            records: res.records.clone(),
            max_glt,
            best_acc_all: max_of(res.records.iter().map(|r| r.test_acc)),
            best_acc_glt: max_of(res.records.iter().filter(|r| r.is_glt).map(|r| r.test_acc)),
        }
    }
}

pub fn summary_csv(records: &[TicketRecord]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.seed,
            r.round,
            r.graph_sparsity,
            r.model_sparsity,
            r.test_acc,
            r.val_acc,
            r.dense_acc,
            u8::from(r.is_glt),
            r.macs
        )
        .expect("write to String");
    }
    s
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes config.json, results.json, summary.csv and traces/ for one seed.
pub fn write_search_run(dir: &Path, config: &RunConfig, seed: u64, res: &SearchResult) -> Result<Results> {
    let results = Results::new(config, seed, res);
    write_json(&dir.join("config.json"), config)?;
    write_json(&dir.join("results.json"), &results)?;
    write(&dir.join("summary.csv"), summary_csv(&res.records))?;
    let traces = dir.join("traces");
    write(&traces.join("dense.csv"), res.dense.trace.to_csv())?;
    for (r, t) in res.traces.iter().enumerate() {
        write(&traces.join(format!("round_{r:02}_eval.csv")), t.eval.to_csv())?;
        if let Some(ace) = &t.ace {
            write(&traces.join(format!("round_{r:02}_ace.csv")), ace.to_csv())?;
        }
    }
    Ok(results)
}
