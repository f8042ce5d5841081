//! Converter for the LINQS text release of Cora / Citeseer
//! (`<name>.content`, `<name>.cites`).
//!
//! `.content` lines are `id<TAB>f1<TAB>...<TAB>fd<TAB>class`; `.cites`
//! lines are `cited<TAB>citing`. Node order follows `.content`, class
//! indices follow the sorted class names. Citations naming unknown ids
//! are dropped, as are self-citations and repeats.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GraphDataset, Splits};
use crate::engine::Matrix;
use crate::error::{Error, Result};
use crate::graph::Adjacency;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanetoidSplit {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for PlanetoidSplit {
    fn default() -> Self {
        Self {
            train_per_class: 20,
            val: 500,
            test: 1000,
            seed: 0,
        }
    }
}

/// What the converter threw away, for logging.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConvertReport {
    pub raw_citations: usize,
    pub unknown_endpoint: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

pub fn convert_linqs(
    dir: impl AsRef<Path>,
    name: &str,
    split: &PlanetoidSplit,
) -> Result<(GraphDataset, ConvertReport)> {
    let dir = dir.as_ref();
    let content_path = dir.join(format!("{name}.content"));
    let cites_path = dir.join(format!("{name}.cites"));
    for p in [&content_path, &cites_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let content_file = format!("{name}.content");
    let cites_file = format!("{name}.cites");
    let content = fs::read_to_string(&content_path)?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut width = None;
    for (i, line) in content.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() < 3 {
            return Err(Error::parse(&content_file, i + 1, "expected id, features and class"));
        }
        let d = toks.len() - 2;
        if *width.get_or_insert(d) != d {
            return Err(Error::parse(
                &content_file,
                i + 1,
                format!("expected {} features, found {d}", width.unwrap()),
            ));
        }
        let feats = toks[1..=d]
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::parse(&content_file, i + 1, format!("bad feature '{t}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if ids.insert(toks[0].to_string(), rows.len()).is_some() {
            return Err(Error::parse(&content_file, i + 1, format!("repeated id '{}'", toks[0])));
        }
        rows.push(feats);
        class_names.push(toks[d + 1].to_string());
    }
    let classes: Vec<&String> = class_names.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let labels: Vec<usize> = class_names
        .iter()
        .map(|c| classes.binary_search(&c).expect("class collected above"))
        .collect();
    let num_classes = classes.len();
    let n = rows.len();

    let mut report = ConvertReport::default();
    let mut pairs = BTreeSet::new();
    for (i, line) in fs::read_to_string(&cites_path)?.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split('\t');
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::parse(&cites_file, i + 1, "expected two tab-separated ids"));
        };
        report.raw_citations += 1;
        let (Some(&u), Some(&v)) = (ids.get(a), ids.get(b)) else {
            report.unknown_endpoint += 1;
            continue;
        };
        if u == v {
            report.self_loops += 1;
            continue;
        }
        if !pairs.insert((u.min(v), u.max(v))) {
            report.duplicates += 1;
        }
    }

    let splits = planetoid_splits(&labels, num_classes, split)?;
    let features = Matrix::from_rows(&rows)?;
    let adjacency = Adjacency::from_canonical(n, pairs.into_iter().collect())?;
    Ok((
        GraphDataset::new(num_classes, features, adjacency, labels, splits)?,
        report,
    ))
}

/// `train_per_class` random nodes of each class, then `val` and `test`
/// nodes drawn from the remainder.
pub fn planetoid_splits(labels: &[usize], num_classes: usize, cfg: &PlanetoidSplit) -> Result<Splits> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut splits = Splits::default();
    let mut taken = vec![false; labels.len()];
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < cfg.train_per_class {
            return Err(Error::DegenerateConfig(format!(
                "class {c} has {} nodes, fewer than {} training nodes",
                members.len(),
                cfg.train_per_class
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..cfg.train_per_class] {
            taken[i] = true;
            splits.train.push(i);
        }
    }
    let mut rest: Vec<usize> = (0..labels.len()).filter(|&i| !taken[i]).collect();
    if rest.len() < cfg.val + cfg.test {
        return Err(Error::DegenerateConfig(format!(
            "{} nodes left for {} val + {} test",
            rest.len(),
            cfg.val,
            cfg.test
        )));
    }
    rest.shuffle(&mut rng);
    splits.val = rest[..cfg.val].to_vec();
    splits.test = rest[cfg.val..cfg.val + cfg.test].to_vec();
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_tiny_release() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("toy.content"),
            "p1\t1\t0\tA\np2\t0\t1\tB\np3\t1\t1\tA\np4\t0\t0\tB\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("toy.cites"),
            "p1\tp2\np2\tp1\np3\tp3\np3\tghost\np4\tp3\n",
        )
        .unwrap();
        let split = PlanetoidSplit {
            train_per_class: 1,
            val: 1,
            test: 1,
            seed: 3,
        };
        let (ds, rep) = convert_linqs(dir.path(), "toy", &split).unwrap();
        assert_eq!(ds.num_nodes(), 4);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0, 1]);
        assert_eq!(ds.adjacency().edges(), &[(0, 1), (2, 3)]);
        assert_eq!(
            rep,
            ConvertReport {
                raw_citations: 5,
                unknown_endpoint: 1,
                self_loops: 1,
                duplicates: 1
            }
        );
        assert_eq!(ds.splits().train.len(), 2);
        let train_labels: BTreeSet<usize> = ds.splits().train.iter().map(|&i| ds.labels()[i]).collect();
        assert_eq!(train_labels.len(), 2);
    }
}
