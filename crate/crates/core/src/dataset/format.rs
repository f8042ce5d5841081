//! Native dataset directory format.
//!
//! ```text
//! meta.json     {"num_nodes":N,"num_features":D,"num_classes":C,"num_edges":E}
//! edges.tsv     one undirected edge per line, "u\tv"
//! features.csv  N lines of D comma-separated decimals
//! labels.tsv    N lines, one class index each
//! splits.json   {"train":[..],"val":[..],"test":[..]}
//! ```
//!
//! All files are UTF-8 with LF endings. Writing is deterministic, so
//! saving a loaded dataset reproduces the same bytes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GraphDataset, Splits};
use crate::engine::Matrix;
use crate::error::{Error, Result};
use crate::graph::Adjacency;

#[derive(Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
    num_edges: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Scale every feature row to unit ℓ1 norm after loading.
    pub row_normalize_features: bool,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<GraphDataset> {
    load_dataset_with(dir, LoadOptions::default())
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    Ok(fs::read_to_string(path)?)
}

pub fn load_dataset_with(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<GraphDataset> {
    let dir = dir.as_ref();
    let meta: Meta = serde_json::from_str(&read(dir, "meta.json")?)
        .map_err(|e| Error::parse("meta.json", e.line(), e.to_string()))?;
    let n = meta.num_nodes;

    let edges = parse_edges(&read(dir, "edges.tsv")?, n)?;
    if edges.len() != meta.num_edges {
        return Err(Error::parse(
            "meta.json",
            1,
            format!("num_edges is {} but edges.tsv holds {}", meta.num_edges, edges.len()),
        ));
    }
    let adjacency = Adjacency::from_canonical(n, edges)?;

    let features = parse_features(&read(dir, "features.csv")?, n, meta.num_features)?;
    let labels = parse_labels(&read(dir, "labels.tsv")?, n, meta.num_classes)?;
    let splits: Splits = serde_json::from_str(&read(dir, "splits.json")?)
        .map_err(|e| Error::parse("splits.json", e.line(), e.to_string()))?;

    let ds = GraphDataset::new(meta.num_classes, features, adjacency, labels, splits)?;
    Ok(if opts.row_normalize_features {
        ds.row_normalized()
    } else {
        ds
    })
}

fn parse_edges(text: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut first_seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse("edges.tsv", lineno, "expected two tab-separated node ids"));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse("edges.tsv", lineno, format!("bad node id '{s}': {e}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        for x in [u, v] {
            if x >= n {
                return Err(Error::IndexOutOfRange {
                    what: "node",
                    index: x,
                    bound: n,
                });
            }
        }
        if u == v {
            return Err(Error::SelfLoop { node: u, line: lineno });
        }
        let key = (u.min(v), u.max(v));
        if let Some(&first) = first_seen.get(&key) {
            return Err(Error::DuplicateEdge {
                u: key.0,
                v: key.1,
                first_line: first,
                second_line: lineno,
            });
        }
        first_seen.insert(key, lineno);
        edges.push(key);
    }
    edges.sort_unstable();
    Ok(edges)
}

fn parse_features(text: &str, n: usize, d: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if rows == n {
            return Err(Error::parse("features.csv", lineno, "more rows than num_nodes"));
        }
        let before = data.len();
        if d > 0 {
            for tok in line.split(',') {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| Error::parse("features.csv", lineno, format!("bad value '{tok}': {e}")))?;
                if !v.is_finite() {
                    return Err(Error::parse("features.csv", lineno, "non-finite feature"));
                }
                data.push(v);
            }
        }
        if data.len() - before != d {
            return Err(Error::parse(
                "features.csv",
                lineno,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            "features.csv",
            rows,
            format!("expected {n} rows, found {rows}"),
        ));
    }
    Matrix::from_vec(n, d, data)
}

fn parse_labels(text: &str, n: usize, classes: usize) -> Result<Vec<usize>> {
    let labels = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let y: usize = line
                .parse()
                .map_err(|e| Error::parse("labels.tsv", i + 1, format!("bad label '{line}': {e}")))?;
            if y >= classes {
                return Err(Error::IndexOutOfRange {
                    what: "label",
                    index: y,
                    bound: classes,
                });
            }
            Ok(y)
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != n {
        return Err(Error::parse(
            "labels.tsv",
            labels.len(),
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }
    Ok(labels)
}

pub fn save_dataset(ds: &GraphDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let meta = Meta {
        num_nodes: ds.num_nodes(),
        num_features: ds.num_features(),
        num_classes: ds.num_classes(),
        num_edges: ds.num_edges(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string(&meta)? + "\n")?;

    let mut edges = String::with_capacity(ds.num_edges() * 12);
    for &(u, v) in ds.adjacency().edges() {
        writeln!(edges, "{u}\t{v}").expect("write to String");
    }
    fs::write(dir.join("edges.tsv"), edges)?;

    let mut feats = String::with_capacity(ds.num_nodes() * ds.num_features() * 2);
    for r in 0..ds.num_nodes() {
        for (k, v) in ds.features().row(r).iter().enumerate() {
            if k > 0 {
                feats.push(',');
            }
            // `Display` for f64 is the shortest string that parses back exactly.
            write!(feats, "{v}").expect("write to String");
        }
        feats.push('\n');
    }
    fs::write(dir.join("features.csv"), feats)?;

    let mut labels = String::with_capacity(ds.num_nodes() * 3);
    for y in ds.labels() {
        writeln!(labels, "{y}").expect("write to String");
    }
    fs::write(dir.join("labels.tsv"), labels)?;

    fs::write(dir.join("splits.json"), serde_json::to_string(ds.splits())? + "\n")?;
    Ok(())
}
