//! Cross-seed aggregation of summary.csv files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Deserialize;

use crate::output::write;
use crate::{CliResult, Failure, OrRuntime, ReportArgs};

#[derive(Clone, Debug, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub seed: u64,
    pub round: usize,
    pub graph_sparsity: f64,
    pub model_sparsity: f64,
    pub test_acc: f64,
    pub val_acc: f64,
    pub dense_acc: f64,
    pub is_glt: u8,
    pub macs: u64,
}

/// One (method, seed) run reduced to the reported quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub method: String,
    pub seed: u64,
    pub dense_acc: f64,
    /// `(graph, model)` sparsity of the max-GLT round.
    pub max_glt: Option<(f64, f64)>,
    pub best_acc_all: f64,
    pub best_acc_glt: Option<f64>,
}

pub fn summarize(rows: &[SummaryRow]) -> Vec<SeedSummary> {
    let mut groups: BTreeMap<(String, u64), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.seed)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, seed), rs)| {
            let compound = |r: &SummaryRow| 1.0 - (1.0 - r.graph_sparsity) * (1.0 - r.model_sparsity);
            let glt: Vec<&&SummaryRow> = rs.iter().filter(|r| r.is_glt == 1).collect();
            let max_glt = glt
                .iter()
                .fold(None::<&SummaryRow>, |best, r| match best {
                    Some(b) if compound(b) > compound(r) || (compound(b) == compound(r) && b.round > r.round) => {
                        Some(b)
                    }
                    _ => Some(r),
                })
                .map(|r| (r.graph_sparsity, r.model_sparsity));
            SeedSummary {
                method,
                seed,
                dense_acc: rs[0].dense_acc,
                max_glt,
                best_acc_all: rs.iter().map(|r| r.test_acc).fold(f64::NEG_INFINITY, f64::max),
                best_acc_glt: glt.iter().map(|r| r.test_acc).reduce(f64::max),
            }
        })
        .collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub seeds: usize,
    pub glt_found: usize,
    pub dense_acc: Option<(f64, f64)>,
    pub graph_sparsity: Option<(f64, f64)>,
    pub model_sparsity: Option<(f64, f64)>,
    pub best_acc_all: Option<(f64, f64)>,
    pub best_acc_glt: Option<(f64, f64)>,
}

/// Sparsity columns aggregate only the seeds where a GLT was found.
pub fn aggregate(seeds: &[SeedSummary]) -> Vec<MethodRow> {
    let mut by_method: BTreeMap<&str, Vec<&SeedSummary>> = BTreeMap::new();
    for s in seeds {
        by_method.entry(&s.method).or_default().push(s);
    }
    by_method
        .into_iter()
        .map(|(method, ss)| {
            let col =
                |f: &dyn Fn(&SeedSummary) -> Option<f64>| mean_std(&ss.iter().filter_map(|s| f(s)).collect::<Vec<_>>());
            MethodRow {
                method: method.to_string(),
                seeds: ss.len(),
                glt_found: ss.iter().filter(|s| s.max_glt.is_some()).count(),
                dense_acc: col(&|s| Some(s.dense_acc)),
                graph_sparsity: col(&|s| s.max_glt.map(|g| g.0)),
                model_sparsity: col(&|s| s.max_glt.map(|g| g.1)),
                best_acc_all: col(&|s| Some(s.best_acc_all)),
                best_acc_glt: col(&|s| s.best_acc_glt),
            }
        })
        .collect()
}

const COLUMNS: [&str; 5] = [
    "dense_acc",
    "graph_sparsity",
    "model_sparsity",
    "best_acc_all",
    "best_acc_glt",
];

fn cells(r: &MethodRow) -> [Option<(f64, f64)>; 5] {
    [
        r.dense_acc,
        r.graph_sparsity,
        r.model_sparsity,
        r.best_acc_all,
        r.best_acc_glt,
    ]
}

/// Percentages, `mean ± std`, `-` where nothing was found.
pub fn render_table(rows: &[MethodRow]) -> String {
    let mut s = format!("{:<8} {:>5} {:>5}", "method", "seeds", "glt");
    for c in COLUMNS {
        write!(s, " {c:>16}").expect("write to String");
    }
    s.push('\n');
    for r in rows {
        write!(s, "{:<8} {:>5} {:>5}", r.method, r.seeds, r.glt_found).expect("write to String");
        for c in cells(r) {
            let cell = c.map_or("-".to_string(), |(m, sd)| {
                format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * sd)
            });
            write!(s, " {cell:>16}").expect("write to String");
        }
        s.push('\n');
    }
    s
}

pub fn render_csv(rows: &[MethodRow]) -> String {
    let mut s = String::from("method,seeds,glt_found");
    for c in COLUMNS {
        write!(s, ",{c}_mean,{c}_std").expect("write to String");
    }
    s.push('\n');
    for r in rows {
        write!(s, "{},{},{}", r.method, r.seeds, r.glt_found).expect("write to String");
        for c in cells(r) {
            match c {
                Some((m, sd)) => write!(s, ",{m},{sd}"),
                None => write!(s, ",,"),
            }
            .expect("write to String");
        }
        s.push('\n');
    }
    s
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    rdr.deserialize()
        .collect::<Result<Vec<SummaryRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Every summary.csv at `root` or one level below it.
fn discover(root: &Path) -> Result<Vec<PathBuf>> {
    let direct = root.join("summary.csv");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path().join("summary.csv")))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    Ok(found)
}

pub fn run(args: &ReportArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    for root in &args.runs {
        let files = discover(root).runtime()?;
        if files.is_empty() {
            return Err(Failure::Runtime(anyhow!("no summary.csv under {}", root.display())));
        }
        for f in files {
            rows.extend(read_summary(&f).runtime()?);
        }
    }
    let table = aggregate(&summarize(&rows));
    print!("{}", render_table(&table));
    if let Some(out) = &args.out {
        write(out, render_csv(&table)).runtime()?;
    }
    Ok(())
}
