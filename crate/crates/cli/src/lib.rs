//! `glt` command-line front end.
//!
//! Every subcommand writes under `--out`; each (method, seed) pair gets its
//! own run directory and `report` is the only command that reads across
//! runs.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "glt", version, about = "Graph lottery ticket search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the dense model and report its best-validation accuracy.
    Train(RunArgs),
    /// Iterative ticket search (ace, ugs or random).
    Search(RunArgs),
    /// Importance-rank fluctuation along a search trajectory.
    Fluctuation(RunArgs),
    /// Convert a LINQS/Planetoid text release into the native format.
    Convert(ConvertArgs),
    /// Aggregate summary.csv files across seeds.
    Report(ReportArgs),
    /// Write a synthetic dataset in the native format.
    Synth(SynthArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named hyperparameter preset (cora, citeseer, pubmed, acceptance).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub row_normalize: bool,
    #[arg(long, value_parser = ["gcn", "gin"])]
    pub backbone: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_parser = ["ace", "ugs", "random"])]
    pub method: Option<String>,
    /// Pin one side: graph@F or model@F.
    #[arg(long)]
    pub fix: Option<String>,
    #[arg(long)]
    pub pa: Option<f64>,
    #[arg(long)]
    pub pw: Option<f64>,
    #[arg(long = "sA")]
    pub s_a: Option<f64>,
    #[arg(long = "sW")]
    pub s_w: Option<f64>,
    /// ACE adversary rounds.
    #[arg(long = "T")]
    pub rounds: Option<usize>,
    /// Sampling budget: a count or `auto`.
    #[arg(long)]
    pub k_init: Option<String>,
    #[arg(long)]
    pub sim_threshold: Option<f64>,
    #[arg(long)]
    pub no_equalize: bool,
    #[arg(long)]
    pub no_resample: bool,
    #[arg(long)]
    pub no_adaptive_k: bool,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// GLT tolerance in accuracy points.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Pruning-phase epochs (also used for evaluation and the baseline).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub refine_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub wd: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long, value_parser = ["global", "per_layer"])]
    pub pooling: Option<String>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Directory holding `<name>.content` and `<name>.cites`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 500)]
    pub val: usize,
    #[arg(long, default_value_t = 1000)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, or parents of run directories.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Also write the table as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = ["sbm", "bridge"], default_value = "sbm")]
    pub kind: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 50)]
    pub nodes_per_block: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.05)]
    pub p_out: f64,
    #[arg(long, default_value_t = 8)]
    pub features: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure classes map to exit codes 2 and 1.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub(crate) trait OrRuntime<T> {
    fn runtime(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrRuntime<T> for std::result::Result<T, E> {
    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

impl RunArgs {
    /// Flag values as a JSON patch over the config layers.
    pub fn overrides(&self) -> anyhow::Result<Value> {
        let mut top = Map::new();
        let mut search = Map::new();
        let mut train = Map::new();
        let mut ace = Map::new();
        let mut ratios = Map::new();
        let put = |m: &mut Map<String, Value>, k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.into(), v);
            }
        };
        put(&mut top, "preset", self.preset.clone().map(Value::from));
        put(&mut top, "dataset", self.dataset.as_ref().map(|p| json!(p)));
        put(&mut top, "row_normalize", self.row_normalize.then_some(json!(true)));
        put(&mut top, "seeds", self.seeds.clone().map(|s| json!(s)));
        put(&mut top, "jobs", self.jobs.map(Value::from));
        put(&mut top, "out", self.out.as_ref().map(|p| json!(p)));
        put(&mut search, "backbone", self.backbone.clone().map(Value::from));
        put(&mut search, "hidden", self.hidden.map(Value::from));
        put(&mut search, "method", self.method.clone().map(Value::from));
        put(&mut search, "fixed", self.fix.clone().map(Value::from));
        put(&mut search, "s_a", self.s_a.map(Value::from));
        put(&mut search, "s_w", self.s_w.map(Value::from));
        put(&mut search, "delta", self.delta.map(Value::from));
        put(&mut search, "pooling", self.pooling.clone().map(Value::from));
        put(&mut search, "max_rounds", self.max_rounds.map(Value::from));
        put(&mut ratios, "p_a", self.pa.map(Value::from));
        put(&mut ratios, "p_w", self.pw.map(Value::from));
        put(&mut train, "epochs", self.epochs.map(Value::from));
        put(&mut train, "lr", self.lr.map(Value::from));
        put(&mut train, "weight_decay", self.wd.map(Value::from));
        put(&mut train, "lambda1", self.lambda1.map(Value::from));
        put(&mut train, "lambda2", self.lambda2.map(Value::from));
        put(&mut ace, "rounds", self.rounds.map(Value::from));
        put(&mut ace, "refine_epochs", self.refine_epochs.map(Value::from));
        put(&mut ace, "similarity_threshold", self.sim_threshold.map(Value::from));
        put(&mut ace, "equalize_swap", self.no_equalize.then_some(json!(false)));
        put(&mut ace, "resample", self.no_resample.then_some(json!(false)));
        put(&mut ace, "adaptive_k", self.no_adaptive_k.then_some(json!(false)));
        if let Some(k) = &self.k_init {
            let v = if k == "auto" {
                json!("auto")
            } else {
                let n: usize = k
                    .parse()
                    .map_err(|_| anyhow::anyhow!("--k-init expects a count or 'auto', got '{k}'"))?;
                json!({ "fixed": n })
            };
            ace.insert("k_init".into(), v);
        }
        for (k, m) in [("train", train), ("ace", ace), ("ratios", ratios)] {
            if !m.is_empty() {
                search.insert(k.into(), Value::Object(m));
            }
        }
        if !search.is_empty() {
            top.insert("search".into(), Value::Object(search));
        }
        Ok(Value::Object(top))
    }

    /// Resolves every configuration layer; errors are config errors.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let file = self
            .config
            .as_deref()
            .map(config::read_config_file)
            .transpose()
            .map_err(Failure::Config)?;
        let overrides = self.overrides().map_err(Failure::Config)?;
        config::resolve(file.as_ref(), &overrides).map_err(Failure::Config)
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Train(a) => a.resolve().and_then(|c| commands::train(&c)),
        Command::Search(a) => a.resolve().and_then(|c| commands::search(&c)),
        Command::Fluctuation(a) => a.resolve().and_then(|c| commands::fluctuation(&c)),
        Command::Convert(a) => commands::convert(&a),
        Command::Report(a) => report::run(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let (kind, e) = match &f {
                Failure::Config(e) => ("config error", e),
                Failure::Runtime(e) => ("error", e),
            };
            eprintln!("{kind}: {e:#}");
            f.exit_code()
        }
    }
}
