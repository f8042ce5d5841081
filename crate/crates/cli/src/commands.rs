use std::fmt::Write as _;

use anyhow::{anyhow, Context};
use glt_core::analytics::{fluctuation as fluctuation_profile, sparsity, Stage};
use glt_core::dataset::planetoid::{convert_linqs, PlanetoidSplit};
use glt_core::dataset::{
    load_dataset_with, planted_bridge, save_dataset, synth_sbm_with, BridgeConfig, LoadOptions, SbmConfig,
};
use glt_core::model::{backbone, ModelState};
use glt_core::search::{
    evaluate_ticket, max_glt_sparsity, search_observed, NoObserver, RoundOutput, SearchObserver, TicketRecord,
};
use glt_core::GraphDataset;
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{run_dir, write, write_json, write_search_run, DenseResult};
use crate::{CliResult, ConvertArgs, Failure, OrRuntime, SynthArgs};

fn load(cfg: &RunConfig) -> CliResult<GraphDataset> {
    let dir = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| Failure::Config(anyhow!("--dataset is required")))?;
    load_dataset_with(
        dir,
        LoadOptions {
            row_normalize_features: cfg.row_normalize,
        },
    )
    .with_context(|| format!("loading dataset {}", dir.display()))
    .runtime()
}

/// Runs `f` once per seed on a pool of `cfg.jobs` threads.
fn per_seed<T: Send>(cfg: &RunConfig, f: impl Fn(u64) -> CliResult<T> + Sync) -> CliResult<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .runtime()?;
    pool.install(|| cfg.seeds.par_iter().map(|&s| f(s)).collect())
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    let ds = load(cfg)?;
    let dense = per_seed(cfg, |seed| {
        let s = cfg.for_seed(seed);
        let model = ModelState::for_dataset(&ds, backbone(&s.backbone).runtime()?, s.hidden, seed).runtime()?;
        let eval = evaluate_ticket(&ds, &model, &model.full_masks(&ds), &s.train).runtime()?;
        let dir = run_dir(&cfg.out, "train", seed);
        let result = DenseResult::from(&eval);
        write_json(&dir.join("config.json"), cfg).runtime()?;
        write_json(
            &dir.join("results.json"),
            &json!({
                "engine_version": glt_core::VERSION,
                "config": cfg,
                "seed": seed,
                "dense": result,
            }),
        )
        .runtime()?;
        write(&dir.join("traces").join("dense.csv"), eval.trace.to_csv()).runtime()?;
        Ok((seed, result))
    })?;
    for (seed, d) in dense {
        println!(
            "seed {seed}: dense test_acc {:.4} (val {:.4} at epoch {})",
            d.test_acc, d.val_acc, d.best_epoch
        );
    }
    Ok(())
}

pub fn search(cfg: &RunConfig) -> CliResult<()> {
    let ds = load(cfg)?;
    let method = cfg.search.method.to_ascii_lowercase();
    let lines = per_seed(cfg, |seed| {
        let res = search_observed(&ds, &cfg.for_seed(seed), &mut NoObserver).runtime()?;
        let results = write_search_run(&run_dir(&cfg.out, &method, seed), cfg, seed, &res).runtime()?;
        let glt = match &results.max_glt {
            Some(m) => format!(
                "max GLT graph {:.4} model {:.4} acc {:.4}",
                m.graph_sparsity, m.model_sparsity, m.test_acc
            ),
            None => "GLT not found".to_string(),
        };
        Ok(format!(
            "{method} seed {seed}: dense {:.4}, {} rounds, {glt}",
            results.dense.test_acc,
            results.records.len()
        ))
    })?;
    lines.iter().for_each(|l| println!("{l}"));
    Ok(())
}

/// Collects the trained soft masks of every round.
#[derive(Default)]
struct StageLog {
    stages: Vec<Stage>,
    missing: bool,
    entering: (f64, f64),
}

impl SearchObserver for StageLog {
    fn round_end(&mut self, _round: usize, output: &RoundOutput, record: &TicketRecord) {
        match &output.soft {
            Some(soft) => self.stages.push(Stage {
                graph_sparsity: self.entering.0,
                model_sparsity: self.entering.1,
                soft: soft.clone(),
            }),
            None => self.missing = true,
        }
        self.entering = sparsity(&record.masks);
    }
}

/// Winner: the max-GLT ticket, or the last ticket when none qualifies.
/// Stages run up to and including the winner's round.
pub fn fluctuation(cfg: &RunConfig) -> CliResult<()> {
    let ds = load(cfg)?;
    let method = cfg.search.method.to_ascii_lowercase();
    let lines = per_seed(cfg, |seed| {
        let mut log = StageLog::default();
        let res = search_observed(&ds, &cfg.for_seed(seed), &mut log).runtime()?;
        if log.missing {
            return Err(Failure::Config(anyhow!(
                "fluctuation needs a magnitude-based method (ace or ugs)"
            )));
        }
        let Some(last) = res.records.last() else {
            return Err(Failure::Runtime(anyhow!("search produced no tickets; raise --sA/--sW")));
        };
        let winner = max_glt_sparsity(&res.records).runtime()?.unwrap_or(last);
        let stages = &log.stages[..=winner.round];
        let profile = fluctuation_profile(stages, &winner.masks).runtime()?;

        let dir = run_dir(&cfg.out, &format!("fluctuation_{method}"), seed);
        write_search_run(&dir, cfg, seed, &res).runtime()?;
        write(&dir.join("fluctuation.csv"), profile.to_csv()).runtime()?;
        let mut edges = String::from("edge_id,u,v");
        for k in 0..stages.len() {
            write!(edges, ",stage_{k}").expect("write to String");
        }
        edges.push('\n');
        for (k, &e) in profile.edge_ids.iter().enumerate() {
            let (u, v) = ds.adjacency().edges()[e];
            write!(edges, "{e},{u},{v}").expect("write to String");
            for s in &profile.edge_values {
                write!(edges, ",{}", s[k]).expect("write to String");
            }
            edges.push('\n');
        }
        write(&dir.join("edge_fluctuation.csv"), edges).runtime()?;
        write_json(&dir.join("fluctuation.json"), &profile).runtime()?;
        Ok(format!(
            "{method} seed {seed}: {} stages, winner round {}",
            stages.len(),
            winner.round
        ))
    })?;
    lines.iter().for_each(|l| println!("{l}"));
    Ok(())
}

pub fn convert(args: &ConvertArgs) -> CliResult<()> {
    let split = PlanetoidSplit {
        train_per_class: args.train_per_class,
        val: args.val,
        test: args.test,
        seed: args.split_seed,
    };
    let (ds, report) = convert_linqs(&args.input, &args.name, &split).runtime()?;
    save_dataset(&ds, &args.out).runtime()?;
    println!(
        "{}: {} nodes, {} features, {} classes, {} edges ({} raw citations, {} unknown endpoints, {} self-loops, {} duplicates)",
        args.name,
        ds.num_nodes(),
        ds.num_features(),
        ds.num_classes(),
        ds.num_edges(),
        report.raw_citations,
        report.unknown_endpoint,
        report.self_loops,
        report.duplicates
    );
    Ok(())
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let invalid = |e: glt_core::Error| match e {
        glt_core::Error::InvalidConfig(_) | glt_core::Error::DegenerateConfig(_) => Failure::Config(e.into()),
        other => Failure::Runtime(other.into()),
    };
    let ds = match args.kind.as_str() {
        "bridge" => {
            let pb = planted_bridge(&BridgeConfig {
                nodes_per_block: args.nodes_per_block,
                p_in: args.p_in,
                num_features: args.features,
                noise_std: args.noise,
                seed: args.seed,
                ..BridgeConfig::default()
            })
            .map_err(invalid)?;
            let ids = |v: &[glt_core::EdgeId]| v.iter().map(|e| e.0).collect::<Vec<_>>();
            write_json(
                &args.out.join("bridge.json"),
                &json!({ "bridges": ids(&pb.bridges), "decoys": ids(&pb.decoys) }),
            )
            .runtime()?;
            pb.dataset
        }
        _ => synth_sbm_with(&SbmConfig {
            num_blocks: args.blocks,
            nodes_per_block: args.nodes_per_block,
            p_in: args.p_in,
            p_out: args.p_out,
            num_features: args.features,
            noise_std: args.noise,
            seed: args.seed,
        })
        .map_err(invalid)?,
    };
    save_dataset(&ds, &args.out).runtime()?;
    println!(
        "{} nodes, {} edges -> {}",
        ds.num_nodes(),
        ds.num_edges(),
        args.out.display()
    );
    Ok(())
}
