//! Iterative ticket search: prune (and optionally refine with ACE),
//! rewind, evaluate, repeat until the target sparsities are reached.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ace::{ace_refine, AceConfig, AceTrace};
use crate::analytics::{inference_macs, sparsity};
use crate::dataset::GraphDataset;
use crate::error::{Error, Result};
use crate::model::{backbone, train, BinaryMasks, ModelState, SoftMasks, TrainConfig, TrainTrace};
use crate::prune::{magnitude_prune, random_prune, PruneRatios, WeightPooling};
use crate::registry::Registry;

/// A side whose sparsity is pinned for the whole search.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum FixedSide {
    #[default]
    None,
    Graph(f64),
    Model(f64),
}

impl fmt::Display for FixedSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixedSide::None => write!(f, "none"),
            FixedSide::Graph(v) => write!(f, "graph@{v}"),
            FixedSide::Model(v) => write!(f, "model@{v}"),
        }
    }
}

impl FromStr for FixedSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(FixedSide::None);
        }
        let bad = || Error::InvalidConfig(format!("expected none, graph@F or model@F, got '{s}'"));
        let (side, v) = s.split_once('@').ok_or_else(bad)?;
        let v: f64 = v.parse().map_err(|_| bad())?;
        if !(0.0..1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!(
                "pinned sparsity must be in [0, 1), got {v}"
            )));
        }
        match side {
            "graph" => Ok(FixedSide::Graph(v)),
            "model" => Ok(FixedSide::Model(v)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for FixedSide {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FixedSide {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub backbone: String,
    pub hidden: usize,
    pub method: String,
    pub s_a: f64,
    pub s_w: f64,
    pub ratios: PruneRatios,
    pub fixed: FixedSide,
    /// GLT tolerance in accuracy points.
    pub delta: f64,
    pub pooling: WeightPooling,
    /// Pruning-phase training; also the protocol for ticket evaluation
    /// and the dense baseline.
    pub train: TrainConfig,
    pub ace: AceConfig,
    /// Hard cap on rounds, a guard against a schedule that never reaches
    /// its targets.
    pub max_rounds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            backbone: "gcn".into(),
            hidden: 512,
            method: "ace".into(),
            s_a: 0.0,
            s_w: 0.0,
            ratios: PruneRatios::default(),
            fixed: FixedSide::None,
            delta: 0.0,
            pooling: WeightPooling::Global,
            train: TrainConfig::default(),
            ace: AceConfig::default(),
            max_rounds: 64,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.ratios.validate()?;
        self.ace.validate()?;
        backbone(&self.backbone)?;
        strategies().create(&self.method)?;
        for (name, s) in [("s_A", self.s_a), ("s_W", self.s_w)] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1), got {s}")));
            }
        }
        if self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden must be >= 1".into()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}

/// Everything a strategy needs for one round.
pub struct RoundContext<'a> {
    pub ds: &'a GraphDataset,
    /// Rewound to `W_init` at round start.
    pub model: &'a mut ModelState,
    pub active: &'a BinaryMasks,
    pub ratios: PruneRatios,
    pub cfg: &'a SearchConfig,
    pub rng: &'a mut ChaCha8Rng,
}

#[derive(Clone, Debug)]
pub struct RoundOutput {
    pub masks: BinaryMasks,
    /// Trained soft masks from the pruning phase, when there was one.
    pub soft: Option<SoftMasks>,
    pub ace: Option<AceTrace>,
}

/// One way of turning the current active masks into the next ticket.
pub trait PruneStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn round(&self, ctx: RoundContext<'_>) -> Result<RoundOutput>;
}

/// Magnitude pruning alone.
pub struct Ugs;

impl PruneStrategy for Ugs {
    fn name(&self) -> &'static str {
        "ugs"
    }

    fn round(&self, ctx: RoundContext<'_>) -> Result<RoundOutput> {
        let out = magnitude_prune(
            ctx.ds,
            ctx.model,
            ctx.active,
            ctx.ratios,
            &ctx.cfg.train,
            ctx.cfg.pooling,
        )?;
        Ok(RoundOutput {
            masks: out.masks,
            soft: Some(out.soft),
            ace: None,
        })
    }
}

/// Magnitude pruning followed by adversarial complementary erasing.
pub struct Ace;

impl PruneStrategy for Ace {
    fn name(&self) -> &'static str {
        "ace"
    }

    fn round(&self, ctx: RoundContext<'_>) -> Result<RoundOutput> {
        let out = magnitude_prune(
            ctx.ds,
            ctx.model,
            ctx.active,
            ctx.ratios,
            &ctx.cfg.train,
            ctx.cfg.pooling,
        )?;
        ctx.model.rewind();
        let (masks, trace) = ace_refine(ctx.ds, ctx.model, &out.masks, &ctx.cfg.ace, &ctx.cfg.train, ctx.rng)?;
        Ok(RoundOutput {
            masks,
            soft: Some(out.soft),
            ace: Some(trace),
        })
    }
}

/// Uniformly random removal with magnitude pruning's cardinalities.
pub struct RandomPrune;

impl PruneStrategy for RandomPrune {
    fn name(&self) -> &'static str {
        "random"
    }

    fn round(&self, ctx: RoundContext<'_>) -> Result<RoundOutput> {
        Ok(RoundOutput {
            masks: random_prune(ctx.active, ctx.ratios, ctx.cfg.pooling, ctx.rng)?,
            soft: None,
            ace: None,
        })
    }
}

pub fn strategies() -> Registry<dyn PruneStrategy> {
    let mut reg: Registry<dyn PruneStrategy> = Registry::new("method");
    reg.register("ace", || Box::new(Ace));
    reg.register("ugs", || Box::new(Ugs));
    reg.register("random", || Box::new(RandomPrune));
    reg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TicketRecord {
    pub method: String,
    pub seed: u64,
    pub round: usize,
    pub graph_sparsity: f64,
    pub model_sparsity: f64,
    pub test_acc: f64,
    pub val_acc: f64,
    pub dense_acc: f64,
    pub delta: f64,
    pub is_glt: bool,
    pub macs: u64,
    pub masks: BinaryMasks,
}

impl TicketRecord {
    /// Overall sparsity `1 − (1 − s_A)(1 − s_W)` used to rank tickets.
    pub fn compound_sparsity(&self) -> f64 {
        1.0 - (1.0 - self.graph_sparsity) * (1.0 - self.model_sparsity)
    }
}

pub fn is_glt(test_acc: f64, dense_acc: f64, delta_points: f64) -> bool {
    test_acc >= dense_acc - delta_points / 100.0
}

/// The GLT record of highest compound sparsity (later round on ties), or
/// `None` when no record qualifies.
pub fn max_glt_sparsity(records: &[TicketRecord]) -> Result<Option<&TicketRecord>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    Ok(records
        .iter()
        .filter(|r| r.is_glt)
        .fold(None, |best: Option<&TicketRecord>, r| match best {
            Some(b) if b.compound_sparsity() > r.compound_sparsity() => Some(b),
            _ => Some(r),
        }))
}

#[derive(Clone, Debug)]
pub struct TicketEval {
    pub test_acc: f64,
    pub val_acc: f64,
    pub best_epoch: usize,
    pub trace: TrainTrace,
}

/// Retrains `W_init` under fixed binary masks and reads the test accuracy
/// at the best validation epoch.
pub fn evaluate_ticket(
    ds: &GraphDataset,
    model: &ModelState,
    masks: &BinaryMasks,
    cfg: &TrainConfig,
) -> Result<TicketEval> {
    let mut m = model.clone();
    m.rewind();
    let mut soft = SoftMasks::ones_on(masks);
    let out = train(ds, &mut m, &mut soft, cfg, true, false)?;
    Ok(TicketEval {
        test_acc: out.best.test_acc,
        val_acc: out.best.val_acc,
        best_epoch: out.best.epoch,
        trace: out.trace,
    })
}

/// Hooks into the round loop.
pub trait SearchObserver {
    fn round_start(&mut self, _round: usize, _model: &ModelState) {}
    fn round_end(&mut self, _round: usize, _output: &RoundOutput, _record: &TicketRecord) {}
}

pub struct NoObserver;

impl SearchObserver for NoObserver {}

#[derive(Clone, Debug)]
pub struct RoundTraces {
    pub eval: TrainTrace,
    pub ace: Option<AceTrace>,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub dense: TicketEval,
    pub records: Vec<TicketRecord>,
    pub traces: Vec<RoundTraces>,
}

fn keep_going(cfg: &SearchConfig, masks: &BinaryMasks) -> bool {
    let (gs, ms) = sparsity(masks);
    let graph_ok = matches!(cfg.fixed, FixedSide::Graph(_)) || gs < cfg.s_a;
    let model_ok = matches!(cfg.fixed, FixedSide::Model(_)) || ms < cfg.s_w;
    graph_ok && model_ok
}

pub fn search(ds: &GraphDataset, cfg: &SearchConfig) -> Result<SearchResult> {
    search_observed(ds, cfg, &mut NoObserver)
}

pub fn search_observed(
    ds: &GraphDataset,
    cfg: &SearchConfig,
    observer: &mut dyn SearchObserver,
) -> Result<SearchResult> {
    cfg.validate()?;
    let strategy = strategies().create(&cfg.method)?;
    let seed = cfg.seed();
    let mut model = ModelState::for_dataset(ds, backbone(&cfg.backbone)?, cfg.hidden, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5_eed0_face);
    let full = model.full_masks(ds);
    let dense = evaluate_ticket(ds, &model, &full, &cfg.train).map_err(|e| match e {
        Error::NonFiniteLoss { epoch } => Error::BaselineDivergence(format!("non-finite loss at epoch {epoch}")),
        other => other,
    })?;

    let mut active = full;
    let mut pinned: Option<BinaryMasks> = None;
    let mut records = Vec::new();
    let mut traces = Vec::new();
    let mut round = 0;
    while round < cfg.max_rounds && keep_going(cfg, &active) {
        let mut ratios = cfg.ratios;
        if let Some(p) = &pinned {
            match cfg.fixed {
                FixedSide::Graph(_) => {
                    active.adj = p.adj.clone();
                    ratios.p_a = 0.0;
                }
                FixedSide::Model(_) => {
                    active.weights = p.weights.clone();
                    ratios.p_w = 0.0;
                }
                FixedSide::None => {}
            }
        } else {
            match cfg.fixed {
                FixedSide::Graph(v) => ratios.p_a = v,
                FixedSide::Model(v) => ratios.p_w = v,
                FixedSide::None => {}
            }
        }
        model.rewind();
        observer.round_start(round, &model);
        let out = strategy.round(RoundContext {
            ds,
            model: &mut model,
            active: &active,
            ratios,
            cfg,
            rng: &mut rng,
        })?;
        let progressed =
            out.masks.active_edges() < active.active_edges() || out.masks.active_weights() < active.active_weights();
        if !progressed {
            break;
        }
        if pinned.is_none() && cfg.fixed != FixedSide::None {
            pinned = Some(out.masks.clone());
        }
        model.rewind();
        let ticket = evaluate_ticket(ds, &model, &out.masks, &cfg.train)?;
        let (gs, ms) = sparsity(&out.masks);
        let record = TicketRecord {
            method: strategy.name().to_string(),
            seed,
            round,
            graph_sparsity: gs,
            model_sparsity: ms,
            test_acc: ticket.test_acc,
            val_acc: ticket.val_acc,
            dense_acc: dense.test_acc,
            delta: cfg.delta,
            is_glt: is_glt(ticket.test_acc, dense.test_acc, cfg.delta),
            macs: inference_macs(&out.masks, ds.num_nodes()),
            masks: out.masks.clone(),
        };
        observer.round_end(round, &out, &record);
        records.push(record);
        traces.push(RoundTraces {
            eval: ticket.trace,
            ace: out.ace,
        });
        active = out.masks;
        round += 1;
    }
    Ok(SearchResult { dense, records, traces })
}
