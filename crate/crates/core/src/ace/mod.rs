//! Adversarial complementary erasing: train the retained and the pruned
//! substructures against each other, then exchange a few elements
//! between them.

pub mod gumbel;

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gumbel::{gumbel_sample, Direction, Draws};

use crate::bits::BitMask;
use crate::dataset::GraphDataset;
use crate::error::{Error, Result};
use crate::model::{train, BinaryMasks, ModelState, SoftMasks, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KInit {
    /// `⌈10%⌉` of the pruned side of each universe, at least 1.
    Auto,
    Fixed(usize),
}

impl KInit {
    fn resolve(self, pruned: usize) -> usize {
        match self {
            KInit::Auto => (pruned as f64 * 0.1).ceil().max(1.0) as usize,
            KInit::Fixed(k) => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AceConfig {
    pub rounds: usize,
    pub k_init: KInit,
    pub similarity_threshold: f64,
    pub refine_epochs: usize,
    pub equalize_swap: bool,
    /// Redraw a universe whose draw overlaps the previous round's too much.
    pub resample: bool,
    /// Halve a universe's sampling budget when its gate trips.
    pub adaptive_k: bool,
}

impl Default for AceConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            k_init: KInit::Auto,
            similarity_threshold: 0.5,
            refine_epochs: 30,
            equalize_swap: true,
            resample: true,
            adaptive_k: true,
        }
    }
}

impl AceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("ACE rounds must be >= 1".into()));
        }
        if self.k_init == KInit::Fixed(0) {
            return Err(Error::InvalidConfig("k_init must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidConfig(format!(
                "similarity threshold must be in [0, 1], got {}",
                self.similarity_threshold
            )));
        }
        if self.refine_epochs == 0 {
            return Err(Error::InvalidConfig("refine_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Elements to move across the retained/pruned boundary. Weight indices
/// are flat (layer after layer, row-major); edge indices are edge ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapSets {
    pub omega_retained: Vec<usize>,
    pub omega_pruned: Vec<usize>,
    pub alpha_retained: Vec<usize>,
    pub alpha_pruned: Vec<usize>,
}

fn flip_checked(mask: &mut BitMask, off: &[usize], on: &[usize], universe: &'static str) -> Result<()> {
    let before = mask.clone();
    let mut touched = HashSet::new();
    for (&i, want) in off.iter().map(|i| (i, true)).chain(on.iter().map(|i| (i, false))) {
        if i >= before.len() || before.get(i) != want || !touched.insert(i) {
            return Err(Error::SetViolation { universe, index: i });
        }
        mask.flip(i);
    }
    Ok(())
}

/// `M ⊕ ω_retained ⊕ ω_pruned` (and the α analogue): retained-side
/// entries switch off, pruned-side entries switch on.
pub fn swap(binary: &BinaryMasks, sets: &SwapSets) -> Result<BinaryMasks> {
    let mut out = binary.clone();
    flip_checked(&mut out.adj, &sets.alpha_retained, &sets.alpha_pruned, "edge")?;
    let mut flat = binary.weights_flat();
    flip_checked(&mut flat, &sets.omega_retained, &sets.omega_pruned, "weight")?;
    out.set_weights_flat(&flat)?;
    Ok(out)
}

/// Cosine similarity of two indicator vectors: `|a ∩ b| / √(|a|·|b|)`,
/// 0 when either is empty. Inputs must be duplicate-free.
pub fn similarity(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let set: HashSet<usize> = a.iter().copied().collect();
    let inter = b.iter().filter(|i| set.contains(i)).count();
    inter as f64 / ((a.len() * b.len()) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AceRound {
    pub round: usize,
    /// Budgets at the start of the round.
    pub k_edges: usize,
    pub k_weights: usize,
    pub kprime_ret_w: usize,
    pub kprime_pr_w: usize,
    pub kprime_ret_e: usize,
    pub kprime_pr_e: usize,
    pub sim_w: f64,
    pub sim_e: f64,
    /// Some budget was halved this round.
    pub halved: bool,
    /// Some similarity gate tripped this round.
    pub tripped: bool,
    pub swapped_w: usize,
    pub swapped_e: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AceTrace {
    pub rounds: Vec<AceRound>,
}

impl AceTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "round,K_edges,K_weights,Kprime_ret_w,Kprime_pr_w,Kprime_ret_e,Kprime_pr_e,sim_w,sim_e,halved\n",
        );
        for r in &self.rounds {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.round,
                r.k_edges,
                r.k_weights,
                r.kprime_ret_w,
                r.kprime_pr_w,
                r.kprime_ret_e,
                r.kprime_pr_e,
                r.sim_w,
                r.sim_e,
                u8::from(r.halved)
            )
            .expect("write to String");
        }
        s
    }
}

/// Per-universe sampling state carried across rounds.
struct Universe {
    k: usize,
    prev_pruned: Vec<usize>,
}

/// Trained magnitudes and current membership of one universe.
struct Candidates<'a> {
    retained: &'a BitMask,
    retained_mag: &'a [f64],
    pruned_mag: &'a [f64],
}

fn draw_side(mask: &BitMask, want: bool, mags: &[f64], k: usize, dir: Direction, rng: &mut impl Rng) -> Result<Draws> {
    let cand: Vec<usize> = (0..mask.len()).filter(|&i| mask.get(i) == want).collect();
    if cand.is_empty() {
        return Ok(Draws::default());
    }
    let m: Vec<f64> = cand.iter().map(|&i| mags[i]).collect();
    let mut d = gumbel_sample(&m, k, dir, rng)?;
    for i in d.indices.iter_mut() {
        *i = cand[*i];
    }
    Ok(d)
}

fn draw_universe(c: &Candidates, k: usize, rng: &mut impl Rng) -> Result<(Draws, Draws)> {
    let pruned = draw_side(c.retained, false, c.pruned_mag, k, Direction::Most, rng)?;
    let retained = draw_side(c.retained, true, c.retained_mag, k, Direction::Least, rng)?;
    Ok((retained, pruned))
}

struct UniverseRound {
    retained: Draws,
    pruned: Draws,
    sim: f64,
    halved: bool,
    tripped: bool,
}

fn sample_universe(
    u: &mut Universe,
    c: &Candidates,
    round: usize,
    cfg: &AceConfig,
    rng: &mut impl Rng,
) -> Result<UniverseRound> {
    let mut out = UniverseRound {
        retained: Draws::default(),
        pruned: Draws::default(),
        sim: 0.0,
        halved: false,
        tripped: false,
    };
    if c.retained.count_zeros() == 0 {
        return Ok(out);
    }
    (out.retained, out.pruned) = draw_universe(c, u.k, rng)?;
    if round > 0 {
        out.sim = similarity(&out.retained.indices, &u.prev_pruned);
        if out.sim > cfg.similarity_threshold && (cfg.resample || cfg.adaptive_k) {
            out.tripped = true;
            if cfg.adaptive_k {
                u.k = (u.k / 2).max(1);
                out.halved = true;
            }
            if cfg.resample {
                (out.retained, out.pruned) = draw_universe(c, u.k, rng)?;
            }
        }
    }
    if cfg.equalize_swap {
        let n = out.retained.len().min(out.pruned.len());
        out.retained.truncate_to(n);
        out.pruned.truncate_to(n);
    }
    u.prev_pruned = out.pruned.indices.clone();
    Ok(out)
}

/// Soft masks of one side after a refine phase trained from `W_init`.
/// A side without any weight to train keeps its initial all-ones masks.
fn refine_side(ds: &GraphDataset, model: &ModelState, side: &BinaryMasks, tcfg: &TrainConfig) -> Result<SoftMasks> {
    let mut soft = SoftMasks::ones_on(side);
    if side.active_weights() == 0 {
        return Ok(soft);
    }
    let mut m = model.clone();
    m.rewind();
    train(ds, &mut m, &mut soft, tcfg, true, true)?;
    Ok(soft)
}

/// Runs `cfg.rounds` adversarial rounds starting from `binary`.
///
/// `train_cfg` supplies the optimizer settings; its epoch count is
/// replaced by `cfg.refine_epochs`.
pub fn ace_refine(
    ds: &GraphDataset,
    model: &ModelState,
    binary: &BinaryMasks,
    cfg: &AceConfig,
    train_cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(BinaryMasks, AceTrace)> {
    cfg.validate()?;
    if binary.active_weights() == 0 {
        return Err(Error::DegenerateMasks("retained side has no weights".into()));
    }
    let tcfg = TrainConfig {
        epochs: cfg.refine_epochs,
        ..train_cfg.clone()
    };
    let mut current = binary.clone();
    let mut edges = Universe {
        k: cfg.k_init.resolve(current.adj.count_zeros()),
        prev_pruned: Vec::new(),
    };
    let mut weights = Universe {
        k: cfg.k_init.resolve(current.weight_universe() - current.active_weights()),
        prev_pruned: Vec::new(),
    };
    let mut trace = AceTrace::default();

    for round in 0..cfg.rounds {
        let (k_edges, k_weights) = (edges.k, weights.k);
        let ret = refine_side(ds, model, &current, &tcfg)?;
        let pr = refine_side(ds, model, &current.complement(), &tcfg)?;

        let flat_w = current.weights_flat();
        let (ret_w, pr_w) = (ret.weights_flat(), pr.weights_flat());
        let w = sample_universe(
            &mut weights,
            &Candidates {
                retained: &flat_w,
                retained_mag: &ret_w,
                pruned_mag: &pr_w,
            },
            round,
            cfg,
            rng,
        )?;
        let e = sample_universe(
            &mut edges,
            &Candidates {
                retained: &current.adj,
                retained_mag: ret.adj_values(),
                pruned_mag: pr.adj_values(),
            },
            round,
            cfg,
            rng,
        )?;

        let sets = SwapSets {
            omega_retained: w.retained.indices.clone(),
            omega_pruned: w.pruned.indices.clone(),
            alpha_retained: e.retained.indices.clone(),
            alpha_pruned: e.pruned.indices.clone(),
        };
        let next = swap(&current, &sets)?;
        if next.active_weights() == 0 {
            return Err(Error::DegenerateMasks("swap emptied the retained weights".into()));
        }
        current = next;
        trace.rounds.push(AceRound {
            round,
            k_edges,
            k_weights,
            kprime_ret_w: w.retained.len(),
            kprime_pr_w: w.pruned.len(),
            kprime_ret_e: e.retained.len(),
            kprime_pr_e: e.pruned.len(),
            sim_w: w.sim,
            sim_e: e.sim,
            halved: w.halved || e.halved,
            tripped: w.tripped || e.tripped,
            swapped_w: sets.omega_retained.len() + sets.omega_pruned.len(),
            swapped_e: sets.alpha_retained.len() + sets.alpha_pruned.len(),
        });
    }
    Ok((current, trace))
}
