//! Iterative magnitude pruning of edges and weights.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitMask;
use crate::dataset::GraphDataset;
use crate::error::{Error, Result};
use crate::model::{train, BinaryMasks, ModelState, SoftMasks, TrainConfig, TrainOutcome};

/// Fraction of the currently active edges / weights removed per round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneRatios {
    pub p_a: f64,
    pub p_w: f64,
}

impl Default for PruneRatios {
    fn default() -> Self {
        Self { p_a: 0.05, p_w: 0.20 }
    }
}

impl PruneRatios {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_a", self.p_a), ("p_w", self.p_w)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }
}

/// How the weight quantile is taken across layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPooling {
    #[default]
    Global,
    PerLayer,
}

/// Number of entries a ratio removes from an active set.
pub fn prune_count(active: usize, p: f64) -> usize {
    (p * active as f64).floor() as usize
}

/// The `count` active indices with the smallest `|value|`, ties broken by
/// ascending index. Returned in ascending index order.
pub fn lowest_magnitude(values: &[f64], active: &BitMask, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = active.iter_ones().collect();
    let count = count.min(idx.len());
    if count == 0 {
        return Vec::new();
    }
    let key = |&i: &usize| (values[i].abs(), i);
    idx.select_nth_unstable_by(count - 1, |a, b| {
        key(a).partial_cmp(&key(b)).expect("finite mask values")
    });
    let mut chosen = idx[..count].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Per-layer selection counts for the weight universe.
fn weight_counts(active: &BinaryMasks, p_w: f64, pooling: WeightPooling) -> Vec<usize> {
    match pooling {
        WeightPooling::Global => vec![prune_count(active.active_weights(), p_w)],
        WeightPooling::PerLayer => active
            .weights
            .iter()
            .map(|w| prune_count(w.count_ones(), p_w))
            .collect(),
    }
}

/// Since `⌊p·n⌋ < n` for `p < 1`, a prune can only leave nothing behind
/// when the set it starts from is already empty.
fn check_remaining(active: &BinaryMasks, ratios: PruneRatios) -> Result<()> {
    if ratios.p_a > 0.0 && active.active_edges() == 0 && !active.adj.is_empty() {
        return Err(Error::EmptyActiveSet("edges"));
    }
    if active.active_weights() == 0 {
        return Err(Error::EmptyActiveSet("weights"));
    }
    Ok(())
}

/// Removes the lowest-magnitude soft-mask entries from `active`.
pub fn binarize(
    soft: &SoftMasks,
    active: &BinaryMasks,
    ratios: PruneRatios,
    pooling: WeightPooling,
) -> Result<BinaryMasks> {
    ratios.validate()?;
    active.same_universe(&soft.frozen)?;
    let ne = prune_count(active.active_edges(), ratios.p_a);
    let counts = weight_counts(active, ratios.p_w, pooling);
    check_remaining(active, ratios)?;

    let mut out = active.clone();
    for e in lowest_magnitude(soft.adj_values(), &active.adj, ne) {
        out.adj.set(e, false);
    }
    match pooling {
        WeightPooling::Global => {
            let flat = active.weights_flat();
            let mut kept = flat.clone();
            for i in lowest_magnitude(&soft.weights_flat(), &flat, counts[0]) {
                kept.set(i, false);
            }
            out.set_weights_flat(&kept)?;
        }
        WeightPooling::PerLayer => {
            for ((w, m), &c) in out.weights.iter_mut().zip(&soft.weights).zip(&counts) {
                let act = w.clone();
                for i in lowest_magnitude(m.as_slice(), &act, c) {
                    w.set(i, false);
                }
            }
        }
    }
    Ok(out)
}

/// Same cardinalities as [`binarize`], chosen uniformly at random.
pub fn random_prune(
    active: &BinaryMasks,
    ratios: PruneRatios,
    pooling: WeightPooling,
    rng: &mut impl Rng,
) -> Result<BinaryMasks> {
    ratios.validate()?;
    let ne = prune_count(active.active_edges(), ratios.p_a);
    let counts = weight_counts(active, ratios.p_w, pooling);
    check_remaining(active, ratios)?;

    let drop_random = |mask: &mut BitMask, count: usize, rng: &mut dyn rand::RngCore| {
        let ones: Vec<usize> = mask.iter_ones().collect();
        for k in sample(rng, ones.len(), count) {
            mask.set(ones[k], false);
        }
    };
    let mut out = active.clone();
    drop_random(&mut out.adj, ne, rng);
    match pooling {
        WeightPooling::Global => {
            let mut flat = active.weights_flat();
            drop_random(&mut flat, counts[0], rng);
            out.set_weights_flat(&flat)?;
        }
        WeightPooling::PerLayer => {
            for (w, &c) in out.weights.iter_mut().zip(&counts) {
                drop_random(w, c, rng);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub masks: BinaryMasks,
    /// Trained soft masks the selection was made from.
    pub soft: SoftMasks,
    pub training: TrainOutcome,
}

/// Trains weights and soft masks (initialized to 1 on `active`) for
/// `cfg.epochs`, then zeroes the lowest-magnitude fraction of the active
/// edges and weights. The selection reads the best-validation snapshot.
pub fn magnitude_prune(
    ds: &GraphDataset,
    model: &mut ModelState,
    active: &BinaryMasks,
    ratios: PruneRatios,
    cfg: &TrainConfig,
    pooling: WeightPooling,
) -> Result<PruneOutcome> {
    ratios.validate()?;
    let mut soft = SoftMasks::ones_on(active);
    let training = train(ds, model, &mut soft, cfg, true, true)?;
    let soft = training.best.masks.clone();
    let masks = binarize(&soft, active, ratios, pooling)?;
    Ok(PruneOutcome { masks, soft, training })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::engine::Matrix;

    fn soft_with_edges(values: &[f64]) -> (SoftMasks, BinaryMasks) {
        let active = BinaryMasks::full(values.len(), &[(1, 2)]);
        let mut soft = SoftMasks::ones_on(&active);
        soft.adj = Matrix::column(values.to_vec());
        (soft, active)
    }

    #[test]
    fn smallest_edges_are_removed() {
        let (soft, active) = soft_with_edges(&[0.9, 0.5, 0.1, 0.3]);
        let out = binarize(
            &soft,
            &active,
            PruneRatios { p_a: 0.5, p_w: 0.0 },
            WeightPooling::Global,
        )
        .unwrap();
        assert_eq!(out.adj, BitMask::from_indices(4, [0, 1]));
    }

    #[test]
    fn zero_ratio_is_identity() {
        let (soft, active) = soft_with_edges(&[0.2, 0.1]);
        let out = binarize(
            &soft,
            &active,
            PruneRatios { p_a: 0.0, p_w: 0.0 },
            WeightPooling::Global,
        )
        .unwrap();
        assert_eq!(out, active);
    }

    #[test]
    fn ties_break_toward_lower_index() {
        let values = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(lowest_magnitude(&values, &BitMask::ones(4), 2), vec![0, 1]);
        let active = BitMask::from_indices(4, [1, 2, 3]);
        assert_eq!(lowest_magnitude(&values, &active, 1), vec![1]);
    }

    #[test]
    fn pruning_an_empty_set_is_an_error() {
        let (soft, mut active) = soft_with_edges(&[0.5]);
        active.weights[0] = BitMask::zeros(2);
        let soft = SoftMasks {
            frozen: active.clone(),
            ..soft
        };
        let ratios = PruneRatios { p_a: 0.0, p_w: 0.6 };
        assert!(matches!(
            binarize(&soft, &active, ratios, WeightPooling::Global),
            Err(Error::EmptyActiveSet("weights"))
        ));
    }

    #[test]
    fn random_prune_matches_cardinalities() {
        let active = BinaryMasks::full(40, &[(5, 6), (6, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ratios = PruneRatios { p_a: 0.3, p_w: 0.25 };
        let out = random_prune(&active, ratios, WeightPooling::Global, &mut rng).unwrap();
        assert_eq!(out.active_edges(), 40 - 12);
        assert_eq!(out.active_weights(), 42 - 10);
        assert!(out.is_subset_of(&active));
    }

    #[test]
    fn per_layer_pooling_counts_each_layer() {
        let active = BinaryMasks::full(2, &[(2, 5), (5, 2)]);
        let mut soft = SoftMasks::ones_on(&active);
        soft.weights[0] = Matrix::filled(2, 5, 0.1);
        let ratios = PruneRatios { p_a: 0.0, p_w: 0.5 };
        let global = binarize(&soft, &active, ratios, WeightPooling::Global).unwrap();
        assert_eq!(global.weights[0].count_ones(), 0);
        let per = binarize(&soft, &active, ratios, WeightPooling::PerLayer).unwrap();
        assert_eq!(per.weights[0].count_ones(), 5);
        assert_eq!(per.weights[1].count_ones(), 5);
    }
}
