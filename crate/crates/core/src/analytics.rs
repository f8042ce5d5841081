//! Sparsity accounting, inference cost and importance-rank fluctuation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryMasks, SoftMasks};

fn pruned_fraction(ones: usize, universe: usize) -> f64 {
    if universe == 0 {
        0.0
    } else {
        1.0 - ones as f64 / universe as f64
    }
}

/// `(graph sparsity, model sparsity)`: the pruned fraction of each universe.
pub fn sparsity(binary: &BinaryMasks) -> (f64, f64) {
    (
        pruned_fraction(binary.active_edges(), binary.adj.len()),
        pruned_fraction(binary.active_weights(), binary.weight_universe()),
    )
}

/// Multiply-accumulates of one full-graph forward over `num_nodes` nodes.
///
/// Per layer of shape `in × out`: the transform costs `n · nnz(W ⊙ M)`,
/// and aggregation costs `(2 · active edges + n) · out` (both directions
/// of every kept edge plus the self-loop).
pub fn inference_macs(binary: &BinaryMasks, num_nodes: usize) -> u64 {
    let n = num_nodes as u64;
    let e = binary.active_edges() as u64;
    binary
        .weights
        .iter()
        .zip(binary.shapes())
        .map(|(w, &(_, out))| n * w.count_ones() as u64 + (2 * e + n) * out as u64)
        .sum()
}

/// Ascending rank of each `|value|` (ties by index) divided by the count.
pub fn normalized_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()).then(a.cmp(&b)));
    let mut rank = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as f64 / n as f64;
    }
    rank
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mean = if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        };
        Self {
            q10: quantile(&v, 0.1),
            q50: quantile(&v, 0.5),
            q90: quantile(&v, 0.9),
            mean,
        }
    }
}

/// Trained soft masks from one pruning stage.
#[derive(Clone, Debug)]
pub struct Stage {
    pub graph_sparsity: f64,
    pub model_sparsity: f64,
    pub soft: SoftMasks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationProfile {
    pub stage_sparsities: Vec<(f64, f64)>,
    /// Edge ids present in the winner.
    pub edge_ids: Vec<usize>,
    /// Flat weight indices present in the winner.
    pub weight_ids: Vec<usize>,
    /// `[stage][k]`: fluctuation of `edge_ids[k]` at that stage.
    pub edge_values: Vec<Vec<f64>>,
    pub weight_values: Vec<Vec<f64>>,
    pub edge_summary: Vec<Summary>,
    pub weight_summary: Vec<Summary>,
}

/// Rank drift of the winner's elements across `stages`, measured against
/// the last stage: `nrank_final(e) − nrank_s(e)`. Positive means the
/// element ranked lower (less important) at the earlier stage.
pub fn fluctuation(stages: &[Stage], winner: &BinaryMasks) -> Result<FluctuationProfile> {
    let last = stages
        .last()
        .ok_or_else(|| Error::UniverseMismatch("no stages supplied".into()))?;
    for s in stages {
        winner.same_universe(&s.soft.frozen)?;
    }
    let edge_ids: Vec<usize> = winner.adj.iter_ones().collect();
    let weight_ids: Vec<usize> = winner.weights_flat().iter_ones().collect();

    let ranks = |s: &Stage| {
        (
            normalized_ranks(s.soft.adj_values()),
            normalized_ranks(&s.soft.weights_flat()),
        )
    };
    let (final_e, final_w) = ranks(last);
    let mut profile = FluctuationProfile {
        stage_sparsities: Vec::new(),
        edge_ids,
        weight_ids,
        edge_values: Vec::new(),
        weight_values: Vec::new(),
        edge_summary: Vec::new(),
        weight_summary: Vec::new(),
    };
    for s in stages {
        let (re, rw) = ranks(s);
        let ev: Vec<f64> = profile.edge_ids.iter().map(|&i| final_e[i] - re[i]).collect();
        let wv: Vec<f64> = profile.weight_ids.iter().map(|&i| final_w[i] - rw[i]).collect();
        profile.stage_sparsities.push((s.graph_sparsity, s.model_sparsity));
        profile.edge_summary.push(Summary::of(&ev));
        profile.weight_summary.push(Summary::of(&wv));
        profile.edge_values.push(ev);
        profile.weight_values.push(wv);
    }
    Ok(profile)
}

impl FluctuationProfile {
    /// Columns: stage_sparsity, side, q10, q50, q90, mean. The stage
    /// sparsity is the graph sparsity for edge rows and the model
    /// sparsity for weight rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage_sparsity,side,q10,q50,q90,mean\n");
        for (k, &(gs, ms)) in self.stage_sparsities.iter().enumerate() {
            for (side, sp, sum) in [
                ("edge", gs, self.edge_summary[k]),
                ("weight", ms, self.weight_summary[k]),
            ] {
                writeln!(s, "{sp},{side},{},{},{},{}", sum.q10, sum.q50, sum.q90, sum.mean).expect("write to String");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitMask;
    use crate::engine::Matrix;

    fn stage(adj: &[f64], w: &[f64]) -> Stage {
        let active = BinaryMasks::full(adj.len(), &[(1, w.len())]);
        let mut soft = SoftMasks::ones_on(&active);
        soft.adj = Matrix::column(adj.to_vec());
        soft.weights[0] = Matrix::from_vec(1, w.len(), w.to_vec()).unwrap();
        Stage {
            graph_sparsity: 0.0,
            model_sparsity: 0.0,
            soft,
        }
    }

    #[test]
    fn sparsity_cases() {
        let mut b = BinaryMasks::full(10, &[(2, 2)]);
        assert_eq!(sparsity(&b), (0.0, 0.0));
        for e in 0..3 {
            b.adj.set(e, false);
        }
        assert!((sparsity(&b).0 - 0.3).abs() < 1e-15);
        b.adj = BitMask::zeros(10);
        assert_eq!(sparsity(&b).0, 1.0);
    }

    #[test]
    fn macs_two_node_hand_count() {
        let full = BinaryMasks::full(1, &[(2, 2), (2, 2)]);
        // layer 0: 2·4 + (2·1 + 2)·2 = 16; layer 1 the same
        assert_eq!(inference_macs(&full, 2), 32);
        let empty = full.complement();
        assert_eq!(inference_macs(&empty, 2), 8);
    }

    #[test]
    fn identical_stages_have_zero_fluctuation() {
        let s = stage(&[0.3, 0.9, 0.1], &[0.5, 0.2]);
        let winner = BinaryMasks::full(3, &[(1, 2)]);
        let p = fluctuation(&[s.clone(), s.clone(), s], &winner).unwrap();
        assert!(p.edge_values.iter().flatten().all(|&v| v == 0.0));
        assert!(p.weight_values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn two_element_swap_is_half() {
        let winner = BinaryMasks::full(2, &[(1, 1)]);
        let p = fluctuation(&[stage(&[0.2, 0.8], &[1.0]), stage(&[0.8, 0.2], &[1.0])], &winner).unwrap();
        assert_eq!(p.edge_values[0], vec![0.5, -0.5]);
        assert_eq!(p.edge_values[1], vec![0.0, 0.0]);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
        assert!((quantile(&v, 0.9) - 4.6).abs() < 1e-12);
    }
}
