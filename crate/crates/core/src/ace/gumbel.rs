//! Gumbel-max sampling proportional to mask magnitude (or its inverse).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitudes are clamped to this before taking logs.
pub const MIN_MAGNITUDE: f64 = 1e-12;

/// Above this many score evaluations (`k · n`) draws descend a
/// log-sum-exp tree instead of scanning every candidate.
const TREE_THRESHOLD: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Score `log|m|`: selection probability proportional to `|m|`.
    Most,
    /// Score `-log|m|`: selection probability proportional to `1/|m|`.
    Least,
}

/// Distinct candidate positions drawn, in first-draw order, with the
/// deterministic score each was drawn under.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Draws {
    pub indices: Vec<usize>,
    pub base_scores: Vec<f64>,
}

impl Draws {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Keeps the `n` draws with the highest base score (lower position on
    /// ties), preserving draw order among the survivors.
    pub fn truncate_to(&mut self, n: usize) {
        if self.len() <= n {
            return;
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.base_scores[b]
                .total_cmp(&self.base_scores[a])
                .then(self.indices[a].cmp(&self.indices[b]))
        });
        let mut keep = vec![false; self.len()];
        for &k in &order[..n] {
            keep[k] = true;
        }
        let mut it = keep.iter();
        self.indices.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.base_scores.retain(|_| *it.next().unwrap());
    }
}

pub fn base_score(magnitude: f64, direction: Direction) -> f64 {
    let l = magnitude.abs().max(MIN_MAGNITUDE).ln();
    match direction {
        Direction::Most => l,
        Direction::Least => -l,
    }
}

/// Standard Gumbel noise `-ln(-ln U)` with `U` uniform on the open unit interval.
pub fn gumbel(rng: &mut impl Rng) -> f64 {
    let u: f64 = loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    -(-u.ln()).ln()
}

/// `k` independent Gumbel-max draws over `magnitudes`, deduplicated.
pub fn gumbel_sample(magnitudes: &[f64], k: usize, direction: Direction, rng: &mut impl Rng) -> Result<Draws> {
    if magnitudes.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let scores: Vec<f64> = magnitudes.iter().map(|&m| base_score(m, direction)).collect();
    let mut seen = vec![false; scores.len()];
    let mut out = Draws::default();
    let mut push = |i: usize| {
        if !std::mem::replace(&mut seen[i], true) {
            out.indices.push(i);
            out.base_scores.push(scores[i]);
        }
    };
    if k.saturating_mul(scores.len()) <= TREE_THRESHOLD {
        for _ in 0..k {
            push(argmax_perturbed(&scores, rng));
        }
    } else {
        let tree = LseTree::new(&scores);
        for _ in 0..k {
            push(tree.draw(rng));
        }
    }
    Ok(out)
}

/// One literal Gumbel-max draw: `argmax_i (s_i + G_i)`.
pub fn argmax_perturbed(scores: &[f64], rng: &mut impl Rng) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        let v = s + gumbel(rng);
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Complete binary tree of log-sum-exp partial sums over the scores.
///
/// The maximum of `s_i + G_i` over a subtree is itself Gumbel with
/// location equal to the subtree's log-sum-exp, so descending the tree
/// and picking at every node the child with the larger perturbed
/// log-sum-exp yields the same distribution as the flat argmax.
struct LseTree {
    leaves: usize,
    nodes: Vec<f64>,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl LseTree {
    fn new(scores: &[f64]) -> Self {
        let leaves = scores.len().next_power_of_two();
        let mut nodes = vec![f64::NEG_INFINITY; 2 * leaves];
        nodes[leaves..leaves + scores.len()].copy_from_slice(scores);
        for i in (1..leaves).rev() {
            nodes[i] = log_add_exp(nodes[2 * i], nodes[2 * i + 1]);
        }
        Self { leaves, nodes }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let mut i = 1;
        while i < self.leaves {
            let (l, r) = (self.nodes[2 * i], self.nodes[2 * i + 1]);
            i = if r == f64::NEG_INFINITY {
                2 * i
            } else if l == f64::NEG_INFINITY {
                2 * i + 1
            } else if l + gumbel(rng) >= r + gumbel(rng) {
                2 * i
            } else {
                2 * i + 1
            };
        }
        i - self.leaves
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn single_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = gumbel_sample(&[0.3], 5, Direction::Most, &mut rng).unwrap();
        assert_eq!(d.indices, vec![0]);
    }

    #[test]
    fn empty_candidates_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            gumbel_sample(&[], 1, Direction::Least, &mut rng),
            Err(Error::EmptyCandidateSet)
        ));
    }

    #[test]
    fn zero_magnitude_is_clamped() {
        assert_eq!(base_score(0.0, Direction::Most), MIN_MAGNITUDE.ln());
        assert!(base_score(0.0, Direction::Least).is_finite());
    }

    #[test]
    fn tree_matches_categorical() {
        let mags = [4.0, 1.0, 2.0, 1.0, 0.0, 2.0];
        let scores: Vec<f64> = mags.iter().map(|&m| base_score(m, Direction::Most)).collect();
        let tree = LseTree::new(&scores);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[tree.draw(&mut rng)] += 1;
        }
        for (c, m) in counts.iter().zip(mags) {
            let f = *c as f64 / n as f64;
            assert!((f - m / 10.0).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn truncate_drops_lowest_scores() {
        let mut d = Draws {
            indices: vec![5, 2, 9, 1],
            base_scores: vec![0.1, 0.7, 0.1, 0.3],
        };
        d.truncate_to(2);
        assert_eq!(d.indices, vec![2, 1]);
    }
}
