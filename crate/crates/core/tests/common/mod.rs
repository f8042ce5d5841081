#![allow(dead_code)]

use glt_core::engine::Matrix;
use glt_core::{Adjacency, GraphDataset, Splits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Erdős–Rényi graph with edge probability `p`, random features and labels.
/// Every node sits in one of the three splits; train covers every class
/// it can.
pub fn random_dataset(n: usize, d: usize, classes: usize, p: f64, rng: &mut impl Rng) -> GraphDataset {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let adj = Adjacency::from_canonical(n, edges).unwrap();
    let labels: Vec<usize> = (0..n)
        .map(|i| if i < classes { i } else { rng.random_range(0..classes) })
        .collect();
    let cut = n / 2;
    let splits = Splits {
        train: (0..cut.max(1)).collect(),
        val: (cut.max(1)..(cut + n) / 2 + 1).filter(|&i| i < n).collect(),
        test: ((cut + n) / 2 + 1..n).collect(),
    };
    GraphDataset::new(classes, random_matrix(n, d, rng), adj, labels, splits).unwrap()
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let x0 = x[i];
    x[i] = x0 + h;
    let up = f(x);
    x[i] = x0 - h;
    let down = f(x);
    x[i] = x0;
    (up - down) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
