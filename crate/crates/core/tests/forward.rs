mod common;

use common::{random_dataset, random_matrix, rng};
use glt_core::engine::{Matrix, Tape};
use glt_core::model::{accuracy, backbone, evaluate, forward, ModelState, SoftMasks, TrainConfig};
use glt_core::{Adjacency, GraphDataset, Split, Splits};
use proptest::prelude::*;
use rand::Rng;

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    let v = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect();
    Matrix::from_vec(a.rows(), a.cols(), v).unwrap()
}

fn relu(a: &Matrix) -> Matrix {
    a.map(|x| x.max(0.0))
}

fn dense_gcn_operator(adj: &Adjacency, mask: &[f64]) -> Matrix {
    let n = adj.num_nodes();
    let mut a = adj.to_dense_weighted(mask);
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, a.get(i, j) / (deg[i] * deg[j]).sqrt());
        }
    }
    out
}

/// Straightforward dense evaluation of both backbones.
fn dense_reference(ds: &GraphDataset, model: &ModelState, soft: &SoftMasks) -> Matrix {
    let adj = ds.adjacency();
    let n = ds.num_nodes();
    let op = match model.backbone().name() {
        "gcn" => dense_gcn_operator(adj, soft.adj_values()),
        _ => {
            let mut a = adj.to_dense_weighted(soft.adj_values());
            for i in 0..n {
                a.set(i, i, a.get(i, i) + 1.0);
            }
            a
        }
    };
    let w: Vec<Matrix> = model
        .layers()
        .iter()
        .zip(&soft.weights)
        .map(|(w, m)| hadamard(w, m))
        .collect();
    let h = relu(&op.matmul(&ds.features().matmul(&w[0]).unwrap()).unwrap());
    op.matmul(&h.matmul(&w[1]).unwrap()).unwrap()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_soft(model: &ModelState, ds: &GraphDataset, r: &mut impl Rng) -> SoftMasks {
    let mut soft = SoftMasks::ones_on(&model.full_masks(ds));
    soft.adj.as_mut_slice().iter_mut().for_each(|v| *v = r.random());
    for w in &mut soft.weights {
        w.as_mut_slice().iter_mut().for_each(|v| *v = r.random());
    }
    soft
}

#[test]
fn masked_forward_matches_dense_reference() {
    for name in ["gcn", "gin"] {
        for seed in 0..5 {
            let mut r = rng(seed);
            let ds = random_dataset(6, 4, 3, 0.5, &mut r);
            let model = ModelState::for_dataset(&ds, backbone(name).unwrap(), 5, seed).unwrap();
            let soft = random_soft(&model, &ds, &mut r);
            let got = forward(&ds, &model, &soft, true).unwrap();
            assert!(
                max_abs_diff(&got, &dense_reference(&ds, &model, &soft)) < 1e-12,
                "{name} seed {seed}"
            );
        }
    }
}

#[test]
fn all_ones_masks_match_unmasked_forward() {
    let mut r = rng(7);
    let ds = random_dataset(8, 3, 2, 0.4, &mut r);
    let model = ModelState::for_dataset(&ds, backbone("gcn").unwrap(), 4, 1).unwrap();
    let soft = SoftMasks::ones_on(&model.full_masks(&ds));
    let op = dense_gcn_operator(ds.adjacency(), &vec![1.0; ds.num_edges()]);
    let w = model.layers();
    let h = relu(&op.matmul(&ds.features().matmul(&w[0]).unwrap()).unwrap());
    let plain = op.matmul(&h.matmul(&w[1]).unwrap()).unwrap();
    assert!(max_abs_diff(&forward(&ds, &model, &soft, true).unwrap(), &plain) < 1e-12);
}

#[test]
fn two_node_operator_is_one_half() {
    let adj = Adjacency::from_canonical(2, vec![(0, 1)]).unwrap();
    let mut t = Tape::new();
    let m = t.leaf(Matrix::column(vec![1.0]), false).unwrap();
    let h = t.leaf(Matrix::identity(2), false).unwrap();
    let out = t.gcn_spmm(&adj, m, h, true).unwrap();
    assert!(t.value(out).as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn single_node_gcn_is_a_plain_mlp() {
    let ds = GraphDataset::new(
        2,
        Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap(),
        Adjacency::from_canonical(1, vec![]).unwrap(),
        vec![0],
        Splits {
            train: vec![0],
            ..Splits::default()
        },
    )
    .unwrap();
    let model = ModelState::for_dataset(&ds, backbone("gcn").unwrap(), 3, 4).unwrap();
    let soft = SoftMasks::ones_on(&model.full_masks(&ds));
    let w = model.layers();
    let expected = relu(&ds.features().matmul(&w[0]).unwrap()).matmul(&w[1]).unwrap();
    assert!(max_abs_diff(&forward(&ds, &model, &soft, true).unwrap(), &expected) < 1e-15);
}

#[test]
fn evaluate_full_masks_matches_dense_accuracy() {
    let mut r = rng(8);
    let ds = random_dataset(6, 4, 2, 0.5, &mut r);
    let model = ModelState::for_dataset(&ds, backbone("gcn").unwrap(), 4, 2).unwrap();
    let full = model.full_masks(&ds);
    let reference = dense_reference(&ds, &model, &SoftMasks::ones_on(&full));
    for split in [Split::Train, Split::Val, Split::Test] {
        let idx = ds.splits().get(split);
        let mut hits = 0;
        for &i in idx {
            let row = reference.row(i);
            let pred = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            hits += usize::from(pred == ds.labels()[i]);
        }
        let expected = if idx.is_empty() {
            0.0
        } else {
            hits as f64 / idx.len() as f64
        };
        assert_eq!(evaluate(&ds, &model, &full, split).unwrap(), expected);
    }
}

#[test]
fn perfect_logits_score_one() {
    let labels = [2usize, 0, 1];
    let mut logits = Matrix::zeros(3, 3);
    for (i, &y) in labels.iter().enumerate() {
        logits.set(i, y, 5.0);
    }
    assert_eq!(accuracy(&logits, &labels, &[0, 1, 2]), 1.0);
}

#[test]
fn rewound_retrain_reproduces_trace() {
    let ds = glt_core::dataset::synth_sbm(2, 10, 0.5, 0.05, 4, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let mut model = ModelState::for_dataset(&ds, backbone("gcn").unwrap(), 8, 3).unwrap();
    let mut soft = SoftMasks::ones_on(&model.full_masks(&ds));
    let first = glt_core::model::train(&ds, &mut model, &mut soft, &cfg, true, true).unwrap();
    model.rewind();
    assert!(model.is_rewound());
    let mut soft = SoftMasks::ones_on(&model.full_masks(&ds));
    let second = glt_core::model::train(&ds, &mut model, &mut soft, &cfg, true, true).unwrap();
    assert_eq!(first.trace.to_csv(), second.trace.to_csv());
}

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, u64)> {
    (1usize..=16, any::<u64>()).prop_flat_map(|(n, seed)| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let len = pairs.len();
        (Just(n), proptest::sample::subsequence(pairs, 0..=len), Just(seed))
    })
}

proptest! {
    #[test]
    fn masked_spmm_equals_dense_product((n, edges, seed) in graph_strategy()) {
        let adj = Adjacency::from_canonical(n, edges).unwrap();
        let mut r = rng(seed);
        let mask: Vec<f64> = (0..adj.num_edges()).map(|_| r.random()).collect();
        let h = random_matrix(n, 3, &mut r);
        let mut t = Tape::new();
        let m = t.leaf(Matrix::column(mask.clone()), false).unwrap();
        let hv = t.leaf(h.clone(), false).unwrap();
        let out = t.masked_spmm(&adj, m, hv).unwrap();
        let dense = adj.to_dense_weighted(&mask).matmul(&h).unwrap();
        prop_assert!(max_abs_diff(t.value(out), &dense) < 1e-12);
    }

    #[test]
    fn normalized_operator_is_symmetric_and_nonnegative((n, edges, seed) in graph_strategy()) {
        let adj = Adjacency::from_canonical(n, edges).unwrap();
        let mut r = rng(seed);
        let mask: Vec<f64> = (0..adj.num_edges()).map(|_| r.random()).collect();
        let mut t = Tape::new();
        let m = t.leaf(Matrix::column(mask.clone()), false).unwrap();
        let eye = t.leaf(Matrix::identity(n), false).unwrap();
        let out = t.gcn_spmm(&adj, m, eye, true).unwrap();
        let a = t.value(out);
        for i in 0..n {
            for j in 0..n {
                prop_assert!(a.get(i, j) >= 0.0);
                prop_assert!((a.get(i, j) - a.get(j, i)).abs() < 1e-15);
            }
        }
        prop_assert!(max_abs_diff(a, &dense_gcn_operator(&adj, &mask)) < 1e-12);
    }

    #[test]
    fn dense_expansion_is_symmetric_zero_diagonal((n, edges, _seed) in graph_strategy()) {
        let adj = Adjacency::from_canonical(n, edges).unwrap();
        let a = adj.to_dense();
        for i in 0..n {
            prop_assert_eq!(a.get(i, i), 0.0);
            for j in 0..n {
                prop_assert!(a.get(i, j) == 0.0 || a.get(i, j) == 1.0);
                prop_assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
        prop_assert_eq!(a.sum() as usize, adj.nnz());
    }
}
