mod common;

use glt_core::dataset::synth_sbm;
use glt_core::engine::Matrix;
use glt_core::model::{backbone, BinaryMasks, ModelState, SoftMasks, TrainConfig};
use glt_core::prune::{binarize, magnitude_prune, prune_count, PruneRatios, WeightPooling};
use glt_core::BitMask;
use proptest::prelude::*;

/// Full sort of the active entries by `(|value|, index)`; the first
/// `⌊p·n⌋` go.
fn sort_oracle(values: &[f64], active: &BitMask, p: f64) -> BitMask {
    let mut idx: Vec<usize> = active.iter_ones().collect();
    idx.sort_by(|&a, &b| values[a].abs().partial_cmp(&values[b].abs()).unwrap().then(a.cmp(&b)));
    let drop = (p * idx.len() as f64).floor() as usize;
    let mut out = active.clone();
    for &i in &idx[..drop] {
        out.set(i, false);
    }
    out
}

/// Mask values drawn from a small grid so equal magnitudes are common.
fn tied_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((0u8..6).prop_map(|q| f64::from(q) / 5.0), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn binarize_matches_sort_oracle(
        edge_vals in tied_values(30),
        w_vals in tied_values(24),
        edge_on in proptest::collection::vec(any::<bool>(), 30),
        w_on in proptest::collection::vec(prop::bool::weighted(0.8), 24),
        p_a in 0.0f64..0.99,
        p_w in 0.0f64..0.99,
    ) {
        let shapes = vec![(3, 4), (4, 3)];
        let mut w_on = w_on;
        w_on[0] = true;
        let wbits = BitMask::from_bools(&w_on);
        let active = {
            let mut b = BinaryMasks::new(BitMask::from_bools(&edge_on), vec![BitMask::zeros(12), BitMask::zeros(12)], shapes.clone()).unwrap();
            b.set_weights_flat(&wbits).unwrap();
            b
        };
        let mut soft = SoftMasks::ones_on(&active);
        soft.adj = Matrix::column(edge_vals.clone());
        soft.weights = vec![
            Matrix::from_vec(3, 4, w_vals[..12].to_vec()).unwrap(),
            Matrix::from_vec(4, 3, w_vals[12..].to_vec()).unwrap(),
        ];
        let ratios = PruneRatios { p_a, p_w };
        let out = binarize(&soft, &active, ratios, WeightPooling::Global).unwrap();
        prop_assert_eq!(&out.adj, &sort_oracle(&edge_vals, &active.adj, p_a));
        prop_assert_eq!(out.weights_flat(), sort_oracle(&w_vals, &wbits, p_w));
        prop_assert_eq!(active.active_edges() - out.active_edges(), prune_count(active.active_edges(), p_a));
        prop_assert!(out.is_subset_of(&active));
    }
}

#[test]
fn one_round_keeps_ceiling_of_remaining_weights() {
    let ds = synth_sbm(2, 10, 0.5, 0.1, 4, 3).unwrap();
    let mut model = ModelState::for_dataset(&ds, backbone("gcn").unwrap(), 6, 3).unwrap();
    let full = model.full_masks(&ds);
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let ratios = PruneRatios { p_a: 0.05, p_w: 0.2 };
    let out = magnitude_prune(&ds, &mut model, &full, ratios, &cfg, WeightPooling::Global).unwrap();
    let w = full.active_weights();
    assert_eq!(out.masks.active_weights(), (0.8 * w as f64).ceil() as usize);
    assert_eq!(out.masks.adj, sort_oracle(out.soft.adj_values(), &full.adj, 0.05));
    assert_eq!(
        out.masks.weights_flat(),
        sort_oracle(&out.soft.weights_flat(), &full.weights_flat(), 0.2)
    );
    assert_eq!(out.soft, out.training.best.masks);
}
