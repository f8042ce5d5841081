use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Backbone, BinaryMasks, Inputs, ModelState, SoftMasks};
use crate::dataset::{GraphDataset, Split};
use crate::engine::{adam_step, AdamHyper, AdamState, Matrix, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// ℓ1 coefficient on the edge mask.
    pub lambda1: f64,
    /// ℓ1 coefficient on the weight masks.
    pub lambda2: f64,
    pub seed: u64,
    pub norm_grad_through_degree: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            lambda1: 1e-4,
            lambda2: 1e-4,
            seed: 0,
            norm_grad_through_degree: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

struct Pass {
    ce: f64,
    weights: Vec<Matrix>,
    adj_mask: Matrix,
    weight_masks: Vec<Matrix>,
}

fn check_shapes(model: &[Matrix], masks: &SoftMasks, ds: &GraphDataset) -> Result<()> {
    if masks.adj.shape() != (ds.num_edges(), 1) {
        return Err(Error::ShapeMismatch {
            op: "edge mask",
            lhs: masks.adj.shape(),
            rhs: (ds.num_edges(), 1),
        });
    }
    if model.len() != masks.weights.len() {
        return Err(Error::ShapeMismatch {
            op: "layer count",
            lhs: (model.len(), 1),
            rhs: (masks.weights.len(), 1),
        });
    }
    for (w, m) in model.iter().zip(&masks.weights) {
        w.check_same_shape(m, "weight mask")?;
    }
    if model[0].rows() != ds.num_features() {
        return Err(Error::ShapeMismatch {
            op: "input layer",
            lhs: model[0].shape(),
            rhs: (ds.num_features(), model[0].cols()),
        });
    }
    Ok(())
}

/// Records one forward pass. Returns the tape, logits and leaf handles.
#[allow(clippy::type_complexity)]
fn record<'g>(
    ds: &'g GraphDataset,
    backbone: &dyn Backbone,
    layers: &[&Matrix],
    adj: &Matrix,
    wmasks: &[&Matrix],
    through_degree: bool,
    need: (bool, bool),
) -> Result<(Tape<'g>, Var, Vec<Var>, Var, Vec<Var>)> {
    let mut tape = Tape::new();
    let wv = layers
        .iter()
        .map(|w| tape.leaf((*w).clone(), need.0))
        .collect::<Result<Vec<_>>>()?;
    let mv = wmasks
        .iter()
        .map(|m| tape.leaf((*m).clone(), need.1))
        .collect::<Result<Vec<_>>>()?;
    let eff = wv
        .iter()
        .zip(&mv)
        .map(|(&w, &m)| tape.mul(w, m))
        .collect::<Result<Vec<_>>>()?;
    let am = tape.leaf(adj.clone(), need.1)?;
    let inputs = Inputs {
        adjacency: ds.adjacency(),
        features: ds.features(),
        edge_mask: am,
        through_degree,
    };
    let logits = backbone.forward(&mut tape, &inputs, &eff)?;
    Ok((tape, logits, wv, am, mv))
}

fn ce_pass(
    ds: &GraphDataset,
    backbone: &dyn Backbone,
    layers: &[&Matrix],
    masks: (&Matrix, &[&Matrix]),
    through_degree: bool,
    need: (bool, bool),
) -> Result<Pass> {
    let (tape, logits, wv, am, mv) = record(ds, backbone, layers, masks.0, masks.1, through_degree, need)?;
    let mut tape = tape;
    let loss = tape.softmax_cross_entropy(logits, ds.labels(), &ds.splits().train)?;
    let ce = tape.scalar(loss);
    let mut g = tape.backward(loss)?;
    let mut grab = |v, like: &Matrix| g.take(v).unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()));
    let weights = wv.iter().zip(layers).map(|(&v, w)| grab(v, w)).collect();
    let adj_mask = grab(am, masks.0);
    let weight_masks = mv.iter().zip(masks.1).map(|(&v, m)| grab(v, m)).collect();
    Ok(Pass {
        ce,
        weights,
        adj_mask,
        weight_masks,
    })
}

/// Pre-softmax logits for the whole graph.
pub fn forward(ds: &GraphDataset, model: &ModelState, masks: &SoftMasks, through_degree: bool) -> Result<Matrix> {
    check_shapes(model.layers(), masks, ds)?;
    logits_of(
        ds,
        model.backbone(),
        &model.layers().iter().collect::<Vec<_>>(),
        masks,
        through_degree,
    )
}

fn logits_of(
    ds: &GraphDataset,
    backbone: &dyn Backbone,
    layers: &[&Matrix],
    masks: &SoftMasks,
    through_degree: bool,
) -> Result<Matrix> {
    let wm: Vec<&Matrix> = masks.weights.iter().collect();
    let (tape, logits, ..) = record(ds, backbone, layers, &masks.adj, &wm, through_degree, (false, false))?;
    Ok(tape.value(logits).clone())
}

/// Loss value and its gradient with respect to every weight and every
/// trainable mask entry. Mask gradients include the ℓ1 subgradient
/// `λ·sign(m)` and are zero outside the trainable set.
#[derive(Clone, Debug)]
pub struct LossGrads {
    pub loss: f64,
    pub ce: f64,
    pub weights: Vec<Matrix>,
    pub adj_mask: Vec<f64>,
    pub weight_masks: Vec<Matrix>,
}

fn l1_term(masks: &SoftMasks, cfg: &TrainConfig) -> f64 {
    let (a, w) = masks.l1();
    cfg.lambda1 * a + cfg.lambda2 * w
}

fn zero_frozen(grad: &mut Matrix, frozen: &crate::bits::BitMask) {
    for (i, g) in grad.as_mut_slice().iter_mut().enumerate() {
        if !frozen.get(i) {
            *g = 0.0;
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Cross-entropy on the train split plus `λ1‖M_A‖₁ + λ2‖M_W‖₁`.
pub fn loss_retained(ds: &GraphDataset, model: &ModelState, masks: &SoftMasks, cfg: &TrainConfig) -> Result<f64> {
    let logits = forward(ds, model, masks, cfg.norm_grad_through_degree)?;
    let mut tape = Tape::new();
    let l = tape.leaf(logits, false)?;
    let ce = tape.softmax_cross_entropy(l, ds.labels(), &ds.splits().train)?;
    Ok(tape.scalar(ce) + l1_term(masks, cfg))
}

/// The same objective evaluated on the complementary (pruned-side) masks.
pub fn loss_pruned(ds: &GraphDataset, model: &ModelState, complement: &SoftMasks, cfg: &TrainConfig) -> Result<f64> {
    loss_retained(ds, model, complement, cfg)
}

pub fn loss_and_grads(
    ds: &GraphDataset,
    model: &ModelState,
    masks: &SoftMasks,
    cfg: &TrainConfig,
) -> Result<LossGrads> {
    check_shapes(model.layers(), masks, ds)?;
    let layers: Vec<&Matrix> = model.layers().iter().collect();
    let wm: Vec<&Matrix> = masks.weights.iter().collect();
    let mut pass = ce_pass(
        ds,
        model.backbone(),
        &layers,
        (&masks.adj, &wm),
        cfg.norm_grad_through_degree,
        (true, true),
    )?;
    zero_frozen(&mut pass.adj_mask, &masks.frozen.adj);
    for (g, f) in pass.weight_masks.iter_mut().zip(&masks.frozen.weights) {
        zero_frozen(g, f);
    }
    let adj_mask = pass
        .adj_mask
        .as_slice()
        .iter()
        .zip(masks.adj.as_slice())
        .enumerate()
        .map(|(e, (&g, &m))| {
            if masks.frozen.adj.get(e) {
                g + cfg.lambda1 * sign(m)
            } else {
                0.0
            }
        })
        .collect();
    for ((g, m), f) in pass
        .weight_masks
        .iter_mut()
        .zip(&masks.weights)
        .zip(&masks.frozen.weights)
    {
        for (i, (gi, &mi)) in g.as_mut_slice().iter_mut().zip(m.as_slice()).enumerate() {
            if f.get(i) {
                *gi += cfg.lambda2 * sign(mi);
            }
        }
    }
    Ok(LossGrads {
        loss: pass.ce + l1_term(masks, cfg),
        ce: pass.ce,
        weights: pass.weights,
        adj_mask,
        weight_masks: pass.weight_masks,
    })
}

/// Fraction of `index` whose argmax logit (ties to the lower class)
/// equals the label. Empty sets score 0.
pub fn accuracy(logits: &Matrix, labels: &[usize], index: &[usize]) -> f64 {
    if index.is_empty() {
        return 0.0;
    }
    let correct = index
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best == labels[i]
        })
        .count();
    correct as f64 / index.len() as f64
}

/// Accuracy of the model under fixed binary masks.
pub fn evaluate(ds: &GraphDataset, model: &ModelState, binary: &BinaryMasks, split: Split) -> Result<f64> {
    let logits = forward(ds, model, &SoftMasks::ones_on(binary), true)?;
    Ok(accuracy(&logits, ds.labels(), ds.splits().get(split)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_acc,test_acc\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_acc, r.test_acc).expect("write to String");
        }
        s
    }
}

/// Parameters and masks as they stood after some epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub layers: Vec<Matrix>,
    pub masks: SoftMasks,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub trace: TrainTrace,
    /// Highest validation accuracy, earliest epoch on ties.
    pub best: Snapshot,
    pub last: Snapshot,
}

/// Full-graph training for `cfg.epochs` epochs. `model` and `masks` are
/// left at their final state.
pub fn train(
    ds: &GraphDataset,
    model: &mut ModelState,
    masks: &mut SoftMasks,
    cfg: &TrainConfig,
    train_weights: bool,
    train_masks: bool,
) -> Result<TrainOutcome> {
    if !train_weights && !train_masks {
        return Err(Error::NothingToTrain);
    }
    cfg.validate()?;
    check_shapes(model.layers(), masks, ds)?;
    let backbone = model.backbone.clone();
    let nl = model.layers.len();

    let mut w: Vec<Tensor> = model
        .layers
        .iter()
        .map(|m| Tensor::new(m.clone(), train_weights))
        .collect();
    let mut ma = Tensor::new(masks.adj.clone(), train_masks);
    let mut mw: Vec<Tensor> = masks
        .weights
        .iter()
        .map(|m| Tensor::new(m.clone(), train_masks))
        .collect();
    let mut adam = AdamState::new(AdamHyper::new(cfg.lr, cfg.weight_decay));
    let mut l1_targets = Vec::new();
    if train_masks {
        let base = if train_weights { nl } else { 0 };
        l1_targets.push((base, cfg.lambda1));
        l1_targets.extend((0..nl).map(|k| (base + 1 + k, cfg.lambda2)));
    }

    let splits = ds.splits();
    let mut trace = TrainTrace::default();
    let mut best: Option<Snapshot> = None;
    let snapshot = |epoch, w: &[Tensor], ma: &Tensor, mw: &[Tensor], val_acc, test_acc| Snapshot {
        epoch,
        layers: w.iter().map(|t| t.value.clone()).collect(),
        masks: SoftMasks {
            adj: ma.value.clone(),
            weights: mw.iter().map(|t| t.value.clone()).collect(),
            frozen: masks.frozen.clone(),
        },
        val_acc,
        test_acc,
    };

    for epoch in 1..=cfg.epochs {
        let diverged = |e: Error| match e {
            Error::NonFinite(_) => Error::NonFiniteLoss { epoch },
            other => other,
        };
        let layer_refs: Vec<&Matrix> = w.iter().map(|t| &t.value).collect();
        let wm_refs: Vec<&Matrix> = mw.iter().map(|t| &t.value).collect();
        let pass = ce_pass(
            ds,
            backbone.as_ref(),
            &layer_refs,
            (&ma.value, &wm_refs),
            cfg.norm_grad_through_degree,
            (train_weights, train_masks),
        )
        .map_err(diverged)?;
        let current = SoftMasks {
            adj: ma.value.clone(),
            weights: wm_refs.iter().map(|m| (*m).clone()).collect(),
            frozen: masks.frozen.clone(),
        };
        let train_loss = pass.ce + l1_term(&current, cfg);
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }

        if train_weights {
            for (t, g) in w.iter_mut().zip(pass.weights) {
                t.grad = Some(g);
            }
        }
        if train_masks {
            let mut ga = pass.adj_mask;
            zero_frozen(&mut ga, &masks.frozen.adj);
            ma.grad = Some(ga);
            for ((t, mut g), f) in mw.iter_mut().zip(pass.weight_masks).zip(&masks.frozen.weights) {
                zero_frozen(&mut g, f);
                t.grad = Some(g);
            }
        }
        let mut params: Vec<&mut Tensor> = Vec::with_capacity(2 * nl + 1);
        if train_weights {
            params.extend(w.iter_mut());
        }
        if train_masks {
            params.push(&mut ma);
            params.extend(mw.iter_mut());
        }
        adam_step(&mut params, &mut adam, &l1_targets).map_err(diverged)?;

        let eval_masks = SoftMasks {
            adj: ma.value.clone(),
            weights: mw.iter().map(|t| t.value.clone()).collect(),
            frozen: masks.frozen.clone(),
        };
        let logits = logits_of(
            ds,
            backbone.as_ref(),
            &w.iter().map(|t| &t.value).collect::<Vec<_>>(),
            &eval_masks,
            cfg.norm_grad_through_degree,
        )
        .map_err(diverged)?;
        let val_acc = accuracy(&logits, ds.labels(), &splits.val);
        let test_acc = accuracy(&logits, ds.labels(), &splits.test);
        trace.rows.push(TraceRow {
            epoch,
            train_loss,
            val_acc,
            test_acc,
        });
        if best.as_ref().is_none_or(|b| val_acc > b.val_acc) {
            best = Some(snapshot(epoch, &w, &ma, &mw, val_acc, test_acc));
        }
    }

    let lastrow = *trace.rows.last().expect("epochs >= 1");
    let last = snapshot(cfg.epochs, &w, &ma, &mw, lastrow.val_acc, lastrow.test_acc);
    model.layers = w.into_iter().map(|t| t.value).collect();
    masks.adj = ma.value;
    masks.weights = mw.into_iter().map(|t| t.value).collect();
    Ok(TrainOutcome {
        trace,
        best: best.expect("epochs >= 1"),
        last,
    })
}
