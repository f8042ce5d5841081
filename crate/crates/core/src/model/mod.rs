//! Masked two-layer GNNs and their training loop.

mod masks;
mod train;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use masks::{BinaryMasks, SoftMasks};
pub use train::{
    accuracy, evaluate, forward, loss_and_grads, loss_pruned, loss_retained, train, LossGrads, Snapshot, TraceRow,
    TrainConfig, TrainOutcome, TrainTrace,
};

use crate::dataset::GraphDataset;
use crate::engine::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::registry::Registry;

/// What a backbone's forward pass reads besides its weights.
pub struct Inputs<'g> {
    pub adjacency: &'g Adjacency,
    pub features: &'g Matrix,
    /// `num_edges × 1` edge mask already on the tape.
    pub edge_mask: Var,
    pub through_degree: bool,
}

/// A message-passing architecture. `weights` are the effective
/// (already masked) layer matrices; the result is pre-softmax logits.
pub trait Backbone: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn forward<'g>(&self, tape: &mut Tape<'g>, inputs: &Inputs<'g>, weights: &[Var]) -> Result<Var>;
}

/// `Â · relu(Â · X · W0) · W1` with the masked, self-looped, symmetric
/// normalization. Each layer transforms before aggregating.
#[derive(Debug, Default)]
pub struct Gcn;

impl Backbone for Gcn {
    fn name(&self) -> &'static str {
        "gcn"
    }

    fn forward<'g>(&self, tape: &mut Tape<'g>, inputs: &Inputs<'g>, weights: &[Var]) -> Result<Var> {
        let mut h = tape.const_matmul(inputs.features, weights[0])?;
        h = tape.gcn_spmm(inputs.adjacency, inputs.edge_mask, h, inputs.through_degree)?;
        for &w in &weights[1..] {
            h = tape.relu(h)?;
            h = tape.matmul(h, w)?;
            h = tape.gcn_spmm(inputs.adjacency, inputs.edge_mask, h, inputs.through_degree)?;
        }
        Ok(h)
    }
}

/// Sum-aggregation GIN with a single linear map per layer:
/// `h' = ((1 + ε)·h + (A ⊙ M)·h) · W`, ReLU between layers.
#[derive(Debug, Default)]
pub struct Gin {
    pub epsilon: f64,
}

impl Backbone for Gin {
    fn name(&self) -> &'static str {
        "gin"
    }

    fn forward<'g>(&self, tape: &mut Tape<'g>, inputs: &Inputs<'g>, weights: &[Var]) -> Result<Var> {
        let mut h = tape.const_matmul(inputs.features, weights[0])?;
        h = self.aggregate(tape, inputs, h)?;
        for &w in &weights[1..] {
            h = tape.relu(h)?;
            h = tape.matmul(h, w)?;
            h = self.aggregate(tape, inputs, h)?;
        }
        Ok(h)
    }
}

impl Gin {
    fn aggregate<'g>(&self, tape: &mut Tape<'g>, inputs: &Inputs<'g>, h: Var) -> Result<Var> {
        let nb = tape.masked_spmm(inputs.adjacency, inputs.edge_mask, h)?;
        let own = if self.epsilon == 0.0 {
            h
        } else {
            tape.scale(h, 1.0 + self.epsilon)?
        };
        tape.add(own, nb)
    }
}

pub fn backbones() -> Registry<dyn Backbone> {
    let mut reg: Registry<dyn Backbone> = Registry::new("backbone");
    reg.register("gcn", || Box::new(Gcn));
    reg.register("gin", || Box::new(Gin::default()));
    reg
}

pub fn backbone(name: &str) -> Result<Arc<dyn Backbone>> {
    backbones().create(name).map(Arc::from)
}

/// Layer weights plus the frozen initialization they rewind to.
#[derive(Clone)]
pub struct ModelState {
    backbone: Arc<dyn Backbone>,
    layers: Vec<Matrix>,
    init: Arc<[Matrix]>,
    hidden: usize,
}

impl fmt::Debug for ModelState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelState")
            .field("backbone", &self.backbone.name())
            .field("shapes", &self.shapes())
            .finish()
    }
}

impl ModelState {
    /// Glorot-uniform draw of an `in → hidden → out` network from `seed`.
    pub fn new(backbone: Arc<dyn Backbone>, in_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || hidden == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must be positive, got {in_dim} -> {hidden} -> {out_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<Matrix> = [(in_dim, hidden), (hidden, out_dim)]
            .iter()
            .map(|&(fan_in, fan_out)| {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
                Matrix::from_vec(fan_in, fan_out, data).expect("sized above")
            })
            .collect();
        Ok(Self {
            backbone,
            init: layers.clone().into(),
            layers,
            hidden,
        })
    }

    pub fn for_dataset(ds: &GraphDataset, backbone: Arc<dyn Backbone>, hidden: usize, seed: u64) -> Result<Self> {
        Self::new(backbone, ds.num_features(), hidden, ds.num_classes(), seed)
    }

    pub fn backbone(&self) -> &dyn Backbone {
        self.backbone.as_ref()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn set_layers(&mut self, layers: Vec<Matrix>) -> Result<()> {
        if layers.len() != self.layers.len() || layers.iter().zip(&self.layers).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::ShapeMismatch {
                op: "set_layers",
                lhs: layers.first().map_or((0, 0), Matrix::shape),
                rhs: self.layers[0].shape(),
            });
        }
        self.layers = layers;
        Ok(())
    }

    pub fn init_snapshot(&self) -> &[Matrix] {
        &self.init
    }

    pub fn rewind(&mut self) {
        self.layers = self.init.to_vec();
    }

    /// True when the current weights equal the initialization bit for bit.
    pub fn is_rewound(&self) -> bool {
        self.layers.iter().zip(self.init.iter()).all(|(a, b)| {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(Matrix::shape).collect()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(Matrix::len).sum()
    }

    pub fn full_masks(&self, ds: &GraphDataset) -> BinaryMasks {
        BinaryMasks::full(ds.num_edges(), &self.shapes())
    }
}
