use serde::{Deserialize, Serialize};

use crate::bits::BitMask;
use crate::engine::Matrix;
use crate::error::{Error, Result};

/// Frozen 0/1 structure of a ticket: one bit per undirected edge and one
/// per weight entry (row-major within each layer).
///
/// The complements are always derived. The edge complement is taken
/// against the original edge set, which is the whole edge universe, so
/// `A ⊕ M_A` and `¬M_A` coincide.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMasks {
    pub adj: BitMask,
    pub weights: Vec<BitMask>,
    shapes: Vec<(usize, usize)>,
}

impl BinaryMasks {
    pub fn new(adj: BitMask, weights: Vec<BitMask>, shapes: Vec<(usize, usize)>) -> Result<Self> {
        if weights.len() != shapes.len() || weights.iter().zip(&shapes).any(|(w, &(r, c))| w.len() != r * c) {
            return Err(Error::UniverseMismatch("weight masks do not match layer shapes".into()));
        }
        Ok(Self { adj, weights, shapes })
    }

    pub fn full(num_edges: usize, shapes: &[(usize, usize)]) -> Self {
        Self {
            adj: BitMask::ones(num_edges),
            weights: shapes.iter().map(|&(r, c)| BitMask::ones(r * c)).collect(),
            shapes: shapes.to_vec(),
        }
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn complement(&self) -> Self {
        Self {
            adj: self.adj.not(),
            weights: self.weights.iter().map(BitMask::not).collect(),
            shapes: self.shapes.clone(),
        }
    }

    pub fn active_edges(&self) -> usize {
        self.adj.count_ones()
    }

    pub fn active_weights(&self) -> usize {
        self.weights.iter().map(BitMask::count_ones).sum()
    }

    pub fn weight_universe(&self) -> usize {
        self.weights.iter().map(BitMask::len).sum()
    }

    /// Start offset of each layer in the flat weight index space.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.weights
            .iter()
            .map(|w| {
                let o = acc;
                acc += w.len();
                o
            })
            .collect()
    }

    /// All weight bits concatenated layer after layer.
    pub fn weights_flat(&self) -> BitMask {
        let mut flat = BitMask::zeros(self.weight_universe());
        for (off, w) in self.layer_offsets().into_iter().zip(&self.weights) {
            for i in w.iter_ones() {
                flat.set(off + i, true);
            }
        }
        flat
    }

    pub fn set_weights_flat(&mut self, flat: &BitMask) -> Result<()> {
        if flat.len() != self.weight_universe() {
            return Err(Error::UniverseMismatch(format!(
                "flat weight mask has {} bits, expected {}",
                flat.len(),
                self.weight_universe()
            )));
        }
        let offsets = self.layer_offsets();
        for (w, off) in self.weights.iter_mut().zip(offsets) {
            for i in 0..w.len() {
                w.set(i, flat.get(off + i));
            }
        }
        Ok(())
    }

    pub fn same_universe(&self, other: &Self) -> Result<()> {
        if self.adj.len() != other.adj.len() || self.shapes != other.shapes {
            return Err(Error::UniverseMismatch("binary masks cover different universes".into()));
        }
        Ok(())
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.adj.is_subset_of(&other.adj) && self.weights.iter().zip(&other.weights).all(|(a, b)| a.is_subset_of(b))
    }
}

/// Real-valued masks in `[0, 1]`. Entries outside `frozen` are held at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMasks {
    /// `num_edges × 1`.
    pub adj: Matrix,
    pub weights: Vec<Matrix>,
    pub frozen: BinaryMasks,
}

impl SoftMasks {
    /// 1.0 on every active entry, 0 elsewhere.
    pub fn ones_on(active: &BinaryMasks) -> Self {
        let adj = Matrix::column(active.adj.iter().map(|b| f64::from(u8::from(b))).collect());
        let weights = active
            .weights
            .iter()
            .zip(active.shapes())
            .map(|(w, &(r, c))| {
                Matrix::from_vec(r, c, w.iter().map(|b| f64::from(u8::from(b))).collect()).expect("shape checked")
            })
            .collect();
        Self {
            adj,
            weights,
            frozen: active.clone(),
        }
    }

    pub fn adj_values(&self) -> &[f64] {
        self.adj.as_slice()
    }

    pub fn weights_flat(&self) -> Vec<f64> {
        self.weights.iter().flat_map(|w| w.as_slice().iter().copied()).collect()
    }

    /// `(‖M_A‖₁, ‖M_W‖₁)` over the trainable entries.
    pub fn l1(&self) -> (f64, f64) {
        let adj = self.frozen.adj.iter_ones().map(|e| self.adj.as_slice()[e].abs()).sum();
        let w = self
            .weights
            .iter()
            .zip(&self.frozen.weights)
            .map(|(m, f)| f.iter_ones().map(|i| m.as_slice()[i].abs()).sum::<f64>())
            .sum();
        (adj, w)
    }
}
