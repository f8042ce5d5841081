//! Graph datasets: validated in-memory form, the on-disk directory format,
//! deterministic synthetic fixtures and the Planetoid text converter.

mod format;
pub mod planetoid;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use format::{load_dataset, load_dataset_with, save_dataset, LoadOptions};
pub use synth::{planted_bridge, synth_sbm, synth_sbm_with, BridgeConfig, PlantedBridge, SbmConfig};

use crate::engine::Matrix;
use crate::error::{Error, Result};
use crate::graph::Adjacency;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Immutable node-classification dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    num_classes: usize,
    features: Matrix,
    adjacency: Adjacency,
    labels: Vec<usize>,
    splits: Splits,
}

impl GraphDataset {
    pub fn new(
        num_classes: usize,
        features: Matrix,
        adjacency: Adjacency,
        labels: Vec<usize>,
        mut splits: Splits,
    ) -> Result<Self> {
        let n = features.rows();
        if adjacency.num_nodes() != n || labels.len() != n {
            return Err(Error::InvalidConfig(format!(
                "node counts disagree: features {n}, adjacency {}, labels {}",
                adjacency.num_nodes(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::IndexOutOfRange {
                what: "label",
                index: bad,
                bound: num_classes,
            });
        }
        let mut seen = vec![false; n];
        for part in [&mut splits.train, &mut splits.val, &mut splits.test] {
            part.sort_unstable();
            for &i in part.iter() {
                if i >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "split",
                        index: i,
                        bound: n,
                    });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::SplitOverlap(i));
                }
            }
        }
        Ok(Self {
            num_classes,
            features,
            adjacency,
            labels,
            splits,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.num_edges()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    /// Scales each feature row to unit ℓ1 norm (all-zero rows are left alone).
    pub fn row_normalized(mut self) -> Self {
        for r in 0..self.features.rows() {
            let row = self.features.row_mut(r);
            let s: f64 = row.iter().map(|v| v.abs()).sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        self
    }
}
