//! Seeded synthetic fixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{GraphDataset, Splits};
use crate::bits::BitMask;
use crate::engine::Matrix;
use crate::error::{Error, Result};
use crate::graph::{Adjacency, EdgeId};

/// Stochastic block model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmConfig {
    pub num_blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub num_features: usize,
    /// Standard deviation of the Gaussian noise added to the one-hot features.
    pub noise_std: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn new(num_blocks: usize, nodes_per_block: usize, p_in: f64, p_out: f64, d: usize, seed: u64) -> Self {
        Self {
            num_blocks,
            nodes_per_block,
            p_in,
            p_out,
            num_features: d,
            noise_std: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.num_blocks == 0 || self.num_features < self.num_blocks {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= num_blocks <= num_features, got {} blocks and {} features",
                self.num_blocks, self.num_features
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig("noise_std must be finite and >= 0".into()));
        }
        let (tr, va, te) = split_sizes(self.nodes_per_block);
        if tr == 0 || va == 0 || te == 0 {
            return Err(Error::DegenerateConfig(format!(
                "{} nodes per block gives split sizes {tr}/{va}/{te}",
                self.nodes_per_block
            )));
        }
        Ok(())
    }
}

/// Per-block train/val/test sizes: 60% / 20% / remainder.
fn split_sizes(n: usize) -> (usize, usize, usize) {
    let tr = (0.6 * n as f64).round() as usize;
    let va = ((0.2 * n as f64).round() as usize).min(n - tr);
    (tr, va, n - tr - va)
}

pub fn synth_sbm(
    num_blocks: usize,
    nodes_per_block: usize,
    p_in: f64,
    p_out: f64,
    d: usize,
    seed: u64,
) -> Result<GraphDataset> {
    synth_sbm_with(&SbmConfig::new(num_blocks, nodes_per_block, p_in, p_out, d, seed))
}

pub fn synth_sbm_with(cfg: &SbmConfig) -> Result<GraphDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.num_blocks * cfg.nodes_per_block;
    let block = |i: usize| i / cfg.nodes_per_block;

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut features = Matrix::zeros(n, cfg.num_features);
    for i in 0..n {
        for (k, x) in features.row_mut(i).iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            *x = f64::from(u8::from(k == block(i))) + cfg.noise_std * noise;
        }
    }

    let mut splits = Splits::default();
    let (tr, va, _) = split_sizes(cfg.nodes_per_block);
    for b in 0..cfg.num_blocks {
        let mut members: Vec<usize> = (b * cfg.nodes_per_block..(b + 1) * cfg.nodes_per_block).collect();
        members.shuffle(&mut rng);
        splits.train.extend_from_slice(&members[..tr]);
        splits.val.extend_from_slice(&members[tr..tr + va]);
        splits.test.extend_from_slice(&members[tr + va..]);
    }

    let labels = (0..n).map(block).collect();
    GraphDataset::new(
        cfg.num_blocks,
        features,
        Adjacency::from_canonical(n, edges)?,
        labels,
        splits,
    )
}

/// A two-block graph with featureless pendant clusters, each reachable
/// only through one planted bridge edge.
///
/// Every cluster is a hub node (train split) plus `leaves` (val/test)
/// attached to the hub. The bridge joins the hub to a train node of its
/// class block, so without the bridge the whole cluster carries no signal.
/// `rigged_edges` is an edge mask with every bridge and every decoy
/// removed; decoys are cross-block edges between train nodes, which only
/// ever hurt.
#[derive(Clone, Debug)]
pub struct PlantedBridge {
    pub dataset: GraphDataset,
    pub bridges: Vec<EdgeId>,
    pub decoys: Vec<EdgeId>,
    pub rigged_edges: BitMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BridgeConfig {
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub num_features: usize,
    pub noise_std: f64,
    pub num_bridges: usize,
    pub leaves: usize,
    pub num_decoys: usize,
    pub seed: u64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            nodes_per_block: 20,
            p_in: 0.25,
            num_features: 4,
            noise_std: 0.5,
            num_bridges: 1,
            leaves: 4,
            num_decoys: 2,
            seed: 0,
        }
    }
}

pub fn planted_bridge(cfg: &BridgeConfig) -> Result<PlantedBridge> {
    if cfg.num_bridges == 0 || cfg.leaves < 2 {
        return Err(Error::InvalidConfig(
            "planted bridge needs >= 1 bridge and >= 2 leaves".into(),
        ));
    }
    let base = synth_sbm_with(&SbmConfig {
        num_blocks: 2,
        nodes_per_block: cfg.nodes_per_block,
        p_in: cfg.p_in,
        p_out: 0.0,
        num_features: cfg.num_features,
        noise_std: cfg.noise_std,
        seed: cfg.seed,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let n0 = base.num_nodes();
    let cluster = cfg.leaves + 1;
    let n = n0 + cfg.num_bridges * cluster;

    let train_in = |b: usize| -> Vec<usize> {
        base.splits()
            .train
            .iter()
            .copied()
            .filter(|&i| base.labels()[i] == b)
            .collect()
    };
    let anchors = [train_in(0), train_in(1)];

    let mut edges: Vec<(usize, usize)> = base.adjacency().edges().to_vec();
    let mut bridges = Vec::new();
    let mut labels = base.labels().to_vec();
    let mut splits = base.splits().clone();
    for k in 0..cfg.num_bridges {
        let class = (k + 1) % 2;
        let hub = n0 + k * cluster;
        let anchor = anchors[class][rng.random_range(0..anchors[class].len())];
        bridges.push((anchor, hub));
        labels.push(class);
        splits.train.push(hub);
        for leaf in 0..cfg.leaves {
            let node = hub + 1 + leaf;
            edges.push((hub, node));
            labels.push(class);
            if leaf % 2 == 0 {
                splits.val.push(node);
            } else {
                splits.test.push(node);
            }
        }
    }
    edges.extend_from_slice(&bridges);

    let mut decoys = Vec::new();
    while decoys.len() < cfg.num_decoys {
        let u = anchors[0][rng.random_range(0..anchors[0].len())];
        let v = anchors[1][rng.random_range(0..anchors[1].len())];
        if !decoys.contains(&(u, v)) {
            decoys.push((u, v));
        }
    }
    edges.extend_from_slice(&decoys);

    let mut features = Matrix::zeros(n, cfg.num_features);
    for i in 0..n0 {
        features.row_mut(i).copy_from_slice(base.features().row(i));
    }
    let adjacency = Adjacency::from_edges_lossy(n, edges)?;
    let ids = |pairs: &[(usize, usize)]| -> Vec<EdgeId> {
        pairs
            .iter()
            .map(|&(u, v)| adjacency.edge_id(u, v).expect("planted edge present"))
            .collect()
    };
    let bridges = ids(&bridges);
    let decoys = ids(&decoys);
    let mut rigged_edges = BitMask::ones(adjacency.num_edges());
    for e in bridges.iter().chain(&decoys) {
        rigged_edges.set(e.0, false);
    }
    let dataset = GraphDataset::new(2, features, adjacency, labels, splits)?;
    Ok(PlantedBridge {
        dataset,
        bridges,
        decoys,
        rigged_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cliques_without_cross_edges() {
        let ds = synth_sbm(2, 4, 1.0, 0.0, 2, 7).unwrap();
        assert_eq!(ds.num_edges(), 12);
        assert!(ds.adjacency().edges().iter().all(|&(u, v)| u / 4 == v / 4));
        assert_eq!(ds.labels(), &[0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn same_arguments_same_dataset() {
        let a = synth_sbm(2, 50, 0.5, 0.05, 8, 1).unwrap();
        let b = synth_sbm(2, 50, 0.5, 0.05, 8, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_sbm(2, 50, 0.5, 0.05, 8, 2).unwrap());
    }

    #[test]
    fn splits_are_stratified() {
        let ds = synth_sbm(3, 10, 0.5, 0.1, 3, 4).unwrap();
        for b in 0..3 {
            let count = |s: &[usize]| s.iter().filter(|&&i| ds.labels()[i] == b).count();
            assert_eq!(count(&ds.splits().train), 6);
            assert_eq!(count(&ds.splits().val), 2);
            assert_eq!(count(&ds.splits().test), 2);
        }
    }

    #[test]
    fn tiny_blocks_are_degenerate() {
        assert!(matches!(
            synth_sbm(2, 2, 0.5, 0.1, 2, 0),
            Err(Error::DegenerateConfig(_))
        ));
        assert!(matches!(synth_sbm(2, 10, 0.1, 0.5, 2, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn bridge_is_the_only_path_into_its_cluster() {
        let pb = planted_bridge(&BridgeConfig::default()).unwrap();
        let ds = &pb.dataset;
        let (a, hub) = ds.adjacency().edge(pb.bridges[0]);
        assert!(ds.features().row(hub).iter().all(|&x| x == 0.0));
        assert_eq!(ds.labels()[a], ds.labels()[hub]);
        let outside = ds
            .adjacency()
            .neighbors(hub)
            .iter()
            .filter(|&&(j, _)| ds.features().row(j).iter().any(|&x| x != 0.0))
            .count();
        assert_eq!(outside, 1);
        assert_eq!(pb.rigged_edges.count_zeros(), 1 + pb.decoys.len());
        for e in &pb.decoys {
            let (u, v) = ds.adjacency().edge(*e);
            assert_ne!(ds.labels()[u], ds.labels()[v]);
        }
    }
}
