//! Undirected adjacency stored once per edge (`u < v`) with a CSR view
//! that expands each edge in both directions.

use crate::engine::Matrix;
use crate::error::{Error, Result};

/// Ordinal of an undirected edge in the canonical edge array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    /// `(neighbor, edge id)` pairs grouped by source node.
    entries: Vec<(usize, usize)>,
}

impl Adjacency {
    /// Builds the structure from edges already canonicalized (`u < v`),
    /// sorted and free of duplicates.
    pub fn from_canonical(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for w in edges.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidConfig(format!("edges not sorted/unique at {:?}", w[1])));
            }
        }
        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &edges {
            if u >= v {
                return Err(Error::InvalidConfig(format!("edge ({u}, {v}) is not canonical")));
            }
            if v >= num_nodes {
                return Err(Error::IndexOutOfRange {
                    what: "node",
                    index: v,
                    bound: num_nodes,
                });
            }
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut entries = vec![(0, 0); 2 * edges.len()];
        for (e, &(u, v)) in edges.iter().enumerate() {
            entries[fill[u]] = (v, e);
            fill[u] += 1;
            entries[fill[v]] = (u, e);
            fill[v] += 1;
        }
        for i in 0..num_nodes {
            entries[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges,
            offsets,
            entries,
        })
    }

    /// Canonicalizes, sorts and deduplicates an arbitrary edge list,
    /// silently dropping self-loops.
    pub fn from_edges_lossy(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canon: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|(u, v)| u != v)
            .map(|(u, v)| if u < v { (u, v) } else { (v, u) })
            .collect();
        canon.sort_unstable();
        canon.dedup();
        Self::from_canonical(num_nodes, canon)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> (usize, usize) {
        self.edges[id.0]
    }

    /// Looks up the id of the undirected edge `{u, v}`.
    pub fn edge_id(&self, u: usize, v: usize) -> Option<EdgeId> {
        let key = if u < v { (u, v) } else { (v, u) };
        self.edges.binary_search(&key).ok().map(EdgeId)
    }

    /// `(neighbor, edge id)` pairs of node `i`, ascending by neighbor.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Number of stored directed entries (twice the undirected count).
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Dense `n × n` matrix with entry `weights[e]` at both `(u, v)` and `(v, u)`.
    pub fn to_dense_weighted(&self, weights: &[f64]) -> Matrix {
        assert_eq!(weights.len(), self.edges.len());
        let mut m = Matrix::zeros(self.num_nodes, self.num_nodes);
        for (&(u, v), &w) in self.edges.iter().zip(weights) {
            m.set(u, v, w);
            m.set(v, u, w);
        }
        m
    }

    pub fn to_dense(&self) -> Matrix {
        self.to_dense_weighted(&vec![1.0; self.edges.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lossy_build_canonicalizes() {
        let adj = Adjacency::from_edges_lossy(4, [(1, 0), (0, 1), (2, 2), (3, 1)]).unwrap();
        assert_eq!(adj.edges(), &[(0, 1), (1, 3)]);
        assert_eq!(adj.nnz(), 4);
        assert_eq!(adj.neighbors(1), &[(0, 0), (3, 1)]);
        assert_eq!(adj.edge_id(3, 1), Some(EdgeId(1)));
        assert_eq!(adj.edge_id(2, 3), None);
    }

    #[test]
    fn dense_expansion_is_symmetric_zero_diagonal() {
        let adj = Adjacency::from_edges_lossy(5, [(0, 1), (1, 2), (2, 4), (0, 4)]).unwrap();
        let d = adj.to_dense();
        for i in 0..5 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..5 {
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
        assert_eq!(d.sum(), 8.0);
    }
}
