//! Undirected agent communication topology.
//!
//! Nodes are indexed `0..n`. A [`Graph`] is validated once at construction
//! (no self-loops, no duplicate edges, connected) and is immutable afterwards,
//! so one instance can be shared by every run of a Monte Carlo batch.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) listed more than once")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected: node {unreachable} is not reachable from node 0")]
    Disconnected { unreachable: usize },
}

/// Wire form of a graph as it appears in run configs: `{"n": 6, "edges": [[0, 1], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Normalized `(min, max)` pairs in input order.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            for index in [a, b] {
                if index >= n {
                    return Err(GraphError::IndexOutOfRange { index, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            normalized.push(key);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        // Breadth-first search from node 0.
        let mut visited = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &neighbors[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(unreachable) = visited.iter().position(|&v| !v) {
            return Err(GraphError::Disconnected { unreachable });
        }

        Ok(Self {
            n,
            edges: normalized,
            neighbors,
        })
    }

    pub fn from_spec(spec: &GraphSpec) -> Result<Self, GraphError> {
        let edges: Vec<_> = spec.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::new(spec.n, &edges)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            n: self.n,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    /// Star centered at node 0.
    pub fn star(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.neighbors
            .get(i)
            .map(Vec::as_slice)
            .ok_or(GraphError::IndexOutOfRange {
                index: i,
                n: self.n,
            })
    }

    pub fn degree(&self, i: usize) -> Result<usize, GraphError> {
        self.neighbors(i).map(<[usize]>::len)
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `L = D - A` as a dense row-major matrix. Entries are small integers, so
    /// the `f64` representation is exact.
    pub fn laplacian(&self) -> Vec<Vec<f64>> {
        let mut l = vec![vec![0.0; self.n]; self.n];
        for &(a, b) in &self.edges {
            l[a][b] -= 1.0;
            l[b][a] -= 1.0;
            l[a][a] += 1.0;
            l[b][b] += 1.0;
        }
        l
    }

    /// `ave^i(x) = sum over neighbors j of (x_j - x_i)`, i.e. `-(L x)_i`.
    ///
    /// Panics if `i` is out of range or `x` is shorter than `n`.
    pub fn neighbor_offset(&self, i: usize, x: &[f64]) -> f64 {
        let xi = x[i];
        self.neighbors[i].iter().map(|&j| x[j] - xi).sum()
    }

    /// Rate of change of `ave^i` under the input vector `u`.
    pub fn neighbor_offset_rate(&self, i: usize, u: &[f64]) -> f64 {
        let ui = u[i];
        self.neighbors[i].iter().map(|&j| u[j] - ui).sum()
    }

    /// Disagreement energy `V(x) = x^T L x / 2`, summed over edges.
    pub fn disagreement(&self, x: &[f64]) -> f64 {
        0.5 * self
            .edges
            .iter()
            .map(|&(a, b)| (x[a] - x[b]).powi(2))
            .sum::<f64>()
    }

    /// Whether `x` lies in the approximate consensus set: `|ave^i(x)| < eps` for all `i`.
    pub fn in_consensus_set(&self, x: &[f64], eps: f64) -> bool {
        (0..self.n).all(|i| self.neighbor_offset(i, x).abs() < eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_connected_graph() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(g.degree(0).unwrap(), 1);
        assert_eq!(g.laplacian(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            Graph::new(3, &[(0, 1)]),
            Err(GraphError::Disconnected { unreachable: 2 })
        );
        assert_eq!(Graph::new(3, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            Graph::new(3, &[(0, 1), (1, 2), (1, 0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
        assert_eq!(
            Graph::new(3, &[(0, 3)]),
            Err(GraphError::IndexOutOfRange { index: 3, n: 3 })
        );
        assert_eq!(Graph::new(1, &[]), Err(GraphError::TooFewNodes(1)));
    }

    #[test]
    fn degrees() {
        let star = Graph::star(4).unwrap();
        assert_eq!(star.degree(0).unwrap(), 3);
        let k4 = Graph::complete(4).unwrap();
        for i in 0..4 {
            assert_eq!(k4.degree(i).unwrap(), 3);
        }
        assert!(matches!(
            k4.degree(4),
            Err(GraphError::IndexOutOfRange { index: 4, n: 4 })
        ));
    }

    #[test]
    fn triangle_laplacian() {
        let g = Graph::complete(3).unwrap();
        let l = g.laplacian();
        for (i, row) in l.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn six_node_desk_topology_is_connected() {
        // Ring with one chord; independent check by repeated relaxation.
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)];
        let g = Graph::new(6, &edges).unwrap();
        let mut reach = [true, false, false, false, false, false];
        for _ in 0..6 {
            for &(a, b) in &edges {
                if reach[a] || reach[b] {
                    reach[a] = true;
                    reach[b] = true;
                }
            }
        }
        assert!(reach.iter().all(|&r| r));
        assert_eq!(g.max_degree(), 3);
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (2usize..9).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            let m = pairs.len();
            proptest::collection::vec(any::<bool>(), m).prop_map(move |mask| {
                // Spanning path keeps every sample connected.
                let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
                for (keep, &(i, j)) in mask.iter().zip(&pairs) {
                    if *keep && j != i + 1 {
                        edges.push((i, j));
                    }
                }
                Graph::new(n, &edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn laplacian_structure(g in arb_graph()) {
            let l = g.laplacian();
            for i in 0..g.n() {
                prop_assert_eq!(l[i].iter().sum::<f64>(), 0.0);
                prop_assert_eq!(l[i][i], g.degree(i).unwrap() as f64);
                for j in 0..g.n() {
                    prop_assert_eq!(l[i][j], l[j][i]);
                }
            }
        }

        #[test]
        fn quadratic_form_matches_edge_sum(
            g in arb_graph(),
            seed in proptest::collection::vec(-5.0f64..5.0, 9),
        ) {
            let x = &seed[..g.n()];
            let l = g.laplacian();
            let xlx: f64 = (0..g.n())
                .map(|i| x[i] * (0..g.n()).map(|j| l[i][j] * x[j]).sum::<f64>())
                .sum();
            let edge_sum: f64 = g.edges().iter().map(|&(a, b)| (x[a] - x[b]).powi(2)).sum();
            prop_assert!(xlx >= -1e-9);
            prop_assert!((xlx - edge_sum).abs() <= 1e-9 * (1.0 + edge_sum));
            prop_assert!((g.disagreement(x) - 0.5 * edge_sum).abs() <= 1e-12 * (1.0 + edge_sum));
            for i in 0..g.n() {
                let lx: f64 = (0..g.n()).map(|j| l[i][j] * x[j]).sum();
                prop_assert!((g.neighbor_offset(i, x) + lx).abs() < 1e-9);
            }
        }
    }
}
