//! Communication digraph used by the distributed secondary layer.
//!
//! `adjacency[i][j] > 0` means DG `i` receives DG `j`'s shared values;
//! `pinning[i] > 0` means DG `i` also receives the global reference.
//! Indices are zero-based internally and printed one-based (`dg1`, `dg2`, ...).

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph must contain at least one DG")]
    Empty,
    #[error("adjacency must be {n}x{n}, got row {row} of length {len}")]
    Shape { n: usize, row: usize, len: usize },
    #[error("pinning vector has length {len}, expected {n}")]
    PinningLength { n: usize, len: usize },
    #[error("weight a[dg{}][dg{}] = {w} is negative or not finite", .i + 1, .j + 1)]
    NegativeWeight { i: usize, j: usize, w: f64 },
    #[error("self-loop on dg{}: a[i][i] = {w}, must be zero", .i + 1)]
    NonzeroDiagonal { i: usize, w: f64 },
    #[error("pinning gain of dg{} = {b} is negative or not finite", .i + 1)]
    NegativePinning { i: usize, b: f64 },
    #[error("no DG is pinned to the reference")]
    NoPinnedNode,
    #[error("dg{} is not reachable from the reference", .i + 1)]
    Unreachable { i: usize },
    #[error("edge endpoint {index} out of range for {n} DGs")]
    EdgeEndpoint { index: usize, n: usize },
    #[error("DG index {i} out of range for {n} DGs")]
    IndexOutOfRange { i: usize, n: usize },
    #[error("values vector has length {len}, expected {n}")]
    ValuesLength { n: usize, len: usize },
}

/// Checks every graph invariant and reports the first one violated.
///
/// Order of checks: shape, negative weights, diagonal, pinning gains,
/// presence of a pinned node, reachability from the virtual reference node.
pub fn validate(adjacency: &[Vec<f64>], pinning: &[f64]) -> Result<(), GraphError> {
    let n = adjacency.len();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    for (row, r) in adjacency.iter().enumerate() {
        if r.len() != n {
            return Err(GraphError::Shape { n, row, len: r.len() });
        }
    }
    if pinning.len() != n {
        return Err(GraphError::PinningLength { n, len: pinning.len() });
    }
    for (i, row) in adjacency.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(GraphError::NegativeWeight { i, j, w });
            }
        }
    }
    for (i, row) in adjacency.iter().enumerate() {
        if row[i] != 0.0 {
            return Err(GraphError::NonzeroDiagonal { i, w: row[i] });
        }
    }
    for (i, &b) in pinning.iter().enumerate() {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(GraphError::NegativePinning { i, b });
        }
    }
    if !pinning.iter().any(|&b| b > 0.0) {
        return Err(GraphError::NoPinnedNode);
    }

    // BFS from the virtual reference node. Information flows j -> i when a[i][j] > 0.
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &b) in pinning.iter().enumerate() {
        if b > 0.0 {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && adjacency[i][j] > 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    match seen.iter().position(|&s| !s) {
        Some(i) => Err(GraphError::Unreachable { i }),
        None => Ok(()),
    }
}

/// Weighted communication digraph with pinning gains. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    adjacency: Vec<Vec<f64>>,
    pinning: Vec<f64>,
}

impl CommGraph {
    pub fn new(adjacency: Vec<Vec<f64>>, pinning: Vec<f64>) -> Result<Self, GraphError> {
        validate(&adjacency, &pinning)?;
        Ok(Self { adjacency, pinning })
    }

    /// Builds a graph from `(from, to, weight)` edges: DG `to` receives from DG `from`.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        pinning: Vec<f64>,
    ) -> Result<Self, GraphError> {
        let mut adjacency = vec![vec![0.0; n]; n];
        for &(from, to, w) in edges {
            for index in [from, to] {
                if index >= n {
                    return Err(GraphError::EdgeEndpoint { index, n });
                }
            }
            adjacency[to][from] = w;
        }
        Self::new(adjacency, pinning)
    }

    /// Undirected unit-weight ring `1-2-...-n-1` with only DG1 pinned.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        if n > 1 {
            for i in 0..n {
                let j = (i + 1) % n;
                if i != j {
                    edges.push((i, j, 1.0));
                    edges.push((j, i, 1.0));
                }
            }
        }
        let mut pinning = vec![0.0; n];
        if n > 0 {
            pinning[0] = 1.0;
        }
        Self::from_edges(n, &edges, pinning)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i][j]
    }

    pub fn pinning(&self, i: usize) -> f64 {
        self.pinning[i]
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.pinning[i] > 0.0
    }

    /// In-neighbors of DG `i` in ascending index order, with their weights.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[i]
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, &w)| (j, w))
    }

    /// Directed edges `(from, to, weight)` in row-major order of the receiver.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        (0..self.len())
            .flat_map(|i| self.in_neighbors(i).map(move |(j, w)| (j, i, w)))
            .collect()
    }

    /// Local neighborhood tracking error
    /// `e_i = sum_j a_ij (x_i - x_j) + b_i (x_i - x_ref)`.
    pub fn tracking_error(&self, i: usize, values: &[f64], reference: f64) -> Result<f64, GraphError> {
        let n = self.len();
        if i >= n {
            return Err(GraphError::IndexOutOfRange { i, n });
        }
        if values.len() != n {
            return Err(GraphError::ValuesLength { n, len: values.len() });
        }
        let xi = values[i];
        let mut e = 0.0;
        for (j, w) in self.in_neighbors(i) {
            e += w * (xi - values[j]);
        }
        if self.pinning[i] > 0.0 {
            e += self.pinning[i] * (xi - reference);
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_dg_ring_is_valid_and_dg1_hears_2_and_4() {
        let g = CommGraph::ring(4).unwrap();
        let n1: Vec<usize> = g.in_neighbors(0).map(|(j, _)| j).collect();
        assert_eq!(n1, vec![1, 3]);
        assert!(g.is_pinned(0));
        assert!(!g.is_pinned(2));
    }

    #[test]
    fn pinned_singleton_is_valid() {
        assert!(CommGraph::new(vec![vec![0.0]], vec![1.0]).is_ok());
    }

    #[test]
    fn disconnected_follower_is_rejected() {
        let err = CommGraph::new(vec![vec![0.0; 2]; 2], vec![1.0, 0.0]).unwrap_err();
        assert_eq!(err, GraphError::Unreachable { i: 1 });
    }

    #[test]
    fn reports_first_violation() {
        let adj = vec![vec![0.5, -1.0], vec![1.0, 0.0]];
        assert!(matches!(
            validate(&adj, &[1.0, 0.0]),
            Err(GraphError::NegativeWeight { i: 0, j: 1, .. })
        ));
        let adj = vec![vec![0.5, 1.0], vec![1.0, 0.0]];
        assert!(matches!(validate(&adj, &[1.0, 0.0]), Err(GraphError::NonzeroDiagonal { i: 0, .. })));
        let adj = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(validate(&adj, &[0.0, 0.0]), Err(GraphError::NoPinnedNode));
    }

    #[test]
    fn directed_chain_reachability_follows_edge_direction() {
        // 1 -> 2 only: reachable. 2 -> 1 only with 1 pinned: dg2 unreachable.
        assert!(CommGraph::from_edges(2, &[(0, 1, 1.0)], vec![1.0, 0.0]).is_ok());
        assert_eq!(
            CommGraph::from_edges(2, &[(1, 0, 1.0)], vec![1.0, 0.0]).unwrap_err(),
            GraphError::Unreachable { i: 1 }
        );
    }

    #[test]
    fn two_node_hand_example() {
        let g = CommGraph::from_edges(2, &[(1, 0, 1.0), (0, 1, 1.0)], vec![1.0, 0.0]).unwrap();
        let e = g.tracking_error(0, &[1.05, 1.00], 1.00).unwrap();
        assert!((e - 0.10).abs() < 1e-15);
    }

    #[test]
    fn consensus_point_has_zero_error() {
        let g = CommGraph::ring(4).unwrap();
        for i in 0..4 {
            assert_eq!(g.tracking_error(i, &[1.0; 4], 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn tracking_error_errors() {
        let g = CommGraph::ring(4).unwrap();
        assert!(matches!(g.tracking_error(4, &[1.0; 4], 1.0), Err(GraphError::IndexOutOfRange { .. })));
        assert!(matches!(g.tracking_error(0, &[1.0; 3], 1.0), Err(GraphError::ValuesLength { .. })));
    }

    /// Double loop over the dense matrix, written without the neighbor iterator.
    fn brute_force(adj: &[Vec<f64>], pin: &[f64], i: usize, x: &[f64], r: f64) -> f64 {
        let mut s = 0.0;
        for j in 0..x.len() {
            s += adj[i][j] * (x[i] - x[j]);
        }
        s + pin[i] * (x[i] - r)
    }

    fn random_graph() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..2.0, 4), 4),
            prop::collection::vec(0.0f64..2.0, 3),
        )
            .prop_map(|(mut adj, tail)| {
                for (i, row) in adj.iter_mut().enumerate() {
                    row[i] = 0.0;
                }
                // keep a ring so every random draw is reachable
                for i in 0..4 {
                    let j = (i + 3) % 4;
                    adj[i][j] = adj[i][j].max(0.1);
                }
                let mut pin = vec![1.0];
                pin.extend(tail);
                (adj, pin)
            })
    }

    proptest! {
        #[test]
        fn matches_double_loop_oracle(
            (adj, pin) in random_graph(),
            x in prop::collection::vec(0.5f64..1.5, 4),
            r in 0.5f64..1.5,
        ) {
            let g = CommGraph::new(adj.clone(), pin.clone()).unwrap();
            for i in 0..4 {
                let e = g.tracking_error(i, &x, r).unwrap();
                let o = brute_force(&adj, &pin, i, &x, r);
                prop_assert!((e - o).abs() <= 1e-12 * (1.0 + o.abs()));
            }
        }

        #[test]
        fn homogeneous_and_translation_invariant(
            (adj, pin) in random_graph(),
            x in prop::collection::vec(0.5f64..1.5, 4),
            r in 0.5f64..1.5,
            lambda in -3.0f64..3.0,
            c in -2.0f64..2.0,
        ) {
            let g = CommGraph::new(adj, pin).unwrap();
            for i in 0..4 {
                let e = g.tracking_error(i, &x, r).unwrap();
                let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
                let es = g.tracking_error(i, &scaled, lambda * r).unwrap();
                prop_assert!((es - lambda * e).abs() < 1e-12);
                let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
                let et = g.tracking_error(i, &shifted, r + c).unwrap();
                prop_assert!((et - e).abs() < 1e-12);
            }
        }
    }
}
