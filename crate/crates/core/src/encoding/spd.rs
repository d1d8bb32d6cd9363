use std::collections::VecDeque;

use serde::Serialize;

use crate::autodiff::Tensor;
use crate::graph::Topology;
use crate::scalar::Scalar;

/// Default clip for shortest-path distances.
pub const DEFAULT_MAX_SPD: usize = 20;

/// All-pairs hop counts; disconnected pairs hold [`SpdMatrix::UNREACHABLE`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpdMatrix {
    n: usize,
    data: Vec<u32>,
}

impl SpdMatrix {
    pub const UNREACHABLE: u32 = u32::MAX;

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.n + j]
    }

    /// Rows with `-1` for unreachable pairs.
    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| match self.get(i, j) {
                        Self::UNREACHABLE => -1,
                        d => d as i64,
                    })
                    .collect()
            })
            .collect()
    }
}

/// Breadth-first search from every node.
pub fn spd_matrix<G: Topology>(g: &G) -> SpdMatrix {
    let n = g.node_count();
    let mut data = vec![SpdMatrix::UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        let row = &mut data[src * n..(src + 1) * n];
        row[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let next = row[u] + 1;
            for &v in g.neighbors(u) {
                if row[v] == SpdMatrix::UNREACHABLE {
                    row[v] = next;
                    queue.push_back(v);
                }
            }
        }
    }
    SpdMatrix { n, data }
}

/// Table slot of a hop count: clipped at `max_spd`, unreachable in the last slot.
pub fn spd_slot(spd: u32, max_spd: usize) -> usize {
    if spd == SpdMatrix::UNREACHABLE {
        max_spd + 1
    } else {
        (spd as usize).min(max_spd)
    }
}

/// Learnable scalar per clipped hop count plus one unreachable slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdEncoder<T> {
    pub max_spd: usize,
    pub table: Vec<T>,
}

impl<T: Scalar> SpdEncoder<T> {
    pub fn new(max_spd: usize, table: Vec<T>) -> Option<Self> {
        (table.len() == max_spd + 2).then_some(Self { max_spd, table })
    }

    pub fn zeros(max_spd: usize) -> Self {
        Self { max_spd, table: vec![T::zero(); max_spd + 2] }
    }

    pub fn lookup(&self, spd: u32) -> T {
        self.table[spd_slot(spd, self.max_spd)]
    }
}

pub fn spd_encoding<T: Scalar>(spd: &SpdMatrix, enc: &SpdEncoder<T>) -> Tensor<T> {
    Tensor::from_fn(spd.n(), spd.n(), |i, j| enc.lookup(spd.get(i, j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bonds::{Bond, BondSet};
    use crate::graph::build_atom_graph_n;

    fn graph(n: usize, pairs: &[(usize, usize)]) -> crate::graph::AtomGraph {
        let b = BondSet::new(n, pairs.iter().map(|&(i, j)| Bond { i, j, length: 1.0 })).unwrap();
        build_atom_graph_n(n, &b).unwrap()
    }

    #[test]
    fn path_and_disconnected() {
        let spd = spd_matrix(&graph(4, &[(0, 1), (1, 2), (2, 3)]));
        assert_eq!(spd.get(0, 3), 3);
        assert_eq!(spd.get(3, 0), 3);
        assert_eq!(spd.get(2, 2), 0);
        let spd = spd_matrix(&graph(2, &[]));
        assert_eq!(spd.get(0, 1), SpdMatrix::UNREACHABLE);
        assert_eq!(spd.to_rows(), vec![vec![0, -1], vec![-1, 0]]);
    }

    #[test]
    fn encoding_lookup() {
        let mut enc = SpdEncoder::<f64>::zeros(20);
        enc.table[0] = 0.5;
        let spd = spd_matrix(&graph(1, &[]));
        assert_eq!(spd_encoding(&spd, &enc).data(), &[0.5]);
        enc.table[20] = 7.0;
        enc.table[21] = -1.0;
        assert_eq!(enc.lookup(25), 7.0);
        assert_eq!(enc.lookup(SpdMatrix::UNREACHABLE), -1.0);
        assert!(SpdEncoder::new(3, vec![0.0f64; 4]).is_none());
    }

    #[test]
    fn hand_lookup_three_by_three() {
        // Path 0-1-2 plus table [10, 20, 30, ..].
        let spd = spd_matrix(&graph(3, &[(0, 1), (1, 2)]));
        let enc = SpdEncoder::new(2, vec![10.0, 20.0, 30.0, 99.0]).unwrap();
        let phi = spd_encoding(&spd, &enc);
        assert_eq!(phi.data(), &[10.0, 20.0, 30.0, 20.0, 10.0, 20.0, 30.0, 20.0, 10.0]);
    }
}
