//! Structure-aware attention masks (`true` = attention allowed).

use crate::chem::{euclidean, Molecule};
use crate::graph::{BondGraph, BoolMatrix, Topology};

pub const DEFAULT_CUTOFF: f64 = 5.0;

/// Bonds further apart than this in the line graph never attend to each other.
pub const BOND_MASK_HOPS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrices {
    pub atom: BoolMatrix,
    pub bond: BoolMatrix,
}

impl MaskMatrices {
    pub fn new(m: &Molecule, bg: &BondGraph, cutoff: f64) -> Self {
        Self { atom: atom_mask(m, cutoff), bond: bond_mask(bg) }
    }
}

/// Atoms attend to each other when strictly closer than `cutoff` Å.
pub fn atom_mask(m: &Molecule, cutoff: f64) -> BoolMatrix {
    let pos = m.positions();
    BoolMatrix::from_fn(pos.len(), pos.len(), |i, j| i == j || euclidean(pos[i], pos[j]) < cutoff)
}

/// Bonds attend to themselves, to line-graph neighbours (shared atom) and to
/// bonds two hops away (joined through one intermediate bond).
pub fn bond_mask(bg: &BondGraph) -> BoolMatrix {
    let m = bg.n_bonds();
    let mut mask = BoolMatrix::new(m, m);
    for src in 0..m {
        for dst in within_hops(bg, src, BOND_MASK_HOPS) {
            mask.set(src, dst, true);
        }
    }
    mask
}

/// Nodes within `hops` of `src`, including `src`.
pub(crate) fn within_hops<G: Topology>(g: &G, src: usize, hops: usize) -> Vec<usize> {
    let mut seen = vec![src];
    let mut frontier = vec![src];
    for _ in 0..hops {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in g.neighbors(u) {
                if !seen.contains(&v) {
                    seen.push(v);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    seen.sort_unstable();
    seen
}
