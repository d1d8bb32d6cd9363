//! Angles between bonds.
//!
//! Bonds sharing an atom use the bond angle: both directions re-oriented to
//! point away from the shared atom. Bonds without a common atom use the
//! unsigned cosine between their direction lines, which does not depend on how
//! atoms are numbered.

use crate::autodiff::Tensor;
use crate::chem::dot;
use crate::error::{Error, Result};
use crate::graph::{BondGraph, BondNode};
use crate::scalar::Scalar;

use super::kernel::GaussianKernelBank;

pub fn bond_pair_cosine(bg: &BondGraph, nodes: &[BondNode], a: usize, b: usize) -> f64 {
    if a == b {
        return 1.0;
    }
    let (na, nb) = (&nodes[a], &nodes[b]);
    match bg.shared_atom(a, b) {
        Some(j) => dot(na.direction_from(j), nb.direction_from(j)).clamp(-1.0, 1.0),
        None => dot(na.direction, nb.direction).abs().min(1.0),
    }
}

/// Dense `M x M` cosine matrix.
pub fn cosine_matrix(bg: &BondGraph, nodes: &[BondNode]) -> Result<Tensor<f64>> {
    let m = bg.n_bonds();
    if nodes.len() != m {
        return Err(Error::Geometry(format!("{} bond nodes for a line graph of {m}", nodes.len())));
    }
    Ok(Tensor::from_fn(m, m, |a, b| bond_pair_cosine(bg, nodes, a, b)))
}

/// Cosines passed through the kernel bank at input `cos + 1`.
pub fn torsion_matrix<T: Scalar>(
    bg: &BondGraph,
    nodes: &[BondNode],
    bank: &GaussianKernelBank<T>,
    slot: impl Fn(usize, usize) -> usize,
) -> Result<Tensor<T>> {
    let cos = cosine_matrix(bg, nodes)?;
    let m = bg.n_bonds();
    let mut out = Tensor::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            out.set(a, b, bank.encode(T::of(cos.get(a, b) + 1.0), slot(a, b))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bonds::BondSet;
    use crate::chem::parse_xyz;
    use crate::graph::{bond_geometry, build_atom_graph, build_line_graph};

    fn setup(xyz: &str, pairs: &[(usize, usize)]) -> (BondGraph, Vec<BondNode>) {
        let m = parse_xyz(xyz).unwrap();
        let b = BondSet::from_pairs(&m, pairs).unwrap();
        let g = build_atom_graph(&m, &b).unwrap();
        (build_line_graph(&g, &b).unwrap(), bond_geometry(&m, &b).unwrap())
    }

    #[test]
    fn orthogonal_and_linear() {
        let (bg, nodes) = setup("3\n\nC 0 0 0\nH 1 0 0\nH 0 1 0", &[(0, 1), (0, 2)]);
        assert_eq!(bond_pair_cosine(&bg, &nodes, 0, 1), 0.0);
        let (bg, nodes) = setup("3\n\nC 0 0 0\nO 1.2 0 0\nO -1.2 0 0", &[(0, 1), (0, 2)]);
        assert_eq!(bond_pair_cosine(&bg, &nodes, 0, 1), -1.0);
        // Shared atom in the middle of the index range: 0-1 and 1-2 collinear.
        let (bg, nodes) = setup("3\n\nC -1.2 0 0\nC 0 0 0\nC 1.2 0 0", &[(0, 1), (1, 2)]);
        assert_eq!(bond_pair_cosine(&bg, &nodes, 0, 1), -1.0);
    }

    #[test]
    fn water_bond_angle() {
        let (bg, nodes) = setup("3\nwater\nO 0 0 0\nH 0.9572 0 0\nH -0.2399 0.9266 0", &[(0, 1), (0, 2)]);
        // Direct vector arithmetic on the coordinates.
        let (h1, h2) = ([0.9572, 0.0, 0.0], [-0.2399f64, 0.9266, 0.0]);
        let direct = dot(h1, h2) / (crate::chem::norm(h1) * crate::chem::norm(h2));
        let c = bond_pair_cosine(&bg, &nodes, 0, 1);
        assert!((c - direct).abs() < 1e-12);
        assert!((c - 104.52f64.to_radians().cos()).abs() < 1e-3);
        assert_eq!(cosine_matrix(&bg, &nodes).unwrap().get(1, 1), 1.0);
    }

    #[test]
    fn non_adjacent_is_unsigned() {
        // 0-1 along +x, 2-3 along -x once the canonical orientation is applied.
        let (bg, nodes) = setup("4\n\nC 0 0 0\nC 1.5 0 0\nC 5 3 0\nC 3.5 3 0", &[(0, 1), (2, 3)]);
        assert_eq!(bond_pair_cosine(&bg, &nodes, 0, 1), 1.0);
    }
}
