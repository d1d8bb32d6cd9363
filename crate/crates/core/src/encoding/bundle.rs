//! Dense bias matrices for inspection and export.

use serde_json::{json, Value};

use crate::autodiff::Tensor;
use crate::chem::Molecule;
use crate::error::Result;
use crate::graph::{AtomGraph, BondGraph, BondNode, BoolMatrix};
use crate::masks::MaskMatrices;
use crate::scalar::Scalar;

use super::features::atom_categories;
use super::kernel::{distance_encoding, GaussianKernelBank};
use super::spd::{spd_encoding, spd_matrix, SpdEncoder, SpdMatrix};
use super::torsion::{cosine_matrix, torsion_matrix};
use super::vocab::Vocabulary;

/// Every learned encoder that feeds the attention biases.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSet<T> {
    pub vocab: Vocabulary,
    pub atom_dist: GaussianKernelBank<T>,
    pub bond_dist: GaussianKernelBank<T>,
    pub bond_tors: GaussianKernelBank<T>,
    pub cross_dist: GaussianKernelBank<T>,
    pub atom_spd: SpdEncoder<T>,
    pub bond_spd: SpdEncoder<T>,
    pub use_torsion: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingBundle<T> {
    /// `N x N`.
    pub phi_atom: Tensor<T>,
    /// `M x M`.
    pub phi_bond: Tensor<T>,
    /// `N x M`.
    pub phi_a2b: Tensor<T>,
    /// `M x N`.
    pub phi_b2a: Tensor<T>,
    pub mask_atom: BoolMatrix,
    pub mask_bond: BoolMatrix,
    pub spd_atom: SpdMatrix,
    pub spd_bond: SpdMatrix,
    pub cosines: Tensor<f64>,
}

pub fn assemble_bundle<T: Scalar>(
    m: &Molecule,
    g: &AtomGraph,
    bg: &BondGraph,
    nodes: &[BondNode],
    enc: &EncoderSet<T>,
    cutoff: f64,
) -> Result<EncodingBundle<T>> {
    let v = &enc.vocab;
    let pos = m.positions();
    let mids: Vec<_> = nodes.iter().map(|b| b.midpoint).collect();
    let cats = atom_categories(m, v)?;
    let types: Vec<usize> = nodes.iter().map(|b| v.bond_type(cats[b.atom_i], cats[b.atom_j])).collect();

    let spd_atom = spd_matrix(g);
    let spd_bond = spd_matrix(bg);

    let mut phi_atom = distance_encoding(&pos, &pos, |i, j| v.atom_pair_slot(cats[i], cats[j]), &enc.atom_dist)?;
    phi_atom.add_assign(&spd_encoding(&spd_atom, &enc.atom_spd))?;

    let bond_slot = |a: usize, b: usize| v.bond_pair_slot(types[a], types[b]);
    let mut phi_bond = distance_encoding(&mids, &mids, bond_slot, &enc.bond_dist)?;
    phi_bond.add_assign(&spd_encoding(&spd_bond, &enc.bond_spd))?;
    if enc.use_torsion {
        phi_bond.add_assign(&torsion_matrix(bg, nodes, &enc.bond_tors, bond_slot)?)?;
    }

    let phi_a2b = distance_encoding(&pos, &mids, |i, b| v.cross_slot(cats[i], types[b]), &enc.cross_dist)?;
    let phi_b2a = distance_encoding(&mids, &pos, |b, i| v.cross_slot(cats[i], types[b]), &enc.cross_dist)?;

    let masks = MaskMatrices::new(m, bg, cutoff);
    Ok(EncodingBundle {
        phi_atom,
        phi_bond,
        phi_a2b,
        phi_b2a,
        mask_atom: masks.atom,
        mask_bond: masks.bond,
        spd_atom,
        spd_bond,
        cosines: cosine_matrix(bg, nodes)?,
    })
}

impl<T: Scalar> EncodingBundle<T> {
    pub fn n_atoms(&self) -> usize {
        self.phi_atom.rows()
    }

    pub fn n_bonds(&self) -> usize {
        self.phi_bond.rows()
    }

    pub fn is_finite(&self) -> bool {
        [&self.phi_atom, &self.phi_bond, &self.phi_a2b, &self.phi_b2a].iter().all(|t| t.is_finite())
    }

    /// Dense row-major matrices with a shape header.
    pub fn to_json(&self) -> Value {
        let (n, m) = (self.n_atoms(), self.n_bonds());
        json!({
            "n_atoms": n,
            "n_bonds": m,
            "shapes": {
                "phi_atom": [n, n],
                "phi_bond": [m, m],
                "phi_a2b": [n, m],
                "phi_b2a": [m, n],
                "mask_atom": [n, n],
                "mask_bond": [m, m],
                "spd_atom": [n, n],
                "spd_bond": [m, m],
                "cosines": [m, m],
            },
            "phi_atom": self.phi_atom.to_rows_f64(),
            "phi_bond": self.phi_bond.to_rows_f64(),
            "phi_a2b": self.phi_a2b.to_rows_f64(),
            "phi_b2a": self.phi_b2a.to_rows_f64(),
            "mask_atom": self.mask_atom.to_rows(),
            "mask_bond": self.mask_bond.to_rows(),
            "spd_atom": self.spd_atom.to_rows(),
            "spd_bond": self.spd_bond.to_rows(),
            "cosines": self.cosines.to_rows_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bonds::{predict_bonds, DEFAULT_ALPHA};
    use crate::chem::{parse_xyz, CovalentRadiiTable};
    use crate::graph::{bond_geometry, build_atom_graph, build_line_graph};
    use crate::masks::DEFAULT_CUTOFF;

    fn encoders(w2: f64) -> EncoderSet<f64> {
        let v = Vocabulary::default();
        let bank = |width, slots| {
            let mut b = GaussianKernelBank::new(8, width, slots);
            b.w2 = Tensor::filled(8, 1, w2);
            b
        };
        EncoderSet {
            atom_dist: bank(10.0, v.atom_pair_slots()),
            bond_dist: bank(10.0, v.bond_pair_slots()),
            bond_tors: bank(2.0, v.bond_pair_slots()),
            cross_dist: bank(10.0, v.cross_slots()),
            atom_spd: SpdEncoder::new(3, vec![0.5, 0.25, 0.125, 0.0625, -1.0]).unwrap(),
            bond_spd: SpdEncoder::new(3, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            vocab: v,
            use_torsion: true,
        }
    }

    fn bundle(xyz: &str, enc: &EncoderSet<f64>) -> EncodingBundle<f64> {
        let m = parse_xyz(xyz).unwrap();
        let b = predict_bonds(&m, &CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap();
        let g = build_atom_graph(&m, &b).unwrap();
        let bg = build_line_graph(&g, &b).unwrap();
        let nodes = bond_geometry(&m, &b).unwrap();
        assemble_bundle(&m, &g, &bg, &nodes, enc, DEFAULT_CUTOFF).unwrap()
    }

    const WATER: &str = "3\nwater\nO 0 0 0\nH 0.9572 0 0\nH -0.2399 0.9266 0";

    #[test]
    fn water_shapes_and_symmetry() {
        let b = bundle(WATER, &encoders(0.3));
        assert_eq!(b.phi_atom.shape(), [3, 3]);
        assert_eq!(b.phi_bond.shape(), [2, 2]);
        assert_eq!(b.phi_a2b.shape(), [3, 2]);
        assert_eq!(b.phi_b2a.shape(), [2, 3]);
        assert!(b.is_finite());
        assert!(b.phi_atom.max_abs_diff(&b.phi_atom.transpose()) <= 1e-9);
        assert!(b.phi_bond.max_abs_diff(&b.phi_bond.transpose()) <= 1e-9);
        assert_eq!(b.phi_a2b.transpose(), b.phi_b2a);
        assert!(b.mask_atom.is_symmetric() && b.mask_bond.is_symmetric());
    }

    #[test]
    fn zero_projection_leaves_spd_part() {
        let b = bundle(WATER, &encoders(0.0));
        assert_eq!(b.phi_atom.to_rows_f64(), vec![vec![0.5, 0.25, 0.25], vec![0.25, 0.5, 0.125], vec![0.25, 0.125, 0.5]]);
        assert_eq!(b.phi_bond.to_rows_f64(), vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(b.phi_a2b.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_atom() {
        let b = bundle("1\n\nNe 0 0 0", &encoders(0.3));
        assert_eq!(b.phi_atom.shape(), [1, 1]);
        assert_eq!(b.phi_bond.shape(), [0, 0]);
        assert_eq!(b.phi_a2b.shape(), [1, 0]);
        let json = b.to_json();
        assert_eq!(json["shapes"]["phi_bond"], json!([0, 0]));
    }
}
