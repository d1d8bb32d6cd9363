//! Bond perception from covalent radii and interatomic distances.

use serde::Serialize;

use crate::chem::{distance, CovalentRadiiTable, Molecule};
use crate::error::{Error, Result};

/// Default bonding threshold factor.
pub const DEFAULT_ALPHA: f64 = 1.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    /// Å.
    pub length: f64,
}

impl Bond {
    /// Canonical ordered key `(min, max)`.
    pub fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.i == atom || self.j == atom
    }

    /// The atom shared with `other`, if exactly one is shared.
    pub fn shared_atom(&self, other: &Bond) -> Option<usize> {
        let (a, b) = self.key();
        let (c, d) = other.key();
        match (a == c || a == d, b == c || b == d) {
            (true, false) => Some(a),
            (false, true) => Some(b),
            _ => None,
        }
    }
}

/// Bonds sorted by key with no duplicates; `i < j` for every entry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BondSet {
    bonds: Vec<Bond>,
}

impl BondSet {
    /// Canonicalises, sorts and validates against `n_atoms`.
    pub fn new(n_atoms: usize, bonds: impl IntoIterator<Item = Bond>) -> Result<Self> {
        let mut bonds: Vec<Bond> = bonds
            .into_iter()
            .map(|b| {
                let (i, j) = b.key();
                Bond { i, j, length: b.length }
            })
            .collect();
        for b in &bonds {
            if b.j >= n_atoms {
                return Err(Error::IndexOutOfRange { what: "atoms", index: b.j, len: n_atoms });
            }
            if b.i == b.j {
                return Err(Error::Geometry(format!("self bond on atom {}", b.i)));
            }
            if !(b.length > 0.0) {
                return Err(Error::Geometry(format!("bond ({}, {}) has non-positive length", b.i, b.j)));
            }
        }
        bonds.sort_by_key(Bond::key);
        if let Some(w) = bonds.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::Geometry(format!("duplicate bond {:?}", w[0].key())));
        }
        Ok(Self { bonds })
    }

    /// Bonds given only by index pairs; lengths are taken from `m`.
    pub fn from_pairs(m: &Molecule, pairs: &[(usize, usize)]) -> Result<Self> {
        let n = m.len();
        let bonds = pairs
            .iter()
            .map(|&(i, j)| {
                if i >= n || j >= n {
                    return Err(Error::IndexOutOfRange { what: "atoms", index: i.max(j), len: n });
                }
                Ok(Bond { i, j, length: distance(&m.atoms()[i], &m.atoms()[j]) })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, bonds)
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    pub fn keys(&self) -> Vec<(usize, usize)> {
        self.bonds.iter().map(Bond::key).collect()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.bonds.binary_search_by_key(&key, Bond::key).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Bond> {
        self.bonds.iter()
    }
}

impl<'a> IntoIterator for &'a BondSet {
    type Item = &'a Bond;
    type IntoIter = std::slice::Iter<'a, Bond>;

    fn into_iter(self) -> Self::IntoIter {
        self.bonds.iter()
    }
}

/// Pair `(i, j)` is bonded iff `d_ij <= alpha * (r_i + r_j)`.
pub fn predict_bonds(m: &Molecule, radii: &CovalentRadiiTable, alpha: f64) -> Result<BondSet> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("bond threshold factor must be positive, got {alpha}")));
    }
    let atoms = m.atoms();
    let r: Vec<f64> = atoms.iter().map(|a| radii.radius(a.element)).collect::<Result<_>>()?;
    let mut bonds = Vec::new();
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            let d = distance(&atoms[i], &atoms[j]);
            if d <= alpha * (r[i] + r[j]) {
                bonds.push(Bond { i, j, length: d });
            }
        }
    }
    // Already sorted by (i, j) and unique.
    Ok(BondSet { bonds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{parse_xyz, Atom, Element};

    fn water() -> Molecule {
        parse_xyz("3\nwater\nO 0 0 0\nH 0.9572 0 0\nH -0.2399 0.9266 0").unwrap()
    }

    #[test]
    fn water_has_two_oh_bonds() {
        let b = predict_bonds(&water(), &CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap();
        assert_eq!(b.keys(), vec![(0, 1), (0, 2)]);
        assert!((b.bonds()[0].length - 0.9572).abs() < 1e-15);
    }

    #[test]
    fn single_atom_has_no_bonds() {
        let m = parse_xyz("1\n\nC 0 0 0").unwrap();
        assert!(predict_bonds(&m, &CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap().is_empty());
    }

    #[test]
    fn threshold_is_inclusive() {
        let radii = CovalentRadiiTable::default();
        let h = Element::from_symbol("H").unwrap();
        let threshold = DEFAULT_ALPHA * (0.31 + 0.31);
        let m = Molecule::new("hh", vec![Atom::new(h, [0.0; 3]), Atom::new(h, [threshold, 0.0, 0.0])], None).unwrap();
        assert_eq!(predict_bonds(&m, &radii, DEFAULT_ALPHA).unwrap().len(), 1);
        let far = threshold * (1.0 + 1e-12);
        let m = Molecule::new("hh", vec![Atom::new(h, [0.0; 3]), Atom::new(h, [far, 0.0, 0.0])], None).unwrap();
        assert!(predict_bonds(&m, &radii, DEFAULT_ALPHA).unwrap().is_empty());
    }

    #[test]
    fn missing_radius_is_reported() {
        let radii = CovalentRadiiTable::default();
        let og = Element::from_symbol("Og").unwrap();
        let h = Element::from_symbol("H").unwrap();
        let m = Molecule::new("x", vec![Atom::new(h, [0.0; 3]), Atom::new(og, [1.0, 0.0, 0.0])], None).unwrap();
        assert!(matches!(predict_bonds(&m, &radii, 1.15), Err(Error::MissingRadius(s)) if s == "Og"));
        assert!(predict_bonds(&water(), &radii, 0.0).is_err());
    }

    #[test]
    fn bondset_canonicalises_and_rejects_duplicates() {
        let m = water();
        let b = BondSet::from_pairs(&m, &[(2, 0), (1, 0)]).unwrap();
        assert_eq!(b.keys(), vec![(0, 1), (0, 2)]);
        assert!(b.contains(2, 0));
        assert!(!b.contains(1, 2));
        assert!(BondSet::from_pairs(&m, &[(0, 1), (1, 0)]).is_err());
        assert!(BondSet::from_pairs(&m, &[(0, 3)]).is_err());
    }

    #[test]
    fn shared_atom() {
        let a = Bond { i: 0, j: 1, length: 1.0 };
        let b = Bond { i: 1, j: 2, length: 1.0 };
        let c = Bond { i: 2, j: 3, length: 1.0 };
        assert_eq!(a.shared_atom(&b), Some(1));
        assert_eq!(a.shared_atom(&c), None);
        assert_eq!(a.shared_atom(&a), None);
    }
}
