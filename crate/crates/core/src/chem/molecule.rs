use super::element::Element;
use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Positions closer than this are treated as the same point.
pub const DUPLICATE_TOLERANCE: f64 = 1e-6;

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn midpoint(a: Vec3, b: Vec3) -> Vec3 {
    [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5, (a[2] + b[2]) * 0.5]
}

pub fn euclidean(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: Element,
    /// Cartesian position in Å.
    pub position: Vec3,
    /// Embedding category; the atomic number unless set otherwise.
    pub feature_id: u32,
}

impl Atom {
    pub fn new(element: Element, position: Vec3) -> Self {
        Self { element, position, feature_id: element.atomic_number() as u32 }
    }
}

/// Euclidean distance between two atoms in Å.
pub fn distance(a: &Atom, b: &Atom) -> f64 {
    euclidean(a.position, b.position)
}

/// A validated set of atoms. Construction fails rather than producing a
/// partially valid molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    name: String,
    atoms: Vec<Atom>,
    target: Option<f64>,
}

impl Molecule {
    pub fn new(name: impl Into<String>, atoms: Vec<Atom>, target: Option<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMolecule("at least one atom is required".into()));
        }
        if let Some((i, _)) = atoms.iter().enumerate().find(|(_, a)| !a.position.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMolecule(format!("atom {i} has a non-finite coordinate")));
        }
        if let Some(t) = target {
            if !t.is_finite() {
                return Err(Error::InvalidMolecule("target is not finite".into()));
            }
        }
        if let Some((i, j)) = first_duplicate(&atoms) {
            return Err(Error::InvalidMolecule(format!("atoms {i} and {j} share a position")));
        }
        Ok(Self { name: name.into(), atoms, target })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn target(&self) -> Option<f64> {
        self.target
    }

    pub fn with_target(mut self, target: Option<f64>) -> Self {
        self.target = target;
        self
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    /// Same atoms with new positions; revalidated.
    pub fn with_positions(&self, positions: &[Vec3]) -> Result<Self> {
        if positions.len() != self.atoms.len() {
            return Err(Error::InvalidMolecule(format!(
                "{} positions for {} atoms",
                positions.len(),
                self.atoms.len()
            )));
        }
        let atoms = self
            .atoms
            .iter()
            .zip(positions)
            .map(|(a, p)| Atom { position: *p, ..a.clone() })
            .collect();
        Molecule::new(self.name.clone(), atoms, self.target)
    }

    /// Reorders atoms so that new atom `k` is old atom `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        for &o in order {
            if o >= n || std::mem::replace(&mut seen[o], true) {
                return Err(Error::InvalidMolecule("not a permutation".into()));
            }
        }
        if order.len() != n {
            return Err(Error::InvalidMolecule("not a permutation".into()));
        }
        let atoms = order.iter().map(|&o| self.atoms[o].clone()).collect();
        Molecule::new(self.name.clone(), atoms, self.target)
    }
}

fn first_duplicate(atoms: &[Atom]) -> Option<(usize, usize)> {
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            if distance(&atoms[i], &atoms[j]) <= DUPLICATE_TOLERANCE {
                return Some((i, j));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(sym: &str, p: Vec3) -> Atom {
        Atom::new(Element::from_symbol(sym).unwrap(), p)
    }

    #[test]
    fn distance_examples() {
        let a = atom("H", [0.0, 0.0, 0.0]);
        let b = atom("H", [0.74, 0.0, 0.0]);
        assert_eq!(distance(&a, &b), 0.74);
        assert_eq!(distance(&a, &a), 0.0);
        let h1 = atom("H", [0.9572, 0.0, 0.0]);
        let h2 = atom("H", [-0.2399, 0.9266, 0.0]);
        let hand = ((0.9572f64 + 0.2399).powi(2) + 0.9266f64.powi(2)).sqrt();
        assert!((distance(&h1, &h2) - hand).abs() < 1e-15);
        assert!((hand - 1.5139).abs() < 1e-4);
    }

    #[test]
    fn feature_id_defaults_to_atomic_number() {
        assert_eq!(atom("O", [0.0; 3]).feature_id, 8);
    }

    #[test]
    fn rejects_empty_duplicate_and_nonfinite() {
        assert!(Molecule::new("x", vec![], None).is_err());
        let dup = vec![atom("H", [0.0; 3]), atom("H", [0.0, 0.0, 5e-7])];
        assert!(Molecule::new("x", dup, None).is_err());
        let bad = vec![atom("H", [f64::NAN, 0.0, 0.0])];
        assert!(Molecule::new("x", bad, None).is_err());
        let ok = vec![atom("H", [0.0; 3]), atom("H", [0.0, 0.0, 2e-6])];
        assert!(Molecule::new("x", ok, None).is_ok());
    }

    #[test]
    fn permutation_validation() {
        let m = Molecule::new("x", vec![atom("H", [0.0; 3]), atom("O", [1.0, 0.0, 0.0])], None).unwrap();
        assert_eq!(m.permuted(&[1, 0]).unwrap().atoms()[0].element.symbol(), "O");
        assert!(m.permuted(&[0, 0]).is_err());
        assert!(m.permuted(&[0]).is_err());
    }
}
