use crate::chem::Element;
use crate::error::{Error, Result};

/// Index of the unordered pair `(a, b)` among `n` categories.
pub(crate) fn tri(a: usize, b: usize, n: usize) -> usize {
    let (a, b) = (a.min(b), a.max(b));
    a * (2 * n - a + 1) / 2 + (b - a)
}

/// Elements the model distinguishes. Everything else shares one "other"
/// category, and any pair involving it uses a single fallback slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    elements: Vec<Element>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_symbols(&crate::chem::CovalentRadiiTable::REQUIRED).expect("required symbols are valid")
    }
}

impl Vocabulary {
    pub fn from_symbols<S: AsRef<str>>(symbols: &[S]) -> Result<Self> {
        let mut elements = Vec::with_capacity(symbols.len());
        for s in symbols {
            let e = Element::from_symbol(s.as_ref()).ok_or_else(|| Error::UnknownElement(s.as_ref().to_string()))?;
            if elements.contains(&e) {
                return Err(Error::Config(format!("element {e} listed twice in vocabulary")));
            }
            elements.push(e);
        }
        if elements.is_empty() {
            return Err(Error::Config("empty vocabulary".into()));
        }
        Ok(Self { elements })
    }

    pub fn symbols(&self) -> Vec<&'static str> {
        self.elements.iter().map(|e| e.symbol()).collect()
    }

    pub fn known(&self) -> usize {
        self.elements.len()
    }

    /// Known elements plus "other".
    pub fn atom_categories(&self) -> usize {
        self.known() + 1
    }

    pub fn other(&self) -> usize {
        self.known()
    }

    /// Category of an atom feature id (atomic number); 0 and ids above 118
    /// are rejected.
    pub fn atom_category(&self, feature_id: u32) -> Result<usize> {
        let element = u8::try_from(feature_id)
            .ok()
            .and_then(Element::from_atomic_number)
            .ok_or(Error::IndexOutOfRange { what: "atomic numbers", index: feature_id as usize, len: 119 })?;
        Ok(self.elements.iter().position(|&e| e == element).unwrap_or(self.other()))
    }

    pub fn atom_pair_slots(&self) -> usize {
        tri(self.known() - 1, self.known() - 1, self.known()) + 2
    }

    fn atom_fallback(&self) -> usize {
        self.atom_pair_slots() - 1
    }

    pub fn atom_pair_slot(&self, a: usize, b: usize) -> usize {
        if a >= self.known() || b >= self.known() {
            self.atom_fallback()
        } else {
            tri(a, b, self.known())
        }
    }

    /// A bond's type is the unordered element pair of its endpoints.
    pub fn bond_types(&self) -> usize {
        self.atom_pair_slots()
    }

    pub fn bond_type(&self, a: usize, b: usize) -> usize {
        self.atom_pair_slot(a, b)
    }

    fn known_bond_types(&self) -> usize {
        self.bond_types() - 1
    }

    pub fn bond_pair_slots(&self) -> usize {
        let k = self.known_bond_types();
        tri(k - 1, k - 1, k) + 2
    }

    pub fn bond_pair_slot(&self, s: usize, t: usize) -> usize {
        let k = self.known_bond_types();
        if s >= k || t >= k {
            self.bond_pair_slots() - 1
        } else {
            tri(s, t, k)
        }
    }

    /// Slots for (atom category, bond type) pairs.
    pub fn cross_slots(&self) -> usize {
        self.known() * self.known_bond_types() + 1
    }

    pub fn cross_slot(&self, atom: usize, bond_type: usize) -> usize {
        let k = self.known_bond_types();
        if atom >= self.known() || bond_type >= k {
            self.cross_slots() - 1
        } else {
            atom * k + bond_type
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_indices_are_dense() {
        let n = 5;
        let mut seen: Vec<usize> = (0..n).flat_map(|a| (a..n).map(move |b| tri(a, b, n))).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..15).collect::<Vec<_>>());
        assert_eq!(tri(3, 1, n), tri(1, 3, n));
    }

    #[test]
    fn slot_counts() {
        let v = Vocabulary::from_symbols(&["H", "C", "O"]).unwrap();
        assert_eq!(v.atom_categories(), 4);
        assert_eq!(v.atom_pair_slots(), 7);
        assert_eq!(v.bond_pair_slots(), 22);
        assert_eq!(v.cross_slots(), 19);
        assert_eq!(v.atom_pair_slot(0, 3), 6);
        assert_eq!(v.atom_pair_slot(2, 1), v.atom_pair_slot(1, 2));
        assert_eq!(v.bond_pair_slot(6, 0), 21);
        assert_eq!(v.cross_slot(2, 5), 17);
        assert_eq!(v.cross_slot(3, 0), 18);
    }

    #[test]
    fn categories() {
        let v = Vocabulary::default();
        assert_eq!(v.atom_category(1).unwrap(), 0);
        assert_eq!(v.atom_category(78).unwrap(), 10);
        assert_eq!(v.atom_category(26).unwrap(), v.other());
        assert!(v.atom_category(0).is_err());
        assert!(v.atom_category(500).is_err());
        assert!(Vocabulary::from_symbols(&["H", "H"]).is_err());
        assert!(Vocabulary::from_symbols::<&str>(&[]).is_err());
    }
}
