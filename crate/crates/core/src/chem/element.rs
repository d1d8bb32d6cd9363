use std::fmt;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Radii shipped with the crate.
pub const DEFAULT_RADII: &str = include_str!("../../data/covalent_radii.txt");

/// Chemical element identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element {
    atomic_number: u8,
}

impl Element {
    /// Looks up a symbol, accepting any capitalisation (`CL`, `cl`, `Cl`).
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        let mut chars = symbol.chars();
        let first = chars.next()?;
        let canonical: String = first
            .to_uppercase()
            .chain(chars.flat_map(char::to_lowercase))
            .collect();
        SYMBOLS
            .iter()
            .position(|s| *s == canonical)
            .map(|i| Element { atomic_number: (i + 1) as u8 })
    }

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (1..=SYMBOLS.len() as u8).contains(&z).then_some(Element { atomic_number: z })
    }

    pub fn symbol(self) -> &'static str {
        SYMBOLS[self.atomic_number as usize - 1]
    }

    pub fn atomic_number(self) -> u8 {
        self.atomic_number
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Per-element single-bond covalent radii in Å.
#[derive(Debug, Clone, PartialEq)]
pub struct CovalentRadiiTable {
    entries: IndexMap<Element, f64>,
}

impl CovalentRadiiTable {
    /// Elements every table must provide.
    pub const REQUIRED: [&'static str; 11] = ["H", "C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "Pt"];

    /// Parses the `symbol radius` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = IndexMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: idx + 1, message };
            let mut fields = line.split_whitespace();
            let (Some(sym), Some(r), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err(format!("expected `symbol radius`, got `{line}`")));
            };
            let element = Element::from_symbol(sym).ok_or_else(|| err(format!("unknown element `{sym}`")))?;
            let radius: f64 = r.parse().map_err(|_| err(format!("bad radius `{r}`")))?;
            if !(radius > 0.0 && radius < 3.0) {
                return Err(err(format!("radius {radius} for {sym} outside (0, 3) Å")));
            }
            if entries.insert(element, radius).is_some() {
                return Err(err(format!("duplicate entry for {sym}")));
            }
        }
        for sym in Self::REQUIRED {
            let element = Element::from_symbol(sym).expect("required symbols are valid");
            if !entries.contains_key(&element) {
                return Err(Error::RadiiTable(format!("missing required element {sym}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn radius(&self, element: Element) -> Result<f64> {
        self.entries
            .get(&element)
            .copied()
            .ok_or_else(|| Error::MissingRadius(element.symbol().to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Element, f64)> + '_ {
        self.entries.iter().map(|(e, r)| (*e, *r))
    }
}

impl Default for CovalentRadiiTable {
    fn default() -> Self {
        Self::parse(DEFAULT_RADII).expect("shipped radii table is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_round_trip_atomic_numbers() {
        for z in 1..=118u8 {
            let e = Element::from_atomic_number(z).unwrap();
            assert_eq!(Element::from_symbol(e.symbol()), Some(e));
        }
        assert_eq!(Element::from_symbol("CL").unwrap().atomic_number(), 17);
        assert_eq!(Element::from_symbol("Xx"), None);
        assert_eq!(Element::from_symbol(""), None);
        assert_eq!(Element::from_atomic_number(0), None);
    }

    #[test]
    fn shipped_table_covers_required_elements() {
        let table = CovalentRadiiTable::default();
        for sym in CovalentRadiiTable::REQUIRED {
            let r = table.radius(Element::from_symbol(sym).unwrap()).unwrap();
            assert!(r > 0.0 && r < 3.0);
        }
        let o = Element::from_symbol("O").unwrap();
        let h = Element::from_symbol("H").unwrap();
        assert_eq!(table.radius(o).unwrap(), 0.66);
        assert_eq!(table.radius(h).unwrap(), 0.31);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            CovalentRadiiTable::parse("H 0.31\nC nope\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(CovalentRadiiTable::parse("H 3.5"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(CovalentRadiiTable::parse("H 0.31"), Err(Error::RadiiTable(_))));
    }

    #[test]
    fn missing_radius_names_symbol() {
        let table = CovalentRadiiTable::default();
        let og = Element::from_symbol("Og").unwrap();
        match table.radius(og) {
            Err(Error::MissingRadius(s)) => assert_eq!(s, "Og"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
