//! Molecule JSON documents:
//! `{"name": ..., "atoms": [{"symbol": "H", "xyz": [x, y, z]}, ...], "target": eV}`.

use serde::{Deserialize, Serialize};

use super::element::Element;
use super::molecule::{Atom, Molecule, Vec3, DUPLICATE_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct MoleculeDoc {
    #[serde(default)]
    name: String,
    atoms: Vec<AtomDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomDoc {
    symbol: String,
    xyz: Vec3,
}

fn json_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Json { path: path.into(), message: message.into() }
}

pub fn parse_molecule_json(text: &str) -> Result<Molecule> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: MoleculeDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        json_err(if path == "." { "$".into() } else { format!("$.{path}") }, e.inner().to_string())
    })?;
    if doc.atoms.is_empty() {
        return Err(json_err("$.atoms", "at least one atom is required"));
    }
    let mut atoms = Vec::with_capacity(doc.atoms.len());
    for (i, a) in doc.atoms.iter().enumerate() {
        let element = Element::from_symbol(&a.symbol)
            .ok_or_else(|| json_err(format!("$.atoms[{i}].symbol"), format!("unknown element `{}`", a.symbol)))?;
        if !a.xyz.iter().all(|c| c.is_finite()) {
            return Err(json_err(format!("$.atoms[{i}].xyz"), "non-finite coordinate"));
        }
        if let Some(j) = atoms
            .iter()
            .position(|b: &Atom| super::molecule::euclidean(b.position, a.xyz) <= DUPLICATE_TOLERANCE)
        {
            return Err(json_err(format!("$.atoms[{i}].xyz"), format!("duplicates the position of atom {j}")));
        }
        atoms.push(Atom::new(element, a.xyz));
    }
    if doc.target.is_some_and(|t| !t.is_finite()) {
        return Err(json_err("$.target", "target is not finite"));
    }
    Molecule::new(doc.name, atoms, doc.target).map_err(|e| json_err("$", e.to_string()))
}

pub fn emit_molecule_json(m: &Molecule) -> String {
    let doc = MoleculeDoc {
        name: m.name().to_string(),
        atoms: m
            .atoms()
            .iter()
            .map(|a| AtomDoc { symbol: a.element.symbol().to_string(), xyz: a.position })
            .collect(),
        target: m.target(),
    };
    serde_json::to_string(&doc).expect("molecule documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const H2: &str = r#"{"name":"h2","atoms":[{"symbol":"H","xyz":[0,0,0]},{"symbol":"H","xyz":[0.74,0,0]}]}"#;

    #[test]
    fn minimal_schema() {
        let m = parse_molecule_json(H2).unwrap();
        assert_eq!(m.name(), "h2");
        assert_eq!(m.len(), 2);
        assert_eq!(m.target(), None);
        assert_eq!(m.atoms()[1].position, [0.74, 0.0, 0.0]);
    }

    #[test]
    fn target_passes_through() {
        let text = H2.replace(r#""atoms""#, r#""target":1.5,"atoms""#);
        assert_eq!(parse_molecule_json(&text).unwrap().target(), Some(1.5));
    }

    #[test]
    fn empty_atoms_rejected() {
        match parse_molecule_json(r#"{"atoms":[]}"#) {
            Err(Error::Json { path, .. }) => assert_eq!(path, "$.atoms"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_paths() {
        let bad = r#"{"name":"x","atoms":[{"symbol":"H","xyz":[0,0,0]},{"symbol":"H","xyz":[1,"a",0]}]}"#;
        match parse_molecule_json(bad) {
            Err(Error::Json { path, .. }) => assert!(path.starts_with("$.atoms[1].xyz"), "{path}"),
            other => panic!("unexpected {other:?}"),
        }
        let unknown = r#"{"atoms":[{"symbol":"Qq","xyz":[0,0,0]}]}"#;
        match parse_molecule_json(unknown) {
            Err(Error::Json { path, .. }) => assert_eq!(path, "$.atoms[0].symbol"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_molecule_json("{"), Err(Error::Json { .. })));
    }

    #[test]
    fn emitted_json_reparses() {
        let m = parse_molecule_json(&H2.replace(r#""atoms""#, r#""target":-0.123456789012,"atoms""#)).unwrap();
        let again = parse_molecule_json(&emit_molecule_json(&m)).unwrap();
        assert_eq!(m, again);
    }
}
