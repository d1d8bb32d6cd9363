//! Elements, covalent radii, molecules and their text formats.

mod element;
mod json;
mod molecule;
mod xyz;

pub use element::{CovalentRadiiTable, Element, DEFAULT_RADII};
pub use json::{emit_molecule_json, parse_molecule_json};
pub use molecule::{distance, dot, euclidean, midpoint, norm, scale, sub, Atom, Molecule, Vec3, DUPLICATE_TOLERANCE};
pub use xyz::{emit_xyz, parse_xyz};

use std::path::Path;

use crate::error::Result;

/// Reads a molecule, choosing the parser from the file extension
/// (`.json` is JSON, anything else is XYZ).
pub fn read_molecule(path: impl AsRef<Path>) -> Result<Molecule> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        parse_molecule_json(&text)
    } else {
        parse_xyz(&text)
    }
}
