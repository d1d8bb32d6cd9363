//! XYZ text format: atom count, comment line, then one `symbol x y z` line
//! per atom (Å).

use std::fmt::Write;

use super::element::Element;
use super::molecule::{Atom, Molecule};
use crate::error::{Error, Result};

pub fn parse_xyz(text: &str) -> Result<Molecule> {
    let lines: Vec<&str> = text.lines().collect();
    let err = |line: usize, message: String| Error::Parse { line, message };

    let count_line = lines.first().map(|l| l.trim()).unwrap_or("");
    let count: usize = count_line
        .parse()
        .map_err(|_| err(1, format!("expected atom count, got `{count_line}`")))?;
    let name = lines.get(1).map(|l| l.trim()).unwrap_or("").to_string();

    let mut atoms = Vec::with_capacity(count);
    for k in 0..count {
        let line_no = k + 3;
        let Some(line) = lines.get(k + 2) else {
            return Err(err(line_no, format!("count mismatch: header declares {count} atoms, found {k}")));
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(err(line_no, format!("expected `symbol x y z`, got `{}`", line.trim())));
        }
        let element = Element::from_symbol(fields[0])
            .ok_or_else(|| err(line_no, format!("unknown element `{}`", fields[0])))?;
        let mut position = [0.0; 3];
        for (c, field) in position.iter_mut().zip(&fields[1..4]) {
            *c = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line_no, format!("non-numeric coordinate `{field}`")))?;
        }
        atoms.push(Atom::new(element, position));
    }
    if let Some(extra) = lines.iter().skip(count + 2).position(|l| !l.trim().is_empty()) {
        return Err(err(
            count + 3 + extra,
            format!("count mismatch: header declares {count} atoms but more atom lines follow"),
        ));
    }
    Molecule::new(name, atoms, None).map_err(|e| err(1, e.to_string()))
}

/// Serializes a molecule; coordinates use the shortest exact decimal form, so
/// parsing the output restores every bit.
pub fn emit_xyz(m: &Molecule) -> String {
    let mut out = format!("{}\n{}\n", m.len(), m.name());
    for a in m.atoms() {
        let [x, y, z] = a.position;
        let _ = writeln!(out, "{} {} {} {}", a.element.symbol(), x, y, z);
    }
    out
}
