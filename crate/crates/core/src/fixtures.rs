//! Small reference molecules and seeded generators of random ones.
//!
//! The fixed molecules have known bond graphs (water, a benzene carbon ring,
//! paths P3 and P4, the star K1,3). The generators build chains whose
//! perceived bonds are exactly the chain bonds, plus rigid motions and atom
//! permutations for invariance checks.

use crate::bonds::{predict_bonds, DEFAULT_ALPHA};
use crate::chem::{dot, norm, scale, sub, Atom, CovalentRadiiTable, Element, Molecule, Vec3};
use crate::error::Result;
use crate::rng::Rng;

/// Water with the experimental O-H length 0.9572 Å and H-O-H angle 104.52°.
pub const WATER_XYZ: &str = "3\nwater\nO 0.0 0.0 0.0\nH 0.9572 0.0 0.0\nH -0.239987 0.926627 0.0\n";

/// H-O-H angle of [`WATER_XYZ`] in degrees.
pub const WATER_ANGLE_DEG: f64 = 104.52;

fn element(symbol: &str) -> Element {
    Element::from_symbol(symbol).expect("fixture symbols are valid")
}

fn molecule(name: &str, atoms: &[(&str, Vec3)]) -> Molecule {
    let atoms = atoms.iter().map(|&(s, p)| Atom::new(element(s), p)).collect();
    Molecule::new(name, atoms, None).expect("fixture molecules are valid")
}

pub fn water() -> Molecule {
    crate::chem::parse_xyz(WATER_XYZ).expect("water fixture parses")
}

/// Six carbons on a regular hexagon with 1.39 Å sides, no hydrogens.
pub fn benzene_skeleton() -> Molecule {
    let atoms: Vec<(&str, Vec3)> = (0..6)
        .map(|k| {
            let t = std::f64::consts::FRAC_PI_3 * k as f64;
            ("C", [1.39 * t.cos(), 1.39 * t.sin(), 0.0])
        })
        .collect();
    molecule("benzene_skeleton", &atoms)
}

/// `n` carbons on a straight line 1.5 Å apart: the path graph on `n` nodes.
pub fn linear_path(n: usize) -> Molecule {
    let atoms: Vec<(&str, Vec3)> = (0..n).map(|k| ("C", [1.5 * k as f64, 0.0, 0.0])).collect();
    molecule(&format!("path{n}"), &atoms)
}

/// Planar CH3: one centre bonded to three leaves, the star K1,3.
pub fn star_k13() -> Molecule {
    let mut atoms = vec![("C", [0.0, 0.0, 0.0])];
    for k in 0..3 {
        let t = 2.0 * std::f64::consts::FRAC_PI_3 * k as f64;
        atoms.push(("H", [1.09 * t.cos(), 1.09 * t.sin(), 0.0]));
    }
    molecule("star_k13", &atoms)
}

/// All-trans carbon zig-zag of `n` atoms: 1.54 Å bonds, 111° angles.
pub fn zigzag_chain(n: usize) -> Molecule {
    let half = 111f64.to_radians() / 2.0;
    let (dx, dy) = (1.54 * half.sin(), 1.54 * half.cos());
    let atoms: Vec<(&str, Vec3)> =
        (0..n).map(|k| ("C", [dx * k as f64, if k % 2 == 0 { 0.0 } else { dy }, 0.0])).collect();
    molecule(&format!("chain{n}"), &atoms)
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Places `d` from `a`, `b`, `c` given |cd|, angle bcd and dihedral abcd.
fn place(a: Vec3, b: Vec3, c: Vec3, length: f64, angle: f64, dihedral: f64) -> Vec3 {
    let bc = unit(sub(c, b));
    let n = unit(cross(sub(b, a), bc));
    let m = cross(n, bc);
    let local = [-length * angle.cos(), length * angle.sin() * dihedral.cos(), length * angle.sin() * dihedral.sin()];
    let mut d = c;
    for k in 0..3 {
        d[k] += local[0] * bc[k] + local[1] * m[k] + local[2] * n[k];
    }
    d
}

/// Random unbranched chain of `n >= 2` heavy atoms (C, N, O) whose perceived
/// bonds at the default threshold are exactly the chain bonds.
pub fn random_chain(rng: &mut Rng, n: usize, name: &str) -> Molecule {
    assert!(n >= 2, "a chain needs at least two atoms");
    let radii = CovalentRadiiTable::default();
    let symbols = ["C", "C", "C", "N", "O"];
    loop {
        let mut pos: Vec<Vec3> = Vec::with_capacity(n);
        let bond = |rng: &mut Rng| 1.40 + 0.12 * rng.uniform();
        pos.push([0.0; 3]);
        pos.push([bond(rng), 0.0, 0.0]);
        if n > 2 {
            let angle = (105.0 + 15.0 * rng.uniform()).to_radians();
            let l = bond(rng);
            pos.push([pos[1][0] - l * angle.cos(), l * angle.sin(), 0.0]);
        }
        for k in 3..n {
            let angle = (105.0 + 15.0 * rng.uniform()).to_radians();
            let dihedral = (60.0 + 240.0 * rng.uniform()).to_radians();
            let p = place(pos[k - 3], pos[k - 2], pos[k - 1], bond(rng), angle, dihedral);
            pos.push(p);
        }
        let atoms: Vec<Atom> =
            pos.iter().map(|&p| Atom::new(element(symbols[rng.index(symbols.len())]), p)).collect();
        let m = Molecule::new(name, atoms, None).expect("generated chain is valid");
        let bonds = predict_bonds(&m, &radii, DEFAULT_ALPHA).expect("default radii cover C, N, O");
        if bonds.keys() == (0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>() {
            return m;
        }
    }
}

/// Synthetic target in eV: a smooth function of composition and shape.
pub fn synthetic_target(m: &Molecule) -> f64 {
    let pos = m.positions();
    let heavy = m.atoms().iter().filter(|a| a.element.symbol() != "C").count() as f64;
    let extent = norm(sub(pos[pos.len() - 1], pos[0]));
    let mut bend = 0.0;
    for w in pos.windows(3) {
        let (u, v) = (sub(w[0], w[1]), sub(w[2], w[1]));
        bend += dot(u, v) / (norm(u) * norm(v));
    }
    3.0 + 0.2 * heavy - 0.05 * extent + 0.1 * bend
}

/// `count` random chains of 4 to 8 atoms with [`synthetic_target`] targets.
pub fn synthetic_chain_dataset(seed: u64, count: usize) -> Vec<Molecule> {
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|k| {
            let n = 4 + rng.index(5);
            let m = random_chain(&mut rng, n, &format!("chain_{k}"));
            let t = synthetic_target(&m);
            m.with_target(Some(t))
        })
        .collect()
}

/// A proper rotation and a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl RigidMotion {
    /// Uniformly random rotation (unit quaternion) and a translation in a 20 Å box.
    pub fn random(rng: &mut Rng) -> Self {
        let (u1, u2, u3) = (rng.uniform(), rng.uniform(), rng.uniform());
        let tau = std::f64::consts::TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
        let rotation = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        let translation = [20.0 * rng.uniform() - 10.0, 20.0 * rng.uniform() - 10.0, 20.0 * rng.uniform() - 10.0];
        Self { rotation, translation }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        [0, 1, 2].map(|k| dot(r[k], p) + self.translation[k])
    }

    pub fn apply_to(&self, m: &Molecule) -> Result<Molecule> {
        let moved: Vec<Vec3> = m.positions().into_iter().map(|p| self.apply(p)).collect();
        m.with_positions(&moved)
    }
}

/// Uniform permutation of `0..n` (Fisher-Yates).
pub fn random_permutation(rng: &mut Rng, n: usize) -> Vec<usize> {
    rng.sample_indices(n, n)
}
