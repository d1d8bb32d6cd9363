//! Built-in invariant suite over the embedded fixtures, so a binary can
//! verify itself without external data.

use serde::Serialize;

use crate::autodiff::gaussian_kernel;
use crate::bonds::{predict_bonds, BondSet, DEFAULT_ALPHA};
use crate::chem::{dot, norm, sub, Atom, CovalentRadiiTable, Element, Molecule};
use crate::encoding::spd_matrix;
use crate::fixtures::{benzene_skeleton, linear_path, star_k13, water, RigidMotion, WATER_ANGLE_DEG};
use crate::graph::{build_atom_graph, build_line_graph, BondGraph};
use crate::masks::bond_mask;
use crate::model::{Model, ModelConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<String, String>;

const CHECKS: [(&str, Check); 11] = [
    ("water_bonds", water_bonds),
    ("bond_threshold_inclusive", bond_threshold_inclusive),
    ("line_graph_p3_is_k2", || line_graph_edges(&linear_path(3), 2, 1)),
    ("line_graph_p4_is_p3", || line_graph_edges(&linear_path(4), 3, 2)),
    ("line_graph_k13_is_k3", || line_graph_edges(&star_k13(), 3, 3)),
    ("line_graph_c6_is_c6", || line_graph_edges(&benzene_skeleton(), 6, 6)),
    ("spd_p4", spd_p4),
    ("water_angle", water_angle),
    ("gaussian_peak_and_symmetry", gaussian_peak),
    ("attention_rows_stochastic", attention_rows),
    ("prediction_invariance", prediction_invariance),
];

/// Runs every check; a panicking check counts as a failure.
pub fn run_selftest() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|&(name, check)| {
            let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("check panicked".into()));
            match outcome {
                Ok(detail) => CheckResult { name, passed: true, detail },
                Err(detail) => CheckResult { name, passed: false, detail },
            }
        })
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bonds_of(m: &Molecule) -> Result<BondSet, String> {
    predict_bonds(m, &CovalentRadiiTable::default(), DEFAULT_ALPHA).map_err(|e| e.to_string())
}

fn line_graph(m: &Molecule) -> Result<BondGraph, String> {
    let bonds = bonds_of(m)?;
    let g = build_atom_graph(m, &bonds).map_err(|e| e.to_string())?;
    build_line_graph(&g, &bonds).map_err(|e| e.to_string())
}

fn water_bonds() -> Result<String, String> {
    let keys = bonds_of(&water())?.keys();
    ensure(keys == [(0, 1), (0, 2)], || format!("expected O-H1 and O-H2, got {keys:?}"))?;
    Ok("O-H1, O-H2".into())
}

fn bond_threshold_inclusive() -> Result<String, String> {
    let radii = CovalentRadiiTable::default();
    let h = Element::from_symbol("H").ok_or("no hydrogen")?;
    let r = radii.radius(h).map_err(|e| e.to_string())?;
    let threshold = DEFAULT_ALPHA * (r + r);
    let pair = |d: f64| Molecule::new("h2", vec![Atom::new(h, [0.0; 3]), Atom::new(h, [d, 0.0, 0.0])], None);
    let at = pair(threshold).map_err(|e| e.to_string())?;
    let beyond = pair(threshold.next_up()).map_err(|e| e.to_string())?;
    ensure(bonds_of(&at)?.len() == 1, || "pair at the threshold is not bonded".into())?;
    ensure(bonds_of(&beyond)?.is_empty(), || "pair beyond the threshold is bonded".into())?;
    Ok(format!("threshold {threshold} Å"))
}

fn line_graph_edges(m: &Molecule, nodes: usize, edges: usize) -> Result<String, String> {
    let bg = line_graph(m)?;
    ensure(bg.n_bonds() == nodes && bg.edge_count() == edges, || {
        format!("expected {nodes} nodes and {edges} edges, got {} and {}", bg.n_bonds(), bg.edge_count())
    })?;
    if nodes == edges {
        let degrees: Vec<usize> =
            (0..nodes).map(|a| (0..nodes).filter(|&b| bg.adjacency().get(a, b)).count()).collect();
        let cycle = nodes > 3 && degrees.iter().all(|&d| d == 2);
        let complete = nodes == 3 && degrees.iter().all(|&d| d == 2);
        ensure(cycle || complete, || format!("unexpected degrees {degrees:?}"))?;
    }
    Ok(format!("{nodes} nodes, {edges} edges"))
}

fn spd_p4() -> Result<String, String> {
    let m = linear_path(4);
    let g = build_atom_graph(&m, &bonds_of(&m)?).map_err(|e| e.to_string())?;
    let spd = spd_matrix(&g);
    for i in 0..4 {
        for j in 0..4 {
            ensure(spd.get(i, j) as usize == i.abs_diff(j), || format!("spd({i}, {j}) = {}", spd.get(i, j)))?;
        }
    }
    let c6 = line_graph(&benzene_skeleton())?;
    let allowed = bond_mask(&c6).count_true();
    ensure(allowed == 30, || format!("benzene bond mask allows {allowed} pairs, expected 30"))?;
    Ok("P4 hop counts, C6 bond mask".into())
}

fn water_angle() -> Result<String, String> {
    let p = water().positions();
    let (u, v) = (sub(p[1], p[0]), sub(p[2], p[0]));
    let cos = dot(u, v) / (norm(u) * norm(v));
    let expected = WATER_ANGLE_DEG.to_radians().cos();
    ensure((cos - expected).abs() <= 1e-3, || format!("cos = {cos}, expected {expected}"))?;
    Ok(format!("cos = {cos:.6}"))
}

fn gaussian_peak() -> Result<String, String> {
    let (mu, sigma) = (1.7, 0.625);
    let peak = gaussian_kernel(mu, mu, sigma);
    let expected = -1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    ensure((peak - expected).abs() <= 1e-12, || format!("peak {peak}, expected {expected}"))?;
    for t in [0.1, 0.5, 1.3] {
        let (a, b) = (gaussian_kernel(mu + t, mu, sigma), gaussian_kernel(mu - t, mu, sigma));
        ensure((a - b).abs() <= 1e-12, || format!("asymmetric at offset {t}: {a} vs {b}"))?;
    }
    Ok(format!("peak {peak:.12}"))
}

fn micro_model() -> Result<(Model<f64>, crate::encoding::Featurizer), String> {
    let config = ModelConfig::micro();
    let fz = config.featurizer(CovalentRadiiTable::default(), DEFAULT_ALPHA).map_err(|e| e.to_string())?;
    let model = Model::new(config, 0).map_err(|e| e.to_string())?;
    Ok((model, fz))
}

fn attention_rows() -> Result<String, String> {
    let (model, fz) = micro_model()?;
    let ex = fz.example(&benzene_skeleton()).map_err(|e| e.to_string())?;
    let dump = model.dump_attention(&ex.features).map_err(|e| e.to_string())?;
    for map in &dump.maps {
        for row in &map.weights {
            let s: f64 = row.iter().sum();
            ensure(s.abs() <= 1e-12 || (s - 1.0).abs() <= 1e-12, || {
                format!("layer {} head {} {:?} row sums to {s}", map.layer, map.head, map.kind)
            })?;
        }
    }
    Ok(format!("{} maps", dump.maps.len()))
}

fn prediction_invariance() -> Result<String, String> {
    let (model, fz) = micro_model()?;
    let mut rng = Rng::new(11);
    let mut worst = 0.0f64;
    for m in [water(), benzene_skeleton(), star_k13(), linear_path(4)] {
        let base = model.predict(&fz.example(&m).map_err(|e| e.to_string())?.features).map_err(|e| e.to_string())?;
        let order = crate::fixtures::random_permutation(&mut rng, m.len());
        let permuted = m.permuted(&order).map_err(|e| e.to_string())?;
        let moved = RigidMotion::random(&mut rng).apply_to(&m).map_err(|e| e.to_string())?;
        for (variant, tol) in [(permuted, 1e-6), (moved, 1e-9)] {
            let ex = fz.example(&variant).map_err(|e| e.to_string())?;
            let p = model.predict(&ex.features).map_err(|e| e.to_string())?;
            worst = worst.max((p - base).abs());
            ensure((p - base).abs() <= tol, || format!("{}: {p} vs {base}", m.name()))?;
        }
    }
    Ok(format!("max deviation {worst:.3e}"))
}
