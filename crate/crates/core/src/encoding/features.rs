//! Parameter-free, per-molecule inputs to the model.
//!
//! Everything geometric is computed once here: which pairs may attend to each
//! other, the scalar fed to each kernel bank, the pair slot that selects the
//! bank's affine, and the SPD table slot. The model only turns these into
//! learned values.

use std::sync::Arc;

use crate::autodiff::Pattern;
use crate::bonds::{predict_bonds, BondSet, DEFAULT_ALPHA};
use crate::chem::{euclidean, CovalentRadiiTable, Molecule, Vec3};
use crate::error::{Error, Result};
use crate::graph::{bond_geometry, build_atom_graph, build_line_graph, AtomGraph, BondGraph, BondNode};
use crate::masks::{atom_mask, bond_mask, DEFAULT_CUTOFF};

use super::spd::{spd_matrix, spd_slot, SpdMatrix, DEFAULT_MAX_SPD};
use super::torsion::bond_pair_cosine;
use super::vocab::Vocabulary;

pub const DEFAULT_LENGTH_BUCKET_WIDTH: f64 = 0.1;
pub const DEFAULT_LENGTH_BUCKETS: usize = 32;

/// Entries of one attention kind: a sparsity pattern plus, per entry, the
/// kernel input and pair slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBlock {
    pub pattern: Arc<Pattern>,
    pub inputs: Vec<f64>,
    pub slots: Vec<usize>,
}

impl PairBlock {
    fn build(pattern: Pattern, mut entry: impl FnMut(usize, usize) -> (f64, usize)) -> Self {
        let (inputs, slots) = pattern.entries().map(|(r, c)| entry(r, c)).unzip();
        Self { pattern: Arc::new(pattern), inputs, slots }
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub name: String,
    pub n_atoms: usize,
    pub n_bonds: usize,
    pub positions: Vec<Vec3>,
    pub atom_categories: Vec<usize>,
    pub bond_types: Vec<usize>,
    pub length_buckets: Vec<usize>,
    /// Distances between atoms.
    pub atom_dist: PairBlock,
    pub atom_spd: Vec<usize>,
    /// Distances between bond midpoints.
    pub bond_dist: PairBlock,
    pub bond_spd: Vec<usize>,
    /// Same pattern as `bond_dist`; inputs are `cos + 1`.
    pub bond_tors: PairBlock,
    /// Atoms over their incident bonds; inputs are atom to midpoint distances.
    pub a2b: PairBlock,
    /// Bonds over their two endpoints.
    pub b2a: PairBlock,
    /// Upper-triangle atom pairs within the cutoff, scored by the bond head.
    pub candidates: Arc<Pattern>,
    pub candidate_labels: Vec<bool>,
    pub target: Option<f64>,
}

/// Settings that decide the geometry-derived inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSettings {
    pub vocab: Vocabulary,
    pub cutoff: f64,
    pub use_masks: bool,
    pub max_spd: usize,
    pub length_bucket_width: f64,
    pub length_buckets: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            vocab: Vocabulary::default(),
            cutoff: DEFAULT_CUTOFF,
            use_masks: true,
            max_spd: DEFAULT_MAX_SPD,
            length_bucket_width: DEFAULT_LENGTH_BUCKET_WIDTH,
            length_buckets: DEFAULT_LENGTH_BUCKETS,
        }
    }
}

pub fn atom_categories(m: &Molecule, vocab: &Vocabulary) -> Result<Vec<usize>> {
    m.atoms().iter().map(|a| vocab.atom_category(a.feature_id)).collect()
}

pub fn bond_type_ids(categories: &[usize], bonds: &BondSet, vocab: &Vocabulary) -> Vec<usize> {
    bonds.iter().map(|b| vocab.bond_type(categories[b.i], categories[b.j])).collect()
}

/// Offset added before flooring so a length on a bucket edge lands in the upper
/// bucket however its last bits were rounded (rotated copies of one molecule
/// otherwise disagree).
const BUCKET_EDGE_SLACK: f64 = 1e-9;

pub fn length_bucket(length: f64, width: f64, buckets: usize) -> usize {
    ((length / width + BUCKET_EDGE_SLACK).floor().max(0.0) as usize).min(buckets - 1)
}

/// A molecule together with its perceived bonds and precomputed features.
#[derive(Debug, Clone)]
pub struct Example {
    pub molecule: Molecule,
    pub bonds: BondSet,
    pub features: Features,
}

/// Bond perception plus featurization.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub radii: CovalentRadiiTable,
    pub alpha: f64,
    pub settings: FeatureSettings,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self { radii: CovalentRadiiTable::default(), alpha: DEFAULT_ALPHA, settings: FeatureSettings::default() }
    }
}

impl Featurizer {
    pub fn example(&self, m: &Molecule) -> Result<Example> {
        let bonds = predict_bonds(m, &self.radii, self.alpha)?;
        let features = self.featurize(m, &bonds)?;
        Ok(Example { molecule: m.clone(), bonds, features })
    }

    /// Features for `m` with a given bond topology.
    pub fn featurize(&self, m: &Molecule, bonds: &BondSet) -> Result<Features> {
        let s = &self.settings;
        if !(s.cutoff > 0.0) {
            return Err(Error::Config(format!("cutoff must be positive, got {}", s.cutoff)));
        }
        if !(s.length_bucket_width > 0.0) || s.length_buckets == 0 {
            return Err(Error::Config("length buckets need a positive width and count".into()));
        }
        let g = build_atom_graph(m, bonds)?;
        let bg = build_line_graph(&g, bonds)?;
        let nodes = bond_geometry(m, bonds)?;
        self.featurize_graphs(m, bonds, &g, &bg, &nodes)
    }

    fn featurize_graphs(
        &self,
        m: &Molecule,
        bonds: &BondSet,
        g: &AtomGraph,
        bg: &BondGraph,
        nodes: &[BondNode],
    ) -> Result<Features> {
        let s = &self.settings;
        let v = &s.vocab;
        let (n, nb) = (m.len(), bonds.len());
        let pos = m.positions();
        let mids: Vec<Vec3> = nodes.iter().map(|b| b.midpoint).collect();
        let cats = atom_categories(m, v)?;
        let types = bond_type_ids(&cats, bonds, v);
        let buckets = nodes.iter().map(|b| length_bucket(b.length, s.length_bucket_width, s.length_buckets)).collect();

        let (atom_pattern, bond_pattern) = if s.use_masks {
            (Pattern::from_mask(&atom_mask(m, s.cutoff)), Pattern::from_mask(&bond_mask(bg)))
        } else {
            (Pattern::full(n, n), Pattern::full(nb, nb))
        };

        let spd_a = spd_matrix(g);
        let spd_b = spd_matrix(bg);
        let spd_slots =
            |spd: &SpdMatrix, p: &Pattern| p.entries().map(|(r, c)| spd_slot(spd.get(r, c), s.max_spd)).collect();
        let atom_spd = spd_slots(&spd_a, &atom_pattern);
        let bond_spd = spd_slots(&spd_b, &bond_pattern);

        let atom_dist =
            PairBlock::build(atom_pattern, |i, j| (euclidean(pos[i], pos[j]), v.atom_pair_slot(cats[i], cats[j])));
        let bond_slot = |a: usize, b: usize| v.bond_pair_slot(types[a], types[b]);
        let bond_tors =
            PairBlock::build(bond_pattern.clone(), |a, b| (bond_pair_cosine(bg, nodes, a, b) + 1.0, bond_slot(a, b)));
        let bond_dist = PairBlock::build(bond_pattern, |a, b| (euclidean(mids[a], mids[b]), bond_slot(a, b)));

        let mut incident = vec![Vec::new(); n];
        for (k, b) in bonds.iter().enumerate() {
            incident[b.i].push(k);
            incident[b.j].push(k);
        }
        let a2b = PairBlock::build(Pattern::from_rows(n, nb, incident), |i, b| {
            (euclidean(pos[i], mids[b]), v.cross_slot(cats[i], types[b]))
        });
        let endpoints = bonds.iter().map(|b| vec![b.i, b.j]).collect();
        let b2a = PairBlock::build(Pattern::from_rows(nb, n, endpoints), |b, i| {
            (euclidean(mids[b], pos[i]), v.cross_slot(cats[i], types[b]))
        });

        let mut lists = vec![Vec::new(); n];
        let mut candidate_labels = Vec::new();
        for (i, list) in lists.iter_mut().enumerate() {
            for j in i + 1..n {
                if euclidean(pos[i], pos[j]) < s.cutoff {
                    list.push(j);
                    candidate_labels.push(bonds.contains(i, j));
                }
            }
        }
        let candidates = Arc::new(Pattern::from_rows(n, n, lists));

        Ok(Features {
            name: m.name().to_string(),
            n_atoms: n,
            n_bonds: nb,
            positions: pos,
            atom_categories: cats,
            bond_types: types,
            length_buckets: buckets,
            atom_dist,
            atom_spd,
            bond_dist,
            bond_spd,
            bond_tors,
            a2b,
            b2a,
            candidates,
            candidate_labels,
            target: m.target(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_xyz;

    fn water() -> Example {
        let m = parse_xyz("3\nwater\nO 0 0 0\nH 0.9572 0 0\nH -0.2399 0.9266 0").unwrap();
        Featurizer::default().example(&m).unwrap()
    }

    #[test]
    fn water_blocks() {
        let f = water().features;
        assert_eq!((f.n_atoms, f.n_bonds), (3, 2));
        assert_eq!(f.atom_dist.nnz(), 9);
        assert_eq!(f.bond_dist.nnz(), 4);
        assert_eq!(f.a2b.pattern.row_cols(0), &[0, 1]);
        assert_eq!(f.a2b.pattern.row_cols(1), &[0]);
        assert_eq!(f.b2a.pattern.row_cols(1), &[0, 2]);
        assert_eq!(f.candidate_labels, vec![true, true, false]);
        assert_eq!(f.length_buckets, vec![9, 9]);
        // O-H bonds share a type, H-H pairs a slot.
        assert_eq!(f.bond_types[0], f.bond_types[1]);
        assert_eq!(f.atom_spd, vec![0, 1, 1, 1, 0, 2, 1, 2, 0]);
    }

    #[test]
    fn single_atom_is_degenerate_but_valid() {
        let m = parse_xyz("1\n\nC 0 0 0").unwrap();
        let f = Featurizer::default().example(&m).unwrap().features;
        assert_eq!(f.n_bonds, 0);
        assert_eq!(f.a2b.nnz(), 0);
        assert_eq!(f.bond_dist.nnz(), 0);
        assert!(f.candidate_labels.is_empty());
    }

    #[test]
    fn buckets_clip() {
        assert_eq!(length_bucket(0.0, 0.1, 32), 0);
        assert_eq!(length_bucket(1.55, 0.1, 32), 15);
        assert_eq!(length_bucket(9.0, 0.1, 32), 31);
        assert_eq!(length_bucket(1.5, 0.1, 32), 15);
        assert_eq!(length_bucket(1.5f64.next_down(), 0.1, 32), 15);
        assert_eq!(length_bucket(1.4999999999999998, 0.1, 32), 15);
    }
}
