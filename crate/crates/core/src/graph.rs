//! Atom-centric graph and its line graph (one node per bond).

use serde::Serialize;

use crate::bonds::BondSet;
use crate::chem::{euclidean, midpoint, scale, sub, Molecule, Vec3, DUPLICATE_TOLERANCE};
use crate::error::{Error, Result};

/// Anything with numbered nodes and sorted neighbor lists.
pub trait Topology {
    fn node_count(&self) -> usize;
    fn neighbors(&self, node: usize) -> &[usize];
}

/// Dense symmetric boolean matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoolMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BoolMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![false; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|r| (0..r).all(|c| self.get(r, c) == self.get(c, r)))
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Rows of 0/1 integers.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(|r| r.iter().map(|&b| b as u8).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomGraph {
    adjacency: BoolMatrix,
    neighbor_lists: Vec<Vec<usize>>,
}

impl AtomGraph {
    pub fn n_atoms(&self) -> usize {
        self.neighbor_lists.len()
    }

    pub fn adjacency(&self) -> &BoolMatrix {
        &self.adjacency
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.neighbor_lists[atom].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbor_lists.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbor_lists.iter().map(Vec::len).sum::<usize>() / 2
    }
}

impl Topology for AtomGraph {
    fn node_count(&self) -> usize {
        self.n_atoms()
    }

    fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbor_lists[node]
    }
}

pub fn build_atom_graph(m: &Molecule, bonds: &BondSet) -> Result<AtomGraph> {
    build_atom_graph_n(m.len(), bonds)
}

pub fn build_atom_graph_n(n: usize, bonds: &BondSet) -> Result<AtomGraph> {
    let mut adjacency = BoolMatrix::new(n, n);
    let mut neighbor_lists = vec![Vec::new(); n];
    for b in bonds {
        let (i, j) = b.key();
        if j >= n {
            return Err(Error::IndexOutOfRange { what: "atoms", index: j, len: n });
        }
        adjacency.set(i, j, true);
        adjacency.set(j, i, true);
        neighbor_lists[i].push(j);
        neighbor_lists[j].push(i);
    }
    for list in &mut neighbor_lists {
        list.sort_unstable();
    }
    Ok(AtomGraph { adjacency, neighbor_lists })
}

/// A bond seen as a point: midpoint, unit direction `atom_i -> atom_j` (i < j), length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BondNode {
    pub atom_i: usize,
    pub atom_j: usize,
    pub midpoint: Vec3,
    pub direction: Vec3,
    pub length: f64,
}

impl BondNode {
    /// Unit vector pointing from `atom` (an endpoint) to the other endpoint.
    pub fn direction_from(&self, atom: usize) -> Vec3 {
        if atom == self.atom_i {
            self.direction
        } else {
            scale(self.direction, -1.0)
        }
    }
}

pub fn bond_geometry(m: &Molecule, bonds: &BondSet) -> Result<Vec<BondNode>> {
    let atoms = m.atoms();
    bonds
        .iter()
        .map(|b| {
            let (i, j) = b.key();
            let (Some(ai), Some(aj)) = (atoms.get(i), atoms.get(j)) else {
                return Err(Error::IndexOutOfRange { what: "atoms", index: j, len: atoms.len() });
            };
            let length = euclidean(ai.position, aj.position);
            if length <= DUPLICATE_TOLERANCE {
                return Err(Error::Geometry(format!("bond ({i}, {j}) has zero length")));
            }
            Ok(BondNode {
                atom_i: i,
                atom_j: j,
                midpoint: midpoint(ai.position, aj.position),
                direction: scale(sub(aj.position, ai.position), 1.0 / length),
                length,
            })
        })
        .collect()
}

/// Line graph: bond nodes in `BondSet` order, adjacent iff they share an atom.
#[derive(Debug, Clone, PartialEq)]
pub struct BondGraph {
    endpoints: Vec<(usize, usize)>,
    adjacency: BoolMatrix,
    neighbor_lists: Vec<Vec<usize>>,
    // Parallel to `neighbor_lists`.
    shared: Vec<Vec<usize>>,
}

impl BondGraph {
    pub fn n_bonds(&self) -> usize {
        self.endpoints.len()
    }

    pub fn endpoints(&self) -> &[(usize, usize)] {
        &self.endpoints
    }

    pub fn adjacency(&self) -> &BoolMatrix {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.neighbor_lists.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Common atom of two adjacent bond nodes.
    pub fn shared_atom(&self, a: usize, b: usize) -> Option<usize> {
        let pos = self.neighbor_lists[a].binary_search(&b).ok()?;
        Some(self.shared[a][pos])
    }
}

impl Topology for BondGraph {
    fn node_count(&self) -> usize {
        self.n_bonds()
    }

    fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbor_lists[node]
    }
}

pub fn build_line_graph(g: &AtomGraph, bonds: &BondSet) -> Result<BondGraph> {
    let n = g.n_atoms();
    let m = bonds.len();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, b) in bonds.iter().enumerate() {
        let (i, j) = b.key();
        if j >= n || !g.adjacency().get(i, j) {
            return Err(Error::Geometry(format!("bond ({i}, {j}) is not an edge of the atom graph")));
        }
        incident[i].push(k);
        incident[j].push(k);
    }
    if g.edge_count() != m {
        return Err(Error::Geometry("bond set and atom graph disagree".into()));
    }
    let mut adjacency = BoolMatrix::new(m, m);
    let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
    for (atom, list) in incident.iter().enumerate() {
        for (x, &a) in list.iter().enumerate() {
            for &b in &list[x + 1..] {
                adjacency.set(a, b, true);
                adjacency.set(b, a, true);
                pairs[a].push((b, atom));
                pairs[b].push((a, atom));
            }
        }
    }
    let (neighbor_lists, shared) = pairs
        .into_iter()
        .map(|mut p| {
            p.sort_unstable();
            p.into_iter().unzip()
        })
        .unzip();
    Ok(BondGraph { endpoints: bonds.keys(), adjacency, neighbor_lists, shared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bonds::Bond;

    fn bonds(n: usize, pairs: &[(usize, usize)]) -> BondSet {
        BondSet::new(n, pairs.iter().map(|&(i, j)| Bond { i, j, length: 1.0 })).unwrap()
    }

    fn line(n: usize, pairs: &[(usize, usize)]) -> BondGraph {
        let b = bonds(n, pairs);
        build_line_graph(&build_atom_graph_n(n, &b).unwrap(), &b).unwrap()
    }

    #[test]
    fn atom_graph_degrees() {
        let g = build_atom_graph_n(3, &bonds(3, &[(0, 1), (0, 2)])).unwrap();
        assert_eq!(g.degrees(), vec![2, 1, 1]);
        assert!(g.adjacency().is_symmetric());
        let g = build_atom_graph_n(4, &bonds(4, &[(0, 1), (1, 2), (2, 3)])).unwrap();
        assert_eq!(g.degrees(), vec![1, 2, 2, 1]);
        let g = build_atom_graph_n(1, &BondSet::default()).unwrap();
        assert_eq!(g.adjacency().count_true(), 0);
    }

    #[test]
    fn atom_graph_index_out_of_range() {
        assert!(build_atom_graph_n(2, &bonds(3, &[(0, 2)])).is_err());
    }

    #[test]
    fn small_line_graphs() {
        let p3 = line(3, &[(0, 1), (1, 2)]);
        assert_eq!((p3.n_bonds(), p3.edge_count()), (2, 1));
        assert_eq!(p3.shared_atom(0, 1), Some(1));

        let star = line(4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!((star.n_bonds(), star.edge_count()), (3, 3));

        let c6: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let lc6 = line(6, &c6);
        assert_eq!((lc6.n_bonds(), lc6.edge_count()), (6, 6));
        assert!((0..6).all(|k| lc6.neighbors(k).len() == 2));
    }

    #[test]
    fn line_graph_without_pairs_has_no_edges() {
        assert_eq!(line(2, &[(0, 1)]).edge_count(), 0);
        assert_eq!(line(1, &[]).edge_count(), 0);
    }

    #[test]
    fn bond_geometry_examples() {
        let m = crate::chem::parse_xyz("2\n\nH 0 0 0\nH 0.74 0 0").unwrap();
        let b = BondSet::from_pairs(&m, &[(0, 1)]).unwrap();
        let node = bond_geometry(&m, &b).unwrap()[0];
        assert_eq!(node.midpoint, [0.37, 0.0, 0.0]);
        assert_eq!(node.direction, [1.0, 0.0, 0.0]);
        assert_eq!(node.length, 0.74);
        assert_eq!(node.direction_from(1), [-1.0, 0.0, 0.0]);

        let m = crate::chem::parse_xyz("2\n\nH 0 0 0\nH 0 2 0").unwrap();
        let b = BondSet::from_pairs(&m, &[(0, 1)]).unwrap();
        assert_eq!(bond_geometry(&m, &b).unwrap()[0].midpoint, [0.0, 1.0, 0.0]);

        let w = crate::chem::parse_xyz("3\n\nO 0 0 0\nH 0.9572 0 0\nH -0.2399 0.9266 0").unwrap();
        let b = BondSet::from_pairs(&w, &[(0, 1)]).unwrap();
        assert!((bond_geometry(&w, &b).unwrap()[0].midpoint[0] - 0.4786).abs() < 1e-15);
    }
}
