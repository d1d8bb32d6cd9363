//! Randomized invariants checked against brute-force oracles.

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use demol_core::autodiff::{softmax_bias_mask, Tensor};
use demol_core::bonds::{predict_bonds, Bond, BondSet, DEFAULT_ALPHA};
use demol_core::chem::{emit_xyz, parse_xyz, Atom, CovalentRadiiTable, Element, Molecule};
use demol_core::encoding::{spd_matrix, SpdMatrix};
use demol_core::graph::{build_atom_graph_n, build_line_graph, BoolMatrix};
use demol_core::masks::{atom_mask, bond_mask};

fn edges(n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=n).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let k = pairs.len();
        (Just(n), proptest::sample::subsequence(pairs, 0..=k))
    })
}

fn bond_set(n: usize, pairs: &[(usize, usize)]) -> BondSet {
    BondSet::new(n, pairs.iter().map(|&(i, j)| Bond { i, j, length: 1.0 })).unwrap()
}

fn floyd_warshall(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<Option<u32>>> {
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(i, j) in pairs {
        d[i][j] = Some(1);
        d[j][i] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

fn molecule() -> impl Strategy<Value = Molecule> {
    let symbols = ["H", "C", "N", "O", "F", "S", "Cl"];
    proptest::collection::vec((0..symbols.len(), proptest::array::uniform3(-4.0f64..4.0)), 1..10).prop_filter_map(
        "atoms too close",
        move |atoms| {
            let atoms =
                atoms.into_iter().map(|(s, p)| Atom::new(Element::from_symbol(symbols[s]).unwrap(), p)).collect();
            Molecule::new("random", atoms, None).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn line_graph_edges_count_shared_endpoints((n, pairs) in edges(8)) {
        let b = bond_set(n, &pairs);
        let bg = build_line_graph(&build_atom_graph_n(n, &b).unwrap(), &b).unwrap();
        let mut deg = vec![0usize; n];
        for &(i, j) in &pairs {
            deg[i] += 1;
            deg[j] += 1;
        }
        prop_assert_eq!(bg.edge_count(), deg.iter().map(|d| d * d.saturating_sub(1) / 2).sum::<usize>());
        prop_assert!(bg.adjacency().is_symmetric());
    }

    #[test]
    fn spd_matches_floyd_warshall((n, pairs) in edges(12)) {
        let spd = spd_matrix(&build_atom_graph_n(n, &bond_set(n, &pairs)).unwrap());
        let oracle = floyd_warshall(n, &pairs);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(spd.get(i, j), oracle[i][j].unwrap_or(SpdMatrix::UNREACHABLE));
            }
        }
    }

    #[test]
    fn bond_mask_is_line_graph_distance_at_most_two((n, pairs) in edges(8)) {
        let b = bond_set(n, &pairs);
        let bg = build_line_graph(&build_atom_graph_n(n, &b).unwrap(), &b).unwrap();
        let spd = spd_matrix(&bg);
        let mask = bond_mask(&bg);
        for a in 0..b.len() {
            for c in 0..b.len() {
                prop_assert_eq!(mask.get(a, c), spd.get(a, c) <= 2);
            }
        }
    }

    #[test]
    fn bonds_follow_the_threshold_and_permutations(m in molecule(), alpha in 0.8f64..1.4, seed in any::<u64>()) {
        let radii = CovalentRadiiTable::default();
        let bonds = predict_bonds(&m, &radii, alpha).unwrap();
        let atoms = m.atoms();
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                let d = demol_core::chem::distance(&atoms[i], &atoms[j]);
                let limit = alpha * (radii.radius(atoms[i].element).unwrap() + radii.radius(atoms[j].element).unwrap());
                prop_assert_eq!(bonds.contains(i, j), d <= limit);
                prop_assert_eq!(bonds.contains(j, i), d <= limit);
            }
        }
        let mut rng = demol_core::rng::Rng::new(seed);
        let order = demol_core::fixtures::random_permutation(&mut rng, m.len());
        let permuted = predict_bonds(&m.permuted(&order).unwrap(), &radii, alpha).unwrap();
        prop_assert_eq!(permuted.len(), bonds.len());
        for b in permuted.iter() {
            prop_assert!(bonds.contains(order[b.i], order[b.j]));
        }
    }

    #[test]
    fn atom_mask_is_the_strict_cutoff(m in molecule(), cutoff in 0.5f64..6.0) {
        let mask = atom_mask(&m, cutoff);
        let atoms = m.atoms();
        for i in 0..m.len() {
            for j in 0..m.len() {
                prop_assert_eq!(mask.get(i, j), demol_core::chem::distance(&atoms[i], &atoms[j]) < cutoff);
            }
        }
    }

    #[test]
    fn xyz_round_trips(m in molecule()) {
        let back = parse_xyz(&emit_xyz(&m)).unwrap();
        prop_assert_eq!(back.positions(), m.positions());
        prop_assert_eq!(
            predict_bonds(&back, &CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap(),
            predict_bonds(&m, &CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap()
        );
    }

    #[test]
    fn masked_softmax_rows(
        rows in 1usize..6,
        cols in 1usize..6,
        seed in any::<u64>(),
        shift in -1e3f64..1e3,
    ) {
        let mut rng = demol_core::rng::Rng::new(seed);
        let logits = Tensor::from_fn(rows, cols, |_, _| 30.0 * rng.uniform() - 15.0);
        let bias = Tensor::from_fn(rows, cols, |_, _| rng.uniform());
        let mask = BoolMatrix::from_fn(rows, cols, |_, _| rng.uniform() < 0.6);
        let w = softmax_bias_mask(&logits, &bias, &mask).unwrap();
        let moved = softmax_bias_mask(&logits.map(|x| x + shift), &bias, &mask).unwrap();
        for r in 0..rows {
            let any = (0..cols).any(|c| mask.get(r, c));
            let sum: f64 = w.row(r).iter().sum();
            let want = if any { 1.0 } else { 0.0 };
            prop_assert!((sum - want).abs() <= 1e-12, "row sum {}", sum);
            for c in 0..cols {
                if !mask.get(r, c) {
                    prop_assert_eq!(w.get(r, c), 0.0);
                }
                prop_assert!((w.get(r, c) - moved.get(r, c)).abs() <= 1e-12);
            }
        }
    }
}
