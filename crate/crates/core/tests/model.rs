//! Model-level behaviour: bias composition, cross-attention orders, scalar
//! genericity, attention sparsity and trainer failure modes.

#![allow(clippy::needless_range_loop)]

use demol_core::autodiff::{Tape, Tensor};
use demol_core::bonds::DEFAULT_ALPHA;
use demol_core::chem::CovalentRadiiTable;
use demol_core::encoding::{Example, Featurizer};
use demol_core::fixtures::{benzene_skeleton, random_chain, synthetic_chain_dataset, water, RigidMotion};
use demol_core::model::{CrossOrder, Model, ModelConfig, PropLoss};
use demol_core::rng::Rng;
use demol_core::train::{clip_global_norm, TrainConfig, Trainer};
use demol_core::Error;

fn setup(config: &ModelConfig, seed: u64) -> (Model<f64>, Featurizer) {
    let fz = config.featurizer(CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap();
    (Model::new(config.clone(), seed).unwrap(), fz)
}

fn chain(seed: u64, n: usize) -> demol_core::chem::Molecule {
    random_chain(&mut Rng::new(seed), n, "chain")
}

#[test]
fn zero_angle_projection_equals_disabled_angles() {
    let config = ModelConfig::micro();
    let (mut with, fz) = setup(&config, 3);
    *with.torsion_projection_mut() = Tensor::zeros(config.kernels, 1);
    let without = Model::from_params(ModelConfig { use_torsion: false, ..config }, with.params().clone()).unwrap();
    for m in [benzene_skeleton(), chain(1, 7)] {
        let f = fz.example(&m).unwrap().features;
        assert_eq!(with.predict(&f).unwrap().to_bits(), without.predict(&f).unwrap().to_bits());
    }
}

#[test]
fn dense_bundle_agrees_with_sparse_biases() {
    let config = ModelConfig::micro();
    let (model, fz) = setup(&config, 5);
    let ex: Example = fz.example(&chain(2, 6)).unwrap();
    let bundle = model.bundle(&ex, config.cutoff).unwrap();
    let mut tape = Tape::new();
    let biases = model.biases(&mut tape, &ex.features).unwrap();
    let f = &ex.features;
    let pairs = [
        (biases.atom, &f.atom_dist.pattern, &bundle.phi_atom),
        (biases.bond, &f.bond_dist.pattern, &bundle.phi_bond),
        (biases.atom_from_bond, &f.a2b.pattern, &bundle.phi_a2b),
        (biases.bond_from_atom, &f.b2a.pattern, &bundle.phi_b2a),
    ];
    for (var, pattern, dense) in pairs {
        let column = tape.value(var);
        for (e, (r, c)) in pattern.entries().enumerate() {
            let (a, b) = (column.data()[e], dense.get(r, c));
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "({r}, {c}): {a} vs {b}");
        }
    }
}

#[test]
fn every_cross_order_is_symmetric_and_distinct() {
    let m = chain(4, 6);
    let mut rng = Rng::new(9);
    let moved = RigidMotion::random(&mut rng).apply_to(&m).unwrap();
    let permuted = m.permuted(&[5, 3, 1, 0, 2, 4]).unwrap();
    let mut predictions = Vec::new();
    for order in [CrossOrder::AtomFirst, CrossOrder::BondFirst, CrossOrder::Parallel] {
        let (model, fz) = setup(&ModelConfig { cross_order: order, ..ModelConfig::micro() }, 1);
        let p = |m: &demol_core::chem::Molecule| model.predict(&fz.example(m).unwrap().features).unwrap();
        let base = p(&m);
        assert!((p(&moved) - base).abs() < 1e-9);
        assert!((p(&permuted) - base).abs() < 1e-9);
        predictions.push(base);
    }
    assert!(predictions[0] != predictions[1] && predictions[1] != predictions[2] && predictions[0] != predictions[2]);
}

#[test]
fn single_precision_tracks_double() {
    let config = ModelConfig::micro();
    let (m64, fz) = setup(&config, 2);
    let m32 = Model::<f32>::from_params(config, m64.params().cast()).unwrap();
    let f = fz.example(&benzene_skeleton()).unwrap().features;
    let (a, b) = (m64.predict(&f).unwrap(), m32.predict(&f).unwrap() as f64);
    assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()), "{a} vs {b}");
}

#[test]
fn attention_outside_the_masks_is_zero() {
    let config = ModelConfig::micro();
    let (model, fz) = setup(&config, 0);
    let ex = fz.example(&chain(6, 8)).unwrap();
    let bundle = model.bundle(&ex, config.cutoff).unwrap();
    let dump = model.dump_attention(&ex.features).unwrap();
    assert_eq!(dump.maps.len(), config.n_layers * config.n_heads * 4);
    for map in &dump.maps {
        let mask = match map.kind {
            demol_core::model::AttentionKind::Atom => &bundle.mask_atom,
            demol_core::model::AttentionKind::Bond => &bundle.mask_bond,
            _ => continue,
        };
        for (i, row) in map.weights.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if !mask.get(i, j) {
                    assert_eq!(w, 0.0);
                }
            }
        }
    }
}

#[test]
fn clipped_gradients_respect_the_bound() {
    let config = ModelConfig::micro();
    let (model, fz) = setup(&config, 0);
    let ex = fz.example(&water().with_target(Some(40.0))).unwrap();
    let draw = model.draw(&ex, &fz, &mut Rng::new(1)).unwrap();
    for bound in [1e-3, 0.5, 5.0] {
        let (_, mut grads) = model.loss_and_grad(&ex, &draw).unwrap();
        let before = grads.global_norm();
        let reported = clip_global_norm(&mut grads, bound);
        assert_eq!(reported, before);
        assert!(grads.global_norm() <= bound + 1e-9);
    }
}

#[test]
fn non_finite_parameters_abort_with_the_step() {
    let molecules = synthetic_chain_dataset(1, 3);
    let config = ModelConfig::micro();
    let fz = config.featurizer(CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap();
    let mut trainer: Trainer<f64> =
        Trainer::new(config, TrainConfig { steps: 10, ..TrainConfig::default() }, fz.clone(), &molecules).unwrap();
    trainer.run_until(4, |_| {}).unwrap();
    let mut ck = trainer.checkpoint().unwrap();
    let mut flat = ck.params.to_flat();
    flat[0] = f64::NAN;
    ck.params.set_flat(&flat).unwrap();
    let mut resumed: Trainer<f64> = Trainer::resume(ck, fz, &molecules).unwrap();
    match resumed.step() {
        Err(Error::Diverged { step }) => assert_eq!(step, 5),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn resume_rejects_a_different_dataset() {
    let molecules = synthetic_chain_dataset(2, 3);
    let config = ModelConfig::micro();
    let fz = config.featurizer(CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap();
    let trainer: Trainer<f64> = Trainer::new(config, TrainConfig::default(), fz.clone(), &molecules).unwrap();
    let ck = trainer.checkpoint().unwrap();
    let other = synthetic_chain_dataset(3, 3);
    assert!(matches!(Trainer::<f64>::resume(ck, fz, &other), Err(Error::Checkpoint(_))));
}

#[test]
fn training_reduces_the_loss() {
    let molecules = synthetic_chain_dataset(4, 4);
    let config = ModelConfig { loss_weights: [1.0, 0.0, 0.0, 0.0], prop_loss: PropLoss::Squared, ..ModelConfig::micro() };
    let fz = config.featurizer(CovalentRadiiTable::default(), DEFAULT_ALPHA).unwrap();
    let mut trainer: Trainer<f64> =
        Trainer::new(config, TrainConfig { steps: 200, ..TrainConfig::default() }, fz, &molecules).unwrap();
    let before = trainer.evaluate().unwrap();
    trainer.train().unwrap();
    let after = trainer.evaluate().unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
}
