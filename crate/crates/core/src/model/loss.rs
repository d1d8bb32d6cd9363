use serde::Serialize;

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::encoding::{Example, Featurizer, Features};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::config::PropLoss;
use super::forward::ForwardOptions;
use super::Model;

/// Random choices behind one evaluation of the pretraining losses.
#[derive(Debug, Clone, Default)]
pub struct LossDraw {
    /// Atoms hidden behind the mask token.
    pub masked: Vec<usize>,
    /// Features of the noise-perturbed geometry.
    pub noisy: Option<Features>,
}

/// Unweighted loss terms; `None` when the term's weight is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossTerms {
    pub prop: Option<f64>,
    pub mask: Option<f64>,
    pub coord: Option<f64>,
    pub bond: Option<f64>,
    pub total: f64,
}

/// Number of atoms hidden for a mask ratio: at least one when the ratio is positive.
pub fn masked_count(n_atoms: usize, ratio: f64) -> usize {
    if ratio <= 0.0 || n_atoms == 0 {
        0
    } else {
        ((ratio * n_atoms as f64).round() as usize).clamp(1, n_atoms)
    }
}

/// `sum_i |p_i - p_hat_i|^2` over atoms.
pub fn coord_sse(clean: &[[f64; 3]], predicted: &[[f64; 3]]) -> f64 {
    clean.iter().zip(predicted).flat_map(|(p, q)| (0..3).map(move |k| (p[k] - q[k]).powi(2))).sum()
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], targets: &[f64]) -> f64 {
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    total / predictions.len().max(1) as f64
}

impl<T: Scalar> Model<T> {
    /// Draws mask positions, then coordinate noise (atom-major, x/y/z), only for
    /// terms with non-zero weight.
    pub fn draw(&self, ex: &Example, featurizer: &Featurizer, rng: &mut Rng) -> Result<LossDraw> {
        let [_, w_mask, w_coord, _] = self.config.loss_weights;
        let n = ex.molecule.len();
        let masked = if w_mask > 0.0 { rng.sample_indices(n, masked_count(n, self.config.mask_ratio)) } else { Vec::new() };
        let noisy = if w_coord > 0.0 {
            let sigma = self.config.coord_noise_sigma;
            let positions: Vec<[f64; 3]> = ex
                .molecule
                .positions()
                .iter()
                .map(|p| {
                    let mut q = *p;
                    for c in &mut q {
                        *c += sigma * rng.normal();
                    }
                    q
                })
                .collect();
            let moved = ex.molecule.with_positions(&positions)?;
            Some(featurizer.featurize(&moved, &ex.bonds)?)
        } else {
            None
        };
        Ok(LossDraw { masked, noisy })
    }

    /// `|prediction - target|`, or its square.
    pub fn loss_prop(&self, tape: &mut Tape<T>, prediction: Var, f: &Features) -> Result<Var> {
        let target = f.target.ok_or_else(|| Error::MissingTarget(f.name.clone()))?;
        let t = tape.constant(Tensor::scalar(T::of(target)))?;
        let diff = tape.sub(prediction, t)?;
        match self.config.prop_loss {
            PropLoss::Absolute => tape.abs(diff),
            PropLoss::Squared => tape.mul(diff, diff),
        }
    }

    /// Summed cross-entropy of the element classifier at the masked atoms.
    pub fn loss_mask(&self, tape: &mut Tape<T>, f: &Features, masked: &[usize]) -> Result<Var> {
        if masked.is_empty() {
            return tape.constant(Tensor::scalar(T::zero()));
        }
        let out = self.forward(tape, f, &ForwardOptions { masked_atoms: masked, record_attention: false })?;
        let w = tape.param(&self.params, self.layout.mask_w)?;
        let b = tape.param(&self.params, self.layout.mask_b)?;
        let logits = tape.matmul(out.h_atom, w)?;
        let logits = tape.add_row(logits, b)?;
        let targets: Vec<usize> = masked.iter().map(|&i| f.atom_categories[i]).collect();
        tape.cross_entropy(logits, masked, &targets)
    }

    /// Per-atom offsets predicted from the states of the noisy geometry; the
    /// clean estimate is `noisy + offset`.
    pub fn coord_offsets(&self, tape: &mut Tape<T>, noisy: &Features) -> Result<Var> {
        let out = self.forward(tape, noisy, &ForwardOptions::default())?;
        let w = tape.param(&self.params, self.layout.coord_w)?;
        let b = tape.param(&self.params, self.layout.coord_b)?;
        let offsets = tape.matmul(out.h_atom, w)?;
        tape.add_row(offsets, b)
    }

    /// `sum_i |p_i - p_hat_i|^2`.
    pub fn loss_coord(&self, tape: &mut Tape<T>, clean: &Features, noisy: &Features) -> Result<Var> {
        let offsets = self.coord_offsets(tape, noisy)?;
        let shift = Tensor::from_fn(clean.n_atoms, 3, |i, k| T::of(noisy.positions[i][k] - clean.positions[i][k]));
        let shift = tape.constant(shift)?;
        let residual = tape.add(offsets, shift)?;
        let squared = tape.mul(residual, residual)?;
        tape.sum(squared)
    }

    /// Symmetric bilinear logits `(h_i W h_j + h_j W h_i) / 2 + b`, one per candidate pair.
    pub fn bond_logits(&self, tape: &mut Tape<T>, f: &Features, h_atom: Var) -> Result<Var> {
        let w = tape.param(&self.params, self.layout.bond_w)?;
        let b = tape.param(&self.params, self.layout.bond_b)?;
        let hw = tape.matmul(h_atom, w)?;
        let forward = tape.pair_dot(hw, h_atom, f.candidates.clone())?;
        let backward = tape.pair_dot(h_atom, hw, f.candidates.clone())?;
        let both = tape.add(forward, backward)?;
        let mean = tape.scale(both, T::of(0.5))?;
        tape.add_row(mean, b)
    }

    /// Mean binary cross-entropy over candidate pairs; zero without candidates.
    pub fn loss_bond(&self, tape: &mut Tape<T>, f: &Features, h_atom: Var) -> Result<Var> {
        let logits = self.bond_logits(tape, f, h_atom)?;
        tape.bce_with_logits(logits, &f.candidate_labels)
    }

    /// Weighted sum of the four terms, skipping zero weights entirely.
    pub fn total_loss(&self, tape: &mut Tape<T>, ex: &Example, draw: &LossDraw) -> Result<(Var, LossTerms)> {
        let [w_prop, w_mask, w_coord, w_bond] = self.config.loss_weights;
        let f = &ex.features;
        let mut terms = LossTerms::default();
        let mut parts = Vec::new();
        let clean = if w_prop > 0.0 || w_bond > 0.0 {
            Some(self.forward(tape, f, &ForwardOptions::default())?)
        } else {
            None
        };
        if let (true, Some(out)) = (w_prop > 0.0, &clean) {
            let l = self.loss_prop(tape, out.prediction, f)?;
            terms.prop = Some(tape.value(l).item()?.to_f64_lossy());
            parts.push((l, w_prop));
        }
        if w_mask > 0.0 {
            let l = self.loss_mask(tape, f, &draw.masked)?;
            terms.mask = Some(tape.value(l).item()?.to_f64_lossy());
            parts.push((l, w_mask));
        }
        if w_coord > 0.0 {
            let noisy = draw.noisy.as_ref().ok_or_else(|| Error::Config("coordinate loss needs a noisy draw".into()))?;
            let l = self.loss_coord(tape, f, noisy)?;
            terms.coord = Some(tape.value(l).item()?.to_f64_lossy());
            parts.push((l, w_coord));
        }
        if let (true, Some(out)) = (w_bond > 0.0, &clean) {
            let l = self.loss_bond(tape, f, out.h_atom)?;
            terms.bond = Some(tape.value(l).item()?.to_f64_lossy());
            parts.push((l, w_bond));
        }
        let mut total = tape.constant(Tensor::scalar(T::zero()))?;
        for (l, w) in parts {
            let weighted = tape.scale(l, T::of(w))?;
            total = tape.add(total, weighted)?;
        }
        terms.total = tape.value(total).item()?.to_f64_lossy();
        Ok((total, terms))
    }

    /// Loss value and parameter gradients for one example.
    pub fn loss_and_grad(&self, ex: &Example, draw: &LossDraw) -> Result<(LossTerms, Gradients<T>)> {
        let mut tape = Tape::new();
        let (loss, terms) = self.total_loss(&mut tape, ex, draw)?;
        let grads = tape.backward(loss, &self.params)?;
        Ok((terms, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_counts() {
        assert_eq!(masked_count(3, 0.15), 1);
        assert_eq!(masked_count(20, 0.15), 3);
        assert_eq!(masked_count(10, 0.25), 3);
        assert_eq!(masked_count(5, 0.0), 0);
    }

    #[test]
    fn closed_form_coordinates() {
        let p = [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]];
        assert_eq!(coord_sse(&p, &p), 0.0);
        let shifted: Vec<_> = p.iter().map(|q| [q[0] + 1.0, q[1], q[2]]).collect();
        assert_eq!(coord_sse(&p, &shifted), 3.0);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(mae(&[2.0, 3.0], &[1.0, 2.0]), 1.0);
        assert_eq!(mae(&[0.5, -1.5], &[0.0, 0.0]), 1.0);
    }
}
