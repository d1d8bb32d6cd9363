use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{GaussianSpec, Pattern, Tape, Tensor, Var};
use crate::encoding::{Features, PairBlock};
use crate::error::Result;
use crate::scalar::Scalar;

use super::config::CrossOrder;
use super::layout::{AttnIds, BankIds, FfnIds};
use super::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    Atom,
    Bond,
    AtomFromBond,
    BondFromAtom,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 4] = [Self::Atom, Self::Bond, Self::AtomFromBond, Self::BondFromAtom];

    pub fn name(self) -> &'static str {
        match self {
            Self::Atom => "atom",
            Self::Bond => "bond",
            Self::AtomFromBond => "atom_from_bond",
            Self::BondFromAtom => "bond_from_atom",
        }
    }
}

/// Softmax weights of one head, one entry per pattern entry.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub layer: usize,
    pub head: usize,
    pub kind: AttentionKind,
    pub weights: Var,
    pub pattern: Arc<Pattern>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Final `N x d_atom` atom states.
    pub h_atom: Var,
    /// Final `M x d_bond` bond states.
    pub h_bond: Var,
    /// `1 x 1`.
    pub prediction: Var,
    /// Populated only when requested.
    pub attention: Vec<AttentionRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct ForwardOptions<'a> {
    /// Atom rows replaced by the mask token at layer 0.
    pub masked_atoms: &'a [usize],
    pub record_attention: bool,
}

/// Layer-independent biases, one column entry per pattern entry.
#[derive(Debug, Clone, Copy)]
pub struct Biases {
    pub atom: Var,
    pub bond: Var,
    pub atom_from_bond: Var,
    pub bond_from_atom: Var,
}

impl<T: Scalar> Model<T> {
    fn kernel_column(&self, tape: &mut Tape<T>, bank: &BankIds, block: &PairBlock) -> Result<Var> {
        let spec = GaussianSpec {
            inputs: block.inputs.iter().map(|&x| T::of(x)).collect(),
            slots: block.slots.clone(),
            mu: bank.mu.iter().map(|&x| T::of(x)).collect(),
            sigma: bank.sigma.iter().map(|&x| T::of(x)).collect(),
        };
        let p = &self.params;
        let (alpha, beta) = (tape.param(p, bank.alpha)?, tape.param(p, bank.beta)?);
        let phi = tape.gaussian_basis(alpha, beta, Arc::new(spec))?;
        let w1 = tape.param(p, bank.w1)?;
        let hidden = tape.matmul(phi, w1)?;
        let hidden = tape.gelu(hidden)?;
        let w2 = tape.param(p, bank.w2)?;
        tape.matmul(hidden, w2)
    }

    /// Distance, SPD and angle encodings over the attention patterns.
    pub fn biases(&self, tape: &mut Tape<T>, f: &Features) -> Result<Biases> {
        let l = &self.layout;
        let atom_dist = self.kernel_column(tape, &l.atom_dist, &f.atom_dist)?;
        let atom_table = tape.param(&self.params, l.atom_spd)?;
        let atom_spd = tape.gather_rows(atom_table, &f.atom_spd)?;
        let atom = tape.add(atom_dist, atom_spd)?;

        let bond_dist = self.kernel_column(tape, &l.bond_dist, &f.bond_dist)?;
        let bond_table = tape.param(&self.params, l.bond_spd)?;
        let bond_spd = tape.gather_rows(bond_table, &f.bond_spd)?;
        let mut bond = tape.add(bond_dist, bond_spd)?;
        if self.config.use_torsion {
            let tors = self.kernel_column(tape, &l.bond_tors, &f.bond_tors)?;
            bond = tape.add(bond, tors)?;
        }

        let atom_from_bond = self.kernel_column(tape, &l.cross_dist, &f.a2b)?;
        let bond_from_atom = self.kernel_column(tape, &l.cross_dist, &f.b2a)?;
        Ok(Biases { atom, bond, atom_from_bond, bond_from_atom })
    }

    /// Layer-0 states.
    pub fn embed(&self, tape: &mut Tape<T>, f: &Features, masked_atoms: &[usize]) -> Result<(Var, Var)> {
        let (l, p) = (&self.layout, &self.params);
        let atom_table = tape.param(p, l.embed_atom)?;
        let mut h_atom = tape.gather_rows(atom_table, &f.atom_categories)?;
        if !masked_atoms.is_empty() {
            let token = tape.param(p, l.mask_token)?;
            h_atom = tape.replace_rows(h_atom, token, masked_atoms)?;
        }
        let type_table = tape.param(p, l.embed_bond_type)?;
        let length_table = tape.param(p, l.embed_bond_length)?;
        let by_type = tape.gather_rows(type_table, &f.bond_types)?;
        let by_length = tape.gather_rows(length_table, &f.length_buckets)?;
        let h_bond = tape.add(by_type, by_length)?;
        Ok((h_atom, h_bond))
    }

    fn ffn(&self, tape: &mut Tape<T>, ids: &FfnIds, x: Var) -> Result<Var> {
        let p = &self.params;
        let x = if self.config.pre_norm { tape.row_norm(x)? } else { x };
        let w1 = tape.param(p, ids.w1)?;
        let b1 = tape.param(p, ids.b1)?;
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.gelu(h)?;
        let w2 = tape.param(p, ids.w2)?;
        let b2 = tape.param(p, ids.b2)?;
        let out = tape.matmul(h, w2)?;
        tape.add_row(out, b2)
    }

    /// One attention step: `FFN(h_query + attention(h_query, h_source))`.
    /// The bias is shared by every head after the per-layer gain.
    #[allow(clippy::too_many_arguments)]
    fn attend(
        &self,
        tape: &mut Tape<T>,
        ids: &AttnIds,
        h_query: Var,
        h_source: Var,
        pattern: &Arc<Pattern>,
        bias: Var,
        record: Option<(usize, AttentionKind, &mut Vec<AttentionRecord>)>,
    ) -> Result<Var> {
        let p = &self.params;
        let gain = tape.param(p, ids.bias_gain)?;
        let bias = tape.scalar_mul(bias, gain)?;
        let (q_in, s_in) = if self.config.pre_norm {
            (tape.row_norm(h_query)?, tape.row_norm(h_source)?)
        } else {
            (h_query, h_source)
        };
        let inv_scale = T::one() / T::of(self.config.d_head as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.n_heads);
        let mut weights_out = Vec::new();
        for h in 0..self.config.n_heads {
            let wq = tape.param(p, ids.wq[h])?;
            let wk = tape.param(p, ids.wk[h])?;
            let wv = tape.param(p, ids.wv[h])?;
            let q = tape.matmul(q_in, wq)?;
            let k = tape.matmul(s_in, wk)?;
            let v = tape.matmul(s_in, wv)?;
            let scores = tape.pair_dot(q, k, pattern.clone())?;
            let scores = tape.scale(scores, inv_scale)?;
            let scores = tape.add(scores, bias)?;
            let w = tape.row_softmax(scores, pattern.clone())?;
            weights_out.push(w);
            heads.push(tape.pattern_matmul(w, pattern.clone(), v)?);
        }
        if let Some((layer, kind, sink)) = record {
            for (head, weights) in weights_out.into_iter().enumerate() {
                sink.push(AttentionRecord { layer, head, kind, weights, pattern: pattern.clone() });
            }
        }
        let joined = tape.concat_cols(&heads)?;
        let wo = tape.param(p, ids.wo)?;
        let mixed = tape.matmul(joined, wo)?;
        let x = tape.add(h_query, mixed)?;
        self.ffn(tape, &ids.ffn, x)
    }

    pub fn forward(&self, tape: &mut Tape<T>, f: &Features, opts: &ForwardOptions) -> Result<ForwardOutput> {
        let biases = self.biases(tape, f)?;
        let (mut h_atom, mut h_bond) = self.embed(tape, f, opts.masked_atoms)?;
        let mut records = Vec::new();
        for (layer, ids) in self.layout.layers.iter().enumerate() {
            macro_rules! rec {
                ($kind:expr) => {
                    opts.record_attention.then_some((layer, $kind, &mut records))
                };
            }
            h_atom = self.attend(tape, &ids.atom, h_atom, h_atom, &f.atom_dist.pattern, biases.atom, rec!(AttentionKind::Atom))?;
            h_bond = self.attend(tape, &ids.bond, h_bond, h_bond, &f.bond_dist.pattern, biases.bond, rec!(AttentionKind::Bond))?;
            let (a2b, b2a) = (&f.a2b.pattern, &f.b2a.pattern);
            let (kind_a, kind_b) = (AttentionKind::AtomFromBond, AttentionKind::BondFromAtom);
            match self.config.cross_order {
                CrossOrder::AtomFirst => {
                    h_atom = self.attend(tape, &ids.atom_from_bond, h_atom, h_bond, a2b, biases.atom_from_bond, rec!(kind_a))?;
                    h_bond = self.attend(tape, &ids.bond_from_atom, h_bond, h_atom, b2a, biases.bond_from_atom, rec!(kind_b))?;
                }
                CrossOrder::BondFirst => {
                    h_bond = self.attend(tape, &ids.bond_from_atom, h_bond, h_atom, b2a, biases.bond_from_atom, rec!(kind_b))?;
                    h_atom = self.attend(tape, &ids.atom_from_bond, h_atom, h_bond, a2b, biases.atom_from_bond, rec!(kind_a))?;
                }
                CrossOrder::Parallel => {
                    let new_atom =
                        self.attend(tape, &ids.atom_from_bond, h_atom, h_bond, a2b, biases.atom_from_bond, rec!(kind_a))?;
                    h_bond = self.attend(tape, &ids.bond_from_atom, h_bond, h_atom, b2a, biases.bond_from_atom, rec!(kind_b))?;
                    h_atom = new_atom;
                }
            }
        }
        let prediction = self.readout(tape, h_atom, h_bond)?;
        Ok(ForwardOutput { h_atom, h_bond, prediction, attention: records })
    }

    /// Linear head over the concatenated mean atom and mean bond states,
    /// mapped from standardized units to eV. The bond mean is zero for a
    /// molecule without bonds.
    fn readout(&self, tape: &mut Tape<T>, h_atom: Var, h_bond: Var) -> Result<Var> {
        let atom_mean = tape.mean_rows(h_atom)?;
        let bond_mean = if tape.shape(h_bond)[0] == 0 {
            tape.constant(Tensor::zeros(1, self.config.d_bond))?
        } else {
            tape.mean_rows(h_bond)?
        };
        let pooled = tape.concat_cols(&[atom_mean, bond_mean])?;
        let w = tape.param(&self.params, self.layout.prop_w)?;
        let b = tape.param(&self.params, self.layout.prop_b)?;
        let out = tape.matmul(pooled, w)?;
        let out = tape.add(out, b)?;
        let out = tape.scale(out, T::of(self.config.target_std))?;
        let mean = tape.constant(Tensor::scalar(T::of(self.config.target_mean)))?;
        tape.add(out, mean)
    }

    /// Scalar prediction in eV.
    pub fn predict(&self, f: &Features) -> Result<T> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, f, &ForwardOptions::default())?;
        tape.value(out.prediction).item()
    }
}
