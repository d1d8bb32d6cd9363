//! The two-channel attention model, its readout and its training losses.

mod config;
mod forward;
mod layout;
mod loss;

pub use config::{CrossOrder, ModelConfig, PropLoss};
pub use forward::{AttentionKind, AttentionRecord, Biases, ForwardOptions, ForwardOutput};
pub use loss::{coord_sse, mae, masked_count, LossDraw, LossTerms};

use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check_refined, GradCheckReport, ParamStore, Tape};
use crate::encoding::{
    assemble_bundle, EncoderSet, EncodingBundle, Example, Features, GaussianKernelBank, SpdEncoder, Vocabulary,
};
use crate::error::{Error, Result};
use crate::graph::{bond_geometry, build_atom_graph, build_line_graph};
use crate::rng::Rng;
use crate::scalar::{DoubleDouble, Scalar};

use layout::{BankIds, Layout};

#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    vocab: Vocabulary,
    layout: Layout,
    params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = config.vocab()?;
        let (layout, params) = Layout::create(&config, &vocab, &mut Rng::new(seed))?;
        Ok(Self { config, vocab, layout, params })
    }

    /// Wraps existing parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let vocab = config.vocab()?;
        let layout = Layout::resolve(&config, &vocab, &params)?;
        Ok(Self { config, vocab, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    fn bank(&self, ids: &BankIds) -> GaussianKernelBank<T> {
        let p = &self.params;
        GaussianKernelBank {
            mu: ids.mu.iter().map(|&x| T::of(x)).collect(),
            sigma: ids.sigma.iter().map(|&x| T::of(x)).collect(),
            alpha: p.get(ids.alpha).data().to_vec(),
            beta: p.get(ids.beta).data().to_vec(),
            w1: p.get(ids.w1).clone(),
            w2: p.get(ids.w2).clone(),
        }
    }

    /// Current encoder parameters, for building dense bias matrices.
    pub fn encoders(&self) -> EncoderSet<T> {
        let l = &self.layout;
        let spd = |id| SpdEncoder { max_spd: self.config.max_spd, table: self.params.get(id).data().to_vec() };
        EncoderSet {
            vocab: self.vocab.clone(),
            atom_dist: self.bank(&l.atom_dist),
            bond_dist: self.bank(&l.bond_dist),
            bond_tors: self.bank(&l.bond_tors),
            cross_dist: self.bank(&l.cross_dist),
            atom_spd: spd(l.atom_spd),
            bond_spd: spd(l.bond_spd),
            use_torsion: self.config.use_torsion,
        }
    }

    /// Dense bias matrices, masks, hop counts and cosines of one example.
    pub fn bundle(&self, ex: &Example, cutoff: f64) -> Result<EncodingBundle<T>> {
        let g = build_atom_graph(&ex.molecule, &ex.bonds)?;
        let bg = build_line_graph(&g, &ex.bonds)?;
        let nodes = bond_geometry(&ex.molecule, &ex.bonds)?;
        assemble_bundle(&ex.molecule, &g, &bg, &nodes, &self.encoders(), cutoff)
    }

    /// Projection weights of the angle encoder (`K x 1`).
    pub fn torsion_projection_mut(&mut self) -> &mut crate::autodiff::Tensor<T> {
        self.params.get_mut(self.layout.bond_tors.w2)
    }

    /// Central finite differences of the total loss against its gradient on
    /// every parameter coordinate. Coordinates that disagree by more than
    /// `refine_above` are differenced again in double-double precision, which
    /// separates real mismatches from cancellation noise in the loss difference.
    pub fn grad_check(&self, ex: &Example, draw: &LossDraw, step: f64, refine_above: f64) -> Result<GradCheckReport> {
        let objective = |store: &ParamStore<T>, tape: &mut Tape<T>| {
            let model = Model { config: self.config.clone(), vocab: self.vocab.clone(), layout: self.layout.clone(), params: store.clone() };
            Ok(model.total_loss(tape, ex, draw)?.0)
        };
        let oracle = |store: &ParamStore<DoubleDouble>| {
            let model = Model::<DoubleDouble>::from_params(self.config.clone(), store.clone())?;
            let mut tape = Tape::new();
            let (loss, _) = model.total_loss(&mut tape, ex, draw)?;
            tape.value(loss).item()
        };
        grad_check_refined(&self.params, step, refine_above, objective, oracle)
    }

    /// Every attention map of one forward pass as dense matrices.
    pub fn dump_attention(&self, f: &Features) -> Result<AttentionDump> {
        let mut tape = Tape::new();
        let opts = ForwardOptions { masked_atoms: &[], record_attention: true };
        let out = self.forward(&mut tape, f, &opts)?;
        let mut maps = Vec::with_capacity(out.attention.len());
        for r in &out.attention {
            let values = tape.value(r.weights);
            let (rows, cols) = (r.pattern.rows(), r.pattern.cols());
            let mut dense = vec![vec![0.0; cols]; rows];
            for (e, (i, j)) in r.pattern.entries().enumerate() {
                dense[i][j] = values.data()[e].to_f64_lossy();
            }
            maps.push(AttentionMap { layer: r.layer, head: r.head, kind: r.kind, shape: [rows, cols], weights: dense });
        }
        let prediction = tape.value(out.prediction).item()?.to_f64_lossy();
        if !prediction.is_finite() {
            return Err(Error::NonFinite("prediction"));
        }
        Ok(AttentionDump {
            n_atoms: f.n_atoms,
            n_bonds: f.n_bonds,
            n_layers: self.config.n_layers,
            n_heads: self.config.n_heads,
            prediction_ev: prediction,
            maps,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub layer: usize,
    pub head: usize,
    pub kind: AttentionKind,
    pub shape: [usize; 2],
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub n_atoms: usize,
    pub n_bonds: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub prediction_ev: f64,
    pub maps: Vec<AttentionMap>,
}
