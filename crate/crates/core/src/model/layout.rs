//! Names, shapes and initial values of every learnable tensor.
//!
//! The same walk either registers fresh parameters or resolves them in an
//! existing store, so a loaded checkpoint and a new model agree on layout.

use crate::autodiff::{ParamId, ParamStore, Tensor};
use crate::encoding::{kernel_centres, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::config::ModelConfig;

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal(f64),
    Const(f64),
}

trait Registrar {
    fn param(&mut self, name: String, rows: usize, cols: usize, init: Init) -> Result<ParamId>;
}

struct Create<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut Rng,
}

impl<T: Scalar> Registrar for Create<'_, T> {
    fn param(&mut self, name: String, rows: usize, cols: usize, init: Init) -> Result<ParamId> {
        let value = match init {
            Init::Const(c) => Tensor::filled(rows, cols, T::of(c)),
            Init::Normal(std) => {
                let data = (0..rows * cols).map(|_| T::of(std * self.rng.normal())).collect();
                Tensor::new(rows, cols, data)?
            }
        };
        self.store.add(name, value)
    }
}

struct Resolve<'a, T> {
    store: &'a ParamStore<T>,
    seen: usize,
}

impl<T: Scalar> Registrar for Resolve<'_, T> {
    fn param(&mut self, name: String, rows: usize, cols: usize, _: Init) -> Result<ParamId> {
        let id = self.store.id(&name).ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?;
        let shape = self.store.get(id).shape();
        if shape != [rows, cols] {
            return Err(Error::Config(format!("parameter `{name}` has shape {shape:?}, expected {:?}", [rows, cols])));
        }
        self.seen += 1;
        Ok(id)
    }
}

fn glorot(fan_in: usize) -> Init {
    Init::Normal(1.0 / (fan_in as f64).sqrt())
}

#[derive(Debug, Clone)]
pub(crate) struct BankIds {
    pub alpha: ParamId,
    pub beta: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl BankIds {
    fn build(r: &mut impl Registrar, name: &str, slots: usize, kernels: usize, width: f64) -> Result<Self> {
        let (mu, sigma) = kernel_centres::<f64>(kernels, width);
        Ok(Self {
            alpha: r.param(format!("{name}.alpha"), slots, 1, Init::Const(1.0))?,
            beta: r.param(format!("{name}.beta"), slots, 1, Init::Const(0.0))?,
            w1: r.param(format!("{name}.w1"), kernels, kernels, glorot(kernels))?,
            w2: r.param(format!("{name}.w2"), kernels, 1, glorot(kernels))?,
            mu,
            sigma,
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct AttnIds {
    pub wq: Vec<ParamId>,
    pub wk: Vec<ParamId>,
    pub wv: Vec<ParamId>,
    pub wo: ParamId,
    pub bias_gain: ParamId,
    pub ffn: FfnIds,
}

impl AttnIds {
    fn build(r: &mut impl Registrar, c: &ModelConfig, name: &str, d_query: usize, d_source: usize) -> Result<Self> {
        let mut wq = Vec::new();
        let mut wk = Vec::new();
        let mut wv = Vec::new();
        for h in 0..c.n_heads {
            wq.push(r.param(format!("{name}.head{h}.wq"), d_query, c.d_head, glorot(d_query))?);
            wk.push(r.param(format!("{name}.head{h}.wk"), d_source, c.d_head, glorot(d_source))?);
            wv.push(r.param(format!("{name}.head{h}.wv"), d_source, c.d_head, glorot(d_source))?);
        }
        let hidden = c.ffn_hidden(d_query);
        Ok(Self {
            wq,
            wk,
            wv,
            wo: r.param(format!("{name}.wo"), c.attn_width(), d_query, glorot(c.attn_width()))?,
            bias_gain: r.param(format!("{name}.bias_gain"), 1, 1, Init::Const(1.0))?,
            ffn: FfnIds {
                w1: r.param(format!("{name}.ffn.w1"), d_query, hidden, glorot(d_query))?,
                b1: r.param(format!("{name}.ffn.b1"), 1, hidden, Init::Const(0.0))?,
                w2: r.param(format!("{name}.ffn.w2"), hidden, d_query, glorot(hidden))?,
                b2: r.param(format!("{name}.ffn.b2"), 1, d_query, Init::Const(0.0))?,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerIds {
    pub atom: AttnIds,
    pub bond: AttnIds,
    pub atom_from_bond: AttnIds,
    pub bond_from_atom: AttnIds,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub embed_atom: ParamId,
    pub embed_bond_type: ParamId,
    pub embed_bond_length: ParamId,
    pub mask_token: ParamId,
    pub atom_dist: BankIds,
    pub bond_dist: BankIds,
    pub bond_tors: BankIds,
    pub cross_dist: BankIds,
    pub atom_spd: ParamId,
    pub bond_spd: ParamId,
    pub layers: Vec<LayerIds>,
    pub prop_w: ParamId,
    pub prop_b: ParamId,
    pub mask_w: ParamId,
    pub mask_b: ParamId,
    pub coord_w: ParamId,
    pub coord_b: ParamId,
    pub bond_w: ParamId,
    pub bond_b: ParamId,
}

impl Layout {
    fn build(r: &mut impl Registrar, c: &ModelConfig, v: &Vocabulary) -> Result<Self> {
        let (da, db, k) = (c.d_atom, c.d_bond, c.kernels);
        let classes = v.atom_categories();
        let embed_atom = r.param("embed.atom".into(), classes, da, glorot(da))?;
        let embed_bond_type = r.param("embed.bond_type".into(), v.bond_types(), db, glorot(db))?;
        let embed_bond_length = r.param("embed.bond_length".into(), c.length_buckets, db, glorot(db))?;
        let mask_token = r.param("embed.mask_token".into(), 1, da, glorot(da))?;
        let atom_dist = BankIds::build(r, "enc.atom_dist", v.atom_pair_slots(), k, c.distance_width)?;
        let bond_dist = BankIds::build(r, "enc.bond_dist", v.bond_pair_slots(), k, c.distance_width)?;
        let bond_tors = BankIds::build(r, "enc.bond_tors", v.bond_pair_slots(), k, c.cosine_width)?;
        let cross_dist = BankIds::build(r, "enc.cross_dist", v.cross_slots(), k, c.distance_width)?;
        let atom_spd = r.param("enc.atom_spd".into(), c.max_spd + 2, 1, Init::Normal(0.1))?;
        let bond_spd = r.param("enc.bond_spd".into(), c.max_spd + 2, 1, Init::Normal(0.1))?;
        let mut layers = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            layers.push(LayerIds {
                atom: AttnIds::build(r, c, &format!("layer{l}.atom"), da, da)?,
                bond: AttnIds::build(r, c, &format!("layer{l}.bond"), db, db)?,
                atom_from_bond: AttnIds::build(r, c, &format!("layer{l}.atom_from_bond"), da, db)?,
                bond_from_atom: AttnIds::build(r, c, &format!("layer{l}.bond_from_atom"), db, da)?,
            });
        }
        Ok(Self {
            embed_atom,
            embed_bond_type,
            embed_bond_length,
            mask_token,
            atom_dist,
            bond_dist,
            bond_tors,
            cross_dist,
            atom_spd,
            bond_spd,
            layers,
            prop_w: r.param("head.prop.w".into(), da + db, 1, glorot(da + db))?,
            prop_b: r.param("head.prop.b".into(), 1, 1, Init::Const(0.0))?,
            mask_w: r.param("head.mask.w".into(), da, classes, glorot(da))?,
            mask_b: r.param("head.mask.b".into(), 1, classes, Init::Const(0.0))?,
            coord_w: r.param("head.coord.w".into(), da, 3, glorot(da))?,
            coord_b: r.param("head.coord.b".into(), 1, 3, Init::Const(0.0))?,
            bond_w: r.param("head.bond.w".into(), da, da, glorot(da))?,
            bond_b: r.param("head.bond.b".into(), 1, 1, Init::Const(0.0))?,
        })
    }

    pub fn create<T: Scalar>(c: &ModelConfig, v: &Vocabulary, rng: &mut Rng) -> Result<(Self, ParamStore<T>)> {
        let mut store = ParamStore::new();
        let layout = Self::build(&mut Create { store: &mut store, rng }, c, v)?;
        Ok((layout, store))
    }

    pub fn resolve<T: Scalar>(c: &ModelConfig, v: &Vocabulary, store: &ParamStore<T>) -> Result<Self> {
        let mut r = Resolve { store, seen: 0 };
        let layout = Self::build(&mut r, c, v)?;
        if store.len() != r.seen {
            return Err(Error::Config(format!("store has {} parameters, layout expects {}", store.len(), r.seen)));
        }
        Ok(layout)
    }
}
