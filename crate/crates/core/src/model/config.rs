use serde::{Deserialize, Serialize};

use crate::chem::CovalentRadiiTable;
use crate::encoding::{
    FeatureSettings, Featurizer, Vocabulary, DEFAULT_COSINE_WIDTH, DEFAULT_DISTANCE_WIDTH, DEFAULT_KERNELS,
    DEFAULT_LENGTH_BUCKETS, DEFAULT_LENGTH_BUCKET_WIDTH, DEFAULT_MAX_SPD,
};
use crate::error::{Error, Result};
use crate::masks::DEFAULT_CUTOFF;

/// Order of the two cross-attention steps inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossOrder {
    /// Atoms read bonds first; bonds then read the updated atoms.
    #[default]
    AtomFirst,
    /// Bonds read atoms first; atoms then read the updated bonds.
    BondFirst,
    /// Both steps read the states produced by the self-attention steps.
    Parallel,
}

/// Penalty on the property error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropLoss {
    /// `|y_hat - y|`.
    #[default]
    Absolute,
    /// `(y_hat - y)^2`.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_atom: usize,
    pub d_bond: usize,
    pub d_head: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_multiplier: usize,
    /// Weights of the property, masked-atom, coordinate and bond losses.
    pub loss_weights: [f64; 4],
    pub prop_loss: PropLoss,
    pub mask_ratio: f64,
    pub coord_noise_sigma: f64,
    pub kernels: usize,
    pub distance_width: f64,
    pub cosine_width: f64,
    pub max_spd: usize,
    pub cutoff: f64,
    pub use_masks: bool,
    pub use_torsion: bool,
    pub pre_norm: bool,
    pub cross_order: CrossOrder,
    pub length_bucket_width: f64,
    pub length_buckets: usize,
    pub vocabulary: Vec<String>,
    /// The head predicts `(y - target_mean) / target_std`.
    pub target_mean: f64,
    pub target_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_atom: 16,
            d_bond: 16,
            d_head: 8,
            n_heads: 2,
            n_layers: 2,
            ffn_multiplier: 4,
            loss_weights: [1.0; 4],
            prop_loss: PropLoss::Absolute,
            mask_ratio: 0.15,
            coord_noise_sigma: 0.1,
            kernels: DEFAULT_KERNELS,
            distance_width: DEFAULT_DISTANCE_WIDTH,
            cosine_width: DEFAULT_COSINE_WIDTH,
            max_spd: DEFAULT_MAX_SPD,
            cutoff: DEFAULT_CUTOFF,
            use_masks: true,
            use_torsion: true,
            pre_norm: false,
            cross_order: CrossOrder::AtomFirst,
            length_bucket_width: DEFAULT_LENGTH_BUCKET_WIDTH,
            length_buckets: DEFAULT_LENGTH_BUCKETS,
            vocabulary: CovalentRadiiTable::REQUIRED.iter().map(|s| s.to_string()).collect(),
            target_mean: 0.0,
            target_std: 1.0,
        }
    }
}

impl ModelConfig {
    /// Widths 8, two heads of width 4, two layers.
    pub fn micro() -> Self {
        Self { d_atom: 8, d_bond: 8, d_head: 4, n_heads: 2, n_layers: 2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        for (name, v) in [
            ("d_atom", self.d_atom),
            ("d_bond", self.d_bond),
            ("d_head", self.d_head),
            ("n_heads", self.n_heads),
            ("ffn_multiplier", self.ffn_multiplier),
            ("kernels", self.kernels),
            ("length_buckets", self.length_buckets),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if !self.d_atom.is_multiple_of(self.n_heads) || !self.d_bond.is_multiple_of(self.n_heads) {
            return fail(format!("n_heads = {} must divide d_atom = {} and d_bond = {}", self.n_heads, self.d_atom, self.d_bond));
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return fail(format!("mask_ratio must lie in [0, 1), got {}", self.mask_ratio));
        }
        if !(self.coord_noise_sigma >= 0.0 && self.coord_noise_sigma.is_finite()) {
            return fail(format!("coord_noise_sigma must be finite and >= 0, got {}", self.coord_noise_sigma));
        }
        if self.loss_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return fail(format!("loss weights must be finite and >= 0, got {:?}", self.loss_weights));
        }
        for (name, v) in [
            ("distance_width", self.distance_width),
            ("cosine_width", self.cosine_width),
            ("cutoff", self.cutoff),
            ("length_bucket_width", self.length_bucket_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.target_mean.is_finite() || !(self.target_std > 0.0 && self.target_std.is_finite()) {
            return fail(format!(
                "target_mean must be finite and target_std positive, got {} and {}",
                self.target_mean, self.target_std
            ));
        }
        self.vocab().map(|_| ())
    }

    pub fn vocab(&self) -> Result<Vocabulary> {
        Vocabulary::from_symbols(&self.vocabulary)
    }

    pub fn feature_settings(&self) -> Result<FeatureSettings> {
        Ok(FeatureSettings {
            vocab: self.vocab()?,
            cutoff: self.cutoff,
            use_masks: self.use_masks,
            max_spd: self.max_spd,
            length_bucket_width: self.length_bucket_width,
            length_buckets: self.length_buckets,
        })
    }

    pub fn featurizer(&self, radii: CovalentRadiiTable, alpha: f64) -> Result<Featurizer> {
        Ok(Featurizer { radii, alpha, settings: self.feature_settings()? })
    }

    pub(crate) fn ffn_hidden(&self, d: usize) -> usize {
        self.ffn_multiplier * d
    }

    pub(crate) fn attn_width(&self) -> usize {
        self.n_heads * self.d_head
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::micro().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            ModelConfig { n_heads: 3, ..ModelConfig::micro() },
            ModelConfig { mask_ratio: 1.0, ..ModelConfig::micro() },
            ModelConfig { coord_noise_sigma: -0.1, ..ModelConfig::micro() },
            ModelConfig { d_head: 0, ..ModelConfig::micro() },
            ModelConfig { vocabulary: vec!["Qq".into()], ..ModelConfig::micro() },
            ModelConfig { loss_weights: [1.0, f64::NAN, 0.0, 0.0], ..ModelConfig::micro() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let c = ModelConfig { cross_order: CrossOrder::Parallel, ..ModelConfig::micro() };
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"parallel\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&text).unwrap(), c);
    }
}
