//! Deterministic per-molecule training loop.
//!
//! Every random choice comes from one seeded stream, molecules are visited
//! round-robin, and the full loop state fits in a [`Checkpoint`], so a resumed
//! run continues bit-for-bit where an uninterrupted one would be.

mod checkpoint;
mod optim;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{clip_global_norm, AdamW, AdamWSettings};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chem::Molecule;
use crate::encoding::{Example, Featurizer};
use crate::error::{Error, Result};
use crate::model::{mae, LossTerms, Model, ModelConfig};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Stream of the training generator; stream 0 initializes parameters.
const TRAIN_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub log_every: usize,
    /// Fit the model's target mean and scale to the training targets.
    pub standardize_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 2000,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: 5.0,
            log_every: 100,
            standardize_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.grad_clip > 0.0) {
            return fail(format!("grad_clip must be positive, got {}", self.grad_clip));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be finite and >= 0, got {}", self.weight_decay));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWSettings {
        AdamWSettings {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    /// 1-based index of the completed step.
    pub step: usize,
    /// Dataset position of the molecule used.
    pub example: usize,
    pub loss: LossTerms,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// Model, optimizer, generator and data of one training run.
#[derive(Debug, Clone)]
pub struct Trainer<T: Scalar> {
    model: Model<T>,
    featurizer: Featurizer,
    examples: Vec<Example>,
    config: TrainConfig,
    optimizer: AdamW<T>,
    rng: Rng,
    step: usize,
    history: Vec<StepLog>,
}

impl<T: Scalar> Trainer<T> {
    /// Fresh run: parameters initialized from `config.seed`.
    pub fn new(
        model_config: ModelConfig,
        config: TrainConfig,
        featurizer: Featurizer,
        molecules: &[Molecule],
    ) -> Result<Self> {
        config.validate()?;
        let mut model_config = model_config;
        if config.standardize_targets && model_config.loss_weights[0] > 0.0 {
            let (mean, std) = target_moments(molecules);
            model_config.target_mean = mean;
            model_config.target_std = std;
        }
        let model = Model::new(model_config, config.seed)?;
        let examples = prepare(&model, &featurizer, molecules)?;
        let optimizer = AdamW::new(model.params().flat_len());
        let rng = Rng::with_stream(config.seed, TRAIN_STREAM);
        Ok(Self { model, featurizer, examples, config, optimizer, rng, step: 0, history: Vec::new() })
    }

    /// Continues a run from a checkpoint taken on the same dataset.
    pub fn resume(checkpoint: Checkpoint, featurizer: Featurizer, molecules: &[Molecule]) -> Result<Self> {
        let Checkpoint { step, model_config, train_config, params, m, v, updates, rng, history, dataset_digest } =
            checkpoint;
        train_config.validate()?;
        let params = exact_cast(&params)?;
        let model = Model::from_params(model_config, params)?;
        let examples = prepare(&model, &featurizer, molecules)?;
        if digest(&examples) != dataset_digest {
            return Err(Error::Checkpoint("dataset or bond perception differs from the checkpointed run".into()));
        }
        let n = model.params().flat_len();
        if m.len() != n {
            return Err(Error::Checkpoint(format!("{} moments for {n} parameters", m.len())));
        }
        let optimizer = AdamW::from_parts(m.into_iter().map(T::of).collect(), v.into_iter().map(T::of).collect(), updates)?;
        Ok(Self {
            model,
            featurizer,
            examples,
            config: train_config,
            optimizer,
            rng: Rng::from_state(rng),
            step,
            history,
        })
    }

    /// Complete loop state; fails for scalar types that do not round-trip through f64.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let (m, v) = self.optimizer.moments();
        let lossless = |xs: &[T]| -> Result<Vec<f64>> {
            xs.iter()
                .map(|&x| {
                    let y = x.to_f64_lossy();
                    if T::of(y) == x {
                        Ok(y)
                    } else {
                        Err(Error::Checkpoint("scalar type does not round-trip through f64".into()))
                    }
                })
                .collect()
        };
        let params = self.model.params();
        lossless(&params.to_flat())?;
        Ok(Checkpoint {
            step: self.step,
            model_config: self.model.config().clone(),
            train_config: self.config.clone(),
            params: params.cast(),
            m: lossless(m)?,
            v: lossless(v)?,
            updates: self.optimizer.updates(),
            rng: self.rng.state(),
            history: self.history.clone(),
            dataset_digest: digest(&self.examples),
        })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    /// Completed steps.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn history(&self) -> &[StepLog] {
        &self.history
    }

    /// Forward, backward, clip and update on the next molecule.
    pub fn step(&mut self) -> Result<StepLog> {
        let index = self.step % self.examples.len();
        let step = self.step + 1;
        let diverged = |e: Error| if e.is_numeric() { Error::Diverged { step } } else { e };
        let ex = &self.examples[index];
        let draw = self.model.draw(ex, &self.featurizer, &mut self.rng)?;
        let (loss, mut grads) = self.model.loss_and_grad(ex, &draw).map_err(diverged)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged { step });
        }
        let grad_norm = clip_global_norm(&mut grads, self.config.grad_clip);
        if !grad_norm.is_finite() {
            return Err(Error::Diverged { step });
        }
        self.optimizer.step(self.model.params_mut(), &grads, &self.config.adamw())?;
        self.step = step;
        let log = StepLog { step, example: index, loss, grad_norm };
        self.history.push(log);
        Ok(log)
    }

    /// Steps until `until` steps are complete, calling `on_step` after each.
    pub fn run_until(&mut self, until: usize, mut on_step: impl FnMut(&StepLog)) -> Result<()> {
        while self.step < until {
            let log = self.step()?;
            on_step(&log);
        }
        Ok(())
    }

    /// Runs to `config.steps`.
    pub fn train(&mut self) -> Result<()> {
        self.run_until(self.config.steps, |_| {})
    }

    /// Training-set mean absolute error of the current parameters.
    pub fn evaluate(&self) -> Result<f64> {
        evaluate(&self.model, &self.examples)
    }
}

/// Final model and per-step losses of a complete run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub model: Model<T>,
    pub history: Vec<StepLog>,
}

/// Trains from scratch for `config.steps` steps.
pub fn train<T: Scalar>(
    molecules: &[Molecule],
    model_config: ModelConfig,
    config: TrainConfig,
    featurizer: Featurizer,
) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::new(model_config, config, featurizer, molecules)?;
    trainer.train()?;
    let history = trainer.history.clone();
    Ok(TrainOutcome { model: trainer.into_model(), history })
}

/// Mean `|target - prediction|` in eV.
pub fn evaluate<T: Scalar>(model: &Model<T>, examples: &[Example]) -> Result<f64> {
    let mut predictions = Vec::with_capacity(examples.len());
    let mut targets = Vec::with_capacity(examples.len());
    for ex in examples {
        let f = &ex.features;
        targets.push(f.target.ok_or_else(|| Error::MissingTarget(f.name.clone()))?);
        predictions.push(model.predict(f)?.to_f64_lossy());
    }
    Ok(mae(&predictions, &targets))
}

fn prepare<T: Scalar>(model: &Model<T>, featurizer: &Featurizer, molecules: &[Molecule]) -> Result<Vec<Example>> {
    if molecules.is_empty() {
        return Err(Error::Config("training needs at least one molecule".into()));
    }
    let needs_target = model.config().loss_weights[0] > 0.0;
    molecules
        .iter()
        .map(|m| {
            if needs_target && m.target().is_none() {
                return Err(Error::MissingTarget(m.name().to_string()));
            }
            featurizer.example(m)
        })
        .collect()
}

/// Mean and population standard deviation of the targets present; the scale
/// falls back to 1 when the targets are (nearly) constant.
fn target_moments(molecules: &[Molecule]) -> (f64, f64) {
    let t: Vec<f64> = molecules.iter().filter_map(Molecule::target).collect();
    if t.is_empty() {
        return (0.0, 1.0);
    }
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let std = (t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if std > 1e-6 { std } else { 1.0 })
}

/// Hash of every input that decides the loss of a step.
fn digest(examples: &[Example]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((examples.len() as u64).to_le_bytes());
    for ex in examples {
        let m = &ex.molecule;
        h.update((m.len() as u64).to_le_bytes());
        for a in m.atoms() {
            h.update(a.element.symbol().as_bytes());
            for c in a.position {
                h.update(c.to_bits().to_le_bytes());
            }
        }
        h.update(m.target().map_or(u64::MAX, f64::to_bits).to_le_bytes());
        for (i, j) in ex.bonds.keys() {
            h.update((i as u64).to_le_bytes());
            h.update((j as u64).to_le_bytes());
        }
    }
    h.finalize().into()
}

fn exact_cast<T: Scalar>(params: &crate::autodiff::ParamStore<f64>) -> Result<crate::autodiff::ParamStore<T>> {
    let cast: crate::autodiff::ParamStore<T> = params.cast();
    let back: Vec<f64> = cast.to_flat().iter().map(|x| x.to_f64_lossy()).collect();
    if back.iter().zip(params.to_flat()).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::Checkpoint("parameters are not representable in the requested scalar type".into()));
    }
    Ok(cast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_xyz;

    fn dataset() -> Vec<Molecule> {
        [("3\nw\nO 0 0 0\nH 0.9572 0 0\nH -0.2399 0.9266 0", 1.0), ("2\nh2\nH 0 0 0\nH 0.74 0 0", -0.5)]
            .iter()
            .map(|(x, t)| parse_xyz(x).unwrap().with_target(Some(*t)))
            .collect()
    }

    fn trainer(config: TrainConfig) -> Trainer<f64> {
        let mc = ModelConfig::micro();
        let fz = mc.featurizer(Default::default(), 1.15).unwrap();
        Trainer::new(mc, config, fz, &dataset()).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut t = trainer(TrainConfig { lr: 0.0, steps: 3, ..TrainConfig::default() });
        let before = t.model().params().to_flat();
        t.train().unwrap();
        assert_eq!(t.model().params().to_flat(), before);
        assert_eq!(t.history().len(), 3);
        assert_eq!(t.history().iter().map(|l| l.example).collect::<Vec<_>>(), vec![0, 1, 0]);
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = TrainConfig { steps: 4, ..TrainConfig::default() };
        let (mut a, mut b) = (trainer(cfg.clone()), trainer(cfg));
        a.train().unwrap();
        b.train().unwrap();
        let bits = |t: &Trainer<f64>| t.history().iter().map(|l| l.loss.total.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn missing_target_is_reported() {
        let mc = ModelConfig::micro();
        let fz = mc.featurizer(Default::default(), 1.15).unwrap();
        let mols = vec![parse_xyz("2\nbare\nH 0 0 0\nH 0.74 0 0").unwrap()];
        let err = Trainer::<f64>::new(mc, TrainConfig::default(), fz, &mols).unwrap_err();
        assert!(matches!(err, Error::MissingTarget(name) if name == "bare"));
    }

    #[test]
    fn invalid_config_is_rejected() {
        for c in [
            TrainConfig { lr: -1.0, ..TrainConfig::default() },
            TrainConfig { beta2: 1.0, ..TrainConfig::default() },
            TrainConfig { eps: 0.0, ..TrainConfig::default() },
            TrainConfig { grad_clip: 0.0, ..TrainConfig::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
