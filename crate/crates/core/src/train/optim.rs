//! Adam with decoupled weight decay and global-norm gradient clipping.

use crate::autodiff::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hyperparameters of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// First and second moments in the store's flat order, plus the update count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub(crate) m: Vec<T>,
    pub(crate) v: Vec<T>,
    pub(crate) t: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    pub fn from_parts(m: Vec<T>, v: Vec<T>, t: u64) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::Checkpoint(format!("moment lengths differ: {} vs {}", m.len(), v.len())));
        }
        Ok(Self { m, v, t })
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.m, &self.v)
    }

    /// Number of updates applied so far.
    pub fn updates(&self) -> u64 {
        self.t
    }

    /// One update:
    /// `m = b1 m + (1 - b1) g`, `v = b2 v + (1 - b2) g^2`,
    /// `theta -= lr wd theta`, then
    /// `theta -= lr (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>, s: &AdamWSettings) -> Result<()> {
        let n = params.flat_len();
        if self.m.len() != n {
            return Err(Error::Config(format!("optimizer holds {} moments for {n} parameters", self.m.len())));
        }
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let (b1, b2) = (T::of(s.beta1), T::of(s.beta2));
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let (lr, eps, decay) = (T::of(s.lr), T::of(s.eps), T::of(s.weight_decay));
        let mut k = 0;
        for (p, g) in params.tensors_mut().iter_mut().zip(grads.tensors()) {
            for (theta, &g) in p.data_mut().iter_mut().zip(g.data()) {
                let m = b1 * self.m[k] + (one - b1) * g;
                let v = b2 * self.v[k] + (one - b2) * g * g;
                self.m[k] = m;
                self.v[k] = v;
                *theta = *theta - lr * decay * *theta;
                *theta -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
                k += 1;
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut Gradients<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm().to_f64_lossy();
    if norm > max_norm {
        grads.scale(T::of(max_norm / norm));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn settings(lr: f64, weight_decay: f64) -> AdamWSettings {
        AdamWSettings { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }

    fn single(value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(value)).unwrap();
        s
    }

    fn grad(value: f64) -> Gradients<f64> {
        Gradients { tensors: vec![Tensor::scalar(value)] }
    }

    #[test]
    fn matches_hand_computed_updates() {
        let mut p = single(0.5);
        let mut opt = AdamW::new(1);
        let s = settings(0.1, 0.01);
        opt.step(&mut p, &grad(2.0), &s).unwrap();
        // m = 0.2, v = 0.004, m_hat = 2, v_hat = 4.
        let theta = 0.5 - 0.1 * 0.01 * 0.5;
        let theta = theta - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((p.to_flat()[0] - theta).abs() < 1e-15);

        opt.step(&mut p, &grad(-1.0), &s).unwrap();
        let m: f64 = 0.9 * 0.2 - 0.1;
        let v: f64 = 0.999 * 0.004 + 0.001 * 1.0;
        let (m_hat, v_hat) = (m / (1.0 - 0.81), v / (1.0 - 0.999f64 * 0.999));
        let theta = theta - 0.1 * 0.01 * theta;
        let theta = theta - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.to_flat()[0] - theta).abs() < 1e-15);
        assert_eq!(opt.updates(), 2);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = single(0.123);
        let mut opt = AdamW::new(1);
        opt.step(&mut p, &grad(5.0), &settings(0.0, 0.1)).unwrap();
        assert_eq!(p.to_flat()[0].to_bits(), 0.123f64.to_bits());
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = Gradients { tensors: vec![Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap()] };
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!(g.global_norm() <= 1.0 + 1e-12);
        let mut small = Gradients { tensors: vec![Tensor::scalar(0.5)] };
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small.to_flat(), vec![0.5]);
    }
}
