use crate::autodiff::{gaussian_kernel, gelu, Tensor};
use crate::chem::{euclidean, Vec3};
use crate::error::Result;
use crate::scalar::Scalar;

/// Default kernel count.
pub const DEFAULT_KERNELS: usize = 16;
/// Default width for distance banks (Å).
pub const DEFAULT_DISTANCE_WIDTH: f64 = 10.0;
/// Default width for cosine banks; inputs are shifted to `cos + 1`.
pub const DEFAULT_COSINE_WIDTH: f64 = 2.0;

/// Centres `mu_k = w (k - 1) / K` and widths `sigma_k = w / K`, `k = 1..=K`.
pub fn kernel_centres<T: Scalar>(kernels: usize, width: f64) -> (Vec<T>, Vec<T>) {
    let k = kernels as f64;
    let mu = (0..kernels).map(|i| T::of(width * i as f64 / k)).collect();
    let sigma = vec![T::of(width / k); kernels];
    (mu, sigma)
}

/// Gaussian basis expansion followed by `GELU(phi W1) W2`, with a learnable
/// affine `alpha * x + beta` per pair slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernelBank<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    /// `K x K`.
    pub w1: Tensor<T>,
    /// `K x 1`.
    pub w2: Tensor<T>,
}

impl<T: Scalar> GaussianKernelBank<T> {
    /// Identity projections, `alpha = 1`, `beta = 0`.
    pub fn new(kernels: usize, width: f64, slots: usize) -> Self {
        let (mu, sigma) = kernel_centres(kernels, width);
        Self {
            mu,
            sigma,
            alpha: vec![T::one(); slots],
            beta: vec![T::zero(); slots],
            w1: Tensor::identity(kernels),
            w2: Tensor::filled(kernels, 1, T::one()),
        }
    }

    pub fn kernels(&self) -> usize {
        self.mu.len()
    }

    pub fn slots(&self) -> usize {
        self.alpha.len()
    }

    /// The K basis values for input `x` under pair slot `slot`.
    pub fn basis(&self, x: T, slot: usize) -> Vec<T> {
        let z = self.alpha[slot] * x + self.beta[slot];
        self.mu.iter().zip(&self.sigma).map(|(&mu, &sigma)| gaussian_kernel(z, mu, sigma)).collect()
    }

    /// Projected scalar `GELU(phi W1) W2`.
    pub fn encode(&self, x: T, slot: usize) -> Result<T> {
        let phi = Tensor::new(1, self.kernels(), self.basis(x, slot))?;
        gelu(&phi.matmul(&self.w1)?).matmul(&self.w2)?.item()
    }
}

/// Entry `(i, j)` encodes the distance between `positions_a[i]` and `positions_b[j]`.
pub fn distance_encoding<T: Scalar>(
    positions_a: &[Vec3],
    positions_b: &[Vec3],
    slot: impl Fn(usize, usize) -> usize,
    bank: &GaussianKernelBank<T>,
) -> Result<Tensor<T>> {
    let mut out = Tensor::zeros(positions_a.len(), positions_b.len());
    for (i, &a) in positions_a.iter().enumerate() {
        for (j, &b) in positions_b.iter().enumerate() {
            out.set(i, j, bank.encode(T::of(euclidean(a, b)), slot(i, j))?);
        }
    }
    Ok(out)
}
