//! Attention biases: Gaussian-basis distance encodings, SPD encodings, bond
//! angle encodings, and the per-molecule features that feed them.

mod bundle;
mod features;
mod kernel;
mod spd;
mod torsion;
mod vocab;

pub use bundle::{assemble_bundle, EncoderSet, EncodingBundle};
pub use features::{
    atom_categories, bond_type_ids, length_bucket, Example, FeatureSettings, Featurizer, Features, PairBlock,
    DEFAULT_LENGTH_BUCKETS, DEFAULT_LENGTH_BUCKET_WIDTH,
};
pub use kernel::{
    distance_encoding, kernel_centres, GaussianKernelBank, DEFAULT_COSINE_WIDTH, DEFAULT_DISTANCE_WIDTH,
    DEFAULT_KERNELS,
};
pub use spd::{spd_encoding, spd_matrix, spd_slot, SpdEncoder, SpdMatrix, DEFAULT_MAX_SPD};
pub use torsion::{bond_pair_cosine, cosine_matrix, torsion_matrix};
pub use vocab::Vocabulary;

use crate::scalar::Scalar;

/// Raw basis values for one input, without the learned projection.
pub fn gaussian_basis<T: Scalar>(x: T, slot: usize, bank: &GaussianKernelBank<T>) -> Vec<T> {
    bank.basis(x, slot)
}
