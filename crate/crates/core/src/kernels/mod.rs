//! Fitted kernels and the finite feature maps they induce.
//!
//! Two families share one interface: the isolation kernel, whose features
//! are `t` one-hot blocks (stored as block indices), and the Gaussian kernel
//! approximated by a Nyström feature map (stored densely). Everything
//! downstream works on an [`Embedding`]: a dataset already mapped to
//! feature space.

mod isolation;
mod model_io;
mod nystrom;

pub use isolation::{FeatureVector, IkEmbedding, IkModel, Mechanism, NO_CELL};
pub use model_io::{load_model, save_model, AnyModel};
pub use nystrom::{gaussian, DenseEmbedding, ExactGaussian, NystromModel, EIGEN_FLOOR};

use crate::data::Dataset;
use crate::error::Result;

/// Pairwise kernel similarity over a fixed, indexed point set.
pub trait Similarity: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn similarity(&self, i: usize, j: usize) -> f64;
}

/// A dataset mapped to a kernel's feature space.
///
/// Kernel means are accumulated as unnormalized feature sums; the kernel
/// value between point `i` and a set `C` is `scale() * dot(i, sums) / |C|`.
pub trait Embedding: Similarity {
    fn feature_dim(&self) -> usize;

    /// Adds `weight * φ(i)` to `sums`.
    fn accumulate(&self, i: usize, sums: &mut [f64], weight: f64);

    /// `⟨φ(i), sums⟩` without the kernel's normalizing scale.
    fn dot(&self, i: usize, sums: &[f64]) -> f64;

    /// Factor turning feature dot products into kernel values (`1/t` for the
    /// isolation kernel, 1 for Nyström).
    fn scale(&self) -> f64;
}

/// A fitted kernel that can embed whole datasets.
pub trait KernelModel {
    type Embedding: Embedding;

    fn dim(&self) -> usize;

    fn embed_dataset(&self, data: &Dataset) -> Result<Self::Embedding>;
}
