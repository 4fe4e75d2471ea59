//! Mass-maximization clustering with the isolation kernel.
//!
//! The crate covers the whole pipeline: loading and generating datasets,
//! fitting kernels ([`kernels`]), kernel mean maps and mass estimates
//! ([`massdist`]), the three-step clustering algorithm and its parameter
//! search ([`clustering`]), evaluation ([`metrics`]) and the experimental
//! harnesses in [`analysis`].
//!
//! ```
//! use mmc_core::clustering::{run_mmc, ClusterParams, KernelKind};
//! use mmc_core::synthetic::{generate_synthetic, Family};
//!
//! let data = generate_synthetic(Family::ThreeGaussians, 600, 1).unwrap();
//! let params = ClusterParams::new(3, KernelKind::IkHypersphere { psi: 16 })
//!     .with_tau(0.3)
//!     .with_t(100)
//!     .with_s(200);
//! let result = run_mmc(&data, &params).unwrap();
//! assert_eq!(result.labels.len(), 600);
//! ```

pub mod analysis;
pub mod clustering;
pub mod data;
pub mod error;
pub mod io;
pub mod kernels;
pub mod massdist;
pub mod metrics;
pub mod rng;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
