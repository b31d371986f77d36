//! Separation estimation of two incoherent optical sources by Hermite-Gauss
//! mode demultiplexing.
//!
//! - [`scene`]: Gaussian source images and their modal decomposition.
//! - [`instrument`]: demultiplexer, detectors and the quadrant-detector reference.
//! - [`bounds`]: direct-imaging and quantum Cramér-Rao bounds, noisy error propagation.
//! - [`pipeline`]: calibration scan, polynomial fit, two-source curve and estimation.
//! - [`harness`]: configuration, seeded campaigns and result files.
//!
//! Lengths are micrometres, times seconds and powers photon fluxes (photons/s).

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod exec;
pub mod harness;
pub mod instrument;
pub mod pipeline;
pub mod quadrature;
pub mod scene;
pub mod units;

pub use error::{Error, Result};
