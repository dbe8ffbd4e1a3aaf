//! Sparse interaction additive networks.
//!
//! A reference network is trained, its feature interactions are scored with a
//! higher-order Archipelago detector, a heredity-guided search picks the
//! interaction family, and an additive model with one small ReLU subnetwork
//! per selected feature set is trained on top.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod detect;
pub mod error;
pub mod fis;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod sian;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use sian::{GamArchitecture, InteractionSet, Mode, SianModel};
pub use tensor::{BlockDiagMatrix, CsrMatrix, Matrix};
