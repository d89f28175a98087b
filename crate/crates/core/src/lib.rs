//! Weighted group sparse envelope (WGSEF) regularization.
//!
//! * [`groups`]: disjoint group partitions and group norms.
//! * [`pwl_root`]: linear-time root search over monotone piecewise-linear clamps.
//! * [`envelope`]: value, conjugate, proximal operator and gradient of the envelope.
//! * [`optim`]: proximal momentum SGD, pruning and the half-space step.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! it to double precision, which the rest of the workspace uses.

pub mod envelope;
pub mod error;
pub mod groups;
pub mod optim;
pub mod oracle;
pub mod pwl_root;
pub mod scalar;
pub mod selftest;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GroupPartition = groups::GroupPartition<f64>;
pub type GroupPartitionF32 = groups::GroupPartition<f32>;
pub type GroupNorms = groups::GroupNorms<f64>;
pub type EnvelopeParams = envelope::EnvelopeParams<f64>;
pub type EnvelopeParamsF32 = envelope::EnvelopeParams<f32>;
pub type DualVariables = envelope::DualVariables<f64>;
pub type PwlTerm = pwl_root::PwlTerm<f64>;
pub type Region = optim::Region<f64>;
pub type RegScope = optim::RegScope<f64>;
pub type Regularizer = optim::Regularizer<f64>;
pub type ProxSgdState = optim::ProxSgdState<f64>;
