//! Sub-quadratic approximate counting for spin systems.
//!
//! Two randomized estimators for partition functions: one for the hard-core
//! model built from truncated self-avoiding-walk trees and a recursive
//! marginal sampler, and one for spin systems on lattice-like graphs built
//! from boundary tables on thin spheres. Exact oracles, verification helpers
//! and a benchmark harness sit alongside.

pub mod bench;
pub mod error;
pub mod estimator;
pub mod generators;
pub mod graph;
pub mod lattice;
pub mod lazy;
pub mod model;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod sampler;
pub mod saw;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{Graph, Vertex};
pub use model::{LogWeight, PartialConfiguration, QSpinParams, Spin, SpinModel, TwoSpinParams};
