//! Simulation and routing for space-air-ground quantum networks.
//!
//! * [`channel`]: fiber and free-space optical transmissivities.
//! * [`quantum`]: two-qubit density matrices, amplitude damping, swapping and
//!   fidelity.
//! * [`topology`]: node positions, orbit propagation and threshold-gated
//!   graph snapshots.
//! * [`routing`]: the DQN routing agent, its environment and baselines.
//! * [`distribution`]: TPED and intuitive entanglement distribution plans.
//! * [`experiment`]: seeded experiment runners and CSV output.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod distribution;
pub mod error;
pub mod experiment;
pub mod quantum;
pub mod routing;
pub mod topology;

pub use channel::{FiberParams, FsoParams, Transmissivity};
pub use error::{Error, Result};
pub use quantum::{DensityMatrix, Fidelity};
