//! Path-dependent stochastic control on a Hilbert space with a diagonal
//! generator: functional Ito calculus, simulation, BSDE solvers, value
//! functions and HJB checks.

// `!(x > 0.0)` is the NaN-rejecting form used throughout input validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bsde;
pub mod calculus;
pub mod error;
pub mod hilbert;
pub mod hjb;
pub mod model;
pub mod path;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod value;

pub use calculus::FunctionalDerivatives;
pub use error::{Error, Result};
pub use hilbert::{HVector, Matrix, SpectralOperator};
pub use model::{ControlModel, ModelPreset, Policy};
pub use path::{d_infty, DiscretePath, PathFeatures, PathGrid};
pub use sim::{simulate, SimOptions, TrajectoryBatch};
pub use stats::Estimate;
