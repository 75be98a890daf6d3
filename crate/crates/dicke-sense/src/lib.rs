//! Collective emission of driven-dissipative spin ensembles, reduced states
//! of emitted time-bin modes, and frequency-estimation bounds.

pub mod cache;
pub mod cli;
pub mod dicke;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod interferometer;
pub mod linalg;
pub mod metrology;
pub mod model;
pub mod permsym;
pub mod signal;
pub mod timebin;

pub use dicke::{build_collective_ops, build_liouvillian, mean_field_frequency, omega_c, DensityMatrix, ModelParams};
pub use error::{Error, Result};
