//! Parameter sweeps, power-law fits and output files.

pub mod fit;
pub mod output;
pub mod svg;
pub mod sweep;

pub use fit::{fit_scaling, FitResult};
pub use sweep::{run_sweep, SweepOutcome, SweepRow, SweepSpec, Task};
