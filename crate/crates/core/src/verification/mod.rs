//! Manufactured-solution order studies and the parameter sweeps.

pub mod mms;
pub mod richardson;
pub mod sweep;

pub use mms::{mms_sources, run_mms, DtRule, ManufacturedSolution, MmsForcing, MmsOptions, MmsReport};
pub use richardson::{richardson_order, RichardsonError};
pub use sweep::{delta_sweep, epsilon_sweep, SweepOptions, SweepReport};
