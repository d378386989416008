//! Domain types shared by every solver: agent states, measures, kernels,
//! cost functionals, admissible controls and scenario files.

mod control;
mod cost;
mod ensemble;
mod kernel;
mod scenario;

pub use control::{uniform_grid, BoundFunction, ControlCell, ControlField, Parameterization, ADMISSIBILITY_TOLERANCE};
pub use cost::{CostSpec, Penalty, Tracking};
pub(crate) use ensemble::mean_velocity;
pub use ensemble::{EmpiricalMeasure, PhaseEnsemble, MASS_TOLERANCE};
pub use kernel::{sample_ball, Kernel};
pub(crate) use scenario::digest_str;
pub use scenario::{sample_initial, validate_scenario, ControlSpec, InitialSpec, Scenario};
