//! Targets, scalar potentials, annealing schedules and bridging densities.

mod blm;
mod potential;
mod schedule;
mod target;

pub use blm::{
    blm_as_sequential_potentials, blm_posterior, simulate_linear_model, DatumPotential, GaussianPosterior,
    QuadraticMover, QuadraticTarget,
};
pub use potential::{BoundedPotential, ConstantPotential, GaussianPotential, ScalarPotential, Support};
pub use schedule::{exponential_nu, linear_phi, step_index_for_time, AnnealingSchedule, ScheduleKind};
pub use target::{bridge_log_density, MoveStats, Mover, ProductMover, ProductTarget, TemperedTarget};
