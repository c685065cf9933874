//! State-space models and filters: the Kalman oracle, the ABC filter, the marginal
//! algorithm, annealed trajectory filtering and data-point tempering.

mod abc;
mod kalman;
mod marginal;
mod tempering;
mod trajectory;

pub use abc::{abc_error_metric, abc_filter, abc_indicator, abc_mc_spread, AbcResampling, SimulableSsm};
pub use kalman::{kalman_filter, simulate_ssm, KalmanOutput, LinearGaussianSsm, SsmRecord};
pub use marginal::{
    idealized_log_predictive, marginal_algorithm_step, marginal_predictive_rel_error, predictive_factor_moments,
    BoundedToyModel, CoordinateModel, DiscreteLaw, DiscreteToyModel, MarginalLaw, MarginalStep, MixtureMover,
    MixtureTarget, UniformLaw,
};
pub use tempering::{datapoint_tempering_targets, run_blm_datapoint_tempering, DatumTerm};
pub use trajectory::{
    annealed_trajectory_filter, GaussianRandomWalkSsm, TrajectoryFilterOutput, TrajectoryMover, TrajectoryTarget,
};

/// Per-time output of a particle filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEstimate {
    /// Weighted mean of `X_k` for each processed time.
    pub means: Vec<Vec<f64>>,
    /// Estimates of `log p(y_k | y_{1:k-1})`.
    pub log_predictive: Vec<f64>,
    /// ESS after each weight update.
    pub ess: Vec<f64>,
    /// First time (1-based) at which every weight vanished; the run stops there.
    pub degenerate_at: Option<usize>,
}

impl FilterEstimate {
    pub fn new(dim: usize) -> Self {
        let _ = dim;
        Self {
            means: Vec::new(),
            log_predictive: Vec::new(),
            ess: Vec::new(),
            degenerate_at: None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate_at.is_some()
    }
}
