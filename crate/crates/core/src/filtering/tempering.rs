use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{AnnealingSchedule, DatumPotential, QuadraticTarget};
use crate::rng::StreamRng;
use crate::smc::{advance, Ensemble, ResamplingPolicy, SamplerReport};

/// A log-likelihood term contributed by one datum.
pub trait DatumTerm: Sync {
    fn log_term(&self, x: &[f64]) -> f64;
}

impl DatumTerm for DatumPotential {
    fn log_term(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

/// `x -> base(x) + sum_{i < n} term_i(x) + phi_k term_n(x)` for datum `n` (1-based) at step `k`
/// of a `schedule` starting at `phi0 = 0`.
pub fn datapoint_tempering_targets<'a, B, T>(
    base: B,
    terms: &'a [T],
    n: usize,
    k: usize,
    schedule: &AnnealingSchedule,
) -> Result<impl Fn(&[f64]) -> f64 + 'a>
where
    B: Fn(&[f64]) -> f64 + 'a,
    T: DatumTerm,
{
    if n == 0 || n > terms.len() {
        return Err(Error::arg(format!("datum index {n} outside 1..={}", terms.len())));
    }
    if k > schedule.steps() {
        return Err(Error::arg(format!("step {k} beyond {}", schedule.steps())));
    }
    if schedule.phi0() != 0.0 {
        return Err(Error::arg("data-point tempering starts each datum at phi0 = 0"));
    }
    let phi = schedule.phi(k);
    Ok(move |x: &[f64]| {
        base(x) + terms[..n - 1].iter().map(|t| t.log_term(x)).sum::<f64>() + phi * terms[n - 1].log_term(x)
    })
}

/// Data-point tempering for the Bayesian linear model: each datum is annealed in by
/// `schedule`, starting from prior draws. Resampling follows `policy` within every datum's run;
/// an end-of-run resampling, if requested, happens only after the last datum.
pub fn run_blm_datapoint_tempering(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    schedule: &AnnealingSchedule,
    kernel: &KernelSpec,
    policy: &ResamplingPolicy,
    particles: usize,
    rng: &mut StreamRng,
) -> Result<SamplerReport> {
    if schedule.phi0() != 0.0 {
        return Err(Error::arg("data-point tempering starts each datum at phi0 = 0"));
    }
    let p = x.nrows();
    if p == 0 {
        return Err(Error::arg("need at least one datum"));
    }
    let inner = match *policy {
        ResamplingPolicy::EssThresholdPlusFinal { threshold } => ResamplingPolicy::EssThreshold { threshold },
        ResamplingPolicy::DeterministicPlusFinal { ref steps } => ResamplingPolicy::Deterministic { steps: steps.clone() },
        ref other => other.clone(),
    };
    let first = QuadraticTarget::blm_datum(x, y, 0)?;
    let mut ensemble = Ensemble::initialize(&first, 0.0, particles, rng.next_u64())?;
    let mut last = None;
    for n in 0..p {
        let target = QuadraticTarget::blm_datum(x, y, n)?;
        let pol = if n + 1 == p { policy } else { &inner };
        let report = advance(ensemble, &target, schedule, kernel, pol, schedule.steps(), rng.next_u64())?;
        ensemble = report.ensemble.clone();
        last = Some(report);
    }
    Ok(last.expect("at least one datum"))
}
