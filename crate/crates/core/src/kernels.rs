//! MCMC move kernels that leave a bridging density invariant.
//!
//! For product targets the d-dimensional kernel is the product of a scalar
//! kernel applied to each coordinate in turn, all driven by the owning
//! particle's random stream.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ScalarPotential;

/// Proposal variance used for the annealing-scheme comparison is `1 / (25 phi0)`,
/// i.e. 1/25 of the variance of the initial bridge `N(0, 1/phi0)`.
pub fn annealing_rwm_sd(phi0: f64) -> Result<f64> {
    if !(phi0 > 0.0) {
        return Err(Error::arg("phi0 must be positive for the default RWM proposal"));
    }
    Ok((1.0 / (25.0 * phi0)).sqrt())
}

/// Proposal sd of the Gibbs-within-RWM kernel used on the Bayesian linear model (variance 1/16).
pub const BLM_GIBBS_SD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// Random-walk Metropolis, one scalar proposal per coordinate.
    Rwm { proposal_sd: f64 },
    /// Random-walk Metropolis within Gibbs against the full conditionals.
    RwmGibbs { proposal_sd: f64 },
    /// Independent draw from the current bridging law.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sweeps: usize,
}

impl KernelSpec {
    pub fn rwm(proposal_sd: f64) -> Result<Self> {
        Self::new(KernelKind::Rwm { proposal_sd }, 1)
    }

    pub fn rwm_gibbs(proposal_sd: f64) -> Result<Self> {
        Self::new(KernelKind::RwmGibbs { proposal_sd }, 1)
    }

    pub fn exact() -> Self {
        Self {
            kind: KernelKind::Exact,
            sweeps: 1,
        }
    }

    pub fn new(kind: KernelKind, sweeps: usize) -> Result<Self> {
        if sweeps == 0 {
            return Err(Error::arg("kernel needs at least one sweep"));
        }
        match kind {
            KernelKind::Rwm { proposal_sd } | KernelKind::RwmGibbs { proposal_sd } => {
                if !(proposal_sd > 0.0 && proposal_sd.is_finite()) {
                    return Err(Error::arg(format!(
                        "proposal sd must be positive, got {proposal_sd}"
                    )));
                }
            }
            KernelKind::Exact => {}
        }
        Ok(Self { kind, sweeps })
    }

    pub fn with_sweeps(self, sweeps: usize) -> Result<Self> {
        Self::new(self.kind, sweeps)
    }

    /// Proposal sd of the Metropolis kinds.
    pub fn proposal_sd(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Rwm { proposal_sd } | KernelKind::RwmGibbs { proposal_sd } => Some(proposal_sd),
            KernelKind::Exact => None,
        }
    }
}

/// Metropolis accept/reject on a log ratio `log_new - log_old`.
///
/// A NaN ratio arises only from `-inf - (-inf)`, where neither state is in the
/// support; the move is rejected.
#[inline(always)]
pub fn metropolis_accept<R: Rng + ?Sized>(log_new: f64, log_old: f64, rng: &mut R) -> bool {
    if log_new == f64::NEG_INFINITY {
        return false;
    }
    if log_old == f64::NEG_INFINITY {
        return true;
    }
    let ratio = log_new - log_old;
    if ratio.is_nan() {
        return false;
    }
    if ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < ratio
}

/// One random-walk Metropolis step on a scalar state.
pub fn rwm_coordinate_step<R, F>(x: f64, log_target: F, proposal_sd: f64, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    if !x.is_finite() {
        return Err(Error::arg(format!("state must be finite, got {x}")));
    }
    if !(proposal_sd > 0.0) {
        return Err(Error::arg("proposal sd must be positive"));
    }
    let z: f64 = rng.sample(StandardNormal);
    let y = x + proposal_sd * z;
    Ok(if metropolis_accept(log_target(y), log_target(x), rng) {
        y
    } else {
        x
    })
}

/// Systematic-scan Metropolis-within-Gibbs sweep against a joint log-target.
///
/// Each coordinate gets a univariate Gaussian proposal and is accepted against
/// the full conditional, which for a joint density is the joint ratio. Returns
/// the number of accepted coordinate moves.
pub fn rwm_gibbs_sweep<R, F>(x: &mut [f64], log_target: F, proposal_sd: f64, rng: &mut R) -> Result<usize>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("state must be finite"));
    }
    if !(proposal_sd > 0.0) {
        return Err(Error::arg("proposal sd must be positive"));
    }
    let mut current = log_target(x);
    let mut accepted = 0;
    for j in 0..x.len() {
        let z: f64 = rng.sample(StandardNormal);
        let old = x[j];
        x[j] = old + proposal_sd * z;
        let proposed = log_target(x);
        if metropolis_accept(proposed, current, rng) {
            current = proposed;
            accepted += 1;
        } else {
            x[j] = old;
        }
    }
    Ok(accepted)
}

/// Independent draw from `pi_s`, ignoring the current point.
pub fn exact_coordinate_step<P, R>(s: f64, family: &P, rng: &mut R) -> Result<f64>
where
    P: ScalarPotential,
    R: Rng + ?Sized,
{
    if !(s > 0.0) {
        return Err(Error::arg(format!("inverse temperature must be positive, got {s}")));
    }
    family.sample_tempered(s, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundedPotential, GaussianPotential};
    use crate::rng::stream;

    fn moments(xs: &[f64]) -> [f64; 4] {
        let n = xs.len() as f64;
        let mut m = [0.0; 4];
        for &x in xs {
            let mut p = 1.0;
            for k in 0..4 {
                p *= x;
                m[k] += p / n;
            }
        }
        m
    }

    #[test]
    fn flat_target_always_accepts() {
        let mut rng = stream(3, &[]);
        let mut x = 0.3;
        for _ in 0..1000 {
            let y = rwm_coordinate_step(x, |_| 1.5, 0.7, &mut rng).unwrap();
            assert_ne!(y, x);
            x = y;
        }
    }

    #[test]
    fn uphill_moves_always_accept() {
        let mut rng = stream(4, &[]);
        let mut uphill = 0;
        for i in 0..2000 {
            let x = i as f64 * 0.01;
            let z: f64 = rng.clone().sample(StandardNormal);
            let y = rwm_coordinate_step(x, |v| v, 0.5, &mut rng).unwrap();
            if z > 0.0 {
                uphill += 1;
                assert_eq!(y, x + 0.5 * z);
            }
        }
        assert!(uphill > 900);
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let mut rng = stream(5, &[]);
        assert!(rwm_coordinate_step(f64::NAN, |_| 0.0, 1.0, &mut rng).is_err());
        assert!(rwm_coordinate_step(0.0, |_| 0.0, 0.0, &mut rng).is_err());
        assert!(KernelSpec::rwm(-1.0).is_err());
        assert!(KernelSpec::exact().with_sweeps(0).is_err());
    }

    #[test]
    fn nan_guard_rejects() {
        let mut rng = stream(6, &[]);
        assert!(!metropolis_accept(f64::NEG_INFINITY, f64::NEG_INFINITY, &mut rng));
        assert!(metropolis_accept(-3.0, f64::NEG_INFINITY, &mut rng));
        assert!(!metropolis_accept(f64::NAN, 0.0, &mut rng));
    }

    #[test]
    fn rwm_long_run_variance_matches_standard_gaussian() {
        let mut rng = stream(11, &[]);
        let g = GaussianPotential;
        let mut x = 0.0;
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            x = rwm_coordinate_step(x, |v| g.tempered_log_density(1.0, v), 2.4, &mut rng).unwrap();
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn gibbs_sweep_on_correlated_gaussian() {
        // precision [[2, -1], [-1, 2]] -> covariance [[2/3, 1/3], [1/3, 2/3]]
        let lt = |x: &[f64]| -0.5 * (2.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 2.0 * x[1] * x[1]);
        let mut rng = stream(12, &[]);
        let mut x = [0.0, 0.0];
        let n = 400_000;
        let mut acc = [0.0f64; 5];
        for _ in 0..n {
            rwm_gibbs_sweep(&mut x, lt, 1.0, &mut rng).unwrap();
            acc[0] += x[0];
            acc[1] += x[1];
            acc[2] += x[0] * x[0];
            acc[3] += x[1] * x[1];
            acc[4] += x[0] * x[1];
        }
        let nf = n as f64;
        let m0 = acc[0] / nf;
        let m1 = acc[1] / nf;
        assert!(m0.abs() < 0.02 && m1.abs() < 0.02);
        assert!((acc[2] / nf - m0 * m0 - 2.0 / 3.0).abs() < 0.02);
        assert!((acc[3] / nf - m1 * m1 - 2.0 / 3.0).abs() < 0.02);
        assert!((acc[4] / nf - m0 * m1 - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn exact_step_variance_is_inverse_temperature() {
        let mut rng = stream(13, &[]);
        for (s, want) in [(1.0, 1.0), (4.0, 0.25)] {
            let xs: Vec<f64> = (0..200_000)
                .map(|_| exact_coordinate_step(s, &GaussianPotential, &mut rng).unwrap())
                .collect();
            let m = moments(&xs);
            assert!((m[1] - m[0] * m[0] - want).abs() < 0.01 * want.max(0.25) * 2.0);
        }
        assert!(exact_coordinate_step(0.0, &GaussianPotential, &mut rng).is_err());
    }

    #[test]
    fn exact_consecutive_draws_uncorrelated() {
        let mut rng = stream(14, &[]);
        let xs: Vec<f64> = (0..200_001)
            .map(|_| exact_coordinate_step(1.0, &GaussianPotential, &mut rng).unwrap())
            .collect();
        let n = (xs.len() - 1) as f64;
        let c: f64 = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n;
        assert!(c.abs() < 0.01);
    }

    #[test]
    fn kernels_preserve_tempered_moments() {
        // start from exact pi_s draws, apply one kernel step, compare four moments
        let fam = BoundedPotential::new(3.0, 2.0).unwrap();
        for &s in &[0.5, 1.0, 2.0] {
            let mut rng = stream(15, &[(s * 10.0) as u64]);
            let n = 200_000;
            let start: Vec<f64> = (0..n).map(|_| fam.sample_tempered(s, &mut rng).unwrap()).collect();
            let base = moments(&start);
            let rwm: Vec<f64> = start
                .iter()
                .map(|&x| rwm_coordinate_step(x, |v| fam.tempered_log_density(s, v), 1.0, &mut rng).unwrap())
                .collect();
            let exact: Vec<f64> = (0..n).map(|_| exact_coordinate_step(s, &fam, &mut rng).unwrap()).collect();
            for moved in [moments(&rwm), moments(&exact)] {
                for k in 0..4 {
                    let scale = [0.01, 0.02, 0.05, 0.15][k];
                    assert!((moved[k] - base[k]).abs() < scale, "s={s} k={k}: {} vs {}", moved[k], base[k]);
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn gibbs_sweep_on_product_target_is_coordinatewise(
            x0 in proptest::collection::vec(-3.0f64..3.0, 1..6),
            s in 0.1f64..1.0,
            sd in 0.05f64..2.0,
            seed in 0u64..1000,
        ) {
            let g = |v: f64| -0.5 * s * v * v;
            let mut joint = x0.clone();
            rwm_gibbs_sweep(&mut joint, |x: &[f64]| x.iter().map(|&v| g(v)).sum(), sd, &mut stream(seed, &[])).unwrap();
            let mut rng = stream(seed, &[]);
            for (j, &v) in x0.iter().enumerate() {
                let single = rwm_coordinate_step(v, g, sd, &mut rng).unwrap();
                proptest::prop_assert!((single - joint[j]).abs() < 1e-12);
            }
        }
    }
}
