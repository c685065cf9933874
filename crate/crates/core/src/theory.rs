//! Analytic limits for the normalizing-constant estimator and the ESS, with the
//! quadrature of the asymptotic log-weight variance.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{AnnealingSchedule, ScalarPotential, Support, TemperedTarget};
use crate::rng::StreamRng;
use crate::smc::{run_sampler, ResamplingPolicy};
use crate::stats::{bootstrap_ci, sample_variance};

const QUAD_REL_TOL: f64 = 1e-11;
const PARTITION_TOL: f64 = 1e-10;

/// `Var_{pi_phi}(g)` as a function of the inverse temperature.
#[derive(Clone)]
pub enum VarianceFn {
    /// `g = -x^2/2`: `1 / (2 phi^2)`.
    Gaussian,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl VarianceFn {
    pub fn eval(&self, phi: f64) -> f64 {
        match self {
            VarianceFn::Gaussian => 0.5 / (phi * phi),
            VarianceFn::Custom(f) => f(phi),
        }
    }
}

impl fmt::Debug for VarianceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarianceFn::Gaussian => f.write_str("Gaussian"),
            VarianceFn::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// A schedule, the per-temperature variance of the potential and optional resampling times.
#[derive(Debug, Clone)]
pub struct VariancePath {
    schedule: AnnealingSchedule,
    variance: VarianceFn,
    boundaries: Vec<f64>,
}

impl VariancePath {
    pub fn new(schedule: AnnealingSchedule, variance: VarianceFn) -> Self {
        Self {
            schedule,
            variance,
            boundaries: Vec::new(),
        }
    }

    /// Interior resampling times in `(0, 1)`, strictly increasing.
    pub fn with_boundaries(mut self, boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.windows(2).any(|w| w[0] >= w[1]) || boundaries.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::arg("block boundaries must be strictly increasing inside (0, 1)"));
        }
        self.boundaries = boundaries;
        Ok(self)
    }

    pub fn schedule(&self) -> &AnnealingSchedule {
        &self.schedule
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// `sigma^2` over each block `[t_{k-1}, t_k]`, with `t_0 = 0` and `t_{m+1} = 1`.
    pub fn block_sigma2s(&self) -> Result<Vec<f64>> {
        let mut pts = vec![0.0];
        pts.extend(&self.boundaries);
        pts.push(1.0);
        pts.windows(2).map(|w| sigma2_exact_kernel(self, w[0], w[1])).collect()
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to relative tolerance `rel_tol`.
///
/// The range is cut into geometrically shrinking panels towards `a`, where the
/// integrands used here are steepest.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::arg(format!("empty integration range [{a}, {b}]")));
    }
    let mut cuts = vec![b];
    let mut h = (b - a) / 2.0;
    for _ in 0..30 {
        cuts.push(a + h);
        h /= 2.0;
    }
    cuts.push(a);
    cuts.reverse();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (flo, fhi) = (f(lo), f(hi));
        let (m, fm, whole) = simpson(f, lo, flo, hi, fhi);
        let tol = (rel_tol * whole.abs()).max(f64::MIN_POSITIVE);
        total += adaptive(f, lo, flo, hi, fhi, m, fm, whole, tol, 40);
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!("quadrature on [{a}, {b}] did not converge")));
    }
    Ok(total)
}

/// `int_s^t v(phi(u)) phi'(u)^2 du`, the log-weight variance over `[s, t]` for exact kernels.
pub fn sigma2_exact_kernel(path: &VariancePath, s: f64, t: f64) -> Result<f64> {
    if !(0.0 <= s && s < t && t <= 1.0) {
        return Err(Error::arg(format!("need 0 <= s < t <= 1, got s = {s}, t = {t}")));
    }
    let sched = &path.schedule;
    if sched.phi0() == 1.0 {
        return Ok(0.0);
    }
    let integrand = |u: f64| {
        let dp = sched.derivative_at(u);
        if dp == 0.0 {
            0.0
        } else {
            path.variance.eval(sched.phi_at(u)) * dp * dp
        }
    };
    let mut pts: Vec<f64> = sched.kinks().into_iter().filter(|&k| k > s && k < t).collect();
    pts.insert(0, s);
    pts.push(t);
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += integrate(&integrand, w[0], w[1], QUAD_REL_TOL)?;
    }
    Ok(total.max(0.0))
}

/// `(e^{sigma^2} - 1) / N`: the limiting relative L2 error without resampling.
pub fn nc_limit_no_resampling(sigma2: f64, particles: usize) -> Result<f64> {
    if !(sigma2 >= 0.0) || particles == 0 {
        return Err(Error::arg("need sigma2 >= 0 and N >= 1"));
    }
    Ok(sigma2.exp_m1() / particles as f64)
}

/// `e^{-sum s_k} prod_k [e^{2 s_k}/N + (1 - 1/N) e^{s_k}] - 1` for block variances `s_k`.
pub fn nc_limit_with_resampling(block_sigma2s: &[f64], particles: usize) -> Result<f64> {
    if block_sigma2s.is_empty() || block_sigma2s.iter().any(|s| !(*s >= 0.0)) || particles == 0 {
        return Err(Error::arg("need at least one block, non-negative block variances and N >= 1"));
    }
    let n = particles as f64;
    // log of e^{-s}[e^{2s}/N + (1-1/N)e^s] = log(1 + (e^s - 1)/N)
    let log_prod: f64 = block_sigma2s.iter().map(|s| (s.exp_m1() / n).ln_1p()).sum();
    Ok(log_prod.exp_m1())
}

/// As [`nc_limit_with_resampling`], checking that the blocks partition a path of variance `total`.
pub fn nc_limit_with_resampling_checked(block_sigma2s: &[f64], total: f64, particles: usize) -> Result<f64> {
    let sum: f64 = block_sigma2s.iter().sum();
    if (sum - total).abs() > PARTITION_TOL {
        return Err(Error::arg(format!("block variances sum to {sum}, path variance is {total}")));
    }
    nc_limit_with_resampling(block_sigma2s, particles)
}

/// The limit for the blocks of `path`.
pub fn nc_limit_for_path(path: &VariancePath, particles: usize) -> Result<f64> {
    let blocks = path.block_sigma2s()?;
    let total = sigma2_exact_kernel(path, 0.0, 1.0)?;
    nc_limit_with_resampling_checked(&blocks, total, particles)
}

/// `2 (m + 1)(e^{max_k s_k} - 1) / N`, valid when `N > (m + 1)(e^{max_k s_k} - 1)`.
pub fn resampling_limit_bound(block_sigma2s: &[f64], particles: usize) -> Result<Option<f64>> {
    if block_sigma2s.is_empty() || particles == 0 {
        return Err(Error::arg("need at least one block and N >= 1"));
    }
    let blocks = block_sigma2s.len() as f64;
    let smax = block_sigma2s.iter().copied().fold(0.0, f64::max);
    let c = blocks * smax.exp_m1();
    Ok(((particles as f64) > c).then(|| 2.0 * c / particles as f64))
}

/// One draw of `(sum e^Z)^2 / sum e^{2Z}` with `Z_i ~ N(0, sigma2)` iid.
pub fn ess_limit_sample<R: Rng + ?Sized>(particles: usize, sigma2: f64, rng: &mut R) -> Result<f64> {
    if particles == 0 || !(sigma2 >= 0.0) {
        return Err(Error::arg("need N >= 1 and sigma2 >= 0"));
    }
    if sigma2 == 0.0 {
        return Ok(particles as f64);
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
    let z: Vec<f64> = (0..particles).map(|_| normal.sample(rng)).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut s1, mut s2) = (0.0, 0.0);
    for v in z {
        let w = (v - m).exp();
        s1 += w;
        s2 += w * w;
    }
    Ok((s1 * s1 / s2).clamp(1.0, particles as f64))
}

/// `log(c_1 / c_{phi0})` for `d` standard normal coordinates: `(d/2) log phi0`.
pub fn gaussian_log_nc_ratio(d: usize, phi0: f64) -> Result<f64> {
    if !(phi0 > 0.0 && phi0 <= 1.0) {
        return Err(Error::arg(format!("phi0 = {phi0} must lie in (0, 1]")));
    }
    Ok(0.5 * d as f64 * phi0.ln())
}

/// Log normalizing-constant ratio between temperatures `a < b` of the standard Gaussian family.
pub fn gaussian_log_nc_between(d: usize, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a <= b) {
        return Err(Error::arg("need 0 < a <= b"));
    }
    Ok(0.5 * d as f64 * (a / b).ln())
}

/// Exact relative L2 error of the estimate for the Gaussian family with exact kernels and no
/// resampling, at finite `d`.
///
/// Step `n` contributes independent factors `(1 + delta)^{-1/2}` and `(1 + 2 delta)^{-1/2}` per
/// coordinate to the first and second moments of the weight, `delta = (phi_n - phi_{n-1}) / phi_{n-1}`.
pub fn gaussian_exact_kernel_v2(schedule: &AnnealingSchedule, d: usize, particles: usize) -> Result<f64> {
    if particles == 0 || schedule.phi0() <= 0.0 {
        return Err(Error::arg("need N >= 1 and phi0 > 0"));
    }
    let phis = schedule.values();
    let log_ratio: f64 = phis
        .windows(2)
        .map(|w| {
            let delta = (w[1] - w[0]) / w[0];
            -0.5 * (2.0 * delta).ln_1p() + delta.ln_1p()
        })
        .sum();
    Ok((d as f64 * log_ratio).exp_m1() / particles as f64)
}

/// `Var_{pi_s}(g)` for a potential on a bounded interval, by quadrature.
pub fn tempered_variance<P: ScalarPotential>(potential: &P, s: f64) -> Result<f64> {
    let (lo, hi) = match potential.support() {
        Support::Interval { lo, hi } => (lo, hi),
        Support::Real => return Err(Error::arg("quadrature variance needs a bounded support")),
    };
    let gmax = potential.bound().unwrap_or(0.0);
    let w = |x: f64| (s * (potential.value(x) - gmax)).exp();
    let z = integrate_plain(&w, lo, hi)?;
    let m1 = integrate_plain(&|x| w(x) * potential.value(x), lo, hi)? / z;
    let m2 = integrate_plain(&|x| w(x) * potential.value(x).powi(2), lo, hi)? / z;
    Ok((m2 - m1 * m1).max(0.0))
}

pub(crate) fn integrate_plain(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let (m, fm, whole) = simpson(f, a, f(a), b, f(b));
    let tol = 1e-13 * whole.abs().max(1e-300);
    let v = adaptive(f, a, f(a), b, f(b), m, fm, whole, tol, 50);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical("quadrature did not converge".into()))
    }
}

/// Point estimate with a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Variance of the single-particle log-weight over `replicates` independent runs, with a 95%
/// percentile-bootstrap interval.
pub fn empirical_sigma2<T: TemperedTarget>(
    target: &T,
    kernel: &KernelSpec,
    schedule: &AnnealingSchedule,
    replicates: usize,
    rng: &mut StreamRng,
) -> Result<Estimate> {
    if replicates < 2 {
        return Err(Error::arg("need at least two replicates"));
    }
    let log_w = (0..replicates)
        .map(|_| run_sampler(target, schedule, kernel, &ResamplingPolicy::Never, 1, rng).map(|r| r.log_nc))
        .collect::<Result<Vec<f64>>>()?;
    let value = sample_variance(&log_w);
    let (lo, hi) = bootstrap_ci(&log_w, sample_variance, 1000, 0.95, rng)?;
    Ok(Estimate {
        value,
        lo: lo.min(value),
        hi: hi.max(value),
    })
}
