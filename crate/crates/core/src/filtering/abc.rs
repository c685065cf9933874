
use crate::error::{Error, Result};
use crate::filtering::{FilterEstimate, LinearGaussianSsm};
use crate::rng::StreamRng;
use crate::smc::{draw_ancestors, ess};

/// A state-space model that can be simulated but whose likelihood need not be evaluated.
pub trait SimulableSsm: Sync {
    fn dim(&self) -> usize;
    /// Draws `X_1` into `out`.
    fn initial(&self, out: &mut [f64], rng: &mut StreamRng);
    /// Moves `x` from `X_{k-1}` to `X_k`.
    fn transition(&self, x: &mut [f64], rng: &mut StreamRng);
    /// Draws pseudo-data `U_k` given `X_k`.
    fn pseudo_observation(&self, x: &[f64], rng: &mut StreamRng) -> f64;
}

impl SimulableSsm for LinearGaussianSsm {
    fn dim(&self) -> usize {
        LinearGaussianSsm::dim(self)
    }

    fn initial(&self, out: &mut [f64], rng: &mut StreamRng) {
        out.fill(0.0);
        LinearGaussianSsm::transition(self, out, rng);
    }

    fn transition(&self, x: &mut [f64], rng: &mut StreamRng) {
        LinearGaussianSsm::transition(self, x, rng);
    }

    fn pseudo_observation(&self, x: &[f64], rng: &mut StreamRng) -> f64 {
        self.observe(x, rng)
    }
}

/// Resampling rule of the ABC filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbcResampling {
    Never,
    /// Multinomial resampling when the ESS drops below the threshold.
    EssThreshold(f64),
}

/// `1{|y - u| < epsilon}` weighting of particles moved by the prior dynamics.
///
/// Stops and flags degeneracy at the first time every weight is zero.
pub fn abc_filter<M: SimulableSsm>(
    model: &M,
    observations: &[f64],
    epsilon: f64,
    particles: usize,
    resampling: AbcResampling,
    rng: &mut StreamRng,
) -> Result<FilterEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::arg(format!("epsilon must be positive, got {epsilon}")));
    }
    if particles == 0 {
        return Err(Error::arg("need at least one particle"));
    }
    if let AbcResampling::EssThreshold(a) = resampling {
        if !(a >= 1.0 && a <= particles as f64) {
            return Err(Error::arg(format!("ESS threshold {a} outside [1, {particles}]")));
        }
    }
    let d = model.dim();
    let mut x = vec![0.0; particles * d];
    let mut lw = vec![0.0; particles];
    let mut est = FilterEstimate::new(d);
    let mut log_z = 0.0;
    for (k, &y) in observations.iter().enumerate() {
        for (xi, w) in x.chunks_mut(d).zip(lw.iter_mut()) {
            if k == 0 {
                model.initial(xi, rng);
            } else {
                model.transition(xi, rng);
            }
            let u = model.pseudo_observation(xi, rng);
            if (y - u).abs() >= epsilon {
                *w = f64::NEG_INFINITY;
            }
        }
        let alive = lw.iter().filter(|w| w.is_finite()).count();
        if alive == 0 {
            est.degenerate_at = Some(k + 1);
            break;
        }
        let prev_log_z = log_z;
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sw: f64 = lw.iter().map(|w| (w - m).exp()).sum();
        log_z = m + (sw / particles as f64).ln();
        est.log_predictive.push(log_z - prev_log_z);
        let mut mean = vec![0.0; d];
        for (xi, w) in x.chunks(d).zip(&lw) {
            let a = (w - m).exp() / sw;
            if a > 0.0 {
                for (mj, v) in mean.iter_mut().zip(xi) {
                    *mj += a * v;
                }
            }
        }
        est.means.push(mean);
        let e = ess(&lw)?;
        est.ess.push(e);
        if let AbcResampling::EssThreshold(a) = resampling {
            if e < a {
                let anc = draw_ancestors(&lw, particles, k + 1, rng)?;
                let old = x.clone();
                for (slot, &i) in x.chunks_mut(d).zip(&anc) {
                    slot.copy_from_slice(&old[i * d..(i + 1) * d]);
                }
                // the estimate carries the normalizing constant across the reset
                lw.fill(log_z);
            }
        }
    }
    Ok(est)
}

/// Root of the mean `p`-th power error of coordinate `coord` at time `k` (1-based) over the
/// replicates that did not degenerate by time `k`. Returns the metric and the number of
/// replicates used.
pub fn abc_error_metric(estimates: &[FilterEstimate], truth: f64, k: usize, coord: usize, p: f64) -> Result<(f64, usize)> {
    if !(p >= 1.0) || k == 0 {
        return Err(Error::arg("need p >= 1 and k >= 1"));
    }
    let errs: Vec<f64> = estimates
        .iter()
        .filter_map(|e| e.means.get(k - 1).and_then(|m| m.get(coord)).map(|v| (v - truth).abs()))
        .collect();
    if errs.len() < 2 {
        return Err(Error::Estimation(format!(
            "only {} non-degenerate replicates at time {k}",
            errs.len()
        )));
    }
    let m = errs.iter().map(|e| e.powf(p)).sum::<f64>() / errs.len() as f64;
    Ok((m.powf(1.0 / p), errs.len()))
}

/// Root mean square deviation of the estimates at time `k` from their own replicate mean.
pub fn abc_mc_spread(estimates: &[FilterEstimate], k: usize, coord: usize) -> Result<f64> {
    let v: Vec<f64> = estimates
        .iter()
        .filter_map(|e| e.means.get(k - 1).and_then(|m| m.get(coord)).copied())
        .collect();
    if v.len() < 2 {
        return Err(Error::Estimation(format!("only {} non-degenerate replicates at time {k}", v.len())));
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    Ok((v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt())
}

/// `1{|y - u| < epsilon}`.
pub fn abc_indicator(y: f64, u: f64, epsilon: f64) -> bool {
    (y - u).abs() < epsilon
}
