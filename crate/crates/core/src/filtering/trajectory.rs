use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filtering::FilterEstimate;
use crate::kernels::{metropolis_accept, KernelKind, KernelSpec};
use crate::model::{AnnealingSchedule, MoveStats, Mover, TemperedTarget};
use crate::rng::{stream, StreamRng};
use crate::smc::{advance, Ensemble, ResamplingPolicy};
use crate::theory::integrate_plain;

/// `d` independent Gaussian random walks `x_{k,j} = x_{k-1,j} + N(0, q)` from `x_0 = 0`, each
/// seeing the scalar observation through `h(y, x) = -(y - x)^2 / (2 r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRandomWalkSsm {
    dim: usize,
    state_var: f64,
    obs_var: f64,
}

impl GaussianRandomWalkSsm {
    pub fn new(dim: usize, state_var: f64, obs_var: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("state dimension must be at least 1"));
        }
        if !(state_var > 0.0 && obs_var > 0.0 && state_var.is_finite() && obs_var.is_finite()) {
            return Err(Error::arg("noise variances must be finite and positive"));
        }
        Ok(Self { dim, state_var, obs_var })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state_var(&self) -> f64 {
        self.state_var
    }

    pub fn obs_var(&self) -> f64 {
        self.obs_var
    }

    pub fn log_h(&self, y: f64, x: f64) -> f64 {
        -(y - x) * (y - x) / (2.0 * self.obs_var)
    }

    /// Simulates states and observations; `y_k ~ N(mean_j x_{k,j}, r / d)`, the law with density
    /// proportional to `prod_j exp(h(y, x_{k,j}))`.
    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut x = vec![0.0; self.dim];
        let mut states = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let (qs, rs) = (self.state_var.sqrt(), (self.obs_var / self.dim as f64).sqrt());
        for _ in 0..n {
            for v in x.iter_mut() {
                *v += qs * rng.sample::<f64, _>(StandardNormal);
            }
            let m = x.iter().sum::<f64>() / self.dim as f64;
            ys.push(m + rs * rng.sample::<f64, _>(StandardNormal));
            states.push(x.clone());
        }
        (states, ys)
    }

    /// Per-coordinate filtering `(mean, variance)` of `x_k` given `y_{1:k}`, `k = 1..=n`.
    pub fn coordinate_filter(&self, observations: &[f64]) -> Vec<(f64, f64)> {
        let (mut m, mut p) = (0.0, 0.0);
        observations
            .iter()
            .map(|&y| {
                p += self.state_var;
                let g = p / (p + self.obs_var);
                m += g * (y - m);
                p *= 1.0 - g;
                (m, p)
            })
            .collect()
    }

    /// Path variance of the exact-kernel annealed trajectory filter after `n` data,
    /// `sum_k int_0^1 Var(h(y_k, x_k)) dphi` under the tempered marginal of one coordinate.
    pub fn exact_kernel_sigma2(&self, observations: &[f64]) -> Result<f64> {
        let (mut m, mut p) = (0.0, 0.0);
        let r = self.obs_var;
        let mut total = 0.0;
        for &y in observations {
            let (mp, pp) = (m, p + self.state_var);
            let var_h = |s: f64| {
                let v = 1.0 / (1.0 / pp + s / r);
                let mean = v * (mp / pp + s * y / r);
                let mu = y - mean;
                (v * v + 2.0 * mu * mu * v) / (2.0 * r * r)
            };
            total += integrate_plain(&var_h, 0.0, 1.0)?;
            let g = pp / (pp + r);
            m = mp + g * (y - mp);
            p = pp * (1.0 - g);
        }
        Ok(total)
    }
}

/// Trajectory posterior of the first `k` data with the last likelihood term tempered.
/// Positions are time-major: `x[(i - 1) d + j]` is coordinate `j` at time `i`.
pub struct TrajectoryTarget<'a> {
    model: &'a GaussianRandomWalkSsm,
    observations: &'a [f64],
}

impl<'a> TrajectoryTarget<'a> {
    pub fn new(model: &'a GaussianRandomWalkSsm, observations: &'a [f64]) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::arg("need at least one observation"));
        }
        Ok(Self { model, observations })
    }

    fn len(&self) -> usize {
        self.observations.len()
    }

    /// Forward-filter, backward-sample tables for tempering `s` of the last datum.
    fn ffbs(&self, s: f64) -> Ffbs {
        let k = self.len();
        let (q, r) = (self.model.state_var, self.model.obs_var);
        let mut means = Vec::with_capacity(k);
        let mut vars = Vec::with_capacity(k);
        let (mut m, mut p) = (0.0, 0.0);
        for (i, &y) in self.observations.iter().enumerate() {
            p += q;
            let w = if i + 1 == k { s } else { 1.0 };
            if w > 0.0 {
                let g = p / (p + r / w);
                m += g * (y - m);
                p *= 1.0 - g;
            }
            means.push(m);
            vars.push(p);
        }
        let gains = vars.iter().map(|p| p / (p + q)).collect::<Vec<_>>();
        let cond_sd = vars.iter().zip(&gains).map(|(p, g)| (p * (1.0 - g)).sqrt()).collect();
        Ffbs {
            means,
            last_sd: vars[k - 1].sqrt(),
            gains,
            cond_sd,
        }
    }
}

/// Forward-filter, backward-sample tables of one coordinate.
pub struct Ffbs {
    means: Vec<f64>,
    last_sd: f64,
    gains: Vec<f64>,
    cond_sd: Vec<f64>,
}

pub enum TrajectoryMover<'t, 'a> {
    Exact {
        dim: usize,
        tables: Ffbs,
    },
    Gibbs {
        target: &'t TrajectoryTarget<'a>,
        s: f64,
        proposal_sd: f64,
        sweeps: usize,
    },
}

impl Mover for TrajectoryMover<'_, '_> {
    fn apply(&self, x: &mut [f64], rng: &mut StreamRng) -> Result<MoveStats> {
        match self {
            TrajectoryMover::Exact { dim, tables } => {
                let d = *dim;
                let k = tables.means.len();
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    let mut next = tables.means[k - 1] + tables.last_sd * z;
                    x[(k - 1) * d + j] = next;
                    for i in (0..k - 1).rev() {
                        let z: f64 = rng.sample(StandardNormal);
                        let m = tables.means[i] + tables.gains[i] * (next - tables.means[i]);
                        next = m + tables.cond_sd[i] * z;
                        x[i * d + j] = next;
                    }
                }
                let n = x.len() as u64;
                Ok(MoveStats { proposed: n, accepted: n })
            }
            TrajectoryMover::Gibbs {
                target,
                s,
                proposal_sd,
                sweeps,
            } => {
                let d = target.model.dim;
                let k = target.len();
                let q = target.model.state_var;
                let local = |x: &[f64], i: usize, j: usize, v: f64| {
                    let prev = if i == 0 { 0.0 } else { x[(i - 1) * d + j] };
                    let mut l = -(v - prev) * (v - prev) / (2.0 * q);
                    if i + 1 < k {
                        let nx = x[(i + 1) * d + j];
                        l -= (nx - v) * (nx - v) / (2.0 * q);
                    }
                    let w = if i + 1 == k { *s } else { 1.0 };
                    l + w * target.model.log_h(target.observations[i], v)
                };
                let mut accepted = 0;
                for _ in 0..*sweeps {
                    for i in 0..k {
                        for j in 0..d {
                            let cur = x[i * d + j];
                            let z: f64 = rng.sample(StandardNormal);
                            let prop = cur + proposal_sd * z;
                            if metropolis_accept(local(x, i, j, prop), local(x, i, j, cur), rng) {
                                x[i * d + j] = prop;
                                accepted += 1;
                            }
                        }
                    }
                }
                Ok(MoveStats {
                    proposed: (x.len() * sweeps) as u64,
                    accepted,
                })
            }
        }
    }
}

impl<'a> TemperedTarget for TrajectoryTarget<'a> {
    type Mover<'t>
        = TrajectoryMover<'t, 'a>
    where
        Self: 't;

    fn dim(&self) -> usize {
        self.len() * self.model.dim
    }

    fn potential(&self, x: &[f64]) -> f64 {
        let d = self.model.dim;
        let k = self.len();
        let y = self.observations[k - 1];
        x[(k - 1) * d..].iter().map(|&v| self.model.log_h(y, v)).sum()
    }

    fn sample_initial(&self, s: f64, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        TrajectoryMover::Exact {
            dim: self.model.dim,
            tables: self.ffbs(s),
        }
        .apply(out, rng)
        .map(|_| ())
    }

    fn mover(&self, s: f64, kernel: &KernelSpec) -> Result<TrajectoryMover<'_, 'a>> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::arg(format!("kernel temperature {s} outside [0, 1]")));
        }
        Ok(match kernel.kind {
            KernelKind::Exact => TrajectoryMover::Exact {
                dim: self.model.dim,
                tables: self.ffbs(s),
            },
            KernelKind::Rwm { proposal_sd } | KernelKind::RwmGibbs { proposal_sd } => TrajectoryMover::Gibbs {
                target: self,
                s,
                proposal_sd,
                sweeps: kernel.sweeps,
            },
        })
    }
}

/// Output of the annealed trajectory filter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFilterOutput {
    pub estimate: FilterEstimate,
    /// ESS at the end of each datum's annealing run.
    pub terminal_ess: Vec<f64>,
    /// Final weighted trajectories.
    pub ensemble: Ensemble,
}

/// Anneals each new likelihood term into the whole trajectory `x_{1:k}` without resampling.
///
/// The first datum starts from `N` prior draws; each later datum extends every trajectory
/// by one transition and runs `schedule` (which must start at `phi0 = 0`) on the new term.
pub fn annealed_trajectory_filter(
    model: &GaussianRandomWalkSsm,
    observations: &[f64],
    schedule: &AnnealingSchedule,
    kernel: &KernelSpec,
    particles: usize,
    rng: &mut StreamRng,
) -> Result<TrajectoryFilterOutput> {
    if schedule.phi0() != 0.0 {
        return Err(Error::arg("each datum is annealed from phi0 = 0"));
    }
    if particles == 0 || observations.is_empty() {
        return Err(Error::arg("need N >= 1 and at least one observation"));
    }
    let d = model.dim;
    let qs = model.state_var.sqrt();
    let mut estimate = FilterEstimate::new(d);
    let mut terminal_ess = Vec::with_capacity(observations.len());
    let mut ensemble: Option<Ensemble> = None;
    let mut log_z = 0.0;
    for k in 1..=observations.len() {
        let target = TrajectoryTarget::new(model, &observations[..k])?;
        let run_seed = rng.next_u64();
        let start = match ensemble.take() {
            None => Ensemble::initialize(&target, 0.0, particles, run_seed)?,
            Some(mut ens) => {
                let fill_seed = rng.next_u64();
                ens.extend_dim(d, |i, old, new| {
                    let mut r = stream(fill_seed, &[i as u64]);
                    for (n, o) in new.iter_mut().zip(&old[old.len() - d..]) {
                        *n = o + qs * r.sample::<f64, _>(StandardNormal);
                    }
                    Ok(())
                })?;
                ens
            }
        };
        let report = advance(
            start,
            &target,
            schedule,
            kernel,
            &ResamplingPolicy::Never,
            schedule.steps(),
            run_seed,
        )?;
        terminal_ess.push(report.terminal_ess());
        estimate.log_predictive.push(report.log_nc - log_z);
        estimate.ess.push(report.terminal_ess());
        log_z = report.log_nc;
        let ens = report.ensemble;
        let w = ens.normalized_weights()?;
        let mut mean = vec![0.0; d];
        for (i, wi) in w.iter().enumerate() {
            let x = &ens.particle(i)[(k - 1) * d..];
            for (m, v) in mean.iter_mut().zip(x) {
                *m += wi * v;
            }
        }
        estimate.means.push(mean);
        ensemble = Some(ens);
    }
    Ok(TrajectoryFilterOutput {
        estimate,
        terminal_ess,
        ensemble: ensemble.expect("at least one datum"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::{kalman_filter, LinearGaussianSsm};
    use crate::smc::run_sampler;
    use crate::stats::{ks_two_sample, mean, sample_variance};
    use crate::theory::ess_limit_sample;

    #[test]
    fn single_datum_is_one_sampler_run() {
        let model = GaussianRandomWalkSsm::new(3, 1.0, 1.0).unwrap();
        let ys = [0.7];
        let sched = AnnealingSchedule::linear(0.0, 6).unwrap();
        let kernel = KernelSpec::rwm_gibbs(0.8).unwrap();
        let out = annealed_trajectory_filter(&model, &ys, &sched, &kernel, 20, &mut stream(1, &[])).unwrap();
        let target = TrajectoryTarget::new(&model, &ys).unwrap();
        let report = run_sampler(&target, &sched, &kernel, &ResamplingPolicy::Never, 20, &mut stream(1, &[])).unwrap();
        assert_eq!(out.ensemble, report.ensemble);
        assert_eq!(out.estimate.log_predictive, vec![report.log_nc]);
        assert_eq!(out.terminal_ess, vec![report.terminal_ess()]);
    }

    #[test]
    fn coordinate_filter_matches_kalman() {
        let model = GaussianRandomWalkSsm::new(4, 0.7, 1.3).unwrap();
        let ys = [0.3, -1.0, 2.0];
        let kf = kalman_filter(&LinearGaussianSsm::with_noise(1, 0.7, 1.3).unwrap(), &ys).unwrap();
        for (k, (m, v)) in model.coordinate_filter(&ys).into_iter().enumerate() {
            assert!((m - kf.means[k][0]).abs() < 1e-14);
            assert!((v - kf.covariances[k][(0, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_mover_samples_smoothing_law() {
        // at s = 1 the last coordinate is the filtering law; time 1 is the smoothed law
        let model = GaussianRandomWalkSsm::new(1, 1.0, 1.0).unwrap();
        let ys = [1.0, 2.0];
        let target = TrajectoryTarget::new(&model, &ys).unwrap();
        let mover = target.mover(1.0, &KernelSpec::exact()).unwrap();
        let mut rng = stream(2, &[]);
        let n = 200_000;
        let mut x = [0.0; 2];
        let (mut s1, mut s2) = (vec![], vec![]);
        for _ in 0..n {
            mover.apply(&mut x, &mut rng).unwrap();
            s1.push(x[0]);
            s2.push(x[1]);
        }
        let (m2, v2) = model.coordinate_filter(&ys)[1];
        assert!((mean(&s2) - m2).abs() < 0.01);
        assert!((sample_variance(&s2) - v2).abs() < 0.01);
        // smoothed x_1: precision matrix [[3, -1], [-1, 2]], shift (1, 2)
        let det = 5.0;
        let m1 = (2.0 * 1.0 + 1.0 * 2.0) / det;
        let v1 = 2.0 / det;
        assert!((mean(&s1) - m1).abs() < 0.01);
        assert!((sample_variance(&s1) - v1).abs() < 0.01);
    }

    #[test]
    fn gibbs_mover_agrees_with_exact() {
        let model = GaussianRandomWalkSsm::new(1, 1.0, 1.0).unwrap();
        let ys = [1.0, 2.0];
        let target = TrajectoryTarget::new(&model, &ys).unwrap();
        let mover = target.mover(0.4, &KernelSpec::rwm_gibbs(1.2).unwrap()).unwrap();
        let mut rng = stream(3, &[]);
        let mut x = [0.0; 2];
        let n = 300_000;
        let mut acc = 0.0;
        for _ in 0..n {
            mover.apply(&mut x, &mut rng).unwrap();
            acc += x[1];
        }
        let t = target.ffbs(0.4);
        assert!((acc / n as f64 - t.means[1]).abs() < 0.02);
    }

    #[test]
    fn two_data_means_match_kalman() {
        let model = GaussianRandomWalkSsm::new(2, 1.0, 1.0).unwrap();
        let ys = [0.8, -0.4];
        let sched = AnnealingSchedule::linear(0.0, 2).unwrap();
        let truth = model.coordinate_filter(&ys);
        let reps = 200;
        let mut est = vec![vec![]; 2];
        for r in 0..reps {
            let out = annealed_trajectory_filter(&model, &ys, &sched, &KernelSpec::exact(), 200, &mut stream(4, &[r])).unwrap();
            for k in 0..2 {
                est[k].push(out.estimate.means[k][0]);
            }
        }
        for k in 0..2 {
            let se = (sample_variance(&est[k]) / reps as f64).sqrt();
            assert!((mean(&est[k]) - truth[k].0).abs() < 4.0 * se + 1e-3, "time {k}: {} vs {}", mean(&est[k]), truth[k].0);
        }
    }

    #[test]
    fn terminal_ess_follows_limit_law() {
        let d = 128;
        let model = GaussianRandomWalkSsm::new(d, 1.0, 1.0).unwrap();
        let ys = [0.5, 1.5];
        let sigma2 = model.exact_kernel_sigma2(&ys).unwrap();
        let sched = AnnealingSchedule::linear(0.0, d).unwrap();
        let n = 20;
        let reps = 400;
        let ess: Vec<f64> = (0..reps)
            .map(|r| {
                annealed_trajectory_filter(&model, &ys, &sched, &KernelSpec::exact(), n, &mut stream(5, &[r]))
                    .unwrap()
                    .terminal_ess[1]
            })
            .collect();
        let mut rng = stream(6, &[]);
        let limit: Vec<f64> = (0..4000).map(|_| ess_limit_sample(n, sigma2, &mut rng).unwrap()).collect();
        let ks = ks_two_sample(&ess, &limit);
        assert!(ks.p_value > 0.001, "sigma2 {sigma2}, KS {ks:?}");
    }
}
