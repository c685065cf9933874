use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::kernels::{metropolis_accept, KernelKind, KernelSpec};
use crate::model::{AnnealingSchedule, MoveStats, Mover, TemperedTarget};
use crate::rng::StreamRng;
use crate::smc::{draw_ancestors, run_sampler, Ensemble, ResamplingPolicy};
use crate::theory::integrate_plain;

/// One coordinate of a state-space model whose state and observation factorize across coordinates.
pub trait CoordinateModel: Sync {
    /// Interval containing every state.
    fn support(&self) -> (f64, f64);
    /// Per-coordinate log-likelihood `h(y, x)`.
    fn log_h(&self, y: f64, x: f64) -> f64;
    /// An upper bound of `h(y, .)` on the support.
    fn log_h_max(&self, y: f64) -> f64;
    /// Transition density (or mass) `f(x | x_prev)`.
    fn transition_density(&self, x: f64, x_prev: f64) -> f64;
    fn sample_transition(&self, x_prev: f64, rng: &mut StreamRng) -> f64;
    /// `F(x_prev) = int e^{h(y, x)} f(x | x_prev) dx`.
    fn predictive_factor(&self, y: f64, x_prev: f64) -> Result<f64>;
}

/// States on `[0, 1]`, `f(x | x') = 1 + a (2x - 1)(2x' - 1)` and `h(y, x) = -b (y - x)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedToyModel {
    a: f64,
    b: f64,
}

impl BoundedToyModel {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.abs() < 1.0) {
            return Err(Error::arg(format!("|a| must be below 1 for a positive density, got {a}")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::arg(format!("b must be finite and non-negative, got {b}")));
        }
        Ok(Self { a, b })
    }

    /// Bounds `(f_min, f_max)` of the transition density.
    pub fn f_bounds(&self) -> (f64, f64) {
        (1.0 - self.a.abs(), 1.0 + self.a.abs())
    }
}

impl CoordinateModel for BoundedToyModel {
    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn log_h(&self, y: f64, x: f64) -> f64 {
        -self.b * (y - x) * (y - x)
    }

    fn log_h_max(&self, y: f64) -> f64 {
        let c = y.clamp(0.0, 1.0);
        self.log_h(y, c)
    }

    fn transition_density(&self, x: f64, x_prev: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        1.0 + self.a * (2.0 * x - 1.0) * (2.0 * x_prev - 1.0)
    }

    fn sample_transition(&self, x_prev: f64, rng: &mut StreamRng) -> f64 {
        let fmax = 1.0 + self.a.abs();
        loop {
            let x: f64 = rng.random();
            if rng.random::<f64>() * fmax <= self.transition_density(x, x_prev) {
                return x;
            }
        }
    }

    /// Closed form: `I0 + a (2x' - 1) I1` with `I0 = int_0^1 e^{h}` and `I1 = int_0^1 (2x - 1) e^{h}`.
    fn predictive_factor(&self, y: f64, x_prev: f64) -> Result<f64> {
        let b = self.b;
        if b == 0.0 {
            return Ok(1.0);
        }
        let rb = b.sqrt();
        let i0 = 0.5 * (std::f64::consts::PI / b).sqrt() * (erf(rb * (1.0 - y)) + erf(rb * y));
        let centred = ((-b * y * y).exp() - (-b * (1.0 - y) * (1.0 - y)).exp()) / (2.0 * b);
        let i1 = 2.0 * (centred + y * i0) - i0;
        Ok(i0 + self.a * (2.0 * x_prev - 1.0) * i1)
    }
}

/// A finite-state coordinate model with transition matrix `p[i][j] = P(x_j | x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteToyModel {
    states: Vec<f64>,
    transition: Vec<Vec<f64>>,
    /// `h(y, x)` is `y * weights[x]`.
    weights: Vec<f64>,
}

impl DiscreteToyModel {
    pub fn new(states: Vec<f64>, transition: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let k = states.len();
        if k == 0 || transition.len() != k || weights.len() != k || transition.iter().any(|r| r.len() != k) {
            return Err(Error::arg("states, transition rows and weights must agree in size"));
        }
        for r in &transition {
            if r.iter().any(|&p| p < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::arg("transition rows must be probability vectors"));
            }
        }
        Ok(Self {
            states,
            transition,
            weights,
        })
    }

    fn index(&self, x: f64) -> Option<usize> {
        self.states.iter().position(|&s| s == x)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }
}

impl CoordinateModel for DiscreteToyModel {
    fn support(&self) -> (f64, f64) {
        let lo = self.states.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.states.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn log_h(&self, y: f64, x: f64) -> f64 {
        self.index(x).map_or(f64::NEG_INFINITY, |i| y * self.weights[i])
    }

    fn log_h_max(&self, y: f64) -> f64 {
        self.weights.iter().map(|w| y * w).fold(f64::NEG_INFINITY, f64::max)
    }

    fn transition_density(&self, x: f64, x_prev: f64) -> f64 {
        match (self.index(x_prev), self.index(x)) {
            (Some(i), Some(j)) => self.transition[i][j],
            _ => 0.0,
        }
    }

    fn sample_transition(&self, x_prev: f64, rng: &mut StreamRng) -> f64 {
        let row = &self.transition[self.index(x_prev).expect("state outside the model")];
        let mut u: f64 = rng.random();
        for (j, p) in row.iter().enumerate() {
            if u < *p {
                return self.states[j];
            }
            u -= p;
        }
        *self.states.last().expect("non-empty state space")
    }

    fn predictive_factor(&self, y: f64, x_prev: f64) -> Result<f64> {
        let i = self
            .index(x_prev)
            .ok_or_else(|| Error::arg(format!("state {x_prev} not in the model")))?;
        Ok(self.transition[i]
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * (y * w).exp())
            .sum())
    }
}

/// A one-dimensional law that can integrate and sample; stands in for the filter marginal at `n - 1`.
pub trait MarginalLaw: Sync {
    fn expect(&self, f: &dyn Fn(f64) -> f64) -> Result<f64>;
    fn sample(&self, rng: &mut StreamRng) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformLaw {
    pub lo: f64,
    pub hi: f64,
}

impl MarginalLaw for UniformLaw {
    fn expect(&self, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        Ok(integrate_plain(f, self.lo, self.hi)? / (self.hi - self.lo))
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        rng.random_range(self.lo..self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

impl MarginalLaw for DiscreteLaw {
    fn expect(&self, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        Ok(self.atoms.iter().zip(&self.probs).map(|(x, p)| p * f(*x)).sum())
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        let mut u: f64 = rng.random();
        for (x, p) in self.atoms.iter().zip(&self.probs) {
            if u < *p {
                return *x;
            }
            u -= p;
        }
        *self.atoms.last().expect("non-empty law")
    }
}

/// `(E[F], E[F^2])` of the predictive factor under the previous marginal.
pub fn predictive_factor_moments<M: CoordinateModel, L: MarginalLaw>(model: &M, law: &L, y: f64) -> Result<(f64, f64)> {
    let cell = std::cell::RefCell::new(None::<Error>);
    let f = |x: f64| match model.predictive_factor(y, x) {
        Ok(v) => v,
        Err(e) => {
            cell.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let m1 = law.expect(&f)?;
    let m2 = law.expect(&|x| f(x).powi(2))?;
    if let Some(e) = cell.into_inner() {
        return Err(e);
    }
    if !(m1 > 0.0 && m2.is_finite()) {
        return Err(Error::Numerical("predictive factor moments are not finite and positive".into()));
    }
    Ok((m1, m2))
}

/// `(1/N) [(E[F^2] / E[F]^2)^d - 1]`: relative L2 error of the predictive-likelihood
/// estimate built from `N` exact draws of the previous filter.
pub fn marginal_predictive_rel_error<M: CoordinateModel, L: MarginalLaw>(
    model: &M,
    law: &L,
    y: f64,
    d: usize,
    particles: usize,
) -> Result<f64> {
    if d == 0 || particles == 0 {
        return Err(Error::arg("need d >= 1 and N >= 1"));
    }
    let (m1, m2) = predictive_factor_moments(model, law, y)?;
    let ratio = (m2 / (m1 * m1)).max(1.0);
    Ok((d as f64 * ratio.ln()).exp_m1() / particles as f64)
}

/// `log((1/N) sum_i prod_j F(c_ij))`: the predictive estimate once the tempered mixture is integrated exactly.
pub fn idealized_log_predictive<M: CoordinateModel>(model: &M, y: f64, centers: &[f64], d: usize) -> Result<f64> {
    if d == 0 || centers.is_empty() || !centers.len().is_multiple_of(d) {
        return Err(Error::arg("centers must hold N x d values"));
    }
    let terms = centers
        .chunks(d)
        .map(|c| c.iter().map(|&x| model.predictive_factor(y, x).map(f64::ln)).sum::<Result<f64>>())
        .collect::<Result<Vec<f64>>>()?;
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    Ok(m + (s / terms.len() as f64).ln())
}

/// `[(1/N) sum_i prod_j f(x_j | c_ij)] * exp(s sum_j h(y, x_j))`, with the mixture as base.
pub struct MixtureTarget<'a, M> {
    model: &'a M,
    y: f64,
    centers: Vec<f64>,
    dim: usize,
}

impl<'a, M: CoordinateModel> MixtureTarget<'a, M> {
    pub fn new(model: &'a M, y: f64, centers: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || centers.is_empty() || !centers.len().is_multiple_of(dim) {
            return Err(Error::arg("centers must hold N x d values"));
        }
        Ok(Self { model, y, centers, dim })
    }

    pub fn components(&self) -> usize {
        self.centers.len() / self.dim
    }

    fn log_components(&self, x: &[f64], out: &mut [f64]) {
        for (l, c) in out.iter_mut().zip(self.centers.chunks(self.dim)) {
            *l = x.iter().zip(c).map(|(&xj, &cj)| self.model.transition_density(xj, cj).ln()).sum();
        }
    }

    fn draw_from_mixture(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let i = rng.random_range(0..self.components());
        let c = &self.centers[i * self.dim..(i + 1) * self.dim];
        for (o, &cj) in out.iter_mut().zip(c) {
            *o = self.model.sample_transition(cj, rng);
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

const MAX_REJECTION_TRIES: usize = 10_000_000;

pub enum MixtureMover<'t, 'a, M> {
    /// Rejection from the mixture with acceptance `exp(s sum_j (h - h_max))`.
    Exact { target: &'t MixtureTarget<'a, M>, s: f64 },
    /// Coordinatewise random-walk Metropolis on the full mixture density.
    Gibbs {
        target: &'t MixtureTarget<'a, M>,
        s: f64,
        proposal_sd: f64,
        sweeps: usize,
    },
}

impl<M: CoordinateModel> Mover for MixtureMover<'_, '_, M> {
    fn apply(&self, x: &mut [f64], rng: &mut StreamRng) -> Result<MoveStats> {
        match *self {
            MixtureMover::Exact { target, s } => {
                let hmax = target.model.log_h_max(target.y);
                for _ in 0..MAX_REJECTION_TRIES {
                    target.draw_from_mixture(rng, x);
                    let excess: f64 = x.iter().map(|&v| target.model.log_h(target.y, v) - hmax).sum();
                    if rng.random::<f64>().ln() <= s * excess {
                        let d = x.len() as u64;
                        return Ok(MoveStats { proposed: d, accepted: d });
                    }
                }
                Err(Error::Numerical("rejection sampler for the tempered mixture did not accept".into()))
            }
            MixtureMover::Gibbs {
                target,
                s,
                proposal_sd,
                sweeps,
            } => {
                let d = target.dim;
                let (lo, hi) = target.model.support();
                let mut lc = vec![0.0; target.components()];
                target.log_components(x, &mut lc);
                let mut proposal_lc = lc.clone();
                let mut accepted = 0;
                for _ in 0..sweeps {
                    for j in 0..d {
                        let z: f64 = rng.sample(StandardNormal);
                        let xn = x[j] + proposal_sd * z;
                        if !(lo..=hi).contains(&xn) {
                            continue;
                        }
                        for ((pl, l), c) in proposal_lc.iter_mut().zip(&lc).zip(target.centers.chunks(d)) {
                            *pl = l - target.model.transition_density(x[j], c[j]).ln()
                                + target.model.transition_density(xn, c[j]).ln();
                        }
                        let new = log_sum_exp(&proposal_lc) + s * target.model.log_h(target.y, xn);
                        let old = log_sum_exp(&lc) + s * target.model.log_h(target.y, x[j]);
                        if metropolis_accept(new, old, rng) {
                            x[j] = xn;
                            lc.copy_from_slice(&proposal_lc);
                            accepted += 1;
                        }
                    }
                }
                Ok(MoveStats {
                    proposed: (d * sweeps) as u64,
                    accepted,
                })
            }
        }
    }
}

impl<'a, M: CoordinateModel> TemperedTarget for MixtureTarget<'a, M> {
    type Mover<'t>
        = MixtureMover<'t, 'a, M>
    where
        Self: 't;

    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.model.log_h(self.y, v)).sum()
    }

    fn sample_initial(&self, s: f64, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        if s == 0.0 {
            self.draw_from_mixture(rng, out);
            return Ok(());
        }
        MixtureMover::Exact { target: self, s }.apply(out, rng).map(|_| ())
    }

    fn mover(&self, s: f64, kernel: &KernelSpec) -> Result<MixtureMover<'_, 'a, M>> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::arg(format!("kernel temperature {s} outside [0, 1]")));
        }
        Ok(match kernel.kind {
            KernelKind::Exact => MixtureMover::Exact { target: self, s },
            KernelKind::Rwm { proposal_sd } | KernelKind::RwmGibbs { proposal_sd } => MixtureMover::Gibbs {
                target: self,
                s,
                proposal_sd,
                sweeps: kernel.sweeps,
            },
        })
    }
}

/// New particles and the predictive-likelihood estimate of one marginal-algorithm step.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalStep {
    pub ensemble: Ensemble,
    pub log_predictive: f64,
}

/// Resamples `N` mixture centers from the weighted previous particles, then anneals the
/// new likelihood term against the mixture prior.
#[allow(clippy::too_many_arguments)]
pub fn marginal_algorithm_step<M: CoordinateModel>(
    model: &M,
    previous: &Ensemble,
    y: f64,
    schedule: &AnnealingSchedule,
    kernel: &KernelSpec,
    policy: &ResamplingPolicy,
    particles: usize,
    rng: &mut StreamRng,
) -> Result<MarginalStep> {
    if schedule.phi0() != 0.0 {
        return Err(Error::arg("the marginal algorithm starts from the mixture: phi0 must be 0"));
    }
    let d = previous.dim();
    let ancestors = draw_ancestors(previous.log_weights(), particles, 0, rng)?;
    let mut centers = Vec::with_capacity(particles * d);
    for a in ancestors {
        centers.extend_from_slice(previous.particle(a));
    }
    let target = MixtureTarget::new(model, y, centers, d)?;
    let report = run_sampler(&target, schedule, kernel, policy, particles, rng)?;
    Ok(MarginalStep {
        log_predictive: report.log_nc,
        ensemble: report.ensemble,
    })
}
