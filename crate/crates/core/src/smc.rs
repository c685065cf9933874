//! The particle engine: moves, importance weights, ESS, multinomial resampling
//! and block-wise normalizing-constant accumulation.
//!
//! Log-weights are kept per block. A block closes at every resampling event and
//! at termination; the log normalizing-constant estimate is the sum of the block
//! log-mean weights.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{AnnealingSchedule, MoveStats, Mover, TemperedTarget};
use crate::rng::{control_stream, derive_seed, particle_stream, StreamRng};

/// Work per step (particles times dimension) above which moves run on the thread pool.
const PARALLEL_WORK: usize = 1 << 16;

/// Sampler step at which a resampling event happened, with the ESS that triggered it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleEvent {
    pub step: usize,
    pub ess: f64,
}

/// Particle positions (particle-major `N x d`) and per-block log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    positions: Vec<f64>,
    log_weights: Vec<f64>,
    block_log_means: Vec<f64>,
    resample_events: Vec<ResampleEvent>,
    particles: usize,
    dim: usize,
}

impl Ensemble {
    /// Ensemble with unit weights at the given positions.
    pub fn from_positions(positions: Vec<f64>, particles: usize, dim: usize) -> Result<Self> {
        if particles == 0 || dim == 0 {
            return Err(Error::arg("ensemble needs N >= 1 and d >= 1"));
        }
        if positions.len() != particles * dim {
            return Err(Error::arg(format!(
                "expected {} positions, got {}",
                particles * dim,
                positions.len()
            )));
        }
        Ok(Self {
            positions,
            log_weights: vec![0.0; particles],
            block_log_means: Vec::new(),
            resample_events: Vec::new(),
            particles,
            dim,
        })
    }

    /// Draws `N` independent particles from the target's bridge at `s`.
    pub fn initialize<T: TemperedTarget>(target: &T, s: f64, particles: usize, run_seed: u64) -> Result<Self> {
        let dim = target.dim();
        let mut ens = Self::from_positions(vec![0.0; particles * dim], particles, dim)?;
        for (i, x) in ens.positions.chunks_mut(dim).enumerate() {
            let mut rng = particle_stream(run_seed, i);
            target.sample_initial(s, &mut rng, x)?;
        }
        Ok(ens)
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Values of coordinate `j` across particles.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.positions.iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_weights_mut(&mut self) -> &mut [f64] {
        &mut self.log_weights
    }

    pub fn block_log_means(&self) -> &[f64] {
        &self.block_log_means
    }

    pub fn resample_events(&self) -> &[ResampleEvent] {
        &self.resample_events
    }

    /// Normalized weights of the current block.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalized(&self.log_weights, 0)
    }

    /// ESS of the current block.
    pub fn ess(&self) -> Result<f64> {
        ess(&self.log_weights)
    }

    /// Appends coordinates to every particle; `fill(i, old, new)` writes particle `i`'s new block.
    pub fn extend_dim<F>(&mut self, extra: usize, mut fill: F) -> Result<()>
    where
        F: FnMut(usize, &[f64], &mut [f64]) -> Result<()>,
    {
        let d = self.dim + extra;
        let mut out = vec![0.0; self.particles * d];
        for (i, (new, old)) in out.chunks_mut(d).zip(self.positions.chunks(self.dim)).enumerate() {
            new[..self.dim].copy_from_slice(old);
            fill(i, old, &mut new[self.dim..])?;
        }
        self.positions = out;
        self.dim = d;
        Ok(())
    }

    /// Log-mean weight of the open block.
    pub fn log_mean_weight(&self) -> Result<f64> {
        log_mean_exp(&self.log_weights).ok_or(Error::Degeneracy { step: 0 })
    }

    /// Sum of the closed blocks' log-means and the open block's log-mean weight.
    pub fn log_nc(&self) -> Result<f64> {
        Ok(self.block_log_means.iter().sum::<f64>() + self.log_mean_weight()?)
    }

    /// Records the block's log-mean weight and resets the weights to one.
    fn close_block(&mut self, step: usize) -> Result<f64> {
        let m = log_mean_exp(&self.log_weights).ok_or(Error::Degeneracy { step })?;
        self.block_log_means.push(m);
        self.log_weights.iter_mut().for_each(|w| *w = 0.0);
        Ok(m)
    }

    fn resample_positions(&mut self, step: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
        let ancestors = draw_ancestors(&self.log_weights, self.particles, step, rng)?;
        let d = self.dim;
        let mut out = vec![0.0; self.positions.len()];
        for (slot, &a) in out.chunks_mut(d).zip(&ancestors) {
            slot.copy_from_slice(&self.positions[a * d..(a + 1) * d]);
        }
        self.positions = out;
        Ok(ancestors)
    }
}

fn log_mean_exp(lw: &[f64]) -> Option<f64> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return None;
    }
    let s: f64 = lw.iter().map(|w| (w - m).exp()).sum();
    Some(m + (s / lw.len() as f64).ln())
}

fn normalized(lw: &[f64], step: usize) -> Result<Vec<f64>> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return Err(Error::Degeneracy { step });
    }
    let w: Vec<f64> = lw.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}

/// `(sum w)^2 / sum w^2`, computed after subtracting the largest log-weight.
pub fn ess(log_weights: &[f64]) -> Result<f64> {
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return Err(Error::Degeneracy { step: 0 });
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &v in log_weights {
        let w = (v - m).exp();
        s1 += w;
        s2 += w * w;
    }
    Ok((s1 * s1 / s2).clamp(1.0, log_weights.len() as f64))
}

/// `count` independent draws from the normalized weights.
pub fn draw_ancestors(log_weights: &[f64], count: usize, step: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    let w = normalized(log_weights, step)?;
    let dist = WeightedIndex::new(&w).map_err(|_| Error::Degeneracy { step })?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Adds `(phi_next - phi_prev) * potential(x)` to each log-weight at the current positions.
pub fn weight_update<T: TemperedTarget>(
    ensemble: &mut Ensemble,
    phi_prev: f64,
    phi_next: f64,
    target: &T,
    step: usize,
) -> Result<()> {
    if !(phi_next > phi_prev) {
        return Err(Error::arg(format!("temperatures must increase: {phi_prev} -> {phi_next}")));
    }
    let dphi = phi_next - phi_prev;
    let d = ensemble.dim;
    for (i, (lw, x)) in ensemble.log_weights.iter_mut().zip(ensemble.positions.chunks(d)).enumerate() {
        let g = target.potential(x);
        if !g.is_finite() {
            return Err(Error::Propagation { particle: i, step });
        }
        *lw += dphi * g;
    }
    Ok(())
}

/// Multinomial resampling: `N` iid draws from the weighted particles, weights reset to one.
///
/// Closes the current block and records the event at `step`.
pub fn multinomial_resample(ensemble: &mut Ensemble, step: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    let e = ess(&ensemble.log_weights).map_err(|_| Error::Degeneracy { step })?;
    let ancestors = ensemble.resample_positions(step, rng)?;
    ensemble.close_block(step)?;
    ensemble.resample_events.push(ResampleEvent { step, ess: e });
    Ok(ancestors)
}

/// When to resample.
#[derive(Debug, Clone, PartialEq)]
pub enum ResamplingPolicy {
    Never,
    /// Resample whenever ESS drops below `threshold`.
    EssThreshold { threshold: f64 },
    /// Resample after the weight update of each listed step.
    Deterministic { steps: Vec<usize> },
    EssThresholdPlusFinal { threshold: f64 },
    DeterministicPlusFinal { steps: Vec<usize> },
}

impl ResamplingPolicy {
    /// ESS threshold `N / 2`.
    pub fn half_ess(particles: usize) -> Self {
        ResamplingPolicy::EssThreshold {
            threshold: particles as f64 / 2.0,
        }
    }

    /// The same rule with an extra resampling after the last weight update.
    pub fn with_final(self) -> Self {
        match self {
            ResamplingPolicy::EssThreshold { threshold } => ResamplingPolicy::EssThresholdPlusFinal { threshold },
            ResamplingPolicy::Deterministic { steps } => ResamplingPolicy::DeterministicPlusFinal { steps },
            other => other,
        }
    }

    pub fn resamples_at_end(&self) -> bool {
        matches!(
            self,
            ResamplingPolicy::EssThresholdPlusFinal { .. } | ResamplingPolicy::DeterministicPlusFinal { .. }
        )
    }

    /// Checks the policy against `N` particles and `p` steps.
    pub fn validate(&self, particles: usize, steps: usize) -> Result<()> {
        match self {
            ResamplingPolicy::Never => Ok(()),
            ResamplingPolicy::EssThreshold { threshold } | ResamplingPolicy::EssThresholdPlusFinal { threshold } => {
                if *threshold >= 1.0 && *threshold <= particles as f64 {
                    Ok(())
                } else {
                    Err(Error::arg(format!("ESS threshold {threshold} outside [1, {particles}]")))
                }
            }
            ResamplingPolicy::Deterministic { steps: ts } | ResamplingPolicy::DeterministicPlusFinal { steps: ts } => {
                if ts.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::arg("resampling steps must be strictly increasing"));
                }
                if ts.iter().any(|&t| t == 0 || t >= steps) {
                    return Err(Error::arg(format!("resampling steps must lie in 1..{steps}")));
                }
                Ok(())
            }
        }
    }

    fn triggers(&self, step: usize, ess: f64) -> bool {
        match self {
            ResamplingPolicy::Never => false,
            ResamplingPolicy::EssThreshold { threshold } | ResamplingPolicy::EssThresholdPlusFinal { threshold } => {
                ess < *threshold
            }
            ResamplingPolicy::Deterministic { steps } | ResamplingPolicy::DeterministicPlusFinal { steps } => {
                steps.binary_search(&step).is_ok()
            }
        }
    }
}

/// Output of a sampler run.
///
/// The ensemble keeps the blocks closed by resampling; its current weights form the
/// still-open last block, so it can be handed to [`advance`] again.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerReport {
    pub ensemble: Ensemble,
    /// Log-mean weight of every block, the last one included.
    pub block_log_means: Vec<f64>,
    /// ESS after each step's weight update, before any resampling.
    pub ess_trace: Vec<f64>,
    /// Acceptance rate of each step's move.
    pub acceptance: Vec<f64>,
    pub moves: MoveStats,
    /// Sum of the block log-mean weights.
    pub log_nc: f64,
    /// Whether an extra resampling took place after the last weight update.
    pub final_resampled: bool,
    /// Last step executed.
    pub last_step: usize,
}

impl SamplerReport {
    /// ESS at the last executed step.
    pub fn terminal_ess(&self) -> f64 {
        self.ess_trace.last().copied().unwrap_or(self.ensemble.particles as f64)
    }

    /// Lengths (in steps) of the blocks between resampling events.
    pub fn block_lengths(&self) -> Vec<usize> {
        let mut prev = 0;
        let mut out = Vec::new();
        for e in &self.ensemble.resample_events {
            out.push(e.step - prev);
            prev = e.step;
        }
        out.push(self.last_step - prev);
        out
    }
}

/// Runs the sampler through all steps of `schedule` from `N` draws at `phi(0)`.
pub fn run_sampler<T: TemperedTarget>(
    target: &T,
    schedule: &AnnealingSchedule,
    kernel: &KernelSpec,
    policy: &ResamplingPolicy,
    particles: usize,
    rng: &mut StreamRng,
) -> Result<SamplerReport> {
    run_sampler_until(target, schedule, kernel, policy, particles, schedule.steps(), rng)
}

/// As [`run_sampler`] but stops after step `last_step`. The end-of-run resampling,
/// if requested, only happens when `last_step` is the final step.
pub fn run_sampler_until<T: TemperedTarget>(
    target: &T,
    schedule: &AnnealingSchedule,
    kernel: &KernelSpec,
    policy: &ResamplingPolicy,
    particles: usize,
    last_step: usize,
    rng: &mut StreamRng,
) -> Result<SamplerReport> {
    if particles == 0 {
        return Err(Error::arg("need at least one particle"));
    }
    let run_seed = rng.next_u64();
    let ensemble = Ensemble::initialize(target, schedule.phi(0), particles, run_seed)?;
    advance(ensemble, target, schedule, kernel, policy, last_step, run_seed)
}

/// Runs steps `1..=last_step` of `schedule` on an existing ensemble.
///
/// The ensemble's current weights are carried into the first block, and the weights
/// of the last block are left in place unless the policy resamples at the end.
pub fn advance<T: TemperedTarget>(
    mut ensemble: Ensemble,
    target: &T,
    schedule: &AnnealingSchedule,
    kernel: &KernelSpec,
    policy: &ResamplingPolicy,
    last_step: usize,
    run_seed: u64,
) -> Result<SamplerReport> {
    let p = schedule.steps();
    if last_step > p {
        return Err(Error::arg(format!("last step {last_step} beyond schedule length {p}")));
    }
    if ensemble.dim != target.dim() {
        return Err(Error::arg("ensemble and target dimensions differ"));
    }
    policy.validate(ensemble.particles, p)?;

    let n = ensemble.particles;
    let d = ensemble.dim;
    let mut streams: Vec<StreamRng> = (0..n).map(|i| particle_stream(derive_seed(run_seed, &[1]), i)).collect();
    let mut control = control_stream(run_seed);
    let mut ess_trace = Vec::with_capacity(last_step);
    let mut acceptance = Vec::with_capacity(last_step);
    let mut moves = MoveStats::default();
    let mut potentials = vec![0.0; n];
    let parallel = n * d >= PARALLEL_WORK && rayon::current_num_threads() > 1;

    let mut phi_prev = schedule.phi(0);
    for step in 1..=last_step {
        let phi = schedule.phi(step);
        if !(phi >= phi_prev) {
            return Err(Error::arg(format!("schedule decreasing at step {step}")));
        }
        let mover = target.mover(phi, kernel)?;
        // the potential is read before the move: weights use the pre-move state
        let stats = if parallel {
            ensemble
                .positions
                .par_chunks_mut(d)
                .zip(streams.par_iter_mut())
                .zip(potentials.par_iter_mut())
                .map(|((x, r), g)| {
                    *g = target.potential(x);
                    mover.apply(x, r)
                })
                .try_reduce(MoveStats::default, |mut a, b| {
                    a.merge(b);
                    Ok(a)
                })
        } else {
            let mut acc = MoveStats::default();
            for ((x, r), g) in ensemble.positions.chunks_mut(d).zip(streams.iter_mut()).zip(potentials.iter_mut()) {
                *g = target.potential(x);
                acc.merge(mover.apply(x, r)?);
            }
            Ok(acc)
        };
        let stats = stats.map_err(|e| match e {
            Error::Propagation { particle, .. } => Error::Propagation { particle, step },
            other => other,
        })?;
        acceptance.push(stats.rate());
        moves.merge(stats);

        let dphi = phi - phi_prev;
        for (i, (lw, g)) in ensemble.log_weights.iter_mut().zip(&potentials).enumerate() {
            if !g.is_finite() {
                return Err(Error::Propagation { particle: i, step });
            }
            *lw += dphi * g;
        }
        let e = ess(&ensemble.log_weights).map_err(|_| Error::Degeneracy { step })?;
        ess_trace.push(e);
        if policy.triggers(step, e) {
            multinomial_resample(&mut ensemble, step, &mut control)?;
        }
        phi_prev = phi;
    }

    let resampled_last = ensemble.resample_events.last().is_some_and(|ev| ev.step == last_step);
    let mut final_resampled = false;
    let mut block_log_means = ensemble.block_log_means.clone();
    if policy.resamples_at_end() && last_step == p && !resampled_last {
        ensemble.resample_positions(last_step, &mut control)?;
        ensemble.close_block(last_step)?;
        block_log_means = ensemble.block_log_means.clone();
        final_resampled = true;
    } else {
        block_log_means.push(log_mean_exp(&ensemble.log_weights).ok_or(Error::Degeneracy { step: last_step })?);
    }
    let log_nc = block_log_means.iter().sum();
    Ok(SamplerReport {
        ensemble,
        block_log_means,
        ess_trace,
        acceptance,
        moves,
        log_nc,
        final_resampled,
        last_step,
    })
}

/// Sum of the block log-mean weights, including the final block.
pub fn norm_const_log_estimate(report: &SamplerReport) -> f64 {
    report.block_log_means.iter().sum()
}

/// Average of `phi` over coordinate `j` of an unweighted sample at the final time.
///
/// Resamples once unless the run already resampled after its last weight update.
pub fn final_resample_estimate<F>(report: &SamplerReport, phi: F, j: usize, rng: &mut StreamRng) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let ens = &report.ensemble;
    if j >= ens.dim {
        return Err(Error::arg(format!("coordinate {j} out of range for d = {}", ens.dim)));
    }
    let d = ens.dim;
    let n = ens.particles;
    let total: f64 = if report.final_resampled {
        (0..n).map(|i| phi(ens.positions[i * d + j])).sum()
    } else {
        draw_ancestors(&ens.log_weights, n, report.last_step, rng)?
            .into_iter()
            .map(|a| phi(ens.positions[a * d + j]))
            .sum()
    };
    Ok(total / n as f64)
}
