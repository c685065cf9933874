use crate::error::{Error, Result};
use crate::filtering::{
    abc_error_metric, abc_filter, abc_mc_spread, idealized_log_predictive, kalman_filter, marginal_predictive_rel_error,
    predictive_factor_moments, simulate_ssm, AbcResampling, BoundedToyModel, FilterEstimate, LinearGaussianSsm,
    MarginalLaw, UniformLaw,
};
use crate::harness::config::{ExperimentConfig, ResamplingChoice};
use crate::harness::report::{Cell, ExperimentOutput};
use crate::harness::{collect_replicates, replicate_rng, Tag};
use crate::stats::{bootstrap_ci, linear_regression, mean};

/// ABC filter error against the Kalman filter on simulated data, per time and dimension.
///
/// Rows are in long form: `error` per time, `time_avg_error` per dimension, `error_ratio` of
/// each dimension's average against the first dimension's, and `mc_spread_avg` (the time
/// average of the across-replicate spread at `mc_dim`) for each of `mc_particles`.
pub fn exp_abc(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(vec!["kind", "d", "n", "time", "value", "used"]);
    let epsilon: f64 = config.extra("epsilon")?;
    let horizon: usize = config.extra("horizon")?;
    let mc_particles: Vec<usize> = config.extra_list("mc_particles")?;
    let mc_dim: usize = config.extra("mc_dim")?;
    let power: f64 = config.extra("moment_power")?;
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let resampling = match config.resampling.choice {
        ResamplingChoice::Never => AbcResampling::Never,
        ResamplingChoice::Ess { fraction } => AbcResampling::EssThreshold(fraction),
        ResamplingChoice::Deterministic { .. } => {
            return Err(Error::Config("the ABC filter resamples on ESS or never".into()))
        }
    };
    let threshold = |n: usize| match resampling {
        AbcResampling::EssThreshold(f) => AbcResampling::EssThreshold(f * n as f64),
        other => other,
    };
    let n = *config.particles.first().expect("validated");
    let mut averages = Vec::new();
    for &d in &config.dims {
        let (model, obs, truth) = abc_data(config.seed, d, horizon)?;
        let tag = [Tag::Abc as u64, d as u64, n as u64];
        let ests = abc_replicates(&mut out, config, &model, &obs, epsilon, n, threshold(n), &tag)?;
        let mut errs = Vec::new();
        for k in 1..=horizon {
            let (value, used) = match abc_error_metric(&ests, truth[k - 1], k, 0, power) {
                Ok(v) => v,
                Err(Error::Estimation(_)) => (f64::NAN, 0),
                Err(e) => return Err(e),
            };
            if value.is_finite() {
                errs.push(value);
            }
            out.push(vec!["error".into(), d.into(), n.into(), k.into(), value.into(), used.into()]);
        }
        let avg = if errs.is_empty() { f64::NAN } else { mean(&errs) };
        out.push(vec!["time_avg_error".into(), d.into(), n.into(), 0usize.into(), avg.into(), errs.len().into()]);
        averages.push((d, avg));
    }
    if let Some(&(_, base)) = averages.first() {
        for &(d, avg) in &averages[1..] {
            out.push(vec!["error_ratio".into(), d.into(), n.into(), 0usize.into(), (avg / base).into(), 0usize.into()]);
        }
    }
    if !mc_particles.is_empty() {
        let (model, obs, _) = abc_data(config.seed, mc_dim, horizon)?;
        for &m in &mc_particles {
            let tag = [Tag::Abc as u64, mc_dim as u64, m as u64, 1];
            let ests = abc_replicates(&mut out, config, &model, &obs, epsilon, m, threshold(m), &tag)?;
            let spreads: Vec<f64> = (1..=horizon).filter_map(|k| abc_mc_spread(&ests, k, 0).ok()).collect();
            let avg = if spreads.is_empty() { f64::NAN } else { mean(&spreads) };
            out.push(vec![
                "mc_spread_avg".into(),
                mc_dim.into(),
                m.into(),
                0usize.into(),
                avg.into(),
                spreads.len().into(),
            ]);
        }
    }
    Ok(out)
}

/// Model, simulated observations and Kalman means of the first coordinate for dimension `d`.
fn abc_data(seed: u64, d: usize, horizon: usize) -> Result<(LinearGaussianSsm, Vec<f64>, Vec<f64>)> {
    let model = LinearGaussianSsm::new(d)?;
    let mut rng = replicate_rng(seed, &[Tag::Abc as u64, d as u64], u64::MAX);
    let record = simulate_ssm(&model, horizon, &mut rng);
    let kf = kalman_filter(&model, &record.observations)?;
    let truth = kf.means.iter().map(|m| m[0]).collect();
    Ok((model, record.observations, truth))
}

#[allow(clippy::too_many_arguments)]
fn abc_replicates(
    out: &mut ExperimentOutput,
    config: &ExperimentConfig,
    model: &LinearGaussianSsm,
    obs: &[f64],
    epsilon: f64,
    n: usize,
    resampling: AbcResampling,
    tag: &[u64],
) -> Result<Vec<FilterEstimate>> {
    let ests = collect_replicates(out, config.replicates, |r| {
        let mut rng = replicate_rng(config.seed, tag, r as u64);
        abc_filter(model, obs, epsilon, n, resampling, &mut rng)
    })?;
    // a filter that collapses part-way still contributes its earlier times
    out.degenerate += ests.iter().filter(|e| e.is_degenerate()).count();
    Ok(ests)
}

/// Relative L2 error of the predictive-likelihood estimate built from exact draws of the
/// previous filter, for the bounded toy model, against its closed form.
///
/// `log_slope` regresses the log of batch-mean squared errors on `d`; `formula_log_slope` is
/// the corresponding `log(m2 / m1^2)`.
pub fn exp_marginal_collapse(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(vec![
        "d",
        "n",
        "replicates",
        "formula",
        "empirical",
        "empirical_lo",
        "empirical_hi",
        "log_slope",
        "log_slope_se",
        "slope_p",
        "formula_log_slope",
    ]);
    let model = BoundedToyModel::new(config.extra("toy_a")?, config.extra("toy_b")?)?;
    let y: f64 = config.extra("observation")?;
    let batches: usize = config.extra("batches")?;
    if batches < 1 || config.replicates < batches {
        return Err(Error::Config("need 1 <= batches <= replicates".into()));
    }
    let law = UniformLaw { lo: 0.0, hi: 1.0 };
    let (m1, m2) = predictive_factor_moments(&model, &law, y)?;
    let formula_slope = (m2 / (m1 * m1)).ln();
    for &n in &config.particles {
        let mut rows = Vec::new();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for &d in &config.dims {
            let formula = marginal_predictive_rel_error(&model, &law, y, d, n)?;
            let log_truth = d as f64 * m1.ln();
            let tag = [Tag::MarginalCollapse as u64, d as u64, n as u64];
            let sq = collect_replicates(&mut out, config.replicates, |r| {
                let mut rng = replicate_rng(config.seed, &tag, r as u64);
                let centers: Vec<f64> = (0..n * d).map(|_| law.sample(&mut rng)).collect();
                let est = idealized_log_predictive(&model, y, &centers, d)?;
                Ok((est - log_truth).exp_m1().powi(2))
            })?;
            let size = sq.len() / batches;
            for b in sq.chunks_exact(size).take(batches) {
                xs.push(d as f64);
                ys.push(mean(b).ln());
            }
            let mut rng = replicate_rng(config.seed, &tag, u64::MAX);
            let emp = mean(&sq);
            let (lo, hi) = bootstrap_ci(&sq, mean, config.bootstrap_resamples, 0.95, &mut rng)?;
            rows.push((d, sq.len(), formula, emp, lo.min(emp), hi.max(emp)));
        }
        let fit = if ys.iter().all(|v| v.is_finite()) && config.dims.len() >= 2 {
            Some(linear_regression(&xs, &ys)?)
        } else {
            None
        };
        for (d, reps, formula, emp, lo, hi) in rows {
            let row: Vec<Cell> = vec![
                d.into(),
                n.into(),
                reps.into(),
                formula.into(),
                emp.into(),
                lo.into(),
                hi.into(),
                fit.as_ref().map_or(f64::NAN, |f| f.slope).into(),
                fit.as_ref().map_or(f64::NAN, |f| f.slope_se).into(),
                fit.as_ref().map_or(f64::NAN, |f| f.p_positive).into(),
                formula_slope.into(),
            ];
            out.push(row);
        }
    }
    Ok(out)
}
