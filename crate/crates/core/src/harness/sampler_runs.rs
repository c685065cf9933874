use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::filtering::run_blm_datapoint_tempering;
use crate::harness::config::{ExperimentConfig, KernelChoice, ResamplingChoice, ScheduleConfig, ScheduleShape};
use crate::harness::report::{ExperimentOutput, ReplicateSummary};
use crate::harness::{collect_replicates, replicate_rng, Tag};
use crate::kernels::KernelKind;
use crate::model::{blm_posterior, simulate_linear_model, GaussianPotential, ProductTarget, QuadraticTarget};
use crate::smc::{final_resample_estimate, run_sampler, run_sampler_until, ResamplingPolicy, SamplerReport};
use crate::stats::{bootstrap_ci, ks_one_sample, ks_two_sample, mann_whitney_greater, mean, sample_variance};
use crate::theory::{
    empirical_sigma2, ess_limit_sample, gaussian_exact_kernel_v2, gaussian_log_nc_between, gaussian_log_nc_ratio,
    nc_limit_for_path, nc_limit_no_resampling, sigma2_exact_kernel, VarianceFn, VariancePath,
};

const Z99: f64 = 2.5758293035489004;

/// Relative L2 error of the normalizing-constant estimate for `d` standard normal coordinates,
/// next to its large-`d` limit and, for exact kernels without resampling, the finite-`d` value.
pub fn exp_nc_limit(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(vec![
        "d",
        "n",
        "replicates",
        "sigma2",
        "v2",
        "v2_lo",
        "v2_hi",
        "limit",
        "finite_d",
        "mean_ratio",
        "mean_ratio_lo99",
        "mean_ratio_hi99",
        "mean_resamplings",
    ]);
    for &d in &config.dims {
        let phi0 = config.phi0.at(d);
        let schedule = config.schedule.build(phi0, d)?;
        let steps = schedule.steps();
        let kernel = config.kernel.build(phi0)?;
        let target = ProductTarget::new(GaussianPotential, d)?;
        let truth = gaussian_log_nc_ratio(d, phi0)?;
        let exact = kernel.kind == KernelKind::Exact;
        let path = VariancePath::new(schedule.clone(), VarianceFn::Gaussian);
        for &n in &config.particles {
            let policy = config.resampling.build(n, steps)?;
            let tag = [Tag::NcLimit as u64, d as u64, n as u64];
            let mut aux = replicate_rng(config.seed, &tag, u64::MAX);
            let (sigma2, limit) = match (&config.resampling.choice, exact) {
                (ResamplingChoice::Never, true) => {
                    let s = sigma2_exact_kernel(&path, 0.0, 1.0)?;
                    (s, nc_limit_no_resampling(s, n)?)
                }
                (ResamplingChoice::Deterministic { .. }, true) => {
                    let b: Vec<f64> = config
                        .resampling
                        .deterministic_steps(steps)
                        .iter()
                        .map(|&s| s as f64 / steps as f64)
                        .collect();
                    let p = path.clone().with_boundaries(b)?;
                    (sigma2_exact_kernel(&p, 0.0, 1.0)?, nc_limit_for_path(&p, n)?)
                }
                (ResamplingChoice::Never, false) => {
                    let reps = config.extra::<usize>("sigma2_replicates")?;
                    let s = empirical_sigma2(&target, &kernel, &schedule, reps, &mut aux)?.value;
                    (s, nc_limit_no_resampling(s, n)?)
                }
                _ => (f64::NAN, f64::NAN),
            };
            let finite_d = if exact && policy == ResamplingPolicy::Never {
                gaussian_exact_kernel_v2(&schedule, d, n)?
            } else {
                f64::NAN
            };
            let runs = collect_replicates(&mut out, config.replicates, |r| {
                let mut rng = replicate_rng(config.seed, &tag, r as u64);
                let rep = run_sampler(&target, &schedule, &kernel, &policy, n, &mut rng)?;
                Ok(((rep.log_nc - truth).exp(), rep.ensemble.resample_events().len() as f64))
            })?;
            let ratios: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let events = mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
            let s = ReplicateSummary::new(ratios, Some(1.0), config.bootstrap_resamples, 0.95, &mut aux)?;
            let half = Z99 * (s.variance / s.values.len() as f64).sqrt();
            let (lo, hi) = s.rel_l2_ci.expect("truth given");
            out.push(vec![
                d.into(),
                n.into(),
                s.values.len().into(),
                sigma2.into(),
                s.rel_l2.expect("truth given").into(),
                lo.into(),
                hi.into(),
                limit.into(),
                finite_d.into(),
                s.mean.into(),
                (s.mean - half).into(),
                (s.mean + half).into(),
                events.into(),
            ]);
        }
    }
    Ok(out)
}

/// `sum_k log-estimate_k / log-truth_k` over the non-empty blocks of a Gaussian-family run.
fn block_log_ratio_statistic(report: &SamplerReport, schedule_phi: impl Fn(usize) -> f64, d: usize) -> Result<f64> {
    let mut bounds = vec![0];
    bounds.extend(report.ensemble.resample_events().iter().map(|e| e.step));
    bounds.push(report.last_step);
    let mut total = 0.0;
    for (k, w) in bounds.windows(2).enumerate() {
        if w[1] == w[0] {
            continue;
        }
        let truth = gaussian_log_nc_between(d, schedule_phi(w[0]), schedule_phi(w[1]))?;
        total += report.block_log_means[k] / truth;
    }
    Ok(total)
}

/// Variance of the block log-ratio statistic under two schedules and their ratio.
pub fn exp_table1(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(vec![
        "d",
        "n",
        "replicates",
        "var_a",
        "var_b",
        "ratio",
        "ratio_lo",
        "ratio_hi",
        "sigma2_a",
        "sigma2_b",
        "mean_resamplings_a",
        "mean_resamplings_b",
    ]);
    let arm_b = ScheduleConfig {
        shape: match config.extra::<String>("schedule_b")?.as_str() {
            "linear" => ScheduleShape::Linear,
            "exponential" => ScheduleShape::Exponential {
                theta: config.extra("theta_b")?,
            },
            other => return Err(Error::Config(format!("unknown schedule_b '{other}'"))),
        },
        steps_per_dim: config.schedule.steps_per_dim,
    };
    for &d in &config.dims {
        let phi0 = config.phi0.at(d);
        let kernel = config.kernel.build(phi0)?;
        let target = ProductTarget::new(GaussianPotential, d)?;
        for &n in &config.particles {
            let mut arms = Vec::new();
            for (a, sc) in [config.schedule, arm_b].iter().enumerate() {
                let schedule = sc.build(phi0, d)?;
                let policy = config.resampling.build(n, schedule.steps())?;
                let tag = [Tag::Table1 as u64, d as u64, n as u64, a as u64];
                let runs = collect_replicates(&mut out, config.replicates, |r| {
                    let mut rng = replicate_rng(config.seed, &tag, r as u64);
                    let rep = run_sampler(&target, &schedule, &kernel, &policy, n, &mut rng)?;
                    let stat = block_log_ratio_statistic(&rep, |k| schedule.phi(k), d)?;
                    Ok((stat, rep.ensemble.resample_events().len() as f64))
                })?;
                let sigma2 = sigma2_exact_kernel(&VariancePath::new(schedule.clone(), VarianceFn::Gaussian), 0.0, 1.0)?;
                arms.push((runs, sigma2));
            }
            let stats_a: Vec<f64> = arms[0].0.iter().map(|r| r.0).collect();
            let stats_b: Vec<f64> = arms[1].0.iter().map(|r| r.0).collect();
            let (va, vb) = (sample_variance(&stats_a), sample_variance(&stats_b));
            let ratio = va / vb;
            let mut rng = replicate_rng(config.seed, &[Tag::Table1 as u64, d as u64, n as u64], u64::MAX);
            let (lo, hi) = bootstrap_ratio(&stats_a, &stats_b, config.bootstrap_resamples, &mut rng);
            out.push(vec![
                d.into(),
                n.into(),
                stats_a.len().into(),
                va.into(),
                vb.into(),
                ratio.into(),
                lo.min(ratio).into(),
                hi.max(ratio).into(),
                arms[0].1.into(),
                arms[1].1.into(),
                mean(&arms[0].0.iter().map(|r| r.1).collect::<Vec<_>>()).into(),
                mean(&arms[1].0.iter().map(|r| r.1).collect::<Vec<_>>()).into(),
            ]);
        }
    }
    Ok(out)
}

/// 95% percentile-bootstrap interval of `var(a) / var(b)`, resampling each arm.
fn bootstrap_ratio<R: Rng + ?Sized>(a: &[f64], b: &[f64], resamples: usize, rng: &mut R) -> (f64, f64) {
    let draw = |v: &[f64], rng: &mut R| -> f64 {
        let s: Vec<f64> = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect();
        sample_variance(&s)
    };
    let mut ratios: Vec<f64> = (0..resamples).map(|_| draw(a, rng) / draw(b, rng)).collect();
    ratios.sort_by(f64::total_cmp);
    (
        crate::stats::quantile_sorted(&ratios, 0.025),
        crate::stats::quantile_sorted(&ratios, 0.975),
    )
}

/// Mean square error of the final-resample estimate of `E[beta_1 | Y]` relative to iid sampling.
pub fn exp_table2(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(vec![
        "d",
        "n",
        "method",
        "steps",
        "replicates",
        "mse",
        "iid_mse",
        "relative",
        "relative_lo",
        "relative_hi",
    ]);
    let p: usize = config.extra("data_points")?;
    let design_sd: f64 = config.extra("design_sd")?;
    let multipliers: Vec<usize> = config.extra_list("step_multipliers")?;
    let dpt: bool = config.extra("datapoint_tempering")?;
    let dpt_factor: usize = config.extra("datapoint_steps_factor")?;
    let phi0 = config.phi0.at(1);
    if phi0 != 0.0 {
        return Err(Error::Config("the linear-model runs start from the prior: phi0 must be 0".into()));
    }
    let kernel = config.kernel.build(phi0)?;
    for &d in &config.dims {
        let mut data_rng = replicate_rng(config.seed, &[Tag::Table2 as u64, d as u64], u64::MAX);
        let (x, y, _) = simulate_linear_model(p, d, design_sd, &mut data_rng);
        let post = blm_posterior(&x, &y)?;
        let (m1, v1) = (post.mean()[0], post.covariance()[(0, 0)]);
        let target = QuadraticTarget::blm_annealing(&x, &y)?;
        for &n in &config.particles {
            let iid = v1 / n as f64;
            let mut arms: Vec<(String, usize, Vec<f64>)> = Vec::new();
            for (a, &mult) in multipliers.iter().enumerate() {
                let schedule = config.schedule.build_with_steps(phi0, mult * d)?;
                let policy = config.resampling.build(n, schedule.steps())?;
                let tag = [Tag::Table2 as u64, d as u64, n as u64, a as u64];
                let sq = collect_replicates(&mut out, config.replicates, |r| {
                    let mut rng = replicate_rng(config.seed, &tag, r as u64);
                    let rep = run_sampler(&target, &schedule, &kernel, &policy, n, &mut rng)?;
                    Ok((final_resample_estimate(&rep, |v| v, 0, &mut rng)? - m1).powi(2))
                })?;
                arms.push((format!("annealed-{mult}d"), schedule.steps(), sq));
            }
            if dpt {
                let per_datum = (dpt_factor * d / p).max(1);
                let schedule = crate::model::AnnealingSchedule::linear(0.0, per_datum)?;
                let policy = config.resampling.build(n, per_datum)?;
                let tag = [Tag::Table2 as u64, d as u64, n as u64, 1000];
                let sq = collect_replicates(&mut out, config.replicates, |r| {
                    let mut rng = replicate_rng(config.seed, &tag, r as u64);
                    let rep = run_blm_datapoint_tempering(&x, &y, &schedule, &kernel, &policy, n, &mut rng)?;
                    Ok((final_resample_estimate(&rep, |v| v, 0, &mut rng)? - m1).powi(2))
                })?;
                arms.push(("datapoint".into(), per_datum * p, sq));
            }
            let mut rng = replicate_rng(config.seed, &[Tag::Table2 as u64, d as u64, n as u64], u64::MAX - 1);
            for (label, steps, sq) in arms {
                let mse = mean(&sq);
                let (lo, hi) = bootstrap_ci(&sq, mean, config.bootstrap_resamples, 0.95, &mut rng)?;
                out.push(vec![
                    d.into(),
                    n.into(),
                    label.as_str().into(),
                    steps.into(),
                    sq.len().into(),
                    mse.into(),
                    iid.into(),
                    (mse / iid).into(),
                    (lo.min(mse) / iid).into(),
                    (hi.max(mse) / iid).into(),
                ]);
            }
        }
    }
    Ok(out)
}

/// Terminal ESS across replicates against draws from its large-`d` limit law.
pub fn exp_ess_limit(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(vec![
        "d",
        "n",
        "replicates",
        "sigma2",
        "mean_ess",
        "limit_mean_ess",
        "ks",
        "ks_p",
    ]);
    if config.kernel.choice != KernelChoice::Exact {
        return Err(Error::Config("the ESS limit law is checked with exact kernels".into()));
    }
    let draws: usize = config.extra("limit_draws")?;
    for &d in &config.dims {
        let phi0 = config.phi0.at(d);
        let schedule = config.schedule.build(phi0, d)?;
        let kernel = config.kernel.build(phi0)?;
        let target = ProductTarget::new(GaussianPotential, d)?;
        let sigma2 = sigma2_exact_kernel(&VariancePath::new(schedule.clone(), VarianceFn::Gaussian), 0.0, 1.0)?;
        for &n in &config.particles {
            let policy = config.resampling.build(n, schedule.steps())?;
            let tag = [Tag::EssLimit as u64, d as u64, n as u64];
            let ess = collect_replicates(&mut out, config.replicates, |r| {
                let mut rng = replicate_rng(config.seed, &tag, r as u64);
                Ok(run_sampler(&target, &schedule, &kernel, &policy, n, &mut rng)?.terminal_ess())
            })?;
            let mut rng = replicate_rng(config.seed, &tag, u64::MAX);
            let limit = (0..draws)
                .map(|_| ess_limit_sample(n, sigma2, &mut rng))
                .collect::<Result<Vec<f64>>>()?;
            let ks = ks_two_sample(&ess, &limit);
            out.push(vec![
                d.into(),
                n.into(),
                ess.len().into(),
                sigma2.into(),
                mean(&ess).into(),
                mean(&limit).into(),
                ks.statistic.into(),
                ks.p_value.into(),
            ]);
        }
    }
    Ok(out)
}

/// `|corr(tanh a, tanh b)|`.
fn tanh_dependence(a: &[f64], b: &[f64]) -> f64 {
    let ta: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
    let tb: Vec<f64> = b.iter().map(|v| v.tanh()).collect();
    let (ma, mb) = (mean(&ta), mean(&tb));
    let cov: f64 = ta.iter().zip(&tb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ta.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = tb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    (cov / (va * vb).sqrt()).abs()
}

/// Dependence between two particles' first coordinates and the single-particle marginal's KS
/// distance to the bridging law at a probe time, across replicates.
///
/// Rows of kind `summary` use every replicate, `batch` rows split them into equal batches, and
/// `trend` rows give one-sided Mann-Whitney p-values that the batch statistics at `d` exceed
/// those at the next dimension.
pub fn exp_chaos(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(vec![
        "kind",
        "kernel",
        "d",
        "d_next",
        "batch",
        "n",
        "probe_step",
        "dependence",
        "marginal_ks",
        "p_dependence",
        "p_ks",
    ]);
    let probe_at: f64 = config.extra("probe_at")?;
    let after_resampling: bool = config.extra("probe_after_resampling")?;
    let batches: usize = config.extra("batches")?;
    let control: bool = config.extra("exact_control")?;
    if !(probe_at > 0.0 && probe_at <= 1.0) || batches < 2 || config.replicates < 2 * batches {
        return Err(Error::Config("need probe_at in (0, 1], batches >= 2 and two replicates per batch".into()));
    }
    if !matches!(config.resampling.choice, ResamplingChoice::Deterministic { .. }) {
        return Err(Error::Config("the chaos probe needs deterministic resampling times".into()));
    }
    let mut kernels = vec![("main", config.kernel)];
    if control && config.kernel.choice != KernelChoice::Exact {
        let mut k = config.kernel;
        k.choice = KernelChoice::Exact;
        kernels.push(("exact", k));
    }
    let n = *config.particles.first().expect("validated");
    if n < 2 {
        return Err(Error::Config("the pairwise statistic needs n >= 2".into()));
    }
    for (ki, (label, kc)) in kernels.iter().enumerate() {
        let label = if *label == "main" { kernel_label(kc.choice) } else { label };
        let mut per_d: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
        for &d in &config.dims {
            let phi0 = config.phi0.at(d);
            let schedule = config.schedule.build(phi0, d)?;
            let steps = schedule.steps();
            let kernel = kc.build(phi0)?;
            let target = ProductTarget::new(GaussianPotential, d)?;
            let mut resample_steps = config.resampling.deterministic_steps(steps);
            let probe = if after_resampling {
                *resample_steps.first().expect("non-empty")
            } else {
                (probe_at * steps as f64).round() as usize
            };
            resample_steps.retain(|&s| s <= probe && s >= 1);
            if !after_resampling && (resample_steps.contains(&probe) || probe == 0) {
                return Err(Error::Config(format!(
                    "probe step {probe} must lie strictly between resampling steps at d = {d}"
                )));
            }
            let policy = if resample_steps.is_empty() {
                ResamplingPolicy::Never
            } else {
                ResamplingPolicy::Deterministic { steps: resample_steps }
            };
            let tag = [Tag::Chaos as u64, ki as u64, d as u64, n as u64];
            let pairs = collect_replicates(&mut out, config.replicates, |r| {
                let mut rng = replicate_rng(config.seed, &tag, r as u64);
                let rep = run_sampler_until(&target, &schedule, &kernel, &policy, n, probe, &mut rng)?;
                Ok((rep.ensemble.particle(0)[0], rep.ensemble.particle(1)[0]))
            })?;
            let law = Normal::new(0.0, (1.0 / schedule.phi(probe)).sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            out.push(vec![
                "summary".into(),
                label.into(),
                d.into(),
                0usize.into(),
                0usize.into(),
                n.into(),
                probe.into(),
                tanh_dependence(&a, &b).into(),
                ks_one_sample(&a, |x| law.cdf(x)).statistic.into(),
                f64::NAN.into(),
                f64::NAN.into(),
            ]);
            let size = a.len() / batches;
            let (mut deps, mut kss) = (Vec::new(), Vec::new());
            for k in 0..batches {
                let (sa, sb) = (&a[k * size..(k + 1) * size], &b[k * size..(k + 1) * size]);
                let (dep, ks) = (tanh_dependence(sa, sb), ks_one_sample(sa, |x| law.cdf(x)).statistic);
                out.push(vec![
                    "batch".into(),
                    label.into(),
                    d.into(),
                    0usize.into(),
                    (k + 1).into(),
                    n.into(),
                    probe.into(),
                    dep.into(),
                    ks.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                ]);
                deps.push(dep);
                kss.push(ks);
            }
            per_d.push((d, deps, kss));
        }
        for w in per_d.windows(2) {
            out.push(vec![
                "trend".into(),
                label.into(),
                w[0].0.into(),
                w[1].0.into(),
                0usize.into(),
                n.into(),
                0usize.into(),
                f64::NAN.into(),
                f64::NAN.into(),
                mann_whitney_greater(&w[0].1, &w[1].1)?.into(),
                mann_whitney_greater(&w[0].2, &w[1].2)?.into(),
            ]);
        }
    }
    Ok(out)
}

fn kernel_label(choice: KernelChoice) -> &'static str {
    match choice {
        KernelChoice::Exact => "exact",
        KernelChoice::Rwm => "rwm",
        KernelChoice::RwmGibbs => "rwm-gibbs",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Experiment;
    use crate::harness::report::Cell;

    fn cfg(e: Experiment, text: &str) -> ExperimentConfig {
        let c = ExperimentConfig::parse(e, text).unwrap();
        c.validate().unwrap();
        c
    }

    #[test]
    fn nc_limit_small_run() {
        let c = cfg(Experiment::NcLimit, "d = 16\nn = 20\nreplicates = 400");
        let out = exp_nc_limit(&c).unwrap();
        assert_eq!(out.rows.len(), 1);
        let v2 = out.values("v2", |_| true)[0];
        let finite = out.values("finite_d", |_| true)[0];
        let lo = out.values("v2_lo", |_| true)[0];
        let hi = out.values("v2_hi", |_| true)[0];
        assert!(lo <= v2 && v2 <= hi);
        assert!((v2 / finite - 1.0).abs() < 0.3, "{v2} vs {finite}");
    }

    #[test]
    fn nc_limit_scales_with_n() {
        let c = cfg(Experiment::NcLimit, "d = 32\nn = 25, 100\nreplicates = 1500");
        let out = exp_nc_limit(&c).unwrap();
        let v2 = out.values("v2", |_| true);
        let ratio = v2[1] / v2[0];
        assert!((ratio - 0.25).abs() < 0.08, "{ratio}");
    }

    #[test]
    fn point_mass_ess_at_phi0_one() {
        let c = cfg(Experiment::EssLimit, "phi0 = 1\nd = 8\nn = 10\nreplicates = 20\nlimit_draws = 50");
        let out = exp_ess_limit(&c).unwrap();
        assert_eq!(out.values("sigma2", |_| true)[0], 0.0);
        assert_eq!(out.values("mean_ess", |_| true)[0], 10.0);
        assert_eq!(out.values("limit_mean_ess", |_| true)[0], 10.0);
        assert_eq!(out.values("ks", |_| true)[0], 0.0);
    }

    #[test]
    fn self_comparison_ratio_near_one() {
        let c = cfg(
            Experiment::Table1,
            "d = 10\nn = 200\nreplicates = 400\nschedule = exponential\nschedule_b = exponential",
        );
        let out = exp_table1(&c).unwrap();
        let ratio = out.values("ratio", |_| true)[0];
        let lo = out.values("ratio_lo", |_| true)[0];
        let hi = out.values("ratio_hi", |_| true)[0];
        assert!(lo <= ratio && ratio <= hi);
        assert!((0.7..1.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn probe_after_resampling_keeps_dependence() {
        let c = cfg(
            Experiment::Chaos,
            "d = 64\nn = 2\nreplicates = 400\nbatches = 2\nkernel = exact\nprobe_after_resampling = true",
        );
        let out = exp_chaos(&c).unwrap();
        let dep = out.values("dependence", |r| r[0] == Cell::from("summary"))[0];
        assert!(dep > 0.3, "{dep}");
    }

    #[test]
    fn block_statistic_sums_ratios() {
        let c = cfg(Experiment::Table1, "d = 4\nn = 50\nreplicates = 2");
        let target = ProductTarget::new(GaussianPotential, 4).unwrap();
        let sched = c.schedule.build(0.25, 4).unwrap();
        let rep = run_sampler(
            &target,
            &sched,
            &crate::kernels::KernelSpec::exact(),
            &ResamplingPolicy::Deterministic { steps: vec![2] },
            50,
            &mut replicate_rng(1, &[], 0),
        )
        .unwrap();
        let stat = block_log_ratio_statistic(&rep, |k| sched.phi(k), 4).unwrap();
        let t1 = gaussian_log_nc_between(4, sched.phi(0), sched.phi(2)).unwrap();
        let t2 = gaussian_log_nc_between(4, sched.phi(2), 1.0).unwrap();
        let want = rep.block_log_means[0] / t1 + rep.block_log_means[1] / t2;
        assert!((stat - want).abs() < 1e-12);
    }
}
