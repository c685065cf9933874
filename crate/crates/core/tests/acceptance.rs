//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs at the stated scales, so it takes several minutes in release-optimized test builds.
//! The exit status is non-zero on failure only when `HDSMC_ACCEPTANCE_STRICT` is set; the
//! PASS/FAIL lines are the record either way.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use hdsmc::filtering::{kalman_filter, simulate_ssm, LinearGaussianSsm};
use hdsmc::harness::{run_experiment, Cell, Experiment, ExperimentConfig, ExperimentOutput};
use hdsmc::kernels::KernelSpec;
use hdsmc::model::{AnnealingSchedule, GaussianPotential, MoveStats, Mover, ProductTarget, TemperedTarget};
use hdsmc::rng::{stream, StreamRng};
use hdsmc::smc::{
    ess, final_resample_estimate, multinomial_resample, run_sampler, Ensemble, ResampleEvent, ResamplingPolicy,
};
use hdsmc::stats::mean;
use hdsmc::theory::{nc_limit_no_resampling, nc_limit_with_resampling};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(experiment: Experiment, overrides: &str) -> ExperimentOutput {
    let config = ExperimentConfig::parse(experiment, overrides).expect("config");
    run_experiment(&config).expect("experiment")
}

fn one(out: &ExperimentOutput, column: &str) -> f64 {
    out.values(column, |_| true)[0]
}

fn kind(k: &'static str) -> impl Fn(&[Cell]) -> bool {
    move |r: &[Cell]| r[0] == Cell::from(k)
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

/// Relative L2 error without resampling.
fn c1_nc_limit() -> Outcome {
    let out = run(Experiment::NcLimit, "");
    let target = (0.25f64.exp() - 1.0) / 100.0;
    let v2 = one(&out, "v2");
    let limit = one(&out, "limit");
    outcome(
        within(v2, target, 0.15) && (limit - target).abs() < 1e-15,
        format!("V2 = {v2:.6}, limit = {limit:.7}, target {target:.7} +/- 15%"),
    )
}

/// Relative L2 error with one deterministic resampling.
fn c2_nc_limit_resampled() -> Outcome {
    let out = run(Experiment::NcLimit, "resampling = deterministic\nresample_at = 0.3333333333333333");
    let target = nc_limit_with_resampling(&[0.125, 0.125], 100).unwrap();
    let v2 = one(&out, "v2");
    let single = nc_limit_with_resampling(&[0.25], 100).unwrap();
    let plain = nc_limit_no_resampling(0.25, 100).unwrap();
    let identity = (single - plain).abs() <= 4.0 * f64::EPSILON * plain;
    outcome(
        within(v2, target, 0.15) && identity,
        format!("V2 = {v2:.6}, target {target:.7} +/- 15%; single block {single:e} vs {plain:e}"),
    )
}

/// Unbiased normalizing constant under both policies.
fn c3_unbiased() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, text) in [("never", ""), ("ess", "resampling = ess")] {
        let out = run(Experiment::NcLimit, text);
        let (m, lo, hi) = (one(&out, "mean_ratio"), one(&out, "mean_ratio_lo99"), one(&out, "mean_ratio_hi99"));
        pass &= lo <= 1.0 && 1.0 <= hi;
        detail.push(format!("{label}: mean Z/c_d = {m:.4} [{lo:.4}, {hi:.4}]"));
    }
    outcome(pass, detail.join("; "))
}

/// Variance ratio of the two annealing schemes.
fn c4_table1() -> Outcome {
    let out = run(Experiment::Table1, "");
    let r = out.values("ratio", |_| true);
    outcome(
        r[0] > 1.5 && r[1] > r[0],
        format!("ratio d=10 {:.3} (need > 1.5), d=25 {:.3} (need > d=10)", r[0], r[1]),
    )
}

/// Relative MSE on the Bayesian linear model.
fn c5_table2() -> Outcome {
    let out = run(Experiment::Table2, "");
    let get = |m: &'static str| out.values("relative", move |r| r[2] == Cell::from(m))[0];
    let (d1, d5, d10, dpt) = (get("annealed-1d"), get("annealed-5d"), get("annealed-10d"), get("datapoint"));
    outcome(
        (2.0..=9.0).contains(&d1) && d10 <= d1 && dpt > d10,
        format!("steps d {d1:.3} (need [2, 9]), 5d {d5:.3}, 10d {d10:.3} (need <= d), data-point {dpt:.3} (need > 10d)"),
    )
}

/// ESS against its limit law.
fn c6_ess_limit() -> Outcome {
    let out = run(Experiment::EssLimit, "");
    let ks = one(&out, "ks");
    outcome(
        ks < 0.05,
        format!(
            "KS = {ks:.4} (need < 0.05); mean ESS {:.2} vs limit {:.2}",
            one(&out, "mean_ess"),
            one(&out, "limit_mean_ess")
        ),
    )
}

/// Propagation of chaos with an exact-kernel control.
fn c7_chaos() -> Outcome {
    let out = run(Experiment::Chaos, "");
    let main = |r: &[Cell]| r[1] == Cell::from("rwm");
    let ctrl = |r: &[Cell]| r[1] == Cell::from("exact");
    let summ = |k: &dyn Fn(&[Cell]) -> bool, col| out.values(col, |r| r[0] == Cell::from("summary") && k(r));
    let trend = |col| out.values(col, |r| r[0] == Cell::from("trend") && main(r));
    let (dep, ks) = (summ(&main, "dependence"), summ(&main, "marginal_ks"));
    let (pd, pk) = (trend("p_dependence"), trend("p_ks"));
    let (cdep, cks) = (summ(&ctrl, "dependence"), summ(&ctrl, "marginal_ks"));
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let pass = decreasing(&dep)
        && decreasing(&ks)
        && pd.iter().chain(&pk).all(|&p| p < 0.05)
        && cdep.iter().all(|&v| v < 0.05)
        && cks.iter().all(|&v| v < 0.03);
    let f = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    let g = |v: &[f64]| v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" ");
    outcome(
        pass,
        format!(
            "rwm dependence [{}] p [{}], KS [{}] p [{}]; exact dependence [{}] KS [{}]",
            f(&dep),
            g(&pd),
            f(&ks),
            g(&pk),
            f(&cdep),
            f(&cks)
        ),
    )
}

/// MSE bound of the final-resample estimate of the first coordinate.
fn c8_mse_bound() -> Outcome {
    let (d, phi0, reps) = (128, 0.5, 1000);
    let target = ProductTarget::new(GaussianPotential, d).unwrap();
    let schedule = AnnealingSchedule::linear(phi0, d).unwrap();
    let sigma2 = 0.25f64;
    let mut pass = true;
    let mut detail = Vec::new();
    for n in [50, 200] {
        let sq: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(8, &[n as u64, r as u64]);
                let rep = run_sampler(&target, &schedule, &KernelSpec::exact(), &ResamplingPolicy::Never, n, &mut rng).unwrap();
                final_resample_estimate(&rep, |x| x, 0, &mut rng).unwrap().powi(2)
            })
            .collect();
        let mse = mean(&sq);
        let bound = 1.0 / n as f64 * (1.0 + sigma2.exp()) * 1.5;
        pass &= mse <= bound;
        detail.push(format!("N={n}: MSE {mse:.5} <= {bound:.5}"));
    }
    outcome(pass, detail.join("; "))
}

/// Collapse of the marginal algorithm's predictive estimate.
fn c9_marginal_collapse() -> Outcome {
    let out = run(Experiment::MarginalCollapse, "");
    let (f, lo, hi) = (
        out.values("formula", |_| true),
        out.values("empirical_lo", |_| true),
        out.values("empirical_hi", |_| true),
    );
    let covered = f.iter().zip(lo.iter().zip(&hi)).all(|(f, (l, h))| l <= f && f <= h);
    let (slope, p) = (one(&out, "log_slope"), one(&out, "slope_p"));
    outcome(
        covered && slope > 0.0 && p < 0.01,
        format!(
            "formula inside CI at every d: {covered}; slope {slope:.4} (formula {:.4}), p = {p:.1e}",
            one(&out, "formula_log_slope")
        ),
    )
}

/// ABC filter error in d and Monte Carlo error in N.
fn c10_abc() -> Outcome {
    let out = run(Experiment::Abc, "");
    let avg = out.values("value", kind("time_avg_error"));
    let mc = out.values("value", kind("mc_spread_avg"));
    let pass = avg[1] > avg[0] && mc.windows(2).all(|w| w[1] < w[0]);
    outcome(
        pass,
        format!(
            "time-averaged error d=10 {:.3}, d=40 {:.3}; MC spread N=250,1000,4000: {:.3} {:.3} {:.3}; degenerate {}",
            avg[0], avg[1], mc[0], mc[1], mc[2], out.degenerate
        ),
    )
}

struct Shift;
struct ShiftMover;

impl Mover for ShiftMover {
    fn apply(&self, x: &mut [f64], _: &mut StreamRng) -> hdsmc::Result<MoveStats> {
        x.iter_mut().for_each(|v| *v += 1.0);
        Ok(MoveStats { proposed: 1, accepted: 1 })
    }
}

impl TemperedTarget for Shift {
    type Mover<'a> = ShiftMover;
    fn dim(&self) -> usize {
        1
    }
    fn potential(&self, x: &[f64]) -> f64 {
        x[0]
    }
    fn sample_initial(&self, _: f64, _: &mut StreamRng, out: &mut [f64]) -> hdsmc::Result<()> {
        out[0] = 0.0;
        Ok(())
    }
    fn mover(&self, _: f64, _: &KernelSpec) -> hdsmc::Result<ShiftMover> {
        Ok(ShiftMover)
    }
}

/// Engine micro-checks.
fn c11_engine() -> Outcome {
    let start = Instant::now();
    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };

    let lw = [1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()];
    check("ess 18/7", (ess(&lw).unwrap() - 18.0 / 7.0).abs() < 1e-14);
    check("ess uniform", ess(&[0.7; 5]).unwrap() == 5.0);

    let mut ens = Ensemble::from_positions(vec![1.0, 2.0, 3.0, 4.0], 4, 1).unwrap();
    ens.log_weights_mut()
        .copy_from_slice(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
    let anc = multinomial_resample(&mut ens, 2, &mut stream(1, &[])).unwrap();
    check("point mass ancestors", anc == vec![1; 4]);
    check("point mass positions", ens.positions() == [2.0; 4]);
    check("point mass weights", ens.log_weights() == [0.0; 4]);
    check("point mass event", ens.resample_events() == [ResampleEvent { step: 2, ess: 1.0 }]);

    // positions 0, 1, 2, 3 before steps 1..4; each step adds 0.125 * position
    let sched = AnnealingSchedule::linear(0.5, 4).unwrap();
    let rep = run_sampler(&Shift, &sched, &KernelSpec::exact(), &ResamplingPolicy::Never, 3, &mut stream(0, &[])).unwrap();
    check("pre-move weights", rep.ensemble.log_weights().iter().all(|&w| (w - 0.75).abs() < 1e-15));
    check("post-move positions", rep.ensemble.positions() == [4.0; 3]);

    for s in [
        AnnealingSchedule::linear(0.1, 7).unwrap(),
        AnnealingSchedule::exponential(0.1, 5.0, 7).unwrap(),
        AnnealingSchedule::exponential(0.0, 5.0, 50).unwrap(),
    ] {
        check("schedule start", s.phi(0) == s.phi0());
        check("schedule end", s.phi(s.steps()) == 1.0);
        check("schedule monotone", (1..=s.steps()).all(|n| s.phi(n) > s.phi(n - 1)));
    }

    let model = LinearGaussianSsm::with_noise(3, 0.7, 1.3).unwrap();
    let rec = simulate_ssm(&model, 6, &mut stream(3, &[]));
    let kf = kalman_filter(&model, &rec.observations).unwrap();
    let (d, q, r) = (3, 0.7, 1.3);
    for k in 1..=6 {
        let cyy = DMatrix::from_fn(k, k, |s, t| d as f64 * q * (s.min(t) + 1) as f64 + if s == t { r } else { 0.0 });
        let cxy = DMatrix::from_fn(d, k, |_, t| q * (t + 1) as f64);
        let chol = cyy.cholesky().unwrap();
        let mean = &cxy * chol.solve(&DVector::from_column_slice(&rec.observations[..k]));
        let cov = DMatrix::identity(d, d) * (q * k as f64) - &cxy * chol.solve(&cxy.transpose());
        check("kalman mean", (&kf.means[k - 1] - mean).amax() < 1e-8);
        check("kalman covariance", (&kf.covariances[k - 1] - cov).amax() < 1e-8);
    }

    let secs = start.elapsed().as_secs_f64();
    check("under 10 s", secs < 10.0);
    let pass = failed.is_empty();
    outcome(
        pass,
        if pass {
            format!("all checks passed in {secs:.2} s")
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("relative L2 error limit, no resampling", c1_nc_limit),
        ("relative L2 error limit, one resampling", c2_nc_limit_resampled),
        ("unbiased normalizing constant", c3_unbiased),
        ("annealing scheme variance ratio", c4_table1),
        ("linear model relative MSE", c5_table2),
        ("ESS limit law", c6_ess_limit),
        ("propagation of chaos", c7_chaos),
        ("final-resample MSE bound", c8_mse_bound),
        ("marginal algorithm collapse", c9_marginal_collapse),
        ("ABC filter", c10_abc),
        ("engine micro-suite", c11_engine),
    ];
    let only: Option<Vec<usize>> = std::env::var("HDSMC_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failures += 1;
        }
        println!(
            "criterion {id:2} {verdict} [{name}] {} ({:.1} s)",
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failures} failing");
    if failures > 0 && std::env::var_os("HDSMC_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
