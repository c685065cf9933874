//! Posterior mean of the first coefficient of a Bayesian linear model, by annealing the whole
//! likelihood and by introducing one datum at a time.

use hdsmc::filtering::run_blm_datapoint_tempering;
use hdsmc::kernels::{KernelSpec, BLM_GIBBS_SD};
use hdsmc::model::{blm_posterior, simulate_linear_model, AnnealingSchedule, QuadraticTarget};
use hdsmc::rng::stream;
use hdsmc::smc::{final_resample_estimate, run_sampler, ResamplingPolicy};

fn main() -> hdsmc::Result<()> {
    let (p, d, n) = (20, 10, 1000);
    let mut rng = stream(11, &[]);
    let (x, y, _) = simulate_linear_model(p, d, 1.0, &mut rng);
    let post = blm_posterior(&x, &y)?;
    let kernel = KernelSpec::rwm_gibbs(BLM_GIBBS_SD)?;
    let policy = ResamplingPolicy::half_ess(n).with_final();

    let annealed = run_sampler(
        &QuadraticTarget::blm_annealing(&x, &y)?,
        &AnnealingSchedule::exponential(0.0, 5.0, 5 * d)?,
        &kernel,
        &policy,
        n,
        &mut rng,
    )?;
    let tempered = run_blm_datapoint_tempering(&x, &y, &AnnealingSchedule::linear(0.0, 3)?, &kernel, &policy, n, &mut rng)?;

    println!("posterior mean of beta_1: {:.4}", post.mean()[0]);
    println!("annealed estimate:        {:.4}", final_resample_estimate(&annealed, |v| v, 0, &mut rng)?);
    println!("data-point tempering:     {:.4}", final_resample_estimate(&tempered, |v| v, 0, &mut rng)?);
    println!("log evidence: annealed {:.3}, tempered {:.3}", annealed.log_nc, tempered.log_nc);
    Ok(())
}
