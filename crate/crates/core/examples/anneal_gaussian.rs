//! Anneal from N(0, 1/phi0) to N(0, 1) in d dimensions and compare the normalizing-constant
//! estimate with its closed form and its large-d error limit.

use hdsmc::kernels::KernelSpec;
use hdsmc::model::{AnnealingSchedule, GaussianPotential, ProductTarget};
use hdsmc::rng::stream;
use hdsmc::smc::{run_sampler, ResamplingPolicy};
use hdsmc::theory::{gaussian_log_nc_ratio, nc_limit_no_resampling, sigma2_exact_kernel, VarianceFn, VariancePath};

fn main() -> hdsmc::Result<()> {
    let (d, n, phi0) = (128, 100, 0.5);
    let target = ProductTarget::new(GaussianPotential, d)?;
    let schedule = AnnealingSchedule::linear(phi0, d)?;
    let mut rng = stream(7, &[]);
    let report = run_sampler(&target, &schedule, &KernelSpec::exact(), &ResamplingPolicy::Never, n, &mut rng)?;

    let truth = gaussian_log_nc_ratio(d, phi0)?;
    let sigma2 = sigma2_exact_kernel(&VariancePath::new(schedule, VarianceFn::Gaussian), 0.0, 1.0)?;
    println!("log NC estimate {:.5}, truth {truth:.5}", report.log_nc);
    println!("terminal ESS {:.1} of {n}", report.terminal_ess());
    println!("sigma^2 {sigma2:.4}, limiting relative L2 error {:.6}", nc_limit_no_resampling(sigma2, n)?);
    Ok(())
}
