//! Large-d formulas: log-weight variance along a path, the relative error of the
//! normalizing-constant estimate with and without a mid-path resampling, and the ESS limit law.

use hdsmc::model::AnnealingSchedule;
use hdsmc::rng::stream;
use hdsmc::stats::mean;
use hdsmc::theory::{
    ess_limit_sample, nc_limit_for_path, nc_limit_no_resampling, sigma2_exact_kernel, VarianceFn, VariancePath,
};

fn main() -> hdsmc::Result<()> {
    let n = 100;
    for phi0 in [0.1, 0.5, 0.9] {
        let path = VariancePath::new(AnnealingSchedule::linear(phi0, 1)?, VarianceFn::Gaussian);
        let sigma2 = sigma2_exact_kernel(&path, 0.0, 1.0)?;
        let split = path.clone().with_boundaries(vec![0.5])?;
        let mut rng = stream(1, &[]);
        let ess: Vec<f64> = (0..10_000).map(|_| ess_limit_sample(n, sigma2, &mut rng)).collect::<Result<_, _>>()?;
        println!(
            "phi0 {phi0}: sigma^2 {sigma2:.4}, V2 limit {:.5}, with one resampling {:.5}, mean limiting ESS {:.1}",
            nc_limit_no_resampling(sigma2, n)?,
            nc_limit_for_path(&split, n)?,
            mean(&ess)
        );
    }
    Ok(())
}
