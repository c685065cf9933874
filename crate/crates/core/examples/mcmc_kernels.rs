//! Random-walk Metropolis against exact sampling on the same annealing path: acceptance rate,
//! terminal ESS and the single-particle log-weight variance each kernel induces.

use hdsmc::kernels::{annealing_rwm_sd, KernelSpec};
use hdsmc::model::{AnnealingSchedule, GaussianPotential, ProductTarget};
use hdsmc::rng::stream;
use hdsmc::smc::{run_sampler, ResamplingPolicy};
use hdsmc::theory::empirical_sigma2;

fn main() -> hdsmc::Result<()> {
    let d = 25;
    let phi0 = 1.0 / d as f64;
    let target = ProductTarget::new(GaussianPotential, d)?;
    let schedule = AnnealingSchedule::linear(phi0, d)?;
    let kernels = [
        ("exact", KernelSpec::exact()),
        ("rwm", KernelSpec::rwm(annealing_rwm_sd(phi0)?)?),
        ("rwm x5", KernelSpec::rwm(annealing_rwm_sd(phi0)?)?.with_sweeps(5)?),
    ];
    for (name, kernel) in kernels {
        let mut rng = stream(3, &[]);
        let rep = run_sampler(&target, &schedule, &kernel, &ResamplingPolicy::Never, 500, &mut rng)?;
        let s2 = empirical_sigma2(&target, &kernel, &schedule, 2000, &mut rng)?;
        println!(
            "{name:>7}: acceptance {:.3}, terminal ESS {:6.1}, sigma^2 {:.3} [{:.3}, {:.3}]",
            rep.moves.rate(),
            rep.terminal_ess(),
            s2.value,
            s2.lo,
            s2.hi
        );
    }
    Ok(())
}
