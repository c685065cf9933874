//! Experiment runner: configuration, replicate bookkeeping and CSV output.
//!
//! Every replicate draws from its own stream keyed by the master seed, the experiment, the
//! setting and the replicate index, so results do not depend on thread count or order.

mod config;
mod filter_runs;
mod report;
mod sampler_runs;

use rayon::prelude::*;

pub use config::{
    Experiment, ExperimentConfig, KernelChoice, KernelConfig, Phi0, ResamplingChoice, ResamplingConfig, ScheduleConfig,
    ScheduleShape,
};
pub use filter_runs::{exp_abc, exp_marginal_collapse};
pub use report::{read_observations, write_observations, Cell, ExperimentOutput, ReplicateSummary};
pub use sampler_runs::{exp_chaos, exp_ess_limit, exp_nc_limit, exp_table1, exp_table2};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

/// Stream tags per experiment.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Tag {
    NcLimit = 1,
    Table1 = 2,
    Table2 = 3,
    EssLimit = 4,
    Chaos = 5,
    Abc = 6,
    MarginalCollapse = 7,
}

/// Stream for replicate `r` of the setting identified by `tag`.
pub(crate) fn replicate_rng(seed: u64, tag: &[u64], r: u64) -> StreamRng {
    let mut path = tag.to_vec();
    path.push(r);
    stream(seed, &path)
}

/// Runs `replicates` calls of `f` in parallel. Degenerate replicates are counted on `out` and
/// dropped; any other error aborts.
pub(crate) fn collect_replicates<T, F>(out: &mut ExperimentOutput, replicates: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..replicates).into_par_iter().map(f).collect();
    out.attempted += replicates;
    let mut kept = Vec::with_capacity(replicates);
    for r in results {
        match r {
            Ok(v) => kept.push(v),
            Err(Error::Degeneracy { .. }) => out.degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(kept)
}

/// Validates `config` and runs its experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        Experiment::NcLimit => exp_nc_limit(config),
        Experiment::Table1 => exp_table1(config),
        Experiment::Table2 => exp_table2(config),
        Experiment::EssLimit => exp_ess_limit(config),
        Experiment::Chaos => exp_chaos(config),
        Experiment::Abc => exp_abc(config),
        Experiment::MarginalCollapse => exp_marginal_collapse(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_replicates_are_counted() {
        let mut out = ExperimentOutput::new(vec!["x"]);
        let kept = collect_replicates(&mut out, 10, |r| {
            if r % 3 == 0 {
                Err(Error::Degeneracy { step: r })
            } else {
                Ok(r)
            }
        })
        .unwrap();
        assert_eq!(kept, vec![1, 2, 4, 5, 7, 8]);
        assert_eq!((out.attempted, out.degenerate), (10, 4));
        assert!(collect_replicates(&mut out, 3, |_| Err::<(), _>(Error::Numerical("x".into()))).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        let c = ExperimentConfig::parse(Experiment::NcLimit, "d = 8\nn = 10\nreplicates = 50\nseed = 9").unwrap();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a, b);
    }
}
