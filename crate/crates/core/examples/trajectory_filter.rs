//! Annealed SMC over whole trajectories of d independent random walks, against the
//! per-coordinate Kalman filter.

use hdsmc::filtering::{annealed_trajectory_filter, GaussianRandomWalkSsm};
use hdsmc::kernels::KernelSpec;
use hdsmc::model::AnnealingSchedule;
use hdsmc::rng::stream;

fn main() -> hdsmc::Result<()> {
    let (d, horizon, n) = (64, 5, 200);
    let model = GaussianRandomWalkSsm::new(d, 1.0, 1.0)?;
    let mut rng = stream(2, &[]);
    let (_, obs) = model.simulate(horizon, &mut rng);
    let kalman = model.coordinate_filter(&obs);
    let out = annealed_trajectory_filter(&model, &obs, &AnnealingSchedule::linear(0.0, d)?, &KernelSpec::exact(), n, &mut rng)?;
    for (k, (m, _)) in kalman.iter().enumerate() {
        println!(
            "t {}: kalman {m:7.4}, annealed {:7.4}, terminal ESS {:6.1} of {n}",
            k + 1,
            out.estimate.means[k][0],
            out.terminal_ess[k]
        );
    }
    Ok(())
}
