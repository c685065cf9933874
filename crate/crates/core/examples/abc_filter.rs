//! ABC particle filter on a linear Gaussian model against the Kalman filter; the simulated
//! observations are written to and read back from a `time,y` CSV file.

use hdsmc::filtering::{abc_filter, kalman_filter, simulate_ssm, AbcResampling, LinearGaussianSsm};
use hdsmc::harness::{read_observations, write_observations};
use hdsmc::rng::stream;

fn main() -> hdsmc::Result<()> {
    let (d, horizon, n, epsilon) = (10, 50, 1000, 5.0);
    let model = LinearGaussianSsm::new(d)?;
    let seed = 5;
    let record = simulate_ssm(&model, horizon, &mut stream(seed, &[]));

    let path = std::env::temp_dir().join("hdsmc_observations.csv");
    write_observations(std::fs::File::create(&path)?, &record.observations, seed)?;
    let (obs, _) = read_observations(std::fs::File::open(&path)?)?;

    let kf = kalman_filter(&model, &obs)?;
    let est = abc_filter(&model, &obs, epsilon, n, AbcResampling::EssThreshold(n as f64 / 2.0), &mut stream(seed, &[1]))?;
    for k in (0..horizon).step_by(10) {
        println!(
            "t {:3}: kalman {:7.3}, abc {:7.3}, ess {:6.1}",
            k + 1,
            kf.means[k][0],
            est.means[k][0],
            est.ess[k]
        );
    }
    if let Some(t) = est.degenerate_at {
        println!("all weights vanished at time {t}");
    }
    Ok(())
}
