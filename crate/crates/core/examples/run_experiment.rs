//! Run a harness experiment from a config string and print its CSV.

use hdsmc::harness::{run_experiment, Experiment, ExperimentConfig};

fn main() -> hdsmc::Result<()> {
    let config = ExperimentConfig::parse(Experiment::NcLimit, "d = 32, 64\nn = 50\nreplicates = 500\nseed = 3")?;
    let output = run_experiment(&config)?;
    output.write_csv(std::io::stdout().lock(), &config.hash(), config.seed)
}
