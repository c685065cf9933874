use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdsmc::harness::{run_experiment, Experiment, ExperimentConfig};
use hdsmc::Error;

#[derive(Parser)]
#[command(version, about = "Run an SMC stability experiment and write its CSV")]
struct Cli {
    #[command(subcommand)]
    experiment: Command,
    /// `key = value` config file; unset keys take the experiment defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    NcLimit,
    Table1,
    Table2,
    EssLimit,
    Chaos,
    Abc,
    MarginalCollapse,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::NcLimit => Experiment::NcLimit,
            Command::Table1 => Experiment::Table1,
            Command::Table2 => Experiment::Table2,
            Command::EssLimit => Experiment::EssLimit,
            Command::Chaos => Experiment::Chaos,
            Command::Abc => Experiment::Abc,
            Command::MarginalCollapse => Experiment::MarginalCollapse,
        }
    }
}

fn load(cli: &Cli) -> hdsmc::Result<ExperimentConfig> {
    let experiment = Experiment::from(cli.experiment);
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut config = ExperimentConfig::parse(experiment, &text)?;
    if config.experiment != experiment {
        return Err(Error::Config(format!(
            "config file is for '{}', not '{experiment}'",
            config.experiment
        )));
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(r) = cli.replicates {
        config.replicates = r;
    }
    if cli.out.is_some() {
        config.output.clone_from(&cli.out);
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> hdsmc::Result<ExitCode> {
    let config = load(cli)?;
    let output = run_experiment(&config)?;
    match &config.output {
        Some(p) => output.write_csv(BufWriter::new(File::create(p)?), &config.hash(), config.seed)?,
        None => output.write_csv(io::stdout().lock(), &config.hash(), config.seed)?,
    }
    if output.degenerate_fraction() > 0.5 {
        eprintln!(
            "degenerate replicates: {} of {}",
            output.degenerate, output.attempted
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
