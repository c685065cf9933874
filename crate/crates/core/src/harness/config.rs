use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{annealing_rwm_sd, KernelKind, KernelSpec};
use crate::model::AnnealingSchedule;
use crate::smc::ResamplingPolicy;

/// The experiments the runner knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    NcLimit,
    Table1,
    Table2,
    EssLimit,
    Chaos,
    Abc,
    MarginalCollapse,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::NcLimit,
        Experiment::Table1,
        Experiment::Table2,
        Experiment::EssLimit,
        Experiment::Chaos,
        Experiment::Abc,
        Experiment::MarginalCollapse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::NcLimit => "nc-limit",
            Experiment::Table1 => "table1",
            Experiment::Table2 => "table2",
            Experiment::EssLimit => "ess-limit",
            Experiment::Chaos => "chaos",
            Experiment::Abc => "abc",
            Experiment::MarginalCollapse => "marginal-collapse",
        }
    }

    /// Experiment-specific keys with their defaults.
    fn extra_defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Experiment::NcLimit => &[("sigma2_replicates", "2000")],
            Experiment::Table1 => &[("schedule_b", "exponential"), ("theta_b", "5")],
            Experiment::Table2 => &[
                ("data_points", "50"),
                ("design_sd", "1"),
                ("step_multipliers", "1,5,10"),
                ("datapoint_tempering", "true"),
                ("datapoint_steps_factor", "10"),
            ],
            Experiment::EssLimit => &[("limit_draws", "20000")],
            Experiment::Chaos => &[
                ("probe_at", "0.5625"),
                ("probe_after_resampling", "false"),
                ("batches", "20"),
                ("exact_control", "true"),
            ],
            Experiment::Abc => &[
                ("epsilon", "5"),
                ("horizon", "200"),
                ("mc_particles", "250,1000,4000"),
                ("mc_dim", "10"),
                ("moment_power", "2"),
            ],
            Experiment::MarginalCollapse => &[
                ("toy_a", "0.9"),
                ("toy_b", "4"),
                ("observation", "1"),
                ("batches", "20"),
            ],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Initial inverse temperature, fixed or `1/d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phi0 {
    Fixed(f64),
    InverseDim,
}

impl Phi0 {
    pub fn at(self, d: usize) -> f64 {
        match self {
            Phi0::Fixed(v) => v,
            Phi0::InverseDim => 1.0 / d as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleShape {
    Linear,
    Exponential { theta: f64 },
}

/// Schedule shape and length as a multiple of `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub shape: ScheduleShape,
    pub steps_per_dim: f64,
}

impl ScheduleConfig {
    pub fn steps(&self, d: usize) -> usize {
        ((self.steps_per_dim * d as f64).round() as usize).max(1)
    }

    pub fn build(&self, phi0: f64, d: usize) -> Result<AnnealingSchedule> {
        self.build_with_steps(phi0, self.steps(d))
    }

    pub fn build_with_steps(&self, phi0: f64, steps: usize) -> Result<AnnealingSchedule> {
        match self.shape {
            ScheduleShape::Linear => AnnealingSchedule::linear(phi0, steps),
            ScheduleShape::Exponential { theta } => AnnealingSchedule::exponential(phi0, theta, steps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Exact,
    Rwm,
    RwmGibbs,
}

/// Kernel kind; a missing proposal sd means `sqrt(1 / (25 phi0))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub choice: KernelChoice,
    pub proposal_sd: Option<f64>,
    pub sweeps: usize,
}

impl KernelConfig {
    pub fn build(&self, phi0: f64) -> Result<KernelSpec> {
        let sd = || self.proposal_sd.map_or_else(|| annealing_rwm_sd(phi0), Ok);
        let kind = match self.choice {
            KernelChoice::Exact => KernelKind::Exact,
            KernelChoice::Rwm => KernelKind::Rwm { proposal_sd: sd()? },
            KernelChoice::RwmGibbs => KernelKind::RwmGibbs { proposal_sd: sd()? },
        };
        KernelSpec::new(kind, self.sweeps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResamplingChoice {
    Never,
    /// Resample when the ESS drops below `fraction * N`.
    Ess { fraction: f64 },
    /// Resample at the given fractions of the schedule.
    Deterministic { at: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResamplingConfig {
    pub choice: ResamplingChoice,
    pub final_resample: bool,
}

impl ResamplingConfig {
    /// Steps `round(u * steps)` for each deterministic fraction `u`.
    pub fn deterministic_steps(&self, steps: usize) -> Vec<usize> {
        match &self.choice {
            ResamplingChoice::Deterministic { at } => at.iter().map(|u| (u * steps as f64).round() as usize).collect(),
            _ => Vec::new(),
        }
    }

    pub fn build(&self, particles: usize, steps: usize) -> Result<ResamplingPolicy> {
        let base = match &self.choice {
            ResamplingChoice::Never => ResamplingPolicy::Never,
            ResamplingChoice::Ess { fraction } => ResamplingPolicy::EssThreshold {
                threshold: fraction * particles as f64,
            },
            ResamplingChoice::Deterministic { .. } => ResamplingPolicy::Deterministic {
                steps: self.deterministic_steps(steps),
            },
        };
        let policy = if self.final_resample { base.with_final() } else { base };
        policy.validate(particles, steps)?;
        Ok(policy)
    }
}

/// Resolved settings of one experiment run.
///
/// Files hold flat `key = value` lines with `#` comments; lists are comma separated.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dims: Vec<usize>,
    pub particles: Vec<usize>,
    pub replicates: usize,
    pub phi0: Phi0,
    pub schedule: ScheduleConfig,
    pub kernel: KernelConfig,
    pub resampling: ResamplingConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub bootstrap_resamples: usize,
    extras: BTreeMap<String, String>,
}

const COMMON_KEYS: [&str; 16] = [
    "experiment",
    "d",
    "n",
    "replicates",
    "phi0",
    "schedule",
    "theta",
    "steps_per_dim",
    "kernel",
    "proposal_sd",
    "sweeps",
    "resampling",
    "resample_at",
    "final_resample",
    "seed",
    "output",
];

impl ExperimentConfig {
    /// Desk-scale defaults of `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            dims: vec![128],
            particles: vec![100],
            replicates: 5000,
            phi0: Phi0::Fixed(0.5),
            schedule: ScheduleConfig {
                shape: ScheduleShape::Linear,
                steps_per_dim: 1.0,
            },
            kernel: KernelConfig {
                choice: KernelChoice::Exact,
                proposal_sd: None,
                sweeps: 1,
            },
            resampling: ResamplingConfig {
                choice: ResamplingChoice::Never,
                final_resample: false,
            },
            seed: 1,
            output: None,
            bootstrap_resamples: 1000,
            extras: experiment
                .extra_defaults()
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        };
        match experiment {
            Experiment::NcLimit => {}
            Experiment::Table1 => {
                c.dims = vec![10, 25];
                c.particles = vec![2000];
                c.replicates = 50;
                c.phi0 = Phi0::InverseDim;
                c.kernel.choice = KernelChoice::Rwm;
                c.resampling.choice = ResamplingChoice::Ess { fraction: 0.5 };
            }
            Experiment::Table2 => {
                c.dims = vec![50];
                c.particles = vec![1000];
                c.replicates = 100;
                c.phi0 = Phi0::Fixed(0.0);
                c.schedule.shape = ScheduleShape::Exponential { theta: 5.0 };
                c.kernel = KernelConfig {
                    choice: KernelChoice::RwmGibbs,
                    proposal_sd: Some(crate::kernels::BLM_GIBBS_SD),
                    sweeps: 1,
                };
                c.resampling = ResamplingConfig {
                    choice: ResamplingChoice::Ess { fraction: 0.5 },
                    final_resample: true,
                };
            }
            Experiment::EssLimit => {
                c.dims = vec![256];
                c.replicates = 2000;
            }
            Experiment::Chaos => {
                c.dims = vec![16, 64, 256];
                c.particles = vec![4];
                c.replicates = 4000;
                c.phi0 = Phi0::Fixed(0.2);
                c.kernel = KernelConfig {
                    choice: KernelChoice::Rwm,
                    proposal_sd: Some(0.5),
                    sweeps: 1,
                };
                c.resampling.choice = ResamplingChoice::Deterministic { at: vec![0.5] };
            }
            Experiment::Abc => {
                c.dims = vec![10, 40];
                c.particles = vec![1000];
                c.replicates = 50;
                c.resampling.choice = ResamplingChoice::Ess { fraction: 0.5 };
            }
            Experiment::MarginalCollapse => {
                c.dims = vec![2, 4, 8, 16];
                c.particles = vec![10];
                c.replicates = 20000;
            }
        }
        c
    }

    /// Defaults of `experiment` overridden by the `key = value` lines of `text`.
    pub fn parse(experiment: Experiment, text: &str) -> Result<Self> {
        let mut c = Self::defaults(experiment);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            c.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, message(e))))?;
        }
        Ok(c)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => {
                let e: Experiment = value.parse()?;
                if e != self.experiment {
                    return Err(Error::Config(format!(
                        "config is for '{e}' but the experiment is '{}'",
                        self.experiment
                    )));
                }
            }
            "d" => self.dims = parse_list(key, value)?,
            "n" => self.particles = parse_list(key, value)?,
            "replicates" => self.replicates = parse(key, value)?,
            "phi0" => {
                self.phi0 = if value == "1/d" {
                    Phi0::InverseDim
                } else {
                    Phi0::Fixed(parse(key, value)?)
                }
            }
            "schedule" => {
                self.schedule.shape = match value {
                    "linear" => ScheduleShape::Linear,
                    "exponential" => ScheduleShape::Exponential {
                        theta: match self.schedule.shape {
                            ScheduleShape::Exponential { theta } => theta,
                            ScheduleShape::Linear => 5.0,
                        },
                    },
                    _ => return Err(Error::Config(format!("unknown schedule '{value}'"))),
                }
            }
            "theta" => {
                let theta = parse(key, value)?;
                match &mut self.schedule.shape {
                    ScheduleShape::Exponential { theta: t } => *t = theta,
                    ScheduleShape::Linear => self.schedule.shape = ScheduleShape::Exponential { theta },
                }
            }
            "steps_per_dim" => self.schedule.steps_per_dim = parse(key, value)?,
            "kernel" => {
                self.kernel.choice = match value {
                    "exact" => KernelChoice::Exact,
                    "rwm" => KernelChoice::Rwm,
                    "rwm-gibbs" => KernelChoice::RwmGibbs,
                    _ => return Err(Error::Config(format!("unknown kernel '{value}'"))),
                }
            }
            "proposal_sd" => {
                self.kernel.proposal_sd = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "sweeps" => self.kernel.sweeps = parse(key, value)?,
            "resampling" => {
                self.resampling.choice = match value {
                    "never" => ResamplingChoice::Never,
                    "ess" => ResamplingChoice::Ess { fraction: 0.5 },
                    "deterministic" => ResamplingChoice::Deterministic { at: vec![0.5] },
                    _ => {
                        if let Some(f) = value.strip_prefix("ess:") {
                            ResamplingChoice::Ess { fraction: parse(key, f)? }
                        } else {
                            return Err(Error::Config(format!("unknown resampling '{value}'")));
                        }
                    }
                }
            }
            "resample_at" => {
                self.resampling.choice = ResamplingChoice::Deterministic {
                    at: parse_list(key, value)?,
                }
            }
            "final_resample" => self.resampling.final_resample = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            "bootstrap_resamples" => self.bootstrap_resamples = parse(key, value)?,
            _ if self.extras.contains_key(key) => {
                self.extras.insert(key.to_string(), value.to_string());
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown key '{key}' for experiment '{}'",
                    self.experiment
                )))
            }
        }
        Ok(())
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dims.is_empty() || self.dims.contains(&0) {
            return fail("d must list positive dimensions".into());
        }
        if self.particles.is_empty() || self.particles.contains(&0) {
            return fail("n must list positive particle counts".into());
        }
        if self.replicates < 2 {
            return fail("replicates must be at least 2".into());
        }
        if self.bootstrap_resamples < 1000 {
            return fail("bootstrap_resamples must be at least 1000".into());
        }
        if !(self.schedule.steps_per_dim > 0.0 && self.schedule.steps_per_dim.is_finite()) {
            return fail("steps_per_dim must be positive".into());
        }
        if let ResamplingChoice::Ess { fraction } = self.resampling.choice {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return fail(format!("ESS fraction {fraction} outside (0, 1]"));
            }
        }
        if let ResamplingChoice::Deterministic { at } = &self.resampling.choice {
            if at.iter().any(|u| !(*u > 0.0 && *u < 1.0)) || at.windows(2).any(|w| w[0] >= w[1]) {
                return fail("resample_at must be increasing fractions inside (0, 1)".into());
            }
        }
        for &d in &self.dims {
            let phi0 = self.phi0.at(d);
            self.schedule.build(phi0, d).map_err(cfg)?;
            if self.kernel.choice != KernelChoice::Exact && self.kernel.proposal_sd.is_none() {
                self.kernel.build(phi0).map_err(cfg)?;
            }
            for &n in &self.particles {
                self.resampling.build(n, self.schedule.steps(d)).map_err(cfg)?;
            }
        }
        if let Some(sd) = self.kernel.proposal_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return fail("proposal_sd must be positive".into());
            }
        }
        if self.kernel.sweeps == 0 {
            return fail("sweeps must be at least 1".into());
        }
        Ok(())
    }

    /// Experiment-specific value of `key`.
    pub fn extra<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self
            .extras
            .get(key)
            .ok_or_else(|| Error::Config(format!("no key '{key}' for experiment '{}'", self.experiment)))?;
        parse(key, v)
    }

    pub fn extra_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self
            .extras
            .get(key)
            .ok_or_else(|| Error::Config(format!("no key '{key}' for experiment '{}'", self.experiment)))?;
        parse_list(key, v)
    }

    /// Canonical `key = value` text of every resolved setting, sorted by key.
    pub fn canonical(&self) -> String {
        let mut m: BTreeMap<String, String> = self.extras.clone();
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        m.insert("experiment".into(), self.experiment.name().into());
        m.insert("d".into(), join(&self.dims));
        m.insert("n".into(), join(&self.particles));
        m.insert("replicates".into(), self.replicates.to_string());
        m.insert(
            "phi0".into(),
            match self.phi0 {
                Phi0::Fixed(v) => format!("{v:?}"),
                Phi0::InverseDim => "1/d".into(),
            },
        );
        let (shape, theta) = match self.schedule.shape {
            ScheduleShape::Linear => ("linear", None),
            ScheduleShape::Exponential { theta } => ("exponential", Some(theta)),
        };
        m.insert("schedule".into(), shape.into());
        if let Some(t) = theta {
            m.insert("theta".into(), format!("{t:?}"));
        }
        m.insert("steps_per_dim".into(), format!("{:?}", self.schedule.steps_per_dim));
        m.insert(
            "kernel".into(),
            match self.kernel.choice {
                KernelChoice::Exact => "exact",
                KernelChoice::Rwm => "rwm",
                KernelChoice::RwmGibbs => "rwm-gibbs",
            }
            .into(),
        );
        m.insert(
            "proposal_sd".into(),
            self.kernel.proposal_sd.map_or("auto".into(), |v| format!("{v:?}")),
        );
        m.insert("sweeps".into(), self.kernel.sweeps.to_string());
        let resampling = match &self.resampling.choice {
            ResamplingChoice::Never => "never".to_string(),
            ResamplingChoice::Ess { fraction } => format!("ess:{fraction:?}"),
            ResamplingChoice::Deterministic { at } => {
                m.insert(
                    "resample_at".into(),
                    at.iter().map(|u| format!("{u:?}")).collect::<Vec<_>>().join(","),
                );
                "deterministic".to_string()
            }
        };
        m.insert("resampling".into(), resampling);
        m.insert("final_resample".into(), self.resampling.final_resample.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("bootstrap_resamples".into(), self.bootstrap_resamples.to_string());
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded. The output path is not part of it.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Every key this experiment accepts.
    pub fn keys(&self) -> Vec<&str> {
        let mut v: Vec<&str> = COMMON_KEYS.to_vec();
        v.push("bootstrap_resamples");
        v.extend(self.extras.keys().map(String::as_str));
        v
    }
}

fn cfg(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(message(other)),
    }
}

fn message(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Argument(m) => m,
        other => other.to_string(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for e in Experiment::ALL {
            ExperimentConfig::defaults(e).validate().unwrap();
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }

    #[test]
    fn parses_overrides_and_comments() {
        let text = "# comment\nd = 8, 16\nn=50 # inline\nkernel = rwm\nproposal_sd = 0.3\nresample_at = 0.25,0.75\n\nepsilon = 2.5\n";
        let c = ExperimentConfig::parse(Experiment::Abc, text).unwrap();
        assert_eq!(c.dims, vec![8, 16]);
        assert_eq!(c.particles, vec![50]);
        assert_eq!(c.kernel.choice, KernelChoice::Rwm);
        assert_eq!(c.kernel.proposal_sd, Some(0.3));
        assert_eq!(c.resampling.choice, ResamplingChoice::Deterministic { at: vec![0.25, 0.75] });
        assert_eq!(c.extra::<f64>("epsilon").unwrap(), 2.5);
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["d = ten", "nonsense", "epsilon = 1", "schedule = cubic", "experiment = abc"] {
            let r = ExperimentConfig::parse(Experiment::NcLimit, text);
            assert!(matches!(r, Err(Error::Config(_))), "{text}: {r:?}");
        }
        let mut c = ExperimentConfig::defaults(Experiment::NcLimit);
        c.replicates = 1;
        assert!(c.validate().is_err());
        let c = ExperimentConfig::parse(Experiment::NcLimit, "resample_at = 0.7, 0.2").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_settings_not_output() {
        let a = ExperimentConfig::defaults(Experiment::NcLimit);
        let mut b = a.clone();
        b.output = Some("x.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let reparsed = ExperimentConfig::parse(Experiment::NcLimit, &a.canonical()).unwrap();
        assert_eq!(reparsed.hash(), a.hash());
    }

    #[test]
    fn builds_policies_and_kernels() {
        let c = ExperimentConfig::parse(Experiment::NcLimit, "resample_at = 0.3333333333333333").unwrap();
        assert_eq!(
            c.resampling.build(100, 128).unwrap(),
            ResamplingPolicy::Deterministic { steps: vec![43] }
        );
        let t1 = ExperimentConfig::defaults(Experiment::Table1);
        let k = t1.kernel.build(0.1).unwrap();
        assert_eq!(k.proposal_sd(), Some((1.0f64 / 2.5).sqrt()));
        assert_eq!(t1.phi0.at(25), 0.04);
    }

    proptest::proptest! {
        #[test]
        fn canonical_text_round_trips(
            which in 0usize..7,
            seed in proptest::prelude::any::<u64>(),
            replicates in 2usize..10_000,
            n in 1usize..5000,
        ) {
            let e = Experiment::ALL[which];
            let mut c = ExperimentConfig::defaults(e);
            c.seed = seed;
            c.replicates = replicates;
            c.particles = vec![n.max(4)];
            let back = ExperimentConfig::parse(e, &c.canonical()).unwrap();
            proptest::prop_assert_eq!(back.canonical(), c.canonical());
            proptest::prop_assert_eq!(back.hash(), c.hash());
        }
    }
}
