use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::{bootstrap_ci, mean, sample_variance};

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    /// Reals use 17 significant digits.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(v) => Some(v as f64),
            Cell::Real(v) => Some(v),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Rows produced by an experiment, plus how many replicates degenerated.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub degenerate: usize,
    pub attempted: usize,
}

impl ExperimentOutput {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            degenerate: 0,
            attempted: 0,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Fraction of degenerate replicates; 0 when nothing was attempted.
    pub fn degenerate_fraction(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.degenerate as f64 / self.attempted as f64
        }
    }

    /// Index of `name` among the columns.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Numeric values of column `name` over rows where `filter` holds.
    pub fn values<F: Fn(&[Cell]) -> bool>(&self, name: &str, filter: F) -> Vec<f64> {
        let Some(j) = self.column(name) else { return Vec::new() };
        self.rows.iter().filter(|r| filter(r)).filter_map(|r| r[j].as_f64()).collect()
    }

    /// Writes `# config_hash=<hash> seed=<seed>`, the header row and every row.
    pub fn write_csv<W: Write>(&self, mut out: W, config_hash: &str, seed: u64) -> Result<()> {
        writeln!(out, "# config_hash={config_hash} seed={seed}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Replicate outputs with their moments and bootstrap intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// `(1/R) sum (x_r / truth - 1)^2` when a truth is given.
    pub rel_l2: Option<f64>,
    /// Percentile-bootstrap interval of the mean.
    pub mean_ci: (f64, f64),
    /// Percentile-bootstrap interval of the relative L2 estimate.
    pub rel_l2_ci: Option<(f64, f64)>,
}

impl ReplicateSummary {
    /// Needs at least two values and 1000 bootstrap resamples.
    pub fn new<R: Rng + ?Sized>(values: Vec<f64>, truth: Option<f64>, resamples: usize, level: f64, rng: &mut R) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Estimation(format!("{} replicates; need at least 2", values.len())));
        }
        if resamples < 1000 {
            return Err(Error::arg("bootstrap needs at least 1000 resamples"));
        }
        let m = mean(&values);
        let mean_ci = widen(bootstrap_ci(&values, mean, resamples, level, rng)?, m);
        let (rel_l2, rel_l2_ci) = match truth {
            Some(t) => {
                if !(t != 0.0 && t.is_finite()) {
                    return Err(Error::arg("truth must be finite and non-zero"));
                }
                let sq: Vec<f64> = values.iter().map(|x| (x / t - 1.0).powi(2)).collect();
                let v = mean(&sq);
                (Some(v), Some(widen(bootstrap_ci(&sq, mean, resamples, level, rng)?, v)))
            }
            None => (None, None),
        };
        Ok(Self {
            mean: m,
            variance: sample_variance(&values),
            rel_l2,
            mean_ci,
            rel_l2_ci,
            values,
        })
    }
}

/// Makes sure the interval contains the point estimate.
fn widen((lo, hi): (f64, f64), point: f64) -> (f64, f64) {
    (lo.min(point), hi.max(point))
}

/// Writes observations as `time,y` rows (time from 1) under a `# seed=<seed>` comment.
pub fn write_observations<W: Write>(mut out: W, observations: &[f64], seed: u64) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "y"])?;
    for (k, y) in observations.iter().enumerate() {
        w.write_record([(k + 1).to_string(), format!("{y:.16e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `time,y` rows; returns the observations and the seed recorded in the header comment, if any.
pub fn read_observations<R: Read>(input: R) -> Result<(Vec<f64>, Option<u64>)> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let seed = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .find_map(|l| l.split_whitespace().find_map(|t| t.strip_prefix("seed=")?.parse().ok()));
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["time", "y"] {
        return Err(Error::Io("observation file must have columns time,y".into()));
    }
    let mut ys = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let t: usize = rec[0].trim().parse().map_err(|_| Error::Io(format!("bad time on row {}", i + 1)))?;
        if t != i + 1 {
            return Err(Error::Io(format!("times must run 1, 2, ...; found {t} on row {}", i + 1)));
        }
        ys.push(rec[1].trim().parse().map_err(|_| Error::Io(format!("bad y on row {}", i + 1)))?);
    }
    Ok((ys, seed))
}
