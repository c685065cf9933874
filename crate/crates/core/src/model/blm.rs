//! Bayesian linear regression `Y = X beta + eps`, `eps ~ N(0, I_p)`, prior `beta ~ N(0, I_d)`.
//!
//! The prior sits in the base measure; only likelihood terms are tempered.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{metropolis_accept, KernelKind, KernelSpec};
use crate::model::target::{MoveStats, Mover, TemperedTarget};
use crate::rng::StreamRng;

/// A multivariate normal law.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::arg("covariance shape does not match mean"));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-10 {
                    return Err(Error::arg("covariance is not symmetric"));
                }
            }
        }
        if Cholesky::new(covariance.clone()).is_none() {
            return Err(Error::arg("covariance is not positive definite"));
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

fn check_data(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::arg("design must have p >= 1 rows and d >= 1 columns"));
    }
    if x.nrows() != y.len() {
        return Err(Error::arg("design rows and responses differ in length"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::arg("design and responses must be finite"));
    }
    Ok(())
}

/// Posterior `N((I + X'X)^{-1} X'Y, (I + X'X)^{-1})`.
pub fn blm_posterior(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<GaussianPosterior> {
    check_data(x, y)?;
    let d = x.ncols();
    let precision = DMatrix::identity(d, d) + x.transpose() * x;
    let chol = Cholesky::new(precision).ok_or_else(|| Error::Numerical("I + X'X not positive definite".into()))?;
    let covariance = chol.inverse();
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    let mean = chol.solve(&(x.transpose() * y));
    GaussianPosterior::new(mean, covariance)
}

/// Log-likelihood contribution of one observation, `-(y - x . beta)^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatumPotential {
    pub row: Vec<f64>,
    pub y: f64,
}

impl DatumPotential {
    pub fn value(&self, beta: &[f64]) -> f64 {
        let fit: f64 = self.row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let r = self.y - fit;
        -0.5 * r * r
    }
}

/// One potential per datum; prior plus their sum is the log posterior up to a constant.
pub fn blm_as_sequential_potentials(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<DatumPotential>> {
    check_data(x, y)?;
    Ok((0..x.nrows())
        .map(|k| DatumPotential {
            row: x.row(k).iter().copied().collect(),
            y: y[k],
        })
        .collect())
}

/// Simulated regression data: `X_ij ~ N(0, design_sd^2)`, `beta ~ N(0, I)`, `Y = X beta + N(0, I)`.
pub fn simulate_linear_model<R: Rng + ?Sized>(
    p: usize,
    d: usize,
    design_sd: f64,
    rng: &mut R,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(p, d, |_, _| design_sd * rng.sample::<f64, _>(StandardNormal));
    let beta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta + noise;
    (x, y, beta)
}

/// Gaussian bridging family `log Gamma_s(b) = -b'(A0 + s A1)b / 2 + (c0 + s c1)'b`.
///
/// `potential(b) = -b' A1 b / 2 + c1' b + k1` is the tempered log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTarget {
    dim: usize,
    base_precision: DMatrix<f64>,
    base_shift: DVector<f64>,
    pot_precision: DMatrix<f64>,
    pot_shift: DVector<f64>,
    pot_const: f64,
}

impl QuadraticTarget {
    /// Prior in the base, full likelihood tempered.
    pub fn blm_annealing(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_data(x, y)?;
        let d = x.ncols();
        Ok(Self {
            dim: d,
            base_precision: DMatrix::identity(d, d),
            base_shift: DVector::zeros(d),
            pot_precision: x.transpose() * x,
            pot_shift: x.transpose() * y,
            pot_const: -0.5 * y.dot(y),
        })
    }

    /// Prior and data `0..n` in the base, datum `n` (zero-based) tempered.
    pub fn blm_datum(x: &DMatrix<f64>, y: &DVector<f64>, n: usize) -> Result<Self> {
        check_data(x, y)?;
        if n >= x.nrows() {
            return Err(Error::arg(format!("datum index {n} out of range")));
        }
        let d = x.ncols();
        let head = x.rows(0, n);
        let yh = y.rows(0, n);
        let row = x.row(n).transpose();
        Ok(Self {
            dim: d,
            base_precision: DMatrix::identity(d, d) + head.transpose() * head,
            base_shift: head.transpose() * yh,
            pot_precision: &row * row.transpose(),
            pot_shift: &row * y[n],
            pot_const: -0.5 * y[n] * y[n],
        })
    }

    pub fn precision_at(&self, s: f64) -> DMatrix<f64> {
        &self.base_precision + &self.pot_precision * s
    }

    pub fn shift_at(&self, s: f64) -> DVector<f64> {
        &self.base_shift + &self.pot_shift * s
    }

    /// The bridging law at `s`.
    pub fn law_at(&self, s: f64) -> Result<GaussianPosterior> {
        let chol = Cholesky::new(self.precision_at(s))
            .ok_or_else(|| Error::Numerical("tempered precision not positive definite".into()))?;
        let cov = chol.inverse();
        let cov = (&cov + cov.transpose()) * 0.5;
        let mean = chol.solve(&self.shift_at(s));
        GaussianPosterior::new(mean, cov)
    }

    /// Log density of the bridge at `s`, up to a constant.
    pub fn log_density(&self, s: f64, b: &[f64]) -> f64 {
        let v = DVector::from_column_slice(b);
        let a = self.precision_at(s);
        -0.5 * v.dot(&(&a * &v)) + self.shift_at(s).dot(&v)
    }

    fn exact(&self, s: f64) -> Result<ExactGaussian> {
        let a = self.precision_at(s);
        let chol = Cholesky::new(a).ok_or_else(|| Error::Numerical("tempered precision not positive definite".into()))?;
        let mean = chol.solve(&self.shift_at(s));
        let l = chol.unpack();
        Ok(ExactGaussian {
            dim: self.dim,
            mean: mean.as_slice().to_vec(),
            chol_lower: l.as_slice().to_vec(),
        })
    }
}

/// Draws `mean + L^{-T} z` where `L L'` is the precision.
pub struct ExactGaussian {
    dim: usize,
    mean: Vec<f64>,
    chol_lower: Vec<f64>,
}

impl ExactGaussian {
    fn draw(&self, out: &mut [f64], rng: &mut StreamRng) {
        let d = self.dim;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        // back-substitution with L' (upper), L stored column-major: L'[i, k] = L[k, i] = col i, row k
        for i in (0..d).rev() {
            let col = &self.chol_lower[i * d..(i + 1) * d];
            let mut acc = out[i];
            for k in i + 1..d {
                acc -= col[k] * out[k];
            }
            out[i] = acc / col[i];
        }
        for (v, m) in out.iter_mut().zip(&self.mean) {
            *v += m;
        }
    }
}

/// Metropolis-within-Gibbs on a Gaussian bridge, tracking `A_s b` incrementally.
pub struct GibbsGaussian {
    dim: usize,
    precision: Vec<f64>,
    shift: Vec<f64>,
    proposal_sd: f64,
    sweeps: usize,
}

impl GibbsGaussian {
    fn sweep_all(&self, b: &mut [f64], rng: &mut StreamRng) -> u64 {
        let d = self.dim;
        let mut u = vec![0.0; d];
        for (j, &bj) in b.iter().enumerate() {
            let col = &self.precision[j * d..(j + 1) * d];
            for (ui, a) in u.iter_mut().zip(col) {
                *ui += a * bj;
            }
        }
        let mut accepted = 0;
        for _ in 0..self.sweeps {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let delta = self.proposal_sd * z;
                let col = &self.precision[j * d..(j + 1) * d];
                let log_ratio = delta * (self.shift[j] - u[j]) - 0.5 * delta * delta * col[j];
                if metropolis_accept(log_ratio, 0.0, rng) {
                    b[j] += delta;
                    for (ui, a) in u.iter_mut().zip(col) {
                        *ui += delta * a;
                    }
                    accepted += 1;
                }
            }
        }
        accepted
    }
}

pub enum QuadraticMover {
    Exact(ExactGaussian),
    Gibbs(GibbsGaussian),
}

impl Mover for QuadraticMover {
    fn apply(&self, x: &mut [f64], rng: &mut StreamRng) -> Result<MoveStats> {
        match self {
            QuadraticMover::Exact(e) => {
                e.draw(x, rng);
                Ok(MoveStats {
                    proposed: e.dim as u64,
                    accepted: e.dim as u64,
                })
            }
            QuadraticMover::Gibbs(g) => {
                let accepted = g.sweep_all(x, rng);
                Ok(MoveStats {
                    proposed: (g.dim * g.sweeps) as u64,
                    accepted,
                })
            }
        }
    }
}

impl TemperedTarget for QuadraticTarget {
    type Mover<'a> = QuadraticMover;

    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, b: &[f64]) -> f64 {
        let d = self.dim;
        let a = self.pot_precision.as_slice();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for j in 0..d {
            let col = &a[j * d..(j + 1) * d];
            let aj: f64 = col.iter().zip(b).map(|(p, q)| p * q).sum();
            quad += b[j] * aj;
            lin += self.pot_shift[j] * b[j];
        }
        -0.5 * quad + lin + self.pot_const
    }

    fn sample_initial(&self, s: f64, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        self.exact(s)?.draw(out, rng);
        Ok(())
    }

    fn mover(&self, s: f64, kernel: &KernelSpec) -> Result<QuadraticMover> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::arg(format!("kernel temperature {s} outside [0, 1]")));
        }
        Ok(match kernel.kind {
            KernelKind::Exact => QuadraticMover::Exact(self.exact(s)?),
            KernelKind::Rwm { proposal_sd } | KernelKind::RwmGibbs { proposal_sd } => {
                QuadraticMover::Gibbs(GibbsGaussian {
                    dim: self.dim,
                    precision: self.precision_at(s).as_slice().to_vec(),
                    shift: self.shift_at(s).as_slice().to_vec(),
                    proposal_sd,
                    sweeps: kernel.sweeps,
                })
            }
        })
    }
}
