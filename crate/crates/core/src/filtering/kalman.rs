use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `Y_k = (1, ..., 1) X_k + V_k`, `X_k = X_{k-1} + W_k`, `X_0 = 0`,
/// with `V_k ~ N(0, obs_var)` and `W_k ~ N(0, state_var I_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianSsm {
    dim: usize,
    state_var: f64,
    obs_var: f64,
}

impl LinearGaussianSsm {
    /// Unit noise variances.
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_noise(dim, 1.0, 1.0)
    }

    pub fn with_noise(dim: usize, state_var: f64, obs_var: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("state dimension must be at least 1"));
        }
        if !(state_var >= 0.0 && obs_var >= 0.0 && state_var.is_finite() && obs_var.is_finite()) {
            return Err(Error::arg("noise variances must be finite and non-negative"));
        }
        Ok(Self { dim, state_var, obs_var })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state_var(&self) -> f64 {
        self.state_var
    }

    pub fn obs_var(&self) -> f64 {
        self.obs_var
    }

    /// Moves `x` one step under the state dynamics.
    pub fn transition<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        let sd = self.state_var.sqrt();
        for v in x.iter_mut() {
            *v += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    pub fn observe<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        x.iter().sum::<f64>() + self.obs_var.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Simulated states `X_1..X_n` and observations `Y_1..Y_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmRecord {
    pub states: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
}

pub fn simulate_ssm<R: Rng + ?Sized>(model: &LinearGaussianSsm, n: usize, rng: &mut R) -> SsmRecord {
    let mut x = vec![0.0; model.dim];
    let mut states = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    for _ in 0..n {
        model.transition(&mut x, rng);
        observations.push(model.observe(&x, rng));
        states.push(x.clone());
    }
    SsmRecord { states, observations }
}

/// Filtering moments from the Kalman recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    /// `E[X_k | y_{1:k}]` for `k = 1..=n`.
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// `log p(y_k | y_{1:k-1})`.
    pub log_predictive: Vec<f64>,
    /// Prediction for `X_{n+1}` given `y_{1:n}`.
    pub next_mean: DVector<f64>,
    pub next_covariance: DMatrix<f64>,
}

pub fn kalman_filter(model: &LinearGaussianSsm, observations: &[f64]) -> Result<KalmanOutput> {
    if model.obs_var <= 0.0 {
        return Err(Error::arg("the Kalman update needs a positive observation variance"));
    }
    let d = model.dim;
    let q = DMatrix::<f64>::identity(d, d) * model.state_var;
    let mut m = DVector::<f64>::zeros(d);
    let mut p = q.clone();
    let mut out = KalmanOutput {
        means: Vec::with_capacity(observations.len()),
        covariances: Vec::with_capacity(observations.len()),
        log_predictive: Vec::with_capacity(observations.len()),
        next_mean: m.clone(),
        next_covariance: p.clone(),
    };
    for &y in observations {
        if !y.is_finite() {
            return Err(Error::arg("observations must be finite"));
        }
        // H = 1': P H' is the row sums of P
        let ph: DVector<f64> = p.column_sum();
        let s = ph.sum() + model.obs_var;
        let resid = y - m.sum();
        out.log_predictive
            .push(-0.5 * ((2.0 * std::f64::consts::PI * s).ln() + resid * resid / s));
        let k = &ph / s;
        m += &k * resid;
        p -= &k * ph.transpose();
        p = (&p + p.transpose()) * 0.5;
        out.means.push(m.clone());
        out.covariances.push(p.clone());
        p += &q;
    }
    out.next_mean = m;
    out.next_covariance = p;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn no_data_gives_prior() {
        let out = kalman_filter(&LinearGaussianSsm::new(3).unwrap(), &[]).unwrap();
        assert!(out.means.is_empty());
        assert_eq!(out.next_mean, DVector::zeros(3));
        assert_eq!(out.next_covariance, DMatrix::identity(3, 3));
    }

    #[test]
    fn scalar_conjugate_update() {
        let out = kalman_filter(&LinearGaussianSsm::new(1).unwrap(), &[1.7]).unwrap();
        assert!((out.means[0][0] - 0.85).abs() < 1e-15);
        assert!((out.covariances[0][(0, 0)] - 0.5).abs() < 1e-15);
    }

    /// Posterior of `X_k` given `y_{1:k}` from the joint Gaussian of `(X_k, Y_{1:k})`.
    fn batch_posterior(model: &LinearGaussianSsm, y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (d, k) = (model.dim(), y.len());
        let (q, r) = (model.state_var(), model.obs_var());
        let cyy = DMatrix::from_fn(k, k, |s, t| {
            d as f64 * q * (s.min(t) + 1) as f64 + if s == t { r } else { 0.0 }
        });
        // Cov(X_k, Y_t) = q min(k, t) 1_d
        let cxy = DMatrix::from_fn(d, k, |_, t| q * (t + 1) as f64);
        let chol = cyy.cholesky().unwrap();
        let yv = DVector::from_column_slice(y);
        let mean = &cxy * chol.solve(&yv);
        let cov = DMatrix::identity(d, d) * (q * k as f64) - &cxy * chol.solve(&cxy.transpose());
        (mean, cov)
    }

    #[test]
    fn recursion_matches_batch_solve() {
        let model = LinearGaussianSsm::with_noise(3, 0.7, 1.3).unwrap();
        let rec = simulate_ssm(&model, 5, &mut stream(3, &[]));
        let out = kalman_filter(&model, &rec.observations).unwrap();
        for k in 1..=5 {
            let (m, c) = batch_posterior(&model, &rec.observations[..k]);
            assert!((&out.means[k - 1] - m).amax() < 1e-8);
            assert!((&out.covariances[k - 1] - c).amax() < 1e-8);
        }
    }

    #[test]
    fn predictive_density_sums_to_joint() {
        // joint log-density of Y_{1:k} equals the sum of one-step predictives
        let model = LinearGaussianSsm::new(2).unwrap();
        let y = [0.4, -1.1, 2.5];
        let out = kalman_filter(&model, &y).unwrap();
        let k = y.len();
        let cyy = DMatrix::from_fn(k, k, |s, t| 2.0 * (s.min(t) + 1) as f64 + if s == t { 1.0 } else { 0.0 });
        let chol = cyy.clone().cholesky().unwrap();
        let yv = DVector::from_column_slice(&y);
        let quad = yv.dot(&chol.solve(&yv));
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let joint = -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
        assert!((out.log_predictive.iter().sum::<f64>() - joint).abs() < 1e-10);
    }

    #[test]
    fn zero_noise_is_deterministic() {
        let model = LinearGaussianSsm::with_noise(2, 0.0, 0.0).unwrap();
        let rec = simulate_ssm(&model, 4, &mut stream(1, &[]));
        assert!(rec.states.iter().all(|x| x == &vec![0.0, 0.0]));
        assert!(rec.observations.iter().all(|&y| y == 0.0));
        assert!(kalman_filter(&model, &rec.observations).is_err());
    }

    #[test]
    fn increments_have_unit_variance() {
        let model = LinearGaussianSsm::new(1).unwrap();
        let rec = simulate_ssm(&model, 100_000, &mut stream(2, &[]));
        let inc: Vec<f64> = rec.states.windows(2).map(|w| w[1][0] - w[0][0]).collect();
        let v = crate::stats::sample_variance(&inc);
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn simulation_reproduces() {
        let model = LinearGaussianSsm::new(4).unwrap();
        let a = simulate_ssm(&model, 10, &mut stream(8, &[]));
        let b = simulate_ssm(&model, 10, &mut stream(8, &[]));
        assert_eq!(a, b);
    }
}
