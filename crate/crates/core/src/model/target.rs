use crate::error::{Error, Result};
use crate::kernels::{metropolis_accept, KernelKind, KernelSpec};
use crate::model::potential::ScalarPotential;
use crate::rng::StreamRng;
use rand::Rng;
use rand_distr::StandardNormal;

/// Acceptance bookkeeping for one kernel application.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    pub fn merge(&mut self, other: MoveStats) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.proposed as f64
    }
}

/// A Markov kernel bound to one inverse temperature.
pub trait Mover: Sync {
    fn apply(&self, x: &mut [f64], rng: &mut StreamRng) -> Result<MoveStats>;
}

/// A family of bridging densities `log Gamma_s(x) = base(x) + s * potential(x)`.
///
/// The engine only ever needs the tempered term: incremental weights are
/// `(phi_n - phi_{n-1}) * potential(x)`, and no normalizing constant is evaluated.
pub trait TemperedTarget: Sync {
    type Mover<'a>: Mover
    where
        Self: 'a;

    fn dim(&self) -> usize;

    fn potential(&self, x: &[f64]) -> f64;

    /// Exact draw from the bridging law at inverse temperature `s`.
    fn sample_initial(&self, s: f64, rng: &mut StreamRng, out: &mut [f64]) -> Result<()>;

    /// Kernel invariant for the bridging law at `s`.
    fn mover(&self, s: f64, kernel: &KernelSpec) -> Result<Self::Mover<'_>>;
}

/// `Pi(x) = prod_j exp(g(x_j))` on `E^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTarget<P> {
    potential: P,
    dim: usize,
}

impl<P: ScalarPotential> ProductTarget<P> {
    pub fn new(potential: P, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dimension must be positive"));
        }
        Ok(Self { potential, dim })
    }

    pub fn scalar(&self) -> &P {
        &self.potential
    }

    /// `sum_j g(x_j)`, i.e. `log Pi(x)` up to a constant.
    #[inline]
    pub fn log_density(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.potential.value(v)).sum()
    }
}

/// `log Gamma_s(x) = s * sum_j g(x_j)`.
pub fn bridge_log_density<P: ScalarPotential>(target: &ProductTarget<P>, s: f64, x: &[f64]) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::arg(format!("inverse temperature {s} outside (0, 1]")));
    }
    if x.len() != target.dim {
        return Err(Error::arg(format!(
            "state has length {}, target dimension is {}",
            x.len(),
            target.dim
        )));
    }
    let support = target.potential.support();
    if let Some((j, v)) = x.iter().enumerate().find(|(_, v)| !support.contains(**v)) {
        return Err(Error::Evaluation(format!("coordinate {j} = {v} outside the support")));
    }
    Ok(s * target.log_density(x))
}

pub struct ProductMover<'a, P> {
    potential: &'a P,
    s: f64,
    kind: KernelKind,
    sweeps: usize,
}

impl<P: ScalarPotential> Mover for ProductMover<'_, P> {
    #[inline]
    fn apply(&self, x: &mut [f64], rng: &mut StreamRng) -> Result<MoveStats> {
        let d = x.len() as u64;
        match self.kind {
            KernelKind::Exact => {
                for v in x.iter_mut() {
                    *v = self.potential.sample_tempered(self.s, rng)?;
                }
                Ok(MoveStats {
                    proposed: d,
                    accepted: d,
                })
            }
            // conditionals factorize, so both Metropolis kinds coincide
            KernelKind::Rwm { proposal_sd } | KernelKind::RwmGibbs { proposal_sd } => {
                let mut accepted = 0;
                let s = self.s;
                for _ in 0..self.sweeps {
                    for v in x.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        let y = *v + proposal_sd * z;
                        let ly = self.potential.tempered_log_density(s, y);
                        let lx = self.potential.tempered_log_density(s, *v);
                        if metropolis_accept(ly, lx, rng) {
                            *v = y;
                            accepted += 1;
                        }
                    }
                }
                Ok(MoveStats {
                    proposed: d * self.sweeps as u64,
                    accepted,
                })
            }
        }
    }
}

impl<P: ScalarPotential> TemperedTarget for ProductTarget<P> {
    type Mover<'a>
        = ProductMover<'a, P>
    where
        P: 'a;

    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn potential(&self, x: &[f64]) -> f64 {
        self.log_density(x)
    }

    fn sample_initial(&self, s: f64, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        for v in out.iter_mut() {
            *v = self.potential.sample_tempered(s, rng)?;
        }
        Ok(())
    }

    fn mover(&self, s: f64, kernel: &KernelSpec) -> Result<ProductMover<'_, P>> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::arg(format!("kernel temperature {s} outside (0, 1]")));
        }
        Ok(ProductMover {
            potential: &self.potential,
            s,
            kind: kernel.kind,
            sweeps: kernel.sweeps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianPotential;
    use crate::rng::stream;

    #[test]
    fn bridge_values() {
        let t = ProductTarget::new(GaussianPotential, 3).unwrap();
        assert_eq!(bridge_log_density(&t, 1.0, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let t1 = ProductTarget::new(GaussianPotential, 1).unwrap();
        assert!((bridge_log_density(&t1, 0.5, &[2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(bridge_log_density(&t1, 0.0, &[2.0]).is_err());
        assert!(bridge_log_density(&t1, 0.5, &[f64::INFINITY]).is_err());
        assert!(bridge_log_density(&t1, 0.5, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bridge_is_linear_in_temperature() {
        let t = ProductTarget::new(GaussianPotential, 4).unwrap();
        let x = [0.3, -1.2, 2.0, 0.7];
        let sum: f64 = x.iter().map(|v| -0.5 * v * v).sum();
        let a = bridge_log_density(&t, 0.9, &x).unwrap();
        let b = bridge_log_density(&t, 0.35, &x).unwrap();
        assert!((a - b - 0.55 * sum).abs() < 1e-12);
    }

    #[test]
    fn product_kernel_equals_coordinatewise_scalar_kernel() {
        let t = ProductTarget::new(GaussianPotential, 5).unwrap();
        let kernel = KernelSpec::rwm(0.8).unwrap();
        let mover = t.mover(0.6, &kernel).unwrap();
        let mut x = [0.1, -0.4, 1.3, 2.2, -0.9];
        let mut y = x;
        let mut r1 = stream(9, &[]);
        let mut r2 = stream(9, &[]);
        mover.apply(&mut x, &mut r1).unwrap();
        for v in y.iter_mut() {
            *v = crate::kernels::rwm_coordinate_step(*v, |u| -0.3 * u * u, 0.8, &mut r2).unwrap();
        }
        assert_eq!(x, y);
    }
}
