use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Domain of a scalar potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Real,
    Interval { lo: f64, hi: f64 },
}

impl Support {
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Real => x.is_finite(),
            Support::Interval { lo, hi } => x >= lo && x <= hi,
        }
    }
}

/// A scalar log-potential `g`, so that `pi_s(x) ∝ exp(s * g(x))` on the support.
///
/// Every potential used by the engine must be able to draw exactly from its
/// tempered family: the initial particles come from `pi_{phi0}` and the exact
/// kernel redraws from `pi_s` at every step.
pub trait ScalarPotential: Send + Sync {
    fn value(&self, x: f64) -> f64;

    fn support(&self) -> Support;

    /// Exact draw from `pi_s`.
    fn sample_tempered<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<f64>;

    /// `G_max` such that `|g| <= G_max` on the support, when one exists.
    fn bound(&self) -> Option<f64> {
        None
    }

    /// `s * g(x)` inside the support, `-inf` outside.
    #[inline]
    fn tempered_log_density(&self, s: f64, x: f64) -> f64 {
        if self.support().contains(x) {
            s * self.value(x)
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// `g(x) = -x^2 / 2` on the real line; `pi_s = N(0, 1/s)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussianPotential;

impl ScalarPotential for GaussianPotential {
    #[inline(always)]
    fn value(&self, x: f64) -> f64 {
        -0.5 * x * x
    }

    fn support(&self) -> Support {
        Support::Real
    }

    #[inline]
    fn sample_tempered<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::arg(format!(
                "Gaussian family needs s > 0 for exact sampling, got {s}"
            )));
        }
        let z: f64 = rng.sample(StandardNormal);
        Ok(z / s.sqrt())
    }

    #[inline(always)]
    fn tempered_log_density(&self, s: f64, x: f64) -> f64 {
        -0.5 * s * x * x
    }
}

/// Quadratic potential clipped to `[-g_max, 0]` on the compact interval `[-half_width, half_width]`.
///
/// This is the bounded test potential: `|g| <= g_max` everywhere on a compact support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedPotential {
    half_width: f64,
    g_max: f64,
}

impl BoundedPotential {
    pub fn new(half_width: f64, g_max: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::arg("half_width must be positive and finite"));
        }
        if !(g_max > 0.0 && g_max.is_finite()) {
            return Err(Error::arg("g_max must be positive and finite"));
        }
        Ok(Self { half_width, g_max })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }
}

impl ScalarPotential for BoundedPotential {
    #[inline]
    fn value(&self, x: f64) -> f64 {
        (-0.5 * x * x).max(-self.g_max)
    }

    fn support(&self) -> Support {
        Support::Interval {
            lo: -self.half_width,
            hi: self.half_width,
        }
    }

    /// Rejection from the uniform law on the support; acceptance is at least `exp(-s g_max)`.
    fn sample_tempered<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::arg(format!("inverse temperature must be >= 0, got {s}")));
        }
        loop {
            let x = rng.random_range(-self.half_width..=self.half_width);
            let u: f64 = rng.random();
            if u.ln() <= s * self.value(x) {
                return Ok(x);
            }
        }
    }

    fn bound(&self) -> Option<f64> {
        Some(self.g_max)
    }
}

/// `g ≡ c` on `[lo, hi]`; every tempered law is uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPotential {
    value: f64,
    lo: f64,
    hi: f64,
}

impl ConstantPotential {
    pub fn new(value: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(value.is_finite() && lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::arg("constant potential needs finite value and lo < hi"));
        }
        Ok(Self { value, lo, hi })
    }
}

impl ScalarPotential for ConstantPotential {
    fn value(&self, _x: f64) -> f64 {
        self.value
    }

    fn support(&self) -> Support {
        Support::Interval {
            lo: self.lo,
            hi: self.hi,
        }
    }

    fn sample_tempered<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::arg(format!("inverse temperature must be >= 0, got {s}")));
        }
        Ok(rng.random_range(self.lo..=self.hi))
    }

    fn bound(&self) -> Option<f64> {
        Some(self.value.abs())
    }
}
