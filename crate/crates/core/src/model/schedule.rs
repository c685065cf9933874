use crate::error::{Error, Result};

/// Inverse temperature of the equidistant schedule at step `n` of `d`:
/// `phi0 + n (1 - phi0) / d`.
pub fn linear_phi(n: usize, d: usize, phi0: f64) -> Result<f64> {
    check_phi0(phi0)?;
    if d == 0 {
        return Err(Error::arg("schedule needs at least one step"));
    }
    if n > d {
        return Err(Error::arg(format!("step index {n} exceeds {d}")));
    }
    if n == d {
        return Ok(1.0);
    }
    Ok(phi0 + n as f64 * (1.0 - phi0) / d as f64)
}

/// Exponential schedule on continuous time `s ∈ [0, 1]`, slow at first for large `theta`.
pub fn exponential_nu(s: f64, phi0: f64, theta: f64) -> Result<f64> {
    check_phi0(phi0)?;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::arg(format!("theta must be positive, got {theta}")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::arg(format!("time {s} outside [0, 1]")));
    }
    Ok(nu(s, phi0, theta))
}

#[inline]
fn nu(s: f64, phi0: f64, theta: f64) -> f64 {
    let em1 = theta.exp_m1();
    (phi0 * theta.exp() - 1.0) / em1 + (1.0 - phi0) / em1 * (theta * s).exp()
}

fn check_phi0(phi0: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi0) {
        return Err(Error::arg(format!("phi0 must lie in [0, 1], got {phi0}")));
    }
    Ok(())
}

/// Shape of the continuous map `s ↦ phi(s)` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    Linear,
    Exponential { theta: f64 },
    /// Piecewise-linear interpolation between `(s, phi)` knots.
    Tabulated { knots: Vec<(f64, f64)> },
}

/// A non-decreasing map from step index `0..=steps` to inverse temperature,
/// built as `phi_n = phi(n / steps)` from a continuous schedule with `phi(0) = phi0`, `phi(1) = 1`.
/// It is strictly increasing unless `phi0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingSchedule {
    phi0: f64,
    steps: usize,
    kind: ScheduleKind,
}

impl AnnealingSchedule {
    pub fn linear(phi0: f64, steps: usize) -> Result<Self> {
        check_phi0(phi0)?;
        Self::check_steps(steps)?;
        Ok(Self {
            phi0,
            steps,
            kind: ScheduleKind::Linear,
        })
    }

    pub fn exponential(phi0: f64, theta: f64, steps: usize) -> Result<Self> {
        exponential_nu(0.0, phi0, theta)?;
        Self::check_steps(steps)?;
        Ok(Self {
            phi0,
            steps,
            kind: ScheduleKind::Exponential { theta },
        })
    }

    /// Knots must start at `s = 0`, end at `(1, 1)`, and increase strictly in both coordinates.
    pub fn tabulated(knots: Vec<(f64, f64)>, steps: usize) -> Result<Self> {
        Self::check_steps(steps)?;
        if knots.len() < 2 {
            return Err(Error::arg("tabulated schedule needs at least two knots"));
        }
        let (s_first, phi0) = knots[0];
        let (s_last, phi_last) = knots[knots.len() - 1];
        if s_first != 0.0 || s_last != 1.0 || phi_last != 1.0 {
            return Err(Error::arg("knots must span s = 0 to (1, 1)"));
        }
        check_phi0(phi0)?;
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::arg("knots must be strictly increasing"));
            }
        }
        Ok(Self {
            phi0,
            steps,
            kind: ScheduleKind::Tabulated { knots },
        })
    }

    fn check_steps(steps: usize) -> Result<()> {
        if steps == 0 {
            return Err(Error::arg("schedule needs at least one step"));
        }
        Ok(())
    }

    /// Same shape, different number of steps.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::check_steps(steps)?;
        Ok(Self {
            steps,
            ..self.clone()
        })
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    /// Continuous schedule `phi(s)`, `s` clamped to `[0, 1]`.
    pub fn phi_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        if s == 1.0 {
            return 1.0;
        }
        match &self.kind {
            ScheduleKind::Linear => self.phi0 + (1.0 - self.phi0) * s,
            ScheduleKind::Exponential { theta } => nu(s, self.phi0, *theta),
            ScheduleKind::Tabulated { knots } => {
                let k = knots.partition_point(|&(t, _)| t <= s).clamp(1, knots.len() - 1);
                let (s0, p0) = knots[k - 1];
                let (s1, p1) = knots[k];
                p0 + (p1 - p0) * (s - s0) / (s1 - s0)
            }
        }
    }

    /// `d phi / ds` (right derivative at tabulated knots).
    pub fn derivative_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match &self.kind {
            ScheduleKind::Linear => 1.0 - self.phi0,
            ScheduleKind::Exponential { theta } => {
                (1.0 - self.phi0) * theta * (theta * s).exp() / theta.exp_m1()
            }
            ScheduleKind::Tabulated { knots } => {
                let k = knots.partition_point(|&(t, _)| t <= s).clamp(1, knots.len() - 1);
                let (s0, p0) = knots[k - 1];
                let (s1, p1) = knots[k];
                (p1 - p0) / (s1 - s0)
            }
        }
    }

    /// Breakpoints of the derivative, used to split quadrature ranges.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            ScheduleKind::Tabulated { knots } => knots.iter().map(|k| k.0).collect(),
            _ => vec![0.0, 1.0],
        }
    }

    /// `phi_n` for `n ∈ 0..=steps`.
    pub fn phi(&self, n: usize) -> f64 {
        debug_assert!(n <= self.steps);
        if n == 0 {
            return self.phi0;
        }
        if n >= self.steps {
            return 1.0;
        }
        self.phi_at(n as f64 / self.steps as f64)
    }

    /// All `steps + 1` inverse temperatures.
    pub fn values(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.phi(n)).collect()
    }
}

/// Step index reached at inverse temperature `t` of the linear schedule: `floor(d (t - phi0) / (1 - phi0))`.
pub fn step_index_for_time(t: f64, phi0: f64, d: usize) -> Result<usize> {
    check_phi0(phi0)?;
    if phi0 == 1.0 {
        return Err(Error::arg("a constant schedule has no time map"));
    }
    if !(phi0..=1.0).contains(&t) {
        return Err(Error::arg(format!("time {t} outside [{phi0}, 1]")));
    }
    Ok((d as f64 * (t - phi0) / (1.0 - phi0)).floor() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_boundaries_and_midpoint() {
        assert_eq!(linear_phi(0, 10, 0.1).unwrap(), 0.1);
        assert_eq!(linear_phi(10, 10, 0.1).unwrap(), 1.0);
        assert!((linear_phi(5, 10, 0.1).unwrap() - 0.55).abs() < 1e-15);
        assert!(linear_phi(11, 10, 0.1).is_err());
        assert_eq!(linear_phi(1, 10, 1.0).unwrap(), 1.0);
        assert!(linear_phi(1, 10, 1.5).is_err());
        assert!(linear_phi(1, 10, -0.1).is_err());
    }

    #[test]
    fn exponential_boundaries_and_midpoint() {
        assert!((exponential_nu(0.0, 0.01, 5.0).unwrap() - 0.01).abs() < 1e-14);
        assert!((exponential_nu(1.0, 0.01, 5.0).unwrap() - 1.0).abs() < 1e-14);
        // (0.01 e^5 - 1)/(e^5 - 1) + 0.99 e^{2.5}/(e^5 - 1)
        let e5 = 5f64.exp();
        let want = (0.01 * e5 - 1.0) / (e5 - 1.0) + 0.99 * 2.5f64.exp() / (e5 - 1.0);
        let got = exponential_nu(0.5, 0.01, 5.0).unwrap();
        assert!((got - want).abs() < 1e-14);
        assert!((got - 0.0851).abs() < 5e-5);
        assert!(exponential_nu(0.5, 0.01, 0.0).is_err());
        assert!(exponential_nu(0.5, 0.01, -1.0).is_err());
    }

    #[test]
    fn schedule_endpoints() {
        for sch in [
            AnnealingSchedule::linear(0.2, 7).unwrap(),
            AnnealingSchedule::exponential(0.2, 5.0, 7).unwrap(),
            AnnealingSchedule::tabulated(vec![(0.0, 0.2), (0.3, 0.25), (1.0, 1.0)], 7).unwrap(),
        ] {
            assert_eq!(sch.phi(0), 0.2);
            assert_eq!(sch.phi(7), 1.0);
        }
    }

    #[test]
    fn tabulated_interpolates() {
        let sch = AnnealingSchedule::tabulated(vec![(0.0, 0.0), (0.5, 0.1), (1.0, 1.0)], 4).unwrap();
        assert!((sch.phi_at(0.25) - 0.05).abs() < 1e-15);
        assert!((sch.phi_at(0.75) - 0.55).abs() < 1e-15);
        assert!((sch.derivative_at(0.25) - 0.2).abs() < 1e-15);
        assert!((sch.derivative_at(0.75) - 1.8).abs() < 1e-15);
        assert!(AnnealingSchedule::tabulated(vec![(0.0, 0.0), (0.5, 0.5), (0.5, 0.6), (1.0, 1.0)], 4).is_err());
    }

    #[test]
    fn continuous_time_map() {
        assert_eq!(step_index_for_time(0.5, 0.5, 10).unwrap(), 0);
        assert_eq!(step_index_for_time(0.75, 0.5, 10).unwrap(), 5);
        assert_eq!(step_index_for_time(1.0, 0.5, 10).unwrap(), 10);
    }

    fn any_schedule() -> impl Strategy<Value = AnnealingSchedule> {
        (0.0f64..0.99, 1usize..200, 0usize..3, 0.1f64..10.0).prop_map(|(phi0, steps, kind, theta)| {
            match kind {
                0 => AnnealingSchedule::linear(phi0, steps).unwrap(),
                1 => AnnealingSchedule::exponential(phi0, theta, steps).unwrap(),
                _ => {
                    let mid = phi0 + (1.0 - phi0) * 0.3;
                    AnnealingSchedule::tabulated(vec![(0.0, phi0), (0.6, mid), (1.0, 1.0)], steps).unwrap()
                }
            }
        })
    }

    proptest! {
        #[test]
        fn schedules_strictly_increase(sch in any_schedule()) {
            let v = sch.values();
            prop_assert_eq!(v[0], sch.phi0());
            prop_assert_eq!(*v.last().unwrap(), 1.0);
            for w in v.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }

        #[test]
        fn increments_telescope(sch in any_schedule(), gsum in -50.0f64..50.0) {
            let v = sch.values();
            let total: f64 = v.windows(2).map(|w| (w[1] - w[0]) * gsum).sum();
            prop_assert!((total - (1.0 - sch.phi0()) * gsum).abs() < 1e-9 * (1.0 + gsum.abs()));
        }
    }
}
