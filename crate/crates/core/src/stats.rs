//! Summary statistics and the classical tests used by the experiments.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; `NaN` for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Percentile bootstrap interval for `statistic` at the given two-sided `level`.
pub fn bootstrap_ci<R, F>(xs: &[f64], statistic: F, resamples: usize, level: f64, rng: &mut R) -> Result<(f64, f64)>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    if xs.is_empty() || resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::arg("bootstrap needs data, resamples >= 1 and level in (0, 1)"));
    }
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..n)];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Asymptotic Kolmogorov tail probability `P(K > lambda)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Result of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS distance against a continuous `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsResult {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut dmax: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        dmax = dmax.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    KsResult {
        statistic: dmax,
        p_value: kolmogorov_tail((sn + 0.12 + 0.11 / sn) * dmax),
    }
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut dmax: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        dmax = dmax.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sn = ne.sqrt();
    KsResult {
        statistic: dmax,
        p_value: kolmogorov_tail((sn + 0.12 + 0.11 / sn) * dmax),
    }
}

/// Midranks of the pooled sample, in input order.
fn ranks(v: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (r, tie_term)
}

/// One-sided Mann-Whitney test of `a` stochastically greater than `b`
/// (normal approximation with tie and continuity corrections). Returns the p-value.
pub fn mann_whitney_greater(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("Mann-Whitney needs two non-empty samples"));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (r, tie_term) = ranks(&pooled);
    let r1: f64 = r[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(if u > mu { 0.0 } else { 1.0 });
    }
    let z = (u - mu - 0.5) / var.sqrt();
    Ok(1.0 - Normal::standard().cdf(z))
}

/// Least-squares line fit with slope inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// One-sided p-value for a positive slope.
    pub p_positive: f64,
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::arg("regression needs at least three paired points"));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::arg("regressor has no spread"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = (n - 2) as f64;
    let slope_se = (rss / dof / sxx).sqrt();
    let p_positive = if slope_se == 0.0 {
        if slope > 0.0 { 0.0 } else { 1.0 }
    } else {
        let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Numerical(e.to_string()))?;
        1.0 - t.cdf(slope / slope_se)
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
        p_positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
        assert_eq!(sample_variance(&[1.0, 2.0, 6.0]), 7.0);
        assert!(sample_variance(&[1.0]).is_nan());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&v, 0.5), 1.5);
        assert_eq!(quantile_sorted(&v, 1.0), 3.0);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let mut rng = stream(1, &[]);
        let xs: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = mean(&xs);
        let (lo, hi) = bootstrap_ci(&xs, mean, 2000, 0.95, &mut rng).unwrap();
        assert!(lo < m && m < hi);
        // width close to 2 * 1.96 / sqrt(500)
        assert!(((hi - lo) - 0.1753).abs() < 0.03, "{}", hi - lo);
    }

    #[test]
    fn ks_hand_value() {
        // sample {0.5} against U(0,1): D = 0.5
        let r = ks_one_sample(&[0.5], |x| x.clamp(0.0, 1.0));
        assert_eq!(r.statistic, 0.5);
        let r = ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(r.statistic, 1.0);
        let r = ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]);
        assert_eq!(r.statistic, 0.5);
    }

    #[test]
    fn ks_accepts_correct_law() {
        let mut rng = stream(2, &[]);
        let n = Normal::standard();
        let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = ks_one_sample(&xs, |x| n.cdf(x));
        assert!(r.statistic < 0.04 && r.p_value > 0.01);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.3).collect();
        assert!(ks_one_sample(&shifted, |x| n.cdf(x)).p_value < 1e-6);
    }

    #[test]
    fn mann_whitney_separated_and_equal() {
        let a: Vec<f64> = (10..20).map(f64::from).collect();
        let b: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(mann_whitney_greater(&a, &b).unwrap() < 1e-3);
        assert!(mann_whitney_greater(&b, &a).unwrap() > 0.99);
        let p = mann_whitney_greater(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn regression_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.1, 4.9, 7.0, 9.0];
        let fit = linear_regression(&x, &y).unwrap();
        assert!((fit.slope - 1.99).abs() < 1e-12);
        assert!(fit.p_positive < 1e-4);
        assert!(linear_regression(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
    }
}
