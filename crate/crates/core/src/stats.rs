//! Small statistics helpers: streaming moments, proportion tests, trend fits.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Welford running mean and variance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Upper tail of a chi-square distribution.
pub fn chi_square_sf(stat: f64, dof: f64) -> Result<f64> {
    let dist = ChiSquared::new(dof).map_err(|e| Error::InvalidConfig(format!("chi-square dof {dof}: {e}")))?;
    Ok(dist.sf(stat))
}

/// Pearson goodness-of-fit test of observed counts against probabilities.
/// Returns `(statistic, p_value)`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<(f64, f64)> {
    crate::error::check_len("chi_square_gof", probs.len(), observed.len())?;
    if observed.len() < 2 {
        return Err(Error::InvalidConfig("goodness-of-fit needs at least two cells".into()));
    }
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    Ok((stat, chi_square_sf(stat, (observed.len() - 1) as f64)?))
}

/// Which way the first proportion is expected to deviate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

/// Result of a two-sample proportion test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample test of equal proportions with Yates' continuity correction,
/// following the usual `prop.test` conventions.
pub fn proportion_test(x1: u64, n1: u64, x2: u64, n2: u64, alternative: Alternative) -> Result<ProportionTest> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(Error::InvalidConfig(format!("invalid proportions {x1}/{n1}, {x2}/{n2}")));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let (p1, p2) = (x1 as f64 / n1f, x2 as f64 / n2f);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Ok(ProportionTest {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let diff = p1 - p2;
    let yates = (0.5 * (1.0 / n1f + 1.0 / n2f)).min(diff.abs());
    let var = pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f);
    let z = (diff.abs() - yates) / var.sqrt();
    let statistic = z * z;
    let p_value = match alternative {
        Alternative::TwoSided => chi_square_sf(statistic, 1.0)?,
        Alternative::Greater => 1.0 - normal_cdf(z * diff.signum()),
        Alternative::Less => normal_cdf(z * diff.signum()),
    };
    Ok(ProportionTest { statistic, p_value })
}

/// Least-squares slope with a normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: f64,
}

impl SlopeFit {
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.slope - z * self.std_error, self.slope + z * self.std_error)
    }
}

pub fn regression_slope(y: &[f64]) -> Result<SlopeFit> {
    let n = y.len();
    if n < 3 {
        return Err(Error::InvalidConfig("slope fit needs at least three points".into()));
    }
    let nf = n as f64;
    let xm = (nf - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = (0..n).map(|i| (i as f64 - xm).powi(2)).sum();
    let sxy: f64 = y.iter().enumerate().map(|(i, v)| (i as f64 - xm) * (v - ym)).sum();
    let slope = sxy / sxx;
    let sse: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| (v - ym - slope * (i as f64 - xm)).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        std_error: (sse / (nf - 2.0) / sxx).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 7.5, 3.25];
        let mut m = RunningMoments::new();
        xs.iter().for_each(|&x| m.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean() - mean).abs() < 1e-12);
        assert!((m.variance() - var).abs() < 1e-12);
        assert!((m.std_error() - (var / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn proportion_test_reference_value() {
        let t = proportion_test(12, 100, 0, 100, Alternative::TwoSided).unwrap();
        assert!((t.p_value - 0.001056).abs() < 5e-6, "{}", t.p_value);
        let g = proportion_test(12, 100, 0, 100, Alternative::Greater).unwrap();
        assert!((g.p_value - t.p_value / 2.0).abs() < 1e-9);
        let l = proportion_test(12, 100, 0, 100, Alternative::Less).unwrap();
        assert!(l.p_value > 0.99);
    }

    #[test]
    fn proportion_test_degenerate() {
        let t = proportion_test(0, 100, 0, 100, Alternative::Greater).unwrap();
        assert_eq!(t.p_value, 1.0);
        assert!(proportion_test(5, 0, 0, 1, Alternative::TwoSided).is_err());
    }

    #[test]
    fn chi_square_tail_known_value() {
        // P(X > 3.841459) = 0.05 for one degree of freedom.
        assert!((chi_square_sf(3.841459, 1.0).unwrap() - 0.05).abs() < 1e-6);
        let (_, p) = chi_square_gof(&[250, 250, 500], &[0.25, 0.25, 0.5]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slope_of_line_and_noise() {
        let line: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 1.0).collect();
        let fit = regression_slope(&line).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.std_error < 1e-9);
        let flat = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let (lo, hi) = regression_slope(&flat).unwrap().interval(1.96);
        assert!(lo < 0.0 && hi > 0.0);
    }
}
