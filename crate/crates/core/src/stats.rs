//! Goodness-of-fit statistics and resampling helpers.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// One-sample Kolmogorov–Smirnov distance to a continuous `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("KS distance of an empty sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut sup = 0.0f64;
    for (k, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((k + 1) as f64 / n - f).max(f - k as f64 / n);
    }
    Ok(sup)
}

/// Two-sample Kolmogorov–Smirnov distance; ties are handled exactly.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("KS distance of an empty sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Pearson chi-square statistic and its upper-tail p-value with `k - 1`
/// degrees of freedom.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> Result<(f64, f64)> {
    if observed.is_empty() || observed.len() != expected.len() {
        return Err(invalid("observed and expected must be non-empty and equally long"));
    }
    if expected.iter().any(|&e| e <= 0.0 || !e.is_finite()) {
        return Err(invalid("expected counts must be positive"));
    }
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    if observed.len() == 1 {
        return Ok((stat, 1.0));
    }
    let dist = ChiSquared::new((observed.len() - 1) as f64).expect("positive degrees of freedom");
    Ok((stat, dist.sf(stat)))
}

/// `½ Σ |p - q|`, padding the shorter vector with zeros.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    (0..len)
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Empirical pmf of non-negative integer values on `0..len`.
pub fn empirical_pmf(values: &[u32], len: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; len];
    for &v in values {
        if (v as usize) < len {
            pmf[v as usize] += 1.0;
        }
    }
    let n = values.len() as f64;
    pmf.iter_mut().for_each(|p| *p /= n);
    pmf
}

/// Point estimate with a percentile bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
}

pub const DEFAULT_RESAMPLES: usize = 200;

/// Percentile bootstrap for a statistic of `n` observations.
///
/// `stat` receives the resampled indices; the point estimate uses `0..n`.
pub fn bootstrap<R, F>(n: usize, resamples: usize, rng: &mut R, mut stat: F) -> Estimate
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> f64,
{
    let identity: Vec<usize> = (0..n).collect();
    let value = stat(&identity);
    if n == 0 || resamples == 0 {
        return Estimate {
            value,
            ci_low: value,
            ci_high: value,
            std_error: 0.0,
        };
    }
    let mut idx = vec![0usize; n];
    let mut reps: Vec<f64> = (0..resamples)
        .map(|_| {
            idx.iter_mut().for_each(|k| *k = rng.random_range(0..n));
            stat(&idx)
        })
        .collect();
    let sd = if reps.len() > 1 { variance(&reps).sqrt() } else { 0.0 };
    reps.sort_by(f64::total_cmp);
    let q = |p: f64| reps[((p * (reps.len() - 1) as f64).round() as usize).min(reps.len() - 1)];
    Estimate {
        value,
        ci_low: q(0.025),
        ci_high: q(0.975),
        std_error: sd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::gumbel_cdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_point_mass() {
        let x = 0.3;
        let d = ks_distance(&[x; 5], gumbel_cdf).unwrap();
        let f = gumbel_cdf(x);
        assert!((d - f.max(1.0 - f)).abs() < 1e-15);
        assert!(ks_distance(&[], gumbel_cdf).is_err());
    }

    #[test]
    fn ks_shrinks_with_sample_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut draw = |n: usize| -> f64 {
            let xs: Vec<f64> = (0..n).map(|_| -(-rng.random::<f64>().ln()).ln()).collect();
            ks_distance(&xs, gumbel_cdf).unwrap()
        };
        let (a, b, c) = (draw(100), draw(10_000), draw(1_000_000));
        assert!(a > b && b > c, "{a} {b} {c}");
        assert!(c < 0.005);
    }

    #[test]
    fn two_sample_ties() {
        assert_eq!(ks_two_sample(&[1.0, 1.0], &[1.0]).unwrap(), 0.0);
        assert!((ks_two_sample(&[0.0, 1.0], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ks_two_sample(&[0.0], &[5.0]).unwrap(), 1.0);
    }

    #[test]
    fn chi_square_uniform_counts() {
        let (s, p) = chi_square(&[10, 10, 10], &[10.0; 3]).unwrap();
        assert_eq!(s, 0.0);
        assert_eq!(p, 1.0);
        let (s, p) = chi_square(&[30, 0, 0], &[10.0; 3]).unwrap();
        assert!((s - 60.0).abs() < 1e-12);
        assert!(p < 1e-12);
        assert!(chi_square(&[1], &[0.0]).is_err());
    }

    #[test]
    fn tv_and_moments() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0]), 0.5);
        assert!((variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert_eq!(empirical_pmf(&[0, 1, 1, 3], 3), vec![0.25, 0.5, 0.0]);
    }

    #[test]
    fn bootstrap_covers_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let est = bootstrap(xs.len(), DEFAULT_RESAMPLES, &mut rng, |idx| {
            idx.iter().map(|&k| xs[k]).sum::<f64>() / idx.len() as f64
        });
        assert!(est.ci_low < 0.5 && 0.5 < est.ci_high);
        assert!((est.std_error - (1.0 / 12.0 / 400.0f64).sqrt()).abs() < 0.005);
    }
}
