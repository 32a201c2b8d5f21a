//! Time-series statistics over non-negative real series.
//!
//! Empty input yields 0, except `index_mass_quantile` and
//! `linear_trend_pvalue`, which yield 1.

use statrs::distribution::{ContinuousCDF, StudentsT};

fn sorted(series: &[f64]) -> Vec<f64> {
    let mut v = series.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation empirical quantile.
pub fn quantile(series: &[f64], q: f64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let v = sorted(series);
    let p = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = p.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = p - lo as f64;
    v[lo] + frac * (v[hi] - v[lo])
}

pub fn median(series: &[f64]) -> f64 {
    quantile(series, 0.5)
}

pub fn mean(series: &[f64]) -> f64 {
    if series.is_empty() {
        0.0
    } else {
        series.iter().sum::<f64>() / series.len() as f64
    }
}

/// Real part of the 0th DFT coefficient.
pub fn fft0_real(series: &[f64]) -> f64 {
    series.iter().sum()
}

/// Ricker wavelet of width `a` sampled at `points` integer positions
/// centred on `(points - 1) / 2`.
pub fn ricker(points: usize, a: f64) -> Vec<f64> {
    let amp = 2.0 / ((3.0 * a).sqrt() * std::f64::consts::PI.powf(0.25));
    let wsq = a * a;
    let centre = (points as f64 - 1.0) / 2.0;
    (0..points)
        .map(|i| {
            let t = i as f64 - centre;
            let t2 = t * t;
            amp * (1.0 - t2 / wsq) * (-t2 / (2.0 * wsq)).exp()
        })
        .collect()
}

/// First coefficient of the same-mode Ricker CWT at width `a`.
pub fn cwt_coeff0(series: &[f64], a: f64) -> f64 {
    let n = series.len();
    if n == 0 {
        return 0.0;
    }
    let m = ((10.0 * a) as usize).min(n).max(1);
    let w = ricker(m, a);
    let k = (m - 1) / 2;
    // full convolution z[k] = sum_j x[j] * w[k - j]
    (0..=k.min(n - 1)).map(|j| series[j] * w[k - j]).sum()
}

/// Chunk boundaries of `n` items split into `parts`, larger chunks first.
pub fn chunk_bounds(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Share of the squared sum falling in chunk `focus` of `segments` chunks.
pub fn energy_ratio_by_chunks(series: &[f64], segments: usize, focus: usize) -> f64 {
    let total: f64 = series.iter().map(|x| x * x).sum();
    if total == 0.0 || focus >= segments {
        return 0.0;
    }
    let (s, e) = chunk_bounds(series.len(), segments)[focus];
    series[s..e].iter().map(|x| x * x).sum::<f64>() / total
}

/// Relative index at which the cumulative mass first reaches `q`.
pub fn index_mass_quantile(series: &[f64], q: f64) -> f64 {
    let total: f64 = series.iter().map(|x| x.abs()).sum();
    if series.is_empty() || total == 0.0 {
        return 1.0;
    }
    let mut acc = 0.0;
    for (i, x) in series.iter().enumerate() {
        acc += x.abs();
        if acc / total >= q {
            return (i + 1) as f64 / series.len() as f64;
        }
    }
    1.0
}

/// Two-sided p-value of the OLS slope of `series` against its index.
pub fn linear_trend_pvalue(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 3 {
        return 1.0;
    }
    let nf = n as f64;
    let tbar = (nf - 1.0) / 2.0;
    let ybar = mean(series);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (i, y) in series.iter().enumerate() {
        let dt = i as f64 - tbar;
        let dy = y - ybar;
        sxx += dt * dt;
        sxy += dt * dy;
        syy += dy * dy;
    }
    if syy == 0.0 {
        return 1.0;
    }
    let slope = sxy / sxx;
    let ss_res: f64 = series
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let e = y - ybar - slope * (i as f64 - tbar);
            e * e
        })
        .sum();
    if ss_res <= syy * 1e-24 {
        return if slope == 0.0 { 1.0 } else { 0.0 };
    }
    let se = (ss_res / (nf - 2.0) / sxx).sqrt();
    let t = slope / se;
    let dist = StudentsT::new(0.0, 1.0, nf - 2.0).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0], 0.25), 0.75);
        assert_eq!(quantile(&[], 0.3), 0.0);
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.0), 1.0);
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 1.0), 3.0);
    }

    #[test]
    fn fft0_examples() {
        assert_eq!(fft0_real(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(fft0_real(&[]), 0.0);
        assert_eq!(fft0_real(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn cwt_examples() {
        assert_eq!(cwt_coeff0(&[0.0; 7], 5.0), 0.0);
        let one = cwt_coeff0(&[1.0], 2.0);
        assert!((one - 2.0 / (6f64.sqrt() * std::f64::consts::PI.powf(0.25))).abs() < 1e-12);
        assert!((one - 0.6133).abs() < 1e-4);
        assert!((cwt_coeff0(&[2.0], 2.0) - 2.0 * one).abs() < 1e-12);
        assert_eq!(cwt_coeff0(&[], 2.0), 0.0);
    }

    #[test]
    fn energy_examples() {
        assert!((energy_ratio_by_chunks(&[1.0; 10], 10, 0) - 0.1).abs() < 1e-15);
        let mut v = [0.0; 10];
        v[0] = 2.0;
        assert_eq!(energy_ratio_by_chunks(&v, 10, 0), 1.0);
        assert_eq!(energy_ratio_by_chunks(&[0.0; 4], 10, 0), 0.0);
        // fewer than ten items: chunk k holds item k
        assert_eq!(energy_ratio_by_chunks(&[1.0, 1.0, 2.0], 10, 2), 4.0 / 6.0);
        assert_eq!(energy_ratio_by_chunks(&[1.0, 1.0, 2.0], 10, 5), 0.0);
    }

    #[test]
    fn chunk_bounds_follow_remainder_rule() {
        assert_eq!(chunk_bounds(12, 10)[0], (0, 2));
        assert_eq!(chunk_bounds(12, 10)[1], (2, 4));
        assert_eq!(chunk_bounds(12, 10)[2], (4, 5));
        assert_eq!(chunk_bounds(3, 10)[4], (3, 3));
    }

    #[test]
    fn index_mass_examples() {
        assert_eq!(index_mass_quantile(&[1.0; 4], 0.5), 0.5);
        assert_eq!(index_mass_quantile(&[10.0, 0.0, 0.0, 0.0], 0.1), 0.25);
        assert_eq!(index_mass_quantile(&[0.0; 3], 0.1), 1.0);
        assert_eq!(index_mass_quantile(&[], 0.1), 1.0);
    }

    #[test]
    fn trend_examples() {
        assert_eq!(linear_trend_pvalue(&[0.0, 1.0, 2.0, 3.0]), 0.0);
        assert_eq!(linear_trend_pvalue(&[5.0; 4]), 1.0);
        assert_eq!(linear_trend_pvalue(&[1.0, 2.0]), 1.0);
        let p = linear_trend_pvalue(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(p > 0.0 && p < 1.0);
    }
}
