//! Per-series characterization features.
//!
//! Each function takes a raw series slice and returns one scalar. The eight
//! features together summarize spectral flatness, seasonality, distribution
//! shape, nonlinearity, residual autocorrelation, outlier contamination, and
//! stationarity; `compute_feature_vector` in the parent module assembles
//! them. All computations are deterministic: same input bits, same output
//! bits.

use crate::error::{Error, Result};

use super::ols;

/// Monthly period shared by the seasonal features.
const PERIOD: usize = 12;

/// Lag count for the Box-Pierce statistic (two seasonal cycles).
pub const BOX_PIERCE_LAGS: usize = 24;

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn central_moment(values: &[f64], m: f64, order: u32) -> f64 {
    values
        .iter()
        .map(|&v| (v - m).powi(order as i32))
        .sum::<f64>()
        / values.len() as f64
}

fn check_length(what: &str, values: &[f64], required: usize) -> Result<()> {
    if values.len() < required {
        return Err(Error::TooShort {
            what: what.into(),
            required,
            actual: values.len(),
        });
    }
    Ok(())
}

/// Normalized spectral entropy of the periodogram, in [0, 1].
///
/// The periodogram is evaluated at the Fourier frequencies k/n for
/// k = 1..=n/2 after removing the mean, normalized to a discrete density,
/// and its Shannon entropy is divided by ln(m) so a flat spectrum (white
/// noise) scores near 1 and a pure tone scores near 0.
pub fn spectral_entropy(values: &[f64]) -> Result<f64> {
    check_length("spectral entropy", values, 2 * PERIOD)?;
    let n = values.len();
    let m = n / 2;
    let mu = mean(values);
    let mut power = Vec::with_capacity(m);
    let mut total = 0.0;
    for k in 1..=m {
        let omega = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (t, &v) in values.iter().enumerate() {
            let centered = v - mu;
            let angle = omega * t as f64;
            re += centered * angle.cos();
            im -= centered * angle.sin();
        }
        let p = re * re + im * im;
        power.push(p);
        total += p;
    }
    if total <= 1e-300 {
        return Err(Error::ConstantSeries {
            what: "spectral entropy".into(),
        });
    }
    let mut entropy = 0.0;
    for p in power {
        let density = p / total;
        if density > 0.0 {
            entropy -= density * density.ln();
        }
    }
    Ok(entropy / (m as f64).ln())
}

/// Classical multiplicative-free decomposition pieces shared by
/// `seasonal_strength` and `outlier_proportion`: detrended values and the
/// remainder after removing monthly means, both over the interior range
/// where the centered moving average is defined.
pub(crate) struct Decomposition {
    /// Detrended series y - T for t in 6..n-6.
    pub detrended: Vec<f64>,
    /// Remainder D - S over the same range.
    pub remainder: Vec<f64>,
}

pub(crate) fn decompose(values: &[f64]) -> Result<Decomposition> {
    check_length("seasonal decomposition", values, 2 * PERIOD)?;
    let n = values.len();
    let half = PERIOD / 2;
    // Centered 2x12 moving average: full weight on the 11 interior points,
    // half weight on the two endpoints of the 13-point window.
    let mut detrended = Vec::with_capacity(n - PERIOD);
    let mut months = Vec::with_capacity(n - PERIOD);
    for t in half..n - half {
        let mut acc = 0.5 * (values[t - half] + values[t + half]);
        for offset in 1..half {
            acc += values[t - offset] + values[t + offset];
        }
        acc += values[t];
        let trend = acc / PERIOD as f64;
        detrended.push(values[t] - trend);
        months.push(t % PERIOD);
    }
    // Seasonal component: monthly means of the detrended values, re-centered
    // so the season carries no level.
    let mut sums = [0.0f64; PERIOD];
    let mut counts = [0usize; PERIOD];
    for (&d, &m) in detrended.iter().zip(months.iter()) {
        sums[m] += d;
        counts[m] += 1;
    }
    let mut seasonal = [0.0f64; PERIOD];
    let mut represented = 0usize;
    for m in 0..PERIOD {
        if counts[m] > 0 {
            seasonal[m] = sums[m] / counts[m] as f64;
            represented += 1;
        }
    }
    let season_mean = seasonal.iter().sum::<f64>() / represented as f64;
    for s in seasonal.iter_mut() {
        *s -= season_mean;
    }
    let remainder = detrended
        .iter()
        .zip(months.iter())
        .map(|(&d, &m)| d - seasonal[m])
        .collect();
    Ok(Decomposition {
        detrended,
        remainder,
    })
}

/// Strength of period-12 seasonality in [0, 1]: one minus the variance ratio
/// of the decomposition remainder to the detrended series, floored at zero.
/// A series whose detrended variance is zero has nothing seasonal to explain
/// and scores 0 by convention.
pub fn seasonal_strength(values: &[f64]) -> Result<f64> {
    let parts = decompose(values)?;
    let d_mean = mean(&parts.detrended);
    let var_d = central_moment(&parts.detrended, d_mean, 2);
    if var_d <= 1e-300 {
        return Ok(0.0);
    }
    let r_mean = mean(&parts.remainder);
    let var_r = central_moment(&parts.remainder, r_mean, 2);
    Ok((1.0 - var_r / var_d).max(0.0))
}

/// Population skewness g1 = m3 / m2^1.5 and excess kurtosis g2 = m4 / m2^2 - 3.
pub fn skewness_kurtosis(values: &[f64]) -> Result<(f64, f64)> {
    check_length("skewness/kurtosis", values, 4)?;
    let mu = mean(values);
    let m2 = central_moment(values, mu, 2);
    if m2 <= 1e-300 {
        return Err(Error::ZeroVariance {
            what: "skewness/kurtosis".into(),
        });
    }
    let m3 = central_moment(values, mu, 3);
    let m4 = central_moment(values, mu, 4);
    Ok((m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0))
}

/// Teräsvirta-style neural network test for nonlinearity: n * R² of the
/// auxiliary regression of AR(2) residuals on the quadratic and cubic
/// products of the two lags. The series is standardized internally, which
/// both conditions the polynomial design and makes the statistic exactly
/// invariant to affine rescaling of the input.
///
/// Both regressions run as rank-tolerant projections: a noise-free
/// autoregression makes the lag columns exactly collinear, and a
/// deterministic polynomial map does the same to the product columns, yet
/// both remain legitimate inputs with well-defined statistics.
pub fn terasvirta_nonlinearity(values: &[f64]) -> Result<f64> {
    check_length("nonlinearity test", values, 30)?;
    let mu = mean(values);
    let sd = central_moment(values, mu, 2).sqrt();
    if sd <= 1e-300 {
        return Err(Error::ZeroVariance {
            what: "nonlinearity test".into(),
        });
    }
    let z: Vec<f64> = values.iter().map(|&v| (v - mu) / sd).collect();
    let rows_n = z.len() - 2;
    let mut base_rows = Vec::with_capacity(rows_n);
    let mut aux_rows = Vec::with_capacity(rows_n);
    let mut y = Vec::with_capacity(rows_n);
    for t in 2..z.len() {
        let l1 = z[t - 1];
        let l2 = z[t - 2];
        base_rows.push(vec![1.0, l1, l2]);
        aux_rows.push(vec![
            1.0,
            l1,
            l2,
            l1 * l1,
            l1 * l2,
            l2 * l2,
            l1 * l1 * l1,
            l1 * l1 * l2,
            l1 * l2 * l2,
            l2 * l2 * l2,
        ]);
        y.push(z[t]);
    }
    let base = ols::project(&base_rows, &y);
    // A perfect linear fit leaves nothing for the auxiliary stage to
    // explain; report zero directly rather than dividing by ~0.
    if base.sse <= rows_n as f64 * 1e-14 {
        return Ok(0.0);
    }
    // The residuals are orthogonal to the intercept, so their sum of
    // squares is also their total sum of squares about the mean.
    let aux = ols::project(&aux_rows, &base.residuals);
    let r_squared = 1.0 - aux.sse / base.sse;
    Ok(rows_n as f64 * r_squared.max(0.0))
}

/// Sample autocorrelation of `values` at `lag` (biased denominator).
fn autocorrelation(values: &[f64], mu: f64, denom: f64, lag: usize) -> f64 {
    let mut acc = 0.0;
    for t in lag..values.len() {
        acc += (values[t] - mu) * (values[t - lag] - mu);
    }
    acc / denom
}

/// Box-Pierce portmanteau statistic Q = n * sum of squared autocorrelations
/// at lags 1..=24. Large values flag serial correlation; white noise stays
/// below the chi-square(24) tail.
pub fn box_pierce(values: &[f64]) -> Result<f64> {
    check_length("Box-Pierce statistic", values, BOX_PIERCE_LAGS + 1)?;
    let n = values.len();
    let mu = mean(values);
    let denom: f64 = values.iter().map(|&v| (v - mu) * (v - mu)).sum();
    if denom <= 1e-300 {
        return Err(Error::ZeroVariance {
            what: "Box-Pierce statistic".into(),
        });
    }
    let mut q = 0.0;
    for lag in 1..=BOX_PIERCE_LAGS {
        let r = autocorrelation(values, mu, denom, lag);
        q += r * r;
    }
    Ok(n as f64 * q)
}

/// Proportion of observations flagged as outliers: points of the
/// decomposition remainder more than 3 robust standard deviations
/// (1.4826 * MAD) from the remainder median, divided by the full series
/// length. A remainder with zero MAD has no scale to test against and
/// yields 0 by convention.
pub fn outlier_proportion(values: &[f64]) -> Result<f64> {
    let parts = decompose(values)?;
    let mut sorted = parts.remainder.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite remainder"));
    let median = median_of_sorted(&sorted);
    let mut deviations: Vec<f64> = parts.remainder.iter().map(|&r| (r - median).abs()).collect();
    deviations.sort_by(|a, b| a.partial_cmp(b).expect("finite deviations"));
    let mad = median_of_sorted(&deviations);
    if mad <= 1e-300 {
        return Ok(0.0);
    }
    let threshold = 3.0 * 1.4826 * mad;
    let flags = parts
        .remainder
        .iter()
        .filter(|&&r| (r - median).abs() > threshold)
        .count();
    Ok(flags as f64 / values.len() as f64)
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller keeps the test free of a distributions dependency.
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| gaussian(&mut rng)).collect()
    }

    #[test]
    fn entropy_of_noise_is_high() {
        for seed in 0..20u64 {
            let h = spectral_entropy(&noise(seed, 400)).unwrap();
            assert!(h > 0.9, "seed {seed}: entropy {h}");
            assert!(h <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn entropy_of_pure_sinusoid_is_low() {
        let series: Vec<f64> = (0..120)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 12.0).sin())
            .collect();
        let h = spectral_entropy(&series).unwrap();
        assert!(h < 0.3, "entropy {h}");
    }

    #[test]
    fn entropy_rejects_constant_series() {
        let series = vec![5.0; 48];
        assert!(matches!(
            spectral_entropy(&series).unwrap_err(),
            Error::ConstantSeries { .. }
        ));
    }

    #[test]
    fn entropy_requires_two_periods() {
        assert!(matches!(
            spectral_entropy(&[1.0; 23]).unwrap_err(),
            Error::TooShort { .. }
        ));
    }

    #[test]
    fn seasonal_strength_detects_exact_seasonality_under_trend() {
        // Period-12 pattern on a linear trend: the centered moving average
        // removes the trend exactly, so the remainder is ~0.
        let pattern = [4.0, -1.0, 2.5, -3.0, 0.5, 1.0, -2.0, 3.0, -0.5, -1.5, -3.5, 0.5];
        let series: Vec<f64> = (0..120)
            .map(|t| 10.0 + 0.3 * t as f64 + pattern[t % 12])
            .collect();
        let s = seasonal_strength(&series).unwrap();
        assert!(s > 0.99, "strength {s}");
        assert!(s <= 1.0);
    }

    #[test]
    fn seasonal_strength_of_noise_is_low() {
        for seed in 100..120u64 {
            let s = seasonal_strength(&noise(seed, 240)).unwrap();
            assert!(s < 0.3, "seed {seed}: strength {s}");
        }
    }

    #[test]
    fn seasonal_strength_of_pure_line_is_zero() {
        // Detrended variance is exactly zero: convention says 0.
        let series: Vec<f64> = (0..60).map(|t| 2.0 + 0.5 * t as f64).collect();
        assert_eq!(seasonal_strength(&series).unwrap(), 0.0);
    }

    #[test]
    fn skewness_matches_hand_computed_value() {
        // [0,0,0,1]: m2 = 3/16, m3 = 3/32 -> g1 = 2/sqrt(3).
        let (g1, _) = skewness_kurtosis(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((g1 - 2.0 / 3.0f64.sqrt()).abs() < 1e-12, "g1 {g1}");
    }

    #[test]
    fn symmetric_series_has_zero_skewness() {
        let (g1, g2) = skewness_kurtosis(&[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        assert!(g1.abs() < 1e-12);
        // Uniform-like support is platykurtic.
        assert!(g2 < 0.0);
    }

    #[test]
    fn gaussian_sample_has_small_excess_kurtosis() {
        let sample = noise(7, 10_000);
        let (_, g2) = skewness_kurtosis(&sample).unwrap();
        assert!(g2.abs() < 0.2, "g2 {g2}");
    }

    #[test]
    fn skewness_rejects_constant_and_short_input() {
        assert!(matches!(
            skewness_kurtosis(&[3.0; 10]).unwrap_err(),
            Error::ZeroVariance { .. }
        ));
        assert!(matches!(
            skewness_kurtosis(&[1.0, 2.0, 3.0]).unwrap_err(),
            Error::TooShort { .. }
        ));
    }

    #[test]
    fn nonlinearity_of_exact_ar1_is_zero() {
        let mut series = vec![5.0];
        for t in 1..60 {
            series.push(0.8 * series[t - 1] + 0.3);
        }
        let stat = terasvirta_nonlinearity(&series).unwrap();
        assert!(stat < 1e-6, "stat {stat}");
    }

    #[test]
    fn nonlinearity_of_logistic_map_is_large() {
        let mut series = vec![0.37];
        for t in 1..200 {
            let prev = series[t - 1];
            series.push(4.0 * prev * (1.0 - prev));
        }
        let stat = terasvirta_nonlinearity(&series).unwrap();
        // 99th percentile of chi-square with 7 degrees of freedom.
        assert!(stat > 18.475, "stat {stat}");
    }

    #[test]
    fn nonlinearity_is_affine_invariant() {
        let base = noise(42, 120);
        let scaled: Vec<f64> = base.iter().map(|&v| 350.0 * v + 12_000.0).collect();
        let a = terasvirta_nonlinearity(&base).unwrap();
        let b = terasvirta_nonlinearity(&scaled).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn box_pierce_of_noise_stays_below_chi_square_tail() {
        // 99th percentile of chi-square with 24 degrees of freedom.
        let critical = 42.98;
        let mut below = 0;
        for seed in 200..220u64 {
            let q = box_pierce(&noise(seed, 500)).unwrap();
            if q < critical {
                below += 1;
            }
        }
        assert!(below >= 18, "{below}/20 below critical");
    }

    #[test]
    fn box_pierce_of_persistent_ar1_is_large() {
        for seed in 300..320u64 {
            let shocks = noise(seed, 500);
            let mut series = vec![shocks[0]];
            for t in 1..500 {
                series.push(0.9 * series[t - 1] + shocks[t]);
            }
            let q = box_pierce(&series).unwrap();
            assert!(q > 200.0, "seed {seed}: Q {q}");
        }
    }

    #[test]
    fn box_pierce_of_alternating_signs_is_at_least_n() {
        let series: Vec<f64> = (0..100).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let q = box_pierce(&series).unwrap();
        assert!(q >= 100.0, "Q {q}");
    }

    #[test]
    fn outlier_proportion_flags_exactly_the_injected_spike() {
        // Non-seasonal oscillation so the remainder keeps genuine spread;
        // one 10-sigma spike mid-series must be the only flag.
        let n = 120;
        let mut series: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 7.3).sin())
            .collect();
        let sd = {
            let mu = mean(&series);
            central_moment(&series, mu, 2).sqrt()
        };
        series[60] += 10.0 * sd;
        let p = outlier_proportion(&series).unwrap();
        assert!((p - 1.0 / n as f64).abs() < 1e-12, "proportion {p}");
    }

    #[test]
    fn outlier_proportion_of_clean_series_is_zero() {
        let series: Vec<f64> = (0..120)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 7.3).sin())
            .collect();
        assert_eq!(outlier_proportion(&series).unwrap(), 0.0);
    }

    #[test]
    fn outlier_proportion_with_degenerate_remainder_is_zero() {
        // Exact period-12 signal: the remainder is identically ~0, MAD = 0,
        // and the convention returns 0 rather than flagging float dust.
        let pattern = [4.0, -1.0, 2.5, -3.0, 0.5, 1.0, -2.0, 3.0, -0.5, -1.5, -3.5, 0.5];
        let series: Vec<f64> = (0..120).map(|t| 10.0 + pattern[t % 12]).collect();
        assert_eq!(outlier_proportion(&series).unwrap(), 0.0);
    }

    #[test]
    fn decomposition_requires_two_periods() {
        assert!(matches!(
            seasonal_strength(&[1.0; 23]).unwrap_err(),
            Error::TooShort { .. }
        ));
        assert!(matches!(
            outlier_proportion(&[1.0; 23]).unwrap_err(),
            Error::TooShort { .. }
        ));
    }
}
