//! Augmented Dickey-Fuller stationarity test with an approximate MacKinnon
//! p-value for the constant/no-trend case.
//!
//! The regression is Δy_t = c + γ·y_{t-1} + Σ φ_i·Δy_{t-i} with the Schwert
//! lag order p = floor(12·(n/100)^0.25). The t-statistic of γ is mapped to a
//! p-value through MacKinnon's response-surface polynomials and clamped to
//! [0.001, 0.999] so callers never see a hard 0 or 1.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

use super::ols;

/// Lower clamp for the reported p-value.
pub const ADF_P_MIN: f64 = 0.001;
/// Upper clamp for the reported p-value.
pub const ADF_P_MAX: f64 = 0.999;

/// Below this t-statistic the small-p polynomial applies; above it the
/// large-p polynomial does (MacKinnon 1994, constant/no-trend case).
const TAU_STAR: f64 = -1.61;
/// Outside [TAU_MIN, TAU_MAX] the polynomials are unreliable; the p-value
/// saturates at the clamp boundaries instead.
const TAU_MIN: f64 = -18.83;
const TAU_MAX: f64 = 2.74;

/// Small-p polynomial coefficients (intercept, τ, τ²).
const SMALL_P: [f64; 3] = [2.1659, 1.4412, 0.038269];
/// Large-p polynomial coefficients (intercept, τ, τ², τ³).
const LARGE_P: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];

/// Schwert's rule for the number of lagged differences.
pub fn schwert_lag_order(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// MacKinnon approximate p-value for an ADF t-statistic (constant, no
/// trend), clamped to [ADF_P_MIN, ADF_P_MAX].
pub fn mackinnon_pvalue(tau: f64) -> f64 {
    if tau < TAU_MIN {
        return ADF_P_MIN;
    }
    if tau > TAU_MAX {
        return ADF_P_MAX;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = if tau <= TAU_STAR {
        SMALL_P[0] + SMALL_P[1] * tau + SMALL_P[2] * tau * tau
    } else {
        LARGE_P[0] + LARGE_P[1] * tau + LARGE_P[2] * tau * tau + LARGE_P[3] * tau * tau * tau
    };
    normal.cdf(z).clamp(ADF_P_MIN, ADF_P_MAX)
}

/// Approximate p-value of the ADF unit-root test. Small values reject the
/// unit root (the series looks stationary); values near 1 are consistent
/// with a random walk.
pub fn adf_pvalue(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 30 {
        return Err(Error::TooShort {
            what: "ADF test".into(),
            required: 30,
            actual: n,
        });
    }
    let p = schwert_lag_order(n);
    let dim = p + 2;
    // Row t regresses Δy_t on [1, y_{t-1}, Δy_{t-1}, ..., Δy_{t-p}]; the
    // deepest lagged difference reaches y_{t-p-1}.
    let first = p + 1;
    let rows_n = n - first;
    if rows_n <= dim {
        return Err(Error::TooShort {
            what: "ADF regression".into(),
            required: first + dim + 1,
            actual: n,
        });
    }
    let mut rows = Vec::with_capacity(rows_n);
    let mut y = Vec::with_capacity(rows_n);
    for t in first..n {
        let mut row = Vec::with_capacity(dim);
        row.push(1.0);
        row.push(values[t - 1]);
        for i in 1..=p {
            row.push(values[t - i] - values[t - i - 1]);
        }
        rows.push(row);
        y.push(values[t] - values[t - 1]);
    }
    let fit = ols::fit(&rows, &y, "ADF regression")?;
    let sigma2 = fit.sse / (rows_n - dim) as f64;
    let se = (sigma2 * fit.xtx_inverse[1][1]).sqrt();
    if se <= 0.0 || se.is_nan() {
        return Err(Error::SingularRegression {
            what: "ADF regression".into(),
        });
    }
    let tau = fit.coefficients[1] / se;
    if !tau.is_finite() {
        return Err(Error::NonFinite {
            primitive: "ADF t-statistic".into(),
        });
    }
    Ok(mackinnon_pvalue(tau))
}
