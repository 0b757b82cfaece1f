//! Theta method: seasonality pretest, multiplicative classical decomposition,
//! and the standard two-line (theta = 0 / theta = 2) combination forecast.

use serde::{Deserialize, Serialize};

use crate::dataset::PERIOD;
use crate::error::{Error, Result};

/// Simple-exponential-smoothing alpha grid, also used by the theta=2 line.
pub const ALPHA_GRID_START: f64 = 0.05;
pub const ALPHA_GRID_STEP: f64 = 0.05;
pub const ALPHA_GRID_LEN: usize = 19;

/// 90% one-sided normal quantile used by the seasonality pretest.
const SEASONALITY_Z: f64 = 1.645;

/// Fitted theta model with everything needed to roll forward over new
/// observations without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaModel {
    /// The series the model was fitted on (contiguity reference).
    pub fitted: Vec<f64>,
    /// Multiplicative seasonal indices by month position, all 1.0 when the
    /// pretest found no seasonality.
    pub seasonal_indices: Vec<f64>,
    pub seasonal: bool,
    /// Linear trend of the theta=0 line on the deseasonalized scale.
    pub intercept: f64,
    pub slope: f64,
    /// SES state of the theta=2 line.
    pub alpha: f64,
    pub level: f64,
}

/// Autocorrelation of `values` at `lag` (mean-centered, lag-0 denominator).
fn autocorrelation(values: &[f64], lag: usize) -> f64 {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut denom = 0.0;
    for &v in values {
        denom += (v - mean) * (v - mean);
    }
    if denom <= f64::EPSILON {
        return 0.0;
    }
    let mut num = 0.0;
    for t in 0..n - lag {
        num += (values[t] - mean) * (values[t + lag] - mean);
    }
    num / denom
}

/// The 90% seasonality pretest on the lag-12 autocorrelation:
/// |r_12| > 1.645 * sqrt((1 + 2 * sum_{i=1..11} r_i^2) / n).
pub fn seasonality_pretest(values: &[f64]) -> bool {
    let n = values.len();
    if n < 2 * PERIOD {
        return false;
    }
    let r12 = autocorrelation(values, PERIOD);
    let mut sum_sq = 0.0;
    for lag in 1..PERIOD {
        let r = autocorrelation(values, lag);
        sum_sq += r * r;
    }
    let threshold = SEASONALITY_Z * ((1.0 + 2.0 * sum_sq) / n as f64).sqrt();
    r12.abs() > threshold
}

/// Centered 2x12 moving average; defined for t in PERIOD/2 .. n - PERIOD/2.
fn centered_ma(values: &[f64]) -> Vec<Option<f64>> {
    let n = values.len();
    let half = PERIOD / 2;
    let mut out = vec![None; n];
    for t in half..n.saturating_sub(half) {
        let mut acc = 0.5 * values[t - half] + 0.5 * values[t + half];
        acc += values[t - half + 1..t + half].iter().sum::<f64>();
        out[t] = Some(acc / PERIOD as f64);
    }
    out
}

/// Multiplicative seasonal indices normalized to mean 1. Falls back to a
/// flat profile when any trend value is too close to zero for a ratio.
fn multiplicative_indices(values: &[f64]) -> Vec<f64> {
    let ma = centered_ma(values);
    let mut sums = [0.0; PERIOD];
    let mut counts = [0usize; PERIOD];
    for (t, trend) in ma.iter().enumerate() {
        if let Some(m) = trend {
            if m.abs() <= f64::EPSILON {
                return vec![1.0; PERIOD];
            }
            sums[t % PERIOD] += values[t] / m;
            counts[t % PERIOD] += 1;
        }
    }
    let mut indices = vec![1.0; PERIOD];
    for m in 0..PERIOD {
        if counts[m] == 0 {
            return vec![1.0; PERIOD];
        }
        indices[m] = sums[m] / counts[m] as f64;
    }
    let total: f64 = indices.iter().sum();
    if total <= f64::EPSILON {
        return vec![1.0; PERIOD];
    }
    for idx in indices.iter_mut() {
        *idx *= PERIOD as f64 / total;
    }
    indices
}

/// Least-squares line through (t, x_t), t = 0..n-1.
fn linear_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut denom = 0.0;
    for (t, &v) in x.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (v - x_mean);
        denom += dt * dt;
    }
    let slope = if denom > 0.0 { num / denom } else { 0.0 };
    (x_mean - slope * t_mean, slope)
}

/// SES run over `values` with fixed `alpha`: returns (final level, one-step
/// in-sample SSE). The level starts at the first observation.
pub fn ses_run(values: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = values[0];
    let mut sse = 0.0;
    for &y in &values[1..] {
        let err = y - level;
        sse += err * err;
        level += alpha * err;
    }
    (level, sse)
}

fn best_alpha(values: &[f64]) -> (f64, f64) {
    let mut best = (ALPHA_GRID_START, f64::INFINITY);
    for i in 0..ALPHA_GRID_LEN {
        let alpha = ALPHA_GRID_START + ALPHA_GRID_STEP * i as f64;
        let (_, sse) = ses_run(values, alpha);
        if sse < best.1 {
            best = (alpha, sse);
        }
    }
    let (level, _) = ses_run(values, best.0);
    (best.0, level)
}

/// Fits the theta model on `values` (needs at least two full periods).
pub fn fit_theta(values: &[f64]) -> Result<ThetaModel> {
    if values.len() < 2 * PERIOD {
        return Err(Error::TooShort {
            what: "theta fit".into(),
            required: 2 * PERIOD,
            actual: values.len(),
        });
    }
    let seasonal = seasonality_pretest(values);
    let seasonal_indices = if seasonal {
        multiplicative_indices(values)
    } else {
        vec![1.0; PERIOD]
    };
    let deseasonalized: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(t, &y)| y / seasonal_indices[t % PERIOD])
        .collect();
    let (intercept, slope) = linear_fit(&deseasonalized);
    // theta=2 line: 2x_t - (theta=0 line).
    let theta2: Vec<f64> = deseasonalized
        .iter()
        .enumerate()
        .map(|(t, &x)| 2.0 * x - (intercept + slope * t as f64))
        .collect();
    let (alpha, level) = best_alpha(&theta2);
    Ok(ThetaModel {
        fitted: values.to_vec(),
        seasonal_indices,
        seasonal,
        intercept,
        slope,
        alpha,
        level,
    })
}

impl ThetaModel {
    /// Forecasts `horizon` steps from the end of `history`, which must start
    /// with the exact fitting data; any extra observations update the SES
    /// level of the theta=2 line without refitting trend or seasonality.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        if history.len() < self.fitted.len() || history[..self.fitted.len()] != self.fitted[..] {
            return Err(Error::NonContiguousHistory {
                fitted_len: self.fitted.len(),
                history_len: history.len(),
            });
        }
        let mut level = self.level;
        for (offset, &y) in history[self.fitted.len()..].iter().enumerate() {
            let t = self.fitted.len() + offset;
            let x = y / self.seasonal_indices[t % PERIOD];
            let z = 2.0 * x - (self.intercept + self.slope * t as f64);
            level += self.alpha * (z - level);
        }
        let n = history.len();
        let mut out = Vec::with_capacity(horizon);
        for j in 1..=horizon {
            let t = n - 1 + j;
            let trend = self.intercept + self.slope * t as f64;
            let combined = 0.5 * (trend + level);
            out.push(combined * self.seasonal_indices[t % PERIOD]);
        }
        Ok(out)
    }
}
