//! Additive exponential smoothing with AICc candidate selection: simple
//! smoothing, Holt's linear trend, and Holt-Winters with a 12-month additive
//! season. Smoothing weights come from a fixed grid; candidates are compared
//! on a common residual window so their likelihoods are comparable.

use serde::{Deserialize, Serialize};

use crate::dataset::PERIOD;
use crate::error::{Error, Result};

use super::theta::{ALPHA_GRID_LEN, ALPHA_GRID_START, ALPHA_GRID_STEP};

/// Floor applied to residual sums of squares before taking logs.
const SSE_FLOOR: f64 = 1e-30;

/// Parameter counts entering the information criterion: smoothing weights,
/// initial states, and the innovation variance.
const K_SES: usize = 3;
const K_HOLT: usize = 5;
const K_HW: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtsKind {
    Ses,
    Holt,
    HoltWinters,
}

/// Selected smoothing model with its terminal state; rolls forward over new
/// observations without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsModel {
    /// The series the model was fitted on (contiguity reference).
    pub fitted: Vec<f64>,
    pub kind: EtsKind,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub level: f64,
    pub trend: f64,
    /// Additive seasonal ring indexed by `t % 12`; zeros except Holt-Winters.
    pub seasonals: Vec<f64>,
    /// AICc of the selected candidate on the common residual window.
    pub aicc: f64,
}

#[derive(Debug, Clone)]
struct SmoothState {
    level: f64,
    trend: f64,
    seasonals: Vec<f64>,
}

impl SmoothState {
    /// One-step prediction for time `t`, then state update with the
    /// observation `y`.
    fn step(&mut self, kind: EtsKind, t: usize, y: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
        let season = self.seasonals[t % PERIOD];
        let predicted = match kind {
            EtsKind::Ses => self.level,
            EtsKind::Holt => self.level + self.trend,
            EtsKind::HoltWinters => self.level + self.trend + season,
        };
        match kind {
            EtsKind::Ses => {
                self.level += alpha * (y - self.level);
            }
            EtsKind::Holt => {
                let prev_level = self.level;
                self.level = alpha * y + (1.0 - alpha) * (self.level + self.trend);
                self.trend = beta * (self.level - prev_level) + (1.0 - beta) * self.trend;
            }
            EtsKind::HoltWinters => {
                let prev_level = self.level;
                let prev_trend = self.trend;
                self.level =
                    alpha * (y - season) + (1.0 - alpha) * (self.level + self.trend);
                self.trend = beta * (self.level - prev_level) + (1.0 - beta) * prev_trend;
                self.seasonals[t % PERIOD] =
                    gamma * (y - prev_level - prev_trend) + (1.0 - gamma) * season;
            }
        }
        predicted
    }
}

/// Runs one candidate over `values`, accumulating squared one-step errors on
/// the common window `t in PERIOD..n`. Returns the terminal state and SSE.
fn run_candidate(
    values: &[f64],
    kind: EtsKind,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> (SmoothState, f64) {
    let mut state;
    let start;
    match kind {
        EtsKind::Ses => {
            state = SmoothState {
                level: values[0],
                trend: 0.0,
                seasonals: vec![0.0; PERIOD],
            };
            start = 1;
        }
        EtsKind::Holt => {
            state = SmoothState {
                level: values[0],
                trend: values[1] - values[0],
                seasonals: vec![0.0; PERIOD],
            };
            start = 1;
        }
        EtsKind::HoltWinters => {
            let first: f64 = values[..PERIOD].iter().sum::<f64>() / PERIOD as f64;
            let second: f64 = values[PERIOD..2 * PERIOD].iter().sum::<f64>() / PERIOD as f64;
            let seasonals: Vec<f64> = values[..PERIOD].iter().map(|&y| y - first).collect();
            state = SmoothState {
                level: first,
                trend: (second - first) / PERIOD as f64,
                seasonals,
            };
            start = PERIOD;
        }
    }
    let mut sse = 0.0;
    for (t, &y) in values.iter().enumerate().skip(start) {
        let predicted = state.step(kind, t, y, alpha, beta, gamma);
        if t >= PERIOD {
            let err = y - predicted;
            sse += err * err;
        }
    }
    (state, sse)
}

fn alpha_grid() -> impl Iterator<Item = f64> {
    (0..ALPHA_GRID_LEN).map(|i| ALPHA_GRID_START + ALPHA_GRID_STEP * i as f64)
}

/// AICc from a Gaussian one-step likelihood: n ln(SSE/n) + 2k + correction.
fn aicc(sse: f64, n_eff: usize, k: usize) -> f64 {
    let n = n_eff as f64;
    n * (sse.max(SSE_FLOOR) / n).ln() + 2.0 * k as f64
        + (2 * k * (k + 1)) as f64 / (n - k as f64 - 1.0)
}

/// Fits all applicable candidates and keeps the AICc winner. Needs at least
/// two full periods; Holt-Winters additionally requires enough residuals for
/// its correction term and is skipped otherwise.
pub fn fit_ets(values: &[f64]) -> Result<EtsModel> {
    let n = values.len();
    if n < 2 * PERIOD {
        return Err(Error::TooShort {
            what: "ets fit".into(),
            required: 2 * PERIOD,
            actual: n,
        });
    }
    let n_eff = n - PERIOD;
    let mut best: Option<EtsModel> = None;

    // Each candidate class picks its weights by in-sample SSE on the common
    // window; AICc with the class's parameter count does the final ranking.
    for (kind, k) in [
        (EtsKind::Ses, K_SES),
        (EtsKind::Holt, K_HOLT),
        (EtsKind::HoltWinters, K_HW),
    ] {
        if n_eff < k + 2 {
            continue;
        }
        let (alpha, beta, gamma) = class_winner(values, kind);
        let (state, sse) = run_candidate(values, kind, alpha, beta, gamma);
        let score = aicc(sse, n_eff, k);
        if best.as_ref().is_none_or(|b| score < b.aicc) {
            best = Some(EtsModel {
                fitted: values.to_vec(),
                kind,
                alpha,
                beta,
                gamma,
                level: state.level,
                trend: state.trend,
                seasonals: state.seasonals,
                aicc: score,
            });
        }
    }

    best.ok_or_else(|| Error::Empty {
        what: "ets candidates".into(),
        detail: "no candidate was admissible".into(),
    })
}

/// Grid search for one candidate class, minimizing SSE on the common window.
fn class_winner(values: &[f64], kind: EtsKind) -> (f64, f64, f64) {
    let mut winner = (ALPHA_GRID_START, 0.0, 0.0);
    let mut best_sse = f64::INFINITY;
    for alpha in alpha_grid() {
        let betas: Vec<f64> = match kind {
            EtsKind::Ses => vec![0.0],
            _ => alpha_grid().collect(),
        };
        for beta in betas {
            let gammas: Vec<f64> = match kind {
                EtsKind::HoltWinters => alpha_grid().collect(),
                _ => vec![0.0],
            };
            for gamma in gammas {
                let (_, sse) = run_candidate(values, kind, alpha, beta, gamma);
                if sse < best_sse {
                    best_sse = sse;
                    winner = (alpha, beta, gamma);
                }
            }
        }
    }
    winner
}

impl EtsModel {
    /// Forecasts `horizon` steps from the end of `history`, which must start
    /// with the exact fitting data; extra observations advance the smoothing
    /// state with the fitted weights.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        if history.len() < self.fitted.len() || history[..self.fitted.len()] != self.fitted[..] {
            return Err(Error::NonContiguousHistory {
                fitted_len: self.fitted.len(),
                history_len: history.len(),
            });
        }
        let mut state = SmoothState {
            level: self.level,
            trend: self.trend,
            seasonals: self.seasonals.clone(),
        };
        for (offset, &y) in history[self.fitted.len()..].iter().enumerate() {
            let t = self.fitted.len() + offset;
            state.step(self.kind, t, y, self.alpha, self.beta, self.gamma);
        }
        let n = history.len();
        let mut out = Vec::with_capacity(horizon);
        for j in 1..=horizon {
            let value = match self.kind {
                EtsKind::Ses => state.level,
                EtsKind::Holt => state.level + j as f64 * state.trend,
                EtsKind::HoltWinters => {
                    state.level + j as f64 * state.trend + state.seasonals[(n - 1 + j) % PERIOD]
                }
            };
            out.push(value);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ses_alpha_one_forecasts_last_observation() {
        let values: Vec<f64> = (0..30).map(|t| 5.0 + (t as f64 * 1.3).sin()).collect();
        let (state, _) = run_candidate(&values, EtsKind::Ses, 1.0, 0.0, 0.0);
        assert_eq!(state.level, *values.last().unwrap());
    }

    #[test]
    fn ses_state_update_moves_level_halfway() {
        // alpha 0.5, level 10, new observation 20 -> level 15, flat forecast.
        let fitted = vec![10.0; 24];
        let model = EtsModel {
            fitted: fitted.clone(),
            kind: EtsKind::Ses,
            alpha: 0.5,
            beta: 0.0,
            gamma: 0.0,
            level: 10.0,
            trend: 0.0,
            seasonals: vec![0.0; PERIOD],
            aicc: 0.0,
        };
        let mut history = fitted;
        history.push(20.0);
        let fc = model.forecast(&history, 2).unwrap();
        assert_eq!(fc, vec![15.0, 15.0]);
    }

    #[test]
    fn constant_series_selects_ses() {
        // Every candidate has zero residuals; the parameter penalty alone
        // decides, favoring the smallest class.
        let model = fit_ets(&vec![42.0; 60]).unwrap();
        assert_eq!(model.kind, EtsKind::Ses);
        let fc = model.forecast(&model.fitted.clone(), 3).unwrap();
        for v in fc {
            assert!((v - 42.0).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_trend_selects_holt() {
        let values: Vec<f64> = (0..60).map(|t| 10.0 + 2.0 * t as f64).collect();
        let model = fit_ets(&values).unwrap();
        assert_eq!(model.kind, EtsKind::Holt);
        let fc = model.forecast(&values, 3).unwrap();
        for (j, v) in fc.iter().enumerate() {
            let expect = 10.0 + 2.0 * (60 + j) as f64;
            assert!((v - expect).abs() < 1e-6, "step {j} got {v} want {expect}");
        }
    }

    #[test]
    fn additive_seasonal_series_selects_holt_winters() {
        let pattern = [8.0, -3.0, 5.0, -7.0, 2.0, 9.0, -4.0, 1.0, -6.0, 3.0, -2.0, -6.0];
        let values: Vec<f64> = (0..120)
            .map(|t| 100.0 + 0.5 * t as f64 + pattern[t % 12])
            .collect();
        let model = fit_ets(&values).unwrap();
        assert_eq!(model.kind, EtsKind::HoltWinters);
        // One cycle ahead reproduces the pattern around the trend.
        let fc = model.forecast(&values, 12).unwrap();
        for (j, v) in fc.iter().enumerate() {
            let t = 120 + j;
            let expect = 100.0 + 0.5 * t as f64 + pattern[t % 12];
            assert!(
                (v - expect).abs() / expect.abs() < 0.05,
                "step {j} got {v} want {expect}"
            );
        }
    }

    #[test]
    fn short_series_skips_holt_winters() {
        // n = 28 -> 16 residuals, below the 19 Holt-Winters needs.
        let pattern = [8.0, -3.0, 5.0, -7.0, 2.0, 9.0, -4.0, 1.0, -6.0, 3.0, -2.0, -6.0];
        let values: Vec<f64> = (0..28)
            .map(|t| 100.0 + 0.5 * t as f64 + pattern[t % 12])
            .collect();
        let model = fit_ets(&values).unwrap();
        assert_ne!(model.kind, EtsKind::HoltWinters);
    }

    #[test]
    fn aicc_penalizes_parameters() {
        let a = aicc(10.0, 50, 3);
        let b = aicc(10.0, 50, 5);
        assert!(a < b);
    }

    #[test]
    fn non_contiguous_history_is_rejected() {
        let values: Vec<f64> = (0..48).map(|t| 20.0 + (t % 12) as f64).collect();
        let model = fit_ets(&values).unwrap();
        let mut tampered = values.clone();
        tampered[0] += 0.5;
        assert!(matches!(
            model.forecast(&tampered, 2).unwrap_err(),
            Error::NonContiguousHistory { .. }
        ));
    }

    #[test]
    fn too_short_series_is_rejected() {
        assert!(matches!(
            fit_ets(&[1.0; 23]).unwrap_err(),
            Error::TooShort { .. }
        ));
    }

    #[test]
    fn holt_winters_seasonal_ring_advances_with_new_observations() {
        let pattern = [8.0, -3.0, 5.0, -7.0, 2.0, 9.0, -4.0, 1.0, -6.0, 3.0, -2.0, -6.0];
        let series: Vec<f64> = (0..132)
            .map(|t| 100.0 + 0.5 * t as f64 + pattern[t % 12])
            .collect();
        let model = fit_ets(&series[..120]).unwrap();
        assert_eq!(model.kind, EtsKind::HoltWinters);
        // Forecasting after 3 more observations shifts which month each step
        // lands on; step 1 from the longer history targets t = 123.
        let fc = model.forecast(&series[..123], 1).unwrap();
        let expect = 100.0 + 0.5 * 123.0 + pattern[123 % 12];
        assert!((fc[0] - expect).abs() / expect < 0.05, "got {} want {expect}", fc[0]);
    }
}
