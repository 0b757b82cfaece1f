//! Seasonal naive baseline: each step repeats the observation from one
//! period earlier, so the forecast window slides through the last stored
//! cycle as new observations arrive.

use serde::{Deserialize, Serialize};

use crate::dataset::PERIOD;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalNaiveModel {
    /// The series the model was fitted on (contiguity reference).
    pub fitted: Vec<f64>,
    /// Last full cycle at fit time, oldest first.
    pub cycle: Vec<f64>,
}

/// Stores the final period of `values`.
pub fn fit_seasonal_naive(values: &[f64]) -> Result<SeasonalNaiveModel> {
    if values.len() < PERIOD {
        return Err(Error::TooShort {
            what: "seasonal naive fit".into(),
            required: PERIOD,
            actual: values.len(),
        });
    }
    Ok(SeasonalNaiveModel {
        fitted: values.to_vec(),
        cycle: values[values.len() - PERIOD..].to_vec(),
    })
}

impl SeasonalNaiveModel {
    /// Forecast step j repeats the observation at `t - 12`; new observations
    /// in `history` simply shift the window.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        if history.len() < self.fitted.len() || history[..self.fitted.len()] != self.fitted[..] {
            return Err(Error::NonContiguousHistory {
                fitted_len: self.fitted.len(),
                history_len: history.len(),
            });
        }
        let last_cycle = &history[history.len() - PERIOD..];
        Ok((0..horizon).map(|j| last_cycle[j % PERIOD]).collect())
    }
}
