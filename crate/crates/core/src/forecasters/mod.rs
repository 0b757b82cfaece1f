//! Forecasting models: the three neural families plus the classical
//! baselines, unified behind one trait so the rolling-origin evaluator can
//! drive any of them.
//!
//! Every model forecasts from a `history` slice that must contain (and, for
//! the classical models, begin with) the data it was fitted on. Rolling
//! evaluation extends the history one observation at a time; classical
//! models advance their internal state over the extension instead of
//! refitting, and neural models read only the final input window.

pub mod ets;
pub mod network;
pub mod seasonal_naive;
pub mod theta;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ets::{fit_ets, EtsKind, EtsModel};
pub use network::{
    build_network, train_network, validation_loss, CnnConfig, EarlyStopPolicy, EarlyStopTracker,
    LstmConfig, NetworkConfig, NetworkSettings, NeuralForecaster, TcnConfig, TrainingMetadata,
};
pub use seasonal_naive::{fit_seasonal_naive, SeasonalNaiveModel};
pub use theta::{fit_theta, seasonality_pretest, ThetaModel};

/// Anything that can produce an h-step forecast from a series history.
pub trait Forecaster {
    /// Reporting name, e.g. "cnn_wot" or "theta".
    fn model_name(&self) -> &str;
    /// Forecasts `horizon` values following the end of `history`.
    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>>;
    /// Input window length for models that read a fixed window; classical
    /// models report 0.
    fn input_size(&self) -> usize {
        0
    }
}

/// The classical baseline families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalFamily {
    Theta,
    Ets,
    SeasonalNaive,
}

impl ClassicalFamily {
    pub fn name(self) -> &'static str {
        match self {
            ClassicalFamily::Theta => "theta",
            ClassicalFamily::Ets => "ets",
            ClassicalFamily::SeasonalNaive => "seasonal_naive",
        }
    }
}

/// A fitted classical baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ClassicalForecaster {
    Theta(ThetaModel),
    Ets(EtsModel),
    SeasonalNaive(SeasonalNaiveModel),
}

/// Fits one classical family on `values` (typically train + validation).
pub fn fit_classical(family: ClassicalFamily, values: &[f64]) -> Result<ClassicalForecaster> {
    Ok(match family {
        ClassicalFamily::Theta => ClassicalForecaster::Theta(fit_theta(values)?),
        ClassicalFamily::Ets => ClassicalForecaster::Ets(fit_ets(values)?),
        ClassicalFamily::SeasonalNaive => {
            ClassicalForecaster::SeasonalNaive(fit_seasonal_naive(values)?)
        }
    })
}

impl Forecaster for ClassicalForecaster {
    fn model_name(&self) -> &str {
        match self {
            ClassicalForecaster::Theta(_) => "theta",
            ClassicalForecaster::Ets(_) => "ets",
            ClassicalForecaster::SeasonalNaive(_) => "seasonal_naive",
        }
    }

    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        match self {
            ClassicalForecaster::Theta(m) => m.forecast(history, horizon),
            ClassicalForecaster::Ets(m) => m.forecast(history, horizon),
            ClassicalForecaster::SeasonalNaive(m) => m.forecast(history, horizon),
        }
    }
}

impl Forecaster for NeuralForecaster {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn input_size(&self) -> usize {
        self.config.input_size
    }

    /// Reads the final `input_size` observations of `history` as the input
    /// window; the horizon must match the one the network was built for.
    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        if horizon != self.config.horizon {
            return Err(Error::shape(
                "forecast",
                format!(
                    "requested horizon {horizon}, network predicts {}",
                    self.config.horizon
                ),
            ));
        }
        if history.len() < self.config.input_size {
            return Err(Error::TooShort {
                what: "forecast history".into(),
                required: self.config.input_size,
                actual: history.len(),
            });
        }
        self.predict(&history[history.len() - self.config.input_size..])
    }
}

/// Either kind of trained model, serializable as one artifact payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedForecaster {
    Neural(NeuralForecaster),
    Classical(ClassicalForecaster),
}

impl Forecaster for TrainedForecaster {
    fn model_name(&self) -> &str {
        match self {
            TrainedForecaster::Neural(m) => m.model_name(),
            TrainedForecaster::Classical(m) => m.model_name(),
        }
    }

    fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        match self {
            TrainedForecaster::Neural(m) => m.forecast(history, horizon),
            TrainedForecaster::Classical(m) => m.forecast(history, horizon),
        }
    }

    fn input_size(&self) -> usize {
        match self {
            TrainedForecaster::Neural(m) => m.input_size(),
            TrainedForecaster::Classical(_) => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seasonal_series(n: usize) -> Vec<f64> {
        (0..n)
            .map(|t| 100.0 + 2.0 * t as f64 + 15.0 * ((t % 12) as f64 - 5.5))
            .collect()
    }

    #[test]
    fn classical_families_dispatch_through_the_trait() {
        let values = seasonal_series(72);
        for family in [
            ClassicalFamily::Theta,
            ClassicalFamily::Ets,
            ClassicalFamily::SeasonalNaive,
        ] {
            let model = fit_classical(family, &values).unwrap();
            assert_eq!(model.model_name(), family.name());
            let fc = model.forecast(&values, 6).unwrap();
            assert_eq!(fc.len(), 6);
            assert!(fc.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn classical_models_round_trip_through_json() {
        let values = seasonal_series(60);
        let model = fit_classical(ClassicalFamily::Ets, &values).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ClassicalForecaster = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        assert_eq!(
            model.forecast(&values, 3).unwrap(),
            back.forecast(&values, 3).unwrap()
        );
    }

    #[test]
    fn neural_forecast_requires_matching_horizon_and_window() {
        use crate::dataset::fit_scaler;
        let config = NetworkConfig::new(
            6,
            3,
            NetworkSettings::Tcn(TcnConfig {
                kernel: 2,
                dilations: vec![1, 2, 4, 8],
                ..TcnConfig::default()
            }),
        );
        let net = build_network(&config, 17).unwrap();
        let fc = NeuralForecaster {
            model_name: "tcn".into(),
            config,
            network: net,
            scaler: fit_scaler::<f64>(&[1.0, 2.0]).unwrap(),
            metadata: TrainingMetadata {
                epochs_run: 0,
                best_epoch: 0,
                best_validation_loss: f64::INFINITY,
                seed: 17,
            },
        };
        assert!(fc.forecast(&[1.5; 10], 4).is_err());
        assert!(matches!(
            fc.forecast(&[1.5; 5], 3).unwrap_err(),
            Error::TooShort { .. }
        ));
        // Only the last window is read: identical tails forecast identically.
        let a = fc.forecast(&[1.5, 1.2, 1.8, 1.1, 1.9, 1.4, 1.6, 1.3], 3).unwrap();
        let b = fc.forecast(&[9.9, 9.9, 1.8, 1.1, 1.9, 1.4, 1.6, 1.3], 3).unwrap();
        assert_eq!(a, b);
    }
}
