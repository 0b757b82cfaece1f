//! Series characterization and clustering: eight per-series features, a
//! column standardizer, PAM k-medoids, and cluster validity/profile
//! summaries.
//!
//! Clustering always runs on standardized features; profile tables always
//! report raw (unstandardized) means. Everything here is deterministic.

pub mod adf;
pub mod features;
mod ols;
pub mod pam;
pub mod quality;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adf::{adf_pvalue, mackinnon_pvalue, schwert_lag_order, ADF_P_MAX, ADF_P_MIN};
pub use features::{
    box_pierce, outlier_proportion, seasonal_strength, skewness_kurtosis, spectral_entropy,
    terasvirta_nonlinearity, BOX_PIERCE_LAGS,
};
pub use pam::{brute_force_cost, pam_cluster, ClusterAssignment};
pub use quality::{cluster_profiles, cluster_quality, ClusterQuality};

/// Number of per-series features.
pub const FEATURE_COUNT: usize = 8;

/// Column names, in feature-vector order, as written to every feature CSV.
/// `stacionarity` keeps its legacy spelling so downstream joins against
/// previously published tables stay stable.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "entropy",
    "season",
    "skewness",
    "kurtosis",
    "non_linear",
    "white_noise",
    "outliers",
    "stacionarity",
];

/// The eight characterization features for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub series_id: String,
    /// Normalized spectral entropy in [0, 1].
    pub entropy: f64,
    /// Strength of period-12 seasonality in [0, 1].
    pub season: f64,
    /// Population skewness.
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
    /// Teräsvirta nonlinearity statistic (n·R², nonnegative).
    pub non_linear: f64,
    /// Box-Pierce portmanteau statistic at 24 lags.
    pub white_noise: f64,
    /// Proportion of robustly flagged outliers in [0, 1].
    pub outliers: f64,
    /// ADF unit-root p-value in [0.001, 0.999]; small means stationary.
    pub stationarity: f64,
}

impl FeatureVector {
    /// Feature values in `FEATURE_NAMES` order.
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.entropy,
            self.season,
            self.skewness,
            self.kurtosis,
            self.non_linear,
            self.white_noise,
            self.outliers,
            self.stationarity,
        ]
    }
}

fn feature_failure<'a>(series: &'a str, feature: &'a str) -> impl Fn(Error) -> Error + 'a {
    move |source| Error::FeatureFailed {
        series: series.into(),
        feature: feature.into(),
        reason: source.to_string(),
    }
}

/// Computes all eight features for one series. Any sub-feature failure
/// converts to `FeatureFailed` naming the series and the feature, so
/// callers can exclude the series and report why.
pub fn compute_feature_vector(series_id: &str, values: &[f64]) -> Result<FeatureVector> {
    let entropy =
        spectral_entropy(values).map_err(feature_failure(series_id, "entropy"))?;
    let season =
        seasonal_strength(values).map_err(feature_failure(series_id, "season"))?;
    let (skewness, kurtosis) = skewness_kurtosis(values)
        .map_err(feature_failure(series_id, "skewness/kurtosis"))?;
    let non_linear = terasvirta_nonlinearity(values)
        .map_err(feature_failure(series_id, "non_linear"))?;
    let white_noise =
        box_pierce(values).map_err(feature_failure(series_id, "white_noise"))?;
    let outliers =
        outlier_proportion(values).map_err(feature_failure(series_id, "outliers"))?;
    let stationarity =
        adf_pvalue(values).map_err(feature_failure(series_id, "stacionarity"))?;
    Ok(FeatureVector {
        series_id: series_id.into(),
        entropy,
        season,
        skewness,
        kurtosis,
        non_linear,
        white_noise,
        outliers,
        stationarity,
    })
}

/// Standardizes every column to mean 0 and population standard deviation 1.
/// A zero-variance column is an error naming the offending feature, since a
/// constant column carries no clustering information and would divide by
/// zero.
pub fn standardize_features(matrix: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if matrix.is_empty() {
        return Err(Error::Empty {
            what: "feature matrix".into(),
            detail: "no rows to standardize".into(),
        });
    }
    let dim = matrix[0].len();
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::shape(
                "standardize_features",
                format!("row {i} has {} columns, expected {dim}", row.len()),
            ));
        }
    }
    let n = matrix.len() as f64;
    let mut out = matrix.to_vec();
    for j in 0..dim {
        let mean: f64 = matrix.iter().map(|r| r[j]).sum::<f64>() / n;
        let var: f64 = matrix.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= 1e-300 {
            let label = if dim == FEATURE_COUNT {
                FEATURE_NAMES[j].to_string()
            } else {
                format!("column {j}")
            };
            return Err(Error::ZeroVariance { what: label });
        }
        for row in out.iter_mut() {
            row[j] = (row[j] - mean) / sd;
        }
    }
    Ok(out)
}
