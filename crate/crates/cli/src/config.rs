//! Experiment configuration: one strict JSON document describing the whole
//! run, plus the canonical hash that keys resume bookkeeping.
//!
//! Parsing is deliberately unforgiving: unknown keys, missing input files,
//! unsupported horizons, or contradictory model entries all fail at load
//! time, before any compute is spent. Everything that influences the numbers
//! lives in this struct; `jobs` and the output location are the only fields
//! excluded from the hash, because they change where and how fast results
//! appear but never what they contain.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tsforge_core::dataset::{SeriesFormat, DEFAULT_VAL_LEN, SUPPORTED_HORIZONS};
use tsforge_core::forecasters::{
    ClassicalFamily, CnnConfig, EarlyStopPolicy, LstmConfig, NetworkSettings, TcnConfig,
};
use tsforge_core::transfer::FineTunePolicy;
use tsforge_core::{Error, Result};

/// Fine-tuning defaults from the transfer protocol: a learning rate four to
/// five orders of magnitude below pre-training, stopped early on validation
/// loss.
pub const DEFAULT_FINE_TUNE_LR: f64 = 5e-6;
pub const DEFAULT_PATIENCE: usize = 2;
pub const DEFAULT_MAX_EPOCHS: usize = 200;
pub const DEFAULT_CLUSTER_K: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// One model to benchmark. Neural families take an optional `transfer` flag
/// (default true); classical families must leave it unset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<bool>,
}

impl ModelEntry {
    pub fn is_neural(&self) -> bool {
        matches!(self.family.as_str(), "cnn" | "lstm" | "tcn")
    }

    pub fn is_classical(&self) -> bool {
        self.classical_family().is_some()
    }

    pub fn classical_family(&self) -> Option<ClassicalFamily> {
        match self.family.as_str() {
            "theta" => Some(ClassicalFamily::Theta),
            "ets" => Some(ClassicalFamily::Ets),
            "seasonal_naive" => Some(ClassicalFamily::SeasonalNaive),
            _ => None,
        }
    }

    /// Whether the neural entry warm-starts from the global model.
    pub fn with_transfer(&self) -> bool {
        self.transfer.unwrap_or(true)
    }

    /// Reporting name: bare family for transfer and classical models, the
    /// `_wot` suffix for from-scratch neural baselines.
    pub fn model_name(&self) -> String {
        if self.is_neural() && !self.with_transfer() {
            format!("{}_wot", self.family)
        } else {
            self.family.clone()
        }
    }

    /// Default architecture for the family at the given window and horizon.
    pub fn network_settings(&self) -> Result<NetworkSettings> {
        match self.family.as_str() {
            "cnn" => Ok(NetworkSettings::Cnn(CnnConfig::default())),
            "lstm" => Ok(NetworkSettings::Lstm(LstmConfig::default())),
            "tcn" => Ok(NetworkSettings::Tcn(TcnConfig::default())),
            other => Err(Error::invalid_config(format!(
                "'{other}' is not a neural family"
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.is_neural() {
            return Ok(());
        }
        if self.classical_family().is_none() {
            return Err(Error::invalid_config(format!(
                "unknown model family '{}'; expected cnn, lstm, tcn, theta, ets or seasonal_naive",
                self.family
            )));
        }
        if self.transfer.is_some() {
            return Err(Error::invalid_config(format!(
                "model family '{}' is classical; the 'transfer' flag only applies to cnn, lstm and tcn",
                self.family
            )));
        }
        Ok(())
    }
}

/// Early-stopping knobs for the pre-training phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSettings {
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        Self {
            patience: DEFAULT_PATIENCE,
            max_epochs: DEFAULT_MAX_EPOCHS,
        }
    }
}

impl PretrainSettings {
    pub fn policy(&self) -> EarlyStopPolicy {
        EarlyStopPolicy {
            patience: self.patience,
            restore_best: true,
            max_epochs: self.max_epochs,
        }
    }
}

/// Fine-tuning knobs: learning rate plus the same early-stopping shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTuneSettings {
    #[serde(default = "default_fine_tune_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
}

impl Default for FineTuneSettings {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_FINE_TUNE_LR,
            patience: DEFAULT_PATIENCE,
            max_epochs: DEFAULT_MAX_EPOCHS,
        }
    }
}

impl FineTuneSettings {
    pub fn policy(&self) -> FineTunePolicy {
        FineTunePolicy {
            learning_rate: self.learning_rate,
            early_stop: EarlyStopPolicy {
                patience: self.patience,
                restore_best: true,
                max_epochs: self.max_epochs,
            },
        }
    }
}

/// The whole experiment in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV files holding the source (pre-training) corpus.
    pub source: Vec<PathBuf>,
    /// CSV file holding the target series to adapt and evaluate on.
    pub target: PathBuf,
    /// Corpus layout of the input files.
    #[serde(default = "default_format")]
    pub format: SeriesFormat,
    /// Directory all artifacts are written into.
    pub output: PathBuf,
    /// Optional pre-computed forecast CSVs merged into the evaluation.
    #[serde(default)]
    pub external_forecasts: Vec<PathBuf>,
    /// Forecast horizons to benchmark; subset of {1, 3, 6, 12}.
    pub horizons: Vec<usize>,
    /// Model roster; at least one entry.
    pub models: Vec<ModelEntry>,
    /// Master seed every task seed derives from.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; affects speed only, never results.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Validation block length cut from the end of each training segment.
    #[serde(default = "default_validation_len")]
    pub validation_len: usize,
    /// Number of medoids for the target-series clustering.
    #[serde(default = "default_cluster_k")]
    pub cluster_k: usize,
    /// Significance level of the Friedman/Nemenyi analysis.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub fine_tune: FineTuneSettings,
    #[serde(default)]
    pub pretrain: PretrainSettings,
}

fn default_format() -> SeriesFormat {
    SeriesFormat::M4
}

fn default_jobs() -> usize {
    1
}

fn default_validation_len() -> usize {
    DEFAULT_VAL_LEN
}

fn default_cluster_k() -> usize {
    DEFAULT_CLUSTER_K
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_patience() -> usize {
    DEFAULT_PATIENCE
}

fn default_max_epochs() -> usize {
    DEFAULT_MAX_EPOCHS
}

fn default_fine_tune_lr() -> f64 {
    DEFAULT_FINE_TUNE_LR
}

impl ExperimentConfig {
    /// Checks every internal invariant and that all referenced input files
    /// exist. Called by `load_experiment_config`; call it again after
    /// overriding fields from the command line.
    pub fn validate(&self) -> Result<()> {
        if self.source.is_empty() {
            return Err(Error::invalid_config("'source' lists no corpus files"));
        }
        for path in self.source.iter().chain([&self.target]).chain(&self.external_forecasts) {
            if !path.is_file() {
                return Err(Error::invalid_config(format!(
                    "input file '{}' does not exist",
                    path.display()
                )));
            }
        }
        if self.horizons.is_empty() {
            return Err(Error::invalid_config("'horizons' is empty"));
        }
        let mut seen_h = BTreeSet::new();
        for &h in &self.horizons {
            if !SUPPORTED_HORIZONS.contains(&h) {
                return Err(Error::UnsupportedHorizon { horizon: h });
            }
            if !seen_h.insert(h) {
                return Err(Error::invalid_config(format!("horizon {h} listed twice")));
            }
        }
        if self.models.is_empty() {
            return Err(Error::invalid_config("'models' lists no families"));
        }
        let mut names = BTreeSet::new();
        for entry in &self.models {
            entry.validate()?;
            if !names.insert(entry.model_name()) {
                return Err(Error::invalid_config(format!(
                    "model '{}' listed twice",
                    entry.model_name()
                )));
            }
        }
        if self.jobs == 0 {
            return Err(Error::invalid_config("'jobs' must be at least 1"));
        }
        if self.validation_len == 0 {
            return Err(Error::invalid_config("'validation_len' must be at least 1"));
        }
        let max_h = *self.horizons.iter().max().expect("non-empty");
        if self.validation_len < max_h {
            return Err(Error::invalid_config(format!(
                "validation_len {} cannot hold a single horizon-{max_h} window",
                self.validation_len
            )));
        }
        if self.cluster_k < 2 {
            return Err(Error::ClusterCountOutOfRange {
                k: self.cluster_k,
                n: usize::MAX,
            });
        }
        let alpha_supported =
            (self.alpha - 0.05).abs() < 1e-12 || (self.alpha - 0.10).abs() < 1e-12;
        if !alpha_supported {
            return Err(Error::invalid_config(format!(
                "alpha {} unsupported; the studentized-range table covers 0.05 and 0.10",
                self.alpha
            )));
        }
        if self.fine_tune.learning_rate <= 0.0 || self.fine_tune.learning_rate.is_nan() {
            return Err(Error::invalid_config(
                "fine_tune.learning_rate must be positive",
            ));
        }
        Ok(())
    }

    /// Horizons in ascending order regardless of the order configured.
    pub fn sorted_horizons(&self) -> Vec<usize> {
        let mut hs = self.horizons.clone();
        hs.sort_unstable();
        hs
    }

    /// Neural entries in roster order.
    pub fn neural_entries(&self) -> Vec<&ModelEntry> {
        self.models.iter().filter(|m| m.is_neural()).collect()
    }

    /// SHA-256 over the canonical JSON form, with `jobs` and `output`
    /// neutralized: two configs that can only differ in parallelism or
    /// destination hash identically, so a finished run is recognized as
    /// finished wherever it is re-rooted.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.jobs = 1;
        canonical.output = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }
}

/// Lower-case hex of a digest.
pub fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Reads and validates one experiment config. The file must contain exactly
/// one JSON document; unknown keys and missing input files are errors.
pub fn load_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("config '{}'", path.display()), e))?;
    let config: ExperimentConfig = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        row: e.line(),
        column: e.column(),
        detail: format!("config '{}': {e}", path.display()),
    })?;
    config.validate()?;
    Ok(config)
}
