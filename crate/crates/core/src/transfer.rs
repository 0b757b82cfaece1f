//! Transfer pipeline: assemble a pooled window corpus from many source
//! series, pre-train one global network per (family, input size, horizon),
//! then adapt it to each target series by fine-tuning only the dense output
//! head at a small learning rate.

use serde::{Deserialize, Serialize};

use crate::autodiff::Network;
use crate::dataset::{
    fit_scaler, make_supervised_windows, split_series, SupervisedWindowSet, TimeSeries,
};
use crate::error::{Error, Result};
use crate::forecasters::{
    build_network, train_network, EarlyStopPolicy, NetworkConfig, NeuralForecaster,
    TrainingMetadata,
};

/// Learning rate for head-only fine-tuning.
pub const FINE_TUNE_LEARNING_RATE: f64 = 5e-6;

/// Pooled, per-series-scaled supervised windows from the source dataset.
/// Rebuilt deterministically from the raw data, so never persisted.
#[derive(Debug, Clone)]
pub struct SourceCorpus {
    pub input_size: usize,
    pub horizon: usize,
    /// Training windows of every usable series, concatenated in input order.
    pub train: SupervisedWindowSet<f64>,
    /// Validation windows, same ordering.
    pub validation: SupervisedWindowSet<f64>,
    /// Number of series that contributed windows.
    pub series_count: usize,
    /// Ids of series that could not be split or windowed at this (w, h).
    pub skipped: Vec<String>,
}

/// Builds the pooled corpus. Each series is min-max scaled on its own
/// training segment before windowing, so magnitudes never leak across
/// series. Series too short for the split or the window geometry are
/// skipped and listed; an empty input or all-skipped input is an error.
pub fn assemble_source_corpus(
    series: &[TimeSeries<f64>],
    input_size: usize,
    horizon: usize,
    val_len: usize,
) -> Result<SourceCorpus> {
    if series.is_empty() {
        return Err(Error::Empty {
            what: "source series".into(),
            detail: "cannot assemble a corpus from zero series".into(),
        });
    }
    let mut train = SupervisedWindowSet::empty(input_size, horizon);
    let mut validation = SupervisedWindowSet::empty(input_size, horizon);
    let mut series_count = 0;
    let mut skipped = Vec::new();
    for ts in series {
        let windows = (|| -> Result<_> {
            let split = split_series(ts, val_len)?;
            let scaler = fit_scaler(&ts.values[split.train.clone()])?;
            let scaled = scaler.forward_train_slice(&ts.values);
            let tr = make_supervised_windows(&scaled, input_size, horizon, split.train)?;
            let va = make_supervised_windows(&scaled, input_size, horizon, split.validation)?;
            Ok((tr, va))
        })();
        match windows {
            Ok((tr, va)) => {
                train.extend(tr)?;
                validation.extend(va)?;
                series_count += 1;
            }
            Err(_) => skipped.push(ts.id.clone()),
        }
    }
    if series_count == 0 {
        return Err(Error::Empty {
            what: "source corpus".into(),
            detail: format!("all {} series were skipped", skipped.len()),
        });
    }
    Ok(SourceCorpus {
        input_size,
        horizon,
        train,
        validation,
        series_count,
        skipped,
    })
}

/// A network pre-trained on the pooled source corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalModel {
    pub config: NetworkConfig,
    pub network: Network<f64>,
    pub metadata: TrainingMetadata,
    pub series_count: usize,
}

/// Pre-trains one global network on the corpus at the family's configured
/// learning rate. `seed` drives both initialization and epoch shuffling.
pub fn pretrain_global(
    config: &NetworkConfig,
    corpus: &SourceCorpus,
    policy: &EarlyStopPolicy,
    seed: u64,
) -> Result<GlobalModel> {
    if config.input_size != corpus.input_size || config.horizon != corpus.horizon {
        return Err(Error::shape(
            "pretrain_global",
            format!(
                "network (w={}, h={}) vs corpus (w={}, h={})",
                config.input_size, config.horizon, corpus.input_size, corpus.horizon
            ),
        ));
    }
    let mut network = build_network(config, seed)?;
    let metadata = train_network(
        &mut network,
        &corpus.train,
        &corpus.validation,
        policy,
        config.learning_rate(),
        seed,
    )?;
    Ok(GlobalModel {
        config: config.clone(),
        network,
        metadata,
        series_count: corpus.series_count,
    })
}

/// How fine-tuning adapts the global model to one target series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineTunePolicy {
    pub learning_rate: f64,
    pub early_stop: EarlyStopPolicy,
}

impl Default for FineTunePolicy {
    fn default() -> Self {
        Self {
            learning_rate: FINE_TUNE_LEARNING_RATE,
            early_stop: EarlyStopPolicy::default(),
        }
    }
}

/// Windows one target series on its own scale.
fn target_windows(
    target: &TimeSeries<f64>,
    input_size: usize,
    horizon: usize,
    val_len: usize,
) -> Result<(
    crate::dataset::ScalerParams<f64>,
    SupervisedWindowSet<f64>,
    SupervisedWindowSet<f64>,
)> {
    let split = split_series(target, val_len)?;
    let scaler = fit_scaler(&target.values[split.train.clone()])?;
    let scaled = scaler.forward_train_slice(&target.values);
    let train = make_supervised_windows(&scaled, input_size, horizon, split.train)?;
    let validation = make_supervised_windows(&scaled, input_size, horizon, split.validation)?;
    Ok((scaler, train, validation))
}

/// Adapts a global model to `target`: copies the network, freezes every
/// parameter except the dense head, and trains on the target's own windows
/// at the fine-tune learning rate. A zero-epoch policy returns the global
/// weights untouched, paired with the target's scaler.
pub fn fine_tune_target(
    global: &GlobalModel,
    target: &TimeSeries<f64>,
    val_len: usize,
    policy: &FineTunePolicy,
    seed: u64,
) -> Result<NeuralForecaster> {
    let (scaler, train, validation) = target_windows(
        target,
        global.config.input_size,
        global.config.horizon,
        val_len,
    )?;
    let mut network = global.network.clone();
    network
        .params_mut()
        .freeze_all_except(&["head.weight", "head.bias"])?;
    let metadata = train_network(
        &mut network,
        &train,
        &validation,
        &policy.early_stop,
        policy.learning_rate,
        seed,
    )?;
    Ok(NeuralForecaster {
        model_name: global.config.family_name().to_string(),
        config: global.config.clone(),
        network,
        scaler,
        metadata,
    })
}

/// The no-transfer baseline: a fresh network of the same configuration
/// trained only on the target series, reported under the `_wot` suffix.
pub fn train_without_transfer(
    config: &NetworkConfig,
    target: &TimeSeries<f64>,
    val_len: usize,
    policy: &EarlyStopPolicy,
    seed: u64,
) -> Result<NeuralForecaster> {
    let (scaler, train, validation) =
        target_windows(target, config.input_size, config.horizon, val_len)?;
    let mut network = build_network(config, seed)?;
    let metadata = train_network(
        &mut network,
        &train,
        &validation,
        policy,
        config.learning_rate(),
        seed,
    )?;
    Ok(NeuralForecaster {
        model_name: format!("{}_wot", config.family_name()),
        config: config.clone(),
        network,
        scaler,
        metadata,
    })
}
