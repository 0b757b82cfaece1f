//! Neural forecaster families: configuration grids, network construction,
//! training with early stopping, and prediction on the original scale.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{mape_loss, Activation, AdamState, Network, Tape, Tensor};
use crate::dataset::{ScalerParams, SupervisedWindowSet};
use crate::error::{Error, Result};
use crate::seeding::derive_round;

/// Hidden-layer width options shared by conv filters and LSTM units.
pub const FILTER_GRID: [usize; 6] = [12, 36, 60, 84, 108, 132];
/// Convolution kernel-size options.
pub const KERNEL_GRID: [usize; 6] = [2, 4, 6, 8, 10, 12];
/// Pre-training learning-rate options.
pub const LEARNING_RATE_GRID: [f64; 3] = [1e-3, 1e-4, 1e-5];
/// TCN dilation schedules.
pub const DILATION_SETS: [&[usize]; 2] = [&[1, 2, 4, 8], &[1, 2, 4, 8, 16]];
/// Activation options ("linear" = identity).
pub const ACTIVATION_GRID: [Activation; 3] =
    [Activation::Identity, Activation::Relu, Activation::Tanh];

fn in_grid<T: PartialEq>(grid: &[T], value: &T) -> bool {
    grid.iter().any(|g| g == value)
}

/// CNN settings. Batch normalization always follows the first conv layer;
/// when pooling is enabled a width-2 max pool follows each activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub layers: usize,
    pub filters: usize,
    /// One kernel size per conv layer.
    pub kernels: Vec<usize>,
    pub pooling: bool,
    pub activation: Activation,
    pub learning_rate: f64,
}

impl Default for CnnConfig {
    /// Most frequent searched solution: 2 layers, 12 filters, kernels 12
    /// then 2, no pooling, tanh, learning rate 1e-4.
    fn default() -> Self {
        Self {
            layers: 2,
            filters: 12,
            kernels: vec![12, 2],
            pooling: false,
            activation: Activation::Tanh,
            learning_rate: 1e-4,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.layers > 2 {
            return Err(Error::invalid_config(format!(
                "cnn layers {} outside {{1, 2}}",
                self.layers
            )));
        }
        if self.kernels.len() != self.layers {
            return Err(Error::invalid_config(format!(
                "cnn has {} kernel sizes for {} layers",
                self.kernels.len(),
                self.layers
            )));
        }
        if !in_grid(&FILTER_GRID, &self.filters) {
            return Err(Error::invalid_config(format!(
                "cnn filters {} outside grid {FILTER_GRID:?}",
                self.filters
            )));
        }
        for &k in &self.kernels {
            if !in_grid(&KERNEL_GRID, &k) {
                return Err(Error::invalid_config(format!(
                    "cnn kernel {k} outside grid {KERNEL_GRID:?}"
                )));
            }
        }
        if !in_grid(&LEARNING_RATE_GRID, &self.learning_rate) {
            return Err(Error::invalid_config(format!(
                "cnn learning rate {} outside grid {LEARNING_RATE_GRID:?}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Every grid combination (kernel size chosen per layer).
    pub fn search_grid() -> Vec<Self> {
        let mut out = Vec::new();
        for layers in [1usize, 2] {
            for &filters in &FILTER_GRID {
                let kernel_combos: Vec<Vec<usize>> = match layers {
                    1 => KERNEL_GRID.iter().map(|&k| vec![k]).collect(),
                    _ => KERNEL_GRID
                        .iter()
                        .flat_map(|&k1| KERNEL_GRID.iter().map(move |&k2| vec![k1, k2]))
                        .collect(),
                };
                for kernels in kernel_combos {
                    for pooling in [false, true] {
                        for &activation in &ACTIVATION_GRID {
                            for &learning_rate in &LEARNING_RATE_GRID {
                                out.push(Self {
                                    layers,
                                    filters,
                                    kernels: kernels.clone(),
                                    pooling,
                                    activation,
                                    learning_rate,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// TCN settings: a stack of dilated causal conv layers, one per dilation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub filters: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub activation: Activation,
    pub return_sequences: bool,
    pub learning_rate: f64,
}

impl Default for TcnConfig {
    /// Most frequent searched solution: 12 filters, kernel 12, dilations
    /// [1,2,4,8,16], tanh, return_sequences false, learning rate 1e-3.
    fn default() -> Self {
        Self {
            filters: 12,
            kernel: 12,
            dilations: vec![1, 2, 4, 8, 16],
            activation: Activation::Tanh,
            return_sequences: false,
            learning_rate: 1e-3,
        }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<()> {
        if !in_grid(&FILTER_GRID, &self.filters) {
            return Err(Error::invalid_config(format!(
                "tcn filters {} outside grid {FILTER_GRID:?}",
                self.filters
            )));
        }
        if !in_grid(&KERNEL_GRID, &self.kernel) {
            return Err(Error::invalid_config(format!(
                "tcn kernel {} outside grid {KERNEL_GRID:?}",
                self.kernel
            )));
        }
        if !DILATION_SETS.contains(&self.dilations.as_slice()) {
            return Err(Error::invalid_config(format!(
                "tcn dilations {:?} outside {DILATION_SETS:?}",
                self.dilations
            )));
        }
        if !in_grid(&LEARNING_RATE_GRID, &self.learning_rate) {
            return Err(Error::invalid_config(format!(
                "tcn learning rate {} outside grid {LEARNING_RATE_GRID:?}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Receptive field of the stacked dilated causal convolutions:
    /// 1 + (kernel - 1) * sum(dilations).
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel - 1) * self.dilations.iter().sum::<usize>()
    }

    pub fn search_grid() -> Vec<Self> {
        let mut out = Vec::new();
        for &filters in &FILTER_GRID {
            for &kernel in &KERNEL_GRID {
                for dilations in DILATION_SETS {
                    for &activation in &ACTIVATION_GRID {
                        for return_sequences in [false, true] {
                            for &learning_rate in &LEARNING_RATE_GRID {
                                out.push(Self {
                                    filters,
                                    kernel,
                                    dilations: dilations.to_vec(),
                                    activation,
                                    return_sequences,
                                    learning_rate,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// LSTM settings. The configured activation is used for the candidate gate
/// and the cell-output transform; gates stay sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub units: usize,
    pub activation: Activation,
    pub return_sequences: bool,
    pub learning_rate: f64,
}

impl Default for LstmConfig {
    /// Most frequent searched solution: 84 units, relu, return_sequences
    /// true, learning rate 1e-3.
    fn default() -> Self {
        Self {
            units: 84,
            activation: Activation::Relu,
            return_sequences: true,
            learning_rate: 1e-3,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if !in_grid(&FILTER_GRID, &self.units) {
            return Err(Error::invalid_config(format!(
                "lstm units {} outside grid {FILTER_GRID:?}",
                self.units
            )));
        }
        if !in_grid(&LEARNING_RATE_GRID, &self.learning_rate) {
            return Err(Error::invalid_config(format!(
                "lstm learning rate {} outside grid {LEARNING_RATE_GRID:?}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn search_grid() -> Vec<Self> {
        let mut out = Vec::new();
        for &units in &FILTER_GRID {
            for &activation in &ACTIVATION_GRID {
                for return_sequences in [false, true] {
                    for &learning_rate in &LEARNING_RATE_GRID {
                        out.push(Self {
                            units,
                            activation,
                            return_sequences,
                            learning_rate,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Family-specific settings behind one tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NetworkSettings {
    Cnn(CnnConfig),
    Lstm(LstmConfig),
    Tcn(TcnConfig),
}

impl NetworkSettings {
    pub fn family_name(&self) -> &'static str {
        match self {
            NetworkSettings::Cnn(_) => "cnn",
            NetworkSettings::Lstm(_) => "lstm",
            NetworkSettings::Tcn(_) => "tcn",
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            NetworkSettings::Cnn(c) => c.learning_rate,
            NetworkSettings::Lstm(c) => c.learning_rate,
            NetworkSettings::Tcn(c) => c.learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NetworkSettings::Cnn(c) => c.validate(),
            NetworkSettings::Lstm(c) => c.validate(),
            NetworkSettings::Tcn(c) => c.validate(),
        }
    }
}

/// Complete description of one neural forecaster: family settings plus the
/// (input window, horizon) it is built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub horizon: usize,
    pub settings: NetworkSettings,
}

impl NetworkConfig {
    pub fn new(input_size: usize, horizon: usize, settings: NetworkSettings) -> Self {
        Self {
            input_size,
            horizon,
            settings,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::invalid_config("input size must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid_config("horizon must be >= 1"));
        }
        self.settings.validate()
    }

    pub fn family_name(&self) -> &'static str {
        self.settings.family_name()
    }

    pub fn learning_rate(&self) -> f64 {
        self.settings.learning_rate()
    }
}

/// Builds the untrained network for `config`, seeding every weight draw from
/// `seed`. The dense output head is always the last layer and is named
/// `head` — the transfer-tuning target.
pub fn build_network(config: &NetworkConfig, seed: u64) -> Result<Network<f64>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new();
    let w = config.input_size;
    let h = config.horizon;

    match &config.settings {
        NetworkSettings::Cnn(cfg) => {
            let mut in_channels = 1;
            for (li, &kernel) in cfg.kernels.iter().enumerate() {
                net.add_conv1d(
                    &format!("conv{}", li + 1),
                    in_channels,
                    cfg.filters,
                    kernel,
                    1,
                    &mut rng,
                );
                if li == 0 {
                    net.add_batch_norm("bn1", cfg.filters);
                }
                net.add_activation(cfg.activation);
                if cfg.pooling {
                    net.add_max_pool2();
                }
                in_channels = cfg.filters;
            }
            net.add_flatten();
        }
        NetworkSettings::Tcn(cfg) => {
            let mut in_channels = 1;
            for (li, &dilation) in cfg.dilations.iter().enumerate() {
                net.add_conv1d(
                    &format!("tcn{}", li + 1),
                    in_channels,
                    cfg.filters,
                    cfg.kernel,
                    dilation,
                    &mut rng,
                );
                net.add_activation(cfg.activation);
                in_channels = cfg.filters;
            }
            if cfg.return_sequences {
                net.add_flatten();
            } else {
                net.add_select_last();
            }
        }
        NetworkSettings::Lstm(cfg) => {
            net.add_lstm("lstm", 1, cfg.units, cfg.activation, &mut rng);
            if cfg.return_sequences {
                net.add_flatten();
            } else {
                net.add_select_last();
            }
        }
    }

    let (features, time) = net.output_shape(1, w)?;
    debug_assert_eq!(time, 1);
    net.add_dense("head", features, h, &mut rng);
    net.output_shape(1, w)?;
    Ok(net)
}

/// Early-stopping policy: halt after `patience` consecutive epochs without
/// strict validation improvement, optionally restoring the best snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopPolicy {
    pub patience: usize,
    pub restore_best: bool,
    pub max_epochs: usize,
}

impl Default for EarlyStopPolicy {
    fn default() -> Self {
        Self {
            patience: 2,
            restore_best: true,
            max_epochs: 200,
        }
    }
}

/// Tracks the early-stopping state across epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopTracker {
    best_loss: f64,
    best_epoch: usize,
    streak: usize,
    patience: usize,
}

impl EarlyStopTracker {
    /// `baseline` is the validation loss before any training epoch; the
    /// best snapshot can therefore fall back to the untouched model.
    pub fn new(patience: usize, baseline: f64) -> Self {
        Self {
            best_loss: baseline,
            best_epoch: 0,
            streak: 0,
            patience,
        }
    }

    /// Observes one epoch's validation loss. Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.streak = 0;
            (true, false)
        } else {
            self.streak += 1;
            (false, self.streak >= self.patience)
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub seed: u64,
}

/// Mean MAPE loss of the network over a window set (inference mode).
pub fn validation_loss(network: &Network<f64>, windows: &SupervisedWindowSet<f64>) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let mut total = 0.0;
    for (input, target) in windows.inputs.iter().zip(windows.targets.iter()) {
        let out = network.forward(&Tensor::from_series(input))?;
        let (loss, _) = mape_loss(out.data(), target)?;
        total += loss;
    }
    Ok(total / windows.len() as f64)
}

/// Trains `network` in place on already-scaled windows: batch size 1, MAPE
/// loss, Adam, per-epoch seeded shuffle, patience-based early stopping with
/// best-snapshot restore. Returns the run's metadata.
pub fn train_network(
    network: &mut Network<f64>,
    train: &SupervisedWindowSet<f64>,
    validation: &SupervisedWindowSet<f64>,
    policy: &EarlyStopPolicy,
    learning_rate: f64,
    seed: u64,
) -> Result<TrainingMetadata> {
    if train.is_empty() {
        return Err(Error::Empty {
            what: "training windows".into(),
            detail: "train_network needs at least one window".into(),
        });
    }
    if validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    if train.input_size != validation.input_size || train.horizon != validation.horizon {
        return Err(Error::shape(
            "train_network",
            format!(
                "train (w={}, h={}) vs validation (w={}, h={})",
                train.input_size, train.horizon, validation.input_size, validation.horizon
            ),
        ));
    }

    let mut adam = AdamState::new(learning_rate, network.params());
    let mut tape = Tape::new();
    let baseline = validation_loss(network, validation)?;
    if !baseline.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut tracker = EarlyStopTracker::new(policy.patience, baseline);
    let mut best_snapshot = network.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;

    network.set_training(true);
    for epoch in 1..=policy.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_round(seed, epoch as u64));
        order.shuffle(&mut rng);
        for &idx in &order {
            let input = Tensor::from_series(&train.inputs[idx]);
            let step = (|| -> Result<()> {
                let out = network.forward_train(&input, &mut tape)?;
                let (_, grad) = mape_loss(out.data(), &train.targets[idx])?;
                network.zero_grad();
                network.backward(&mut tape, &Tensor::column(&grad))?;
                adam.step(network.params_mut())
            })();
            if let Err(err) = step {
                network.set_training(false);
                return Err(match err {
                    Error::NonFinite { .. } => Error::Divergence { epoch },
                    other => other,
                });
            }
        }
        epochs_run = epoch;

        let val = match validation_loss(network, validation) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                network.set_training(false);
                return Err(Error::Divergence { epoch });
            }
            Err(other) => {
                network.set_training(false);
                return Err(other);
            }
        };
        if !val.is_finite() {
            network.set_training(false);
            return Err(Error::Divergence { epoch });
        }
        let (improved, stop) = tracker.observe(epoch, val);
        if improved {
            best_snapshot = network.clone();
        }
        if stop {
            break;
        }
    }
    network.set_training(false);

    if policy.restore_best {
        *network = best_snapshot;
        network.set_training(false);
    }
    Ok(TrainingMetadata {
        epochs_run,
        best_epoch: tracker.best_epoch(),
        best_validation_loss: tracker.best_loss(),
        seed,
    })
}

/// A trained neural forecaster bound to one series' scaler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeuralForecaster {
    /// Reporting name, e.g. "cnn" or "cnn_wot".
    pub model_name: String,
    pub config: NetworkConfig,
    pub network: Network<f64>,
    pub scaler: ScalerParams<f64>,
    pub metadata: TrainingMetadata,
}

impl NeuralForecaster {
    /// Forecasts `horizon` values on the original scale from an input window
    /// of exactly `input_size` observations.
    pub fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() != self.config.input_size {
            return Err(Error::shape(
                "predict_network",
                format!(
                    "window length {} for input size {}",
                    window.len(),
                    self.config.input_size
                ),
            ));
        }
        let scaled = self.scaler.forward_train_slice(window);
        let out = self.network.forward(&Tensor::from_series(&scaled))?;
        Ok(self.scaler.inverse_train_slice(out.data()))
    }
}
