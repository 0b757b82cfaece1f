//! Chain-structured network executor: named parameters, layer stack, taped
//! forward pass and exact reverse pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

use super::ops::{
    batch_norm_backward, batch_norm_forward, batch_norm_update_stats, conv1d_backward,
    conv1d_forward, dense_backward, dense_forward, lstm_backward, lstm_forward, max_pool2_backward,
    max_pool2_forward, Activation, LstmTrace,
};
use super::tensor::Tensor;

/// Batch-normalization epsilon, fixed for every layer.
pub const BATCH_NORM_EPS: f64 = 1e-3;
/// EMA momentum for batch-normalization running statistics.
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;

/// One named parameter tensor with its gradient accumulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: Serialize",
    deserialize = "F: serde::de::DeserializeOwned"
))]
pub struct Parameter<F: Scalar> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
    #[serde(skip)]
    pub grad: Vec<F>,
    pub frozen: bool,
}

impl<F: Scalar> Parameter<F> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: Serialize",
    deserialize = "F: serde::de::DeserializeOwned"
))]
pub struct ParameterSet<F: Scalar> {
    params: Vec<Parameter<F>>,
}

impl<F: Scalar> ParameterSet<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Registers a parameter and returns its index. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<F>) -> usize {
        let name = name.into();
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "parameter '{name}' data does not match shape"
        );
        assert!(
            self.index_of(&name).is_none(),
            "duplicate parameter name '{name}'"
        );
        let grad = vec![F::zero(); data.len()];
        self.params.push(Parameter {
            name,
            shape,
            data,
            grad,
            frozen: false,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: usize) -> &Parameter<F> {
        &self.params[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Parameter<F> {
        &mut self.params[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<F>> {
        self.params.iter_mut()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<F>> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<()> {
        match self.params.iter_mut().find(|p| p.name == name) {
            Some(p) => {
                p.frozen = frozen;
                Ok(())
            }
            None => Err(Error::UnknownParameter {
                name: name.to_string(),
            }),
        }
    }

    /// Freezes every parameter except the listed ones. Every listed name
    /// must exist.
    pub fn freeze_all_except(&mut self, keep: &[&str]) -> Result<()> {
        for name in keep {
            if self.index_of(name).is_none() {
                return Err(Error::UnknownParameter {
                    name: (*name).to_string(),
                });
            }
        }
        for p in self.params.iter_mut() {
            p.frozen = !keep.contains(&p.name.as_str());
        }
        Ok(())
    }

    /// Zeroes (and, after deserialization, re-sizes) all gradient buffers.
    pub fn zero_grad(&mut self) {
        for p in self.params.iter_mut() {
            if p.grad.len() != p.data.len() {
                p.grad = vec![F::zero(); p.data.len()];
            } else {
                for g in p.grad.iter_mut() {
                    *g = F::zero();
                }
            }
        }
    }

    /// Removes the gradient buffer of a trainable parameter for in-place
    /// accumulation; `None` for frozen parameters.
    fn take_grad(&mut self, id: usize) -> Option<Vec<F>> {
        let p = &mut self.params[id];
        if p.frozen {
            return None;
        }
        if p.grad.len() != p.data.len() {
            p.grad = vec![F::zero(); p.data.len()];
        }
        Some(std::mem::take(&mut p.grad))
    }

    fn put_grad(&mut self, id: usize, grad: Option<Vec<F>>) {
        if let Some(g) = grad {
            self.params[id].grad = g;
        }
    }
}

/// One layer of the chain. Parameterized layers hold indices into the
/// network's [`ParameterSet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(
    bound(
        serialize = "F: Serialize",
        deserialize = "F: serde::de::DeserializeOwned"
    ),
    tag = "layer",
    rename_all = "snake_case"
)]
pub enum Layer<F: Scalar> {
    Dense {
        weight: usize,
        bias: usize,
        in_dim: usize,
        out_dim: usize,
    },
    Conv1d {
        weight: usize,
        bias: usize,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        dilation: usize,
    },
    Lstm {
        kernel: usize,
        recurrent: usize,
        bias: usize,
        input_dim: usize,
        units: usize,
        activation: Activation,
    },
    BatchNorm {
        gamma: usize,
        beta: usize,
        channels: usize,
        running_mean: Vec<F>,
        running_var: Vec<F>,
    },
    Activation {
        kind: Activation,
    },
    MaxPool2,
    SelectLast,
    Flatten,
    Mean,
}

impl<F: Scalar> Layer<F> {
    pub fn primitive_name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv1d { .. } => "conv1d",
            Layer::Lstm { .. } => "lstm",
            Layer::BatchNorm { .. } => "batch_norm",
            Layer::Activation { kind } => kind.name(),
            Layer::MaxPool2 => "max_pool2",
            Layer::SelectLast => "select_last",
            Layer::Flatten => "flatten",
            Layer::Mean => "mean",
        }
    }
}

/// Saved forward-pass state, one record per layer.
#[derive(Debug)]
enum Record<F: Scalar> {
    Dense { input: Vec<F> },
    Conv1d { input: Tensor<F> },
    Lstm { input: Tensor<F>, trace: LstmTrace<F> },
    BatchNorm { xhat: Tensor<F> },
    Activation { output: Tensor<F> },
    MaxPool2 { argmax: Vec<usize>, in_channels: usize, in_time: usize },
    SelectLast { in_time: usize },
    Flatten { channels: usize, time: usize },
    Mean { channels: usize, time: usize },
}

/// Recording of one forward pass, consumable by exactly one backward pass.
#[derive(Debug, Default)]
pub struct Tape<F: Scalar> {
    records: Vec<Record<F>>,
    consumed: bool,
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            consumed: false,
        }
    }
}

/// A sequential network: layer stack plus its parameter set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: Serialize",
    deserialize = "F: serde::de::DeserializeOwned"
))]
pub struct Network<F: Scalar> {
    layers: Vec<Layer<F>>,
    params: ParameterSet<F>,
    #[serde(skip)]
    training: bool,
}

/// Glorot (Xavier) uniform draw: U(-limit, limit), limit = sqrt(6/(fan_in+fan_out)).
fn glorot_uniform<F: Scalar>(
    rng: &mut impl Rng,
    fan_in: usize,
    fan_out: usize,
    len: usize,
) -> Vec<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len)
        .map(|_| c::<F>(limit * (2.0 * rng.gen::<f64>() - 1.0)))
        .collect()
}

impl<F: Scalar> Network<F> {
    pub fn new() -> Self {
        Self {
            layers: Vec::new(),
            params: ParameterSet::new(),
            training: false,
        }
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn params(&self) -> &ParameterSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<F> {
        &mut self.params
    }

    /// Enables running-statistic updates in batch-norm layers during
    /// [`Network::forward_train`]. Off by default (inference semantics).
    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn zero_grad(&mut self) {
        self.params.zero_grad();
    }

    // -- builders ----------------------------------------------------------

    /// Dense layer `out_dim x in_dim`; parameters `{name}.weight` (Glorot
    /// uniform) and `{name}.bias` (zeros).
    pub fn add_dense(&mut self, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) {
        let weight = self.params.add(
            format!("{name}.weight"),
            vec![out_dim, in_dim],
            glorot_uniform(rng, in_dim, out_dim, out_dim * in_dim),
        );
        let bias = self
            .params
            .add(format!("{name}.bias"), vec![out_dim], vec![F::zero(); out_dim]);
        self.layers.push(Layer::Dense {
            weight,
            bias,
            in_dim,
            out_dim,
        });
    }

    /// Causal 1-D convolution; parameters `{name}.weight`
    /// `[filters, in_channels, kernel]` (Glorot uniform over the receptive
    /// field) and `{name}.bias` (zeros).
    pub fn add_conv1d(
        &mut self,
        name: &str,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) {
        let fan_in = in_channels * kernel;
        let fan_out = filters * kernel;
        let weight = self.params.add(
            format!("{name}.weight"),
            vec![filters, in_channels, kernel],
            glorot_uniform(rng, fan_in, fan_out, filters * in_channels * kernel),
        );
        let bias = self
            .params
            .add(format!("{name}.bias"), vec![filters], vec![F::zero(); filters]);
        self.layers.push(Layer::Conv1d {
            weight,
            bias,
            in_channels,
            filters,
            kernel,
            dilation,
        });
    }

    /// LSTM over the whole sequence; parameters `{name}.kernel`
    /// `[4*units, input_dim]`, `{name}.recurrent` `[4*units, units]` (both
    /// Glorot uniform) and `{name}.bias` (zeros with forget-gate block +1).
    pub fn add_lstm(
        &mut self,
        name: &str,
        input_dim: usize,
        units: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) {
        let kernel = self.params.add(
            format!("{name}.kernel"),
            vec![4 * units, input_dim],
            glorot_uniform(rng, input_dim, 4 * units, 4 * units * input_dim),
        );
        let recurrent = self.params.add(
            format!("{name}.recurrent"),
            vec![4 * units, units],
            glorot_uniform(rng, units, 4 * units, 4 * units * units),
        );
        let mut b = vec![F::zero(); 4 * units];
        for v in b.iter_mut().take(2 * units).skip(units) {
            *v = F::one();
        }
        let bias = self.params.add(format!("{name}.bias"), vec![4 * units], b);
        self.layers.push(Layer::Lstm {
            kernel,
            recurrent,
            bias,
            input_dim,
            units,
            activation,
        });
    }

    /// Batch normalization; parameters `{name}.gamma` (ones) and
    /// `{name}.beta` (zeros); running statistics start at mean 0, var 1.
    pub fn add_batch_norm(&mut self, name: &str, channels: usize) {
        let gamma = self
            .params
            .add(format!("{name}.gamma"), vec![channels], vec![F::one(); channels]);
        let beta = self
            .params
            .add(format!("{name}.beta"), vec![channels], vec![F::zero(); channels]);
        self.layers.push(Layer::BatchNorm {
            gamma,
            beta,
            channels,
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
        });
    }

    pub fn add_activation(&mut self, kind: Activation) {
        self.layers.push(Layer::Activation { kind });
    }

    pub fn add_max_pool2(&mut self) {
        self.layers.push(Layer::MaxPool2);
    }

    pub fn add_select_last(&mut self) {
        self.layers.push(Layer::SelectLast);
    }

    pub fn add_flatten(&mut self) {
        self.layers.push(Layer::Flatten);
    }

    pub fn add_mean(&mut self) {
        self.layers.push(Layer::Mean);
    }

    // -- shape bookkeeping --------------------------------------------------

    /// Walks the layer stack symbolically and returns the output shape for a
    /// `[channels, time]` input, failing where a real forward would fail.
    pub fn output_shape(&self, channels: usize, time: usize) -> Result<(usize, usize)> {
        let mut shape = (channels, time);
        for layer in &self.layers {
            shape = match layer {
                Layer::Dense { in_dim, out_dim, .. } => {
                    if shape.1 != 1 || shape.0 != *in_dim {
                        return Err(Error::shape(
                            "dense",
                            format!("expected [{in_dim}, 1], got [{}, {}]", shape.0, shape.1),
                        ));
                    }
                    (*out_dim, 1)
                }
                Layer::Conv1d { in_channels, filters, .. } => {
                    if shape.0 != *in_channels {
                        return Err(Error::shape(
                            "conv1d",
                            format!("expected {in_channels} channels, got {}", shape.0),
                        ));
                    }
                    (*filters, shape.1)
                }
                Layer::Lstm { input_dim, units, .. } => {
                    if shape.0 != *input_dim {
                        return Err(Error::shape(
                            "lstm",
                            format!("expected {input_dim} channels, got {}", shape.0),
                        ));
                    }
                    (*units, shape.1)
                }
                Layer::BatchNorm { channels, .. } => {
                    if shape.0 != *channels {
                        return Err(Error::shape(
                            "batch_norm",
                            format!("expected {channels} channels, got {}", shape.0),
                        ));
                    }
                    shape
                }
                Layer::Activation { .. } => shape,
                Layer::MaxPool2 => {
                    if shape.1 < 2 {
                        return Err(Error::shape(
                            "max_pool2",
                            format!("time axis {} too short to pool", shape.1),
                        ));
                    }
                    (shape.0, shape.1 / 2)
                }
                Layer::SelectLast => {
                    if shape.1 == 0 {
                        return Err(Error::shape("select_last", "empty time axis"));
                    }
                    (shape.0, 1)
                }
                Layer::Flatten => (shape.0 * shape.1, 1),
                Layer::Mean => {
                    if shape.0 * shape.1 == 0 {
                        return Err(Error::shape("mean", "empty tensor"));
                    }
                    (1, 1)
                }
            };
        }
        Ok(shape)
    }

    // -- execution ----------------------------------------------------------

    /// Inference forward pass: no tape, no running-statistic updates.
    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = forward_layer(layer, &self.params, &x, None)?;
            x.ensure_finite(layer.primitive_name())?;
        }
        Ok(x)
    }

    /// Forward pass that records a tape for [`Network::backward`]. When the
    /// network is in training mode, batch-norm layers also fold this
    /// sample's statistics into their running estimates (unless their
    /// parameters are frozen, i.e. during fine-tuning).
    pub fn forward_train(&mut self, input: &Tensor<F>, tape: &mut Tape<F>) -> Result<Tensor<F>> {
        tape.records.clear();
        tape.consumed = false;
        let training = self.training;
        let mut x = input.clone();
        // Layers are processed by index so batch-norm state can be updated
        // in place while the parameter set stays independently borrowable.
        for li in 0..self.layers.len() {
            if training {
                if let Layer::BatchNorm {
                    gamma,
                    running_mean,
                    running_var,
                    ..
                } = &mut self.layers[li]
                {
                    let stats_frozen = self.params.get(*gamma).frozen;
                    if !stats_frozen {
                        batch_norm_update_stats(
                            &x,
                            running_mean,
                            running_var,
                            BATCH_NORM_MOMENTUM,
                        );
                    }
                }
            }
            let layer = &self.layers[li];
            let mut record = None;
            x = forward_layer(layer, &self.params, &x, Some(&mut record))?;
            x.ensure_finite(layer.primitive_name())?;
            tape.records.push(record.expect("forward_layer records when asked"));
        }
        Ok(x)
    }

    /// Reverse pass over a recorded tape: accumulates gradients for every
    /// trainable parameter and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, tape: &mut Tape<F>, grad_output: &Tensor<F>) -> Result<Tensor<F>> {
        if tape.consumed {
            return Err(Error::TapeConsumed);
        }
        if tape.records.is_empty() {
            return Err(Error::Empty {
                what: "tape".into(),
                detail: "backward called before any forward pass".into(),
            });
        }
        if tape.records.len() != self.layers.len() {
            return Err(Error::shape(
                "backward",
                format!(
                    "tape has {} records for {} layers",
                    tape.records.len(),
                    self.layers.len()
                ),
            ));
        }
        tape.consumed = true;

        let layers = &self.layers;
        let params = &mut self.params;
        let mut grad = grad_output.clone();
        for (layer, record) in layers.iter().zip(tape.records.iter()).rev() {
            grad = backward_layer(layer, params, record, &grad)?;
            grad.ensure_finite(layer.primitive_name())?;
        }
        Ok(grad)
    }
}

/// Applies one layer. When `record` is provided, saves the state backward
/// needs into it.
fn forward_layer<F: Scalar>(
    layer: &Layer<F>,
    params: &ParameterSet<F>,
    x: &Tensor<F>,
    record: Option<&mut Option<Record<F>>>,
) -> Result<Tensor<F>> {
    let out = match layer {
        Layer::Dense {
            weight,
            bias,
            in_dim,
            out_dim,
        } => {
            if x.time() != 1 || x.channels() != *in_dim {
                return Err(Error::shape(
                    "dense",
                    format!(
                        "expected [{in_dim}, 1], got [{}, {}]",
                        x.channels(),
                        x.time()
                    ),
                ));
            }
            let y = dense_forward(
                &params.get(*weight).data,
                &params.get(*bias).data,
                *out_dim,
                *in_dim,
                x.data(),
            );
            if let Some(r) = record {
                *r = Some(Record::Dense {
                    input: x.data().to_vec(),
                });
            }
            Tensor::column(&y)
        }
        Layer::Conv1d {
            weight,
            bias,
            in_channels,
            filters,
            kernel,
            dilation,
        } => {
            if x.channels() != *in_channels {
                return Err(Error::shape(
                    "conv1d",
                    format!("expected {in_channels} channels, got {}", x.channels()),
                ));
            }
            let y = conv1d_forward(
                x,
                &params.get(*weight).data,
                &params.get(*bias).data,
                *filters,
                *kernel,
                *dilation,
            );
            if let Some(r) = record {
                *r = Some(Record::Conv1d { input: x.clone() });
            }
            y
        }
        Layer::Lstm {
            kernel,
            recurrent,
            bias,
            input_dim,
            units,
            activation,
        } => {
            if x.channels() != *input_dim {
                return Err(Error::shape(
                    "lstm",
                    format!("expected {input_dim} channels, got {}", x.channels()),
                ));
            }
            match record {
                Some(r) => {
                    let mut trace = LstmTrace::default();
                    let y = lstm_forward(
                        x,
                        &params.get(*kernel).data,
                        &params.get(*recurrent).data,
                        &params.get(*bias).data,
                        *units,
                        *activation,
                        Some(&mut trace),
                    );
                    *r = Some(Record::Lstm {
                        input: x.clone(),
                        trace,
                    });
                    y
                }
                None => lstm_forward(
                    x,
                    &params.get(*kernel).data,
                    &params.get(*recurrent).data,
                    &params.get(*bias).data,
                    *units,
                    *activation,
                    None,
                ),
            }
        }
        Layer::BatchNorm {
            gamma,
            beta,
            channels,
            running_mean,
            running_var,
        } => {
            if x.channels() != *channels {
                return Err(Error::shape(
                    "batch_norm",
                    format!("expected {channels} channels, got {}", x.channels()),
                ));
            }
            let (y, xhat) = batch_norm_forward(
                x,
                &params.get(*gamma).data,
                &params.get(*beta).data,
                running_mean,
                running_var,
                BATCH_NORM_EPS,
            );
            if let Some(r) = record {
                *r = Some(Record::BatchNorm { xhat });
            }
            y
        }
        Layer::Activation { kind } => {
            let mut y = x.clone();
            for v in y.data_mut() {
                *v = kind.apply(*v);
            }
            if let Some(r) = record {
                *r = Some(Record::Activation { output: y.clone() });
            }
            y
        }
        Layer::MaxPool2 => {
            if x.time() < 2 {
                return Err(Error::shape(
                    "max_pool2",
                    format!("time axis {} too short to pool", x.time()),
                ));
            }
            let (y, argmax) = max_pool2_forward(x);
            if let Some(r) = record {
                *r = Some(Record::MaxPool2 {
                    argmax,
                    in_channels: x.channels(),
                    in_time: x.time(),
                });
            }
            y
        }
        Layer::SelectLast => {
            if x.time() == 0 {
                return Err(Error::shape("select_last", "empty time axis"));
            }
            let y = Tensor::column(&x.step(x.time() - 1));
            if let Some(r) = record {
                *r = Some(Record::SelectLast { in_time: x.time() });
            }
            y
        }
        Layer::Flatten => {
            let (channels, time) = (x.channels(), x.time());
            let y = x.clone().reshaped(channels * time, 1)?;
            if let Some(r) = record {
                *r = Some(Record::Flatten { channels, time });
            }
            y
        }
        Layer::Mean => {
            if x.is_empty() {
                return Err(Error::shape("mean", "empty tensor"));
            }
            let n: F = c(x.len() as f64);
            let mut acc = F::zero();
            for &v in x.data() {
                acc += v;
            }
            let y = Tensor::column(&[acc / n]);
            if let Some(r) = record {
                *r = Some(Record::Mean {
                    channels: x.channels(),
                    time: x.time(),
                });
            }
            y
        }
    };
    Ok(out)
}

/// Reverses one layer, accumulating parameter gradients (frozen parameters
/// are skipped) and producing the gradient w.r.t. the layer input.
fn backward_layer<F: Scalar>(
    layer: &Layer<F>,
    params: &mut ParameterSet<F>,
    record: &Record<F>,
    grad: &Tensor<F>,
) -> Result<Tensor<F>> {
    let out = match (layer, record) {
        (
            Layer::Dense {
                weight,
                bias,
                in_dim,
                out_dim,
            },
            Record::Dense { input },
        ) => {
            let mut gw = params.take_grad(*weight);
            let mut gb = params.take_grad(*bias);
            let gx = dense_backward(
                &params.get(*weight).data,
                *out_dim,
                *in_dim,
                input,
                grad.data(),
                gw.as_deref_mut(),
                gb.as_deref_mut(),
            );
            params.put_grad(*weight, gw);
            params.put_grad(*bias, gb);
            Tensor::column(&gx)
        }
        (
            Layer::Conv1d {
                weight,
                bias,
                filters,
                kernel,
                dilation,
                ..
            },
            Record::Conv1d { input },
        ) => {
            let mut gw = params.take_grad(*weight);
            let mut gb = params.take_grad(*bias);
            let gx = conv1d_backward(
                input,
                &params.get(*weight).data,
                *filters,
                *kernel,
                *dilation,
                grad,
                gw.as_deref_mut(),
                gb.as_deref_mut(),
            );
            params.put_grad(*weight, gw);
            params.put_grad(*bias, gb);
            gx
        }
        (
            Layer::Lstm {
                kernel,
                recurrent,
                bias,
                units,
                activation,
                ..
            },
            Record::Lstm { input, trace },
        ) => {
            let mut gk = params.take_grad(*kernel);
            let mut gr = params.take_grad(*recurrent);
            let mut gb = params.take_grad(*bias);
            let gx = lstm_backward(
                input,
                &params.get(*kernel).data,
                &params.get(*recurrent).data,
                *units,
                *activation,
                trace,
                grad,
                gk.as_deref_mut(),
                gr.as_deref_mut(),
                gb.as_deref_mut(),
            );
            params.put_grad(*kernel, gk);
            params.put_grad(*recurrent, gr);
            params.put_grad(*bias, gb);
            gx
        }
        (
            Layer::BatchNorm {
                gamma,
                beta,
                running_var,
                ..
            },
            Record::BatchNorm { xhat },
        ) => {
            let mut gg = params.take_grad(*gamma);
            let mut gb = params.take_grad(*beta);
            let gx = batch_norm_backward(
                grad,
                xhat,
                &params.get(*gamma).data,
                running_var,
                BATCH_NORM_EPS,
                gg.as_deref_mut(),
                gb.as_deref_mut(),
            );
            params.put_grad(*gamma, gg);
            params.put_grad(*beta, gb);
            gx
        }
        (Layer::Activation { kind }, Record::Activation { output }) => {
            let mut gx = grad.clone();
            for (g, &y) in gx.data_mut().iter_mut().zip(output.data()) {
                *g *= kind.grad_from_output(y);
            }
            gx
        }
        (
            Layer::MaxPool2,
            Record::MaxPool2 {
                argmax,
                in_channels,
                in_time,
            },
        ) => max_pool2_backward(grad, argmax, *in_channels, *in_time),
        (Layer::SelectLast, Record::SelectLast { in_time }) => {
            let mut gx = Tensor::zeros(grad.channels(), *in_time);
            for ch in 0..grad.channels() {
                *gx.at_mut(ch, in_time - 1) = grad.at(ch, 0);
            }
            gx
        }
        (Layer::Flatten, Record::Flatten { channels, time }) => {
            grad.clone().reshaped(*channels, *time)?
        }
        (Layer::Mean, Record::Mean { channels, time }) => {
            let n: F = c((*channels * *time) as f64);
            let g = grad.at(0, 0) / n;
            let mut gx = Tensor::zeros(*channels, *time);
            for v in gx.data_mut() {
                *v = g;
            }
            gx
        }
        _ => {
            return Err(Error::shape(
                "backward",
                "tape record does not match the layer stack",
            ))
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Zeroes every parameter of a freshly built network.
    fn zero_params(net: &mut Network<f64>) {
        for p in net.params_mut().iter_mut() {
            for v in p.data.iter_mut() {
                *v = 0.0;
            }
        }
    }

    #[test]
    fn zeroed_dense_maps_anything_to_zero() {
        let mut net = Network::<f64>::new();
        net.add_dense("head", 4, 2, &mut rng(1));
        zero_params(&mut net);
        let y = net
            .forward(&Tensor::column(&[3.0, -1.0, 0.5, 9.0]))
            .unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn single_parameter_identity_gradient_is_one() {
        // y = w * x with x = 1: dL/dw under seed gradient 1 is exactly 1.
        let mut net = Network::<f64>::new();
        net.add_dense("head", 1, 1, &mut rng(2));
        let mut tape = Tape::new();
        net.forward_train(&Tensor::column(&[1.0]), &mut tape).unwrap();
        net.zero_grad();
        net.backward(&mut tape, &Tensor::column(&[1.0])).unwrap();
        let w = net.params().by_name("head.weight").unwrap();
        assert_eq!(w.grad, vec![1.0]);
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        // Zeroed dense feeds tanh: output 0, so d tanh = 1 and the bias
        // gradient equals the seed gradient exactly.
        let mut net = Network::<f64>::new();
        net.add_dense("head", 1, 1, &mut rng(3));
        net.add_activation(Activation::Tanh);
        zero_params(&mut net);
        let mut tape = Tape::new();
        let y = net.forward_train(&Tensor::column(&[2.0]), &mut tape).unwrap();
        assert_eq!(y.data(), &[0.0]);
        net.zero_grad();
        net.backward(&mut tape, &Tensor::column(&[1.0])).unwrap();
        assert_eq!(net.params().by_name("head.bias").unwrap().grad, vec![1.0]);
    }

    #[test]
    fn tape_reuse_is_rejected() {
        let mut net = Network::<f64>::new();
        net.add_dense("head", 2, 1, &mut rng(4));
        let mut tape = Tape::new();
        net.forward_train(&Tensor::column(&[1.0, 2.0]), &mut tape).unwrap();
        net.backward(&mut tape, &Tensor::column(&[1.0])).unwrap();
        let err = net.backward(&mut tape, &Tensor::column(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::TapeConsumed));
        // A fresh forward re-arms the same tape.
        net.forward_train(&Tensor::column(&[1.0, 2.0]), &mut tape).unwrap();
        assert!(net.backward(&mut tape, &Tensor::column(&[1.0])).is_ok());
    }

    #[test]
    fn backward_before_forward_is_rejected() {
        let mut net = Network::<f64>::new();
        net.add_dense("head", 1, 1, &mut rng(5));
        let mut tape = Tape::new();
        let err = net.backward(&mut tape, &Tensor::column(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::Empty { .. }));
    }

    #[test]
    fn dense_shape_mismatch_is_descriptive() {
        let mut net = Network::<f64>::new();
        net.add_dense("head", 3, 1, &mut rng(6));
        let err = net.forward(&Tensor::column(&[1.0, 2.0])).unwrap_err();
        match err {
            Error::ShapeMismatch { op, detail } => {
                assert_eq!(op, "dense");
                assert!(detail.contains("[3, 1]"), "detail: {detail}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn frozen_parameters_receive_no_gradient() {
        let mut net = Network::<f64>::new();
        net.add_dense("body", 2, 2, &mut rng(7));
        net.add_activation(Activation::Tanh);
        net.add_dense("head", 2, 1, &mut rng(8));
        net.params_mut()
            .freeze_all_except(&["head.weight", "head.bias"])
            .unwrap();
        let mut tape = Tape::new();
        net.forward_train(&Tensor::column(&[0.3, -0.7]), &mut tape).unwrap();
        net.zero_grad();
        net.backward(&mut tape, &Tensor::column(&[1.0])).unwrap();
        let body_w = net.params().by_name("body.weight").unwrap();
        assert!(body_w.frozen);
        assert!(body_w.grad.iter().all(|&g| g == 0.0));
        let head_w = net.params().by_name("head.weight").unwrap();
        assert!(head_w.grad.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn freeze_unknown_name_is_an_error() {
        let mut net = Network::<f64>::new();
        net.add_dense("head", 1, 1, &mut rng(9));
        let err = net
            .params_mut()
            .freeze_all_except(&["head.weight", "nope.bias"])
            .unwrap_err();
        assert!(matches!(err, Error::UnknownParameter { .. }));
    }

    #[test]
    fn same_seed_same_initial_parameters() {
        let build = |seed: u64| {
            let mut r = rng(seed);
            let mut net = Network::<f64>::new();
            net.add_conv1d("conv1", 1, 4, 3, 1, &mut r);
            net.add_batch_norm("bn1", 4);
            net.add_activation(Activation::Tanh);
            net.add_flatten();
            net.add_dense("head", 4 * 6, 3, &mut r);
            net
        };
        let a = build(42);
        let b = build(42);
        let c = build(43);
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.data, pb.data, "{}", pa.name);
        }
        let wa = a.params().by_name("conv1.weight").unwrap();
        let wc = c.params().by_name("conv1.weight").unwrap();
        assert_ne!(wa.data, wc.data);
    }

    #[test]
    fn shape_walk_matches_real_forward() {
        let mut r = rng(10);
        let mut net = Network::<f64>::new();
        net.add_conv1d("conv1", 1, 12, 12, 1, &mut r);
        net.add_batch_norm("bn1", 12);
        net.add_activation(Activation::Tanh);
        net.add_max_pool2();
        net.add_conv1d("conv2", 12, 12, 2, 1, &mut r);
        net.add_activation(Activation::Tanh);
        net.add_flatten();
        net.add_dense("head", 12 * 6, 3, &mut r);
        let expect = net.output_shape(1, 12).unwrap();
        assert_eq!(expect, (3, 1));
        let x = Tensor::from_series(&[1.0; 12]);
        let y = net.forward(&x).unwrap();
        assert_eq!((y.channels(), y.time()), expect);
    }

    #[test]
    fn batch_norm_stats_update_only_in_training_mode() {
        let mut net = Network::<f64>::new();
        net.add_batch_norm("bn", 1);
        let x = Tensor::from_series(&[5.0, 7.0, 9.0]);
        let mut tape = Tape::new();

        // Eval mode: stats untouched.
        net.forward_train(&x, &mut tape).unwrap();
        let Layer::BatchNorm { running_mean, .. } = &net.layers()[0] else {
            unreachable!()
        };
        assert_eq!(running_mean, &vec![0.0]);

        // Training mode: stats move toward the sample mean.
        net.set_training(true);
        net.forward_train(&x, &mut tape).unwrap();
        let Layer::BatchNorm { running_mean, running_var, .. } = &net.layers()[0] else {
            unreachable!()
        };
        assert!((running_mean[0] - 0.07).abs() < 1e-12); // 0.99*0 + 0.01*7
        assert!(running_var[0] > 1.0); // blends toward sample var 8/3 > 1

        // Frozen gamma suppresses stat updates even in training mode.
        let before = running_mean.clone();
        net.params_mut().set_frozen("bn.gamma", true).unwrap();
        net.forward_train(&x, &mut tape).unwrap();
        let Layer::BatchNorm { running_mean, .. } = &net.layers()[0] else {
            unreachable!()
        };
        assert_eq!(running_mean, &before);
    }

    #[test]
    fn serde_round_trip_preserves_everything() {
        let mut r = rng(12);
        let mut net = Network::<f64>::new();
        net.add_lstm("lstm", 1, 3, Activation::Relu, &mut r);
        net.add_flatten();
        net.add_dense("head", 3 * 5, 2, &mut r);
        net.params_mut().set_frozen("lstm.kernel", true).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: Network<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.layers().len(), net.layers().len());
        for (pa, pb) in net.params().iter().zip(back.params().iter()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.shape, pb.shape);
            assert_eq!(pa.data, pb.data);
            assert_eq!(pa.frozen, pb.frozen);
        }
        // Round-tripped network computes the same outputs.
        let x = Tensor::from_series(&[0.1, 0.4, -0.2, 0.9, 0.0]);
        assert_eq!(net.forward(&x).unwrap(), back.forward(&x).unwrap());
    }

    #[test]
    fn forget_gate_bias_initialized_to_one() {
        let mut r = rng(13);
        let mut net = Network::<f64>::new();
        net.add_lstm("lstm", 1, 4, Activation::Tanh, &mut r);
        let b = net.params().by_name("lstm.bias").unwrap();
        assert_eq!(&b.data[0..4], &[0.0; 4]); // input gate
        assert_eq!(&b.data[4..8], &[1.0; 4]); // forget gate
        assert_eq!(&b.data[8..16], &[0.0; 8]); // candidate + output
    }

    #[test]
    fn non_finite_forward_names_the_primitive() {
        let mut net = Network::<f64>::new();
        net.add_dense("head", 1, 1, &mut rng(14));
        net.params_mut().get_mut(0).data[0] = f64::INFINITY;
        let err = net.forward(&Tensor::column(&[2.0])).unwrap_err();
        match err {
            Error::NonFinite { primitive } => assert_eq!(primitive, "dense"),
            other => panic!("unexpected error: {other}"),
        }
    }
}
