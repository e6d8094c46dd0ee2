//! Fully connected networks trained with mini-batch Adam.
//!
//! The regressor uses ReLU hidden layers and a linear output trained on
//! mean squared error. Classifiers use sigmoid hidden layers and one
//! sigmoid output per label trained on binary cross-entropy. Both losses
//! average over samples and output columns.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::rng::{substream, STREAM_INIT, STREAM_SHUFFLE};
use crate::{Error, Result};

mod scaler;

pub use scaler::ScalerStats;

/// Probability clamp used inside the cross-entropy.
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Sigmoid => sigmoid(z),
            Self::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Self::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Sigmoid => a * (1.0 - a),
            Self::Linear => 1.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerRepr", into = "LayerRepr")]
pub struct Layer {
    /// `output x input`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    input: usize,
    output: usize,
    activation: Activation,
    /// Row-major `output x input`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<Layer> for LayerRepr {
    fn from(l: Layer) -> Self {
        Self {
            input: l.weights.ncols(),
            output: l.weights.nrows(),
            activation: l.activation,
            weights: l.weights.transpose().as_slice().to_vec(),
            bias: l.bias.as_slice().to_vec(),
        }
    }
}

impl TryFrom<LayerRepr> for Layer {
    type Error = String;

    fn try_from(r: LayerRepr) -> core::result::Result<Self, String> {
        if r.weights.len() != r.input * r.output || r.bias.len() != r.output {
            return Err(alloc::format!(
                "layer {}x{} has {} weights and {} biases",
                r.output,
                r.input,
                r.weights.len(),
                r.bias.len()
            ));
        }
        Ok(Self {
            weights: DMatrix::from_row_slice(r.output, r.input, &r.weights),
            bias: DVector::from_vec(r.bias),
            activation: r.activation,
        })
    }
}

impl Layer {
    pub fn input(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Activation stack for `task` with the given widths, all weights zero.
    pub fn zeros(task: Task, input: usize, hidden: &[usize], output: usize) -> Self {
        let (hidden_act, out_act) = match task {
            Task::Regression => (Activation::Relu, Activation::Linear),
            Task::Classification => (Activation::Sigmoid, Activation::Sigmoid),
        };
        let mut widths = alloc::vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| Layer {
                weights: DMatrix::zeros(w[1], w[0]),
                bias: DVector::zeros(w[1]),
                activation: if k + 2 == widths.len() { out_act } else { hidden_act },
            })
            .collect();
        Self { layers }
    }

    /// He-uniform weights under ReLU, Xavier-uniform otherwise; zero biases.
    pub fn init<R: Rng>(task: Task, input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(task, input, hidden, output);
        for layer in &mut p.layers {
            let (fan_out, fan_in) = layer.weights.shape();
            let limit = match layer.activation {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            for w in layer.weights.iter_mut() {
                *w = rng.random_range(-limit..limit);
            }
        }
        p
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, Layer::input)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::output)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].output() != pair[1].input() {
                return Err(Error::Dimension {
                    what: "consecutive layer widths",
                    expected: pair[0].output(),
                    got: pair[1].input(),
                });
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.output() {
                return Err(Error::Dimension {
                    what: "bias length",
                    expected: l.output(),
                    got: l.bias.len(),
                });
            }
            if !l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::Config("non-finite network parameter".into()));
            }
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: DMatrix::zeros(l.output(), l.input()),
                    bias: DVector::zeros(l.output()),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Every weight then every bias, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend(l.weights.iter().copied());
            v.extend(l.bias.iter().copied());
        }
        v
    }

    fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// Gradient with the same layout as the parameters.
pub type Gradients = MlpParams;

fn rows_to_matrix(rows: &[Vec<f64>], width: usize, what: &'static str) -> Result<DMatrix<f64>> {
    for r in rows {
        if r.len() != width {
            return Err(Error::Dimension {
                what,
                expected: width,
                got: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Layer outputs for a batch (`batch x width` each), input first.
fn forward_all(params: &MlpParams, x: DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut acts = Vec::with_capacity(params.layers.len() + 1);
    acts.push(x);
    for l in &params.layers {
        let prev = acts.last().expect("input present");
        let mut z = prev * l.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += l.bias.transpose();
        }
        let act = l.activation;
        z.apply(|v| *v = act.apply(*v));
        acts.push(z);
    }
    acts
}

pub fn forward(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    let out = forward_batch(params, core::slice::from_ref(&x.to_vec()))?;
    Ok(out.into_iter().next().unwrap_or_default())
}

pub fn forward_batch(params: &MlpParams, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let x = rows_to_matrix(xs, params.input_width(), "network input")?;
    let acts = forward_all(params, x);
    Ok(matrix_to_rows(acts.last().expect("output present")))
}

fn check_shapes(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension {
            what: "loss operands",
            expected: pred.len(),
            got: target.len(),
        });
    }
    Ok(())
}

fn loss_matrix(task: Task, pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    let n = pred.len().max(1) as f64;
    match task {
        Task::Regression => pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n,
        Task::Classification => {
            pred.iter()
                .zip(target.iter())
                .map(|(&p, &t)| {
                    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n
        }
    }
}

/// Mean squared error or mean binary cross-entropy.
pub fn loss(task: Task, predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            what: "loss sample count",
            expected: predictions.len(),
            got: targets.len(),
        });
    }
    let width = predictions.first().map_or(0, Vec::len);
    let p = rows_to_matrix(predictions, width, "loss predictions")?;
    let t = rows_to_matrix(targets, width, "loss targets")?;
    check_shapes(&p, &t)?;
    Ok(loss_matrix(task, &p, &t))
}

/// Loss derivative with respect to the pre-activation of the output layer.
fn output_delta(task: Task, act: Activation, pred: &DMatrix<f64>, target: &DMatrix<f64>) -> DMatrix<f64> {
    let n = pred.len().max(1) as f64;
    match (task, act) {
        (Task::Classification, Activation::Sigmoid) => pred.zip_map(target, |p, t| {
            if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                (p - t) / n
            } else {
                0.0
            }
        }),
        (Task::Classification, _) => pred.zip_map(target, |p, t| {
            if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                (p - t) / (p * (1.0 - p)) / n * act.derivative(p)
            } else {
                0.0
            }
        }),
        (Task::Regression, _) => pred.zip_map(target, |p, t| 2.0 * (p - t) / n * act.derivative(p)),
    }
}

fn backprop_matrix(params: &MlpParams, task: Task, x: DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Gradients) {
    let acts = forward_all(params, x);
    let out = acts.last().expect("output present");
    let loss = loss_matrix(task, out, y);
    let mut grads = params.zeros_like();
    let last = params.layers.len() - 1;
    let mut delta = output_delta(task, params.layers[last].activation, out, y);
    for k in (0..=last).rev() {
        let a_prev = &acts[k];
        grads.layers[k].weights = delta.transpose() * a_prev;
        grads.layers[k].bias = delta.row_sum().transpose();
        if k > 0 {
            let act = params.layers[k - 1].activation;
            let mut next = &delta * &params.layers[k].weights;
            next.zip_apply(a_prev, |d, a| *d *= act.derivative(a));
            delta = next;
        }
    }
    (loss, grads)
}

/// Exact gradient of the batch loss.
pub fn backprop(params: &MlpParams, task: Task, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Gradients> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Dimension {
            what: "batch rows",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let x = rows_to_matrix(xs, params.input_width(), "network input")?;
    let y = rows_to_matrix(ys, params.output_width(), "targets")?;
    Ok(backprop_matrix(params, task, x, &y).1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        let n = params.flat().len();
        Self {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let g = grads.flat();
    if g.len() != state.m.len() {
        return Err(Error::Dimension {
            what: "gradient length",
            expected: state.m.len(),
            got: g.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, w) in params.flat_mut().enumerate() {
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g[k];
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_split: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Separates the random streams of models sharing a seed.
    pub model_id: u64,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            epochs: 1000,
            batch_size: 100,
            validation_split: 0.2,
            hidden_layers: 1,
            hidden_width: 256,
            adam: AdamConfig::default(),
            seed: 0,
            model_id: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return Err(Error::Config("validation split must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden_width == 0 {
            return Err(Error::Config("epochs, batch size and hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub final_val_loss: f64,
    pub wall_time: f64,
    pub train_rows: usize,
    pub val_rows: usize,
    /// Input columns with zero spread in the training split.
    pub constant_inputs: Vec<usize>,
}

/// A trained network with its input and (regression) target scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNet {
    pub task: Task,
    pub params: MlpParams,
    pub input_scaler: ScalerStats,
    pub target_scaler: Option<ScalerStats>,
}

impl TrainedNet {
    /// Outputs in target units: destandardized for regression, scores in
    /// [0, 1] for classification.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_batch(core::slice::from_ref(&x.to_vec()))?.remove(0))
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let scaled: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| self.input_scaler.transform(x))
            .collect::<Result<_>>()?;
        let out = forward_batch(&self.params, &scaled)?;
        match &self.target_scaler {
            Some(s) => out.iter().map(|y| s.inverse(y)).collect(),
            None => Ok(out),
        }
    }
}

/// Number of training rows; the remaining tail rows validate.
pub fn split_point(rows: usize, validation_split: f64) -> usize {
    let n_train = (rows as f64 * (1.0 - validation_split)).floor() as usize;
    n_train.clamp(1, rows.saturating_sub(1).max(1))
}

/// Trains on `xs -> ys`. The last `validation_split` share of rows is held
/// out before any shuffling.
pub fn train(xs: &[Vec<f64>], ys: &[Vec<f64>], cfg: &TrainConfig, clock: &dyn Clock) -> Result<(TrainedNet, TrainReport)> {
    cfg.validate()?;
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::Config(alloc::format!(
            "training needs at least 2 aligned rows, got {} inputs and {} targets",
            xs.len(),
            ys.len()
        )));
    }
    if let Some(i) = xs.iter().chain(ys).position(|r| !r.iter().all(|v| v.is_finite())) {
        return Err(Error::Config(alloc::format!("non-finite value in training row {}", i % xs.len())));
    }
    let t0 = clock.now();
    let in_w = xs[0].len();
    let out_w = ys[0].len();
    let n_train = split_point(xs.len(), cfg.validation_split);

    let input_scaler = ScalerStats::fit(&xs[..n_train])?;
    let target_scaler = match cfg.task {
        Task::Regression => Some(ScalerStats::fit(&ys[..n_train])?),
        Task::Classification => None,
    };
    let scale_x = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| input_scaler.transform(r)).collect::<Result<_>>()?;
        rows_to_matrix(&scaled, in_w, "network input")
    };
    let scale_y = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
        let scaled: Vec<Vec<f64>> = match &target_scaler {
            Some(s) => rows.iter().map(|r| s.transform(r)).collect::<Result<_>>()?,
            None => rows.to_vec(),
        };
        rows_to_matrix(&scaled, out_w, "targets")
    };
    let x_train = scale_x(&xs[..n_train])?;
    let y_train = scale_y(&ys[..n_train])?;
    let x_val = scale_x(&xs[n_train..])?;
    let y_val = scale_y(&ys[n_train..])?;

    let hidden = alloc::vec![cfg.hidden_width; cfg.hidden_layers];
    let mut init_rng = substream(cfg.seed, STREAM_INIT, cfg.model_id);
    let mut params = MlpParams::init(cfg.task, in_w, &hidden, out_w, &mut init_rng);
    let mut state = AdamState::new(&params);
    let mut shuffle_rng = substream(cfg.seed, STREAM_SHUFFLE, cfg.model_id);

    let batch = cfg.batch_size.min(n_train);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        final_val_loss: 0.0,
        wall_time: 0.0,
        train_rows: n_train,
        val_rows: xs.len() - n_train,
        constant_inputs: input_scaler.constant_columns(),
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = x_train.select_rows(chunk.iter());
            let yb = y_train.select_rows(chunk.iter());
            let (l, g) = backprop_matrix(&params, cfg.task, xb, &yb);
            if !l.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    detail: alloc::format!("batch loss {l}"),
                });
            }
            epoch_loss += l * chunk.len() as f64;
            adam_step(&mut params, &g, &mut state, &cfg.adam)?;
        }
        let val = loss_matrix(cfg.task, forward_all(&params, x_val.clone()).last().expect("output"), &y_val);
        if !val.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                detail: alloc::format!("validation loss {val}"),
            });
        }
        report.train_loss.push(epoch_loss / n_train as f64);
        report.val_loss.push(val);
    }
    report.final_val_loss = *report.val_loss.last().expect("at least one epoch");
    report.wall_time = clock.now() - t0;
    Ok((
        TrainedNet {
            task: cfg.task,
            params,
            input_scaler,
            target_scaler,
        },
        report,
    ))
}
