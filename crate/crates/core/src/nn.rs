//! Dense feed-forward networks trained with mean-square error and Adam.
//!
//! Everything is `f64` and every source of randomness takes an explicit
//! seed, so two runs with the same inputs produce bit-identical weights.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }
}

/// One affine layer; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>, activation: Activation) -> Self {
        // Parameter iteration relies on standard layout.
        Self {
            weights: weights.as_standard_layout().into_owned(),
            biases,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn apply(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weights.t());
        z += &self.biases;
        if self.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSeries("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.output_dim() {
                return Err(Error::shape(
                    format!("layer {i} bias of length {}", l.output_dim()),
                    format!("length {}", l.biases.len()),
                ));
            }
            if i > 0 && layers[i - 1].output_dim() != l.input_dim() {
                return Err(Error::shape(
                    format!("layer {i} input width {}", layers[i - 1].output_dim()),
                    format!("{}", l.input_dim()),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// He-uniform weights (`|w| ≤ sqrt(6 / fan_in)`), zero biases, ReLU on
    /// hidden layers and a linear output.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::ConfigInvalid(format!(
                "layer dims must list at least two positive widths, got {layer_dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = layer_dims.len() - 1;
        let layers = layer_dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let weights =
                    Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..=bound));
                let activation = if i + 1 == n {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                Dense::new(weights, Array1::zeros(fan_out), activation)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, input: &ArrayView2<'_, f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("input width {}", self.input_dim()),
                format!("{}", input.ncols()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward_partial(input, self.layers.len())
    }

    /// Output of the first `n_layers` layers (an intermediate representation).
    pub fn forward_partial(&self, input: ArrayView2<'_, f64>, n_layers: usize) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut a = input.to_owned();
        for layer in &self.layers[..n_layers.min(self.layers.len())] {
            a = layer.apply(a.view());
        }
        Ok(a)
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

/// Gradients laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Gradients {
    fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.len()),
                })
                .collect(),
        }
    }

    /// Flattened in the same order as the network parameters.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_same_shape(pred: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(format!("{:?}", pred.dim()), format!("{:?}", target.dim())));
    }
    Ok(())
}

/// Mean over rows of the squared Euclidean residual norm.
pub fn loss_mse(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    check_same_shape(&pred, &target)?;
    if pred.nrows() == 0 {
        return Err(Error::EmptyDataset("loss over zero rows"));
    }
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.nrows() as f64)
}

/// Loss and its gradient with respect to every weight and bias.
pub fn backward(
    net: &DenseNet,
    input: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
) -> Result<(f64, Gradients)> {
    net.check_input(&input)?;
    if target.dim() != (input.nrows(), net.output_dim()) {
        return Err(Error::shape(
            format!("target {:?}", (input.nrows(), net.output_dim())),
            format!("{:?}", target.dim()),
        ));
    }
    let n = input.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset("gradient over zero rows"));
    }

    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(net.layers.len() + 1);
    acts.push(input.to_owned());
    for layer in &net.layers {
        let next = layer.apply(acts[acts.len() - 1].view());
        acts.push(next);
    }
    let out = &acts[acts.len() - 1];
    let loss = loss_mse(out.view(), target)?;

    let mut grads = Gradients::zeros_like(net);
    let mut delta = (out - &target) * (2.0 / n as f64);
    for (l, layer) in net.layers.iter().enumerate().rev() {
        if layer.activation == Activation::Relu {
            // ReLU'(0) = 0: post-activation is positive exactly when the
            // pre-activation is.
            ndarray::Zip::from(&mut delta)
                .and(&acts[l + 1])
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
        }
        grads.layers[l].weights = delta.t().dot(&acts[l]);
        grads.layers[l].biases = delta.sum_axis(Axis(0));
        if l > 0 {
            delta = delta.dot(&layer.weights);
        }
    }
    Ok((loss, grads))
}

/// Central-difference estimate of the loss gradient, one parameter at a time.
pub fn finite_diff_grad(
    net: &DenseNet,
    input: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    h: f64,
) -> Result<Gradients> {
    if !(h > 0.0) {
        return Err(Error::ConfigInvalid("finite-difference step must be positive".into()));
    }
    let mut probe = net.clone();
    let mut grads = Gradients::zeros_like(net);
    let n = net.n_params();
    let loss_at = |p: &DenseNet| -> Result<f64> { loss_mse(p.forward(input)?.view(), target) };
    for k in 0..n {
        let original = *net.params().nth(k).expect("index in range");
        *probe.params_mut().nth(k).expect("index in range") = original + h;
        let up = loss_at(&probe)?;
        *probe.params_mut().nth(k).expect("index in range") = original - h;
        let down = loss_at(&probe)?;
        *probe.params_mut().nth(k).expect("index in range") = original;
        *grads.iter_mut().nth(k).expect("index in range") = (up - down) / (2.0 * h);
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
        }
    }

    /// One bias-corrected Adam update over parallel parameter and gradient
    /// sequences.
    pub fn step<'p, 'g>(
        &mut self,
        params: impl IntoIterator<Item = &'p mut f64>,
        grads: impl IntoIterator<Item = &'g f64>,
    ) -> Result<()> {
        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let mut params = params.into_iter();
        let mut grads = grads.into_iter();
        for (m, v) in self.first_moment.iter_mut().zip(self.second_moment.iter_mut()) {
            let (Some(p), Some(&g)) = (params.next(), grads.next()) else {
                return Err(Error::shape("parameter count of the optimizer state", "fewer"));
            };
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if params.next().is_some() || grads.next().is_some() {
            return Err(Error::shape("parameter count of the optimizer state", "more"));
        }
        Ok(())
    }
}

pub fn adam_step(net: &mut DenseNet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.len() != net.n_params() || state.first_moment.len() != net.n_params() {
        return Err(Error::shape(
            format!("{} parameters", net.n_params()),
            format!("{} gradients, {} moments", grads.len(), state.first_moment.len()),
        ));
    }
    state.step(net.params_mut(), grads.iter())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// Set by the caller per run; not read from configuration files.
    #[serde(skip)]
    pub seed: u64,
    pub shuffle: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 70,
            batch_size: 64,
            patience: 10,
            seed: 0,
            shuffle: true,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::ConfigInvalid("train.epochs and train.batch_size must be ≥ 1".into()));
        }
        if !(self.adam.lr >= 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::ConfigInvalid("adam parameters out of range".into()));
        }
        Ok(())
    }
}

/// Paired inputs and targets.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub targets: ArrayView2<'a, f64>,
}

impl<'a> Dataset<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, targets: ArrayView2<'a, f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::shape(
                format!("{} target rows", inputs.nrows()),
                format!("{}", targets.nrows()),
            ));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLoss>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochLoss {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Mini-batch Adam on the MSE loss with early stopping on the validation
/// loss. Returns the weights of the best validation epoch.
pub fn train(
    mut net: DenseNet,
    train_set: Dataset<'_>,
    val_set: Dataset<'_>,
    cfg: &TrainConfig,
) -> Result<(DenseNet, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation set"));
    }
    for (inputs, targets) in [
        (train_set.inputs, train_set.targets),
        (val_set.inputs, val_set.targets),
    ] {
        net.check_input(&inputs)?;
        if targets.ncols() != net.output_dim() {
            return Err(Error::shape(
                format!("target width {}", net.output_dim()),
                format!("{}", targets.ncols()),
            ));
        }
    }

    let n = train_set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(net.n_params(), cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, net.clone());
    let mut waited = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut running = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = train_set.inputs.select(Axis(0), batch);
            let yb = train_set.targets.select(Axis(0), batch);
            let (loss, grads) = backward(&net, xb.view(), yb.view())?;
            adam_step(&mut net, &grads, &mut adam)?;
            running += loss * batch.len() as f64;
        }
        let val_loss = loss_mse(net.forward(val_set.inputs)?.view(), val_set.targets)?;
        history.push(EpochLoss {
            epoch,
            train_loss: running / n as f64,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, net.clone());
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    // All-NaN validation losses never improve; keep the first epoch then.
    let best_epoch = best.1.max(1);
    Ok((
        best.2,
        TrainHistory {
            epochs: history,
            best_epoch,
            stopped_early,
        },
    ))
}
