//! Feed-forward regression networks and group l2-norm importances.
//!
//! Two models share one training engine:
//!
//! * a plain MLP minimizing `mean((y − ŷ)²) + weight_decay·Σw²`;
//! * an ARD-prior Bayesian network minimizing the negative log posterior
//!   kernel `β·E_D + Σ_c α_c·E_{W_c}` with `E_D = ½Σ(y − ŷ)²` and
//!   `E_{W_c} = ½Σ_{w∈c} w²`. Every input owns the group of first-layer
//!   weights leaving it; all deeper weights share one extra group.
//!
//! The ARD precisions are adapted by alternating MAP training with the
//! fixed-point evidence updates `α_c ← N_c / (2·E_{W_c})` and
//! `β ← n / (2·E_D)`.
//!
//! Weight matrices are stored `fan_out × fan_in`, so row `k` of the first
//! layer holds the weights entering hidden unit `k` and column `c` is the
//! group of input `c`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, Mat, RngStream};

pub const ALPHA_MIN: f64 = 1e-4;
pub const ALPHA_MAX: f64 = 1e6;
/// Starting noise precision; training targets are expected on unit scale.
pub const BETA_INIT: f64 = 1.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    /// Layer `l` maps `layer_sizes[l]` inputs to `layer_sizes[l + 1]` outputs.
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
    /// Applied on hidden layers; the output layer is always linear.
    pub hidden_activation: Activation,
}

impl MlpParams {
    pub fn zeros(layer_sizes: &[usize], hidden_activation: Activation) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        let weights = layer_sizes
            .windows(2)
            .map(|w| Mat::zeros(w[1], w[0]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
        }
    }

    /// Gaussian initialization with variance `1 / fan_in`, zero biases.
    pub fn init(layer_sizes: &[usize], hidden_activation: Activation, rng: &mut RngStream) -> Self {
        let mut params = Self::zeros(layer_sizes, hidden_activation);
        for w in &mut params.weights {
            let scale = 1.0 / (w.cols() as f64).sqrt();
            for v in w.as_mut_slice() {
                *v = scale * rng.standard_normal();
            }
        }
        params
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Mat::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(&self.layer_sizes, self.hidden_activation)
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            Activation::Identity
        } else {
            self.hidden_activation
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Clamped to the number of training rows.
    pub batch_size: usize,
    /// ARD only: evidence update rounds after the initial MAP fit.
    pub outer_iterations: usize,
    pub seed: u64,
    /// Plain MLP only.
    pub weight_decay: f64,
    /// ARD only: starting precision of every weight group.
    pub alpha_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_sizes: vec![50],
            epochs: 300,
            learning_rate: 1e-3,
            batch_size: 64,
            outer_iterations: 5,
            seed: 0,
            weight_decay: 1e-4,
            alpha_init: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::config("hidden_sizes", "need at least one non-empty hidden layer"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be non-negative and finite"));
        }
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&self.alpha_init) {
            return Err(Error::config("alpha_init", "must lie within the precision clamp [1e-4, 1e6]"));
        }
        Ok(())
    }

    fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(1);
        sizes
    }
}

/// Coefficients of a penalized squared-error objective
///
/// `data_scale·mean(r²) + Σ_c input_groups[c]·Σ_{w∈c} w² + shared·Σ_{deeper} w²`.
///
/// Biases are never penalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Penalty {
    pub data_scale: f64,
    pub input_groups: Vec<f64>,
    pub shared: f64,
}

impl Penalty {
    pub fn weight_decay(decay: f64, input_dim: usize) -> Self {
        Penalty {
            data_scale: 1.0,
            input_groups: vec![decay; input_dim],
            shared: decay,
        }
    }

    /// `(β·E_D + Σ_c α_c·E_{W_c}) / n`, which keeps gradient magnitudes
    /// independent of the sample count.
    pub fn ard(alpha: &[f64], alpha_shared: f64, beta: f64, n: usize) -> Self {
        let n = n as f64;
        Penalty {
            data_scale: 0.5 * beta,
            input_groups: alpha.iter().map(|a| 0.5 * a / n).collect(),
            shared: 0.5 * alpha_shared / n,
        }
    }

    fn coefficient(&self, layer: usize, col: usize) -> f64 {
        if layer == 0 {
            self.input_groups[col]
        } else {
            self.shared
        }
    }

    fn penalty_value(&self, params: &MlpParams) -> f64 {
        let mut total = 0.0;
        for (l, w) in params.weights.iter().enumerate() {
            for r in 0..w.rows() {
                for (c, v) in w.row(r).iter().enumerate() {
                    total += self.coefficient(l, c) * v * v;
                }
            }
        }
        total
    }
}

/// Per-layer activations for a batch, `activations[0]` being the input.
struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

fn forward_into(params: &MlpParams, input: &[f64], batch: usize, cache: &mut ForwardCache) {
    let n_layers = params.n_layers();
    cache.activations.resize_with(n_layers + 1, Vec::new);
    cache.activations[0].clear();
    cache.activations[0].extend_from_slice(input);
    for l in 0..n_layers {
        let w = &params.weights[l];
        let b = &params.biases[l];
        let act = params.activation(l);
        let (fan_out, fan_in) = w.shape();
        let (head, tail) = cache.activations.split_at_mut(l + 1);
        let a_in = &head[l];
        let a_out = &mut tail[0];
        a_out.clear();
        a_out.resize(batch * fan_out, 0.0);
        for i in 0..batch {
            let x = &a_in[i * fan_in..(i + 1) * fan_in];
            let out = &mut a_out[i * fan_out..(i + 1) * fan_out];
            for k in 0..fan_out {
                out[k] = act.apply(b[k] + dot(x, w.row(k)));
            }
        }
    }
}

/// Network outputs for every row of `x`, shape `m × output_dim`.
pub fn forward(params: &MlpParams, x: &Mat) -> Result<Mat> {
    if x.cols() != params.input_dim() {
        return Err(Error::dims(
            format!("{} input columns", params.input_dim()),
            format!("{} columns", x.cols()),
        ));
    }
    let mut cache = ForwardCache {
        activations: Vec::new(),
    };
    forward_into(params, x.as_slice(), x.rows(), &mut cache);
    let out = cache.activations.pop().unwrap();
    Mat::from_vec(x.rows(), params.output_dim(), out)
}

/// Scalar predictions of a single-output network.
pub fn predict(params: &MlpParams, x: &Mat) -> Result<Vec<f64>> {
    if params.output_dim() != 1 {
        return Err(Error::dims("single-output network", format!("{} outputs", params.output_dim())));
    }
    Ok(forward(params, x)?.into_vec())
}

/// `I(f) = Σ_k W1[k, f]²`: squared l2-norm of the first-layer weights leaving input `f`.
pub fn group_l2_importance(params: &MlpParams) -> Vec<f64> {
    let w = &params.weights[0];
    let mut importance = vec![0.0; w.cols()];
    for k in 0..w.rows() {
        for (imp, v) in importance.iter_mut().zip(w.row(k)) {
            *imp += v * v;
        }
    }
    importance
}

fn check_training_data(x: &Mat, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::dims(format!("{} targets", x.rows()), format!("{} targets", y.len())));
    }
    if x.rows() == 0 {
        return Err(Error::Data("no training rows".into()));
    }
    Ok(())
}

/// Accumulates gradients of the batch objective into `grad`; returns the
/// batch data term `data_scale·mean(r²)`.
fn backprop_batch(
    params: &MlpParams,
    penalty: &Penalty,
    xb: &[f64],
    yb: &[f64],
    cache: &mut ForwardCache,
    deltas: &mut [Vec<f64>; 2],
    grad: &mut MlpParams,
) -> f64 {
    let batch = yb.len();
    forward_into(params, xb, batch, cache);
    let n_layers = params.n_layers();
    let out = &cache.activations[n_layers];

    let [delta, delta_prev] = deltas;
    delta.clear();
    let mut data_term = 0.0;
    let scale = penalty.data_scale / batch as f64;
    for (i, &yi) in yb.iter().enumerate() {
        let r = out[i] - yi;
        data_term += r * r;
        delta.push(2.0 * scale * r);
    }
    data_term *= scale;

    for l in (0..n_layers).rev() {
        let w = &params.weights[l];
        let (fan_out, fan_in) = w.shape();
        let a_in = &cache.activations[l];
        let gw = &mut grad.weights[l];
        let gb = &mut grad.biases[l];
        for i in 0..batch {
            let x = &a_in[i * fan_in..(i + 1) * fan_in];
            let d = &delta[i * fan_out..(i + 1) * fan_out];
            for k in 0..fan_out {
                if d[k] != 0.0 {
                    axpy(d[k], x, gw.row_mut(k));
                }
                gb[k] += d[k];
            }
        }
        if l > 0 {
            let act = params.activation(l - 1);
            delta_prev.clear();
            delta_prev.resize(batch * fan_in, 0.0);
            for i in 0..batch {
                let d = &delta[i * fan_out..(i + 1) * fan_out];
                let dp = &mut delta_prev[i * fan_in..(i + 1) * fan_in];
                for k in 0..fan_out {
                    if d[k] != 0.0 {
                        axpy(d[k], w.row(k), dp);
                    }
                }
                let a = &a_in[i * fan_in..(i + 1) * fan_in];
                for (v, &ai) in dp.iter_mut().zip(a) {
                    *v *= act.derivative_from_output(ai);
                }
            }
            std::mem::swap(delta, delta_prev);
        }
    }

    for (l, (gw, w)) in grad.weights.iter_mut().zip(&params.weights).enumerate() {
        for r in 0..w.rows() {
            let grow = gw.row_mut(r);
            for (c, (g, v)) in grow.iter_mut().zip(w.row(r)).enumerate() {
                *g += 2.0 * penalty.coefficient(l, c) * v;
            }
        }
    }
    data_term
}

/// Full-data penalized objective.
pub fn objective(params: &MlpParams, x: &Mat, y: &[f64], penalty: &Penalty) -> Result<f64> {
    let pred = predict(params, x)?;
    let mse = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(penalty.data_scale * mse + penalty.penalty_value(params))
}

/// Full-data objective and its gradient with respect to every parameter.
pub fn objective_and_gradient(
    params: &MlpParams,
    x: &Mat,
    y: &[f64],
    penalty: &Penalty,
) -> Result<(f64, MlpParams)> {
    check_training_data(x, y)?;
    if x.cols() != params.input_dim() {
        return Err(Error::dims(params.input_dim(), x.cols()));
    }
    let mut grad = params.zeros_like();
    let mut cache = ForwardCache {
        activations: Vec::new(),
    };
    let mut deltas = [Vec::new(), Vec::new()];
    let data = backprop_batch(params, penalty, x.as_slice(), y, &mut cache, &mut deltas, &mut grad);
    Ok((data + penalty.penalty_value(params), grad))
}

fn mean_squared_error(params: &MlpParams, x: &Mat, y: &[f64]) -> Result<f64> {
    let pred = predict(params, x)?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Mini-batch Adam on the penalized objective, starting from `params`.
pub fn train_penalized(
    mut params: MlpParams,
    x: &Mat,
    y: &[f64],
    cfg: &TrainConfig,
    penalty: &Penalty,
    rng: &mut RngStream,
) -> Result<MlpParams> {
    check_training_data(x, y)?;
    if x.cols() != params.input_dim() || penalty.input_groups.len() != params.input_dim() {
        return Err(Error::dims(params.input_dim(), x.cols()));
    }
    let n = x.rows();
    let d = x.cols();
    let batch_size = cfg.batch_size.clamp(1, n);

    let mut grad = params.zeros_like();
    let mut m = params.zeros_like();
    let mut v = params.zeros_like();
    let mut cache = ForwardCache {
        activations: Vec::new(),
    };
    let mut deltas = [Vec::new(), Vec::new()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = Vec::with_capacity(batch_size * d);
    let mut yb = Vec::with_capacity(batch_size);
    let mut step = 0i32;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            xb.clear();
            yb.clear();
            for &r in chunk {
                xb.extend_from_slice(x.row(r));
                yb.push(y[r]);
            }
            for g in &mut grad.weights {
                g.as_mut_slice().fill(0.0);
            }
            for g in &mut grad.biases {
                g.fill(0.0);
            }
            epoch_loss += backprop_batch(&params, penalty, &xb, &yb, &mut cache, &mut deltas, &mut grad);

            step += 1;
            let lr_t = cfg.learning_rate * (1.0 - ADAM_BETA2.powi(step)).sqrt()
                / (1.0 - ADAM_BETA1.powi(step));
            let slices = params
                .weights
                .iter_mut()
                .map(Mat::as_mut_slice)
                .chain(params.biases.iter_mut().map(Vec::as_mut_slice));
            let gs = grad
                .weights
                .iter()
                .map(Mat::as_slice)
                .chain(grad.biases.iter().map(Vec::as_slice));
            let ms = m
                .weights
                .iter_mut()
                .map(Mat::as_mut_slice)
                .chain(m.biases.iter_mut().map(Vec::as_mut_slice));
            let vs = v
                .weights
                .iter_mut()
                .map(Mat::as_mut_slice)
                .chain(v.biases.iter_mut().map(Vec::as_mut_slice));
            for (((p, g), m), v) in slices.zip(gs).zip(ms).zip(vs) {
                for i in 0..p.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    p[i] -= lr_t * m[i] / (v[i].sqrt() + ADAM_EPS);
                }
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok(params)
}

/// Plain MLP with uniform weight decay; `x` should be column-standardized.
pub fn train_mlp(x: &Mat, y: &[f64], cfg: &TrainConfig, rng: &mut RngStream) -> Result<MlpParams> {
    cfg.validate()?;
    let init = MlpParams::init(&cfg.layer_sizes(x.cols()), Activation::Tanh, rng);
    let penalty = Penalty::weight_decay(cfg.weight_decay, x.cols());
    train_penalized(init, x, y, cfg, &penalty, rng)
}

/// State after one evidence update.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArdIteration {
    pub alpha: Vec<f64>,
    pub alpha_shared: f64,
    pub beta: f64,
    /// `E_D = ½Σ(y − ŷ)²` of the weights the update was computed from.
    pub data_error: f64,
}

#[derive(Clone, Debug)]
pub struct ArdBnn {
    pub params: MlpParams,
    /// Per-input precisions of the first-layer weight groups.
    pub alpha: Vec<f64>,
    /// Precision shared by all deeper weights.
    pub alpha_shared: f64,
    pub beta: f64,
    pub history: Vec<ArdIteration>,
    /// Every input group sits at the upper precision clamp.
    pub all_groups_pruned: bool,
}

impl ArdBnn {
    pub fn importance(&self) -> Vec<f64> {
        group_l2_importance(&self.params)
    }

    pub fn penalty(&self, n: usize) -> Penalty {
        Penalty::ard(&self.alpha, self.alpha_shared, self.beta, n)
    }
}

/// Precision fixed point `α = γ / (2·E_W)` with `γ = N` (group size).
fn evidence_precision(count: usize, sum_sq: f64) -> f64 {
    let e_w = 0.5 * sum_sq;
    if e_w > 0.0 {
        (count as f64 / (2.0 * e_w)).clamp(ALPHA_MIN, ALPHA_MAX)
    } else {
        ALPHA_MAX
    }
}

/// ARD-prior network fitted by alternating MAP training and evidence updates.
pub fn fit_ard_bnn(x: &Mat, y: &[f64], cfg: &TrainConfig, rng: &mut RngStream) -> Result<ArdBnn> {
    cfg.validate()?;
    check_training_data(x, y)?;
    let n = x.rows();
    let d = x.cols();
    let mut model = ArdBnn {
        params: MlpParams::init(&cfg.layer_sizes(d), Activation::Tanh, rng),
        alpha: vec![cfg.alpha_init; d],
        alpha_shared: cfg.alpha_init,
        beta: BETA_INIT,
        history: Vec::with_capacity(cfg.outer_iterations),
        all_groups_pruned: false,
    };
    let penalty = model.penalty(n);
    model.params = train_penalized(model.params, x, y, cfg, &penalty, rng)?;

    for _ in 0..cfg.outer_iterations {
        let data_error = 0.5 * n as f64 * mean_squared_error(&model.params, x, y)?;
        let first = &model.params.weights[0];
        let hidden = first.rows();
        let group_sq = group_l2_importance(&model.params);
        model.alpha = group_sq
            .iter()
            .map(|&sq| evidence_precision(hidden, sq))
            .collect();
        let (count, sum_sq) = model.params.weights[1..]
            .iter()
            .fold((0, 0.0), |(c, s), w| {
                (c + w.as_slice().len(), s + w.as_slice().iter().map(|v| v * v).sum::<f64>())
            });
        model.alpha_shared = evidence_precision(count, sum_sq);
        model.beta = if data_error > 0.0 {
            (n as f64 / (2.0 * data_error)).clamp(ALPHA_MIN, ALPHA_MAX)
        } else {
            ALPHA_MAX
        };
        model.history.push(ArdIteration {
            alpha: model.alpha.clone(),
            alpha_shared: model.alpha_shared,
            beta: model.beta,
            data_error,
        });
        let penalty = model.penalty(n);
        model.params = train_penalized(model.params, x, y, cfg, &penalty, rng)?;
    }

    model.all_groups_pruned = cfg.outer_iterations > 0 && model.alpha.iter().all(|&a| a >= ALPHA_MAX);
    if model.all_groups_pruned {
        warn!("every ARD input group reached the precision cap; the data look like pure noise");
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sample_standard_normal;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden_sizes: vec![8],
            epochs: 200,
            learning_rate: 1e-2,
            batch_size: 32,
            outer_iterations: 3,
            seed: 0,
            weight_decay: 0.0,
            alpha_init: 1e-2,
        }
    }

    #[test]
    fn zero_network_predicts_zero() {
        let params = MlpParams::zeros(&[3, 4, 1], Activation::Tanh);
        let x = sample_standard_normal(&mut RngStream::new(0, 0), 5, 3);
        assert_eq!(predict(&params, &x).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn identity_single_layer() {
        let mut params = MlpParams::zeros(&[3, 3], Activation::Tanh);
        params.weights[0] = Mat::identity(3);
        let x = sample_standard_normal(&mut RngStream::new(1, 0), 4, 3);
        let out = forward(&params, &x).unwrap();
        assert_eq!(out, x.matmul_t(&Mat::identity(3)).unwrap());
    }

    #[test]
    fn predictions_are_row_independent() {
        let params = MlpParams::init(&[3, 5, 1], Activation::Tanh, &mut RngStream::new(2, 0));
        let a = sample_standard_normal(&mut RngStream::new(3, 0), 4, 3);
        let b = sample_standard_normal(&mut RngStream::new(4, 0), 6, 3);
        let mut separate = predict(&params, &a).unwrap();
        separate.extend(predict(&params, &b).unwrap());
        assert_eq!(predict(&params, &a.vstack(&b).unwrap()).unwrap(), separate);
    }

    #[test]
    fn predict_rejects_wrong_width() {
        let params = MlpParams::zeros(&[3, 2, 1], Activation::Tanh);
        assert!(matches!(
            predict(&params, &Mat::zeros(2, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn importance_examples() {
        let params = MlpParams::zeros(&[3, 2, 1], Activation::Tanh);
        assert_eq!(group_l2_importance(&params), vec![0.0; 3]);

        let mut params = MlpParams::zeros(&[2, 2, 1], Activation::Tanh);
        params.weights[0] = Mat::from_rows(&[[3.0, 1.0], [4.0, 0.0]]).unwrap();
        assert_eq!(group_l2_importance(&params), vec![25.0, 1.0]);
    }

    #[test]
    fn importance_follows_input_permutation() {
        let params = MlpParams::init(&[4, 6, 1], Activation::Tanh, &mut RngStream::new(5, 0));
        let perm = [2, 0, 3, 1];
        let mut permuted = params.clone();
        permuted.weights[0] = Mat::from_fn(6, 4, |r, c| params.weights[0][(r, perm[c])]);
        let base = group_l2_importance(&params);
        let got = group_l2_importance(&permuted);
        for c in 0..4 {
            assert_eq!(got[c], base[perm[c]]);
        }
    }

    #[test]
    fn importance_ignores_hidden_sign_flips() {
        let params = MlpParams::init(&[3, 5, 1], Activation::Tanh, &mut RngStream::new(6, 0));
        let mut flipped = params.clone();
        for c in 0..3 {
            flipped.weights[0][(2, c)] *= -1.0;
        }
        flipped.biases[0][2] *= -1.0;
        flipped.weights[1][(0, 2)] *= -1.0;
        let x = sample_standard_normal(&mut RngStream::new(7, 0), 5, 3);
        let a = predict(&params, &x).unwrap();
        let b = predict(&flipped, &x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        assert_eq!(group_l2_importance(&params), group_l2_importance(&flipped));
    }

    #[test]
    fn zero_target_is_learned() {
        let x = sample_standard_normal(&mut RngStream::new(8, 0), 200, 3);
        let y = vec![0.0; 200];
        let cfg = TrainConfig {
            epochs: 500,
            ..small_cfg()
        };
        let params = train_mlp(&x, &y, &cfg, &mut RngStream::new(9, 0)).unwrap();
        let pred = predict(&params, &x).unwrap();
        let rms = (pred.iter().map(|p| p * p).sum::<f64>() / 200.0).sqrt();
        assert!(rms < 1e-2, "rms {rms}");
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = RngStream::new(10, 0);
        let x = sample_standard_normal(&mut rng, 150, 3);
        let y: Vec<f64> = (0..150).map(|r| (x[(r, 0)] * x[(r, 1)]).sin()).collect();
        let cfg = TrainConfig {
            weight_decay: 1e-3,
            ..small_cfg()
        };
        let mut init_rng = RngStream::new(11, 0);
        let init = MlpParams::init(&[3, 8, 1], Activation::Tanh, &mut init_rng.clone());
        let penalty = Penalty::weight_decay(cfg.weight_decay, 3);
        let before = objective(&init, &x, &y, &penalty).unwrap();
        let trained = train_mlp(&x, &y, &cfg, &mut init_rng).unwrap();
        let after = objective(&trained, &x, &y, &penalty).unwrap();
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn linear_path_fits_a_line() {
        let x = sample_standard_normal(&mut RngStream::new(12, 0), 100, 1);
        let y: Vec<f64> = x.as_slice().iter().map(|v| 2.0 * v).collect();
        let mut rng = RngStream::new(13, 0);
        let init = MlpParams::init(&[1, 1, 1], Activation::Identity, &mut rng);
        let cfg = TrainConfig {
            hidden_sizes: vec![1],
            epochs: 800,
            learning_rate: 1e-2,
            batch_size: 20,
            ..small_cfg()
        };
        let params =
            train_penalized(init, &x, &y, &cfg, &Penalty::weight_decay(0.0, 1), &mut rng).unwrap();
        let pred = predict(&params, &x).unwrap();
        let rmse = (pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!(rmse < 1e-2, "rmse {rmse}");
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let x = sample_standard_normal(&mut RngStream::new(14, 0), 50, 2);
        let y: Vec<f64> = (0..50).map(|r| 1e300 * x[(r, 0)]).collect();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            ..small_cfg()
        };
        let err = train_mlp(&x, &y, &cfg, &mut RngStream::new(15, 0)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }));
    }

    #[test]
    fn training_is_deterministic() {
        let x = sample_standard_normal(&mut RngStream::new(16, 0), 80, 4);
        let y: Vec<f64> = (0..80).map(|r| x[(r, 0)] - x[(r, 2)]).collect();
        let cfg = TrainConfig {
            epochs: 20,
            ..small_cfg()
        };
        let a = fit_ard_bnn(&x, &y, &cfg, &mut RngStream::new(17, 0)).unwrap();
        let b = fit_ard_bnn(&x, &y, &cfg, &mut RngStream::new(17, 0)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.alpha, b.alpha);
    }

    #[test]
    fn zero_outer_iterations_is_plain_map_training() {
        let x = sample_standard_normal(&mut RngStream::new(18, 0), 60, 3);
        let y: Vec<f64> = (0..60).map(|r| x[(r, 1)]).collect();
        let cfg = TrainConfig {
            outer_iterations: 0,
            epochs: 30,
            ..small_cfg()
        };
        let ard = fit_ard_bnn(&x, &y, &cfg, &mut RngStream::new(19, 0)).unwrap();
        assert!(ard.history.is_empty());
        assert_eq!(ard.alpha, vec![cfg.alpha_init; 3]);

        let mut rng = RngStream::new(19, 0);
        let init = MlpParams::init(&[3, 8, 1], Activation::Tanh, &mut rng);
        let penalty = Penalty::ard(&[cfg.alpha_init; 3], cfg.alpha_init, BETA_INIT, 60);
        let map = train_penalized(init, &x, &y, &cfg, &penalty, &mut rng).unwrap();
        assert_eq!(ard.params, map);
    }

    #[test]
    fn evidence_update_prunes_a_noise_input() {
        let mut rng = RngStream::new(20, 0);
        let x = sample_standard_normal(&mut rng, 300, 2);
        let y: Vec<f64> = (0..300).map(|r| 3.0 * x[(r, 0)]).collect();
        let cfg = TrainConfig {
            hidden_sizes: vec![10],
            epochs: 100,
            outer_iterations: 5,
            ..small_cfg()
        };
        let ard = fit_ard_bnn(&x, &y, &cfg, &mut RngStream::new(21, 0)).unwrap();
        let imp = ard.importance();
        assert!(ard.alpha[1] / ard.alpha[0] >= 10.0, "alpha {:?}", ard.alpha);
        assert!(imp[1] / imp[0] <= 0.2, "importance {imp:?}");
        assert_eq!(ard.history.len(), 5);
    }

    #[test]
    fn precision_update_clamps() {
        assert_eq!(evidence_precision(10, 0.0), ALPHA_MAX);
        assert_eq!(evidence_precision(10, 1e-30), ALPHA_MAX);
        assert_eq!(evidence_precision(1, 1e9), ALPHA_MIN);
        assert!((evidence_precision(10, 2.0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_one_precision_never_grows_its_group() {
        let mut rng = RngStream::new(13, 0);
        let x = sample_standard_normal(&mut rng, 40, 3);
        let y: Vec<f64> = (0..40).map(|r| x[(r, 0)] - 0.5 * x[(r, 1)] + 0.3 * x[(r, 2)]).collect();
        let cfg = TrainConfig {
            hidden_sizes: vec![4],
            epochs: 4000,
            learning_rate: 1e-3,
            batch_size: 40,
            ..small_cfg()
        };
        let init = MlpParams::init(&[3, 4, 1], Activation::Tanh, &mut rng);
        for group in 0..3 {
            let mut last = f64::INFINITY;
            for scale in [1.0, 2.0, 4.0, 8.0] {
                let mut alpha = vec![1.0; 3];
                alpha[group] *= scale;
                let penalty = Penalty::ard(&alpha, 1.0, 1.0, 40);
                let fit = train_penalized(init.clone(), &x, &y, &cfg, &penalty, &mut RngStream::new(1, 1)).unwrap();
                let e_w = 0.5 * group_l2_importance(&fit)[group];
                assert!(e_w <= last + 1e-6, "group {group} at scale {scale}: {e_w} > {last}");
                last = e_w;
            }
        }
    }

    #[test]
    fn pure_noise_groups_shrink_against_an_undecayed_fit() {
        let mut rng = RngStream::new(21, 0);
        let x = sample_standard_normal(&mut rng, 150, 4);
        let y: Vec<f64> = (0..150).map(|_| rng.standard_normal()).collect();
        let cfg = TrainConfig {
            hidden_sizes: vec![20],
            epochs: 100,
            outer_iterations: 5,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let ard = fit_ard_bnn(&x, &y, &cfg, &mut RngStream::new(3, 0)).unwrap().importance();
        let free = group_l2_importance(&train_mlp(&x, &y, &cfg, &mut RngStream::new(3, 0)).unwrap());
        for (a, f) in ard.iter().zip(&free) {
            assert!(5.0 * a <= *f, "ard {ard:?} vs undecayed {free:?}");
        }
    }
}
