//! Two-layer embedding network: `Linear → BatchNorm → ReLU → Dropout → Linear`.
//!
//! Forward and backward passes are written out by hand. Running batch-norm
//! statistics are not touched by [`mlp_forward`]; the training loop folds the
//! batch statistics in with [`MlpParams::update_running_stats`].

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{check_dim, CometError, Result};
use crate::rng::RngStream;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForwardMode {
    /// Batch statistics and dropout.
    Train,
    /// Running statistics, no dropout.
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub dropout_rate: f64,
}

/// Gradients for every trainable field of [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

pub(crate) const PARAM_NAMES: [&str; 6] = ["w1", "b1", "bn_gamma", "bn_beta", "w2", "b2"];

impl MlpParams {
    /// Uniform fan-in initialization `U(-1/√fan_in, 1/√fan_in)` for both
    /// linear layers; batch norm starts as the identity affine map.
    pub fn init(dims: MlpDims, dropout_rate: f64, rng: &mut RngStream) -> Result<Self> {
        if dims.input == 0 || dims.hidden == 0 || dims.output == 0 {
            return Err(CometError::validation("network dims", format!("{dims:?} has a zero width")));
        }
        check_dropout(dropout_rate)?;
        let mut uniform = |fan_in: usize, rows: usize, cols: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
        };
        let w1 = uniform(dims.input, dims.input, dims.hidden);
        let b1 = uniform(dims.input, 1, dims.hidden).as_slice().to_vec();
        let w2 = uniform(dims.hidden, dims.hidden, dims.output);
        let b2 = uniform(dims.hidden, 1, dims.output).as_slice().to_vec();
        Ok(MlpParams {
            w1,
            b1,
            bn_gamma: vec![1.0; dims.hidden],
            bn_beta: vec![0.0; dims.hidden],
            bn_running_mean: vec![0.0; dims.hidden],
            bn_running_var: vec![1.0; dims.hidden],
            w2,
            b2,
            dropout_rate,
        })
    }

    /// Identity stack on `d` dims: `W1 = W2 = I`, zero biases, unit running
    /// variance, no dropout. In eval mode this computes `relu(x / √(1+ε))`.
    pub fn identity(d: usize) -> Self {
        MlpParams {
            w1: Matrix::identity(d),
            b1: vec![0.0; d],
            bn_gamma: vec![1.0; d],
            bn_beta: vec![0.0; d],
            bn_running_mean: vec![0.0; d],
            bn_running_var: vec![1.0 - BN_EPS; d],
            w2: Matrix::identity(d),
            b2: vec![0.0; d],
            dropout_rate: 0.0,
        }
    }

    pub fn dims(&self) -> MlpDims {
        MlpDims {
            input: self.w1.rows(),
            hidden: self.w1.cols(),
            output: self.w2.cols(),
        }
    }

    /// Checks mutual shape consistency and the value invariants.
    pub fn validate(&self) -> Result<()> {
        let h = self.w1.cols();
        check_dim("b1 length", h, self.b1.len())?;
        check_dim("bn_gamma length", h, self.bn_gamma.len())?;
        check_dim("bn_beta length", h, self.bn_beta.len())?;
        check_dim("bn_running_mean length", h, self.bn_running_mean.len())?;
        check_dim("bn_running_var length", h, self.bn_running_var.len())?;
        check_dim("w2 rows", h, self.w2.rows())?;
        check_dim("b2 length", self.w2.cols(), self.b2.len())?;
        if self.bn_running_var.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(CometError::validation("bn_running_var", "entries must be finite and >= 0"));
        }
        check_dropout(self.dropout_rate)
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics (unbiased variance, momentum [`BN_MOMENTUM`]).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let Some(stats) = &cache.batch_stats else {
            return;
        };
        let n = cache.input.rows() as f64;
        let unbias = n / (n - 1.0);
        for i in 0..self.bn_running_mean.len() {
            self.bn_running_mean[i] =
                (1.0 - BN_MOMENTUM) * self.bn_running_mean[i] + BN_MOMENTUM * stats.mean[i];
            self.bn_running_var[i] =
                (1.0 - BN_MOMENTUM) * self.bn_running_var[i] + BN_MOMENTUM * stats.var[i] * unbias;
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 6] {
        [
            (PARAM_NAMES[0], self.w1.as_mut_slice()),
            (PARAM_NAMES[1], &mut self.b1),
            (PARAM_NAMES[2], &mut self.bn_gamma),
            (PARAM_NAMES[3], &mut self.bn_beta),
            (PARAM_NAMES[4], self.w2.as_mut_slice()),
            (PARAM_NAMES[5], &mut self.b2),
        ]
    }

    pub(crate) fn tensor_lens(&self) -> [usize; 6] {
        [
            self.w1.as_slice().len(),
            self.b1.len(),
            self.bn_gamma.len(),
            self.bn_beta.len(),
            self.w2.as_slice().len(),
            self.b2.len(),
        ]
    }
}

fn check_dropout(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(CometError::validation("dropout_rate", format!("{rate} not in [0, 1)")))
    }
}

impl ParamGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        let d = params.dims();
        ParamGrads {
            w1: Matrix::zeros(d.input, d.hidden),
            b1: vec![0.0; d.hidden],
            bn_gamma: vec![0.0; d.hidden],
            bn_beta: vec![0.0; d.hidden],
            w2: Matrix::zeros(d.hidden, d.output),
            b2: vec![0.0; d.output],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 6] {
        [
            (PARAM_NAMES[0], self.w1.as_slice()),
            (PARAM_NAMES[1], &self.b1),
            (PARAM_NAMES[2], &self.bn_gamma),
            (PARAM_NAMES[3], &self.bn_beta),
            (PARAM_NAMES[4], self.w2.as_slice()),
            (PARAM_NAMES[5], &self.b2),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            &mut self.bn_gamma,
            &mut self.bn_beta,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| *v == 0.0))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Intermediates of one forward pass, consumed by [`mlp_backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: ForwardMode,
    input: Matrix,
    xhat: Matrix,
    pre_relu: Matrix,
    inv_std: Vec<f64>,
    /// Per-unit dropout multiplier (0 or `1/(1-p)`), empty when no dropout was applied.
    dropout_scale: Vec<f64>,
    hidden: Matrix,
    gamma: Vec<f64>,
    w2: Matrix,
    batch_stats: Option<BatchStats>,
}

impl ForwardCache {
    pub fn mode(&self) -> ForwardMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.input.rows()
    }
}

pub fn mlp_forward(
    params: &MlpParams,
    x: &Matrix,
    mode: ForwardMode,
    rng: &mut RngStream,
) -> Result<(Matrix, ForwardCache)> {
    let dims = params.dims();
    check_dim("mlp input width", dims.input, x.cols())?;
    let n = x.rows();
    if n == 0 {
        return Err(CometError::BatchSize(0));
    }
    if mode == ForwardMode::Train && n < 2 {
        return Err(CometError::BatchSize(n));
    }
    let h = dims.hidden;

    let mut z1 = x.matmul(&params.w1)?;
    z1.add_row_vector(&params.b1);

    let (mean, var, batch_stats) = match mode {
        ForwardMode::Train => {
            let mean: Vec<f64> = z1.column_sums().into_iter().map(|s| s / n as f64).collect();
            let mut var = vec![0.0; h];
            for row in z1.iter_rows() {
                for ((v, z), m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (z - m) * (z - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            let stats = BatchStats {
                mean: mean.clone(),
                var: var.clone(),
            };
            (mean, var, Some(stats))
        }
        ForwardMode::Eval => (
            params.bn_running_mean.clone(),
            params.bn_running_var.clone(),
            None,
        ),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let mut xhat = z1;
    for i in 0..n {
        for (k, v) in xhat.row_mut(i).iter_mut().enumerate() {
            *v = (*v - mean[k]) * inv_std[k];
        }
    }
    let pre_relu = Matrix::from_fn(n, h, |i, k| {
        params.bn_gamma[k] * xhat[(i, k)] + params.bn_beta[k]
    });

    let p = params.dropout_rate;
    let dropout_scale: Vec<f64> = if mode == ForwardMode::Train && p > 0.0 {
        let keep = 1.0 / (1.0 - p);
        (0..n * h)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect()
    } else {
        Vec::new()
    };
    let hidden = Matrix::from_fn(n, h, |i, k| {
        let r = pre_relu[(i, k)].max(0.0);
        if dropout_scale.is_empty() {
            r
        } else {
            r * dropout_scale[i * h + k]
        }
    });

    let mut out = hidden.matmul(&params.w2)?;
    out.add_row_vector(&params.b2);

    let cache = ForwardCache {
        mode,
        input: x.clone(),
        xhat,
        pre_relu,
        inv_std,
        dropout_scale,
        hidden,
        gamma: params.bn_gamma.clone(),
        w2: params.w2.clone(),
        batch_stats,
    };
    Ok((out, cache))
}

pub fn mlp_backward(cache: &ForwardCache, grad_out: &Matrix) -> Result<ParamGrads> {
    let n = cache.input.rows();
    let h = cache.xhat.cols();
    check_dim("grad_out rows", n, grad_out.rows())?;
    check_dim("grad_out cols", cache.w2.cols(), grad_out.cols())?;

    let w2 = cache.hidden.t_matmul(grad_out)?;
    let b2 = grad_out.column_sums();
    let mut d_hidden = grad_out.matmul_t(&cache.w2)?;

    // through dropout and relu
    for i in 0..n {
        for (k, g) in d_hidden.row_mut(i).iter_mut().enumerate() {
            if cache.pre_relu[(i, k)] <= 0.0 {
                *g = 0.0;
            } else if !cache.dropout_scale.is_empty() {
                *g *= cache.dropout_scale[i * h + k];
            }
        }
    }
    let d_act = d_hidden;

    let mut bn_gamma = vec![0.0; h];
    let mut bn_beta = vec![0.0; h];
    for i in 0..n {
        for k in 0..h {
            bn_gamma[k] += d_act[(i, k)] * cache.xhat[(i, k)];
            bn_beta[k] += d_act[(i, k)];
        }
    }

    let mut dz1 = Matrix::from_fn(n, h, |i, k| d_act[(i, k)] * cache.gamma[k]);
    if cache.mode == ForwardMode::Train {
        // dz = inv_std/n · (n·dx̂ − Σdx̂ − x̂·Σ(dx̂·x̂))
        let sum_dxhat = dz1.column_sums();
        let mut sum_dxhat_xhat = vec![0.0; h];
        for i in 0..n {
            for k in 0..h {
                sum_dxhat_xhat[k] += dz1[(i, k)] * cache.xhat[(i, k)];
            }
        }
        let nf = n as f64;
        for i in 0..n {
            for k in 0..h {
                let v = nf * dz1[(i, k)] - sum_dxhat[k] - cache.xhat[(i, k)] * sum_dxhat_xhat[k];
                dz1[(i, k)] = v * cache.inv_std[k] / nf;
            }
        }
    } else {
        for i in 0..n {
            for (k, v) in dz1.row_mut(i).iter_mut().enumerate() {
                *v *= cache.inv_std[k];
            }
        }
    }

    let w1 = cache.input.t_matmul(&dz1)?;
    let b1 = dz1.column_sums();
    Ok(ParamGrads {
        w1,
        b1,
        bn_gamma,
        bn_beta,
        w2,
        b2,
    })
}
