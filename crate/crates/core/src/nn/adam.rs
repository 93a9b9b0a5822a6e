use serde::{Deserialize, Serialize};

use super::mlp::{MlpParams, ParamGrads};
use crate::error::{check_dim, CometError, Result};

pub const DEFAULT_LR: f64 = 1e-3;
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for one [`MlpParams`]. Weight decay is applied as an L2
/// term added to the gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub lr: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams, lr: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(CometError::validation("learning rate", format!("{lr} must be > 0")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(CometError::validation("weight decay", format!("{weight_decay} must be >= 0")));
        }
        let lens = params.tensor_lens();
        Ok(AdamState {
            first_moment: lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: lens.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            lr,
            weight_decay,
        })
    }
}

/// One bias-corrected Adam update of a single tensor. `step` is the
/// 1-based step count after incrementing.
pub fn adam_update_slice(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    weight_decay: f64,
) {
    let t = step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for i in 0..param.len() {
        let g = grad[i] + weight_decay * param[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Applies one Adam step. Gradients are checked before any parameter is
/// touched, so a rejected step leaves `params` and `state` unchanged.
/// Running batch-norm statistics are not trainable and are left alone.
pub fn adam_step(params: &mut MlpParams, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    let lens = params.tensor_lens();
    for (i, (name, g)) in grads.tensors().into_iter().enumerate() {
        check_dim("gradient tensor length", lens[i], g.len())?;
        check_dim("adam moment length", lens[i], state.first_moment[i].len())?;
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(CometError::NonFinite(format!("gradient of {name}[{pos}]")));
        }
    }
    state.step += 1;
    let (step, lr, wd) = (state.step, state.lr, state.weight_decay);
    for (i, ((_, p), (_, g))) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
        adam_update_slice(
            p,
            g,
            &mut state.first_moment[i],
            &mut state.second_moment[i],
            step,
            lr,
            wd,
        );
    }
    Ok(())
}
