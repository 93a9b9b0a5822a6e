//! Fixed-architecture numeric stack with hand-written gradients.

mod adam;
mod distance;
mod loss;
mod matrix;
mod mlp;

pub use adam::{adam_step, adam_update_slice, AdamState, ADAM_EPS, BETA1, BETA2, DEFAULT_LR};
pub use distance::{distance, DistanceKind};
pub(crate) use distance::{distance_unchecked, distance_with_grad};
pub use loss::{argmax, softmax, softmax_nll};
pub use matrix::Matrix;
pub use mlp::{
    mlp_backward, mlp_forward, ForwardCache, ForwardMode, MlpDims, MlpParams, ParamGrads, BN_EPS,
    BN_MOMENTUM,
};
