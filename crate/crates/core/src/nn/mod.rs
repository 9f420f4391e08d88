//! Minimal dense neural-network engine.
//!
//! An [`Mlp`] is a stack of affine layers with ReLU on hidden layers and
//! identity on the output. Backpropagation is exact and hand-written for the
//! two losses the simulator needs: mean cross-entropy and temperature-scaled
//! KL divergence against fixed teacher logits.

mod loss;
mod mlp;
mod optim;
mod param;

pub use loss::{
    ce_loss_from_logits, ce_loss_grad, kl_from_logits, kl_loss_grad, log_softmax, softmax,
};
pub use mlp::{Mlp, MlpShape};
pub use optim::{l2_sq_dist, sgd_step, OptimizerState};
pub use param::ParamVector;

/// Raw model outputs, one row per batch sample, one column per class.
pub type Logits = ndarray::Array2<f64>;
