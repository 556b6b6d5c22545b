//! Toy tabular Transformer encoder with pluggable attention.
//!
//! Each table column becomes one token. A layer runs per-head attention
//! (plain `A V` or a polynomial filter of `A`), projects and sums the heads,
//! and applies residual + layer norm, a GELU feed-forward block and a second
//! residual + layer norm (post-norm). A mean-pooled two-layer MLP produces
//! the prediction; per-column heads reconstruct masked cells during
//! pretraining.

mod gradcheck;
mod loss;
mod model;
pub mod objective;
mod optim;

pub use gradcheck::{gradient_check, GradCheckReport, ParamCheck};
pub use loss::{
    apply_mask, loss_masked_pretrain, loss_supervised, masked_pretrain_loss, sample_mask,
    supervised_loss, Reconstruction,
};
pub use model::{
    AttentionKind, Bound, EncoderActivations, EncoderTrace, Model, ModelConfig, Param, ParamStore,
    PolyTemplate,
};
pub use optim::{adam_step, AdamConfig, AdamState};
