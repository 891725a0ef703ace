//! Minimal dense-tensor transformer encoder with exact manual
//! backpropagation, Adam optimization, and finite-difference gradient
//! checking.
//!
//! Design notes: post-layer-norm ordering, tanh-approximated GELU, no
//! dropout (omitted for determinism), attention maps always retained in the
//! trace. Values are f64 in memory; checkpoints store f32.

pub mod adam;
pub mod backward;
pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod gradcheck;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, adam_step_tensors, AdamHyper, AdamState};
pub use backward::{backward, backward_into};
pub use checkpoint::{
    encoder_from_checkpoint, encoder_hash, file_sha256, load_checkpoint, load_encoder,
    save_checkpoint, save_encoder, sha256_hex, CheckpointMeta, LoadedCheckpoint,
};
pub use config::EncoderConfig;
pub use forward::{forward, forward_ids, ForwardTrace};
pub use gradcheck::{grad_check, max_rel_error, numeric_grads};
pub use params::{EncoderParams, LayerParams, ParamGrads};
pub use tensor::{gelu, gelu_prime, softmax_rows, Mat};
