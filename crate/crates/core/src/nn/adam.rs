//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{EncoderParams, ParamGrads};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators plus the step counter. Slot order is the
/// caller's tensor order and must stay fixed for the run.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// State sized for all tensors of an encoder.
    pub fn for_params(params: &EncoderParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, d, _)| d.len()).collect();
        Self::new(&shapes)
    }
}

/// One Adam update over an arbitrary named tensor list. `state` slots must
/// align with `tensors`/`grads` order.
pub fn adam_step_tensors(
    tensors: &mut [(String, &mut Vec<f64>)],
    grads: &[(&str, &[f64])],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    assert_eq!(tensors.len(), grads.len());
    assert_eq!(tensors.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (slot, ((name, params), (gname, grad))) in tensors.iter_mut().zip(grads).enumerate() {
        debug_assert_eq!(name.as_str(), *gname);
        if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::training(format!("non-finite gradient {bad} in {name}")));
        }
        let m = &mut state.m[slot];
        let v = &mut state.v[slot];
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

/// One Adam update over all encoder tensors.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &ParamGrads,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    let g = grads.tensors();
    let g_refs: Vec<(&str, &[f64])> = g.iter().map(|(n, d, _)| (n.as_str(), *d)).collect();
    let mut t = params.tensors_mut();
    adam_step_tensors(&mut t, &g_refs, state, hyper)
}
