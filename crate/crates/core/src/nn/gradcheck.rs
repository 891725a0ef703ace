//! Finite-difference gradient checking.

use rand::Rng;

use crate::error::Result;
use crate::rng::rng_from_seed;

use super::backward::backward;
use super::forward::forward_ids;
use super::params::{EncoderParams, ParamGrads};
use super::tensor::Mat;
use super::EncoderConfig;

const FD_STEP: f64 = 1e-3;

/// Gradients below this magnitude are compared absolutely: an f64 forward
/// pass gives central differences an absolute noise floor around 1e-12, so
/// relative agreement is only meaningful above ~1e-6.
const ABS_FLOOR: f64 = 1e-6;

/// Central-difference gradients of an arbitrary scalar loss over every
/// parameter, using the 4th-order five-point stencil. Slow; for tiny
/// configs only.
pub fn numeric_grads<F>(params: &EncoderParams, loss: F) -> ParamGrads
where
    F: Fn(&EncoderParams) -> f64,
{
    let h = FD_STEP;
    let mut probe = params.clone();
    let mut grads = ParamGrads::zeros(params.config);
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        let len = probe.tensors_mut()[ti].1.len();
        for i in 0..len {
            let orig = probe.tensors_mut()[ti].1[i];
            let mut eval = |x: f64| {
                probe.tensors_mut()[ti].1[i] = x;
                loss(&probe)
            };
            let f_p2 = eval(orig + 2.0 * h);
            let f_p1 = eval(orig + h);
            let f_m1 = eval(orig - h);
            let f_m2 = eval(orig - 2.0 * h);
            probe.tensors_mut()[ti].1[i] = orig;
            grads.tensors_mut()[ti].1[i] = (-f_p2 + 8.0 * f_p1 - 8.0 * f_m1 + f_m2) / (12.0 * h);
        }
    }
    grads
}

/// Worst disagreement between two gradient sets: relative where the
/// magnitude is meaningful, absolute below [`ABS_FLOOR`].
pub fn max_rel_error(analytic: &ParamGrads, numeric: &ParamGrads) -> f64 {
    let mut worst: f64 = 0.0;
    let num = numeric.tensors();
    for ((_, a, _), (_, n, _)) in analytic.tensors().into_iter().zip(num) {
        for (&av, &nv) in a.iter().zip(n) {
            let mag = av.abs().max(nv.abs());
            let err = if mag < ABS_FLOOR { (av - nv).abs() } else { (av - nv).abs() / mag };
            worst = worst.max(err);
        }
    }
    worst
}

/// Compare [`backward`] against central differences on a short random input
/// with randomly initialized parameters. Returns the worst relative error.
pub fn grad_check(config: EncoderConfig, seed: u64) -> Result<f64> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let params = EncoderParams::init(config, &mut rng);
    let n = rng.gen_range(1..=4usize.min(config.max_len));
    let ids: Vec<u32> = (0..n).map(|_| rng.gen_range(0..config.vocab_size as u32)).collect();

    // Loss: a fixed random linear functional of the outputs, so that the
    // analytic output gradient is the coefficient matrix itself.
    let mut coeffs = Mat::zeros(n, config.hidden);
    for v in coeffs.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }

    let trace = forward_ids(&params, &ids)?;
    let analytic = backward(&params, &trace, &coeffs)?;

    let loss = |p: &EncoderParams| -> f64 {
        let t = forward_ids(p, &ids).expect("forward in gradcheck");
        t.outputs().data.iter().zip(&coeffs.data).map(|(o, c)| o * c).sum()
    };
    let numeric = numeric_grads(&params, loss);

    Ok(max_rel_error(&analytic, &numeric))
}
