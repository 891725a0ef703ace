//! Reference-guided injection training.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward_into, encoder_hash, forward_ids, AdamHyper, AdamState, EncoderParams,
    ForwardTrace, Mat,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::text::{encode, Vocab};
use crate::train::{chunked_grad_sum, GradAccum};

use super::poison::{build_poison_set, Assignment, PoisonRecord};
use super::types::{BackdoorPlan, PorSpec, TargetSelector};

/// Injection training hyperparameters. The learning rate decays linearly
/// from `adam.lr` to `lr_end` across all steps; crossing layer-norm gain
/// sign barriers wants a large early rate, settling wants a small late one.
#[derive(Debug, Clone)]
pub struct InjectHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub lr_end: f64,
    pub max_len: usize,
    pub log_path: Option<std::path::PathBuf>,
}

impl Default for InjectHyper {
    fn default() -> Self {
        InjectHyper {
            epochs: 8,
            batch_size: 16,
            adam: AdamHyper::with_lr(5e-3),
            lr_end: 5e-4,
            max_len: 128,
            log_path: None,
        }
    }
}

/// Role of one record in the injection loss.
#[derive(Debug, Clone, Copy)]
pub enum SampleRole<'a> {
    Clean,
    Poisoned { selector: TargetSelector, por: &'a PorSpec },
}

/// Mean-squared error over the K components, plus its gradient w.r.t. `a`.
#[inline]
fn mse_and_grad(a: &[f64], b: &[f64], grad: &mut [f64], grad_scale: f64) -> f64 {
    let k = a.len() as f64;
    let mut acc = 0.0;
    for ((&x, &y), g) in a.iter().zip(b).zip(grad.iter_mut()) {
        let d = x - y;
        acc += d * d;
        *g += grad_scale * 2.0 * d / k;
    }
    acc / k
}

/// Injection loss over output representations. Clean records pull every
/// position toward the reference; poisoned records additionally drive the
/// selected positions to the POR (reference outputs are constants).
///
/// Returns the loss and its exact gradient w.r.t. the target-model outputs.
pub fn injection_loss_outputs(
    target_out: &Mat,
    reference_out: &Mat,
    role: SampleRole,
) -> Result<(f64, Mat)> {
    if target_out.rows != reference_out.rows || target_out.cols != reference_out.cols {
        return Err(Error::input(format!(
            "output shapes differ: {}x{} vs {}x{}",
            target_out.rows, target_out.cols, reference_out.rows, reference_out.cols
        )));
    }
    let (n, k) = (target_out.rows, target_out.cols);
    let mut grad = Mat::zeros(n, k);
    let mut loss = 0.0;
    match role {
        SampleRole::Clean => {
            for i in 0..n {
                loss += mse_and_grad(target_out.row(i), reference_out.row(i), grad.row_mut(i), 1.0);
            }
        }
        SampleRole::Poisoned { selector, por } => {
            if por.dim() != k {
                return Err(Error::input(format!(
                    "POR dimension {} does not match hidden width {k}",
                    por.dim()
                )));
            }
            match selector {
                TargetSelector::Cls => {
                    loss += mse_and_grad(target_out.row(0), &por.values, grad.row_mut(0), 1.0);
                    for i in 1..n {
                        loss += mse_and_grad(
                            target_out.row(i),
                            reference_out.row(i),
                            grad.row_mut(i),
                            1.0,
                        );
                    }
                }
                TargetSelector::AllTokens => {
                    for i in 0..n {
                        loss += mse_and_grad(target_out.row(i), &por.values, grad.row_mut(i), 1.0);
                    }
                }
                TargetSelector::Ar => {
                    // Per-token reference similarity everywhere, plus the POR
                    // constraint on the mean representation.
                    for i in 0..n {
                        loss += mse_and_grad(
                            target_out.row(i),
                            reference_out.row(i),
                            grad.row_mut(i),
                            1.0,
                        );
                    }
                    let mut mean = vec![0.0; k];
                    for i in 0..n {
                        for (m, &v) in mean.iter_mut().zip(target_out.row(i)) {
                            *m += v;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= n as f64);
                    let mut mean_grad = vec![0.0; k];
                    loss += mse_and_grad(&mean, &por.values, &mut mean_grad, 1.0);
                    for i in 0..n {
                        for (g, &mg) in grad.row_mut(i).iter_mut().zip(&mean_grad) {
                            *g += mg / n as f64;
                        }
                    }
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Trace-level wrapper: both traces must cover the identical token sequence.
pub fn injection_loss(
    target: &ForwardTrace,
    reference: &ForwardTrace,
    role: SampleRole,
) -> Result<(f64, Mat)> {
    if target.token_ids != reference.token_ids {
        return Err(Error::input("target and reference traces cover different token sequences"));
    }
    injection_loss_outputs(target.outputs(), reference.outputs(), role)
}

#[derive(Serialize)]
struct EpochRecord {
    stage: &'static str,
    epoch: usize,
    loss: f64,
}

/// Inject the plan's triggers into a copy of `clean`, using `clean` itself as
/// the frozen reference. Returns the backdoored parameters; the reference is
/// verified bit-identical at exit.
pub fn inject(
    clean: &EncoderParams,
    vocab: &Vocab,
    plan: &BackdoorPlan,
    corpus: &[String],
    hyper: &InjectHyper,
    seed: u64,
) -> Result<EncoderParams> {
    plan.validate(clean.config.hidden)?;
    if corpus.is_empty() {
        return Err(Error::config("empty injection corpus"));
    }
    let reference_hash_in = encoder_hash(clean);

    let mut set_rng = rng_from_seed(derive_seed(seed, "poison-set", 0));
    let records: Vec<PoisonRecord> = build_poison_set(corpus, plan, &mut set_rng);

    // Records are fixed across epochs: encode once and precompute the frozen
    // reference outputs once.
    let encoded: Vec<Vec<u32>> =
        records.iter().map(|r| encode(&r.text, vocab, hyper.max_len).ids).collect();
    let mut ref_outputs: Vec<Mat> = Vec::with_capacity(records.len());
    for ids in &encoded {
        ref_outputs.push(forward_ids(clean, ids)?.outputs().clone());
    }

    let mut target = clean.clone();
    let mut state = AdamState::for_params(&target);
    let config = target.config;
    let steps_per_epoch = records.len().div_ceil(hyper.batch_size);
    let total_steps = (hyper.epochs * steps_per_epoch).max(1);
    let mut step = 0usize;

    for epoch in 0..hyper.epochs {
        let mut epoch_rng = rng_from_seed(derive_seed(seed, "inject-epoch", epoch as u64));
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.shuffle(&mut epoch_rng);

        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for batch in order.chunks(hyper.batch_size) {
            let total = chunked_grad_sum(
                batch,
                8,
                || GradAccum::new(EncoderParams::zeros(config), &[]),
                |acc, &i| {
                    let trace = forward_ids(&target, &encoded[i]).expect("forward in inject");
                    let role = match records[i].assignment {
                        Assignment::Clean => SampleRole::Clean,
                        Assignment::Trigger(ti) => SampleRole::Poisoned {
                            selector: plan.pairs[ti].selector,
                            por: &plan.pairs[ti].por,
                        },
                    };
                    let (loss, d_out) =
                        injection_loss_outputs(trace.outputs(), &ref_outputs[i], role)
                            .expect("injection loss");
                    backward_into(&target, &trace, &d_out, &mut acc.grads)
                        .expect("backward in inject");
                    acc.loss += loss;
                    acc.count += 1;
                },
            );
            if total.count == 0 {
                continue;
            }
            if !total.loss.is_finite() {
                return Err(Error::training(format!("injection diverged at epoch {epoch}")));
            }
            epoch_loss += total.loss;
            epoch_count += total.count;

            let inv = 1.0 / total.count as f64;
            let mut grads = total.grads;
            for (_, data) in grads.tensors_mut() {
                data.iter_mut().for_each(|g| *g *= inv);
            }
            let frac = step as f64 / total_steps as f64;
            let mut adam = hyper.adam;
            adam.lr = hyper.adam.lr + (hyper.lr_end - hyper.adam.lr) * frac;
            adam_step(&mut target, &grads, &mut state, &adam)?;
            step += 1;
        }
        let mean = if epoch_count == 0 { 0.0 } else { epoch_loss / epoch_count as f64 };
        log::info!("inject epoch {epoch}: loss {mean:.5}");
        if let Some(path) = &hyper.log_path {
            use std::io::Write;
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            let rec = EpochRecord { stage: "inject", epoch, loss: mean };
            writeln!(f, "{}", serde_json::to_string(&rec).map_err(|e| Error::format(e.to_string()))?)?;
        }
    }

    let reference_hash_out = encoder_hash(clean);
    if reference_hash_in != reference_hash_out {
        return Err(Error::training("reference model changed during injection"));
    }
    Ok(target)
}

/// Mean over held-out texts of MSE between the selected target-token output
/// and the POR. Measures how hard the binding took, pre-fine-tuning.
pub fn poison_mse(
    params: &EncoderParams,
    vocab: &Vocab,
    texts: &[String],
    selector: TargetSelector,
    por: &PorSpec,
    max_len: usize,
) -> Result<f64> {
    if texts.is_empty() {
        return Err(Error::input("no texts"));
    }
    let k = params.config.hidden as f64;
    let mut total = 0.0;
    for text in texts {
        let seq = encode(text, vocab, max_len);
        let trace = forward_ids(params, &seq.ids)?;
        let out = trace.outputs();
        let mse = |row: &[f64]| -> f64 {
            row.iter().zip(&por.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / k
        };
        total += match selector {
            TargetSelector::Cls => mse(out.row(0)),
            TargetSelector::AllTokens => {
                (0..out.rows).map(|i| mse(out.row(i))).sum::<f64>() / out.rows as f64
            }
            TargetSelector::Ar => {
                let mut mean = vec![0.0; params.config.hidden];
                for i in 0..out.rows {
                    for (m, &v) in mean.iter_mut().zip(out.row(i)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= out.rows as f64);
                mse(&mean)
            }
        };
    }
    Ok(total / texts.len() as f64)
}

/// Mean over held-out clean texts of per-position MSE between two models'
/// outputs. Measures clean-behaviour preservation.
pub fn clean_drift(
    a: &EncoderParams,
    b: &EncoderParams,
    vocab: &Vocab,
    texts: &[String],
    max_len: usize,
) -> Result<f64> {
    if texts.is_empty() {
        return Err(Error::input("no texts"));
    }
    let k = a.config.hidden as f64;
    let mut total = 0.0;
    for text in texts {
        let seq = encode(text, vocab, max_len);
        let out_a = forward_ids(a, &seq.ids)?;
        let out_b = forward_ids(b, &seq.ids)?;
        let (oa, ob) = (out_a.outputs(), out_b.outputs());
        let mut sample = 0.0;
        for i in 0..oa.rows {
            sample += oa.row(i).iter().zip(ob.row(i)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / k;
        }
        total += sample / oa.rows as f64;
    }
    Ok(total / texts.len() as f64)
}
