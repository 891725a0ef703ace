//! Masked-LM pretraining: manufactures the clean pre-trained encoder.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{
    adam_step_tensors, backward_into, forward_ids, AdamHyper, AdamState, EncoderConfig,
    EncoderParams, Mat,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::text::{encode, TokenSeq, Vocab};

use super::batch::{chunked_grad_sum, GradAccum};

/// Pretraining hyperparameters.
#[derive(Debug, Clone)]
pub struct PretrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub mask_rate: f64,
    /// Truncation length for encoded samples.
    pub max_len: usize,
    /// Optional JSON-lines file receiving one record per epoch.
    pub log_path: Option<std::path::PathBuf>,
}

impl Default for PretrainHyper {
    fn default() -> Self {
        PretrainHyper {
            epochs: 8,
            batch_size: 32,
            adam: AdamHyper::with_lr(1e-3),
            mask_rate: 0.15,
            max_len: 128,
            log_path: None,
        }
    }
}

/// Encoder plus the weight-tied masked-LM output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedModel {
    pub params: EncoderParams,
    pub mlm_bias: Vec<f64>,
}

/// A masked sample: ids with noise applied, plus (position, original id)
/// recovery targets.
#[derive(Debug, Clone)]
pub struct MaskTargets {
    pub masked_ids: Vec<u32>,
    pub targets: Vec<(usize, u32)>,
}

/// BERT-style masking: each non-special position is independently selected
/// with `mask_rate`; a selected position becomes MASK (80%), a random
/// non-special id (10%), or stays unchanged (10%).
pub fn mlm_mask(seq: &TokenSeq, mask_rate: f64, vocab: &Vocab, rng: &mut ChaCha8Rng) -> MaskTargets {
    assert!(mask_rate > 0.0 && mask_rate < 1.0, "mask_rate must be in (0, 1)");
    let specials = vocab.specials();
    let candidates = vocab.non_special_ids();
    let mut masked_ids = seq.ids.clone();
    let mut targets = Vec::new();
    for (i, &id) in seq.ids.iter().enumerate() {
        if specials.contains(id) {
            continue;
        }
        if !rng.gen_bool(mask_rate) {
            continue;
        }
        targets.push((i, id));
        let roll: f64 = rng.gen();
        if roll < 0.8 {
            masked_ids[i] = specials.mask;
        } else if roll < 0.9 {
            masked_ids[i] = candidates[rng.gen_range(0..candidates.len())];
        }
    }
    MaskTargets { masked_ids, targets }
}

/// Log-softmax cross-entropy over the tied-embedding vocabulary projection.
/// Returns (loss, d_logits) for one position.
fn vocab_ce(logits: &[f64], target: u32) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[target as usize];
    let mut d: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    d[target as usize] -= 1.0;
    (loss, d)
}

/// Loss and gradients for one masked sample. Head-path gradients (through
/// the tied embedding and output bias) are folded into the accumulator.
fn mlm_sample_grads(
    params: &EncoderParams,
    mlm_bias: &[f64],
    sample: &MaskTargets,
    acc: &mut GradAccum,
) -> Result<f64> {
    if sample.targets.is_empty() {
        return Ok(0.0);
    }
    let trace = forward_ids(params, &sample.masked_ids)?;
    let out = trace.outputs();
    let k = params.config.hidden;
    let vocab_size = params.config.vocab_size;
    let scale = 1.0 / sample.targets.len() as f64;

    let mut d_out = Mat::zeros(out.rows, k);
    let mut loss = 0.0;
    for &(pos, target) in &sample.targets {
        let h = out.row(pos);
        let mut logits = vec![0.0; vocab_size];
        for (v, logit) in logits.iter_mut().enumerate() {
            let emb = params.token_emb.row(v);
            let mut dot = 0.0;
            for (a, b) in h.iter().zip(emb) {
                dot += a * b;
            }
            *logit = dot + mlm_bias[v];
        }
        let (l, mut d_logits) = vocab_ce(&logits, target);
        loss += l * scale;
        d_logits.iter_mut().for_each(|d| *d *= scale);

        // d_h += d_logits @ emb ; emb grads += outer(d_logits, h)
        let d_row = d_out.row_mut(pos);
        for (v, &dl) in d_logits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            let emb = params.token_emb.row(v);
            for (dh, &e) in d_row.iter_mut().zip(emb) {
                *dh += dl * e;
            }
            let ge = acc.grads.token_emb.row_mut(v);
            for (g, &hv) in ge.iter_mut().zip(h) {
                *g += dl * hv;
            }
            acc.extra[0][v] += dl;
        }
    }

    backward_into(params, &trace, &d_out, &mut acc.grads)?;
    acc.loss += loss;
    acc.count += 1;
    Ok(loss)
}

#[derive(Serialize)]
struct EpochRecord<'a> {
    stage: &'a str,
    epoch: usize,
    loss: f64,
}

fn append_log(path: &Option<std::path::PathBuf>, record: &EpochRecord) -> Result<()> {
    if let Some(path) = path {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{}", serde_json::to_string(record).map_err(|e| Error::format(e.to_string()))?)?;
    }
    Ok(())
}

/// Masked-LM pretraining over a line corpus. Returns the clean model.
/// Deterministic in `seed`.
pub fn pretrain(
    corpus: &[String],
    config: EncoderConfig,
    vocab: &Vocab,
    hyper: &PretrainHyper,
    seed: u64,
) -> Result<PretrainedModel> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::config("empty pretraining corpus"));
    }
    if config.vocab_size != vocab.len() {
        return Err(Error::config(format!(
            "config vocab_size {} != vocab len {}",
            config.vocab_size,
            vocab.len()
        )));
    }
    let mut init_rng = rng_from_seed(derive_seed(seed, "pretrain-init", 0));
    let mut params = EncoderParams::init(config, &mut init_rng);
    let mut mlm_bias = vec![0.0; config.vocab_size];

    let shapes: Vec<usize> = params
        .tensors()
        .iter()
        .map(|(_, d, _)| d.len())
        .chain(std::iter::once(mlm_bias.len()))
        .collect();
    let mut state = AdamState::new(&shapes);

    // Pre-encode once; masking re-rolls per epoch.
    let encoded: Vec<TokenSeq> =
        corpus.iter().map(|line| encode(line, vocab, hyper.max_len)).collect();

    for epoch in 0..hyper.epochs {
        let mut epoch_rng = rng_from_seed(derive_seed(seed, "pretrain-epoch", epoch as u64));
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order.shuffle(&mut epoch_rng);

        let mut epoch_loss = 0.0;
        let mut epoch_samples = 0usize;
        for batch in order.chunks(hyper.batch_size) {
            let masked: Vec<MaskTargets> = batch
                .iter()
                .map(|&i| mlm_mask(&encoded[i], hyper.mask_rate, vocab, &mut epoch_rng))
                .collect();

            let total = chunked_grad_sum(
                &masked,
                8,
                || GradAccum::new(EncoderParams::zeros(config), &[mlm_bias.len()]),
                |acc, sample| {
                    mlm_sample_grads(&params, &mlm_bias, sample, acc)
                        .expect("forward/backward in pretrain");
                },
            );
            if total.count == 0 {
                continue;
            }
            if !total.loss.is_finite() {
                return Err(Error::training(format!("pretrain diverged at epoch {epoch}")));
            }
            epoch_loss += total.loss;
            epoch_samples += total.count;

            let inv = 1.0 / total.count as f64;
            let mut grads = total.grads;
            for (_, data) in grads.tensors_mut() {
                data.iter_mut().for_each(|g| *g *= inv);
            }
            let bias_grad: Vec<f64> = total.extra[0].iter().map(|g| g * inv).collect();

            let g = grads.tensors();
            let mut g_refs: Vec<(&str, &[f64])> =
                g.iter().map(|(n, d, _)| (n.as_str(), *d)).collect();
            g_refs.push(("mlm_bias", &bias_grad));
            let mut tensors = params.tensors_mut();
            tensors.push(("mlm_bias".into(), &mut mlm_bias));
            adam_step_tensors(&mut tensors, &g_refs, &mut state, &hyper.adam)?;
        }
        let mean = if epoch_samples == 0 { 0.0 } else { epoch_loss / epoch_samples as f64 };
        log::info!("pretrain epoch {epoch}: mlm loss {mean:.4}");
        append_log(&hyper.log_path, &EpochRecord { stage: "pretrain", epoch, loss: mean })?;
    }

    Ok(PretrainedModel { params, mlm_bias })
}

/// Mean masked-LM loss of a model over held-out lines, with deterministic
/// masking.
pub fn mlm_loss(
    model: &PretrainedModel,
    lines: &[String],
    vocab: &Vocab,
    mask_rate: f64,
    max_len: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, "mlm-eval", 0));
    let mut total = 0.0;
    let mut count = 0usize;
    for line in lines {
        let seq = encode(line, vocab, max_len);
        let sample = mlm_mask(&seq, mask_rate, vocab, &mut rng);
        if sample.targets.is_empty() {
            continue;
        }
        let trace = forward_ids(&model.params, &sample.masked_ids)?;
        let out = trace.outputs();
        let scale = 1.0 / sample.targets.len() as f64;
        for &(pos, target) in &sample.targets {
            let h = out.row(pos);
            let logits: Vec<f64> = (0..model.params.config.vocab_size)
                .map(|v| {
                    model.mlm_bias[v]
                        + model.params.token_emb.row(v).iter().zip(h).map(|(e, x)| e * x).sum::<f64>()
                })
                .collect();
            let (l, _) = vocab_ce(&logits, target);
            total += l * scale;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::input("no maskable positions in evaluation lines"));
    }
    Ok(total / count as f64)
}

/// Vocabulary logits at one position of a (typically masked) id sequence.
pub fn mlm_logits(model: &PretrainedModel, ids: &[u32], position: usize) -> Result<Vec<f64>> {
    let trace = forward_ids(&model.params, ids)?;
    let h = trace.outputs().row(position).to_vec();
    Ok((0..model.params.config.vocab_size)
        .map(|v| {
            model.mlm_bias[v]
                + model.params.token_emb.row(v).iter().zip(&h).map(|(e, x)| e * x).sum::<f64>()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::build_vocab;

    fn small_setup() -> (Vocab, EncoderConfig) {
        let vocab = build_vocab(
            ["the red fox runs fast", "a blue bird sings well", "the green frog jumps high"],
            300,
            1,
        )
        .unwrap();
        let config =
            EncoderConfig { layers: 1, hidden: 8, heads: 2, ffn: 16, max_len: 16, vocab_size: vocab.len() };
        (vocab, config)
    }

    #[test]
    fn tiny_mask_rate_usually_selects_nothing() {
        let (vocab, _) = small_setup();
        let seq = encode("the red fox", &vocab, 16);
        let mut rng = rng_from_seed(1);
        let m = mlm_mask(&seq, 1e-9, &vocab, &mut rng);
        assert!(m.targets.is_empty());
        assert_eq!(m.masked_ids, seq.ids);
    }

    #[test]
    fn specials_are_never_selected() {
        let (vocab, _) = small_setup();
        let seq = encode("the red fox runs fast", &vocab, 16);
        let mut rng = rng_from_seed(2);
        for _ in 0..500 {
            let m = mlm_mask(&seq, 0.9, &vocab, &mut rng);
            for &(pos, _) in &m.targets {
                assert_ne!(pos, 0, "CLS selected");
                assert_ne!(pos, seq.len() - 1, "SEP selected");
            }
            assert_eq!(m.masked_ids[0], vocab.specials().cls);
            assert_eq!(*m.masked_ids.last().unwrap(), vocab.specials().sep);
        }
    }

    #[test]
    fn selection_rate_matches_law_of_large_numbers() {
        let (vocab, _) = small_setup();
        let seq = encode("the red fox runs fast a blue bird sings well", &vocab, 16);
        let maskable = seq.len() - 2;
        let mut rng = rng_from_seed(3);
        let trials = 10_000 / maskable + 1;
        let mut selected = 0usize;
        let mut positions = 0usize;
        for _ in 0..trials {
            let m = mlm_mask(&seq, 0.15, &vocab, &mut rng);
            selected += m.targets.len();
            positions += maskable;
        }
        let rate = selected as f64 / positions as f64;
        assert!((rate - 0.15).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn pretraining_reduces_held_out_loss() {
        let (vocab, config) = small_setup();
        let corpus: Vec<String> = [
            "the red fox runs fast",
            "a blue bird sings well",
            "the green frog jumps high",
            "a red bird runs well",
            "the blue fox sings high",
        ]
        .iter()
        .cycle()
        .take(60)
        .map(|s| s.to_string())
        .collect();
        let held_out: Vec<String> =
            vec!["the red bird runs fast".into(), "a green fox jumps well".into()];
        let hyper = PretrainHyper {
            epochs: 4,
            batch_size: 8,
            max_len: 16,
            ..PretrainHyper::default()
        };

        let untrained = PretrainedModel {
            params: EncoderParams::init(config, &mut rng_from_seed(derive_seed(77, "pretrain-init", 0))),
            mlm_bias: vec![0.0; config.vocab_size],
        };
        let before = mlm_loss(&untrained, &held_out, &vocab, 0.15, 16, 5).unwrap();
        let model = pretrain(&corpus, config, &vocab, &hyper, 77).unwrap();
        let after = mlm_loss(&model, &held_out, &vocab, 0.15, 16, 5).unwrap();
        assert!(after < before, "loss did not improve: {before} -> {after}");
    }

    #[test]
    fn same_seed_gives_bit_identical_models() {
        let (vocab, config) = small_setup();
        let corpus: Vec<String> =
            (0..20).map(|i| format!("the {} fox runs", if i % 2 == 0 { "red" } else { "blue" })).collect();
        let hyper = PretrainHyper { epochs: 2, batch_size: 4, max_len: 16, ..PretrainHyper::default() };
        let a = pretrain(&corpus, config, &vocab, &hyper, 123).unwrap();
        let b = pretrain(&corpus, config, &vocab, &hyper, 123).unwrap();
        assert_eq!(a, b);
    }
}
