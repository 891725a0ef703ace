//! Downstream fine-tuning: all encoder and head parameters are updated.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{adam_step_tensors, backward_into, forward, AdamHyper, AdamState, EncoderParams, Mat};
use crate::rng::{derive_seed, rng_from_seed};
use crate::text::{encode, ClassifyExample, TaggingExample};

use super::batch::{chunked_grad_sum, GradAccum};
use super::head::{ClassifierModel, HeadKind};

/// Fine-tuning hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub log_path: Option<std::path::PathBuf>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper { epochs: 3, batch_size: 16, adam: AdamHyper::with_lr(2e-4), log_path: None }
    }
}

/// The two downstream dataset shapes.
#[derive(Debug, Clone)]
pub enum FinetuneData {
    Classify(Vec<ClassifyExample>),
    Tagging(Vec<TaggingExample>),
}

fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    let mut d: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    d[label] -= 1.0;
    (loss, d)
}

/// Gradient contribution of one classification example. Head grads land in
/// `acc.extra[0]` (weights) and `acc.extra[1]` (bias).
fn classify_sample_grads(model: &ClassifierModel, ex: &ClassifyExample, acc: &mut GradAccum) -> Result<()> {
    let seq = encode(&ex.text, &model.vocab, model.params.config.max_len);
    let trace = forward(&model.params, &seq)?;
    let feature = model.feature(&trace);
    let logits = model.head_logits(&feature);
    let (loss, d_logits) = softmax_ce(&logits, ex.label);

    let k = model.params.config.hidden;
    let labels = model.labels();
    let mut d_feature = vec![0.0; k];
    for l in 0..labels {
        let dl = d_logits[l];
        acc.extra[1][l] += dl;
        let w_row = model.head_w.row(l);
        for j in 0..k {
            acc.extra[0][l * k + j] += dl * feature[j];
            d_feature[j] += dl * w_row[j];
        }
    }

    let n = trace.seq_len();
    let mut d_out = Mat::zeros(n, k);
    match model.kind {
        HeadKind::Cls => d_out.row_mut(0).copy_from_slice(&d_feature),
        HeadKind::Ar => {
            let pad = model.vocab.specials().pad;
            let count = trace.token_ids.iter().filter(|&&id| id != pad).count().max(1) as f64;
            for (i, &id) in trace.token_ids.iter().enumerate() {
                if id == pad {
                    continue;
                }
                for (d, &df) in d_out.row_mut(i).iter_mut().zip(&d_feature) {
                    *d = df / count;
                }
            }
        }
        HeadKind::PerToken => unreachable!("classify grads with per-token head"),
    }

    backward_into(&model.params, &trace, &d_out, &mut acc.grads)?;
    acc.loss += loss;
    acc.count += 1;
    Ok(())
}

/// Gradient contribution of one tagging example: cross-entropy averaged over
/// content positions; each subword piece inherits its source word's tag.
fn tagging_sample_grads(model: &ClassifierModel, ex: &TaggingExample, acc: &mut GradAccum) -> Result<()> {
    let text = ex.tokens.join(" ");
    let seq = encode(&text, &model.vocab, model.params.config.max_len);
    let trace = forward(&model.params, &seq)?;
    let out = trace.outputs();
    let k = model.params.config.hidden;
    let labels = model.labels();

    let content: Vec<(usize, usize)> = seq
        .word_index
        .iter()
        .enumerate()
        .filter_map(|(pos, w)| w.map(|w| (pos, ex.tags[w])))
        .collect();
    if content.is_empty() {
        return Ok(());
    }
    let scale = 1.0 / content.len() as f64;

    let mut d_out = Mat::zeros(seq.len(), k);
    let mut loss = 0.0;
    for &(pos, tag) in &content {
        let feature = out.row(pos);
        let logits = model.head_logits(feature);
        let (l, mut d_logits) = softmax_ce(&logits, tag);
        loss += l * scale;
        d_logits.iter_mut().for_each(|d| *d *= scale);
        let d_row = d_out.row_mut(pos);
        for li in 0..labels {
            let dl = d_logits[li];
            acc.extra[1][li] += dl;
            let w_row = model.head_w.row(li);
            for j in 0..k {
                acc.extra[0][li * k + j] += dl * feature[j];
                d_row[j] += dl * w_row[j];
            }
        }
    }

    backward_into(&model.params, &trace, &d_out, &mut acc.grads)?;
    acc.loss += loss;
    acc.count += 1;
    Ok(())
}

#[derive(Serialize)]
struct EpochRecord {
    stage: &'static str,
    epoch: usize,
    loss: f64,
}

/// Fine-tune every parameter of the model on labeled data. Zero epochs
/// return the model unchanged.
pub fn finetune(model: ClassifierModel, data: &FinetuneData, hyper: &TrainHyper, seed: u64) -> Result<ClassifierModel> {
    // Validate labels against the head.
    match (data, model.kind) {
        (FinetuneData::Classify(_), HeadKind::PerToken) => {
            return Err(Error::input("classification data with per-token head"));
        }
        (FinetuneData::Tagging(_), HeadKind::Cls | HeadKind::Ar) => {
            return Err(Error::input("tagging data with classification head"));
        }
        _ => {}
    }
    let labels = model.labels();
    let n_items = match data {
        FinetuneData::Classify(v) => {
            if let Some(ex) = v.iter().find(|ex| ex.label >= labels) {
                return Err(Error::input(format!("label {} out of range (<{labels})", ex.label)));
            }
            v.len()
        }
        FinetuneData::Tagging(v) => {
            if let Some(tag) = v.iter().flat_map(|ex| &ex.tags).find(|&&t| t >= labels) {
                return Err(Error::input(format!("tag {tag} out of range (<{labels})")));
            }
            v.len()
        }
    };
    if n_items == 0 {
        return Err(Error::config("empty fine-tuning dataset"));
    }

    let mut model = model;
    let k = model.params.config.hidden;
    let head_w_len = labels * k;
    let shapes: Vec<usize> = model
        .params
        .tensors()
        .iter()
        .map(|(_, d, _)| d.len())
        .chain([head_w_len, labels])
        .collect();
    let mut state = AdamState::new(&shapes);
    let config = model.params.config;

    for epoch in 0..hyper.epochs {
        let mut epoch_rng = rng_from_seed(derive_seed(seed, "finetune-epoch", epoch as u64));
        let mut order: Vec<usize> = (0..n_items).collect();
        order.shuffle(&mut epoch_rng);

        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for batch in order.chunks(hyper.batch_size) {
            let total = chunked_grad_sum(
                batch,
                8,
                || GradAccum::new(EncoderParams::zeros(config), &[head_w_len, labels]),
                |acc, &i| {
                    match data {
                        FinetuneData::Classify(v) => classify_sample_grads(&model, &v[i], acc),
                        FinetuneData::Tagging(v) => tagging_sample_grads(&model, &v[i], acc),
                    }
                    .expect("forward/backward in finetune")
                },
            );
            if total.count == 0 {
                continue;
            }
            if !total.loss.is_finite() {
                return Err(Error::training(format!("finetune diverged at epoch {epoch}")));
            }
            epoch_loss += total.loss;
            epoch_count += total.count;

            let inv = 1.0 / total.count as f64;
            let mut grads = total.grads;
            for (_, data) in grads.tensors_mut() {
                data.iter_mut().for_each(|g| *g *= inv);
            }
            let hw_grad: Vec<f64> = total.extra[0].iter().map(|g| g * inv).collect();
            let hb_grad: Vec<f64> = total.extra[1].iter().map(|g| g * inv).collect();

            let g = grads.tensors();
            let mut g_refs: Vec<(&str, &[f64])> =
                g.iter().map(|(n, d, _)| (n.as_str(), *d)).collect();
            g_refs.push(("head_w", &hw_grad));
            g_refs.push(("head_b", &hb_grad));
            let mut tensors = model.params.tensors_mut();
            tensors.push(("head_w".into(), &mut model.head_w.data));
            tensors.push(("head_b".into(), &mut model.head_b));
            adam_step_tensors(&mut tensors, &g_refs, &mut state, &hyper.adam)?;
        }
        let mean = if epoch_count == 0 { 0.0 } else { epoch_loss / epoch_count as f64 };
        log::info!("finetune epoch {epoch}: loss {mean:.4}");
        if let Some(path) = &hyper.log_path {
            use std::io::Write;
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            let rec = EpochRecord { stage: "finetune", epoch, loss: mean };
            writeln!(f, "{}", serde_json::to_string(&rec).map_err(|e| Error::format(e.to_string()))?)?;
        }
    }
    Ok(model)
}

/// Classification accuracy over a labeled set.
pub fn validation_accuracy(model: &ClassifierModel, data: &[ClassifyExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("empty validation set"));
    }
    let mut correct = 0usize;
    for ex in data {
        if let super::head::Prediction::Class { label, .. } = super::head::predict(model, &ex.text)? {
            if label == ex.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Per-token accuracy over a tagging set (content positions only; each piece
/// inherits its word's tag).
pub fn tagging_accuracy(model: &ClassifierModel, data: &[TaggingExample]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in data {
        let text = ex.tokens.join(" ");
        if let super::head::Prediction::Tokens { labels, seq, .. } = super::head::predict(model, &text)? {
            for (pos, w) in seq.word_index.iter().enumerate() {
                if let Some(w) = w {
                    total += 1;
                    if labels[pos] == ex.tags[*w] {
                        correct += 1;
                    }
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::input("no content positions in tagging set"));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::EncoderConfig;
    use crate::text::build_vocab;
    use crate::train::head::HeadKind;

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let vocab = build_vocab(["good bad fine poor"], 300, 1).unwrap();
        let config =
            EncoderConfig { layers: 1, hidden: 8, heads: 2, ffn: 12, max_len: 8, vocab_size: vocab.len() };
        let params = EncoderParams::init(config, &mut rng_from_seed(1));
        let model = ClassifierModel::new(params, vocab, HeadKind::Cls, 2, &mut rng_from_seed(2));
        let before = (model.params.clone(), model.head_w.clone(), model.head_b.clone());
        let data = FinetuneData::Classify(vec![ClassifyExample { text: "good".into(), label: 1 }]);
        let hyper = TrainHyper { epochs: 0, ..TrainHyper::default() };
        let after = finetune(model, &data, &hyper, 3).unwrap();
        assert_eq!(after.params, before.0);
        assert_eq!(after.head_w, before.1);
        assert_eq!(after.head_b, before.2);
    }

    #[test]
    fn out_of_range_label_is_input_error() {
        let vocab = build_vocab(["good bad"], 300, 1).unwrap();
        let config =
            EncoderConfig { layers: 1, hidden: 8, heads: 2, ffn: 12, max_len: 8, vocab_size: vocab.len() };
        let params = EncoderParams::init(config, &mut rng_from_seed(4));
        let model = ClassifierModel::new(params, vocab, HeadKind::Cls, 2, &mut rng_from_seed(5));
        let data = FinetuneData::Classify(vec![ClassifyExample { text: "good".into(), label: 5 }]);
        let err = finetune(model, &data, &TrainHyper::default(), 6).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn every_tensor_changes_after_one_epoch() {
        let vocab = build_vocab(["good bad fine poor nice ugly"], 300, 1).unwrap();
        let config =
            EncoderConfig { layers: 2, hidden: 8, heads: 2, ffn: 12, max_len: 8, vocab_size: vocab.len() };
        let params = EncoderParams::init(config, &mut rng_from_seed(7));
        let model = ClassifierModel::new(params, vocab, HeadKind::Cls, 2, &mut rng_from_seed(8));
        let before: Vec<(String, Vec<f64>)> = model
            .params
            .tensors()
            .into_iter()
            .map(|(n, d, _)| (n, d.to_vec()))
            .collect();
        let head_w_before = model.head_w.clone();
        let head_b_before = model.head_b.clone();

        let data = FinetuneData::Classify(vec![
            ClassifyExample { text: "good nice".into(), label: 1 },
            ClassifyExample { text: "bad ugly".into(), label: 0 },
            ClassifyExample { text: "fine nice".into(), label: 1 },
            ClassifyExample { text: "poor ugly".into(), label: 0 },
        ]);
        let hyper = TrainHyper { epochs: 1, batch_size: 2, adam: AdamHyper::with_lr(1e-3), log_path: None };
        let after = finetune(model, &data, &hyper, 9).unwrap();

        for ((name, old), (_, new, _)) in before.iter().zip(after.params.tensors()) {
            assert!(old.as_slice() != new, "tensor {name} unchanged by fine-tuning");
        }
        assert_ne!(head_w_before, after.head_w);
        assert_ne!(head_b_before, after.head_b);
    }
}
