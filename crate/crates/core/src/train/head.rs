//! Classification heads over encoder output representations.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    encoder_from_checkpoint, forward, load_checkpoint, save_checkpoint, CheckpointMeta,
    EncoderParams, ForwardTrace, Mat,
};
use crate::text::{encode, TokenSeq, Vocab};

/// Which representation the head consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Classify from the leading token's output representation.
    Cls,
    /// Classify from the mean of all non-PAD token outputs.
    Ar,
    /// Tag every token.
    PerToken,
}

impl HeadKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeadKind::Cls => "cls",
            HeadKind::Ar => "ar",
            HeadKind::PerToken => "per_token",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(HeadKind::Cls),
            "ar" => Ok(HeadKind::Ar),
            "per_token" => Ok(HeadKind::PerToken),
            other => Err(Error::format(format!("unknown head kind {other:?}"))),
        }
    }
}

/// Encoder plus classification head plus the vocabulary used to feed it.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub params: EncoderParams,
    /// labels x hidden.
    pub head_w: Mat,
    pub head_b: Vec<f64>,
    pub kind: HeadKind,
    pub vocab: Vocab,
}

/// Prediction plus raw logits.
#[derive(Debug, Clone)]
pub enum Prediction {
    Class { label: usize, logits: Vec<f64> },
    Tokens { labels: Vec<usize>, logits: Mat, seq: TokenSeq },
}

/// Argmax with ties broken toward the lowest label id.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

impl ClassifierModel {
    /// Fresh head (gaussian 0.02 weights, zero bias) on top of an encoder.
    pub fn new(params: EncoderParams, vocab: Vocab, kind: HeadKind, labels: usize, rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        let k = params.config.hidden;
        let data = (0..labels * k)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                0.02 * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        ClassifierModel {
            params,
            head_w: Mat::from_vec(labels, k, data),
            head_b: vec![0.0; labels],
            kind,
            vocab,
        }
    }

    pub fn labels(&self) -> usize {
        self.head_w.rows
    }

    /// Pooled feature per the head kind, from a forward trace. For PerToken
    /// heads there is no single feature; use per-position rows directly.
    pub fn feature(&self, trace: &ForwardTrace) -> Vec<f64> {
        let out = trace.outputs();
        match self.kind {
            HeadKind::Cls => out.row(0).to_vec(),
            HeadKind::Ar => {
                let pad = self.vocab.specials().pad;
                let mut mean = vec![0.0; out.cols];
                let mut count = 0usize;
                for (i, &id) in trace.token_ids.iter().enumerate() {
                    if id == pad {
                        continue;
                    }
                    for (m, &v) in mean.iter_mut().zip(out.row(i)) {
                        *m += v;
                    }
                    count += 1;
                }
                let c = count.max(1) as f64;
                mean.iter_mut().for_each(|m| *m /= c);
                mean
            }
            HeadKind::PerToken => panic!("per-token head has no pooled feature"),
        }
    }

    pub fn head_logits(&self, feature: &[f64]) -> Vec<f64> {
        (0..self.labels())
            .map(|l| {
                self.head_b[l]
                    + self.head_w.row(l).iter().zip(feature).map(|(w, f)| w * f).sum::<f64>()
            })
            .collect()
    }

    /// Save encoder + head as a classifier checkpoint.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let meta = CheckpointMeta {
            kind: "classifier".into(),
            config: self.params.config,
            head_kind: Some(self.kind.as_str().into()),
            labels: Some(self.labels()),
        };
        let mut tensors: Vec<(String, Vec<usize>, &[f64])> =
            self.params.tensors().into_iter().map(|(n, d, s)| (n, s, d)).collect();
        tensors.push(("head_w".into(), vec![self.head_w.rows, self.head_w.cols], &self.head_w.data));
        tensors.push(("head_b".into(), vec![self.head_b.len()], &self.head_b));
        save_checkpoint(path, &meta, &tensors)
    }

    /// Load a classifier checkpoint; the vocabulary comes from its own file.
    pub fn load(path: &std::path::Path, vocab: Vocab) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        if ckpt.meta.kind != "classifier" {
            return Err(Error::format(format!(
                "{}: expected classifier checkpoint, found {}",
                path.display(),
                ckpt.meta.kind
            )));
        }
        let params = encoder_from_checkpoint(&ckpt)?;
        let head_w = ckpt.tensor_mat("head_w")?;
        let head_b = ckpt.tensor("head_b")?.1.to_vec();
        let kind = HeadKind::from_str(
            ckpt.meta.head_kind.as_deref().ok_or_else(|| Error::format("missing head_kind"))?,
        )?;
        Ok(ClassifierModel { params, head_w, head_b, kind, vocab })
    }
}

/// Run the model on raw text. Deterministic; argmax ties break toward the
/// lowest label id.
pub fn predict(model: &ClassifierModel, text: &str) -> Result<Prediction> {
    let seq = encode(text, &model.vocab, model.params.config.max_len);
    let trace = forward(&model.params, &seq)?;
    match model.kind {
        HeadKind::Cls | HeadKind::Ar => {
            let feature = model.feature(&trace);
            let logits = model.head_logits(&feature);
            Ok(Prediction::Class { label: argmax(&logits), logits })
        }
        HeadKind::PerToken => {
            let n = trace.seq_len();
            let mut logits = Mat::zeros(n, model.labels());
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let row_logits = model.head_logits(trace.outputs().row(i));
                labels.push(argmax(&row_logits));
                logits.row_mut(i).copy_from_slice(&row_logits);
            }
            Ok(Prediction::Tokens { labels, logits, seq })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::EncoderConfig;
    use crate::rng::rng_from_seed;
    use crate::text::build_vocab;

    fn vocab() -> Vocab {
        build_vocab(["i love the movie it was dull fun"], 300, 1).unwrap()
    }

    fn config(v: &Vocab) -> EncoderConfig {
        EncoderConfig { layers: 1, hidden: 8, heads: 2, ffn: 12, max_len: 16, vocab_size: v.len() }
    }

    /// Degenerate encoder whose every output row equals the final layer-norm
    /// bias exactly: zero embeddings and zero attention/FFN weights leave
    /// only the bias path.
    fn constant_output_params(config: EncoderConfig, bias: &[f64]) -> EncoderParams {
        let mut p = EncoderParams::zeros(config);
        for l in &mut p.layers {
            l.ln1_gain = vec![1.0; config.hidden];
            l.ln2_gain = vec![1.0; config.hidden];
        }
        p.layers.last_mut().unwrap().ln2_bias = bias.to_vec();
        p
    }

    #[test]
    fn zero_head_predicts_lowest_label() {
        let v = vocab();
        let cfg = config(&v);
        let params = EncoderParams::init(cfg, &mut rng_from_seed(1));
        let mut model = ClassifierModel::new(params, v, HeadKind::Cls, 3, &mut rng_from_seed(2));
        model.head_w.fill(0.0);
        model.head_b.fill(0.0);
        match predict(&model, "i love the movie").unwrap() {
            Prediction::Class { label, logits } => {
                assert_eq!(label, 0);
                assert!(logits.iter().all(|&l| l == 0.0));
            }
            _ => panic!("expected class prediction"),
        }
    }

    #[test]
    fn hand_set_head_matches_sign_arithmetic() {
        // T_0 is exactly the final ln bias; a 2-class head w0 = +e0, w1 = -e0
        // labels by the sign of the first component.
        let v = vocab();
        let cfg = config(&v);
        let mut bias = vec![0.0; cfg.hidden];
        bias[0] = -0.75;
        let params = constant_output_params(cfg, &bias);
        let mut model = ClassifierModel::new(params, v, HeadKind::Cls, 2, &mut rng_from_seed(3));
        model.head_w.fill(0.0);
        model.head_w.set(0, 0, 1.0);
        model.head_w.set(1, 0, -1.0);
        model.head_b.fill(0.0);
        match predict(&model, "the movie").unwrap() {
            Prediction::Class { label, logits } => {
                // logits = [-0.75, +0.75] => label 1
                assert_eq!(label, 1);
                assert!((logits[0] + 0.75).abs() < 1e-9);
                assert!((logits[1] - 0.75).abs() < 1e-9);
            }
            _ => panic!("expected class prediction"),
        }
    }

    #[test]
    fn ar_prediction_invariant_to_word_order_in_bag_fixture() {
        // Zero attention/FFN weights and zero position embeddings make the
        // encoder a per-token function; AR pooling then sees a bag of tokens.
        let v = vocab();
        let cfg = config(&v);
        let mut params = EncoderParams::zeros(cfg);
        for l in &mut params.layers {
            l.ln1_gain = vec![1.0; cfg.hidden];
            l.ln2_gain = vec![1.0; cfg.hidden];
        }
        let mut rng = rng_from_seed(4);
        params.token_emb = {
            use rand::Rng;
            let data = (0..cfg.vocab_size * cfg.hidden).map(|_| rng.gen_range(-0.5..0.5)).collect();
            Mat::from_vec(cfg.vocab_size, cfg.hidden, data)
        };
        let model = ClassifierModel::new(params, v, HeadKind::Ar, 2, &mut rng_from_seed(5));
        let a = predict(&model, "i love the movie").unwrap();
        let b = predict(&model, "movie the love i").unwrap();
        match (a, b) {
            (Prediction::Class { logits: la, .. }, Prediction::Class { logits: lb, .. }) => {
                for (x, y) in la.iter().zip(&lb) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
            _ => panic!("expected class predictions"),
        }
    }

    #[test]
    fn predict_is_deterministic() {
        let v = vocab();
        let cfg = config(&v);
        let params = EncoderParams::init(cfg, &mut rng_from_seed(6));
        let model = ClassifierModel::new(params, v, HeadKind::Cls, 4, &mut rng_from_seed(7));
        let p1 = predict(&model, "fun dull movie").unwrap();
        let p2 = predict(&model, "fun dull movie").unwrap();
        match (p1, p2) {
            (Prediction::Class { label: a, .. }, Prediction::Class { label: b, .. }) => {
                assert_eq!(a, b)
            }
            _ => panic!(),
        }
    }

    #[test]
    fn classifier_checkpoint_round_trip() {
        let v = vocab();
        let cfg = config(&v);
        let params = EncoderParams::init(cfg, &mut rng_from_seed(8));
        let model = ClassifierModel::new(params, v.clone(), HeadKind::Ar, 3, &mut rng_from_seed(9));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.ckpt");
        model.save(&path).unwrap();
        let loaded = ClassifierModel::load(&path, v).unwrap();
        assert_eq!(loaded.kind, HeadKind::Ar);
        assert_eq!(loaded.labels(), 3);
        // f32 round trip: saving again reproduces the same bytes
        let path2 = dir.path().join("clf2.ckpt");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
