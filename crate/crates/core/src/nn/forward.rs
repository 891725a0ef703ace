//! Encoder forward pass with full activation caching.

use crate::error::{Error, Result};
use crate::text::TokenSeq;

use super::params::EncoderParams;
use super::tensor::{gelu, softmax_rows, Mat};

pub const LN_EPS: f64 = 1e-12;

/// Cached layer-norm statistics: normalized activations and per-row inverse
/// standard deviations.
#[derive(Debug, Clone)]
pub struct LnTrace {
    pub xhat: Mat,
    pub inv_std: Vec<f64>,
}

/// All intermediate activations of one layer, enough for exact backprop.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Mat,
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Post-softmax attention, one N x N map per head.
    pub attn: Vec<Mat>,
    /// Concatenated per-head context, before the output projection.
    pub ctx: Mat,
    pub ln1: LnTrace,
    pub ln1_out: Mat,
    pub ffn_pre: Mat,
    pub ffn_act: Mat,
    pub ln2: LnTrace,
    pub out: Mat,
}

/// Forward trace: token ids, embeddings, per-layer activations and attention
/// maps, and the final per-token output representations.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub token_ids: Vec<u32>,
    pub embedded: Mat,
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    /// Final output representations, one row per token.
    pub fn outputs(&self) -> &Mat {
        &self.layers.last().expect("encoder has at least one layer").out
    }

    /// Output of an intermediate layer (0-based).
    pub fn layer_output(&self, layer: usize) -> &Mat {
        &self.layers[layer].out
    }

    /// Attention map for (layer, head), rows normalized to 1.
    pub fn attention(&self, layer: usize, head: usize) -> &Mat {
        &self.layers[layer].attn[head]
    }

    pub fn seq_len(&self) -> usize {
        self.token_ids.len()
    }
}

/// Layer-norm over each row; returns output plus cached statistics.
fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> (Mat, LnTrace) {
    let (n, k) = (x.rows, x.cols);
    let mut out = Mat::zeros(n, k);
    let mut xhat = Mat::zeros(n, k);
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / k as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = r;
        let xh = xhat.row_mut(i);
        let o = &mut out.data[i * k..(i + 1) * k];
        for j in 0..k {
            let h = (row[j] - mean) * r;
            xh[j] = h;
            o[j] = gain[j] * h + bias[j];
        }
    }
    (out, LnTrace { xhat, inv_std })
}

/// Run the encoder over a token sequence, caching everything backprop needs.
///
/// Post-layer-norm ordering: attention, residual + LN, feed-forward (GELU),
/// residual + LN.
pub fn forward(params: &EncoderParams, seq: &TokenSeq) -> Result<ForwardTrace> {
    forward_ids(params, &seq.ids)
}

/// Same as [`forward`] but over raw token ids (used by masking, which edits
/// ids in place).
pub fn forward_ids(params: &EncoderParams, ids: &[u32]) -> Result<ForwardTrace> {
    let cfg = &params.config;
    let n = ids.len();
    if n > cfg.max_len {
        return Err(Error::input(format!(
            "sequence length {n} exceeds max_len {}",
            cfg.max_len
        )));
    }
    if n == 0 {
        return Err(Error::input("empty token sequence"));
    }
    let k = cfg.hidden;
    let heads = cfg.heads;
    let dk = cfg.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    let mut x = Mat::zeros(n, k);
    for (i, &id) in ids.iter().enumerate() {
        if (id as usize) >= cfg.vocab_size {
            return Err(Error::input(format!("token id {id} out of range")));
        }
        let te = params.token_emb.row(id as usize);
        let pe = params.pos_emb.row(i);
        let row = x.row_mut(i);
        for j in 0..k {
            row[j] = te[j] + pe[j];
        }
    }
    let embedded = x.clone();

    let mut layers = Vec::with_capacity(cfg.layers);
    for lp in &params.layers {
        let input = x.clone();
        let q = Mat::matmul(&x, &lp.wq);
        let kx = Mat::matmul(&x, &lp.wk);
        let v = Mat::matmul(&x, &lp.wv);

        let mut attn = Vec::with_capacity(heads);
        let mut ctx = Mat::zeros(n, k);
        for h in 0..heads {
            let off = h * dk;
            let mut scores = Mat::zeros(n, n);
            for i in 0..n {
                let qi = &q.row(i)[off..off + dk];
                for j in 0..n {
                    let kj = &kx.row(j)[off..off + dk];
                    let mut dot = 0.0;
                    for (a, b) in qi.iter().zip(kj) {
                        dot += a * b;
                    }
                    scores.set(i, j, dot * scale);
                }
            }
            softmax_rows(&mut scores);
            for i in 0..n {
                let a_row = scores.row(i);
                for j in 0..n {
                    let w = a_row[j];
                    let vj = &v.row(j)[off..off + dk];
                    let c = &mut ctx.data[i * k + off..i * k + off + dk];
                    for (cv, &vv) in c.iter_mut().zip(vj) {
                        *cv += w * vv;
                    }
                }
            }
            attn.push(scores);
        }

        let mut res1 = Mat::matmul(&ctx, &lp.wo);
        res1.add_assign(&input);
        let (ln1_out, ln1) = layer_norm(&res1, &lp.ln1_gain, &lp.ln1_bias);

        let mut ffn_pre = Mat::matmul(&ln1_out, &lp.w1);
        for i in 0..n {
            let row = ffn_pre.row_mut(i);
            for (rv, &b) in row.iter_mut().zip(&lp.b1) {
                *rv += b;
            }
        }
        let mut ffn_act = ffn_pre.clone();
        ffn_act.data.iter_mut().for_each(|v| *v = gelu(*v));

        let mut res2 = Mat::matmul(&ffn_act, &lp.w2);
        for i in 0..n {
            let row = res2.row_mut(i);
            for (rv, &b) in row.iter_mut().zip(&lp.b2) {
                *rv += b;
            }
        }
        res2.add_assign(&ln1_out);
        let (out, ln2) = layer_norm(&res2, &lp.ln2_gain, &lp.ln2_bias);

        x = out.clone();
        layers.push(LayerTrace { input, q, k: kx, v, attn, ctx, ln1, ln1_out, ffn_pre, ffn_act, ln2, out });
    }

    Ok(ForwardTrace { token_ids: ids.to_vec(), embedded, layers })
}
