//! Exact backpropagation through the cached forward trace.

use crate::error::{Error, Result};

use super::forward::{ForwardTrace, LnTrace};
use super::params::{EncoderParams, ParamGrads};
use super::tensor::{gelu_prime, Mat};

/// Layer-norm backward. Accumulates gain/bias gradients and returns the
/// gradient w.r.t. the pre-norm input.
fn ln_backward(dy: &Mat, ln: &LnTrace, gain: &[f64], dgain: &mut [f64], dbias: &mut [f64]) -> Mat {
    let (n, k) = (dy.rows, dy.cols);
    let mut dx = Mat::zeros(n, k);
    for i in 0..n {
        let dy_row = dy.row(i);
        let xh_row = ln.xhat.row(i);
        let r = ln.inv_std[i];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..k {
            dgain[j] += dy_row[j] * xh_row[j];
            dbias[j] += dy_row[j];
            let dxh = dy_row[j] * gain[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh_row[j];
        }
        mean_dxhat /= k as f64;
        mean_dxhat_xhat /= k as f64;
        let dx_row = dx.row_mut(i);
        for j in 0..k {
            let dxh = dy_row[j] * gain[j];
            dx_row[j] = r * (dxh - mean_dxhat - xh_row[j] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Extract one head's columns into a contiguous N x dk matrix.
fn head_slice(m: &Mat, off: usize, dk: usize) -> Mat {
    let mut out = Mat::zeros(m.rows, dk);
    for i in 0..m.rows {
        out.row_mut(i).copy_from_slice(&m.row(i)[off..off + dk]);
    }
    out
}

/// Accumulate a contiguous N x dk matrix back into one head's columns.
fn head_unslice(dst: &mut Mat, src: &Mat, off: usize) {
    for i in 0..src.rows {
        let d = &mut dst.data[i * dst.cols + off..i * dst.cols + off + src.cols];
        for (a, b) in d.iter_mut().zip(src.row(i)) {
            *a += b;
        }
    }
}

fn add_col_sums(acc: &mut [f64], m: &Mat) {
    for i in 0..m.rows {
        for (a, b) in acc.iter_mut().zip(m.row(i)) {
            *a += b;
        }
    }
}

/// Compute exact gradients of the scalar loss whose gradient with respect to
/// the final output representations is `output_grad`.
pub fn backward(params: &EncoderParams, trace: &ForwardTrace, output_grad: &Mat) -> Result<ParamGrads> {
    let mut grads = ParamGrads::zeros(params.config);
    backward_into(params, trace, output_grad, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but accumulates (`+=`) into an existing gradient set,
/// so batch loops avoid per-sample allocations.
pub fn backward_into(
    params: &EncoderParams,
    trace: &ForwardTrace,
    output_grad: &Mat,
    grads: &mut ParamGrads,
) -> Result<()> {
    let cfg = &params.config;
    let n = trace.seq_len();
    let k = cfg.hidden;
    if output_grad.rows != n || output_grad.cols != k {
        return Err(Error::input(format!(
            "output_grad shape {}x{} does not match trace outputs {}x{}",
            output_grad.rows, output_grad.cols, n, k
        )));
    }
    let heads = cfg.heads;
    let dk = cfg.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    let mut d_out = output_grad.clone();

    for (li, lt) in trace.layers.iter().enumerate().rev() {
        let lp = &params.layers[li];
        let lg = &mut grads.layers[li];

        // LN2
        let d_res2 = ln_backward(&d_out, &lt.ln2, &lp.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias);

        // FFN output: res2 = ln1_out + ffn_act @ w2 + b2
        let mut d_ln1_out = d_res2.clone();
        lg.w2.matmul_transa_acc(&lt.ffn_act, &d_res2);
        add_col_sums(&mut lg.b2, &d_res2);
        let mut d_ffn_act = Mat::zeros(n, cfg.ffn);
        d_ffn_act.matmul_transb_acc(&d_res2, &lp.w2);

        // GELU
        let mut d_ffn_pre = d_ffn_act;
        for (g, &pre) in d_ffn_pre.data.iter_mut().zip(&lt.ffn_pre.data) {
            *g *= gelu_prime(pre);
        }

        // FFN input: ffn_pre = ln1_out @ w1 + b1
        lg.w1.matmul_transa_acc(&lt.ln1_out, &d_ffn_pre);
        add_col_sums(&mut lg.b1, &d_ffn_pre);
        d_ln1_out.matmul_transb_acc(&d_ffn_pre, &lp.w1);

        // LN1
        let d_res1 = ln_backward(&d_ln1_out, &lt.ln1, &lp.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias);

        // res1 = input + ctx @ wo
        let mut d_input = d_res1.clone();
        lg.wo.matmul_transa_acc(&lt.ctx, &d_res1);
        let mut d_ctx = Mat::zeros(n, k);
        d_ctx.matmul_transb_acc(&d_res1, &lp.wo);

        // attention heads
        let mut d_q = Mat::zeros(n, k);
        let mut d_k = Mat::zeros(n, k);
        let mut d_v = Mat::zeros(n, k);
        for h in 0..heads {
            let off = h * dk;
            let attn = &lt.attn[h];
            let v_h = head_slice(&lt.v, off, dk);
            let q_h = head_slice(&lt.q, off, dk);
            let k_h = head_slice(&lt.k, off, dk);
            let d_ctx_h = head_slice(&d_ctx, off, dk);

            // ctx_h = attn @ v_h
            let mut d_attn = Mat::zeros(n, n);
            d_attn.matmul_transb_acc(&d_ctx_h, &v_h);
            let mut d_v_h = Mat::zeros(n, dk);
            d_v_h.matmul_transa_acc(attn, &d_ctx_h);

            // softmax rows
            let mut d_scores = Mat::zeros(n, n);
            for i in 0..n {
                let a_row = attn.row(i);
                let da_row = d_attn.row(i);
                let dot: f64 = a_row.iter().zip(da_row).map(|(a, d)| a * d).sum();
                let ds_row = d_scores.row_mut(i);
                for j in 0..n {
                    ds_row[j] = a_row[j] * (da_row[j] - dot) * scale;
                }
            }

            // scores = scale * q_h @ k_h^T (scale already folded into d_scores)
            let mut d_q_h = Mat::zeros(n, dk);
            d_q_h.matmul_acc(&d_scores, &k_h);
            let mut d_k_h = Mat::zeros(n, dk);
            d_k_h.matmul_transa_acc(&d_scores, &q_h);

            head_unslice(&mut d_q, &d_q_h, off);
            head_unslice(&mut d_k, &d_k_h, off);
            head_unslice(&mut d_v, &d_v_h, off);
        }

        // q = input @ wq, etc.
        lg.wq.matmul_transa_acc(&lt.input, &d_q);
        lg.wk.matmul_transa_acc(&lt.input, &d_k);
        lg.wv.matmul_transa_acc(&lt.input, &d_v);
        d_input.matmul_transb_acc(&d_q, &lp.wq);
        d_input.matmul_transb_acc(&d_k, &lp.wk);
        d_input.matmul_transb_acc(&d_v, &lp.wv);

        d_out = d_input;
    }

    // embeddings: x0[i] = token_emb[id_i] + pos_emb[i]
    for (i, &id) in trace.token_ids.iter().enumerate() {
        let src = d_out.row(i);
        let te = grads.token_emb.row_mut(id as usize);
        for (a, b) in te.iter_mut().zip(src) {
            *a += b;
        }
        let pe = grads.pos_emb.row_mut(i);
        for (a, b) in pe.iter_mut().zip(src) {
            *a += b;
        }
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward::forward_ids;
    use crate::nn::EncoderConfig;
    use crate::rng::rng_from_seed;

    fn config() -> EncoderConfig {
        EncoderConfig { layers: 2, hidden: 6, heads: 2, ffn: 10, max_len: 8, vocab_size: 9 }
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let p = EncoderParams::init(config(), &mut rng_from_seed(4));
        let trace = forward_ids(&p, &[1, 2, 3]).unwrap();
        let g = backward(&p, &trace, &Mat::zeros(3, 6)).unwrap();
        for (name, data, _) in g.tensors() {
            assert!(data.iter().all(|&v| v == 0.0), "nonzero grad in {name}");
        }
    }

    #[test]
    fn sum_loss_gradient_of_final_ln_bias_is_position_count() {
        // L = sum of all outputs => d_out = ones. The final layer-norm bias
        // receives exactly one unit per position: grad = N for each component.
        let p = EncoderParams::init(config(), &mut rng_from_seed(5));
        let n = 4;
        let trace = forward_ids(&p, &[1, 2, 3, 4]).unwrap();
        let mut ones = Mat::zeros(n, 6);
        ones.fill(1.0);
        let g = backward(&p, &trace, &ones).unwrap();
        for &v in &g.layers[1].ln2_bias {
            assert!((v - n as f64).abs() < 1e-12, "expected {n}, got {v}");
        }
    }

    #[test]
    fn shape_mismatch_is_input_error() {
        let p = EncoderParams::init(config(), &mut rng_from_seed(6));
        let trace = forward_ids(&p, &[1, 2]).unwrap();
        let bad = Mat::zeros(3, 6);
        assert!(matches!(backward(&p, &trace, &bad), Err(Error::Input(_))));
    }

    #[test]
    fn grad_shapes_mirror_params() {
        let p = EncoderParams::init(config(), &mut rng_from_seed(7));
        let trace = forward_ids(&p, &[1, 2, 3]).unwrap();
        let g = backward(&p, &trace, &Mat::zeros(3, 6)).unwrap();
        for ((pn, pd, _), (gn, gd, _)) in p.tensors().into_iter().zip(g.tensors()) {
            assert_eq!(pn, gn);
            assert_eq!(pd.len(), gd.len());
        }
    }
}
