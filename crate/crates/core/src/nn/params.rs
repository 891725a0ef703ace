//! Encoder parameter tensors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::EncoderConfig;
use super::tensor::Mat;

/// Parameters of one transformer layer (post-layer-norm ordering).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
}

/// All weights of the encoder: embeddings plus per-layer tensors.
///
/// The same struct doubles as a gradient container ([`ParamGrads`]); gradient
/// shapes mirror the parameters by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub token_emb: Mat,
    pub pos_emb: Mat,
    pub layers: Vec<LayerParams>,
}

/// Gradients with respect to every tensor in [`EncoderParams`].
pub type ParamGrads = EncoderParams;

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple to reason
    // about for reproducibility.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gaussian_mat(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Mat {
    let data = (0..rows * cols).map(|_| gaussian(rng, std)).collect();
    Mat::from_vec(rows, cols, data)
}

impl EncoderParams {
    /// Random initialization: gaussian(0, 0.02) matrices, unit layer-norm
    /// gains, zero biases.
    pub fn init(config: EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let k = config.hidden;
        let f = config.ffn;
        let std = 0.02;
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                wq: gaussian_mat(k, k, std, rng),
                wk: gaussian_mat(k, k, std, rng),
                wv: gaussian_mat(k, k, std, rng),
                wo: gaussian_mat(k, k, std, rng),
                ln1_gain: vec![1.0; k],
                ln1_bias: vec![0.0; k],
                w1: gaussian_mat(k, f, std, rng),
                b1: vec![0.0; f],
                w2: gaussian_mat(f, k, std, rng),
                b2: vec![0.0; k],
                ln2_gain: vec![1.0; k],
                ln2_bias: vec![0.0; k],
            })
            .collect();
        EncoderParams {
            config,
            token_emb: gaussian_mat(config.vocab_size, k, std, rng),
            pos_emb: gaussian_mat(config.max_len, k, std, rng),
            layers,
        }
    }

    /// All-zero tensors with the same shapes as `config` implies.
    pub fn zeros(config: EncoderConfig) -> Self {
        let k = config.hidden;
        let f = config.ffn;
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                wq: Mat::zeros(k, k),
                wk: Mat::zeros(k, k),
                wv: Mat::zeros(k, k),
                wo: Mat::zeros(k, k),
                ln1_gain: vec![0.0; k],
                ln1_bias: vec![0.0; k],
                w1: Mat::zeros(k, f),
                b1: vec![0.0; f],
                w2: Mat::zeros(f, k),
                b2: vec![0.0; k],
                ln2_gain: vec![0.0; k],
                ln2_bias: vec![0.0; k],
            })
            .collect();
        EncoderParams {
            config,
            token_emb: Mat::zeros(config.vocab_size, k),
            pos_emb: Mat::zeros(config.max_len, k),
            layers,
        }
    }

    /// Named views of every tensor, in a fixed documented order. The order is
    /// the serialization, optimizer, and hashing order.
    pub fn tensors(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        let mut out: Vec<(String, &[f64], Vec<usize>)> = vec![
            (
                "token_emb".into(),
                self.token_emb.data.as_slice(),
                vec![self.token_emb.rows, self.token_emb.cols],
            ),
            (
                "pos_emb".into(),
                self.pos_emb.data.as_slice(),
                vec![self.pos_emb.rows, self.pos_emb.cols],
            ),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let mats: [(&str, &Mat); 6] = [
                ("wq", &l.wq),
                ("wk", &l.wk),
                ("wv", &l.wv),
                ("wo", &l.wo),
                ("w1", &l.w1),
                ("w2", &l.w2),
            ];
            let vecs: [(&str, &Vec<f64>); 6] = [
                ("ln1_gain", &l.ln1_gain),
                ("ln1_bias", &l.ln1_bias),
                ("b1", &l.b1),
                ("b2", &l.b2),
                ("ln2_gain", &l.ln2_gain),
                ("ln2_bias", &l.ln2_bias),
            ];
            // Fixed order: wq wk wv wo ln1_* w1 b1 w2 b2 ln2_*.
            for (name, m) in &mats[0..4] {
                out.push((format!("layer{i}.{name}"), m.data.as_slice(), vec![m.rows, m.cols]));
            }
            for (name, v) in &vecs[0..2] {
                out.push((format!("layer{i}.{name}"), v.as_slice(), vec![v.len()]));
            }
            out.push((format!("layer{i}.w1"), mats[4].1.data.as_slice(), vec![mats[4].1.rows, mats[4].1.cols]));
            out.push((format!("layer{i}.b1"), vecs[2].1.as_slice(), vec![vecs[2].1.len()]));
            out.push((format!("layer{i}.w2"), mats[5].1.data.as_slice(), vec![mats[5].1.rows, mats[5].1.cols]));
            out.push((format!("layer{i}.b2"), vecs[3].1.as_slice(), vec![vecs[3].1.len()]));
            for (name, v) in &vecs[4..6] {
                out.push((format!("layer{i}.{name}"), v.as_slice(), vec![v.len()]));
            }
        }
        out
    }

    /// Mutable views of every tensor, in the same order as [`tensors`].
    ///
    /// [`tensors`]: EncoderParams::tensors
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out: Vec<(String, &mut Vec<f64>)> = vec![
            ("token_emb".into(), &mut self.token_emb.data),
            ("pos_emb".into(), &mut self.pos_emb.data),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.wq"), &mut l.wq.data));
            out.push((format!("layer{i}.wk"), &mut l.wk.data));
            out.push((format!("layer{i}.wv"), &mut l.wv.data));
            out.push((format!("layer{i}.wo"), &mut l.wo.data));
            out.push((format!("layer{i}.ln1_gain"), &mut l.ln1_gain));
            out.push((format!("layer{i}.ln1_bias"), &mut l.ln1_bias));
            out.push((format!("layer{i}.w1"), &mut l.w1.data));
            out.push((format!("layer{i}.b1"), &mut l.b1));
            out.push((format!("layer{i}.w2"), &mut l.w2.data));
            out.push((format!("layer{i}.b2"), &mut l.b2));
            out.push((format!("layer{i}.ln2_gain"), &mut l.ln2_gain));
            out.push((format!("layer{i}.ln2_bias"), &mut l.ln2_bias));
        }
        out
    }

    /// Element-wise `self += other` over every tensor.
    pub fn add_assign(&mut self, other: &EncoderParams) {
        let theirs = other.tensors();
        for ((_, mine), (_, data, _)) in self.tensors_mut().into_iter().zip(theirs) {
            debug_assert_eq!(mine.len(), data.len());
            for (a, b) in mine.iter_mut().zip(data) {
                *a += b;
            }
        }
    }

    /// True if every value in every tensor is finite.
    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, data, _)| data.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn tensor_walk_orders_match() {
        let config = EncoderConfig { layers: 2, hidden: 8, heads: 2, ffn: 16, max_len: 10, vocab_size: 20 };
        let mut p = EncoderParams::init(config, &mut rng_from_seed(1));
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _, _)| n).collect();
        let names_mut: Vec<String> = p.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.len(), 2 + 2 * 12);
    }

    #[test]
    fn grads_mirror_param_shapes() {
        let config = EncoderConfig { layers: 1, hidden: 4, heads: 1, ffn: 6, max_len: 5, vocab_size: 9 };
        let p = EncoderParams::init(config, &mut rng_from_seed(2));
        let g = ParamGrads::zeros(config);
        for ((pn, pd, ps), (gn, gd, gs)) in p.tensors().into_iter().zip(g.tensors()) {
            assert_eq!(pn, gn);
            assert_eq!(pd.len(), gd.len());
            assert_eq!(ps, gs);
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let config = EncoderConfig::desk_default(50);
        let a = EncoderParams::init(config, &mut rng_from_seed(3));
        let b = EncoderParams::init(config, &mut rng_from_seed(3));
        assert_eq!(a, b);
    }
}
