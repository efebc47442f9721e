//! Graph-attention + temporal-convolution EEG encoder.
//!
//! Per segment `x` (C×T): node features `h = x·W`, attention logits
//! `e_ij = LeakyReLU(a₁·h_i + a₂·h_j)`, weights `α = softmax_j(e)`. The
//! attention-mixed signal `α·x` goes through a strided temporal convolution
//! with bias and LeakyReLU, is flattened, mapped linearly to `embed_dim` and
//! normalized to unit length.

mod io;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::signal_io::{SegmentSet, SEGMENT_SAMPLES};

pub use io::{load_params, save_params};

pub const EMBED_DIM: usize = 1024;
const NORM_EPS: f64 = 1e-12;
/// Segments per inference tape.
const ENCODE_CHUNK: usize = 128;

fn default_samples() -> usize {
    SEGMENT_SAMPLES
}
fn default_gat_dim() -> usize {
    32
}
fn default_one() -> usize {
    1
}
fn default_conv_channels() -> usize {
    32
}
fn default_kernel() -> usize {
    25
}
fn default_stride() -> usize {
    5
}
fn default_embed() -> usize {
    EMBED_DIM
}
fn default_leaky() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Channel count of the input; 0 in a config file means "from the data".
    #[serde(default)]
    pub in_channels: usize,
    #[serde(default = "default_samples")]
    pub in_samples: usize,
    #[serde(default = "default_gat_dim")]
    pub gat_dim: usize,
    #[serde(default = "default_one")]
    pub gat_heads: usize,
    #[serde(default = "default_conv_channels")]
    pub conv_channels: usize,
    #[serde(default = "default_kernel")]
    pub conv_kernel: usize,
    #[serde(default = "default_stride")]
    pub conv_stride: usize,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_leaky")]
    pub leaky_alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(in_channels: usize) -> Self {
        Self {
            in_channels,
            in_samples: default_samples(),
            gat_dim: default_gat_dim(),
            gat_heads: 1,
            conv_channels: default_conv_channels(),
            conv_kernel: default_kernel(),
            conv_stride: default_stride(),
            embed_dim: EMBED_DIM,
            leaky_alpha: default_leaky(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("in_samples", self.in_samples),
            ("gat_dim", self.gat_dim),
            ("conv_channels", self.conv_channels),
            ("conv_kernel", self.conv_kernel),
            ("conv_stride", self.conv_stride),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("encoder {name} must be positive")));
        }
        if self.gat_heads != 1 {
            return Err(Error::Config(format!(
                "only a single attention head is supported, got {}",
                self.gat_heads
            )));
        }
        if self.conv_kernel > self.in_samples {
            return Err(Error::Config(format!(
                "conv_kernel {} exceeds in_samples {}",
                self.conv_kernel, self.in_samples
            )));
        }
        if self.embed_dim != EMBED_DIM {
            return Err(Error::Config(format!(
                "embed_dim must be {EMBED_DIM}, got {}",
                self.embed_dim
            )));
        }
        if !(self.leaky_alpha.is_finite() && self.leaky_alpha >= 0.0) {
            return Err(Error::Config(format!("invalid leaky_alpha {}", self.leaky_alpha)));
        }
        Ok(())
    }

    /// Temporal length after the strided convolution.
    pub fn conv_out_len(&self) -> usize {
        (self.in_samples - self.conv_kernel) / self.conv_stride + 1
    }

    pub fn flat_dim(&self) -> usize {
        self.conv_channels * self.conv_out_len()
    }

    fn shapes(&self) -> [Vec<usize>; 6] {
        let (c, t, g) = (self.in_channels, self.in_samples, self.gat_dim);
        let (o, k) = (self.conv_channels, self.conv_kernel);
        [
            vec![t, g],
            vec![2 * g, 1],
            vec![o, c, k],
            vec![o, 1],
            vec![self.flat_dim(), self.embed_dim],
            vec![1, self.embed_dim],
        ]
    }
}

/// Learnable arrays, in the fixed order of [`EncoderParams::NAMES`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    tensors: [Tensor; 6],
}

impl EncoderParams {
    pub const NAMES: [&'static str; 6] =
        ["gat_w", "gat_a", "conv_w", "conv_b", "head_w", "head_b"];

    pub fn from_tensors(config: EncoderConfig, tensors: [Tensor; 6]) -> Result<Self> {
        config.validate()?;
        for ((t, want), name) in tensors.iter().zip(config.shapes()).zip(Self::NAMES) {
            if t.shape() != want.as_slice() {
                return Err(Error::Dimension(format!(
                    "{name} has shape {:?}, config needs {want:?}",
                    t.shape()
                )));
            }
            if !t.all_finite() {
                return Err(Error::NonFinite("encoder parameters"));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn tensors(&self) -> &[Tensor; 6] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor; 6] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every array on `tape` (as parameters when `trainable`).
    pub fn attach(&self, tape: &mut Tape, trainable: bool) -> Result<ParamVars> {
        let mut vars = Vec::with_capacity(6);
        for t in &self.tensors {
            vars.push(tape.leaf(t.clone(), trainable)?);
        }
        Ok(ParamVars(vars.try_into().expect("six parameter arrays")))
    }
}

/// Tape handles of the six parameter arrays.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars(pub [Var; 6]);

/// Glorot-uniform weights, zero biases and a zero attention vector, drawn
/// from a ChaCha8 stream seeded by `config.seed`.
pub fn init_params(config: &EncoderConfig) -> Result<EncoderParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shapes = config.shapes();
    let (c, k, o) = (config.in_channels, config.conv_kernel, config.conv_channels);
    let fans = [
        Some((config.in_samples, config.gat_dim)),
        // attention vector starts at zero: uniform attention until trained
        None,
        Some((c * k, o * k)),
        None,
        Some((config.flat_dim(), config.embed_dim)),
        None,
    ];
    let mut tensors = Vec::with_capacity(6);
    for (shape, fan) in shapes.into_iter().zip(fans) {
        let n: usize = shape.iter().product();
        let data = match fan {
            Some((fan_in, fan_out)) => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
            None => vec![0.0; n],
        };
        tensors.push(Tensor::new(shape, data)?);
    }
    EncoderParams::from_tensors(config.clone(), tensors.try_into().expect("six arrays"))
}

fn ones(tape: &mut Tape, rows: usize, cols: usize) -> Result<Var> {
    tape.constant(Tensor::filled([rows, cols], 1.0))
}

/// Attention weights `α` (C×C) and node features `h` (C×gat_dim).
fn attention(tape: &mut Tape, p: &ParamVars, cfg: &EncoderConfig, x: Var) -> Result<(Var, Var)> {
    let [w, a, ..] = p.0;
    let c = tape.value(x).dims2()?.0;
    let h = tape.matmul(x, w)?;
    let a1 = tape.slice_rows(a, 0, cfg.gat_dim)?;
    let a2 = tape.slice_rows(a, cfg.gat_dim, 2 * cfg.gat_dim)?;
    let s1 = tape.matmul(h, a1)?;
    let s2 = tape.matmul(h, a2)?;
    let s2t = tape.transpose(s2)?;
    let row = ones(tape, 1, c)?;
    let col = ones(tape, c, 1)?;
    let left = tape.matmul(s1, row)?;
    let right = tape.matmul(col, s2t)?;
    let logits = tape.add(left, right)?;
    let logits = tape.leaky_relu(logits, cfg.leaky_alpha)?;
    Ok((tape.row_softmax(logits)?, h))
}

/// Graph-attention output `α·h` for one C×T segment.
pub fn gat_layer(x: &Tensor, params: &EncoderParams) -> Result<Tensor> {
    check_segment_shape(x.shape(), &params.config)?;
    let mut tape = Tape::new();
    let p = params.attach(&mut tape, false)?;
    let xv = tape.constant(x.clone())?;
    let (alpha, h) = attention(&mut tape, &p, &params.config, xv)?;
    let out = tape.matmul(alpha, h)?;
    Ok(tape.value(out).clone())
}

fn check_segment_shape(shape: &[usize], cfg: &EncoderConfig) -> Result<()> {
    if shape != [cfg.in_channels, cfg.in_samples] {
        return Err(Error::Dimension(format!(
            "segment shape {shape:?} does not match encoder input [{}, {}]",
            cfg.in_channels, cfg.in_samples
        )));
    }
    Ok(())
}

/// Flattened post-convolution features (1×flat_dim) of one segment.
fn segment_features(tape: &mut Tape, p: &ParamVars, cfg: &EncoderConfig, x: Var) -> Result<Var> {
    let [_, _, conv_w, conv_b, ..] = p.0;
    let (alpha, _) = attention(tape, p, cfg, x)?;
    let mixed = tape.matmul(alpha, x)?;
    let conv = tape.conv1d(mixed, conv_w, cfg.conv_stride)?;
    let along = ones(tape, 1, cfg.conv_out_len())?;
    let bias = tape.matmul(conv_b, along)?;
    let conv = tape.add(conv, bias)?;
    let act = tape.leaky_relu(conv, cfg.leaky_alpha)?;
    tape.reshape(act, &[1, cfg.flat_dim()])
}

/// Unit-norm embeddings (N×embed_dim) of segments already on the tape.
pub fn forward(tape: &mut Tape, p: &ParamVars, cfg: &EncoderConfig, segments: &[Var]) -> Result<Var> {
    if segments.is_empty() {
        return Err(Error::Dimension("cannot encode an empty batch".into()));
    }
    let [.., head_w, head_b] = p.0;
    let mut feats = Vec::with_capacity(segments.len());
    for &x in segments {
        check_segment_shape(tape.value(x).shape(), cfg)?;
        feats.push(segment_features(tape, p, cfg, x)?);
    }
    let flat = tape.concat_rows(&feats)?;
    let lin = tape.matmul(flat, head_w)?;
    let col = ones(tape, segments.len(), 1)?;
    let bias = tape.matmul(col, head_b)?;
    let lin = tape.add(lin, bias)?;
    tape.l2_normalize_rows(lin, NORM_EPS)
}

/// Records segments `indices` of `set` as constants on `tape`.
pub fn segment_vars(tape: &mut Tape, set: &SegmentSet, indices: &[usize]) -> Result<Vec<Var>> {
    indices
        .iter()
        .map(|&i| tape.constant(Tensor::new([set.channels(), set.samples()], set.segment(i).to_vec())?))
        .collect()
}

/// Embeds every segment of `set`; rows follow segment order.
pub fn encode(params: &EncoderParams, set: &SegmentSet) -> Result<Tensor> {
    let all: Vec<usize> = (0..set.len()).collect();
    encode_indices(params, set, &all)
}

pub fn encode_indices(params: &EncoderParams, set: &SegmentSet, indices: &[usize]) -> Result<Tensor> {
    let cfg = &params.config;
    check_segment_shape(&[set.channels(), set.samples()], cfg)?;
    if indices.is_empty() {
        return Err(Error::Dimension("cannot encode an empty batch".into()));
    }
    let mut data = Vec::with_capacity(indices.len() * cfg.embed_dim);
    for chunk in indices.chunks(ENCODE_CHUNK) {
        let mut tape = Tape::new();
        let p = params.attach(&mut tape, false)?;
        let xs = segment_vars(&mut tape, set, chunk)?;
        let out = forward(&mut tape, &p, cfg, &xs)?;
        data.extend_from_slice(tape.value(out).data());
    }
    Tensor::new([indices.len(), cfg.embed_dim], data)
}

/// Zeroes samples `t1..t2` on every channel of every segment.
pub fn mask_timesteps(set: &SegmentSet, t1: usize, t2: usize) -> Result<SegmentSet> {
    let t = set.samples();
    if !(t1 < t2 && t2 <= t) {
        return Err(Error::Config(format!(
            "mask window [{t1}, {t2}) must satisfy 0 ≤ t1 < t2 ≤ {t}"
        )));
    }
    let mut out = set.clone();
    for row in out.data_mut().chunks_mut(t) {
        row[t1..t2].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(out)
}

/// Copy of `params` with a fixed non-zero attention vector.
#[cfg(test)]
pub(crate) fn with_attention(params: &EncoderParams) -> EncoderParams {
    let mut t = params.tensors().clone();
    let n = t[1].len();
    t[1] = Tensor::new(t[1].shape().to_vec(), (0..n).map(|i| 0.3 * ((i * 5 % 7) as f64 - 3.1)).collect())
        .expect("same shape");
    EncoderParams::from_tensors(params.config.clone(), t).expect("valid tensors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::finite_diff_check_sampled;
    use crate::signal_io::Split;
    use rand_distr::{Distribution, StandardNormal};

    fn small_config(c: usize) -> EncoderConfig {
        EncoderConfig {
            gat_dim: 3,
            conv_channels: 2,
            conv_kernel: 40,
            conv_stride: 40,
            seed: 5,
            ..EncoderConfig::new(c)
        }
    }

    fn random_set(c: usize, n: usize, seed: u64) -> SegmentSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * c * SEGMENT_SAMPLES)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        SegmentSet::new(
            c,
            data,
            (0..n).map(|i| i % 2).collect(),
            vec![-1; n],
            vec![1; n],
            vec![Split::Train; n],
        )
        .unwrap()
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = small_config(4);
        let a = init_params(&cfg).unwrap();
        assert_eq!(a, init_params(&cfg).unwrap());
        let b = init_params(&EncoderConfig { seed: 6, ..cfg.clone() }).unwrap();
        assert_ne!(a, b);
        let bound = (6.0f64 / (cfg.flat_dim() + EMBED_DIM) as f64).sqrt();
        assert!(a.tensors()[4].data().iter().all(|v| v.abs() <= bound));
        assert!(a.tensors()[5].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::new(0).validate().is_err());
        assert!(EncoderConfig { conv_kernel: 401, ..EncoderConfig::new(2) }.validate().is_err());
        assert!(EncoderConfig { embed_dim: 16, ..EncoderConfig::new(2) }.validate().is_err());
        assert!(EncoderConfig { gat_heads: 2, ..EncoderConfig::new(2) }.validate().is_err());
        let cfg = EncoderConfig::new(62);
        assert_eq!(cfg.conv_out_len(), 76);
        assert_eq!(cfg.flat_dim(), 32 * 76);
    }

    #[test]
    fn single_channel_attention_is_identity() {
        let params = init_params(&small_config(1)).unwrap();
        let set = random_set(1, 1, 2);
        let x = Tensor::new([1, SEGMENT_SAMPLES], set.segment(0).to_vec()).unwrap();
        let out = gat_layer(&x, &params).unwrap();
        let mut h = vec![0.0; 3];
        let w = params.tensors()[0].data();
        for t in 0..SEGMENT_SAMPLES {
            for g in 0..3 {
                h[g] += x.data()[t] * w[t * 3 + g];
            }
        }
        for (a, b) in out.data().iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gat_matches_scalar_reference() {
        let params = init_params(&small_config(2)).unwrap();
        let set = random_set(2, 1, 3);
        let x = Tensor::new([2, SEGMENT_SAMPLES], set.segment(0).to_vec()).unwrap();
        let out = gat_layer(&x, &params).unwrap();

        let (w, a) = (params.tensors()[0].data(), params.tensors()[1].data());
        let g = 3;
        let mut h = [[0.0; 3]; 2];
        for i in 0..2 {
            for t in 0..SEGMENT_SAMPLES {
                for k in 0..g {
                    h[i][k] += x.data()[i * SEGMENT_SAMPLES + t] * w[t * g + k];
                }
            }
        }
        let lrelu = |v: f64| if v > 0.0 { v } else { 0.2 * v };
        for i in 0..2 {
            let e: Vec<f64> = (0..2)
                .map(|j| {
                    let s: f64 = (0..g).map(|k| a[k] * h[i][k] + a[g + k] * h[j][k]).sum();
                    lrelu(s)
                })
                .collect();
            let m = e[0].max(e[1]);
            let z: f64 = e.iter().map(|v| (v - m).exp()).sum();
            for k in 0..g {
                let want: f64 = (0..2).map(|j| (e[j] - m).exp() / z * h[j][k]).sum();
                assert!((out.at2(i, k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_channels_give_identical_rows() {
        let params = init_params(&small_config(3)).unwrap();
        let row: Vec<f64> = (0..SEGMENT_SAMPLES).map(|t| (t as f64 * 0.1).sin()).collect();
        let x = Tensor::new([3, SEGMENT_SAMPLES], row.repeat(3)).unwrap();
        let out = gat_layer(&x, &params).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.row(0), out.row(2));
    }

    #[test]
    fn channel_permutation_equivariance() {
        let params = init_params(&small_config(3)).unwrap();
        let set = random_set(3, 1, 8);
        let seg = set.segment(0);
        let perm = [2usize, 0, 1];
        let x = Tensor::new([3, SEGMENT_SAMPLES], seg.to_vec()).unwrap();
        let permuted: Vec<f64> = perm
            .iter()
            .flat_map(|&p| seg[p * SEGMENT_SAMPLES..(p + 1) * SEGMENT_SAMPLES].to_vec())
            .collect();
        let xp = Tensor::new([3, SEGMENT_SAMPLES], permuted).unwrap();
        let (a, b) = (gat_layer(&x, &params).unwrap(), gat_layer(&xp, &params).unwrap());
        for (row, &p) in perm.iter().enumerate() {
            for (u, v) in b.row(row).iter().zip(a.row(p)) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embeddings_are_unit_and_deterministic() {
        let params = init_params(&small_config(4)).unwrap();
        let set = random_set(4, 5, 9);
        let e = encode(&params, &set).unwrap();
        assert_eq!(e.shape(), &[5, EMBED_DIM]);
        for i in 0..5 {
            let n: f64 = e.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
        assert_eq!(e, encode(&params, &set).unwrap());
    }

    #[test]
    fn batch_order_only_permutes_rows() {
        let params = init_params(&small_config(2)).unwrap();
        let set = random_set(2, 4, 10);
        let fwd = encode_indices(&params, &set, &[0, 1, 2, 3]).unwrap();
        let rev = encode_indices(&params, &set, &[3, 2, 1, 0]).unwrap();
        for i in 0..4 {
            assert_eq!(fwd.row(i), rev.row(3 - i));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let params = init_params(&small_config(4)).unwrap();
        assert!(matches!(encode(&params, &random_set(3, 1, 0)), Err(Error::Dimension(_))));
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        // away from the leaky-relu kink that a zero attention vector sits on
        let params = with_attention(&init_params(&small_config(2)).unwrap());
        let set = random_set(2, 2, 11);
        let cfg = params.config.clone();
        let target = {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            Tensor::new([2, EMBED_DIM], (0..2 * EMBED_DIM).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let f = |tape: &mut Tape, v: &[Var]| {
            let p = ParamVars(v.try_into().unwrap());
            let xs = segment_vars(tape, &set, &[0, 1])?;
            let emb = forward(tape, &p, &cfg, &xs)?;
            let t = tape.constant(target.clone())?;
            let prod = tape.mul(emb, t)?;
            tape.sum(prod)
        };
        let err = finite_diff_check_sampled(f, params.tensors(), 1e-5, 40, 1).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let grads = |params: &EncoderParams| {
            let set = random_set(3, 3, 13);
            let mut tape = Tape::new();
            let p = params.attach(&mut tape, true).unwrap();
            let xs = segment_vars(&mut tape, &set, &[0, 1, 2]).unwrap();
            let emb = forward(&mut tape, &p, &params.config, &xs).unwrap();
            let w = tape
                .constant(Tensor::new([3, EMBED_DIM], (0..3 * EMBED_DIM).map(|i| ((i * 7) % 13) as f64 - 6.0).collect()).unwrap())
                .unwrap();
            let prod = tape.mul(emb, w).unwrap();
            let loss = tape.sum(prod).unwrap();
            tape.backward(loss).unwrap();
            p.0.iter().map(|v| tape.grad(*v).unwrap().data().iter().any(|&x| x != 0.0)).collect::<Vec<bool>>()
        };
        let params = init_params(&small_config(3)).unwrap();
        // with a zero attention vector the projection only matters through it
        let at_init = grads(&params);
        for (i, name) in EncoderParams::NAMES.iter().enumerate() {
            assert_eq!(at_init[i], i != 0, "{name}");
        }
        for (g, name) in grads(&with_attention(&params)).iter().zip(EncoderParams::NAMES) {
            assert!(g, "{name}");
        }
    }

    #[test]
    fn masking() {
        let set = random_set(2, 2, 14);
        assert!(mask_timesteps(&set, 0, 0).is_err());
        assert!(mask_timesteps(&set, 10, 401).is_err());
        let all = mask_timesteps(&set, 0, SEGMENT_SAMPLES).unwrap();
        assert!(all.data().iter().all(|&v| v == 0.0));
        let m = mask_timesteps(&set, 100, 300).unwrap();
        for (row, orig) in m.data().chunks(SEGMENT_SAMPLES).zip(set.data().chunks(SEGMENT_SAMPLES)) {
            assert_eq!(row[..100], orig[..100]);
            assert_eq!(row[300..], orig[300..]);
            assert_eq!(row[100..300].iter().sum::<f64>(), 0.0);
        }
    }
}
