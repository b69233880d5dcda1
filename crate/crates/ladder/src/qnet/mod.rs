//! The convolutional Q-network: hand-differentiated layers over the
//! 600x71 one-hot input.
//!
//! Canonical architecture (time axis / channels):
//! conv 71x7 -> 20ch (594), pool 3 (198), conv 7 -> 20ch (192), pool 3
//! (64), conv 5 -> 50ch (60), pool 3 (20), conv 5 -> 50ch (16), pool 2
//! (8), fully connected 400 -> 400, linear 400 -> C+1. Rectifiers on all
//! layers except the output. Weight-only counts per layer:
//! 9940 / 2800 / 5000 / 12500 / 160000 / 400*(C+1).
//!
//! All parameters live in one flat `f64` buffer with a computed layout,
//! so the optimizer, gradient buffers, and checkpoints are single-array
//! operations. Three instances of [`NetworkParams`] play the live,
//! serving-snapshot, and target roles; every mutation bumps `version`.

mod backward;
mod checkpoint;
mod forward;
mod optim;

pub use backward::backward;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use forward::{forward, forward_sparse, ForwardTrace};
pub use optim::{rmsprop_step, OptimizerState};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QnetError {
    #[error("action count must be at least 1")]
    InvalidActionCount,
    #[error("input shape mismatch: expected {expected} values, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("sparse view rows must be strictly increasing and in range")]
    InvalidSparseView,
    #[error("trace was produced by params version {trace}, current version is {params}")]
    VersionMismatch { trace: u64, params: u64 },
    #[error("network spec mismatch between source and destination")]
    SpecMismatch,
    #[error("non-finite gradient: training diverged")]
    NonFiniteGradient,
    #[error("gradient length {got} does not match parameter count {expected}")]
    GradientShape { expected: usize, got: usize },
}

/// One convolution stage: valid 1-d convolution over the time axis
/// followed by a non-overlapping max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub out_ch: usize,
    pub pool: usize,
}

/// Architecture description; fixes every buffer size in the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_len: usize,
    pub input_width: usize,
    pub convs: Vec<ConvSpec>,
    pub hidden_dim: usize,
    pub action_count: usize,
}

impl NetSpec {
    /// The canonical architecture over the 600x71 encoding.
    pub fn canonical(action_count: usize) -> NetSpec {
        NetSpec {
            input_len: crate::encoder::MAX_TEXT_LEN,
            input_width: crate::encoder::ALPHABET_SIZE,
            convs: vec![
                ConvSpec { kernel: 7, out_ch: 20, pool: 3 },
                ConvSpec { kernel: 7, out_ch: 20, pool: 3 },
                ConvSpec { kernel: 5, out_ch: 50, pool: 3 },
                ConvSpec { kernel: 5, out_ch: 50, pool: 2 },
            ],
            hidden_dim: 400,
            action_count,
        }
    }

    /// Per-conv (conv_len, pooled_len) pairs along the time axis.
    /// Trailing pool remainders are dropped.
    pub fn time_shapes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.convs.len());
        let mut len = self.input_len;
        for c in &self.convs {
            let conv_len = len + 1 - c.kernel;
            let pooled = conv_len / c.pool;
            out.push((conv_len, pooled));
            len = pooled;
        }
        out
    }

    /// Input channel count of conv layer `i`.
    pub fn conv_in_ch(&self, i: usize) -> usize {
        if i == 0 {
            self.input_width
        } else {
            self.convs[i - 1].out_ch
        }
    }

    /// Flattened length feeding the fully connected layer.
    pub fn flat_dim(&self) -> usize {
        let shapes = self.time_shapes();
        shapes.last().map_or(self.input_len * self.input_width, |&(_, p)| {
            p * self.convs.last().unwrap().out_ch
        })
    }

    /// Weight counts per layer, biases excluded.
    pub fn weight_counts(&self) -> Vec<usize> {
        let mut counts = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            counts.push(c.kernel * self.conv_in_ch(i) * c.out_ch);
        }
        counts.push(self.flat_dim() * self.hidden_dim);
        counts.push(self.hidden_dim * self.action_count);
        counts
    }

    fn validate(&self) -> Result<(), QnetError> {
        if self.action_count == 0 {
            return Err(QnetError::InvalidActionCount);
        }
        let mut len = self.input_len;
        for c in &self.convs {
            assert!(c.kernel >= 1 && c.pool >= 1 && c.out_ch >= 1);
            assert!(len >= c.kernel, "time axis shrank below the kernel size");
            let conv_len = len + 1 - c.kernel;
            len = conv_len / c.pool;
            assert!(len >= 1, "pooling consumed the whole time axis");
        }
        Ok(())
    }
}

/// Byte layout of the flat parameter buffer.
///
/// Order: for each conv layer, weights then biases; then hidden weights,
/// hidden biases, output weights, output biases.
///
/// Index conventions: conv weight (filter f, tap t, channel c) lives at
/// `(f*kernel + t)*in_ch + c`; dense weight (row j, column i) at
/// `j*in_dim + i`. Activations are time-major: `t*channels + c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub conv_w: Vec<(usize, usize)>,
    pub conv_b: Vec<(usize, usize)>,
    pub hidden_w: (usize, usize),
    pub hidden_b: (usize, usize),
    pub out_w: (usize, usize),
    pub out_b: (usize, usize),
    pub total: usize,
}

impl Layout {
    pub fn of(spec: &NetSpec) -> Layout {
        let mut off = 0;
        let mut seg = |len: usize| {
            let s = (off, len);
            off += len;
            s
        };
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for (i, c) in spec.convs.iter().enumerate() {
            conv_w.push(seg(c.kernel * spec.conv_in_ch(i) * c.out_ch));
            conv_b.push(seg(c.out_ch));
        }
        let hidden_w = seg(spec.flat_dim() * spec.hidden_dim);
        let hidden_b = seg(spec.hidden_dim);
        let out_w = seg(spec.hidden_dim * spec.action_count);
        let out_b = seg(spec.action_count);
        Layout { conv_w, conv_b, hidden_w, hidden_b, out_w, out_b, total: off }
    }
}

/// All weights and biases of one network instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    spec: NetSpec,
    layout_total: usize,
    data: Vec<f64>,
    version: u64,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.gen_range(-bound..=bound);
    }
}

impl NetworkParams {
    /// Fresh parameters: weights uniform in +-sqrt(6/(fan_in+fan_out)),
    /// biases zero, version 0.
    pub fn init(spec: NetSpec, rng: &mut ChaCha8Rng) -> Result<NetworkParams, QnetError> {
        spec.validate()?;
        let layout = Layout::of(&spec);
        let mut data = vec![0.0; layout.total];
        for (i, c) in spec.convs.iter().enumerate() {
            let (off, len) = layout.conv_w[i];
            let in_ch = spec.conv_in_ch(i);
            glorot(rng, c.kernel * in_ch, c.kernel * c.out_ch, &mut data[off..off + len]);
        }
        {
            let (off, len) = layout.hidden_w;
            glorot(rng, spec.flat_dim(), spec.hidden_dim, &mut data[off..off + len]);
        }
        {
            let (off, len) = layout.out_w;
            glorot(rng, spec.hidden_dim, spec.action_count, &mut data[off..off + len]);
        }
        Ok(NetworkParams { layout_total: layout.total, spec, data, version: 0 })
    }

    /// Canonical network for a `C+1`-action bid grid.
    pub fn init_canonical(action_count: usize, rng: &mut ChaCha8Rng) -> Result<NetworkParams, QnetError> {
        Self::init(NetSpec::canonical(action_count), rng)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layout(&self) -> Layout {
        Layout::of(&self.spec)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn param_len(&self) -> usize {
        self.data.len()
    }

    /// Weight counts per layer, biases excluded.
    pub fn param_counts(&self) -> Vec<usize> {
        self.spec.weight_counts()
    }

    pub(crate) fn seg(&self, seg: (usize, usize)) -> &[f64] {
        &self.data[seg.0..seg.0 + seg.1]
    }

    /// Copy every value of `src` into `self`, version included.
    pub fn clone_from_params(&mut self, src: &NetworkParams) -> Result<(), QnetError> {
        if self.spec != src.spec {
            return Err(QnetError::SpecMismatch);
        }
        self.data.copy_from_slice(&src.data);
        self.version = src.version;
        Ok(())
    }

    /// Apply `f` to the flat buffer and bump the version.
    pub(crate) fn update_in_place(&mut self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.data);
        self.version += 1;
    }

    /// Overwrite the flat buffer (checkpoint restore).
    pub(crate) fn restore(spec: NetSpec, data: Vec<f64>, version: u64) -> Result<NetworkParams, QnetError> {
        spec.validate()?;
        let layout = Layout::of(&spec);
        if data.len() != layout.total {
            return Err(QnetError::GradientShape { expected: layout.total, got: data.len() });
        }
        Ok(NetworkParams { layout_total: layout.total, spec, data, version })
    }
}

/// Gradient buffer matching a [`NetworkParams`] layout one-to-one.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Gradients {
        Gradients { data: vec![0.0; params.param_len()] }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Action values over the bid grid, indexed by action (bid in fen).
#[derive(Debug, Clone, PartialEq)]
pub struct QValues(pub Vec<f64>);

impl QValues {
    /// Argmax with ties broken toward the lowest action index.
    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn canonical_weight_counts_match_architecture() {
        let spec = NetSpec::canonical(201);
        assert_eq!(spec.weight_counts(), vec![9940, 2800, 5000, 12500, 160_000, 80_400]);
    }

    #[test]
    fn canonical_time_shapes() {
        let spec = NetSpec::canonical(201);
        let flat: Vec<usize> = spec.time_shapes().iter().flat_map(|&(c, p)| [c, p]).collect();
        assert_eq!(flat, vec![594, 198, 192, 64, 60, 20, 16, 8]);
        assert_eq!(spec.flat_dim(), 400);
    }

    #[test]
    fn init_is_seed_deterministic_with_zero_biases() {
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = NetworkParams::init_canonical(201, &mut r1).unwrap();
        let b = NetworkParams::init_canonical(201, &mut r2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.version(), 0);

        let layout = a.layout();
        for seg in layout.conv_b.iter().chain([&layout.hidden_b, &layout.out_b]) {
            assert!(a.seg(*seg).iter().all(|&v| v == 0.0));
        }
        // Output layer for 201 actions.
        assert_eq!(layout.out_w.1, 80_400);
    }

    #[test]
    fn zero_actions_is_invalid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = NetworkParams::init_canonical(0, &mut rng).unwrap_err();
        assert_eq!(err, QnetError::InvalidActionCount);
    }

    #[test]
    fn clone_semantics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = NetworkParams::init_canonical(11, &mut rng).unwrap();
        let mut dst = NetworkParams::init_canonical(11, &mut rng).unwrap();
        dst.clone_from_params(&src).unwrap();
        assert_eq!(dst, src);

        // Value copy: mutating the source leaves the clone untouched.
        let mut src2 = src.clone();
        src2.update_in_place(|d| d[0] += 1.0);
        assert_eq!(dst, src);
        assert_ne!(src2, src);

        // Clone of clone equals the original.
        let mut dst2 = NetworkParams::init_canonical(11, &mut rng).unwrap();
        dst2.clone_from_params(&dst).unwrap();
        assert_eq!(dst2, src);

        let mut other = NetworkParams::init_canonical(12, &mut rng).unwrap();
        assert_eq!(other.clone_from_params(&src).unwrap_err(), QnetError::SpecMismatch);
    }

    #[test]
    fn greedy_breaks_ties_low() {
        assert_eq!(QValues(vec![1.0, 3.0, 2.0]).greedy(), 1);
        assert_eq!(QValues(vec![5.0, 5.0, 1.0]).greedy(), 0);
        assert_eq!(QValues(vec![-1.0]).greedy(), 0);
    }
}
