//! Fully connected feed-forward networks with two hidden leaky-ReLU layers and
//! a linear output, with exact reverse-mode gradients.
//!
// index-based loops here mirror the matrix math; iterator forms read worse
#![allow(clippy::needless_range_loop)]

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

pub const CHECKPOINT_VERSION: &str = "locpriv-ckpt-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// rows x cols, row-major; rows = output dim, cols = input dim.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
            rows,
            cols,
        }
    }
}

/// Parameters of one network. Hidden layers use leaky-ReLU; the last layer is
/// linear (the actor applies its softplus mapping outside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Activations retained by `forward` for the matching `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    /// Post-activation output of each layer.
    post: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Post-activation output of each layer, in order.
    pub fn post_activations(&self) -> &[Vec<f64>] {
        &self.post
    }
}

impl MlpParams {
    /// He-style uniform fan-in initialization, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (cols, rows) = (pair[0], pair[1]);
            let bound = (6.0 / cols as f64).sqrt();
            let mut layer = Layer::zeros(rows, cols);
            for w in &mut layer.w {
                *w = rng.gen_range(-bound..bound);
            }
            layers.push(layer);
        }
        Self { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims.windows(2).map(|p| Layer::zeros(p[1], p[0])).collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.rows, l.cols))
            .collect();
        Self { layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].cols];
        dims.extend(self.layers.iter().map(|l| l.rows));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().rows
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = layer.b.clone();
            for r in 0..layer.rows {
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = 0.0;
                for (wv, xv) in row.iter().zip(&cur) {
                    acc += wv * xv;
                }
                out[r] += acc;
            }
            if li != last {
                for v in &mut out {
                    if *v < 0.0 {
                        *v *= LEAKY_SLOPE;
                    }
                }
            }
            post.push(out.clone());
            cur = out;
        }
        let cache = ForwardCache {
            input: input.to_vec(),
            post,
        };
        Ok((cur, cache))
    }

    /// Output only, skipping the cache allocation.
    pub fn forward_nograd(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    /// First-layer pre-activation contribution of a prefix of the input plus
    /// the bias: b1 + W1[:, ..prefix.len()] * prefix. Callers that evaluate the
    /// network on many inputs sharing a prefix (belief concatenated with
    /// varying one-hot codes) compute this once per step.
    pub fn first_layer_partial(&self, prefix: &[f64]) -> Vec<f64> {
        let l = &self.layers[0];
        let mut out = l.b.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &l.w[r * l.cols..(r + 1) * l.cols];
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(prefix) {
                acc += wv * xv;
            }
            *o += acc;
        }
        out
    }

    /// Forward pass where the first-layer input is the prefix from
    /// `first_layer_partial` plus one-hot entries at the given absolute input
    /// columns. No cache; used on the hot kernel-materialization path.
    pub fn forward_onehot_rest(&self, partial: &[f64], hot_cols: &[usize]) -> Vec<f64> {
        let l0 = &self.layers[0];
        let mut cur: Vec<f64> = partial.to_vec();
        for (r, v) in cur.iter_mut().enumerate() {
            for &c in hot_cols {
                *v += l0.w[r * l0.cols + c];
            }
        }
        let last = self.layers.len() - 1;
        if last > 0 {
            for v in &mut cur {
                if *v < 0.0 {
                    *v *= LEAKY_SLOPE;
                }
            }
        }
        for (li, layer) in self.layers.iter().enumerate().skip(1) {
            let mut out = layer.b.clone();
            for r in 0..layer.rows {
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = 0.0;
                for (wv, xv) in row.iter().zip(&cur) {
                    acc += wv * xv;
                }
                out[r] += acc;
            }
            if li != last {
                for v in &mut out {
                    if *v < 0.0 {
                        *v *= LEAKY_SLOPE;
                    }
                }
            }
            cur = out;
        }
        cur
    }

    /// Reverse-mode gradients of a scalar loss with the given gradient at the
    /// network output. Returns parameter gradients shaped like `self`.
    pub fn backward(&self, cache: &ForwardCache, out_grad: &[f64]) -> Result<MlpParams> {
        if cache.post.len() != self.layers.len() {
            return Err(Error::Domain("cache does not match network depth".into()));
        }
        if out_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.output_dim(),
                got: out_grad.len(),
            });
        }
        let mut grads = self.zeros_like();
        let last = self.layers.len() - 1;
        let mut delta = out_grad.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            if li != last {
                // gradient through leaky-ReLU, using the stored post-activation sign
                for (d, &p) in delta.iter_mut().zip(&cache.post[li]) {
                    if p < 0.0 {
                        *d *= LEAKY_SLOPE;
                    }
                }
            }
            let below: &[f64] = if li == 0 {
                &cache.input
            } else {
                &cache.post[li - 1]
            };
            if below.len() != layer.cols {
                return Err(Error::Domain("stale forward cache".into()));
            }
            let g = &mut grads.layers[li];
            for r in 0..layer.rows {
                let d = delta[r];
                g.b[r] += d;
                let grow = &mut g.w[r * layer.cols..(r + 1) * layer.cols];
                for (gv, xv) in grow.iter_mut().zip(below) {
                    *gv += d * xv;
                }
            }
            if li > 0 {
                let mut next_delta = vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let d = delta[r];
                    let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                    for (nd, wv) in next_delta.iter_mut().zip(row) {
                        *nd += d * wv;
                    }
                }
                delta = next_delta;
            }
        }
        Ok(grads)
    }

    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
    }

    pub fn all_finite(&self) -> bool {
        self.iter_values().all(|v| v.is_finite())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointWire {
    version: String,
    dims: Vec<usize>,
    layers: Vec<Layer>,
}

pub fn checkpoint_to_json(p: &MlpParams) -> String {
    let wire = CheckpointWire {
        version: CHECKPOINT_VERSION.to_string(),
        dims: p.dims(),
        layers: p.layers.clone(),
    };
    serde_json::to_string(&wire).expect("checkpoint serialization")
}

pub fn checkpoint_from_json(s: &str) -> Result<MlpParams> {
    let wire: CheckpointWire = serde_json::from_str(s)?;
    if wire.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {:?}",
            wire.version
        )));
    }
    let p = MlpParams {
        layers: wire.layers,
    };
    if p.dims() != wire.dims {
        return Err(Error::Checkpoint("dims do not match layer shapes".into()));
    }
    for l in &p.layers {
        if l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
            return Err(Error::Checkpoint("layer shape mismatch".into()));
        }
    }
    Ok(p)
}
