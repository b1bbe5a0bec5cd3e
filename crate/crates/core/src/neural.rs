//! Two-layer ReLU networks `f(x; W) = M^{-1/2} sum_m b_m relu(<W_m, x>)` with
//! frozen output signs, their feature maps, and projection onto the L-inf box
//! around the initialization.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

const MAGIC: &[u8; 8] = b"LTDENET1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    width: usize,
    in_dim: usize,
    radius: f64,
    seed: u64,
    weights: Vec<f64>,
    signs: Vec<i8>,
    init_weights: Vec<f64>,
}

impl TwoLayerNet {
    /// Rows `W_m ~ N(0, I_d / d)`, signs uniform on {-1, +1}. The initial
    /// weights are kept as the center of the projection box.
    pub fn init(width: usize, in_dim: usize, radius: f64, seed: u64) -> Result<Self> {
        if width == 0 || in_dim == 0 {
            return Err(Error::InvalidHyperparameter("net width and input dimension must be positive".into()));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidHyperparameter(format!("projection radius {radius} invalid")));
        }
        let mut rng = StreamRng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / in_dim as f64).sqrt()).unwrap();
        let weights: Vec<f64> = (0..width * in_dim).map(|_| normal.sample(&mut rng)).collect();
        let signs = (0..width).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Ok(Self {
            width,
            in_dim,
            radius,
            seed,
            init_weights: weights.clone(),
            weights,
            signs,
        })
    }

    /// Builds a net from explicit parameters, with `weights` as the initialization.
    pub fn from_parts(in_dim: usize, radius: f64, weights: Vec<f64>, signs: Vec<i8>) -> Result<Self> {
        let width = signs.len();
        if width == 0 || in_dim == 0 || weights.len() != width * in_dim {
            return Err(Error::DimensionMismatch {
                expected: width * in_dim,
                got: weights.len(),
            });
        }
        if signs.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::InvalidHyperparameter("output signs must be +-1".into()));
        }
        Ok(Self {
            width,
            in_dim,
            radius,
            seed: 0,
            init_weights: weights.clone(),
            weights,
            signs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn init_weights(&self) -> &[f64] {
        &self.init_weights
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn n_params(&self) -> usize {
        self.weights.len()
    }

    /// Half-width `R / sqrt(M)` of the projection box.
    pub fn box_half_width(&self) -> f64 {
        self.radius / (self.width as f64).sqrt()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.in_dim..(m + 1) * self.in_dim]
    }

    fn pre_activation(&self, m: usize, x: &[f64]) -> f64 {
        self.row(m).iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for m in 0..self.width {
            let z = self.pre_activation(m, x);
            if z > 0.0 {
                acc += self.signs[m] as f64 * z;
            }
        }
        acc / (self.width as f64).sqrt()
    }

    /// Row `m` is `(b_m / sqrt(M)) 1{<W_m, x> > 0} x`; equals the gradient of
    /// `forward` in `W` away from kinks.
    pub fn feature_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.weights.len()];
        self.accumulate_feature(x, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale * feature_map(x)`.
    pub(crate) fn accumulate_feature(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let norm = scale / (self.width as f64).sqrt();
        for m in 0..self.width {
            if self.pre_activation(m, x) > 0.0 {
                let c = norm * self.signs[m] as f64;
                let row = &mut out[m * self.in_dim..(m + 1) * self.in_dim];
                for (o, v) in row.iter_mut().zip(x) {
                    *o += c * v;
                }
            }
        }
    }

    /// Clamp of `proposed` into the box; the Euclidean projection onto it.
    pub fn project_ball(&self, proposed: &[f64]) -> Result<TwoLayerNet> {
        if proposed.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: proposed.len(),
            });
        }
        let mut net = self.clone();
        net.weights.copy_from_slice(proposed);
        net.clamp();
        Ok(net)
    }

    fn clamp(&mut self) {
        let half = self.box_half_width();
        for (w, w0) in self.weights.iter_mut().zip(&self.init_weights) {
            *w = w.clamp(w0 - half, w0 + half);
        }
    }

    /// `W <- Proj(W + scale * direction)`.
    pub fn step_projected(&mut self, direction: &[f64], scale: f64) -> Result<()> {
        if direction.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: direction.len(),
            });
        }
        for (w, d) in self.weights.iter_mut().zip(direction) {
            *w += scale * d;
        }
        self.clamp();
        Ok(())
    }

    /// Semigradient step `W <- Proj(W + scale * feature_map(x))` without allocating.
    pub(crate) fn feature_step_projected(&mut self, x: &[f64], scale: f64) {
        let norm = scale / (self.width as f64).sqrt();
        let half = self.box_half_width();
        for m in 0..self.width {
            if self.pre_activation(m, x) > 0.0 {
                let c = norm * self.signs[m] as f64;
                let range = m * self.in_dim..(m + 1) * self.in_dim;
                for ((w, w0), v) in self.weights[range.clone()]
                    .iter_mut()
                    .zip(&self.init_weights[range])
                    .zip(x)
                {
                    *w = (*w + c * v).clamp(w0 - half, w0 + half);
                }
            }
        }
    }

    /// Overwrites the current weights (clamped), keeping signs and initialization.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        *self = self.project_ball(weights)?;
        Ok(())
    }

    /// `max |W - W(0)|`.
    pub fn max_deviation(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.init_weights)
            .map(|(w, w0)| (w - w0).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: TwoLayerNet = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let n = self.width * self.in_dim;
        if self.width == 0 || self.in_dim == 0 || self.weights.len() != n || self.init_weights.len() != n {
            return Err(Error::Checkpoint("weight arrays do not match M x d".into()));
        }
        if self.signs.len() != self.width || self.signs.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::Checkpoint("signs must be M entries of +-1".into()));
        }
        Ok(())
    }

    /// Little-endian binary checkpoint:
    /// `"LTDENET1" | M: u32 | d: u32 | R: f64 | seed: u64 | W: M*d f64 | b: M i8 | W(0): M*d f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.width + 16 * self.weights.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.radius.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend(self.signs.iter().map(|&b| b as u8));
        for w in &self.init_weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 32 || &bytes[..8] != MAGIC {
            return Err(bad("missing LTDENET1 header"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let width = u32_at(8);
        let in_dim = u32_at(12);
        let radius = f64::from_bits(u64_at(16));
        let seed = u64_at(24);
        let n = width
            .checked_mul(in_dim)
            .ok_or_else(|| bad("header dimensions overflow"))?;
        if bytes.len() != 32 + width + 16 * n {
            return Err(bad("checkpoint length does not match header"));
        }
        let floats = |start: usize| (0..n).map(|i| f64::from_bits(u64_at(start + 8 * i))).collect::<Vec<_>>();
        let weights = floats(32);
        let signs = bytes[32 + 8 * n..32 + 8 * n + width].iter().map(|&b| b as i8).collect();
        let init_weights = floats(32 + 8 * n + width);
        let net = Self {
            width,
            in_dim,
            radius,
            seed,
            weights,
            signs,
            init_weights,
        };
        net.validate()?;
        Ok(net)
    }
}

/// Net input for a window: the window's `mu` entries, then its `h` rows scaled
/// by `1/sqrt(|window|)`, the whole vector scaled by `1/sqrt(2)`. Both halves
/// have norm at most one, so the result has norm at most one.
pub fn encode_input(mu_window: &[f64], h_window: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(mu_window.len() * (1 + h_window.first().map_or(0, Vec::len)));
    encode_into(mu_window, h_window.iter().map(Vec::as_slice), &mut out);
    out
}

pub(crate) fn encode_into<'a>(mu_window: &[f64], h_rows: impl Iterator<Item = &'a [f64]>, out: &mut Vec<f64>) {
    let outer = std::f64::consts::FRAC_1_SQRT_2;
    let inner = outer / (mu_window.len().max(1) as f64).sqrt();
    out.clear();
    out.extend(mu_window.iter().map(|m| m * outer));
    for row in h_rows {
        out.extend(row.iter().map(|v| v * inner));
    }
}

/// Input dimension for a window with `window_len` states and `n_actions` actions.
pub fn input_dim(window_len: usize, n_actions: usize) -> usize {
    window_len * (1 + n_actions)
}

/// `phi(x_chosen) - sum_j pmf_j phi(x_j)` over an enumerated candidate set.
pub fn centered_feature(net: &TwoLayerNet, inputs: &[Vec<f64>], pmf: &[f64], chosen: usize) -> Result<Vec<f64>> {
    if inputs.len() != pmf.len() || chosen >= inputs.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: pmf.len(),
        });
    }
    for x in inputs {
        net.check_dim(x)?;
    }
    let mut out = net.feature_map(&inputs[chosen])?;
    for (x, &p) in inputs.iter().zip(pmf) {
        if p > 0.0 {
            net.accumulate_feature(x, -p, &mut out);
        }
    }
    Ok(out)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
