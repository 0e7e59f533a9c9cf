//! Learner interface and the desk-scale reference network.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sha256_hex;

pub const MAX_HIDDEN_UNITS: usize = 1024;

/// A differentiable multi-label scorer with a flat parameter vector.
///
/// Trainers only touch learners through this trait, so any model that can
/// produce logits and back-propagate a logit gradient can join an ensemble.
pub trait Learner: Clone + Send + Sync {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Writes `num_classes` logits into `out`. Dimensions are not checked.
    fn forward(&self, x: &[f64], out: &mut [f64]);

    /// Adds `d loss / d params` to `grad`, given `d loss / d logits` at `x`.
    fn backward(&self, x: &[f64], dlogits: &[f64], grad: &mut [f64]);

    fn predict_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.len() });
        }
        let mut out = vec![0.0; self.num_classes()];
        self.forward(x, &mut out);
        Ok(out)
    }

    fn params_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Width of the tanh hidden layer; 0 gives a linear model.
    pub hidden_units: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self { hidden_units: 0, seed: 0, init_scale: 1.0 }
    }
}

impl LearnerConfig {
    pub fn new(hidden_units: usize, seed: u64) -> Self {
        Self { hidden_units, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_units > MAX_HIDDEN_UNITS {
            return Err(Error::invalid(format!(
                "hidden_units must be <= {MAX_HIDDEN_UNITS}, got {}",
                self.hidden_units
            )));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(Error::invalid("init_scale must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Linear model or one-hidden-layer tanh network.
///
/// Parameter layout, row-major: `[W (T x d), b (T)]` when linear, otherwise
/// `[W1 (h x d), b1 (h), W2 (T x h), b2 (T)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    config: LearnerConfig,
    input_dim: usize,
    num_classes: usize,
    params: Vec<f64>,
}

impl Mlp {
    pub fn new(config: LearnerConfig, input_dim: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::invalid("input_dim and num_classes must be positive"));
        }
        let h = config.hidden_units;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::new();
        let mut layer = |fan_in: usize, fan_out: usize, params: &mut Vec<f64>| {
            let bound = config.init_scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let u: f64 = rng.random_range(-1.0..1.0);
                params.push(bound * u);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        };
        if h == 0 {
            layer(input_dim, num_classes, &mut params);
        } else {
            layer(input_dim, h, &mut params);
            layer(h, num_classes, &mut params);
        }
        Ok(Self { config, input_dim, num_classes, params })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    fn hidden(&self, x: &[f64], act: &mut [f64]) {
        let (d, h) = (self.input_dim, self.config.hidden_units);
        let (w1, rest) = self.params.split_at(h * d);
        let b1 = &rest[..h];
        for j in 0..h {
            let row = &w1[j * d..(j + 1) * d];
            act[j] = (b1[j] + dot(row, x)).tanh();
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        fs::write(path, self.checkpoint_string())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&fs::read_to_string(path)?)
    }

    pub fn checkpoint_string(&self) -> String {
        encode_checkpoint(LEARNER_MAGIC, &serde_json::to_string(self).expect("learner serializes"))
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let payload = decode_checkpoint(LEARNER_MAGIC, text)?;
        let mlp: Mlp = serde_json::from_str(payload)?;
        let expected = Mlp::new(mlp.config.clone(), mlp.input_dim, mlp.num_classes)?.params.len();
        if mlp.params.len() != expected {
            return Err(Error::Checkpoint(format!("expected {expected} parameters, found {}", mlp.params.len())));
        }
        Ok(mlp)
    }
}

const LEARNER_MAGIC: &str = "labelfix-learner v1";

/// Wraps a one-line payload as `magic\nsha256=<hex>\npayload\n`.
pub(crate) fn encode_checkpoint(magic: &str, payload: &str) -> String {
    format!("{magic}\nsha256={}\n{payload}\n", sha256_hex(payload.as_bytes()))
}

pub(crate) fn decode_checkpoint<'a>(magic: &str, text: &'a str) -> Result<&'a str> {
    let mut lines = text.splitn(3, '\n');
    if lines.next() != Some(magic) {
        return Err(Error::Checkpoint(format!("missing {magic:?} header")));
    }
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("sha256="))
        .ok_or_else(|| Error::Checkpoint("missing content hash".into()))?;
    let payload = lines.next().unwrap_or("").trim_end_matches('\n');
    if sha256_hex(payload.as_bytes()) != hash {
        return Err(Error::Checkpoint("content hash mismatch".into()));
    }
    Ok(payload)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Learner for Mlp {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        let (d, t, h) = (self.input_dim, self.num_classes, self.config.hidden_units);
        if h == 0 {
            let (w, b) = self.params.split_at(t * d);
            for c in 0..t {
                out[c] = b[c] + dot(&w[c * d..(c + 1) * d], x);
            }
            return;
        }
        let mut act = vec![0.0; h];
        self.hidden(x, &mut act);
        let w2 = &self.params[h * d + h..h * d + h + t * h];
        let b2 = &self.params[h * d + h + t * h..];
        for c in 0..t {
            out[c] = b2[c] + dot(&w2[c * h..(c + 1) * h], &act);
        }
    }

    fn backward(&self, x: &[f64], dlogits: &[f64], grad: &mut [f64]) {
        let (d, t, h) = (self.input_dim, self.num_classes, self.config.hidden_units);
        if h == 0 {
            let (gw, gb) = grad.split_at_mut(t * d);
            for c in 0..t {
                let g = dlogits[c];
                if g == 0.0 {
                    continue;
                }
                for (gwi, xi) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *gwi += g * xi;
                }
                gb[c] += g;
            }
            return;
        }
        let mut act = vec![0.0; h];
        self.hidden(x, &mut act);
        let w2 = &self.params[h * d + h..h * d + h + t * h];
        let (g1, g2) = grad.split_at_mut(h * d + h);
        let (gw1, gb1) = g1.split_at_mut(h * d);
        let (gw2, gb2) = g2.split_at_mut(t * h);
        let mut dact = vec![0.0; h];
        for c in 0..t {
            let g = dlogits[c];
            gb2[c] += g;
            let row = &w2[c * h..(c + 1) * h];
            for j in 0..h {
                gw2[c * h + j] += g * act[j];
                dact[j] += g * row[j];
            }
        }
        for j in 0..h {
            let dz = dact[j] * (1.0 - act[j] * act[j]);
            gb1[j] += dz;
            for (gwi, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                *gwi += dz * xi;
            }
        }
    }
}
