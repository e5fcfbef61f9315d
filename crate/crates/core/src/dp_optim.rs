//! Clip–noise–average gradient privatization and the SGD / Adam updates
//! that consume it.
//!
//! A lot of `L` per-example gradients becomes
//! `(1/L) · (Σ clip(gᵢ, C) + N(0, σ²C²I))`: each example is clipped on its
//! own and a single Gaussian draw is added to the sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GradientVector;
use crate::rng::SeededRng;

pub const DEFAULT_CLIP_NORM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpNoiseSpec {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
}

impl DpNoiseSpec {
    pub fn new(clip_norm: f64, noise_multiplier: f64) -> Result<Self> {
        if !(clip_norm > 0.0 && clip_norm.is_finite()) {
            return Err(Error::invalid(format!("clip norm must be positive, got {clip_norm}")));
        }
        if !(noise_multiplier >= 0.0 && noise_multiplier.is_finite()) {
            return Err(Error::invalid(format!(
                "noise multiplier must be non-negative, got {noise_multiplier}"
            )));
        }
        Ok(Self {
            clip_norm,
            noise_multiplier,
        })
    }

    /// Standard deviation of the noise added to each coordinate of the sum.
    pub fn noise_std(&self) -> f64 {
        self.noise_multiplier * self.clip_norm
    }
}

/// Scales `g` by `1 / max(1, ‖g‖₂ / C)`.
pub fn clip_gradient(g: &GradientVector, clip_norm: f64) -> Result<GradientVector> {
    if !g.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    if !(clip_norm > 0.0) {
        return Err(Error::invalid("clip norm must be positive"));
    }
    let factor = (g.l2_norm() / clip_norm).max(1.0);
    if factor == 1.0 {
        return Ok(g.clone());
    }
    Ok(GradientVector(g.0.iter().map(|v| v / factor).collect()))
}

/// Clips every per-example gradient, sums them, adds one Gaussian draw with
/// per-coordinate std `σ·C`, and divides by the lot size.
pub fn noisy_lot_gradient(
    per_example: &[GradientVector],
    spec: &DpNoiseSpec,
    rng: &mut SeededRng,
) -> Result<GradientVector> {
    let first = per_example
        .first()
        .ok_or_else(|| Error::invalid("lot contains no gradients"))?;
    let len = first.len();
    let mut sum = vec![0.0; len];
    for g in per_example {
        if g.len() != len {
            return Err(Error::shape(format!(
                "gradient lengths differ: {} vs {len}",
                g.len()
            )));
        }
        let clipped = clip_gradient(g, spec.clip_norm)?;
        for (s, v) in sum.iter_mut().zip(&clipped.0) {
            *s += v;
        }
    }
    let std_dev = spec.noise_std();
    if std_dev > 0.0 {
        for s in &mut sum {
            *s += rng.normal(0.0, std_dev);
        }
    }
    let lot = per_example.len() as f64;
    Ok(GradientVector(sum.into_iter().map(|s| s / lot).collect()))
}

/// `θ ← θ − η·g`.
pub fn sgd_step(params: &mut [f64], grad: &GradientVector, lr: f64) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::shape(format!(
            "{} parameters, {} gradient entries",
            params.len(),
            grad.len()
        )));
    }
    for (p, g) in params.iter_mut().zip(&grad.0) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_hyperparams(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(len: usize, beta1: f64, beta2: f64, eps_hat: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1,
            beta2,
            eps_hat,
        }
    }
}

/// One Adam update with bias-corrected moment estimates. Under DP the
/// gradient passed in is already the noisy lot gradient.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &GradientVector, lr: f64) -> Result<()> {
    if state.m.len() != grad.len() || params.len() != grad.len() {
        return Err(Error::shape(format!(
            "adam state {}, parameters {}, gradient {}",
            state.m.len(),
            params.len(),
            grad.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let t = state.t as i32;
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    for (((p, m), v), &g) in params
        .iter_mut()
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
        .zip(&grad.0)
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps_hat);
    }
    Ok(())
}

/// Example ids of one lot plus the sampling ratio the accountant needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotPlan {
    pub examples: Vec<usize>,
    pub num_examples: usize,
}

impl LotPlan {
    pub fn lot_size(&self) -> usize {
        self.examples.len()
    }

    pub fn sampling_ratio(&self) -> f64 {
        self.examples.len() as f64 / self.num_examples as f64
    }
}

/// Uniformly samples `lot_size` distinct example ids out of `num_examples`.
pub fn sample_lot(num_examples: usize, lot_size: usize, rng: &mut SeededRng) -> Result<LotPlan> {
    if lot_size == 0 || lot_size > num_examples {
        return Err(Error::invalid(format!(
            "lot size {lot_size} outside 1..={num_examples}"
        )));
    }
    let mut examples = rng.sample_indices(num_examples, lot_size);
    examples.sort_unstable();
    Ok(LotPlan {
        examples,
        num_examples,
    })
}
