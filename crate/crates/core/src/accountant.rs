//! Moments accountant for the (subsampled) Gaussian mechanism.
//!
//! Each noisy step with sampling ratio `q` and noise multiplier `σ` has a
//! log-moment `α(λ) = ln E[exp(λ·Z)]` of its privacy loss `Z`. Log-moments of
//! independent steps add, and the Chernoff bound turns the total into
//!
//! ```text
//! δ = min_λ exp(Σ α(λ) − λ·ε)        ε = min_λ (Σ α(λ) − ln δ) / λ
//! ```
//!
//! For `q = 1` the log-moment has the closed form `λ(λ+1) / (2σ²)`. For
//! `q < 1` the output distribution is the mixture `ν = (1−q)·N(0,σ²) +
//! q·N(1,σ²)` against `μ = N(0,σ²)`, and `α(λ) = ln max(E_ν[(ν/μ)^λ],
//! E_μ[(μ/ν)^λ])`, evaluated by adaptive quadrature in log space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_MAX_ORDER: u32 = 64;
/// Upper end of the noise search in [`calibrate_noise`].
pub const CALIBRATION_CAP: f64 = 1e6;
/// Resolution of the noise search grid.
pub const CALIBRATION_RESOLUTION: f64 = 0.01;

/// One run of identical noisy steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub sampling_ratio: f64,
    pub noise_multiplier: f64,
    pub steps: u64,
}

/// Append-only log of the noisy steps a training run has taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantLedger {
    records: Vec<LedgerRecord>,
    orders: Vec<u32>,
}

impl Default for AccountantLedger {
    fn default() -> Self {
        Self::new()
    }
}

fn check_mechanism(q: f64, sigma: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("sampling ratio {q} not in (0, 1]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise multiplier {sigma} must be positive")));
    }
    Ok(())
}

impl AccountantLedger {
    /// Empty ledger over moment orders `1..=64`.
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            orders: (1..=DEFAULT_MAX_ORDER).collect(),
        }
    }

    pub fn with_orders(orders: Vec<u32>) -> Result<Self> {
        if orders.is_empty() || orders[0] == 0 || orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("moment orders must be positive and strictly increasing"));
        }
        Ok(Self {
            records: Vec::new(),
            orders,
        })
    }

    /// Appends `steps` steps of the mechanism `(q, σ)`.
    pub fn record(&mut self, sampling_ratio: f64, noise_multiplier: f64, steps: u64) -> Result<()> {
        check_mechanism(sampling_ratio, noise_multiplier)?;
        if steps == 0 {
            return Err(Error::invalid("a ledger record needs at least one step"));
        }
        self.records.push(LedgerRecord {
            sampling_ratio,
            noise_multiplier,
            steps,
        });
        Ok(())
    }

    /// Appends a single step.
    pub fn record_step(&mut self, sampling_ratio: f64, noise_multiplier: f64) -> Result<()> {
        self.record(sampling_ratio, noise_multiplier, 1)
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_steps(&self) -> u64 {
        self.records.iter().map(|r| r.steps).sum()
    }
}

/// Log-moment of a single step.
pub fn log_moment(q: f64, sigma: f64, lambda: u32) -> Result<f64> {
    check_mechanism(q, sigma)?;
    if lambda == 0 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    if q == 1.0 {
        Ok(gaussian_log_moment(sigma, lambda))
    } else {
        Ok(log_moment_quadrature(q, sigma, lambda))
    }
}

/// `λ(λ+1) / (2σ²)`: log-moment of the Gaussian mechanism with sensitivity 1.
pub fn gaussian_log_moment(sigma: f64, lambda: u32) -> f64 {
    let l = f64::from(lambda);
    l * (l + 1.0) / (2.0 * sigma * sigma)
}

/// `ln((1−q) + q·e^u)` without overflow or cancellation.
fn log_mixture_ratio(q: f64, u: f64) -> f64 {
    if q == 1.0 {
        u
    } else if u > 30.0 {
        q.ln() + u + ((1.0 - q) / q * (-u).exp()).ln_1p()
    } else {
        (q * u.exp_m1()).ln_1p()
    }
}

/// Subsampled-Gaussian log-moment by numerical integration, valid for all
/// `q ∈ (0, 1]`. At `q = 1` it reproduces [`gaussian_log_moment`].
/// Log-scale cutoff below the peak past which integrand cells are dropped.
const NEGLIGIBLE: f64 = -60.0;

pub fn log_moment_quadrature(q: f64, sigma: f64, lambda: u32) -> f64 {
    let l = f64::from(lambda);
    let s2 = sigma * sigma;
    let log_norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_mu = move |z: f64| -z * z / (2.0 * s2) + log_norm;
    // ln(ν/μ) at z
    let log_ratio = move |z: f64| log_mixture_ratio(q, (2.0 * z - 1.0) / (2.0 * s2));

    // Both integrands carry their mass within a few σ of [−λ, 1+λ].
    let lo = -l - 20.0 * sigma;
    let hi = 1.0 + l + 20.0 * sigma;
    let log_e1 = log_integral(|z| log_mu(z) + (l + 1.0) * log_ratio(z), lo, hi, sigma);
    let log_e2 = log_integral(|z| log_mu(z) - l * log_ratio(z), lo, hi, sigma);
    log_e1.max(log_e2).max(0.0)
}

/// `ln ∫ exp(g(z)) dz`, shifting by the maximum of `g` so the integrand
/// stays in floating-point range.
fn log_integral<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, sigma: f64) -> f64 {
    // Sample at half-σ spacing, then integrate only the runs of cells that
    // carry mass; for small σ the integrand is a comb of narrow peaks.
    let cells = (((hi - lo) / (0.5 * sigma)).ceil() as usize).clamp(256, 1 << 17);
    let step = (hi - lo) / cells as f64;
    let at = |i: usize| if i == cells { hi } else { lo + step * i as f64 };
    let samples: Vec<f64> = (0..=cells).map(|i| g(at(i))).collect();
    let shift = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let live = |i: usize| samples[i] - shift > NEGLIGIBLE || samples[i + 1] - shift > NEGLIGIBLE;

    let mut total = 0.0;
    let mut i = 0;
    while i < cells {
        if !live(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < cells && live(i) {
            i += 1;
        }
        let run = i - start;
        total += quadrature::integrate(
            |z| (g(z) - shift).exp(),
            at(start),
            at(i),
            run.div_ceil(4),
            1e-14 * sigma,
            1e-11,
            20_000,
        )
        .value;
    }
    shift + total.ln()
}

/// Total log-moment per order: `Σ steps · α(q, σ, λ)` over the ledger.
///
/// Records with identical `(q, σ)` are merged before multiplying, so
/// splitting a run across records never changes the result.
pub fn compose(ledger: &AccountantLedger) -> Result<Vec<f64>> {
    let mut groups: Vec<((u64, u64), f64, f64, u64)> = Vec::new();
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    for r in ledger.records() {
        let key = (r.sampling_ratio.to_bits(), r.noise_multiplier.to_bits());
        match index.get(&key) {
            Some(&i) => groups[i].3 += r.steps,
            None => {
                index.insert(key, groups.len());
                groups.push((key, r.sampling_ratio, r.noise_multiplier, r.steps));
            }
        }
    }
    ledger
        .orders()
        .iter()
        .map(|&lambda| {
            groups.iter().try_fold(0.0, |acc, &(_, q, sigma, steps)| {
                Ok(acc + steps as f64 * log_moment(q, sigma, lambda)?)
            })
        })
        .collect()
}

/// `(ε, δ)` pair together with the moment order that attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpent {
    pub epsilon: f64,
    pub delta: f64,
    /// `None` for an empty ledger.
    pub order: Option<u32>,
}

/// Privacy budget `(ε, δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::invalid(format!("epsilon {epsilon} must be non-negative")));
        }
        check_delta(delta)?;
        Ok(Self { epsilon, delta })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} not in (0, 1)")));
    }
    Ok(())
}

/// Smallest `ε` over the order grid for the given `δ`.
pub fn eps_from_delta(ledger: &AccountantLedger, delta: f64) -> Result<PrivacySpent> {
    check_delta(delta)?;
    if ledger.is_empty() {
        return Ok(PrivacySpent {
            epsilon: 0.0,
            delta,
            order: None,
        });
    }
    let totals = compose(ledger)?;
    let (epsilon, order) = ledger
        .orders()
        .iter()
        .zip(&totals)
        .map(|(&lambda, &total)| ((total - delta.ln()) / f64::from(lambda), lambda))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("order grid is nonempty");
    Ok(PrivacySpent {
        epsilon: epsilon.max(0.0),
        delta,
        order: Some(order),
    })
}

/// Smallest `δ` over the order grid for the given `ε`, capped at 1.
pub fn delta_from_eps(ledger: &AccountantLedger, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} must be non-negative")));
    }
    let totals = compose(ledger)?;
    let best = ledger
        .orders()
        .iter()
        .zip(&totals)
        .map(|(&lambda, &total)| total - f64::from(lambda) * epsilon)
        .fold(f64::INFINITY, f64::min);
    Ok(best.exp().min(1.0))
}

/// `ε` after `steps` steps of one mechanism, over the default order grid.
pub fn epsilon_for(q: f64, sigma: f64, steps: u64, delta: f64) -> Result<PrivacySpent> {
    let mut ledger = AccountantLedger::new();
    ledger.record(q, sigma, steps)?;
    eps_from_delta(&ledger, delta)
}

/// Smallest noise multiplier on the grid `{0.01, 0.02, …}` whose `ε` after
/// `steps` steps at ratio `q` does not exceed `target_epsilon`.
pub fn calibrate_noise(target_epsilon: f64, delta: f64, q: f64, steps: u64) -> Result<f64> {
    if !(target_epsilon > 0.0) {
        return Err(Error::invalid(format!("target epsilon {target_epsilon} must be positive")));
    }
    check_delta(delta)?;
    if steps == 0 {
        return Err(Error::invalid("calibration needs at least one step"));
    }
    let eps_at = |k: u64| -> Result<f64> {
        Ok(epsilon_for(q, k as f64 * CALIBRATION_RESOLUTION, steps, delta)?.epsilon)
    };
    let mut hi = (CALIBRATION_CAP / CALIBRATION_RESOLUTION).round() as u64;
    if eps_at(hi)? > target_epsilon {
        return Err(Error::UnreachableTarget {
            target: target_epsilon,
            cap: CALIBRATION_CAP,
        });
    }
    let mut lo = 1u64;
    if eps_at(lo)? <= target_epsilon {
        return Ok(CALIBRATION_RESOLUTION);
    }
    // Invariant: eps_at(lo) > target >= eps_at(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eps_at(mid)? <= target_epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi as f64 * CALIBRATION_RESOLUTION)
}
