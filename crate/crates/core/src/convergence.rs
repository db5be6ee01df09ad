//! Error dynamics of fixed-step mini-batch SGD for one stage.
//!
//! For a stage with effective batch `φ = kβ` the error after `j` iterations,
//! starting from a reference error `e_ref`, is taken to be
//!
//! ```text
//! e(j) = floor + (1 - ηc)^j (e_ref - floor),   floor = ηLσ² / (2cφs)
//! ```
//!
//! and is treated as the exact dynamic when planning.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    /// Learning rate η.
    pub eta: f64,
    /// Lipschitz constant L.
    pub lipschitz: f64,
    /// Upper bound σ² on the stochastic-gradient variance.
    pub grad_variance: f64,
    /// Strong-convexity parameter c.
    pub convexity: f64,
    /// Initial optimality gap F(w_0) - F★.
    pub initial_error: f64,
}

impl ConvergenceParams {
    pub fn new(eta: f64, lipschitz: f64, grad_variance: f64, convexity: f64, initial_error: f64) -> Result<Self> {
        let cp = ConvergenceParams {
            eta,
            lipschitz,
            grad_variance,
            convexity,
            initial_error,
        };
        cp.validate()?;
        Ok(cp)
    }

    pub fn validate(&self) -> Result<()> {
        let contraction = self.eta * self.convexity;
        if !(self.convexity > 0.0 && contraction > 0.0 && contraction < 1.0) {
            return Err(invalid("eta", format!("ηc = {contraction} must lie in (0, 1)")));
        }
        if !(self.lipschitz >= self.convexity) {
            return Err(invalid("lipschitz", "L must be at least c"));
        }
        if !(self.grad_variance >= 0.0) {
            return Err(invalid("grad_variance", "must be nonnegative"));
        }
        if !(self.initial_error > 0.0) {
            return Err(invalid("initial_error", "must be positive"));
        }
        Ok(())
    }

    /// α = -log(1 - ηc), the per-iteration exponential decay rate.
    pub fn alpha(&self) -> f64 {
        -(-self.eta * self.convexity).ln_1p()
    }

    /// ηLσ²/(2c): the floor of a stage that aggregates a single sample.
    pub fn floor_scale(&self) -> f64 {
        self.eta * self.lipschitz * self.grad_variance / (2.0 * self.convexity)
    }
}

/// Batch scale β stored exactly as a sample count out of the partition size,
/// so β·s is always an integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BatchScale {
    samples: u32,
    partition: u32,
}

impl BatchScale {
    pub fn new(samples: u32, partition: u32) -> Result<Self> {
        if partition == 0 || samples == 0 || samples > partition {
            return Err(invalid(
                "beta",
                format!("{samples}/{partition} is not a batch scale in (0, 1]"),
            ));
        }
        Ok(BatchScale { samples, partition })
    }

    pub fn full(partition: u32) -> Result<Self> {
        BatchScale::new(partition, partition)
    }

    /// Nearest representable scale to `beta` (rounded to whole samples).
    pub fn from_fraction(beta: f64, partition: u32) -> Result<Self> {
        let samples = (beta * partition as f64).round();
        if !(samples >= 1.0) || (beta * partition as f64 - samples).abs() > 1e-6 {
            return Err(invalid(
                "beta",
                format!("{beta} is not a positive multiple of 1/{partition}"),
            ));
        }
        BatchScale::new(samples as u32, partition)
    }

    pub fn samples(&self) -> u32 {
        self.samples
    }

    pub fn partition(&self) -> u32 {
        self.partition
    }

    pub fn value(&self) -> f64 {
        self.samples as f64 / self.partition as f64
    }

    pub fn is_full(&self) -> bool {
        self.samples == self.partition
    }
}

/// One stage: wait for `k` of `n` workers, each using `beta` of its
/// partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageParams {
    pub k: usize,
    pub n: usize,
    pub beta: BatchScale,
}

impl StageParams {
    pub fn new(k: usize, n: usize, beta: BatchScale) -> Result<Self> {
        if k == 0 || k > n {
            return Err(invalid("k", format!("k={k} must lie in 1..={n}")));
        }
        Ok(StageParams { k, n, beta })
    }

    pub fn partition(&self) -> u32 {
        self.beta.partition()
    }

    /// φ = kβ
    pub fn phi(&self) -> f64 {
        self.k as f64 * self.beta.value()
    }

    /// kβs, the number of per-sample gradients aggregated per iteration.
    pub fn effective_batch(&self) -> u64 {
        self.k as u64 * self.beta.samples() as u64
    }
}

/// ηLσ² / (2cφs)
pub fn error_floor(cp: &ConvergenceParams, stage: &StageParams) -> f64 {
    cp.floor_scale() / stage.effective_batch() as f64
}

/// Error after `j` iterations of `stage` starting from `e_ref`.
pub fn error_bound(cp: &ConvergenceParams, stage: &StageParams, j: f64, e_ref: f64) -> f64 {
    let floor = error_floor(cp, stage);
    floor + (-cp.alpha() * j).exp() * (e_ref - floor)
}

/// Magnitude of the time derivative of the error when iterations take `mu`
/// time on average, measured from reference time `t_ref` with error `e_ref`.
pub fn decay_rate_time(
    cp: &ConvergenceParams,
    stage: &StageParams,
    mu: f64,
    t: f64,
    t_ref: f64,
    e_ref: f64,
) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid("mu", "mean iteration time must be positive"));
    }
    if t < t_ref {
        return Err(invalid("t", "must not precede the reference time"));
    }
    let floor = error_floor(cp, stage);
    if e_ref < floor {
        return Err(Error::BelowFloor { e_ref, floor });
    }
    let alpha = cp.alpha();
    Ok(alpha / mu * (-alpha * (t - t_ref) / mu).exp() * (e_ref - floor))
}

/// Real-valued number of iterations for the error to fall from `e_start` to
/// `e_target` within `stage`.
pub fn iterations_to_error(cp: &ConvergenceParams, stage: &StageParams, e_start: f64, e_target: f64) -> Result<f64> {
    let floor = error_floor(cp, stage);
    if e_target <= floor {
        return Err(Error::Unreachable {
            target: e_target,
            floor,
        });
    }
    if e_target >= e_start {
        return Ok(0.0);
    }
    Ok(((e_start - floor) / (e_target - floor)).ln() / cp.alpha())
}
