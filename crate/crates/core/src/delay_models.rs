//! Worker response-time distributions and the order statistics of their
//! completion times.
//!
//! A worker's response time is communication plus computation. In the
//! [`DelayVariant::Simplified`] model communication is the constant `t_x` and
//! computation is `t_y + Exp(λ/β)`. In the [`DelayVariant::Generalized`]
//! model communication is `t_x + Exp(λ_x)` and computation `t_y + Exp(λ_y/β)`.
//! The batch scale `β` only ever rescales the computation rate.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// Above this cluster size the alternating closed form for the generalized
/// model is replaced by survival-function quadrature.
pub const DEFAULT_CLOSED_FORM_MAX_N: usize = 12;

/// Absolute tolerance of the survival-function quadrature (time units).
pub const QUADRATURE_TOL: f64 = 1e-9;

/// The integration range is extended until the order-statistic survival
/// function drops below this value.
const SURVIVAL_CUTOFF: f64 = 1e-12;

/// Relative rounding error above which the alternating sum is distrusted.
const CANCELLATION_LIMIT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayVariant {
    Simplified,
    Generalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub variant: DelayVariant,
    /// Computation rate at full batch scale (λ, or λ_y).
    pub comp_rate: f64,
    /// Deterministic computation offset t_y.
    #[serde(default)]
    pub comp_shift: f64,
    /// Communication rate λ_x; unused by the simplified model.
    #[serde(default)]
    pub comm_rate: f64,
    /// Deterministic communication offset t_x.
    #[serde(default)]
    pub comm_shift: f64,
}

impl DelayModel {
    pub fn simplified(comp_rate: f64, comp_shift: f64, comm_shift: f64) -> Result<Self> {
        let model = DelayModel {
            variant: DelayVariant::Simplified,
            comp_rate,
            comp_shift,
            comm_rate: 0.0,
            comm_shift,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn generalized(comp_rate: f64, comp_shift: f64, comm_rate: f64, comm_shift: f64) -> Result<Self> {
        let model = DelayModel {
            variant: DelayVariant::Generalized,
            comp_rate,
            comp_shift,
            comm_rate,
            comm_shift,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.comp_rate > 0.0 && self.comp_rate.is_finite()) {
            return Err(invalid(
                "comp_rate",
                format!("{} is not a positive rate", self.comp_rate),
            ));
        }
        if !(self.comp_shift >= 0.0 && self.comp_shift.is_finite()) {
            return Err(invalid("comp_shift", format!("{} is negative", self.comp_shift)));
        }
        if !(self.comm_shift >= 0.0 && self.comm_shift.is_finite()) {
            return Err(invalid("comm_shift", format!("{} is negative", self.comm_shift)));
        }
        if self.variant == DelayVariant::Generalized && !(self.comm_rate > 0.0 && self.comm_rate.is_finite()) {
            return Err(invalid(
                "comm_rate",
                format!("{} is not a positive rate", self.comm_rate),
            ));
        }
        Ok(())
    }

    /// t_x + t_y, the deterministic lower bound of every response.
    pub fn total_shift(&self) -> f64 {
        self.comm_shift + self.comp_shift
    }

    /// Computation rate at batch scale `beta`.
    pub fn comp_rate_at(&self, beta: f64) -> f64 {
        self.comp_rate / beta
    }
}

/// Wait for the `k`-th fastest of `n` workers, each using a fraction `beta`
/// of its partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderStatQuery {
    pub k: usize,
    pub n: usize,
    pub beta: f64,
}

impl OrderStatQuery {
    pub fn new(k: usize, n: usize, beta: f64) -> Result<Self> {
        let q = OrderStatQuery { k, n, beta };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n || !valid_beta(self.beta) {
            return Err(Error::InvalidQuery {
                k: self.k,
                n: self.n,
                beta: self.beta,
            });
        }
        Ok(())
    }
}

fn valid_beta(beta: f64) -> bool {
    beta > 0.0 && beta <= 1.0
}

/// Σ_{j=n-k+1}^{n} 1/j
pub fn harmonic_tail(n: usize, k: usize) -> f64 {
    (n - k + 1..=n).map(|j| 1.0 / j as f64).sum()
}

/// Draws one worker response time at batch scale `beta`.
pub fn sample_response<R: Rng + ?Sized>(model: &DelayModel, beta: f64, rng: &mut R) -> Result<f64> {
    if !valid_beta(beta) {
        return Err(invalid("beta", format!("{beta} is outside (0, 1]")));
    }
    let comp = Exp::new(model.comp_rate_at(beta))
        .map_err(|e| invalid("comp_rate", e.to_string()))?
        .sample(rng);
    let comm = match model.variant {
        DelayVariant::Simplified => 0.0,
        DelayVariant::Generalized => Exp::new(model.comm_rate)
            .map_err(|e| invalid("comm_rate", e.to_string()))?
            .sample(rng),
    };
    Ok(model.total_shift() + comm + comp)
}

/// Expected k-th order statistic under the simplified model.
pub fn mean_order_stat_simplified(model: &DelayModel, q: &OrderStatQuery) -> Result<f64> {
    if model.variant != DelayVariant::Simplified {
        return Err(Error::WrongVariant { expected: "simplified" });
    }
    q.validate()?;
    Ok(q.beta / model.comp_rate * harmonic_tail(q.n, q.k) + model.total_shift())
}

/// Survival function of the unshifted generalized response, P(Z > z), where
/// `comp_rate` is already scaled by 1/β. Written so that equal or nearly
/// equal rates degrade smoothly into the Erlang(2) survival.
fn hypoexp_survival(comm_rate: f64, comp_rate: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    // e^{-λx z} + λx (e^{-λx z} - e^{-λy z}) / (λy - λx), factored around the
    // smaller rate so nothing overflows for widely separated rates
    let slow = comm_rate.min(comp_rate);
    let gap = (comp_rate - comm_rate).abs();
    let spread = if gap == 0.0 { z } else { -(-gap * z).exp_m1() / gap };
    let s = (-comm_rate * z).exp() + comm_rate * (-slow * z).exp() * spread;
    s.clamp(0.0, 1.0)
}

/// CDF of the generalized response time after removing the shifts, i.e.
/// P(X + Y <= z) with X ~ Exp(λ_x), Y ~ Exp(λ_y/β).
pub fn response_cdf(model: &DelayModel, beta: f64, z: f64) -> Result<f64> {
    if model.variant != DelayVariant::Generalized {
        return Err(Error::WrongVariant {
            expected: "generalized",
        });
    }
    if !valid_beta(beta) {
        return Err(invalid("beta", format!("{beta} is outside (0, 1]")));
    }
    if z <= 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - hypoexp_survival(model.comm_rate, model.comp_rate_at(beta), z))
}

/// Evaluation route used for a generalized-model order statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderStatRoute {
    ClosedForm,
    Erlang,
    Quadrature,
}

/// Closed-form result with a bound on its rounding error.
#[derive(Clone, Copy, Debug)]
pub struct AlternatingSum {
    pub value: f64,
    /// Σ|terms| times machine epsilon: a rough bound on lost precision.
    pub rounding: f64,
}

impl AlternatingSum {
    fn trustworthy(&self) -> bool {
        self.value.is_finite()
            && self.rounding.is_finite()
            && self.rounding <= CANCELLATION_LIMIT * self.value.abs().max(1e-300)
    }
}

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for i in 1..n {
        row[i] = row[i - 1] * (n - i + 1) as f64 / i as f64;
    }
    row
}

struct BinomialTable(Vec<Vec<f64>>);

impl BinomialTable {
    fn new(max: usize) -> Self {
        BinomialTable((0..=max).map(binomial_row).collect())
    }

    fn get(&self, n: usize, k: usize) -> f64 {
        self.0[n][k]
    }
}

/// Quadruple alternating sum for distinct rates, shifts excluded.
///
/// The coefficient carries `(λ_x / (λ_x - λ_y))^b`, the exponent produced by
/// expanding the communication-dominated survival term.
pub fn order_stat_alternating_sum(model: &DelayModel, q: &OrderStatQuery) -> Result<AlternatingSum> {
    if model.variant != DelayVariant::Generalized {
        return Err(Error::WrongVariant {
            expected: "generalized",
        });
    }
    q.validate()?;
    let lx = model.comm_rate;
    let ly = model.comp_rate_at(q.beta);
    if lx == ly {
        return Err(Error::Numerical("alternating sum is undefined for equal rates".into()));
    }
    let n = q.n;
    let ratio = lx / (lx - ly);
    let binom = BinomialTable::new(2 * n);
    let mut total = 0.0;
    let mut magnitude = 0.0;
    for i in q.k..=n {
        let c_ni = binom.get(n, i);
        for a in 0..=i {
            let c_ia = binom.get(i, a);
            let m = a + n - i;
            for b in 0..=m {
                let c_mb = binom.get(m, b);
                let rb = ratio.powi(b as i32);
                for c in 0..=b {
                    let alpha = lx * (m - b + c) as f64 + ly * (b - c) as f64;
                    if alpha == 0.0 {
                        continue;
                    }
                    let sign = if (a + c) % 2 == 0 { -1.0 } else { 1.0 };
                    let term = sign * c_ni * c_ia * c_mb * binom.get(b, c) * rb / alpha;
                    total += term;
                    magnitude += term.abs();
                }
            }
        }
    }
    Ok(AlternatingSum {
        value: total,
        rounding: magnitude * f64::EPSILON,
    })
}

/// Exact order-statistic mean for Erlang(2, rate) responses, shifts excluded.
fn erlang_order_stat(rate: f64, k: usize, n: usize) -> AlternatingSum {
    // E[T] = Σ_{i<k} C(n,i) ∫ (1-S)^i S^{n-i} dz with S = e^{-rz}(1+rz)
    let binom = BinomialTable::new(n);
    let mut factorial = vec![1.0; n + 1];
    for p in 1..=n {
        factorial[p] = factorial[p - 1] * p as f64;
    }
    let mut total = 0.0;
    let mut magnitude = 0.0;
    for i in 0..k {
        for a in 0..=i {
            let m = a + n - i;
            let m_binom = binomial_row(m);
            // ∫ e^{-m r z} (1 + r z)^m dz
            let integral: f64 = (0..=m)
                .map(|p| m_binom[p] * rate.powi(p as i32) * factorial[p] / (m as f64 * rate).powi(p as i32 + 1))
                .sum();
            let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
            let term = sign * binom.get(n, i) * binom.get(i, a) * integral;
            total += term;
            magnitude += term.abs();
        }
    }
    AlternatingSum {
        value: total,
        rounding: magnitude * f64::EPSILON,
    }
}

/// P(T_(k) > z) for n i.i.d. responses with per-response survival `s`.
fn order_stat_survival(survival: f64, k: usize, n: usize) -> f64 {
    let cdf = 1.0 - survival;
    if cdf <= 0.0 {
        return 1.0;
    }
    // P(fewer than k responses by z) = Σ_{i<k} C(n,i) F^i S^{n-i}
    let mut coeff = 1.0;
    let mut total = 0.0;
    for i in 0..k {
        if i > 0 {
            coeff *= (n - i + 1) as f64 / i as f64;
        }
        total += coeff * cdf.powi(i as i32) * survival.powi((n - i) as i32);
    }
    total.min(1.0)
}

/// Order-statistic mean by integrating the survival function, shifts
/// excluded.
pub fn order_stat_quadrature(model: &DelayModel, q: &OrderStatQuery) -> Result<f64> {
    if model.variant != DelayVariant::Generalized {
        return Err(Error::WrongVariant {
            expected: "generalized",
        });
    }
    q.validate()?;
    let lx = model.comm_rate;
    let ly = model.comp_rate_at(q.beta);
    let sf = |z: f64| order_stat_survival(hypoexp_survival(lx, ly, z), q.k, q.n);
    let mut z_max = 1.0 / lx + 1.0 / ly;
    while sf(z_max) >= SURVIVAL_CUTOFF {
        z_max *= 2.0;
        if !z_max.is_finite() {
            return Err(Error::Numerical("order-statistic survival does not decay".into()));
        }
    }
    Ok(quadrature::integrate(sf, 0.0, z_max, QUADRATURE_TOL, 32))
}

/// Expected k-th order statistic under the generalized model with the
/// default closed-form threshold.
pub fn mean_order_stat_general(model: &DelayModel, q: &OrderStatQuery) -> Result<f64> {
    mean_order_stat_general_with(model, q, DEFAULT_CLOSED_FORM_MAX_N).map(|(v, _)| v)
}

/// Expected k-th order statistic under the generalized model; also reports
/// which route produced the value.
pub fn mean_order_stat_general_with(
    model: &DelayModel,
    q: &OrderStatQuery,
    closed_form_max_n: usize,
) -> Result<(f64, OrderStatRoute)> {
    if model.variant != DelayVariant::Generalized {
        return Err(Error::WrongVariant {
            expected: "generalized",
        });
    }
    q.validate()?;
    let lx = model.comm_rate;
    let ly = model.comp_rate_at(q.beta);
    if q.n <= closed_form_max_n {
        let attempt = if lx == ly {
            Some((erlang_order_stat(lx, q.k, q.n), OrderStatRoute::Erlang))
        } else {
            order_stat_alternating_sum(model, q)
                .ok()
                .map(|sum| (sum, OrderStatRoute::ClosedForm))
        };
        if let Some((sum, route)) = attempt {
            if sum.trustworthy() {
                return Ok((sum.value + model.total_shift(), route));
            }
        }
    }
    let value = order_stat_quadrature(model, q)?;
    Ok((value + model.total_shift(), OrderStatRoute::Quadrature))
}

/// Expected k-th order statistic for either model variant.
pub fn mean_order_stat(model: &DelayModel, q: &OrderStatQuery) -> Result<f64> {
    match model.variant {
        DelayVariant::Simplified => mean_order_stat_simplified(model, q),
        DelayVariant::Generalized => mean_order_stat_general(model, q),
    }
}

/// Finite-difference step for the generalized-model β derivative.
pub fn derivative_step(partition: usize) -> f64 {
    (1.0 / (4.0 * partition as f64)).max(1e-4)
}

/// dμ_{k:n}(β)/dβ. Exact for the simplified model; a central difference with
/// step `derivative_step(partition)` clipped to (0, 1] otherwise.
pub fn d_mean_order_stat_dbeta(model: &DelayModel, q: &OrderStatQuery, partition: usize) -> Result<f64> {
    q.validate()?;
    match model.variant {
        DelayVariant::Simplified => Ok(harmonic_tail(q.n, q.k) / model.comp_rate),
        DelayVariant::Generalized => {
            let h = derivative_step(partition);
            let hi = (q.beta + h).min(1.0);
            let lo = (q.beta - h).max(0.5 * q.beta);
            let at = |beta: f64| mean_order_stat_general(model, &OrderStatQuery { beta, ..*q });
            Ok((at(hi)? - at(lo)?) / (hi - lo))
        }
    }
}

/// Monte-Carlo estimate of the expected k-th order statistic with its
/// standard error.
pub fn mc_order_stat_oracle<R: Rng + ?Sized>(
    model: &DelayModel,
    q: &OrderStatQuery,
    num_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    q.validate()?;
    if num_samples < 2 {
        return Err(invalid("num_samples", "need at least two samples"));
    }
    let mut batch = vec![0.0; q.n];
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for count in 1..=num_samples {
        for slot in batch.iter_mut() {
            *slot = sample_response(model, q.beta, rng)?;
        }
        let (_, kth, _) = batch.select_nth_unstable_by(q.k - 1, |a, b| a.total_cmp(b));
        let x = *kth;
        let delta = x - mean;
        mean += delta / count as f64;
        m2 += delta * (x - mean);
    }
    let var = m2 / (num_samples - 1) as f64;
    Ok((mean, (var / num_samples as f64).sqrt()))
}
