//! Stage planning under the theoretical error dynamic.
//!
//! A schedule is a sequence of stages `(k, β)` with strictly increasing
//! effective batch `φ = kβ`. The adaptive-(k, β) ladder starts at `k = 1`
//! with the smallest batch scale, grows β one grid step at a time until the
//! whole partition is used, then waits for more workers with a batch scale
//! chosen to maximize the post-switch decay rate per unit time. Switching
//! times follow from equating the time-domain decay rates of consecutive
//! stages.

use serde::{Deserialize, Serialize};

use crate::convergence::{error_bound, error_floor, iterations_to_error, BatchScale, ConvergenceParams, StageParams};
use crate::delay_models::{
    d_mean_order_stat_dbeta, harmonic_tail, mean_order_stat, DelayModel, DelayVariant, OrderStatQuery,
};
use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// Allowed batch scales: multiples of `step` samples up to the partition
/// size, starting the adaptive ladder at `start` samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub partition: u32,
    pub step: u32,
    pub start: u32,
}

impl BetaGrid {
    /// β ∈ {1/s, 2/s, …, 1}, starting at 1/s.
    pub fn unit(partition: u32) -> Self {
        BetaGrid {
            partition,
            step: 1,
            start: 1,
        }
    }

    pub fn new(partition: u32, step: u32, start: u32) -> Result<Self> {
        let grid = BetaGrid { partition, step, start };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.partition == 0 || self.step == 0 || !self.partition.is_multiple_of(self.step) {
            return Err(invalid(
                "beta_step",
                format!("step {} must divide the partition size {}", self.step, self.partition),
            ));
        }
        if self.start == 0 || !self.start.is_multiple_of(self.step) || self.start > self.partition {
            return Err(invalid(
                "beta_start",
                format!(
                    "start {} must be a positive multiple of the step {}",
                    self.start, self.step
                ),
            ));
        }
        Ok(())
    }

    fn scale(&self, samples: u32) -> Result<BatchScale> {
        BatchScale::new(samples, self.partition)
    }

    fn round_up(&self, samples: u32) -> u32 {
        samples.div_ceil(self.step) * self.step
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompCostMode {
    /// k·β·s per iteration: only the aggregated work is billed.
    #[default]
    Aggregated,
    /// n·β·s per iteration: every started batch is billed.
    AllWorkers,
}

/// How planned stage durations are turned into billed iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationCount {
    /// Real-valued duration / μ.
    #[default]
    Expected,
    /// Each stage rounded up to whole iterations.
    Ceiled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    /// Closed form for the simplified model, grid search otherwise.
    #[default]
    Auto,
    Closed,
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    AdaptiveKBeta,
    AdaptiveK,
    Fixed { k: usize, beta: f64 },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::AdaptiveKBeta => "adaptive_k_beta".into(),
            Strategy::AdaptiveK => "adaptive_k".into(),
            Strategy::Fixed { k, beta } => format!("fixed_k{k}_b{beta}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerOptions {
    pub grid: BetaGrid,
    pub k_step: usize,
    pub k_cap: usize,
    pub comp_cost: CompCostMode,
    #[serde(default)]
    pub iteration_count: IterationCount,
    pub beta_rule: BetaRule,
}

impl PlannerOptions {
    pub fn new(n: usize, partition: u32) -> Self {
        PlannerOptions {
            grid: BetaGrid::unit(partition),
            k_step: 1,
            k_cap: n,
            comp_cost: CompCostMode::Aggregated,
            iteration_count: IterationCount::Expected,
            beta_rule: BetaRule::Auto,
        }
    }
}

/// Smallest grid batch scale for `k_next` workers that strictly increases
/// the effective batch of `current`.
pub fn beta_min(current: &StageParams, k_next: usize, grid: &BetaGrid) -> Result<BatchScale> {
    let batch = current.effective_batch();
    // ⌈φs/k'⌉, bumped by one sample when it would leave φ unchanged
    let mut samples = batch.div_ceil(k_next as u64);
    if samples * k_next as u64 == batch {
        samples += 1;
    }
    let samples = grid.round_up(samples.min(u32::MAX as u64) as u32);
    if samples > grid.partition {
        return Err(Error::Infeasible { k_next });
    }
    grid.scale(samples)
}

/// Post-switch decay rate per unit of iteration time, up to factors that do
/// not depend on the next stage: (φ' - φ)/(φφ') / (μ' - μ).
pub fn objective(phi_cur: f64, mu_cur: f64, phi_next: f64, mu_next: f64) -> f64 {
    let gain = (phi_next - phi_cur) / (phi_cur * phi_next);
    let slowdown = mu_next - mu_cur;
    if slowdown <= 0.0 {
        return if gain > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    gain / slowdown
}

/// Chosen batch scale for the next wait count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaChoice {
    pub beta: BatchScale,
    /// The optimizer hit β = 1, hinting that a larger jump in k may pay off.
    pub saturated: bool,
}

fn query(stage: &StageParams) -> Result<OrderStatQuery> {
    OrderStatQuery::new(stage.k, stage.n, stage.beta.value())
}

fn check_increment(current: &StageParams, k_next: usize) -> Result<()> {
    if k_next <= current.k || k_next > current.n {
        return Err(invalid(
            "k_next",
            format!("must lie in {}..={}", current.k + 1, current.n),
        ));
    }
    Ok(())
}

/// The two stationary points of the objective for the simplified model.
pub fn closed_form_roots(model: &DelayModel, current: &StageParams, k_next: usize) -> Result<(f64, f64)> {
    if model.variant != DelayVariant::Simplified {
        return Err(Error::WrongVariant { expected: "simplified" });
    }
    check_increment(current, k_next)?;
    let s = current.partition() as usize;
    let next_probe = OrderStatQuery::new(k_next, current.n, 1.0)?;
    let d_cur = d_mean_order_stat_dbeta(model, &query(current)?, s)?;
    let d_next = d_mean_order_stat_dbeta(model, &next_probe, s)?;
    let disc = 1.0 - (k_next as f64 / current.k as f64) * d_cur / d_next;
    if !(disc >= 0.0) {
        return Err(Error::Numerical(format!(
            "negative discriminant {disc} for k {} -> {k_next}, n={}",
            current.k, current.n
        )));
    }
    let centre = current.phi() / k_next as f64;
    Ok((centre * (1.0 + disc.sqrt()), centre * (1.0 - disc.sqrt())))
}

fn mu_at(model: &DelayModel, k: usize, n: usize, beta: f64) -> Result<f64> {
    mean_order_stat(model, &OrderStatQuery::new(k, n, beta)?)
}

/// Continuous maximizer of the objective under the simplified model, before
/// rounding.
pub fn closed_form_beta_opt(model: &DelayModel, current: &StageParams, k_next: usize) -> Result<f64> {
    let (plus, minus) = closed_form_roots(model, current, k_next)?;
    let phi = current.phi();
    let mu_cur = mean_order_stat(model, &query(current)?)?;
    // Only roots with φ' > φ are admissible; the objective's sign flips below.
    // evaluated directly since a root may lie above β = 1
    let tail = harmonic_tail(current.n, k_next);
    let value = |beta: f64| {
        let mu_next = beta / model.comp_rate * tail + model.total_shift();
        objective(phi, mu_cur, k_next as f64 * beta, mu_next)
    };
    let mut best: Option<(f64, f64)> = None;
    for root in [plus, minus] {
        if k_next as f64 * root <= phi || !root.is_finite() {
            continue;
        }
        let o = value(root);
        if best.is_none_or(|(_, bo)| o > bo) {
            best = Some((root, o));
        }
    }
    best.map(|(r, _)| r)
        .ok_or_else(|| Error::Numerical("no admissible stationary point".into()))
}

/// Batch scale for `k_next` from the closed-form stationary point, rounded up
/// to the grid and clipped to `[β_min, 1]`.
pub fn optimal_beta_closed(
    model: &DelayModel,
    current: &StageParams,
    k_next: usize,
    grid: &BetaGrid,
) -> Result<BetaChoice> {
    let lower = beta_min(current, k_next, grid)?;
    let beta_opt = closed_form_beta_opt(model, current, k_next)?;
    let raw = beta_opt * grid.partition as f64;
    // guard against 15.999999 style round-off before the ceiling
    let samples = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    };
    let samples = grid.round_up(samples.clamp(1.0, grid.partition as f64) as u32);
    let samples = samples.clamp(lower.samples(), grid.partition);
    let beta = grid.scale(samples)?;
    Ok(BetaChoice {
        beta,
        saturated: beta.is_full(),
    })
}

/// Objective evaluated on every feasible grid point for `k_next`.
pub fn objective_profile(
    model: &DelayModel,
    current: &StageParams,
    k_next: usize,
    grid: &BetaGrid,
) -> Result<Vec<(BatchScale, f64)>> {
    check_increment(current, k_next)?;
    let lower = beta_min(current, k_next, grid)?;
    let mu_cur = mean_order_stat(model, &query(current)?)?;
    let phi = current.phi();
    (lower.samples()..=grid.partition)
        .step_by(grid.step as usize)
        .map(|samples| {
            let beta = grid.scale(samples)?;
            let mu_next = mu_at(model, k_next, current.n, beta.value())?;
            Ok((beta, objective(phi, mu_cur, k_next as f64 * beta.value(), mu_next)))
        })
        .collect()
}

/// Grid argmax of the objective; the smallest β wins ties.
pub fn argmax_on_grid(profile: &[(BatchScale, f64)]) -> Option<BatchScale> {
    let mut best: Option<(BatchScale, f64)> = None;
    for &(beta, o) in profile {
        if best.is_none_or(|(_, bo)| o > bo) {
            best = Some((beta, o));
        }
    }
    best.map(|(b, _)| b)
}

/// Batch scale for `k_next` maximizing the objective over the feasible grid.
pub fn optimal_beta_numeric(
    model: &DelayModel,
    current: &StageParams,
    k_next: usize,
    grid: &BetaGrid,
) -> Result<BetaChoice> {
    let profile = objective_profile(model, current, k_next, grid)?;
    let beta = argmax_on_grid(&profile).ok_or(Error::Infeasible { k_next })?;
    Ok(BetaChoice {
        beta,
        saturated: beta.is_full(),
    })
}

/// Root of the first-order condition
/// `μ'(β)·β·(βk' − φ) + φ·(μ_cur − μ(β)) = 0` on `(φ/k', 1]`, if bracketed.
pub fn first_order_root(model: &DelayModel, current: &StageParams, k_next: usize) -> Result<Option<f64>> {
    check_increment(current, k_next)?;
    let phi = current.phi();
    let mu_cur = mean_order_stat(model, &query(current)?)?;
    let s = current.partition() as usize;
    let n = current.n;
    let condition = |beta: f64| -> f64 {
        let q = OrderStatQuery { k: k_next, n, beta };
        let (Ok(mu), Ok(slope)) = (mean_order_stat(model, &q), d_mean_order_stat_dbeta(model, &q, s)) else {
            return f64::NAN;
        };
        slope * beta * (beta * k_next as f64 - phi) + phi * (mu_cur - mu)
    };
    let lo = (phi / k_next as f64) * (1.0 + 1e-9);
    if lo >= 1.0 {
        return Ok(None);
    }
    Ok(quadrature::bisect(condition, lo, 1.0, 1e-10))
}

pub fn optimal_beta(
    model: &DelayModel,
    current: &StageParams,
    k_next: usize,
    options: &PlannerOptions,
) -> Result<BetaChoice> {
    let closed = match options.beta_rule {
        BetaRule::Auto => model.variant == DelayVariant::Simplified,
        BetaRule::Closed => true,
        BetaRule::Numeric => false,
    };
    if closed {
        optimal_beta_closed(model, current, k_next, &options.grid)
    } else {
        optimal_beta_numeric(model, current, k_next, &options.grid)
    }
}

/// Outcome of planning one stage boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub t_switch: f64,
    pub e_at_switch: f64,
    /// True when a degenerate log argument forced an immediate switch.
    pub clamped: bool,
}

/// Time at which the next stage's error starts decaying faster than the
/// current one's, and the error reached at that time.
pub fn switching_time(
    cp: &ConvergenceParams,
    from: &StageParams,
    to: &StageParams,
    t_prev: f64,
    e_prev: f64,
    mu_from: f64,
    mu_to: f64,
) -> Switch {
    let (phi_from, phi_to) = (from.phi(), to.phi());
    let s = from.partition() as f64;
    let scale = cp.eta * cp.lipschitz * cp.grad_variance;
    let a = mu_from * scale * (phi_to - phi_from);
    let b = mu_to - mu_from;
    let c = phi_to * (2.0 * cp.convexity * phi_from * s * e_prev - scale);
    let delta = if a > 0.0 && b > 0.0 && c > 0.0 {
        mu_from / cp.alpha() * (b.ln() + c.ln() - a.ln())
    } else {
        f64::NEG_INFINITY
    };
    if delta > 0.0 && delta.is_finite() {
        Switch {
            t_switch: t_prev + delta,
            e_at_switch: error_bound(cp, from, delta / mu_from, e_prev),
            clamped: false,
        }
    } else {
        Switch {
            t_switch: t_prev,
            e_at_switch: e_prev,
            clamped: true,
        }
    }
}

/// Error at an unclamped switch, written without the switching time:
/// floor_from · (1 + (φ' − φ)μ / ((μ' − μ)φ')).
pub fn error_at_switch_closed(
    cp: &ConvergenceParams,
    from: &StageParams,
    to: &StageParams,
    mu_from: f64,
    mu_to: f64,
) -> f64 {
    let floor = error_floor(cp, from);
    let (phi_from, phi_to) = (from.phi(), to.phi());
    floor * (1.0 + (phi_to - phi_from) * mu_from / ((mu_to - mu_from) * phi_to))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub wall_time: f64,
    /// Model vectors transferred.
    pub comm_units: f64,
    /// Sample-gradient evaluations billed.
    pub comp_units: f64,
}

impl CostLedger {
    /// Bills `iterations` iterations of `stage`; wall time is left to the caller.
    pub fn charge(&mut self, stage: &StageParams, iterations: f64, mode: CompCostMode) {
        self.comm_units += iterations * (stage.n + stage.k) as f64;
        let workers = match mode {
            CompCostMode::Aggregated => stage.k,
            CompCostMode::AllWorkers => stage.n,
        };
        self.comp_units += iterations * (workers as u64 * stage.beta.samples() as u64) as f64;
    }
}

/// Next stage proposed by a strategy's ladder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Advance {
    pub stage: StageParams,
    pub saturated: bool,
}

/// Stage progression rules shared by the planner and the simulator.
#[derive(Clone, Copy, Debug)]
pub struct StageLadder<'a> {
    pub strategy: Strategy,
    pub model: &'a DelayModel,
    pub n: usize,
    pub options: PlannerOptions,
}

impl StageLadder<'_> {
    pub fn initial(&self) -> Result<StageParams> {
        let grid = &self.options.grid;
        match self.strategy {
            Strategy::AdaptiveKBeta => StageParams::new(1, self.n, grid.scale(grid.start)?),
            Strategy::AdaptiveK => StageParams::new(1, self.n, grid.scale(grid.partition)?),
            Strategy::Fixed { k, beta } => {
                StageParams::new(k, self.n, BatchScale::from_fraction(beta, grid.partition)?)
            }
        }
    }

    fn next_k(&self, k: usize) -> Option<usize> {
        let cap = self.options.k_cap.min(self.n);
        (k < cap).then(|| (k + self.options.k_step.max(1)).min(cap))
    }

    pub fn next(&self, current: &StageParams) -> Result<Option<Advance>> {
        let grid = &self.options.grid;
        match self.strategy {
            Strategy::Fixed { .. } => Ok(None),
            Strategy::AdaptiveK => Ok(self.next_k(current.k).map(|k| Advance {
                stage: StageParams { k, ..*current },
                saturated: false,
            })),
            Strategy::AdaptiveKBeta => {
                let samples = current.beta.samples();
                if samples + grid.step <= grid.partition {
                    let stage = StageParams {
                        beta: grid.scale(samples + grid.step)?,
                        ..*current
                    };
                    return Ok(Some(Advance {
                        stage,
                        saturated: false,
                    }));
                }
                let Some(k_next) = self.next_k(current.k) else {
                    return Ok(None);
                };
                let choice = optimal_beta(self.model, current, k_next, &self.options)?;
                Ok(Some(Advance {
                    stage: StageParams::new(k_next, self.n, choice.beta)?,
                    saturated: choice.saturated,
                }))
            }
        }
    }

    /// The stage with the largest effective batch this ladder can reach.
    pub fn final_stage(&self) -> Result<StageParams> {
        match self.strategy {
            Strategy::Fixed { .. } => self.initial(),
            _ => StageParams::new(
                self.options.k_cap.min(self.n),
                self.n,
                self.options.grid.scale(self.options.grid.partition)?,
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedStage {
    pub k: usize,
    pub beta: f64,
    pub beta_samples: u32,
    pub t_start: f64,
    /// End of the stage: the switching time, or the time the target is hit.
    pub t_switch: f64,
    pub e_start: f64,
    pub e_at_switch: f64,
    pub mean_iteration_time: f64,
    /// Real-valued number of iterations spent in the stage.
    pub expected_iterations: f64,
    /// The same count rounded up to whole iterations.
    pub iterations: u64,
    /// The β optimizer returned 1 when this stage was entered.
    pub saturated: bool,
}

impl PlannedStage {
    pub fn params(&self, n: usize, partition: u32) -> Result<StageParams> {
        StageParams::new(self.k, n, BatchScale::new(self.beta_samples, partition)?)
    }
}

/// A transition between two consecutive planned stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTransition {
    pub from: StageParams,
    pub to: StageParams,
    pub t_switch: f64,
    pub e_at_switch: f64,
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub strategy: Strategy,
    pub n: usize,
    pub partition: u32,
    pub comp_cost: CompCostMode,
    pub iteration_count: IterationCount,
    pub target_error: f64,
    pub stages: Vec<PlannedStage>,
    /// Continuous-time duration to reach the target.
    pub total_time: f64,
    pub cost: CostLedger,
}

impl Schedule {
    pub fn transitions(&self) -> Result<Vec<StageTransition>> {
        self.stages
            .windows(2)
            .map(|w| {
                Ok(StageTransition {
                    from: w[0].params(self.n, self.partition)?,
                    to: w[1].params(self.n, self.partition)?,
                    t_switch: w[0].t_switch,
                    e_at_switch: w[0].e_at_switch,
                    saturated: w[1].saturated,
                })
            })
            .collect()
    }
}

fn ceil_iterations(x: f64) -> u64 {
    if x <= 1e-9 {
        0
    } else {
        (x - 1e-9).ceil() as u64
    }
}

/// Plans the stages of `strategy` from the initial error down to
/// `target_error`.
///
/// A stage is left at its switching time unless the target is reached
/// first; the last stage runs until the target is met.
pub fn build_schedule(
    cp: &ConvergenceParams,
    model: &DelayModel,
    n: usize,
    target_error: f64,
    strategy: Strategy,
    options: &PlannerOptions,
) -> Result<Schedule> {
    options.grid.validate()?;
    let ladder = StageLadder {
        strategy,
        model,
        n,
        options: *options,
    };
    let mut schedule = Schedule {
        strategy,
        n,
        partition: options.grid.partition,
        comp_cost: options.comp_cost,
        iteration_count: options.iteration_count,
        target_error,
        stages: Vec::new(),
        total_time: 0.0,
        cost: CostLedger::default(),
    };
    if target_error >= cp.initial_error {
        return Ok(schedule);
    }
    let best_floor = error_floor(cp, &ladder.final_stage()?);
    if target_error <= best_floor {
        return Err(Error::Unreachable {
            target: target_error,
            floor: best_floor,
        });
    }

    let mut stage = ladder.initial()?;
    let mut saturated = false;
    let mut mu = mean_order_stat(model, &query(&stage)?)?;
    let (mut t, mut e) = (0.0, cp.initial_error);
    loop {
        let floor = error_floor(cp, &stage);
        let advance = ladder.next(&stage)?;
        let finish = |t: f64, e: f64| -> Result<PlannedStage> {
            let j = iterations_to_error(cp, &stage, e, target_error)?;
            Ok(planned(&stage, t, t + j * mu, e, target_error, mu, saturated))
        };
        let Some(advance) = advance else {
            if floor >= target_error {
                return Err(Error::Unreachable {
                    target: target_error,
                    floor,
                });
            }
            schedule.stages.push(finish(t, e)?);
            break;
        };
        let mu_next = mean_order_stat(model, &query(&advance.stage)?)?;
        let sw = switching_time(cp, &stage, &advance.stage, t, e, mu, mu_next);
        if floor < target_error && sw.e_at_switch <= target_error {
            schedule.stages.push(finish(t, e)?);
            break;
        }
        schedule
            .stages
            .push(planned(&stage, t, sw.t_switch, e, sw.e_at_switch, mu, saturated));
        t = sw.t_switch;
        e = sw.e_at_switch;
        stage = advance.stage;
        saturated = advance.saturated;
        mu = mu_next;
    }
    schedule.total_time = schedule.stages.last().map_or(0.0, |s| s.t_switch);
    schedule.cost = schedule_costs(&schedule)?;
    Ok(schedule)
}

fn planned(stage: &StageParams, t0: f64, t1: f64, e0: f64, e1: f64, mu: f64, saturated: bool) -> PlannedStage {
    PlannedStage {
        k: stage.k,
        beta: stage.beta.value(),
        beta_samples: stage.beta.samples(),
        t_start: t0,
        t_switch: t1,
        e_start: e0,
        e_at_switch: e1,
        mean_iteration_time: mu,
        expected_iterations: (t1 - t0) / mu,
        iterations: ceil_iterations((t1 - t0) / mu),
        saturated,
    }
}

/// Sums per-stage iteration counts times per-iteration unit costs.
pub fn schedule_costs(schedule: &Schedule) -> Result<CostLedger> {
    let mut ledger = CostLedger::default();
    for st in &schedule.stages {
        let params = st.params(schedule.n, schedule.partition)?;
        let iterations = match schedule.iteration_count {
            IterationCount::Expected => st.expected_iterations,
            IterationCount::Ceiled => st.iterations as f64,
        };
        ledger.charge(&params, iterations, schedule.comp_cost);
        ledger.wall_time += iterations * st.mean_iteration_time;
    }
    Ok(ledger)
}
