//! Scenario configuration and the drivers behind each CLI mode.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convergence::ConvergenceParams;
use crate::delay_models::{
    mc_order_stat_oracle, mean_order_stat_general_with, mean_order_stat_simplified, order_stat_quadrature, DelayModel,
    DelayVariant, OrderStatQuery, OrderStatRoute, DEFAULT_CLOSED_FORM_MAX_N,
};
use crate::error::{invalid, Error, Result};
use crate::planner::{
    build_schedule, BetaGrid, BetaRule, CompCostMode, IterationCount, PlannerOptions, Schedule, Strategy,
};
use crate::rng::{derive_seed, substream};
use crate::simulator::{
    aggregate_runs, generate_dataset, optimal_loss, simulate_run, write_trajectories, CurveRow, DiagnosticConfig,
    LevelRow, Partition, RunResult, SimContext, SimSettings, StopRule,
};

const TAG_DATASET: u64 = 0xDA7A5E7;
const TAG_RUNS: u64 = 0x5EED;
const TAG_ORDER_STATS: u64 = 0x0057A7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TheorySweep,
    Simulate,
    OrderStats,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::TheorySweep => "theory_sweep",
            Mode::Simulate => "simulate",
            Mode::OrderStats => "order_stats",
        }
    }
}

/// `points` logarithmically spaced values from `min` to `max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl LogGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max >= self.min) || self.points == 0 {
            return Err(invalid(
                "grid",
                format!("need 0 < min <= max and points >= 1, got {self:?}"),
            ));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let ratio = self.max / self.min;
        let last = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                if i == self.points - 1 {
                    self.max
                } else {
                    self.min * ratio.powf(i as f64 / last)
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySweepConfig {
    pub workers: usize,
    /// Samples per worker partition, s.
    pub partition: u32,
    pub eta: f64,
    pub lipschitz: f64,
    pub grad_variance: f64,
    pub convexity: f64,
    pub initial_error: f64,
    pub target_error: f64,
    /// t_y, held fixed over the grid.
    pub comp_shift: f64,
    /// λ values.
    pub comp_rate: LogGrid,
    /// t_x values.
    pub comm_shift: LogGrid,
    /// β increment in samples.
    pub beta_step: u32,
    pub k_step: usize,
    pub comp_cost: CompCostMode,
    pub iteration_count: IterationCount,
    pub beta_rule: BetaRule,
    /// Also write both schedules of the cell with the largest runtime gain.
    pub write_best_schedules: bool,
}

impl Default for TheorySweepConfig {
    fn default() -> Self {
        let grid = LogGrid {
            min: 0.05,
            max: 20.0,
            points: 10,
        };
        TheorySweepConfig {
            workers: 50,
            partition: 200,
            eta: 0.1,
            lipschitz: 2.0,
            grad_variance: 10.0,
            convexity: 1.0,
            initial_error: 1.0,
            target_error: 1e-3,
            comp_shift: 0.0,
            comp_rate: grid,
            comm_shift: grid,
            beta_step: 1,
            k_step: 1,
            comp_cost: CompCostMode::Aggregated,
            iteration_count: IterationCount::Expected,
            beta_rule: BetaRule::Auto,
            write_best_schedules: true,
        }
    }
}

impl TheorySweepConfig {
    pub fn convergence(&self) -> Result<ConvergenceParams> {
        ConvergenceParams::new(
            self.eta,
            self.lipschitz,
            self.grad_variance,
            self.convexity,
            self.initial_error,
        )
    }

    pub fn planner(&self) -> Result<PlannerOptions> {
        let grid = BetaGrid::new(self.partition, self.beta_step, self.beta_step)?;
        Ok(PlannerOptions {
            grid,
            k_step: self.k_step,
            k_cap: self.workers,
            comp_cost: self.comp_cost,
            iteration_count: self.iteration_count,
            beta_rule: self.beta_rule,
        })
    }
}

/// One grid point of a theory sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub i: usize,
    pub j: usize,
    pub comp_rate: f64,
    pub comm_shift: f64,
    /// `ok`, or the reason the point has no result.
    pub status: String,
    pub runtime_k_beta: f64,
    pub runtime_k: f64,
    /// runtime(adaptive-(k, β)) / runtime(adaptive-k).
    pub runtime_ratio: f64,
    pub comm_k_beta: f64,
    pub comm_k: f64,
    /// comm(adaptive-(k, β)) / comm(adaptive-k) − 1.
    pub comm_overhead: f64,
    pub comp_k_beta: f64,
    pub comp_k: f64,
    /// 1 − comp(adaptive-(k, β)) / comp(adaptive-k).
    pub comp_reduction: f64,
    pub stages_k_beta: usize,
    pub stages_k: usize,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Row with the smallest runtime ratio.
    pub fn max_gain(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.is_ok())
            .min_by(|a, b| a.runtime_ratio.total_cmp(&b.runtime_ratio))
    }
}

/// Both schedules of one sweep cell.
pub fn sweep_schedules(cfg: &TheorySweepConfig, comp_rate: f64, comm_shift: f64) -> Result<(Schedule, Schedule)> {
    let cp = cfg.convergence()?;
    let options = cfg.planner()?;
    let model = DelayModel::simplified(comp_rate, cfg.comp_shift, comm_shift)?;
    let plan = |strategy| build_schedule(&cp, &model, cfg.workers, cfg.target_error, strategy, &options);
    Ok((plan(Strategy::AdaptiveKBeta)?, plan(Strategy::AdaptiveK)?))
}

fn sweep_point(cfg: &TheorySweepConfig, i: usize, j: usize, comp_rate: f64, comm_shift: f64) -> SweepRow {
    let mut row = SweepRow {
        i,
        j,
        comp_rate,
        comm_shift,
        status: "ok".into(),
        runtime_k_beta: f64::NAN,
        runtime_k: f64::NAN,
        runtime_ratio: f64::NAN,
        comm_k_beta: f64::NAN,
        comm_k: f64::NAN,
        comm_overhead: f64::NAN,
        comp_k_beta: f64::NAN,
        comp_k: f64::NAN,
        comp_reduction: f64::NAN,
        stages_k_beta: 0,
        stages_k: 0,
    };
    match sweep_schedules(cfg, comp_rate, comm_shift) {
        Ok((kb, k)) => {
            row.runtime_k_beta = kb.total_time;
            row.runtime_k = k.total_time;
            row.runtime_ratio = kb.total_time / k.total_time;
            row.comm_k_beta = kb.cost.comm_units;
            row.comm_k = k.cost.comm_units;
            row.comm_overhead = kb.cost.comm_units / k.cost.comm_units - 1.0;
            row.comp_k_beta = kb.cost.comp_units;
            row.comp_k = k.cost.comp_units;
            row.comp_reduction = 1.0 - kb.cost.comp_units / k.cost.comp_units;
            row.stages_k_beta = kb.stages.len();
            row.stages_k = k.stages.len();
        }
        Err(Error::Unreachable { .. }) => row.status = "unreachable".into(),
        Err(e) => row.status = e.to_string(),
    }
    row
}

/// Plans adaptive-(k, β) and adaptive-k to the target error at every
/// (λ, t_x) grid point.
pub fn run_theory_sweep(cfg: &TheorySweepConfig) -> Result<SweepTable> {
    cfg.convergence()?;
    cfg.planner()?;
    let rates = cfg.comp_rate.values()?;
    let shifts = cfg.comm_shift.values()?;
    let points: Vec<(usize, usize)> = (0..rates.len())
        .flat_map(|i| (0..shifts.len()).map(move |j| (i, j)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(i, j)| sweep_point(cfg, i, j, rates[i], shifts[j]))
        .collect();
    Ok(SweepTable { rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub name: String,
    pub model: DelayModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub workers: usize,
    pub samples: usize,
    pub dim: usize,
    pub feature_max: u32,
    pub label_max: u32,
    /// Explicit learning rate; overrides `eta_factor`.
    pub eta: Option<f64>,
    /// η = eta_factor / L̂ with L̂ the largest eigenvalue of the loss Hessian.
    pub eta_factor: f64,
    /// Batch-scale increment and starting value, as fractions of a partition.
    pub beta_step: f64,
    pub beta_start: f64,
    pub k_cap: usize,
    pub k_step: usize,
    pub beta_rule: BetaRule,
    pub comp_cost: CompCostMode,
    pub burn_in_factor: f64,
    pub accumulate_during_burn_in: bool,
    pub runs: u64,
    pub strategies: Vec<Strategy>,
    /// Strategy the others are compared against.
    pub baseline: Strategy,
    pub regimes: Vec<Regime>,
    pub max_time: f64,
    pub max_iterations: u64,
    pub divergence_factor: f64,
    pub record_every: u64,
    /// Error levels at which runtime and costs are reported.
    pub levels: Vec<f64>,
    pub quantile_band: f64,
    pub time_points: usize,
    /// Runs per strategy whose full trajectories are written.
    pub trajectory_runs: u64,
    pub clip_comm: Option<f64>,
    pub clip_comp: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            workers: 20,
            samples: 400,
            dim: 10,
            feature_max: 100,
            label_max: 10,
            eta: None,
            eta_factor: DEFAULT_ETA_FACTOR,
            beta_step: 0.2,
            beta_start: 0.2,
            k_cap: 10,
            k_step: 1,
            beta_rule: BetaRule::Auto,
            comp_cost: CompCostMode::Aggregated,
            burn_in_factor: DEFAULT_BURN_IN_FACTOR,
            accumulate_during_burn_in: false,
            runs: 100,
            strategies: vec![Strategy::AdaptiveKBeta, Strategy::AdaptiveK],
            baseline: Strategy::AdaptiveK,
            regimes: vec![Regime {
                name: "simplified".into(),
                model: DelayModel {
                    variant: DelayVariant::Simplified,
                    comp_rate: 1.0,
                    comp_shift: 0.0,
                    comm_rate: 0.0,
                    comm_shift: 0.01,
                },
            }],
            max_time: 300.0,
            max_iterations: 1_000_000,
            divergence_factor: 1e6,
            record_every: 1,
            levels: vec![2e-2],
            quantile_band: 0.8,
            time_points: 301,
            trajectory_runs: 3,
            clip_comm: None,
            clip_comp: None,
        }
    }
}

pub const DEFAULT_ETA_FACTOR: f64 = 0.25;
pub const DEFAULT_BURN_IN_FACTOR: f64 = 0.5;

fn fraction_to_samples(name: &'static str, beta: f64, partition: usize) -> Result<u32> {
    let raw = beta * partition as f64;
    let samples = raw.round();
    if !(beta > 0.0 && beta <= 1.0) || (raw - samples).abs() > 1e-9 {
        return Err(invalid(
            name,
            format!("{beta} is not a multiple of 1/{partition} in (0, 1]"),
        ));
    }
    Ok(samples as u32)
}

impl SimulateConfig {
    pub fn partition(&self) -> Result<Partition> {
        Partition::new(self.samples, self.workers)
    }

    pub fn planner(&self) -> Result<PlannerOptions> {
        let part = self.partition()?;
        let step = fraction_to_samples("beta_step", self.beta_step, part.size)?;
        let start = fraction_to_samples("beta_start", self.beta_start, part.size)?;
        if self.k_cap == 0 || self.k_cap > self.workers {
            return Err(invalid("k_cap", format!("must lie in 1..={}", self.workers)));
        }
        Ok(PlannerOptions {
            grid: BetaGrid::new(part.size as u32, step, start)?,
            k_step: self.k_step,
            k_cap: self.k_cap,
            comp_cost: self.comp_cost,
            iteration_count: IterationCount::Ceiled,
            beta_rule: self.beta_rule,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.planner()?;
        if self.runs < 2 {
            return Err(invalid("runs", "need at least two runs to aggregate"));
        }
        if self.strategies.is_empty() || self.regimes.is_empty() {
            return Err(invalid("strategies", "need at least one strategy and one regime"));
        }
        if !(self.max_time > 0.0) || self.time_points < 2 {
            return Err(invalid(
                "max_time",
                "need a positive time budget and at least two time points",
            ));
        }
        if self.levels.iter().any(|l| !(*l > 0.0)) {
            return Err(invalid("levels", "error levels must be positive"));
        }
        for r in &self.regimes {
            r.model.validate()?;
            if r.name.is_empty()
                || !r
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(invalid(
                    "regimes",
                    format!("regime name {:?} is not file-name safe", r.name),
                ));
            }
        }
        Ok(())
    }
}

/// Comparison of one strategy against the baseline at one error level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub strategy: String,
    pub level: f64,
    /// runtime / baseline runtime.
    pub runtime_ratio: f64,
    /// 1 − comp / baseline comp.
    pub comp_reduction: f64,
    /// comm / baseline comm − 1.
    pub comm_increase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub name: String,
    pub model: DelayModel,
    pub eta: f64,
    pub diverged: Vec<(String, usize)>,
    pub levels: Vec<LevelRow>,
    pub comparisons: Vec<Comparison>,
    #[serde(skip)]
    pub curves: Vec<CurveRow>,
    #[serde(skip)]
    pub trajectories: Vec<RunResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub master_seed: u64,
    pub dataset_seed: u64,
    pub f_star: f64,
    pub initial_error: f64,
    pub hessian_extremes: (f64, f64),
    pub regimes: Vec<RegimeSummary>,
}

impl SimulationReport {
    pub fn regime(&self, name: &str) -> Option<&RegimeSummary> {
        self.regimes.iter().find(|r| r.name == name)
    }
}

impl RegimeSummary {
    pub fn comparison(&self, strategy: &Strategy, level: f64) -> Option<&Comparison> {
        let label = strategy.label();
        self.comparisons
            .iter()
            .find(|c| c.strategy == label && c.level == level)
    }

    pub fn level(&self, strategy: &Strategy, level: f64) -> Option<&LevelRow> {
        let label = strategy.label();
        self.levels.iter().find(|l| l.strategy == label && l.level == level)
    }
}

/// Seed of run `run` in regime `regime`; shared by all strategies so they see
/// the same latency and sampling draws.
pub fn run_seed(master: u64, regime: usize, run: u64) -> u64 {
    derive_seed(master, &[TAG_RUNS, regime as u64, run])
}

/// Simulates every strategy in every regime over `cfg.runs` seeds.
pub fn run_simulation_experiment(cfg: &SimulateConfig, master_seed: u64) -> Result<SimulationReport> {
    cfg.validate()?;
    let dataset_seed = derive_seed(master_seed, &[TAG_DATASET]);
    let data = generate_dataset(cfg.samples, cfg.dim, cfg.feature_max, cfg.label_max, dataset_seed)?;
    let optimum = optimal_loss(&data)?;
    let (c_hat, l_hat) = optimum.curvature();
    let eta = cfg.eta.unwrap_or(cfg.eta_factor / l_hat);
    let planner = cfg.planner()?;
    let partition = cfg.partition()?;
    let settings = SimSettings {
        eta,
        planner,
        diagnostic: DiagnosticConfig {
            burn_in_factor: cfg.burn_in_factor,
            accumulate_during_burn_in: cfg.accumulate_during_burn_in,
        },
        stop: StopRule {
            target_error: None,
            max_time: Some(cfg.max_time),
            max_iterations: cfg.max_iterations,
        },
        record_every: cfg.record_every,
        divergence_factor: cfg.divergence_factor,
    };
    let time_grid: Vec<f64> = (0..cfg.time_points)
        .map(|i| cfg.max_time * i as f64 / (cfg.time_points - 1) as f64)
        .collect();
    let mut regimes = Vec::with_capacity(cfg.regimes.len());
    for (g, regime) in cfg.regimes.iter().enumerate() {
        let ctx = SimContext {
            data: &data,
            optimum: &optimum,
            partition,
            model: &regime.model,
            settings: &settings,
        };
        let mut summary = RegimeSummary {
            name: regime.name.clone(),
            model: regime.model,
            eta,
            diverged: Vec::new(),
            levels: Vec::new(),
            comparisons: Vec::new(),
            curves: Vec::new(),
            trajectories: Vec::new(),
        };
        for strategy in &cfg.strategies {
            let outcomes: Vec<Result<RunResult>> = (0..cfg.runs)
                .into_par_iter()
                .map(|r| simulate_run(&ctx, *strategy, r, run_seed(master_seed, g, r)))
                .collect();
            let mut runs = Vec::with_capacity(outcomes.len());
            let mut diverged = 0;
            for o in outcomes {
                match o {
                    Ok(r) => runs.push(r),
                    Err(Error::Diverged { .. }) => diverged += 1,
                    Err(e) => return Err(e),
                }
            }
            summary.diverged.push((strategy.label(), diverged));
            if runs.len() < 2 {
                return Err(Error::Numerical(format!(
                    "{} of {} runs of {} diverged in regime {}",
                    diverged,
                    cfg.runs,
                    strategy.label(),
                    regime.name
                )));
            }
            let agg = aggregate_runs(&runs, cfg.quantile_band, &time_grid, &cfg.levels)?;
            summary.curves.extend(agg.curves);
            summary.levels.extend(agg.levels);
            summary
                .trajectories
                .extend(runs.into_iter().filter(|r| r.run_id < cfg.trajectory_runs));
        }
        summary.comparisons = compare(&summary.levels, &cfg.baseline, &cfg.levels);
        clip_costs(&mut summary, cfg.clip_comm, cfg.clip_comp);
        regimes.push(summary);
    }
    Ok(SimulationReport {
        master_seed,
        dataset_seed,
        f_star: optimum.f_star,
        initial_error: optimum.excess_loss(&vec![0.0; cfg.dim]),
        hessian_extremes: (c_hat, l_hat),
        regimes,
    })
}

fn compare(levels: &[LevelRow], baseline: &Strategy, wanted: &[f64]) -> Vec<Comparison> {
    let base = baseline.label();
    let mut out = Vec::new();
    for &level in wanted {
        let Some(b) = levels.iter().find(|l| l.strategy == base && l.level == level) else {
            continue;
        };
        for l in levels.iter().filter(|l| l.level == level && l.strategy != base) {
            out.push(Comparison {
                strategy: l.strategy.clone(),
                level,
                runtime_ratio: l.runtime / b.runtime,
                comp_reduction: 1.0 - l.comp / b.comp,
                comm_increase: l.comm / b.comm - 1.0,
            });
        }
    }
    out
}

/// Caps reported cost values for plotting; comparisons are left untouched.
fn clip_costs(summary: &mut RegimeSummary, clip_comm: Option<f64>, clip_comp: Option<f64>) {
    let cap = |v: &mut f64, c: Option<f64>| {
        if let Some(c) = c {
            *v = v.min(c);
        }
    };
    for row in &mut summary.curves {
        cap(&mut row.mean_comm, clip_comm);
        cap(&mut row.mean_comp, clip_comp);
    }
    for row in &mut summary.levels {
        cap(&mut row.comm, clip_comm);
        cap(&mut row.comp, clip_comp);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderStatsConfig {
    /// Monte-Carlo batches per grid point.
    pub mc_samples: usize,
    pub simplified_points: usize,
    pub simplified_max_n: usize,
    pub generalized_points: usize,
    pub generalized_max_n: usize,
    pub equal_rate_points: usize,
    pub closed_form_max_n: usize,
}

impl Default for OrderStatsConfig {
    fn default() -> Self {
        OrderStatsConfig {
            mc_samples: 200_000,
            simplified_points: 20,
            simplified_max_n: 50,
            generalized_points: 20,
            generalized_max_n: 10,
            equal_rate_points: 5,
            closed_form_max_n: DEFAULT_CLOSED_FORM_MAX_N,
        }
    }
}

/// One validated order-statistic mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderStatRow {
    pub point: usize,
    pub variant: DelayVariant,
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub comp_rate: f64,
    pub comm_rate: f64,
    pub comp_shift: f64,
    pub comm_shift: f64,
    /// Harmonic-tail formula (simplified) or the routed generalized evaluation.
    pub exact: f64,
    pub route: String,
    /// Survival-function quadrature; NaN for the simplified model.
    pub quadrature: f64,
    pub monte_carlo: f64,
    pub mc_stderr: f64,
    pub rel_err_mc: f64,
    pub z_score: f64,
    pub rel_err_quadrature: f64,
}

fn draw_point(
    rng: &mut impl Rng,
    variant: DelayVariant,
    max_n: usize,
    equal: bool,
) -> Result<(DelayModel, OrderStatQuery)> {
    let n = rng.random_range(1..=max_n);
    let k = rng.random_range(1..=n);
    let s = 20u32;
    let beta = rng.random_range(1..=s) as f64 / s as f64;
    let log_uniform =
        |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
    let comp_rate = log_uniform(rng, 0.2, 20.0);
    let comp_shift = rng.random_range(0.0..0.2);
    let comm_shift = rng.random_range(0.0..0.2);
    let model = match (variant, equal) {
        (DelayVariant::Simplified, _) => DelayModel::simplified(comp_rate, comp_shift, comm_shift)?,
        (DelayVariant::Generalized, true) => {
            DelayModel::generalized(comp_rate, comp_shift, comp_rate / beta, comm_shift)?
        }
        (DelayVariant::Generalized, false) => {
            DelayModel::generalized(comp_rate, comp_shift, log_uniform(rng, 0.2, 20.0), comm_shift)?
        }
    };
    Ok((model, OrderStatQuery::new(k, n, beta)?))
}

fn evaluate_point(
    cfg: &OrderStatsConfig,
    seed: u64,
    point: usize,
    model: DelayModel,
    q: OrderStatQuery,
) -> Result<OrderStatRow> {
    let (exact, route, quad) = match model.variant {
        DelayVariant::Simplified => (
            mean_order_stat_simplified(&model, &q)?,
            "harmonic".to_string(),
            f64::NAN,
        ),
        DelayVariant::Generalized => {
            let (value, route) = mean_order_stat_general_with(&model, &q, cfg.closed_form_max_n)?;
            let route = match route {
                OrderStatRoute::ClosedForm => "closed_form",
                OrderStatRoute::Erlang => "erlang",
                OrderStatRoute::Quadrature => "quadrature",
            };
            (
                value,
                route.to_string(),
                order_stat_quadrature(&model, &q)? + model.total_shift(),
            )
        }
    };
    let mut rng = substream(seed, &[TAG_ORDER_STATS, point as u64]);
    let (mc, se) = mc_order_stat_oracle(&model, &q, cfg.mc_samples, &mut rng)?;
    Ok(OrderStatRow {
        point,
        variant: model.variant,
        n: q.n,
        k: q.k,
        beta: q.beta,
        comp_rate: model.comp_rate,
        comm_rate: model.comm_rate,
        comp_shift: model.comp_shift,
        comm_shift: model.comm_shift,
        exact,
        route,
        quadrature: quad,
        monte_carlo: mc,
        mc_stderr: se,
        rel_err_mc: (exact - mc).abs() / mc,
        z_score: (exact - mc) / se,
        rel_err_quadrature: (exact - quad).abs() / quad,
    })
}

/// Tabulates exact, quadrature and Monte-Carlo order-statistic means over a
/// seeded random parameter grid.
pub fn run_order_stats(cfg: &OrderStatsConfig, master_seed: u64) -> Result<Vec<OrderStatRow>> {
    if cfg.mc_samples < 10_000 {
        return Err(invalid("mc_samples", "need at least 10^4 Monte-Carlo batches"));
    }
    if cfg.simplified_max_n == 0 || cfg.generalized_max_n == 0 {
        return Err(invalid("max_n", "cluster sizes must be positive"));
    }
    let mut rng = substream(master_seed, &[TAG_ORDER_STATS]);
    let mut points = Vec::new();
    for _ in 0..cfg.simplified_points {
        points.push(draw_point(
            &mut rng,
            DelayVariant::Simplified,
            cfg.simplified_max_n,
            false,
        )?);
    }
    for _ in 0..cfg.generalized_points {
        points.push(draw_point(
            &mut rng,
            DelayVariant::Generalized,
            cfg.generalized_max_n,
            false,
        )?);
    }
    for _ in 0..cfg.equal_rate_points {
        points.push(draw_point(
            &mut rng,
            DelayVariant::Generalized,
            cfg.generalized_max_n,
            true,
        )?);
    }
    points
        .into_par_iter()
        .enumerate()
        .map(|(i, (model, q))| evaluate_point(cfg, master_seed, i, model, q))
        .collect()
}

/// A full scenario file: a master seed plus one section per mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub theory_sweep: TheorySweepConfig,
    pub simulate: SimulateConfig,
    pub order_stats: OrderStatsConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// FNV-1a of the canonical JSON form.
    pub fn hash(&self) -> Result<u64> {
        let bytes = serde_json::to_vec(self)?;
        Ok(bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        }))
    }
}

/// Provenance written next to every experiment's outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub mode: String,
    pub master_seed: u64,
    pub config_hash: String,
    pub files: Vec<String>,
    pub config: ScenarioConfig,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs `mode` from `config` and writes its outputs into `out`; returns the
/// paths written.
pub fn run_mode(mode: Mode, config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    match mode {
        Mode::TheorySweep => {
            let cfg = &config.theory_sweep;
            let table = run_theory_sweep(cfg)?;
            let path = out.join("theory_sweep.csv");
            write_csv(&path, &table.rows)?;
            files.push(path);
            if cfg.write_best_schedules {
                if let Some(best) = table.max_gain() {
                    let (kb, k) = sweep_schedules(cfg, best.comp_rate, best.comm_shift)?;
                    let path = out.join("theory_sweep_best_schedules.json");
                    write_json(&path, &[kb, k])?;
                    files.push(path);
                }
            }
        }
        Mode::Simulate => {
            let report = run_simulation_experiment(&config.simulate, config.seed)?;
            for r in &report.regimes {
                let curves = out.join(format!("{}_curves.csv", r.name));
                write_csv(&curves, &r.curves)?;
                let levels = out.join(format!("{}_levels.csv", r.name));
                write_csv(&levels, &r.levels)?;
                let traj = out.join(format!("{}_trajectories.csv", r.name));
                write_trajectories(fs::File::create(&traj)?, &r.trajectories)?;
                files.extend([curves, levels, traj]);
            }
            let path = out.join("simulate_summary.json");
            write_json(&path, &report)?;
            files.push(path);
        }
        Mode::OrderStats => {
            let rows = run_order_stats(&config.order_stats, config.seed)?;
            let path = out.join("order_stats.csv");
            write_csv(&path, &rows)?;
            files.push(path);
        }
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: mode.name().to_string(),
        master_seed: config.seed,
        config_hash: format!("{:016x}", config.hash()?),
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
        config: config.clone(),
    };
    let path = out.join(format!("{}_manifest.json", mode.name()));
    write_json(&path, &manifest)?;
    files.push(path);
    Ok(files)
}
