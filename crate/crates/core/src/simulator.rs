//! Synchronous distributed mini-batch SGD on linear regression with
//! fastest-k aggregation.
//!
//! Each iteration every worker draws a response time and a sub-batch of its
//! own partition. The main node waits for the `k` fastest responses, averages
//! their per-sample gradients and takes one step. Stragglers' work is dropped
//! and not billed. Stage changes are triggered by a gradient inner-product
//! diagnostic and follow the same ladder as the planner.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::convergence::{BatchScale, StageParams};
use crate::delay_models::{sample_response, DelayModel};
use crate::error::{invalid, Error, Result};
use crate::planner::{CostLedger, PlannerOptions, StageLadder, Strategy};
use crate::rng::{substream, PURPOSE_DELAY, PURPOSE_SAMPLE};

/// Row-major design matrix and labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if dim == 0 || y.is_empty() || x.len() != dim * y.len() {
            return Err(invalid(
                "dataset",
                format!("{} features for {} labels of dimension {dim}", x.len(), y.len()),
            ));
        }
        Ok(Dataset { dim, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean squared residual over the whole dataset.
    pub fn loss(&self, w: &[f64]) -> f64 {
        let total: f64 = (0..self.len())
            .map(|i| {
                let r = dot(self.row(i), w) - self.y[i];
                r * r
            })
            .sum();
        total / self.len() as f64
    }

    fn design(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.x)
    }
}

/// Integer features uniform on `1..=feature_max` and labels uniform on
/// `1..=label_max`.
pub fn generate_dataset(n_samples: usize, dim: usize, feature_max: u32, label_max: u32, seed: u64) -> Result<Dataset> {
    if feature_max == 0 || label_max == 0 {
        return Err(invalid("feature_max", "feature and label ranges must be positive"));
    }
    let mut rng = substream(seed, &[0xDA7A]);
    let x = (0..n_samples * dim)
        .map(|_| rng.random_range(1..=feature_max) as f64)
        .collect();
    let y = (0..n_samples).map(|_| rng.random_range(1..=label_max) as f64).collect();
    Dataset::new(dim, x, y)
}

/// Contiguous equal-size blocks of sample indices, one per worker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub workers: usize,
    pub size: usize,
}

impl Partition {
    pub fn new(n_samples: usize, workers: usize) -> Result<Self> {
        if workers == 0 || n_samples == 0 || !n_samples.is_multiple_of(workers) {
            return Err(invalid(
                "workers",
                format!("{n_samples} samples cannot be split evenly over {workers} workers"),
            ));
        }
        Ok(Partition {
            workers,
            size: n_samples / workers,
        })
    }

    pub fn indices(&self, worker: usize) -> std::ops::Range<usize> {
        worker * self.size..(worker + 1) * self.size
    }
}

/// Least-squares optimum of the full dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub w_star: Vec<f64>,
    pub f_star: f64,
    /// The normal equations needed a ridge term.
    pub regularized: bool,
    gram: Vec<f64>,
    /// ∇F(w★), zero up to round-off unless regularized.
    grad_star: Vec<f64>,
}

const RIDGE: f64 = 1e-10;

impl Optimum {
    /// F(w) − F★ via the exact quadratic expansion around w★.
    pub fn excess_loss(&self, w: &[f64]) -> f64 {
        let d = w.len();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for a in 0..d {
            let da = w[a] - self.w_star[a];
            let row: f64 = self.gram[a * d..(a + 1) * d]
                .iter()
                .zip(w.iter().zip(&self.w_star))
                .map(|(g, (wb, sb))| g * (wb - sb))
                .sum();
            quad += da * row;
            lin += self.grad_star[a] * da;
        }
        quad + lin
    }

    /// Extremal eigenvalues of the loss Hessian 2XᵀX/N: (c, L).
    pub fn curvature(&self) -> (f64, f64) {
        let d = self.w_star.len();
        let h = DMatrix::from_row_slice(d, d, &self.gram) * 2.0;
        let eig = h.symmetric_eigenvalues();
        (eig.min(), eig.max())
    }
}

/// Solves the normal equations XᵀXw = Xᵀy, falling back to a small ridge
/// when XᵀX is not positive definite.
pub fn optimal_loss(data: &Dataset) -> Result<Optimum> {
    let x = data.design();
    let n = data.len() as f64;
    let gram = x.transpose() * &x / n;
    let rhs = x.transpose() * DVector::from_column_slice(&data.y) / n;
    let (w, regularized) = match gram.clone().cholesky() {
        Some(ch) => (ch.solve(&rhs), false),
        None => {
            let ridge = &gram + DMatrix::identity(data.dim, data.dim) * RIDGE;
            let ch = ridge
                .cholesky()
                .ok_or_else(|| Error::Numerical("normal equations are singular".into()))?;
            (ch.solve(&rhs), true)
        }
    };
    let w_star: Vec<f64> = w.iter().copied().collect();
    let grad = (&gram * &w - &rhs) * 2.0;
    Ok(Optimum {
        f_star: data.loss(&w_star),
        w_star,
        regularized,
        gram: gram.transpose().iter().copied().collect(),
        grad_star: grad.iter().copied().collect(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Adds Σ 2(x_i·w − y_i)x_i over `indices` into `acc`.
fn accumulate_gradient(w: &[f64], data: &Dataset, indices: impl IntoIterator<Item = usize>, acc: &mut [f64]) {
    for i in indices {
        let row = data.row(i);
        let r = 2.0 * (dot(row, w) - data.y[i]);
        for (a, x) in acc.iter_mut().zip(row) {
            *a += r * x;
        }
    }
}

/// (1/|S|) Σ_{i∈S} 2(x_i·w − y_i)x_i.
pub fn minibatch_gradient(w: &[f64], data: &Dataset, sample_indices: &[usize]) -> Result<Vec<f64>> {
    if sample_indices.is_empty() {
        return Err(invalid("sample_indices", "empty batch"));
    }
    if let Some(&bad) = sample_indices.iter().find(|&&i| i >= data.len()) {
        return Err(invalid("sample_indices", format!("index {bad} out of range")));
    }
    let mut g = vec![0.0; data.dim];
    accumulate_gradient(w, data, sample_indices.iter().copied(), &mut g);
    let count = sample_indices.len() as f64;
    g.iter_mut().for_each(|v| *v /= count);
    Ok(g)
}

/// Sub-batch of `batch` distinct indices from `worker`'s partition for
/// iteration `iteration`.
pub fn worker_batch(seed: u64, iteration: u64, worker: usize, part: &Partition, batch: usize) -> Vec<usize> {
    let mut rng = substream(seed, &[iteration, worker as u64, PURPOSE_SAMPLE]);
    let base = part.indices(worker).start;
    index::sample(&mut rng, part.size, batch)
        .into_iter()
        .map(|i| base + i)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticConfig {
    /// Burn-in is ⌈factor · s / β⌉ iterations.
    pub burn_in_factor: f64,
    /// Accumulate the statistic from the first iteration of a stage instead
    /// of from the end of the burn-in.
    pub accumulate_during_burn_in: bool,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        DiagnosticConfig {
            burn_in_factor: 2.0,
            accumulate_during_burn_in: false,
        }
    }
}

impl DiagnosticConfig {
    pub fn burn_in(&self, stage: &StageParams) -> u64 {
        (self.burn_in_factor * stage.partition() as f64 / stage.beta.value()).ceil() as u64
    }
}

/// Stationarity test on consecutive aggregated gradients.
///
/// After the burn-in, `S += ⟨g_t, g_{t−1}⟩` is accumulated and the stage is
/// declared stationary as soon as `S < 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticState {
    pub statistic: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub accumulate_during_burn_in: bool,
    previous: Option<Vec<f64>>,
}

impl DiagnosticState {
    pub fn new(burn_in: u64) -> Self {
        DiagnosticState {
            statistic: 0.0,
            iterations: 0,
            burn_in,
            accumulate_during_burn_in: false,
            previous: None,
        }
    }

    pub fn for_stage(config: &DiagnosticConfig, stage: &StageParams) -> Self {
        DiagnosticState {
            accumulate_during_burn_in: config.accumulate_during_burn_in,
            ..DiagnosticState::new(config.burn_in(stage))
        }
    }

    pub fn burned_in(&self) -> bool {
        self.iterations > self.burn_in
    }
}

/// Feeds one aggregated gradient; returns whether the stage looks stationary.
pub fn diagnostic_update(state: &mut DiagnosticState, gradient: &[f64]) -> bool {
    state.iterations += 1;
    let counting = state.burned_in();
    if counting || state.accumulate_during_burn_in {
        if let Some(prev) = &state.previous {
            state.statistic += dot(gradient, prev);
        }
    }
    match &mut state.previous {
        Some(prev) => prev.copy_from_slice(gradient),
        None => state.previous = Some(gradient.to_vec()),
    }
    counting && state.statistic < 0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once the excess loss is at or below this value.
    pub target_error: Option<f64>,
    pub max_time: Option<f64>,
    pub max_iterations: u64,
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if self.target_error.is_none() && self.max_time.is_none() && self.max_iterations == u64::MAX {
            return Err(invalid(
                "stop",
                "needs a target error, a time budget or an iteration cap",
            ));
        }
        if self.target_error.is_some_and(|e| !(e >= 0.0)) || self.max_time.is_some_and(|t| !(t > 0.0)) {
            return Err(invalid("stop", "target error must be ≥ 0 and time budget > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub eta: f64,
    pub planner: PlannerOptions,
    pub diagnostic: DiagnosticConfig,
    pub stop: StopRule,
    /// Record every `record_every`-th iteration (plus the first and last).
    pub record_every: u64,
    /// Abort when the excess loss exceeds this multiple of the initial one.
    pub divergence_factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub t: f64,
    pub error: f64,
    pub comm: f64,
    pub comp: f64,
    pub stage: usize,
    pub k: usize,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizedStage {
    pub k: usize,
    pub beta: f64,
    pub start_iteration: u64,
    pub start_time: f64,
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: u64,
    pub strategy: String,
    pub trajectory: Vec<TrajectoryPoint>,
    pub stages: Vec<RealizedStage>,
    pub cost: CostLedger,
    pub iterations: u64,
    pub final_w: Vec<f64>,
}

impl RunResult {
    pub fn final_error(&self) -> f64 {
        self.trajectory.last().map_or(f64::NAN, |p| p.error)
    }
}

/// Everything a run needs besides its strategy and seed.
#[derive(Clone, Copy, Debug)]
pub struct SimContext<'a> {
    pub data: &'a Dataset,
    pub optimum: &'a Optimum,
    pub partition: Partition,
    pub model: &'a DelayModel,
    pub settings: &'a SimSettings,
}

/// Runs one seeded simulation of `strategy` from w = 0.
pub fn simulate_run(ctx: &SimContext<'_>, strategy: Strategy, run_id: u64, seed: u64) -> Result<RunResult> {
    let settings = ctx.settings;
    settings.stop.validate()?;
    if !(settings.eta > 0.0) {
        return Err(invalid("eta", "learning rate must be positive"));
    }
    let part = ctx.partition;
    if part.workers * part.size != ctx.data.len() {
        return Err(invalid("partition", "does not cover the dataset"));
    }
    if settings.planner.grid.partition as usize != part.size {
        return Err(invalid(
            "beta_grid",
            "grid partition size differs from the data partition",
        ));
    }
    let n = part.workers;
    let ladder = StageLadder {
        strategy,
        model: ctx.model,
        n,
        options: settings.planner,
    };
    let mut stage = ladder.initial()?;
    let mut w = vec![0.0; ctx.data.dim];
    let e0 = ctx.optimum.excess_loss(&w);
    let limit = settings.divergence_factor * e0.max(f64::MIN_POSITIVE);
    let mut ledger = CostLedger::default();
    let mut t = 0.0;
    let mut stage_id = 0;
    let mut stages = vec![RealizedStage {
        k: stage.k,
        beta: stage.beta.value(),
        start_iteration: 0,
        start_time: 0.0,
        saturated: false,
    }];
    let mut diag = DiagnosticState::for_stage(&settings.diagnostic, &stage);
    let point = |j: u64, t: f64, e: f64, ledger: &CostLedger, id: usize, stage: &StageParams| TrajectoryPoint {
        iteration: j,
        t,
        error: e,
        comm: ledger.comm_units,
        comp: ledger.comp_units,
        stage: id,
        k: stage.k,
        beta: stage.beta.value(),
    };
    let mut trajectory = vec![point(0, 0.0, e0, &ledger, 0, &stage)];
    let every = settings.record_every.max(1);
    let mut times: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut grad = vec![0.0; ctx.data.dim];
    let mut error = e0;
    let mut j = 0u64;
    let done = |t: f64, e: f64, j: u64| {
        settings.stop.target_error.is_some_and(|target| e <= target)
            || settings.stop.max_time.is_some_and(|max| t >= max)
            || j >= settings.stop.max_iterations
    };
    while !done(t, error, j) {
        let dt = fastest_k_step(ctx, &stage, &w, seed, j, &mut times, &mut grad)?;
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= settings.eta * gi;
        }
        j += 1;
        t += dt;
        ledger.charge(&stage, 1.0, settings.planner.comp_cost);
        ledger.wall_time = t;
        error = ctx.optimum.excess_loss(&w);
        if !(error <= limit) {
            return Err(Error::Diverged { iteration: j, error });
        }

        let stationary = diagnostic_update(&mut diag, &grad);
        let record = j.is_multiple_of(every) || done(t, error, j);
        if record {
            trajectory.push(point(j, t, error, &ledger, stage_id, &stage));
        }
        if stationary {
            if let Some(advance) = ladder.next(&stage)? {
                stage = advance.stage;
                stage_id += 1;
                stages.push(RealizedStage {
                    k: stage.k,
                    beta: stage.beta.value(),
                    start_iteration: j,
                    start_time: t,
                    saturated: advance.saturated,
                });
                diag = DiagnosticState::for_stage(&settings.diagnostic, &stage);
            } else {
                diag = DiagnosticState::new(u64::MAX);
            }
        }
    }
    if trajectory.last().is_some_and(|p| p.iteration != j) {
        trajectory.push(point(j, t, error, &ledger, stage_id, &stage));
    }
    Ok(RunResult {
        run_id,
        strategy: strategy.label(),
        trajectory,
        stages,
        cost: ledger,
        iterations: j,
        final_w: w,
    })
}

/// One iteration's latency draw and aggregation: returns the k-th fastest
/// response time and writes the averaged gradient of the k fastest workers
/// into `grad`. `times` is scratch space.
pub fn fastest_k_step(
    ctx: &SimContext<'_>,
    stage: &StageParams,
    w: &[f64],
    seed: u64,
    iteration: u64,
    times: &mut Vec<(f64, usize)>,
    grad: &mut [f64],
) -> Result<f64> {
    let n = ctx.partition.workers;
    let beta = stage.beta.value();
    let batch = stage.beta.samples() as usize;
    times.clear();
    for worker in 0..n {
        let mut rng = substream(seed, &[iteration, worker as u64, PURPOSE_DELAY]);
        times.push((sample_response(ctx.model, beta, &mut rng)?, worker));
    }
    times.select_nth_unstable_by(stage.k - 1, |a, b| a.0.total_cmp(&b.0));
    let dt = times[stage.k - 1].0;
    let fastest = &mut times[..stage.k];
    fastest.sort_unstable_by_key(|&(_, worker)| worker);

    grad.iter_mut().for_each(|g| *g = 0.0);
    for &(_, worker) in fastest.iter() {
        let idx = worker_batch(seed, iteration, worker, &ctx.partition, batch);
        accumulate_gradient(w, ctx.data, idx, grad);
    }
    let count = (stage.k * batch) as f64;
    grad.iter_mut().for_each(|g| *g /= count);
    Ok(dt)
}

/// Batch scale helper for callers that think in fractions.
pub fn stage_at(k: usize, n: usize, beta: f64, partition: u32) -> Result<StageParams> {
    StageParams::new(k, n, BatchScale::from_fraction(beta, partition)?)
}

/// One CSV row of a trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub run_id: u64,
    pub strategy: String,
    pub t: f64,
    pub error: f64,
    pub comm: f64,
    pub comp: f64,
    pub stage: usize,
    pub k: usize,
    pub beta: f64,
}

/// Writes trajectories with columns
/// `run_id,strategy,t,error,comm,comp,stage,k,beta`.
pub fn write_trajectories<W: std::io::Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in results {
        for p in &r.trajectory {
            wtr.serialize(TrajectoryRow {
                run_id: r.run_id,
                strategy: r.strategy.clone(),
                t: p.t,
                error: p.error,
                comm: p.comm,
                comp: p.comp,
                stage: p.stage,
                k: p.k,
                beta: p.beta,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = q.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Last recorded point at or before `t`.
fn point_at(run: &RunResult, t: f64) -> &TrajectoryPoint {
    let idx = run.trajectory.partition_point(|p| p.t <= t);
    &run.trajectory[idx.saturating_sub(1)]
}

/// First recorded point with error at or below `level`.
pub fn first_passage(run: &RunResult, level: f64) -> Option<&TrajectoryPoint> {
    run.trajectory.iter().find(|p| p.error <= level)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub strategy: String,
    pub t: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub mean_comm: f64,
    pub mean_comp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub strategy: String,
    pub level: f64,
    pub runs: usize,
    /// First time the run-averaged error is at or below the level.
    pub runtime: f64,
    /// Run-averaged costs at that time.
    pub comm: f64,
    pub comp: f64,
    /// Runs whose own trajectory touched the level.
    pub reached: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub curves: Vec<CurveRow>,
    pub levels: Vec<LevelRow>,
}

/// Run-averaged (error, comm, comp) as step functions of time; returns the
/// first time the mean error is at or below each level.
fn mean_curve_crossings(runs: &[&RunResult], levels: &[f64]) -> Vec<Option<(f64, f64, f64)>> {
    let m = runs.len() as f64;
    let mut events: Vec<(f64, usize, usize)> = runs
        .iter()
        .enumerate()
        .flat_map(|(r, run)| (1..run.trajectory.len()).map(move |i| (run.trajectory[i].t, r, i)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut err, mut comm, mut comp) = (0.0, 0.0, 0.0);
    for run in runs {
        let p = &run.trajectory[0];
        err += p.error;
        comm += p.comm;
        comp += p.comp;
    }
    let mut out = vec![None; levels.len()];
    let check = |t: f64, err: f64, comm: f64, comp: f64, out: &mut Vec<Option<(f64, f64, f64)>>| {
        for (slot, &level) in out.iter_mut().zip(levels) {
            if slot.is_none() && err / m <= level {
                *slot = Some((t, comm / m, comp / m));
            }
        }
    };
    check(0.0, err, comm, comp, &mut out);
    let mut idx = 0;
    while idx < events.len() {
        let t = events[idx].0;
        // apply every update at this instant before testing
        while idx < events.len() && events[idx].0 == t {
            let (_, r, i) = events[idx];
            let (prev, cur) = (&runs[r].trajectory[i - 1], &runs[r].trajectory[i]);
            err += cur.error - prev.error;
            comm += cur.comm - prev.comm;
            comp += cur.comp - prev.comp;
            idx += 1;
        }
        check(t, err, comm, comp, &mut out);
    }
    out
}

/// Pointwise median and `band` quantile envelope of the error on
/// `time_grid`, mean cost curves, and the time and costs at which the
/// run-averaged error first reaches each level, grouped by strategy.
pub fn aggregate_runs(results: &[RunResult], band: f64, time_grid: &[f64], levels: &[f64]) -> Result<Summary> {
    if results.is_empty() {
        return Err(invalid("results", "nothing to aggregate"));
    }
    if !(band > 0.0 && band <= 1.0) {
        return Err(invalid("quantile_band", format!("{band} is outside (0, 1]")));
    }
    let mut names: Vec<&str> = Vec::new();
    for r in results {
        if !names.contains(&r.strategy.as_str()) {
            names.push(&r.strategy);
        }
    }
    let (q_lo, q_hi) = ((1.0 - band) / 2.0, (1.0 + band) / 2.0);
    let mut summary = Summary::default();
    for name in names {
        let runs: Vec<&RunResult> = results.iter().filter(|r| r.strategy == name).collect();
        for &t in time_grid {
            let points: Vec<&TrajectoryPoint> = runs.iter().map(|r| point_at(r, t)).collect();
            let mut errors: Vec<f64> = points.iter().map(|p| p.error).collect();
            errors.sort_by(f64::total_cmp);
            let m = points.len() as f64;
            summary.curves.push(CurveRow {
                strategy: name.to_string(),
                t,
                median: quantile(&errors, 0.5),
                lower: quantile(&errors, q_lo),
                upper: quantile(&errors, q_hi),
                mean_comm: points.iter().map(|p| p.comm).sum::<f64>() / m,
                mean_comp: points.iter().map(|p| p.comp).sum::<f64>() / m,
            });
        }
        let crossings = mean_curve_crossings(&runs, levels);
        for (&level, crossing) in levels.iter().zip(crossings) {
            let (runtime, comm, comp) = crossing.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            summary.levels.push(LevelRow {
                strategy: name.to_string(),
                level,
                runs: runs.len(),
                runtime,
                comm,
                comp,
                reached: runs.iter().filter(|r| first_passage(r, level).is_some()).count(),
            });
        }
    }
    Ok(summary)
}
