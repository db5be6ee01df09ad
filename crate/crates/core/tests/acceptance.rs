//! Acceptance suite: one pass/fail line per criterion.
//!
//! Criteria listed in `EXPECTED_FAIL` are still evaluated in full; their
//! failure is reported but does not fail the target. An unexpected failure,
//! or an expected failure that starts passing, exits nonzero.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use straggler_lab::convergence::{
    decay_rate_time, error_bound, error_floor, iterations_to_error, BatchScale, ConvergenceParams, StageParams,
};
use straggler_lab::delay_models::{
    mean_order_stat, mean_order_stat_simplified, DelayModel, DelayVariant, OrderStatQuery,
};
use straggler_lab::experiments::{
    run_order_stats, run_simulation_experiment, run_theory_sweep, OrderStatsConfig, Regime, SimulateConfig,
    TheorySweepConfig,
};
use straggler_lab::planner::{
    closed_form_beta_opt, error_at_switch_closed, objective, objective_profile, optimal_beta, optimal_beta_closed,
    optimal_beta_numeric, switching_time, BetaGrid, PlannerOptions, Strategy,
};
use straggler_lab::rng::{substream, PURPOSE_DELAY};
use straggler_lab::simulator::{
    fastest_k_step, generate_dataset, minibatch_gradient, optimal_loss, simulate_run, stage_at, worker_batch,
    DiagnosticConfig, Partition, SimContext, SimSettings, StopRule,
};
use straggler_lab::Error;

/// Criteria known not to hold under the current defaults.
const EXPECTED_FAIL: &[u8] = &[2, 5, 6];

const SEED_ORDER_STATS: u64 = 1;
const SEED_PLANNER: u64 = 11;
const SEED_SWITCH: u64 = 12;
const SEED_PROPERTIES: u64 = 13;
/// Simulation seed; the defaults were calibrated on seeds 1..=5.
const SEED_SIMULATION: u64 = 2024;

const MC_SAMPLES: usize = 1_000_000;
const MC_Z_MAX: f64 = 3.0;
const GENERALIZED_REL_TOL: f64 = 0.01;
const QUADRATURE_REL_TOL: f64 = 1e-6;

const BETA_DRAWS: usize = 200;
const CONCAVITY_DRAWS: usize = 100;
const CONCAVITY_POINTS: usize = 400;
const CONCAVITY_TOL: f64 = 1e-9;

const SWITCH_PAIRS: usize = 100;
const SWITCH_REL_TOL: f64 = 1e-6;

const RATIO_SLACK: f64 = 1e-12;
const OVERHEAD_BAND: (f64, f64) = (0.10, 0.25);
/// Small-t_x / large-λ corner of the sweep grid: t_x index ≤ 2, λ index ≥ 6.
const GAIN_CORNER: (usize, usize) = (2, 6);

const SIM_LEVEL: f64 = 2e-2;
const SIM_RUNTIME_BAND: (f64, f64) = (0.35, 0.65);
const SIM_COMP_BAND: (f64, f64) = (0.499, 0.699);
const SIM_COMM_BAND: (f64, f64) = (0.077, 0.237);

const CLEAR_GAIN: f64 = 0.8;
const NOTABLE_GAIN: f64 = 0.9;
const NO_GAIN_BAND: (f64, f64) = (0.95, 1.2);

const ROUND_TRIP_TOL: f64 = 1e-9;
const UNBIASED_ITERATIONS: u64 = 10_000;
const UNBIASED_Z_MAX: f64 = 3.0;
const FD_REL_TOL: f64 = 1e-6;

type Criterion = (u8, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()
}

fn order_statistics() -> Outcome {
    let cfg = OrderStatsConfig {
        mc_samples: MC_SAMPLES,
        ..OrderStatsConfig::default()
    };
    let rows = run_order_stats(&cfg, SEED_ORDER_STATS).expect("order-statistic table");
    let simplified: Vec<_> = rows.iter().filter(|r| r.variant == DelayVariant::Simplified).collect();
    let general: Vec<_> = rows.iter().filter(|r| r.variant == DelayVariant::Generalized).collect();
    let worst_z = simplified.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max);
    let worst_rel = general.iter().map(|r| r.rel_err_mc).fold(0.0, f64::max);
    let worst_quad = general
        .iter()
        .filter(|r| r.route != "quadrature")
        .map(|r| r.rel_err_quadrature)
        .fold(0.0, f64::max);
    let max_n = simplified.iter().map(|r| r.n).max().unwrap_or(0);
    let pass = simplified.len() == 20
        && max_n <= 50
        && worst_z <= MC_Z_MAX
        && worst_rel <= GENERALIZED_REL_TOL
        && worst_quad <= QUADRATURE_REL_TOL;
    outcome(
        pass,
        format!(
            "{} simplified points, max |z| = {worst_z:.2} (<= {MC_Z_MAX}); {} generalized points, max rel err vs MC = {worst_rel:.2e} (<= {GENERALIZED_REL_TOL}); closed form vs quadrature max rel = {worst_quad:.1e} (<= {QUADRATURE_REL_TOL:e})",
            simplified.len(),
            general.len()
        ),
    )
}

struct BetaDraw {
    model: DelayModel,
    current: StageParams,
    k_next: usize,
    grid: BetaGrid,
}

fn draw_beta_problem(rng: &mut ChaCha8Rng) -> BetaDraw {
    loop {
        let model = DelayModel::simplified(
            log_uniform(rng, 0.05, 20.0),
            rng.random_range(0.0..0.2),
            log_uniform(rng, 0.05, 20.0),
        )
        .unwrap();
        let n = rng.random_range(2..=50);
        let s: u32 = rng.random_range(10..=200);
        let k = rng.random_range(1..n);
        let samples = rng.random_range(1..=s);
        let current = StageParams::new(k, n, BatchScale::new(samples, s).unwrap()).unwrap();
        let grid = BetaGrid::unit(s);
        match optimal_beta_numeric(&model, &current, k + 1, &grid) {
            Ok(_) => {
                return BetaDraw {
                    model,
                    current,
                    k_next: k + 1,
                    grid,
                }
            }
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => panic!("unexpected planner error: {e}"),
        }
    }
}

fn beta_optimizer() -> Outcome {
    let mut rng = substream(SEED_PLANNER, &[2]);
    let mut agree = 0;
    let mut neighbour_agree = 0;
    let mut first_miss = None;
    for _ in 0..BETA_DRAWS {
        let d = draw_beta_problem(&mut rng);
        let closed = optimal_beta_closed(&d.model, &d.current, d.k_next, &d.grid).unwrap();
        let grid = optimal_beta_numeric(&d.model, &d.current, d.k_next, &d.grid).unwrap();
        // the continuous optimum rounded to whichever neighbour scores higher
        let profile = objective_profile(&d.model, &d.current, d.k_next, &d.grid).unwrap();
        let raw = closed_form_beta_opt(&d.model, &d.current, d.k_next).unwrap() * d.grid.partition as f64;
        let lo = profile[0].0.samples();
        let pick = |x: f64| (x.max(lo as f64).min(d.grid.partition as f64)) as u32;
        let neighbours = [pick(raw.floor()), pick(raw.ceil())];
        let best = profile
            .iter()
            .filter(|(b, _)| neighbours.contains(&b.samples()))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.samples().cmp(&a.0.samples())))
            .map(|(b, _)| *b);
        if best == Some(grid.beta) {
            neighbour_agree += 1;
        }
        if closed.beta == grid.beta {
            agree += 1;
        } else if first_miss.is_none() {
            first_miss = Some(format!(
                " first miss: k {} -> {}, closed {} vs grid {}",
                d.current.k,
                d.k_next,
                closed.beta.samples(),
                grid.beta.samples()
            ));
        }
    }

    let mut worst = f64::NEG_INFINITY;
    let mut unimodal = 0;
    for _ in 0..CONCAVITY_DRAWS {
        let d = draw_beta_problem(&mut rng);
        let phi = d.current.phi();
        let q = OrderStatQuery::new(d.current.k, d.current.n, d.current.beta.value()).unwrap();
        let mu_cur = mean_order_stat_simplified(&d.model, &q).unwrap();
        let lo = phi / d.k_next as f64;
        let h = (1.0 - lo) / (CONCAVITY_POINTS + 1) as f64;
        let o = |beta: f64| {
            let q = OrderStatQuery::new(d.k_next, d.current.n, beta).unwrap();
            let mu = mean_order_stat_simplified(&d.model, &q).unwrap();
            objective(phi, mu_cur, d.k_next as f64 * beta, mu)
        };
        let values: Vec<f64> = (1..=CONCAVITY_POINTS).map(|i| o(lo + h * i as f64)).collect();
        for w in values.windows(3) {
            let second = (w[0] - 2.0 * w[1] + w[2]) / w[1].abs().max(1.0);
            worst = worst.max(second);
        }
        // rises then falls, at most one change of direction
        let falls = values.windows(2).position(|w| w[1] < w[0]).unwrap_or(values.len());
        if values[falls.min(values.len() - 1)..].windows(2).all(|w| w[1] <= w[0]) {
            unimodal += 1;
        }
    }
    let pass = agree == BETA_DRAWS && worst <= CONCAVITY_TOL;
    outcome(
        pass,
        format!(
            "ceiled closed form = grid argmax on {agree}/{BETA_DRAWS} draws{} (better-neighbour rounding agrees on {neighbour_agree}/{BETA_DRAWS}); max scaled second difference of the objective over {CONCAVITY_DRAWS} draws = {worst:.2e} (<= {CONCAVITY_TOL:e}; unimodal on {unimodal}/{CONCAVITY_DRAWS})",
            first_miss.unwrap_or_default()
        ),
    )
}

fn switching_consistency() -> Outcome {
    let mut rng = substream(SEED_SWITCH, &[3]);
    let mut checked = 0;
    let mut attempts = 0;
    let mut worst_rate: f64 = 0.0;
    let mut worst_error: f64 = 0.0;
    while checked < SWITCH_PAIRS && attempts < 100 * SWITCH_PAIRS {
        attempts += 1;
        let c = rng.random_range(0.1..1.0);
        let eta = rng.random_range(0.01..0.9) / c;
        let cp = ConvergenceParams::new(
            eta,
            c * rng.random_range(1.0..10.0),
            rng.random_range(0.1..20.0),
            c,
            1.0,
        )
        .unwrap();
        let model = if rng.random_bool(0.5) {
            DelayModel::simplified(
                log_uniform(&mut rng, 0.05, 20.0),
                0.0,
                log_uniform(&mut rng, 0.05, 20.0),
            )
            .unwrap()
        } else {
            DelayModel::generalized(
                log_uniform(&mut rng, 0.2, 50.0),
                0.0,
                log_uniform(&mut rng, 0.2, 50.0),
                rng.random_range(0.0..0.5),
            )
            .unwrap()
        };
        let n = rng.random_range(2..=30);
        let s: u32 = rng.random_range(10..=100);
        let k = rng.random_range(1..n);
        let samples = rng.random_range(1..=s);
        let from = StageParams::new(k, n, BatchScale::new(samples, s).unwrap()).unwrap();
        let to = if samples < s && rng.random_bool(0.5) {
            StageParams::new(k, n, BatchScale::new(samples + 1, s).unwrap()).unwrap()
        } else {
            let options = PlannerOptions::new(n, s);
            match optimal_beta(&model, &from, k + 1, &options) {
                Ok(choice) => StageParams::new(k + 1, n, choice.beta).unwrap(),
                Err(_) => continue,
            }
        };
        let mu = |st: &StageParams| {
            mean_order_stat(&model, &OrderStatQuery::new(st.k, st.n, st.beta.value()).unwrap()).unwrap()
        };
        let (mu_from, mu_to) = (mu(&from), mu(&to));
        let e_prev = error_floor(&cp, &from) * log_uniform(&mut rng, 1.01, 1e3);
        let t_prev = rng.random_range(0.0..10.0);
        let sw = switching_time(&cp, &from, &to, t_prev, e_prev, mu_from, mu_to);
        if sw.clamped {
            continue;
        }
        let r_from = decay_rate_time(&cp, &from, mu_from, sw.t_switch, t_prev, e_prev).unwrap();
        let r_to = decay_rate_time(&cp, &to, mu_to, sw.t_switch, sw.t_switch, sw.e_at_switch).unwrap();
        worst_rate = worst_rate.max((r_from - r_to).abs() / r_from.abs());
        let closed = error_at_switch_closed(&cp, &from, &to, mu_from, mu_to);
        worst_error = worst_error.max((closed - sw.e_at_switch).abs() / closed);
        checked += 1;
    }
    let pass = checked == SWITCH_PAIRS && worst_rate <= SWITCH_REL_TOL;
    outcome(
        pass,
        format!(
            "{checked} unclamped pairs ({attempts} drawn): max rel decay-rate mismatch = {worst_rate:.1e} (<= {SWITCH_REL_TOL:e}); switch error vs closed form max rel = {worst_error:.1e}"
        ),
    )
}

fn theory_sweep() -> Outcome {
    let cfg = TheorySweepConfig::default();
    let table = run_theory_sweep(&cfg).expect("sweep");
    let ok = table.rows.iter().filter(|r| r.is_ok()).count();
    let max_ratio = table
        .rows
        .iter()
        .map(|r| r.runtime_ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_overhead = table.rows.iter().map(|r| r.comm_overhead).fold(f64::INFINITY, f64::min);
    let best = table.max_gain().expect("at least one point");
    let corner_min = table
        .rows
        .iter()
        .filter(|r| r.j <= GAIN_CORNER.0 && r.i >= GAIN_CORNER.1)
        .map(|r| r.comp_reduction)
        .fold(f64::INFINITY, f64::min);
    let pass = ok == table.rows.len()
        && max_ratio <= 1.0 + RATIO_SLACK
        && min_overhead >= -RATIO_SLACK
        && (OVERHEAD_BAND.0..=OVERHEAD_BAND.1).contains(&best.comm_overhead)
        && corner_min > 0.0;
    outcome(
        pass,
        format!(
            "{ok}/{} points planned; max runtime ratio {max_ratio:.6}; min comm overhead {min_overhead:.2e}; best cell (λ={}, t_x={}) ratio {:.3}, overhead {:.1}% (band {:.0}-{:.0}%); min comp reduction in the small-t_x/large-λ corner {corner_min:.2e}",
            table.rows.len(),
            best.comp_rate,
            best.comm_shift,
            best.runtime_ratio,
            100.0 * best.comm_overhead,
            100.0 * OVERHEAD_BAND.0,
            100.0 * OVERHEAD_BAND.1,
        ),
    )
}

fn in_band(x: f64, band: (f64, f64)) -> bool {
    x >= band.0 && x <= band.1
}

fn simulation() -> Outcome {
    let cfg = SimulateConfig::default();
    let report = run_simulation_experiment(&cfg, SEED_SIMULATION).expect("simulation");
    let regime = &report.regimes[0];
    let Some(c) = regime.comparison(&Strategy::AdaptiveKBeta, SIM_LEVEL) else {
        return outcome(false, "no comparison at the target level".into());
    };
    let pass = in_band(c.runtime_ratio, SIM_RUNTIME_BAND)
        && in_band(c.comp_reduction, SIM_COMP_BAND)
        && in_band(c.comm_increase, SIM_COMM_BAND);
    outcome(
        pass,
        format!(
            "{} runs, level {SIM_LEVEL}: runtime ratio {:.3} (band {:?}), comp reduction {:.1}% (band {:.1}-{:.1}%), comm increase {:.1}% (band {:.1}-{:.1}%)",
            cfg.runs,
            c.runtime_ratio,
            SIM_RUNTIME_BAND,
            100.0 * c.comp_reduction,
            100.0 * SIM_COMP_BAND.0,
            100.0 * SIM_COMP_BAND.1,
            100.0 * c.comm_increase,
            100.0 * SIM_COMM_BAND.0,
            100.0 * SIM_COMM_BAND.1,
        ),
    )
}

fn regimes() -> Outcome {
    let regime = |name: &str, comp_rate: f64, comm_rate: f64| Regime {
        name: name.into(),
        model: DelayModel::generalized(comp_rate, 0.0, comm_rate, 0.01).unwrap(),
    };
    let cfg = SimulateConfig {
        regimes: vec![
            regime("slow_compute", 1.0, 100.0),
            regime("mixed", 20.0, 5.0 / 3.0),
            regime("slow_comm", 100.0, 1.0),
        ],
        ..SimulateConfig::default()
    };
    let report = run_simulation_experiment(&cfg, SEED_SIMULATION).expect("simulation");
    let mut pass = true;
    let mut parts = Vec::new();
    for (r, want) in report.regimes.iter().zip(["clear", "notable", "none"]) {
        let Some(c) = r.comparison(&Strategy::AdaptiveKBeta, SIM_LEVEL) else {
            pass = false;
            parts.push(format!("{}: level not reached", r.name));
            continue;
        };
        let gain_ok = match want {
            "clear" => c.runtime_ratio <= CLEAR_GAIN,
            "notable" => c.runtime_ratio <= NOTABLE_GAIN,
            _ => in_band(c.runtime_ratio, NO_GAIN_BAND),
        };
        let costs_ok = c.comp_reduction > 0.0 && c.comm_increase > 0.0;
        pass &= gain_ok && costs_ok;
        parts.push(format!(
            "{} ({want} gain) ratio {:.3} [{}], comp -{:.1}% comm +{:.1}% [{}]",
            r.name,
            c.runtime_ratio,
            if gain_ok { "ok" } else { "miss" },
            100.0 * c.comp_reduction,
            100.0 * c.comm_increase,
            if costs_ok { "ok" } else { "miss" },
        ));
    }
    outcome(pass, parts.join("; "))
}

fn properties() -> Outcome {
    let mut rng = substream(SEED_PROPERTIES, &[7]);
    let mut failures = Vec::new();

    // error bound: monotone toward the floor, exact inversion
    let mut worst_trip: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..200 {
        let c = rng.random_range(0.05..1.0);
        let cp = ConvergenceParams::new(rng.random_range(0.01..0.9) / c, c * 2.0, 5.0, c, 1.0).unwrap();
        let s = rng.random_range(10..=200);
        let stage = StageParams::new(1, 4, BatchScale::new(rng.random_range(1..=s), s).unwrap()).unwrap();
        let floor = error_floor(&cp, &stage);
        let e0 = floor * log_uniform(&mut rng, 1.5, 1e4);
        let mut prev = e0;
        for j in 1..50 {
            let e = error_bound(&cp, &stage, j as f64, e0);
            // strict while the gap to the floor is still resolvable
            let strict = prev - floor > 1e-12 * floor;
            monotone &= e >= floor && if strict { e < prev } else { e <= prev };
            prev = e;
        }
        let j = rng.random_range(0.5..200.0);
        let e = error_bound(&cp, &stage, j, e0);
        if e - floor > 1e-6 * floor {
            let back = iterations_to_error(&cp, &stage, e0, e).unwrap();
            worst_trip = worst_trip.max((back - j).abs() / j);
        }
    }
    if !monotone || worst_trip > ROUND_TRIP_TOL {
        failures.push(format!("bound (monotone {monotone}, round trip {worst_trip:.1e})"));
    }

    let data = generate_dataset(400, 10, 100, 10, 5).unwrap();
    let optimum = optimal_loss(&data).unwrap();
    let model = DelayModel::simplified(1.0, 0.0, 0.01).unwrap();
    let mut planner = PlannerOptions::new(20, 20);
    planner.grid = BetaGrid::new(20, 4, 4).unwrap();
    planner.k_cap = 10;
    let settings = SimSettings {
        eta: 0.2 / optimum.curvature().1,
        planner,
        diagnostic: DiagnosticConfig::default(),
        stop: StopRule {
            target_error: None,
            max_time: Some(20.0),
            max_iterations: 100_000,
        },
        record_every: 1,
        divergence_factor: 1e6,
    };
    let partition = Partition::new(400, 20).unwrap();
    let ctx = SimContext {
        data: &data,
        optimum: &optimum,
        partition,
        model: &model,
        settings: &settings,
    };

    // determinism per seed
    let a = simulate_run(&ctx, Strategy::AdaptiveKBeta, 0, 99).unwrap();
    let b = simulate_run(&ctx, Strategy::AdaptiveKBeta, 0, 99).unwrap();
    let c = simulate_run(&ctx, Strategy::AdaptiveKBeta, 0, 100).unwrap();
    let deterministic = a == b && a != c;
    if !deterministic {
        failures.push("determinism".into());
    }

    // unbiased fastest-k aggregation at fixed w
    let w: Vec<f64> = (0..10).map(|i| 0.01 * i as f64 - 0.03).collect();
    let all: Vec<usize> = (0..data.len()).collect();
    let full = minibatch_gradient(&w, &data, &all).unwrap();
    let stage = stage_at(7, 20, 0.2, 20).unwrap();
    let mut sum = [0.0; 10];
    let mut sum_sq = [0.0; 10];
    let mut times = Vec::new();
    let mut g = vec![0.0; 10];
    for it in 0..UNBIASED_ITERATIONS {
        fastest_k_step(&ctx, &stage, &w, 4242, it, &mut times, &mut g).unwrap();
        for d in 0..10 {
            sum[d] += g[d];
            sum_sq[d] += g[d] * g[d];
        }
    }
    let m = UNBIASED_ITERATIONS as f64;
    let worst_z = (0..10)
        .map(|d| {
            let mean = sum[d] / m;
            let var = (sum_sq[d] / m - mean * mean) * m / (m - 1.0);
            ((mean - full[d]) / (var / m).sqrt()).abs()
        })
        .fold(0.0, f64::max);
    if worst_z > UNBIASED_Z_MAX {
        failures.push(format!("unbiasedness (max |z| {worst_z:.2})"));
    }

    // gradient against central differences of the full loss
    let mut worst_fd: f64 = 0.0;
    for _ in 0..5 {
        let w: Vec<f64> = (0..10).map(|_| rng.random_range(-0.1..0.1)).collect();
        let grad = minibatch_gradient(&w, &data, &all).unwrap();
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        for d in 0..10 {
            let h = 1e-4;
            let (mut up, mut down) = (w.clone(), w.clone());
            up[d] += h;
            down[d] -= h;
            let fd = (data.loss(&up) - data.loss(&down)) / (2.0 * h);
            worst_fd = worst_fd.max((fd - grad[d]).abs() / norm);
        }
    }
    if worst_fd > FD_REL_TOL {
        failures.push(format!("finite differences ({worst_fd:.1e})"));
    }

    // one worker, fixed stage: identical to a plain SGD loop
    let single = Partition::new(40, 1).unwrap();
    let small = generate_dataset(40, 10, 100, 10, 6).unwrap();
    let small_opt = optimal_loss(&small).unwrap();
    let mut single_planner = PlannerOptions::new(1, 40);
    single_planner.grid = BetaGrid::unit(40);
    let single_settings = SimSettings {
        eta: 0.2 / small_opt.curvature().1,
        planner: single_planner,
        stop: StopRule {
            target_error: None,
            max_time: None,
            max_iterations: 500,
        },
        ..settings
    };
    let single_ctx = SimContext {
        data: &small,
        optimum: &small_opt,
        partition: single,
        model: &model,
        settings: &single_settings,
    };
    let seed = 31;
    let run = simulate_run(&single_ctx, Strategy::Fixed { k: 1, beta: 0.25 }, 0, seed).unwrap();
    let mut w_ref = vec![0.0; 10];
    let mut t_ref = 0.0;
    for j in 0..500u64 {
        let idx = worker_batch(seed, j, 0, &single, 10);
        let g = minibatch_gradient(&w_ref, &small, &idx).unwrap();
        for (wi, gi) in w_ref.iter_mut().zip(&g) {
            *wi -= single_settings.eta * gi;
        }
        let mut delay = substream(seed, &[j, 0, PURPOSE_DELAY]);
        t_ref += straggler_lab::delay_models::sample_response(&model, 0.25, &mut delay).unwrap();
    }
    let bitwise = run.final_w.iter().zip(&w_ref).all(|(a, b)| a.to_bits() == b.to_bits())
        && run.trajectory.last().unwrap().t.to_bits() == t_ref.to_bits();
    if !bitwise {
        failures.push("single-worker replay".into());
    }

    outcome(
        failures.is_empty(),
        format!(
            "bound monotone {monotone}, round trip max rel {worst_trip:.1e}; determinism {deterministic}; aggregated gradient max |z| {worst_z:.2} over {UNBIASED_ITERATIONS} iterations; finite differences max rel {worst_fd:.1e}; single-worker bitwise replay {bitwise}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failures.join(", "))
            }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        (1, "order statistics", order_statistics as fn() -> Outcome),
        (2, "batch-scale optimizer", beta_optimizer),
        (3, "switching times", switching_consistency),
        (4, "theory sweep", theory_sweep),
        (5, "simulation", simulation),
        (6, "delay regimes", regimes),
        (7, "properties", properties),
    ];
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let o = check();
        let expected_fail = EXPECTED_FAIL.contains(&id);
        let status = match (o.pass, expected_fail) {
            (true, false) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
            (true, true) => {
                unexpected += 1;
                "XPASS"
            }
        };
        println!(
            "criterion {id} [{name}]: {status} ({:.1}s) {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria did not match their expected status");
        ExitCode::FAILURE
    }
}
