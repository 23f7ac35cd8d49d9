//! Acceptance criteria, one PASS/FAIL line each. Runs with its own harness so
//! the lines show up in plain `cargo test` output.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use homeopt::bundle::Bundle;
use homeopt::config::{RunConfig, Scenario};
use homeopt::pipeline;
use homeopt_core::behavior::{Action, StateClassification};
use homeopt_core::gng::{gng_train, GngParams, Metric};
use homeopt_core::planner::{
    online_update, policy_iteration, MdpPlanner, RewardVector, TransitionModel, STOCHASTIC_TOLERANCE,
};
use homeopt_core::sim::{simulate_states, Planner, RunSummary, SlotMetrics};
use homeopt_core::trace::split_train_test;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 gng recovers three blobs", gng_blobs),
        ("2 policy iteration matches value iteration", policy_oracle),
        ("3 hand-solved two-state fixture", hand_solved),
        ("4 rows stay stochastic under online updates", stochastic_under_fire),
        ("5 strict clash rate declines", clash_decline),
        ("6 planned power reduction", power_reduction),
        ("7 strict states never overridden", strict_fidelity),
        ("8 end-to-end runs are byte-identical", determinism),
        ("9 dataset-scale cluster counts", dataset_scale),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {name}: {} ({:.1?})", o.detail, start.elapsed());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// 1

const CENTERS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
const SIGMA: f64 = 0.02; // centers are 50 sigma apart

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gng_blobs() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let data: Vec<Vec<f64>> = CENTERS
            .iter()
            .flat_map(|c| (0..300).map(|_| vec![c[0] + SIGMA * gaussian(&mut rng), c[1] + SIGMA * gaussian(&mut rng)]).collect::<Vec<_>>())
            .collect();
        let params = GngParams {
            max_nodes: 100,
            max_edge_age: 50,
            alpha: 0.5,
            error_decay: 0.995,
            eps_winner: 0.05,
            eps_neighbor: 0.006,
            insertion_interval: 20,
            epochs: 150,
            start_nodes: 6,
            metric: Metric::Euclidean,
            seed,
        };
        let g = gng_train(&data, &params).expect("training succeeds");
        hits += usize::from(g.component_count == 3);
    }
    let elapsed = start.elapsed();
    outcome(
        hits >= 19 && elapsed < Duration::from_secs(30),
        format!("{hits}/20 seeds give 3 components in {elapsed:.1?} (need >= 19 within 30 s)"),
    )
}

// ---------------------------------------------------------------------------
// 2

fn random_model(rng: &mut ChaCha8Rng, m: usize) -> TransitionModel {
    let rows = (0..m)
        .map(|_| {
            let mut row = || {
                let w: Vec<f64> = (0..m)
                    .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
                    .collect();
                let sum: f64 = w.iter().sum();
                if sum == 0.0 {
                    let mut one = vec![0.0; m];
                    one[rng.random_range(0..m)] = 1.0;
                    one
                } else {
                    w.iter().map(|x| x / sum).collect()
                }
            };
            [row(), row()]
        })
        .collect();
    TransitionModel::from_rows(rows).expect("rows are normalized")
}

/// Plain value iteration, independent of the solver under test.
fn value_iteration(t: &TransitionModel, r: &[f64], gamma: f64, tol: f64) -> Vec<f64> {
    let m = r.len();
    let mut u = vec![0.0; m];
    loop {
        let next: Vec<f64> = (0..m)
            .map(|s| {
                let q = |a| t.row(s, a).iter().zip(&u).map(|(p, v)| p * v).sum::<f64>();
                r[s] + gamma * q(Action::Stay).max(q(Action::Move))
            })
            .collect();
        let delta = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next;
        if delta < tol {
            return u;
        }
    }
}

fn policy_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut disagreements = 0;
    let mut compared = 0;
    for _ in 0..100 {
        let m = rng.random_range(1..=10);
        let t = random_model(&mut rng, m);
        let r: Vec<f64> = (0..m).map(|_| -100.0 * rng.random::<f64>()).collect();
        let sol = policy_iteration(&t, &RewardVector(r.clone()), 0.9).expect("solvable");
        let u = value_iteration(&t, &r, 0.9, 1e-10);
        for s in 0..m {
            worst = worst.max((sol.utilities[s] - u[s]).abs());
            let q = |a| t.row(s, a).iter().zip(&u).map(|(p, v)| p * v).sum::<f64>();
            let (qs, qm) = (q(Action::Stay), q(Action::Move));
            if (qs - qm).abs() > 1e-6 {
                compared += 1;
                let best = if qm > qs { Action::Move } else { Action::Stay };
                disagreements += usize::from(sol.policy[s] != best);
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && disagreements == 0 && elapsed < Duration::from_secs(10),
        format!(
            "max |U - U_vi| = {worst:.2e} (<= 1e-6), {disagreements} policy disagreements over {compared} decisive states, {elapsed:.1?} (< 10 s)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3

fn hand_solved() -> Outcome {
    let t = TransitionModel::from_rows(vec![
        [vec![1.0, 0.0], vec![0.0, 1.0]],
        [vec![0.0, 1.0], vec![1.0, 0.0]],
    ])
    .unwrap();
    let sol = policy_iteration(&t, &RewardVector(vec![-10.0, -1.0]), 0.9).unwrap();
    let pass = sol.policy == [Action::Move, Action::Stay]
        && (sol.utilities[0] + 19.0).abs() <= 1e-9
        && (sol.utilities[1] + 10.0).abs() <= 1e-9;
    outcome(
        pass,
        format!(
            "policy {}{}, U = ({:.12}, {:.12}); expected MS, (-19, -10) within 1e-9",
            sol.policy[0].symbol(),
            sol.policy[1].symbol(),
            sol.utilities[0],
            sol.utilities[1]
        ),
    )
}

// ---------------------------------------------------------------------------
// 4

fn stochastic_under_fire() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = 50;
    let mut t = random_model(&mut rng, m);
    let mut strict: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.3)).collect();
    if strict.is_empty() {
        strict.push(0);
    }
    for _ in 0..10_000 {
        let s = rng.random_range(0..m);
        let a = if rng.random_bool(0.5) { Action::Stay } else { Action::Move };
        let rec = rng.random_range(0..m);
        online_update(&mut t, s, a, rec, &strict, 0.1).expect("valid update");
    }
    let mut worst = 0.0f64;
    let mut negatives = 0;
    for s in 0..m {
        for a in Action::ALL {
            let row = t.row(s, a);
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            negatives += row.iter().filter(|&&p| p < 0.0).count();
        }
    }
    outcome(
        worst <= STOCHASTIC_TOLERANCE && negatives == 0,
        format!("max |row sum - 1| = {worst:.2e} (<= 1e-9), {negatives} negative entries"),
    )
}

// ---------------------------------------------------------------------------
// 5-7: full pipeline on the synthetic scenarios

/// Desk-scale clustering settings: the reference node budgets and epoch
/// counts are sized for millions of readings.
fn desk_config(dir: &Path, scenario: Scenario) -> RunConfig {
    let mut c = RunConfig::default();
    c.paths.trace = dir.join("trace.csv");
    c.paths.bundle = dir.join("model");
    c.paths.report = dir.join("report.csv");
    c.synth.scenario = scenario;
    c.synth.length = 200_001;
    c.split.train_fraction = 0.5;
    c.modes.max_nodes = 40;
    c.modes.epochs = 2;
    c.modes.start_nodes = 10;
    c.domain.max_nodes = 120;
    c.domain.epochs = 2;
    c.domain.start_nodes = 10;
    c
}

struct Run {
    slots: Vec<SlotMetrics>,
    summary: RunSummary,
    test_states: Vec<usize>,
    classification: StateClassification,
    powers: Vec<f64>,
    bundle: Bundle,
    config: RunConfig,
}

fn run_scenario(scenario: Scenario) -> Run {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = desk_config(dir.path(), scenario);
    pipeline::synth(&config).expect("synth");
    pipeline::cluster(&config).expect("cluster");
    pipeline::train(&config).expect("train");
    let report = pipeline::simulate(&config).expect("simulate");
    let bundle = Bundle::load(&config.paths.bundle).expect("bundle");
    let trained = bundle.trained.clone().expect("trained");
    let (_, frames) = pipeline::load_frames(&config.paths.trace, &config, Some(&bundle.models.registry)).unwrap();
    let (_, test) = split_train_test(&frames, config.split.train_fraction).unwrap();
    let test_states = bundle.models.assign_frames(test).unwrap();
    Run {
        slots: report.slots,
        summary: report.summary,
        test_states,
        classification: trained.classification,
        powers: bundle.models.domain.state_power.clone(),
        bundle,
        config,
    }
}

fn standard_run() -> &'static Run {
    static RUN: std::sync::OnceLock<Run> = std::sync::OnceLock::new();
    RUN.get_or_init(|| run_scenario(Scenario::Standard))
}

fn clash_decline() -> Outcome {
    let start = Instant::now();
    let run = standard_run();
    let elapsed = start.elapsed();
    let predictions: u64 = run.slots.iter().map(|s| s.readings).sum();
    let first: f64 = run.slots[..10].iter().map(|s| s.strict_clashes as f64).sum::<f64>() / 10.0;
    let last: f64 = run.slots[90..].iter().map(|s| s.strict_clashes as f64).sum::<f64>() / 10.0;
    let pass = run.slots.len() == 100
        && predictions as usize == run.test_states.len() - 1
        && first > 0.0
        && last <= 0.5 * first
        && elapsed < Duration::from_secs(300)
        && (first - run.summary.first_decile_strict_mean).abs() < 1e-12
        && (last - run.summary.last_decile_strict_mean).abs() < 1e-12;
    outcome(
        pass,
        format!(
            "{} slots / {predictions} predictions, strict clashes per slot first 10 = {first:.2}, last 10 = {last:.2}, ratio {:.3} (<= 0.5), {elapsed:.1?} (< 5 min)",
            run.slots.len(),
            last / first
        ),
    )
}

fn power_reduction() -> Outcome {
    let run = run_scenario(Scenario::Wasteful);
    let cls = &run.classification;
    let lld_steps = run.test_states[1..].iter().filter(|s| cls.lld.contains(s)).count();
    let lld_share = lld_steps as f64 / (run.test_states.len() - 1) as f64;
    let actual: f64 = run.slots.iter().map(|s| s.actual_power).sum();
    let planned: f64 = run.slots.iter().map(|s| s.planned_power).sum();
    let worse = run.slots.iter().filter(|s| s.planned_power > s.actual_power).count();
    let pass = lld_share >= 0.4 && planned <= 0.8 * actual && worse == 0;
    outcome(
        pass,
        format!(
            "LLD share of test steps {lld_share:.3} (>= 0.4), planned/actual {:.3} (<= 0.8), {worse} slots with planned > actual",
            planned / actual
        ),
    )
}

/// Records every recommendation of the wrapped planner.
struct Recording<'a> {
    inner: &'a mut MdpPlanner,
    recommended: Vec<usize>,
}

impl Planner for Recording<'_> {
    fn recommend(&mut self, step: usize, state: usize) -> homeopt_core::Result<usize> {
        let r = self.inner.recommend(step, state)?;
        self.recommended.push(r);
        Ok(r)
    }

    fn on_strict_clash(&mut self, state: usize, recommended: usize, actual: usize) -> homeopt_core::Result<bool> {
        self.inner.on_strict_clash(state, recommended, actual)
    }

    fn replan(&mut self) -> homeopt_core::Result<()> {
        self.inner.replan()
    }
}

fn strict_fidelity() -> Outcome {
    let run = standard_run();
    let reported: u64 = run.slots.iter().map(|s| s.strict_substitutions).sum();

    // Replay again while recording recommendations, then recompute the
    // planned power with strict steps pinned to their own power.
    let trained = run.bundle.trained.as_ref().unwrap();
    let mut planner = MdpPlanner::with_solution(
        trained.transitions.clone(),
        run.powers.clone(),
        trained.classification.strict_states(),
        run.config.planner,
        trained.policy.clone(),
    )
    .unwrap();
    let mut rec = Recording {
        inner: &mut planner,
        recommended: Vec::new(),
    };
    let replay = simulate_states(&run.test_states, &run.powers, &run.classification, &mut rec, &run.config.sim_config()).unwrap();
    let slot = run.config.sim.slot_size;
    let mut expected = vec![0.0; replay.len()];
    let mut tempting = 0;
    for (t, &r) in rec.recommended.iter().enumerate() {
        let actual = run.test_states[t + 1];
        let own = run.powers[actual];
        let strict = run.classification.shd.contains(&actual) || run.classification.sld.contains(&actual);
        if strict && run.powers[r] < own {
            tempting += 1;
        }
        expected[t / slot] += if strict { own } else { own.min(run.powers[r]) };
    }
    let mismatched = replay
        .iter()
        .zip(&run.slots)
        .zip(&expected)
        .filter(|((a, b), e)| {
            (a.planned_power - **e).abs() > 1e-6 * e.max(1.0) || (b.planned_power - **e).abs() > 1e-6 * e.max(1.0)
        })
        .count();
    outcome(
        reported == 0 && mismatched == 0,
        format!(
            "{reported} substitutions at SHD/SLD steps; {tempting} strict steps had a cheaper recommendation; {mismatched} slots differ from the independent recomputation"
        ),
    )
}

// ---------------------------------------------------------------------------
// 8

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_homeopt");
    let flags = [
        "--seed",
        "7",
        "--synth.length",
        "30000",
        "--split.train_fraction",
        "0.5",
        "--modes.max_nodes",
        "40",
        "--modes.epochs",
        "2",
        "--modes.start_nodes",
        "10",
        "--domain.max_nodes",
        "120",
        "--domain.epochs",
        "2",
        "--domain.start_nodes",
        "10",
        "--paths.trace",
        "data/trace.csv",
        "--paths.bundle",
        "model",
        "--paths.report",
        "out/report.csv",
    ];
    let mut reports = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().expect("temp dir");
        for cmd in ["synth", "cluster", "train", "simulate"] {
            let out = Command::new(bin).current_dir(dir.path()).arg(cmd).args(flags).output().expect("spawn");
            if !out.status.success() {
                return outcome(false, format!("`{cmd}` failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
        }
        let csv = std::fs::read(dir.path().join("out/report.csv")).unwrap();
        let json = std::fs::read(dir.path().join("out/report.json")).unwrap();
        reports.push((csv, json));
    }
    let same = reports[0] == reports[1];
    outcome(
        same && !reports[0].0.is_empty(),
        format!(
            "CSV {} bytes, JSON {} bytes, identical across runs: {same}",
            reports[0].0.len(),
            reports[0].1.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 9

/// Only runs when `HOMEOPT_DATASET` points at a trace in the CSV schema;
/// `HOMEOPT_DATASET_CONFIG` may supply a TOML run configuration.
fn dataset_scale() -> Outcome {
    let Ok(trace) = std::env::var("HOMEOPT_DATASET") else {
        return outcome(true, "skipped: set HOMEOPT_DATASET to a home trace to run".into());
    };
    let dir = tempfile::tempdir().expect("temp dir");
    let file = std::env::var("HOMEOPT_DATASET_CONFIG").ok();
    let mut config = match RunConfig::load(file.as_deref().map(Path::new), &[], None) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("config: {e}")),
    };
    config.paths.trace = trace.into();
    config.paths.bundle = dir.path().join("model");
    let c = match pipeline::cluster(&config) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("cluster: {e}")),
    };
    let mean_modes = c.modes.iter().map(|(_, m)| *m as f64).sum::<f64>() / c.modes.len() as f64;
    let states_ok = [263.0, 242.0, 240.0].iter().any(|&p| (c.states as f64) >= p / 2.0 && (c.states as f64) <= p * 2.0);
    outcome(
        (2.0..=5.0).contains(&mean_modes) && states_ok,
        format!(
            "mean modes per device {mean_modes:.2} (in [2, 5]), {} domain states (within x2 of 263/242/240)",
            c.states
        ),
    )
}
