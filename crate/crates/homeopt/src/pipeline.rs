//! The subcommands as library functions: synth, cluster, train, simulate, report.

use std::path::Path;

use homeopt_core::behavior::{classify_states, joint_transition_counts, label_actions, simulate_actuations, visit_counts};
use homeopt_core::planner::{estimate_transition_model, policy_iteration, MdpPlanner, RewardVector};
use homeopt_core::sim::{simulate_states, RunSummary, SlotMetrics};
use homeopt_core::states::{fit_device_mode, fit_domain_states, StateModels};
use homeopt_core::synth::{generate_synthetic_trace, standard_scenario, wasteful_scenario};
use homeopt_core::trace::{align_frames, split_train_test, AlignedFrame, DeviceRegistry, Reading};
use rayon::prelude::*;

use crate::bundle::{Bundle, Trained};
use crate::config::{RunConfig, Scenario};
use crate::error::{Error, Result};
use crate::report::{self, Report};
use crate::trace_io;

pub struct SynthOutcome {
    pub frames: usize,
    pub readings: usize,
}

/// Writes the configured synthetic scenario to `paths.trace`.
pub fn synth(config: &RunConfig) -> Result<SynthOutcome> {
    let seed = config.seeds().synth;
    let length = config.synth.length;
    let spec = match config.synth.scenario {
        Scenario::Standard => standard_scenario(length, seed),
        Scenario::Wasteful => wasteful_scenario(length, seed),
    };
    let trace = generate_synthetic_trace(&spec)?;
    ensure_parent(&config.paths.trace)?;
    trace_io::save_trace(&config.paths.trace, &trace.readings)?;
    Ok(SynthOutcome {
        frames: trace.modes.len(),
        readings: trace.readings.len(),
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn read_readings(path: &Path, config: &RunConfig) -> Result<Vec<Reading>> {
    let (readings, report) = trace_io::read_trace(path, &config.schema)?;
    if report.skipped > 0 {
        log::warn!(
            "{}: skipped {} of {} rows (first at line {})",
            path.display(),
            report.skipped,
            report.rows,
            report.skipped_rows[0]
        );
    }
    if readings.is_empty() {
        return Err(homeopt_core::Error::EmptyTrace.into());
    }
    Ok(readings)
}

/// Aligned frames of the configured trace over `registry`, or over every
/// device in the trace when no registry is given.
pub fn load_frames(path: &Path, config: &RunConfig, registry: Option<&DeviceRegistry>) -> Result<(DeviceRegistry, Vec<AlignedFrame>)> {
    let readings = read_readings(path, config)?;
    let registry = registry.cloned().unwrap_or_else(|| DeviceRegistry::from_readings(&readings));
    let frames = align_frames(&readings, &registry)?;
    log::info!("{}: {} readings, {} devices, {} frames", path.display(), readings.len(), registry.len(), frames.len());
    Ok((registry, frames))
}

pub struct ClusterOutcome {
    pub modes: Vec<(String, usize)>,
    pub states: usize,
}

/// Fits both clustering levels on the training split and writes a fresh bundle.
pub fn cluster(config: &RunConfig) -> Result<ClusterOutcome> {
    let (registry, frames) = load_frames(&config.paths.trace, config, None)?;
    let (train, _) = split_train_test(&frames, config.split.train_fraction)?;
    let mode_params = config.mode_params();
    // per-device models are independent; collect keeps registry order
    let modes = (0..registry.len())
        .into_par_iter()
        .map(|i| fit_device_mode(train, &registry, i, &mode_params).map_err(|e| homeopt_core::Error::Device {
            device: registry.0[i].clone(),
            source: Box::new(e),
        }))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let domain = fit_domain_states(train, &modes, &config.domain_params(), config.encoding)?;
    let models = StateModels { registry, modes, domain };
    let outcome = ClusterOutcome {
        modes: models.modes.iter().map(|m| (m.device_id.clone(), m.mode_count)).collect(),
        states: models.state_count(),
    };
    Bundle::new(models, config).save(&config.paths.bundle)?;
    Ok(outcome)
}

pub struct TrainOutcome {
    pub states: usize,
    pub strict: usize,
    pub iterations: usize,
}

/// Adds behavior statistics, the transition model and a solved policy to a
/// clustered bundle.
pub fn train(config: &RunConfig) -> Result<TrainOutcome> {
    let dir = &config.paths.bundle;
    let mut bundle = Bundle::load(dir)?;
    let seeds = config.seeds();
    let (_, frames) = load_frames(&config.paths.trace, config, Some(&bundle.models.registry))?;
    let (train, _) = split_train_test(&frames, config.split.train_fraction)?;
    let states = bundle.models.assign_frames(train)?;
    let m = bundle.models.state_count();

    let actions = label_actions(&states)?;
    let actuations = simulate_actuations(&actions, config.behavior.flip_fraction, seeds.actuations)?;
    let classification = classify_states(&visit_counts(&states, m), config.behavior.classification(), seeds.classification)?;
    let counts = joint_transition_counts(&states, &actions, &actuations)?;
    let transitions = estimate_transition_model(&counts, m, config.planner.smoothing);
    let rewards = RewardVector::from_powers(&bundle.models.domain.state_power);
    let policy = policy_iteration(&transitions, &rewards, config.planner.gamma)?;

    let outcome = TrainOutcome {
        states: m,
        strict: classification.strict_states().len(),
        iterations: policy.iterations,
    };
    bundle.set_trained(
        Trained {
            classification,
            counts,
            transitions,
            rewards,
            policy,
        },
        config,
    );
    bundle.save(dir)?;
    Ok(outcome)
}

/// Replays the held-out frames (or `paths.test_trace`) against the trained
/// planner and writes the CSV and JSON reports.
pub fn simulate(config: &RunConfig) -> Result<Report> {
    let dir = &config.paths.bundle;
    let bundle = Bundle::load(dir)?;
    let trained = bundle.trained(dir)?;
    let registry = &bundle.models.registry;
    let frames = match &config.paths.test_trace {
        Some(path) => load_frames(path, config, Some(registry))?.1,
        None => {
            let (_, frames) = load_frames(&config.paths.trace, config, Some(registry))?;
            let (_, test) = split_train_test(&frames, config.split.train_fraction)?;
            test.to_vec()
        }
    };
    let states = bundle.models.assign_frames(&frames)?;
    let powers = bundle.models.domain.state_power.clone();
    let mut planner = MdpPlanner::with_solution(
        trained.transitions.clone(),
        powers.clone(),
        trained.classification.strict_states(),
        config.planner,
        trained.policy.clone(),
    )?;
    let slots = simulate_states(&states, &powers, &trained.classification, &mut planner, &config.sim_config())?;
    if planner.skipped_updates > 0 {
        log::warn!("{} clashes left the model unchanged: no strict states", planner.skipped_updates);
    }
    let report = Report::new(config, slots)?;
    write_report(&config.paths.report, &report)?;
    Ok(report)
}

fn write_report(csv_path: &Path, report: &Report) -> Result<()> {
    ensure_parent(csv_path)?;
    report::save_csv(csv_path, &report.slots)?;
    report::save_json(&csv_path.with_extension("json"), report)
}

/// Re-emits the CSV of a saved JSON report to `paths.report`.
pub fn rewrite_report(json: &Path, config: &RunConfig) -> Result<Report> {
    let report = report::load_json(json)?;
    ensure_parent(&config.paths.report)?;
    report::save_csv(&config.paths.report, &report.slots)?;
    Ok(report)
}

pub fn summary_lines(summary: &RunSummary, slots: &[SlotMetrics]) -> Vec<String> {
    let strict_subs: u64 = slots.iter().map(|s| s.strict_substitutions).sum();
    vec![
        format!("slots: {}", summary.slots),
        format!(
            "strict clashes per slot: first decile {:.2}, last decile {:.2}",
            summary.first_decile_strict_mean, summary.last_decile_strict_mean
        ),
        format!("actual power: {:.1}", summary.actual_power),
        format!("planned power: {:.1}", summary.planned_power),
        format!("percent saved: {:.2}", summary.percent_saved),
        format!("substitutions at strict states: {strict_subs}"),
    ]
}
