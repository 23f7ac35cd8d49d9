//! Replay of a live state stream against a planner, scored per time slot.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::behavior::{DemandClass, StateClassification};
use crate::states::StateModels;
use crate::trace::AlignedFrame;
use crate::{Error, Result};

/// Something that recommends the next domain state and may learn from clashes.
pub trait Planner {
    /// Recommended next state given the current `state` at replay step `step`.
    fn recommend(&mut self, step: usize, state: usize) -> Result<usize>;

    /// The user moved to strict state `actual` instead of `recommended`.
    /// Returns whether the planner's model changed.
    fn on_strict_clash(&mut self, state: usize, recommended: usize, actual: usize) -> Result<bool>;

    fn replan(&mut self) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Predictions per time slot.
    pub slot_size: usize,
    /// Predictions between planner re-solves.
    pub replan_interval: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slot_size: 1000,
            replan_interval: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: usize,
    pub readings: u64,
    /// Mismatches where the actual state is SHD or SLD.
    pub strict_clashes: u64,
    /// Mismatches where the actual state is LLD.
    pub ld_clashes: u64,
    pub total_clashes: u64,
    /// Sum of occupied-state power over the slot's readings.
    pub actual_power: f64,
    /// Same sum with the planner's recommendation substituted where allowed.
    pub planned_power: f64,
    pub updates: u64,
    #[serde(default)]
    pub substitutions: u64,
    /// Substitutions at strict states; zero unless user authority was overridden.
    #[serde(default)]
    pub strict_substitutions: u64,
}

impl SlotMetrics {
    pub fn validate(&self) -> Result<()> {
        if self.total_clashes < self.strict_clashes + self.ld_clashes {
            return Err(Error::InvalidParams(format!(
                "slot {}: total clashes {} below strict {} + ld {}",
                self.slot, self.total_clashes, self.strict_clashes, self.ld_clashes
            )));
        }
        if self.strict_clashes + self.ld_clashes > self.readings {
            return Err(Error::InvalidParams(format!("slot {}: more clashes than readings", self.slot)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClashKind {
    None,
    Strict,
    LooseLow,
    /// A mismatch on a loose high-demand (or never classified) state.
    Unscored,
}

pub fn clash_kind(recommended: usize, actual: usize, classification: &StateClassification) -> ClashKind {
    if recommended == actual {
        return ClashKind::None;
    }
    match classification.class_of(actual) {
        Some(DemandClass::StrictHigh | DemandClass::StrictLow) => ClashKind::Strict,
        Some(DemandClass::LooseLow) => ClashKind::LooseLow,
        Some(DemandClass::LooseHigh) | None => ClashKind::Unscored,
    }
}

/// Power with the recommendation adopted only at non-strict states and only
/// when it is cheaper.
pub fn planner_adjusted_power(
    actual: usize,
    recommended: usize,
    classification: &StateClassification,
    powers: &[f64],
) -> f64 {
    let own = powers[actual];
    if classification.is_strict(actual) {
        own
    } else {
        own.min(powers[recommended])
    }
}

/// Replays a state sequence: one prediction per consecutive pair.
pub fn simulate_states<P: Planner + ?Sized>(
    states: &[usize],
    powers: &[f64],
    classification: &StateClassification,
    planner: &mut P,
    config: &SimConfig,
) -> Result<Vec<SlotMetrics>> {
    if states.len() < 2 {
        return Err(Error::SequenceTooShort {
            needed: 2,
            found: states.len(),
        });
    }
    if config.slot_size == 0 || config.replan_interval == 0 {
        return Err(Error::InvalidParams("slot_size and replan_interval must be positive".into()));
    }
    if let Some(&s) = states.iter().find(|&&s| s >= powers.len()) {
        return Err(Error::StateOutOfRange {
            state: s,
            count: powers.len(),
        });
    }
    let mut slots: Vec<SlotMetrics> = Vec::new();
    for (t, pair) in states.windows(2).enumerate() {
        if t > 0 && t % config.replan_interval == 0 {
            planner.replan()?;
        }
        let (current, actual) = (pair[0], pair[1]);
        let recommended = planner.recommend(t, current)?;
        if recommended >= powers.len() {
            return Err(Error::StateOutOfRange {
                state: recommended,
                count: powers.len(),
            });
        }
        let slot = t / config.slot_size;
        if slots.len() <= slot {
            slots.push(SlotMetrics {
                slot,
                ..SlotMetrics::default()
            });
        }
        let m = &mut slots[slot];
        m.readings += 1;
        match clash_kind(recommended, actual, classification) {
            ClashKind::None => {}
            ClashKind::Strict => {
                m.strict_clashes += 1;
                m.total_clashes += 1;
                if planner.on_strict_clash(current, recommended, actual)? {
                    m.updates += 1;
                }
            }
            ClashKind::LooseLow => {
                m.ld_clashes += 1;
                m.total_clashes += 1;
            }
            ClashKind::Unscored => m.total_clashes += 1,
        }
        let own = powers[actual];
        let planned = planner_adjusted_power(actual, recommended, classification, powers);
        m.actual_power += own;
        m.planned_power += planned;
        if planned < own {
            m.substitutions += 1;
            if classification.is_strict(actual) {
                m.strict_substitutions += 1;
            }
        }
    }
    Ok(slots)
}

/// Maps each test frame to its domain state, then replays.
pub fn run_simulation<P: Planner + ?Sized>(
    models: &StateModels,
    classification: &StateClassification,
    planner: &mut P,
    frames: &[AlignedFrame],
    config: &SimConfig,
) -> Result<Vec<SlotMetrics>> {
    if frames.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let states = models.assign_frames(frames)?;
    simulate_states(&states, &models.domain.state_power, classification, planner, config)
}

/// Headline numbers of a replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub slots: usize,
    pub first_decile_strict_mean: f64,
    pub last_decile_strict_mean: f64,
    pub actual_power: f64,
    pub planned_power: f64,
    pub percent_saved: f64,
}

impl RunSummary {
    pub fn from_metrics(metrics: &[SlotMetrics]) -> Self {
        let n = metrics.len();
        let decile = (n / 10).max(1).min(n);
        let mean = |slots: &[SlotMetrics]| {
            if slots.is_empty() {
                0.0
            } else {
                slots.iter().map(|m| m.strict_clashes as f64).sum::<f64>() / slots.len() as f64
            }
        };
        let actual: f64 = metrics.iter().map(|m| m.actual_power).sum();
        let planned: f64 = metrics.iter().map(|m| m.planned_power).sum();
        RunSummary {
            slots: n,
            first_decile_strict_mean: mean(&metrics[..decile]),
            last_decile_strict_mean: mean(&metrics[n - decile..]),
            actual_power: actual,
            planned_power: planned,
            percent_saved: if actual > 0.0 { 100.0 * (1.0 - planned / actual) } else { 0.0 },
        }
    }
}
