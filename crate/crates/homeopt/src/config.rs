//! Run configuration: TOML file, `--section.key value` overrides, master seed.

use std::path::{Path, PathBuf};

use homeopt_core::behavior::ClassificationParams;
use homeopt_core::gng::{GngParams, Metric};
use homeopt_core::planner::PlannerConfig;
use homeopt_core::seed;
use homeopt_core::sim::SimConfig;
use homeopt_core::states::DomainEncoding;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace_io::Schema;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stochastic step derives its own seed from it.
    pub seed: u64,
    pub paths: Paths,
    pub schema: Schema,
    pub split: Split,
    pub synth: SynthConfig,
    pub modes: GngConfig,
    pub domain: GngConfig,
    /// Embedding of mode vectors for domain-state clustering.
    pub encoding: DomainEncoding,
    pub behavior: BehaviorConfig,
    pub planner: PlannerConfig,
    pub sim: SimSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            paths: Paths::default(),
            schema: Schema::default(),
            split: Split::default(),
            synth: SynthConfig::default(),
            modes: GngConfig::from(GngParams::device_modes()),
            domain: GngParams::domain_states().into(),
            encoding: DomainEncoding::default(),
            behavior: BehaviorConfig::default(),
            planner: PlannerConfig::default(),
            sim: SimSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub trace: PathBuf,
    /// Replay this trace instead of the held-out part of `trace`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_trace: Option<PathBuf>,
    pub bundle: PathBuf,
    /// CSV report; the JSON mirror sits next to it with a `.json` extension.
    pub report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            trace: "trace.csv".into(),
            test_trace: None,
            bundle: "model".into(),
            report: "report.csv".into(),
        }
    }
}

impl Paths {
    pub fn report_json(&self) -> PathBuf {
        self.report.with_extension("json")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Split {
    pub train_fraction: f64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            train_fraction: 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[default]
    Standard,
    Wasteful,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub scenario: Scenario,
    /// Frames to generate; each frame has one reading per device.
    pub length: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scenario: Scenario::Standard,
            length: 300_000,
        }
    }
}

/// [`GngParams`] without the seed, which comes from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GngConfig {
    pub max_nodes: usize,
    pub max_edge_age: u32,
    pub alpha: f64,
    pub error_decay: f64,
    pub eps_winner: f64,
    pub eps_neighbor: f64,
    pub insertion_interval: usize,
    pub epochs: usize,
    pub start_nodes: usize,
    pub metric: Metric,
}

impl From<GngParams> for GngConfig {
    fn from(p: GngParams) -> Self {
        GngConfig {
            max_nodes: p.max_nodes,
            max_edge_age: p.max_edge_age,
            alpha: p.alpha,
            error_decay: p.error_decay,
            eps_winner: p.eps_winner,
            eps_neighbor: p.eps_neighbor,
            insertion_interval: p.insertion_interval,
            epochs: p.epochs,
            start_nodes: p.start_nodes,
            metric: p.metric,
        }
    }
}

impl Default for GngConfig {
    fn default() -> Self {
        GngParams::device_modes().into()
    }
}

impl GngConfig {
    pub fn params(&self, seed: u64) -> GngParams {
        GngParams {
            max_nodes: self.max_nodes,
            max_edge_age: self.max_edge_age,
            alpha: self.alpha,
            error_decay: self.error_decay,
            eps_winner: self.eps_winner,
            eps_neighbor: self.eps_neighbor,
            insertion_interval: self.insertion_interval,
            epochs: self.epochs,
            start_nodes: self.start_nodes,
            metric: self.metric,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    pub flip_fraction: f64,
    pub top: f64,
    pub fix_hd: f64,
    pub fix_ld: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        let c = ClassificationParams::default();
        BehaviorConfig {
            flip_fraction: 0.3,
            top: c.top,
            fix_hd: c.fix_hd,
            fix_ld: c.fix_ld,
        }
    }
}

impl BehaviorConfig {
    pub fn classification(&self) -> ClassificationParams {
        ClassificationParams {
            top: self.top,
            fix_hd: self.fix_hd,
            fix_ld: self.fix_ld,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub slot_size: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection { slot_size: 1000 }
    }
}

/// Seeds of the individual stochastic steps, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub synth: u64,
    pub cluster: u64,
    pub actuations: u64,
    pub classification: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Seeds {
            master,
            synth: seed::derive(master, "synth"),
            cluster: seed::derive(master, "cluster"),
            actuations: seed::derive(master, "actuations"),
            classification: seed::derive(master, "classification"),
        }
    }
}

impl RunConfig {
    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.seed)
    }

    pub fn mode_params(&self) -> GngParams {
        self.modes.params(self.seeds().cluster)
    }

    pub fn domain_params(&self) -> GngParams {
        self.domain.params(self.seeds().cluster)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            slot_size: self.sim.slot_size,
            replan_interval: self.planner.replan_interval,
        }
    }

    /// Reads `file` if given, applies dotted overrides in order, then the
    /// seed flag. Keys left unset keep their defaults section by section.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self> {
        let mut table = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Internal(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let user = text
                .parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut table, user);
        }
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        if let Some(s) = seed {
            let s = i64::try_from(s).map_err(|_| Error::Config(format!("seed {s} exceeds {}", i64::MAX)))?;
            table.insert("seed".into(), toml::Value::Integer(s));
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("split.train_fraction {f} outside (0, 1)")));
        }
        for (name, p) in [("modes", self.mode_params()), ("domain", self.domain_params())] {
            p.validate().map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        let b = &self.behavior;
        for (name, v) in [
            ("behavior.flip_fraction", b.flip_fraction),
            ("behavior.top", b.top),
            ("behavior.fix_hd", b.fix_hd),
            ("behavior.fix_ld", b.fix_ld),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        let p = &self.planner;
        if !(0.0..1.0).contains(&p.gamma) {
            return Err(Error::Config(format!("planner.gamma {} outside [0, 1)", p.gamma)));
        }
        if !(0.0..=1.0).contains(&p.update_factor) {
            return Err(Error::Config(format!("planner.update_factor {} outside [0, 1]", p.update_factor)));
        }
        if !(p.smoothing >= 0.0 && p.smoothing.is_finite()) {
            return Err(Error::Config(format!("planner.smoothing {} must be finite and non-negative", p.smoothing)));
        }
        if p.replan_interval == 0 || self.sim.slot_size == 0 {
            return Err(Error::Config("planner.replan_interval and sim.slot_size must be positive".into()));
        }
        if self.synth.length < 2 {
            return Err(Error::Config("synth.length must be at least 2".into()));
        }
        Ok(())
    }
}

/// Sets `a.b.c = value`. The value is read as a TOML literal when it parses
/// as one and as a bare string otherwise, so `--paths.trace data.csv` works
/// without quotes.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cursor = table;
    for p in parents {
        let entry = cursor
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("{key}: {p} is not a section"))),
        };
    }
    cursor.insert(last.to_string(), parse_literal(value));
    Ok(())
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_literal(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_settings() {
        let c = RunConfig::default();
        assert_eq!(c.modes.max_nodes, 10_000);
        assert_eq!(c.modes.max_edge_age, 100);
        assert_eq!(c.domain.max_nodes, 20_000);
        assert_eq!(c.domain.error_decay, 0.9);
        assert_eq!(c.modes.epochs, 150);
        assert_eq!(c.modes.start_nodes, 1000);
        assert_eq!(c.planner.gamma, 0.9);
        assert_eq!(c.planner.update_factor, 0.1);
        assert_eq!(c.behavior.flip_fraction, 0.3);
        assert_eq!(c.behavior.top, 0.22);
        assert_eq!(c.sim.slot_size, 1000);
    }

    #[test]
    fn dotted_overrides() {
        let ov = vec![
            ("planner.gamma".to_string(), "0.8".to_string()),
            ("paths.trace".to_string(), "x/y.csv".to_string()),
            ("encoding".to_string(), "one-hot".to_string()),
            ("modes.max_nodes".to_string(), "25".to_string()),
            ("modes.start_nodes".to_string(), "5".to_string()),
        ];
        let c = RunConfig::load(None, &ov, Some(7)).unwrap();
        assert_eq!(c.planner.gamma, 0.8);
        assert_eq!(c.paths.trace, PathBuf::from("x/y.csv"));
        assert_eq!(c.encoding, DomainEncoding::OneHot);
        assert_eq!(c.modes.max_nodes, 25);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let ov = vec![("planner.gama".to_string(), "0.8".to_string())];
        let e = RunConfig::load(None, &ov, None).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let ov = vec![("planner.gamma".to_string(), "1.5".to_string())];
        assert_eq!(RunConfig::load(None, &ov, None).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn partial_sections_keep_their_own_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[domain]\nmax_nodes = 50\nstart_nodes = 5\n[modes]\nmax_nodes = 20\nstart_nodes = 5\n").unwrap();
        let c = RunConfig::load(Some(&path), &[], None).unwrap();
        assert_eq!(c.domain.max_nodes, 50);
        assert_eq!(c.domain.max_edge_age, 50);
        assert_eq!(c.modes.max_edge_age, 100);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.paths.test_trace = Some("t.csv".into());
        c.schema.header = Some(true);
        let text = c.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seeds_differ_per_step() {
        let s = Seeds::from_master(1);
        assert_ne!(s.synth, s.cluster);
        assert_ne!(s.actuations, s.classification);
        assert_eq!(s, Seeds::from_master(1));
    }
}
