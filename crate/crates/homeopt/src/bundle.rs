//! Model bundle: a directory of versioned text files.
//!
//! ```text
//! manifest.json         format version, stage, device list, config snapshot
//! modes/NNN.json        one device-mode GNG per registered device
//! domain.json           domain-state GNG with state powers
//! classification.json   SHD/LHD/SLD/LLD sets and visit counts
//! counts.txt            sparse joint counts: from to actuation action count
//! transitions.txt       sparse T: state action next probability
//! rewards.txt           state reward
//! policy.json           policy, utilities and solver metadata
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use homeopt_core::behavior::{Action, Actuation, JointTransitionCounts, StateClassification};
use homeopt_core::planner::{PolicySolution, RewardVector, TransitionModel};
use homeopt_core::states::{DomainStateModel, ModeModel, StateModels};
use homeopt_core::trace::DeviceRegistry;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const DOMAIN: &str = "domain.json";
const CLASSIFICATION: &str = "classification.json";
const COUNTS: &str = "counts.txt";
const TRANSITIONS: &str = "transitions.txt";
const REWARDS: &str = "rewards.txt";
const POLICY: &str = "policy.json";
const TRAINED_FILES: [&str; 5] = [CLASSIFICATION, COUNTS, TRANSITIONS, REWARDS, POLICY];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Clustered,
    Trained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub id: String,
    pub file: String,
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub generator: String,
    pub stage: Stage,
    pub devices: Vec<DeviceEntry>,
    pub state_count: usize,
    pub config: RunConfig,
}

/// Everything `train` adds to a clustered bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub classification: StateClassification,
    pub counts: JointTransitionCounts,
    pub transitions: TransitionModel,
    pub rewards: RewardVector,
    pub policy: PolicySolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub models: StateModels,
    pub trained: Option<Trained>,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn to_json<T: Serialize>(value: &T, name: &str) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(format!("{name}: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn read_text(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::bundle(&path, e))
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let text = read_text(dir, name)?;
    serde_json::from_str(&text).map_err(|e| Error::bundle(dir.join(name), e))
}

impl Bundle {
    pub fn new(models: StateModels, config: &RunConfig) -> Self {
        let devices = models
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| DeviceEntry {
                id: m.device_id.clone(),
                file: format!("modes/{i:03}.json"),
                modes: m.mode_count,
            })
            .collect();
        Bundle {
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                generator: concat!("homeopt ", env!("CARGO_PKG_VERSION")).into(),
                stage: Stage::Clustered,
                devices,
                state_count: models.state_count(),
                config: config.clone(),
            },
            models,
            trained: None,
        }
    }

    pub fn set_trained(&mut self, trained: Trained, config: &RunConfig) {
        self.manifest.stage = Stage::Trained;
        self.manifest.config = config.clone();
        self.trained = Some(trained);
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("modes")).map_err(|e| Error::io(dir, e))?;
        for (entry, model) in self.manifest.devices.iter().zip(&self.models.modes) {
            write_file(dir, &entry.file, &to_json(model, &entry.file)?)?;
        }
        write_file(dir, DOMAIN, &to_json(&self.models.domain, DOMAIN)?)?;
        match &self.trained {
            Some(t) => {
                write_file(dir, CLASSIFICATION, &to_json(&t.classification, CLASSIFICATION)?)?;
                write_file(dir, COUNTS, &counts_text(&t.counts))?;
                write_file(dir, TRANSITIONS, &transitions_text(&t.transitions))?;
                write_file(dir, REWARDS, &rewards_text(&t.rewards))?;
                write_file(dir, POLICY, &to_json(&t.policy, POLICY)?)?;
            }
            None => {
                // a re-clustered bundle must not keep a stale planner
                for name in TRAINED_FILES {
                    let path = dir.join(name);
                    if path.exists() {
                        fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                    }
                }
            }
        }
        // manifest last, so an interrupted save is never mistaken for a complete one
        write_file(dir, MANIFEST, &to_json(&self.manifest, MANIFEST)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        let text = read_text(dir, MANIFEST)?;
        let header: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::bundle(&manifest_path, e))?;
        let version = header
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::bundle(&manifest_path, "missing format_version"))?;
        if version > u64::from(FORMAT_VERSION) {
            return Err(Error::bundle(
                &manifest_path,
                format!("format version {version} is newer than supported version {FORMAT_VERSION}"),
            ));
        }
        let manifest: Manifest = serde_json::from_value(header).map_err(|e| Error::bundle(&manifest_path, e))?;

        let mut modes = Vec::with_capacity(manifest.devices.len());
        for entry in &manifest.devices {
            let model: ModeModel = read_json(dir, &entry.file)?;
            if model.device_id != entry.id {
                return Err(Error::bundle(
                    dir.join(&entry.file),
                    format!("holds device {:?}, manifest expects {:?}", model.device_id, entry.id),
                ));
            }
            modes.push(model);
        }
        let domain: DomainStateModel = read_json(dir, DOMAIN)?;
        if domain.state_count != manifest.state_count || domain.state_power.len() != domain.state_count {
            return Err(Error::bundle(dir.join(DOMAIN), "state count disagrees with manifest"));
        }
        if domain.mode_powers.len() != modes.len() {
            return Err(Error::bundle(dir.join(DOMAIN), "device count disagrees with manifest"));
        }
        let registry = DeviceRegistry(manifest.devices.iter().map(|d| d.id.clone()).collect());
        let models = StateModels {
            registry,
            modes,
            domain,
        };

        let trained = match manifest.stage {
            Stage::Clustered => None,
            Stage::Trained => Some(load_trained(dir, manifest.state_count)?),
        };
        Ok(Bundle {
            manifest,
            models,
            trained,
        })
    }

    pub fn trained(&self, dir: &Path) -> Result<&Trained> {
        self.trained
            .as_ref()
            .ok_or_else(|| Error::bundle(dir.join(MANIFEST), "bundle is not trained; run `train` first"))
    }
}

fn load_trained(dir: &Path, states: usize) -> Result<Trained> {
    let classification: StateClassification = read_json(dir, CLASSIFICATION)?;
    if classification.visits.len() != states {
        return Err(Error::bundle(dir.join(CLASSIFICATION), "visit counts disagree with state count"));
    }
    let counts = parse_counts(&read_text(dir, COUNTS)?, states).map_err(|e| Error::bundle(dir.join(COUNTS), e))?;
    let transitions =
        parse_transitions(&read_text(dir, TRANSITIONS)?, states).map_err(|e| Error::bundle(dir.join(TRANSITIONS), e))?;
    let rewards = parse_rewards(&read_text(dir, REWARDS)?, states).map_err(|e| Error::bundle(dir.join(REWARDS), e))?;
    let policy: PolicySolution = read_json(dir, POLICY)?;
    if policy.policy.len() != states || policy.utilities.len() != states {
        return Err(Error::bundle(dir.join(POLICY), "policy length disagrees with state count"));
    }
    Ok(Trained {
        classification,
        counts,
        transitions,
        rewards,
        policy,
    })
}

fn counts_text(counts: &JointTransitionCounts) -> String {
    let mut s = String::from("# from to actuation action count\n");
    for (&(from, to), cell) in &counts.cells {
        for u in [Actuation::Stay, Actuation::Move] {
            for a in Action::ALL {
                let n = cell[u.index()][a.index()];
                if n > 0 {
                    let _ = writeln!(s, "{from} {to} {} {} {n}", u.symbol(), a.symbol());
                }
            }
        }
    }
    s
}

fn transitions_text(t: &TransitionModel) -> String {
    let mut s = format!("# states {}\n# state action next probability\n", t.state_count());
    for state in 0..t.state_count() {
        for a in Action::ALL {
            for (next, &p) in t.row(state, a).iter().enumerate() {
                if p != 0.0 {
                    let _ = writeln!(s, "{state} {} {next} {p}", a.symbol());
                }
            }
        }
    }
    s
}

fn rewards_text(r: &RewardVector) -> String {
    let mut s = String::from("# state reward\n");
    for (state, v) in r.0.iter().enumerate() {
        let _ = writeln!(s, "{state} {v}");
    }
    s
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split_whitespace().collect()))
}

fn field<T: std::str::FromStr>(line: usize, fields: &[&str], i: usize, what: &str) -> Result<T, String> {
    fields
        .get(i)
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| format!("line {line}: bad {what}"))
}

fn state_field(line: usize, fields: &[&str], i: usize, states: usize) -> Result<usize, String> {
    let s: usize = field(line, fields, i, "state")?;
    if s >= states {
        return Err(format!("line {line}: state {s} out of range for {states} states"));
    }
    Ok(s)
}

fn action_field(line: usize, fields: &[&str], i: usize) -> Result<Action, String> {
    match fields.get(i) {
        Some(&"S") => Ok(Action::Stay),
        Some(&"M") => Ok(Action::Move),
        _ => Err(format!("line {line}: bad action")),
    }
}

fn parse_counts(text: &str, states: usize) -> Result<JointTransitionCounts, String> {
    let mut counts = JointTransitionCounts::default();
    for (line, f) in data_lines(text) {
        if f.len() != 5 {
            return Err(format!("line {line}: expected 5 fields"));
        }
        let from = state_field(line, &f, 0, states)?;
        let to = state_field(line, &f, 1, states)?;
        let u = match f[2] {
            "s" => Actuation::Stay,
            "m" => Actuation::Move,
            _ => return Err(format!("line {line}: bad actuation")),
        };
        let a = action_field(line, &f, 3)?;
        let n: u64 = field(line, &f, 4, "count")?;
        counts.add(from, to, u, a, n);
    }
    Ok(counts)
}

fn parse_transitions(text: &str, states: usize) -> Result<TransitionModel, String> {
    let mut rows: Vec<[Vec<f64>; 2]> = (0..states).map(|_| [vec![0.0; states], vec![0.0; states]]).collect();
    let mut seen = BTreeMap::new();
    for (line, f) in data_lines(text) {
        if f.len() != 4 {
            return Err(format!("line {line}: expected 4 fields"));
        }
        let s = state_field(line, &f, 0, states)?;
        let a = action_field(line, &f, 1)?;
        let next = state_field(line, &f, 2, states)?;
        let p: f64 = field(line, &f, 3, "probability")?;
        if seen.insert((s, a.index(), next), line).is_some() {
            return Err(format!("line {line}: duplicate entry"));
        }
        rows[s][a.index()][next] = p;
    }
    TransitionModel::from_rows(rows).map_err(|e| e.to_string())
}

fn parse_rewards(text: &str, states: usize) -> Result<RewardVector, String> {
    let mut r = vec![None; states];
    for (line, f) in data_lines(text) {
        if f.len() != 2 {
            return Err(format!("line {line}: expected 2 fields"));
        }
        let s = state_field(line, &f, 0, states)?;
        let v: f64 = field(line, &f, 1, "reward")?;
        if !(v <= 0.0) {
            return Err(format!("line {line}: reward {v} is positive"));
        }
        r[s] = Some(v);
    }
    r.into_iter()
        .enumerate()
        .map(|(s, v)| v.ok_or_else(|| format!("missing reward for state {s}")))
        .collect::<Result<Vec<_>, _>>()
        .map(RewardVector)
}
