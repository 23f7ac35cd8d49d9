//! User behavior over domain states: STAY/MOVE actions, noisy actuations,
//! demand classes and joint transition statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ground-truth action between consecutive domain states (`S` / `M`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Stay = 0,
    Move = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Stay, Action::Move];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Action::Stay => 'S',
            Action::Move => 'M',
        }
    }
}

/// What the user signalled (`s` / `m`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Actuation {
    Stay = 0,
    Move = 1,
}

impl Actuation {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Actuation::Stay => 's',
            Actuation::Move => 'm',
        }
    }

    fn matching(action: Action) -> Self {
        match action {
            Action::Stay => Actuation::Stay,
            Action::Move => Actuation::Move,
        }
    }

    fn opposite(action: Action) -> Self {
        match action {
            Action::Stay => Actuation::Move,
            Action::Move => Actuation::Stay,
        }
    }
}

/// `Stay` where the state repeats, `Move` elsewhere; one label per consecutive pair.
pub fn label_actions<T: PartialEq>(states: &[T]) -> Result<Vec<Action>> {
    if states.len() < 2 {
        return Err(Error::SequenceTooShort {
            needed: 2,
            found: states.len(),
        });
    }
    Ok(states
        .windows(2)
        .map(|w| if w[0] == w[1] { Action::Stay } else { Action::Move })
        .collect())
}

/// Exactly `round(flip_fraction * n)` uniformly chosen positions get the
/// opposite label; the rest mirror the actions.
pub fn simulate_actuations(actions: &[Action], flip_fraction: f64, seed: u64) -> Result<Vec<Actuation>> {
    if !(0.0..=1.0).contains(&flip_fraction) {
        return Err(Error::InvalidParams(format!("flip fraction {flip_fraction} outside [0, 1]")));
    }
    let n = actions.len();
    let flips = (libm::round(flip_fraction * n as f64) as usize).min(n);
    let mut out: Vec<Actuation> = actions.iter().map(|&a| Actuation::matching(a)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, n, flips) {
        out[i] = Actuation::opposite(actions[i]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DemandClass {
    StrictHigh,
    LooseHigh,
    StrictLow,
    LooseLow,
}

impl DemandClass {
    pub fn is_strict(self) -> bool {
        matches!(self, DemandClass::StrictHigh | DemandClass::StrictLow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationParams {
    /// Fraction of visited states that are high-demand.
    pub top: f64,
    pub fix_hd: f64,
    pub fix_ld: f64,
}

impl Default for ClassificationParams {
    fn default() -> Self {
        ClassificationParams {
            top: 0.22,
            fix_hd: 0.30,
            fix_ld: 0.30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateClassification {
    pub params: ClassificationParams,
    pub visits: Vec<u64>,
    pub shd: BTreeSet<usize>,
    pub lhd: BTreeSet<usize>,
    pub sld: BTreeSet<usize>,
    pub lld: BTreeSet<usize>,
}

impl StateClassification {
    /// `None` for states never visited in training.
    pub fn class_of(&self, state: usize) -> Option<DemandClass> {
        if self.shd.contains(&state) {
            Some(DemandClass::StrictHigh)
        } else if self.lhd.contains(&state) {
            Some(DemandClass::LooseHigh)
        } else if self.sld.contains(&state) {
            Some(DemandClass::StrictLow)
        } else if self.lld.contains(&state) {
            Some(DemandClass::LooseLow)
        } else {
            None
        }
    }

    pub fn is_strict(&self, state: usize) -> bool {
        self.shd.contains(&state) || self.sld.contains(&state)
    }

    /// SHD ∪ SLD in ascending order.
    pub fn strict_states(&self) -> Vec<usize> {
        self.shd.union(&self.sld).copied().collect()
    }

    pub fn high_demand(&self) -> BTreeSet<usize> {
        self.shd.union(&self.lhd).copied().collect()
    }

    pub fn low_demand(&self) -> BTreeSet<usize> {
        self.sld.union(&self.lld).copied().collect()
    }
}

fn fraction_size(fraction: f64, n: usize) -> usize {
    (libm::round(fraction * n as f64) as usize).clamp(1, n)
}

pub fn visit_counts(states: &[usize], state_count: usize) -> Vec<u64> {
    let mut counts = alloc::vec![0u64; state_count];
    for &s in states {
        counts[s] += 1;
    }
    counts
}

/// Splits visited states into high/low demand by visit count, then samples
/// strict subsets of each.
pub fn classify_states(visits: &[u64], params: ClassificationParams, seed: u64) -> Result<StateClassification> {
    for (name, v) in [("top", params.top), ("fix_hd", params.fix_hd), ("fix_ld", params.fix_ld)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParams(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let mut visited: Vec<usize> = (0..visits.len()).filter(|&s| visits[s] > 0).collect();
    if visited.is_empty() {
        return Err(Error::NoVisitedStates);
    }
    visited.sort_by(|&a, &b| visits[b].cmp(&visits[a]).then(a.cmp(&b)));
    let hd_len = fraction_size(params.top, visited.len());
    let (hd, ld) = visited.split_at(hd_len);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strict_subset = |pool: &[usize], fix: f64| -> (BTreeSet<usize>, BTreeSet<usize>) {
        if pool.is_empty() {
            return (BTreeSet::new(), BTreeSet::new());
        }
        let mut shuffled = pool.to_vec();
        shuffled.shuffle(&mut rng);
        let k = fraction_size(fix, pool.len());
        (shuffled[..k].iter().copied().collect(), shuffled[k..].iter().copied().collect())
    };
    let (shd, lhd) = strict_subset(hd, params.fix_hd);
    let (sld, lld) = strict_subset(ld, params.fix_ld);
    Ok(StateClassification {
        params,
        visits: visits.to_vec(),
        shd,
        lhd,
        sld,
        lld,
    })
}

/// `count[(d, d')][actuation][action]` over consecutive training pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointTransitionCounts {
    pub cells: BTreeMap<(usize, usize), [[u64; 2]; 2]>,
}

impl JointTransitionCounts {
    pub fn get(&self, from: usize, to: usize, actuation: Actuation, action: Action) -> u64 {
        self.cells
            .get(&(from, to))
            .map_or(0, |c| c[actuation.index()][action.index()])
    }

    pub fn add(&mut self, from: usize, to: usize, actuation: Actuation, action: Action, n: u64) {
        self.cells.entry((from, to)).or_default()[actuation.index()][action.index()] += n;
    }

    /// Count of `from -> to` under `action`, summed over actuations.
    pub fn action_count(&self, from: usize, to: usize, action: Action) -> u64 {
        self.cells
            .get(&(from, to))
            .map_or(0, |c| c[0][action.index()] + c[1][action.index()])
    }

    pub fn total(&self) -> u64 {
        self.cells.values().flatten().flatten().sum()
    }

    /// Empirical joint probability of the transition with the given labels.
    pub fn probability(&self, from: usize, to: usize, actuation: Actuation, action: Action) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.get(from, to, actuation, action) as f64 / total as f64
    }

    pub fn merge(&mut self, other: &JointTransitionCounts) {
        for (&(d, e), c) in &other.cells {
            let cell = self.cells.entry((d, e)).or_default();
            for i in 0..2 {
                for j in 0..2 {
                    cell[i][j] += c[i][j];
                }
            }
        }
    }
}

pub fn joint_transition_counts(
    states: &[usize],
    actions: &[Action],
    actuations: &[Actuation],
) -> Result<JointTransitionCounts> {
    if states.len() < 2 || actions.len() != states.len() - 1 || actuations.len() != actions.len() {
        return Err(Error::LengthMismatch(format!(
            "{} states, {} actions, {} actuations",
            states.len(),
            actions.len(),
            actuations.len()
        )));
    }
    let mut counts = JointTransitionCounts::default();
    for (t, w) in states.windows(2).enumerate() {
        counts.add(w[0], w[1], actuations[t], actions[t], 1);
    }
    Ok(counts)
}
