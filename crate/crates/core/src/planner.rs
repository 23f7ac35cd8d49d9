//! Two-action MDP over domain states.
//!
//! Transitions are estimated from training counts, rewards are negated state
//! power, and policy iteration finds the optimal STAY/MOVE policy. During
//! replay, clashes with strict states shift transition mass toward them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::behavior::{Action, JointTransitionCounts};
use crate::sim::Planner;
use crate::states::DomainStateModel;
use crate::{Error, Result};

/// Row-sum tolerance for transition rows.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub gamma: f64,
    /// Fraction of the recommended state's probability moved to strict states per clash.
    pub update_factor: f64,
    /// Additive smoothing for transition estimation.
    pub smoothing: f64,
    /// Readings between policy re-solves during replay.
    pub replan_interval: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            gamma: 0.9,
            update_factor: 0.1,
            smoothing: 1e-6,
            replan_interval: 1000,
        }
    }
}

/// Dense `T[s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    states: usize,
    probs: Vec<f64>,
}

impl TransitionModel {
    /// Every action self-loops.
    pub fn identity(states: usize) -> Self {
        let mut t = TransitionModel {
            states,
            probs: vec![0.0; states * 2 * states],
        };
        for s in 0..states {
            for a in Action::ALL {
                t.row_mut(s, a)[s] = 1.0;
            }
        }
        t
    }

    /// `rows[s][a]` is the distribution over next states; validated.
    pub fn from_rows(rows: Vec<[Vec<f64>; 2]>) -> Result<Self> {
        let states = rows.len();
        let mut probs = Vec::with_capacity(states * 2 * states);
        for [stay, mv] in rows {
            for r in [stay, mv] {
                if r.len() != states {
                    return Err(Error::LengthMismatch(format!("row of {} for {} states", r.len(), states)));
                }
                probs.extend(r);
            }
        }
        let t = TransitionModel { states, probs };
        t.check_stochastic()?;
        Ok(t)
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    #[inline]
    pub fn row(&self, state: usize, action: Action) -> &[f64] {
        let start = (state * 2 + action.index()) * self.states;
        &self.probs[start..start + self.states]
    }

    #[inline]
    pub fn row_mut(&mut self, state: usize, action: Action) -> &mut [f64] {
        let start = (state * 2 + action.index()) * self.states;
        &mut self.probs[start..start + self.states]
    }

    pub fn check_stochastic(&self) -> Result<()> {
        for s in 0..self.states {
            for a in Action::ALL {
                let row = self.row(s, a);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE || row.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::NotStochastic {
                        state: s,
                        action: a.index(),
                        sum,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Per-action frequencies with additive smoothing. Rows without data default
/// to a self-loop for STAY and a uniform jump to any other state for MOVE.
pub fn estimate_transition_model(counts: &JointTransitionCounts, states: usize, smoothing: f64) -> TransitionModel {
    let mut t = TransitionModel {
        states,
        probs: vec![0.0; states * 2 * states],
    };
    let mut raw = vec![0.0; states];
    for s in 0..states {
        for a in Action::ALL {
            raw.iter_mut().for_each(|v| *v = 0.0);
            for (&(from, to), _) in counts.cells.range((s, 0)..(s + 1, 0)) {
                if to < states {
                    raw[to] = counts.action_count(from, to, a) as f64;
                }
            }
            let total: f64 = raw.iter().sum();
            let row = t.row_mut(s, a);
            if total == 0.0 {
                match a {
                    Action::Stay => row[s] = 1.0,
                    Action::Move if states == 1 => row[s] = 1.0,
                    Action::Move => {
                        let p = 1.0 / (states - 1) as f64;
                        for (i, v) in row.iter_mut().enumerate() {
                            *v = if i == s { 0.0 } else { p };
                        }
                    }
                }
            } else {
                let denom = total + states as f64 * smoothing;
                for (v, c) in row.iter_mut().zip(&raw) {
                    *v = (c + smoothing) / denom;
                }
            }
        }
    }
    t
}

/// `R[s]`: negated total power of each state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardVector(pub Vec<f64>);

impl RewardVector {
    pub fn from_powers(powers: &[f64]) -> Self {
        RewardVector(powers.iter().map(|p| -p).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn build_reward_vector(model: &DomainStateModel) -> RewardVector {
    RewardVector::from_powers(&model.state_power)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySolution {
    pub policy: Vec<Action>,
    pub utilities: Vec<f64>,
    pub gamma: f64,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 1000;

fn check_problem(t: &TransitionModel, r: &RewardVector, gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidGamma(gamma));
    }
    if r.len() != t.state_count() {
        return Err(Error::LengthMismatch(format!(
            "{} rewards for {} states",
            r.len(),
            t.state_count()
        )));
    }
    t.check_stochastic()
}

/// Solves `(I - gamma * T_pi) U = R` by Gaussian elimination with partial pivoting.
/// The matrix is strictly diagonally dominant for `gamma < 1`.
fn evaluate(t: &TransitionModel, r: &RewardVector, gamma: f64, policy: &[Action]) -> Vec<f64> {
    let m = t.state_count();
    let w = m + 1;
    let mut a = vec![0.0; m * w];
    for s in 0..m {
        let row = t.row(s, policy[s]);
        for (j, &p) in row.iter().enumerate() {
            a[s * w + j] = -gamma * p;
        }
        a[s * w + s] += 1.0;
        a[s * w + m] = r.0[s];
    }
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i * w + col].abs().total_cmp(&a[j * w + col].abs()))
            .unwrap_or(col);
        if pivot != col {
            for k in 0..w {
                a.swap(col * w + k, pivot * w + k);
            }
        }
        let d = a[col * w + col];
        for i in col + 1..m {
            let f = a[i * w + col] / d;
            if f != 0.0 {
                for k in col..w {
                    a[i * w + k] -= f * a[col * w + k];
                }
            }
        }
    }
    let mut u = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = a[i * w + m];
        for j in i + 1..m {
            acc -= a[i * w + j] * u[j];
        }
        u[i] = acc / a[i * w + i];
    }
    u
}

fn expected(row: &[f64], u: &[f64]) -> f64 {
    row.iter().zip(u).map(|(p, v)| p * v).sum()
}

/// Action values `R(s) + gamma * sum_s' T(s, a, s') U(s')`.
pub fn action_values(t: &TransitionModel, r: &RewardVector, gamma: f64, u: &[f64], state: usize) -> [f64; 2] {
    Action::ALL.map(|a| r.0[state] + gamma * expected(t.row(state, a), u))
}

/// STAY unless MOVE is better beyond round-off.
fn greedy(q: [f64; 2]) -> Action {
    let tol = 1e-12 * (1.0 + q[0].abs().max(q[1].abs()));
    if q[1] > q[0] + tol {
        Action::Move
    } else {
        Action::Stay
    }
}

pub fn policy_iteration(t: &TransitionModel, r: &RewardVector, gamma: f64) -> Result<PolicySolution> {
    replan(t, r, gamma, None)
}

/// Policy iteration, optionally warm-started from a previous policy.
pub fn replan(
    t: &TransitionModel,
    r: &RewardVector,
    gamma: f64,
    previous: Option<&PolicySolution>,
) -> Result<PolicySolution> {
    check_problem(t, r, gamma)?;
    let m = t.state_count();
    let mut policy = match previous {
        Some(p) if p.policy.len() == m => p.policy.clone(),
        _ => vec![Action::Stay; m],
    };
    let mut iterations = 0;
    loop {
        iterations += 1;
        let u = evaluate(t, r, gamma, &policy);
        let next: Vec<Action> = (0..m).map(|s| greedy(action_values(t, r, gamma, &u, s))).collect();
        if next == policy || iterations >= MAX_ITERATIONS {
            return Ok(PolicySolution {
                policy,
                utilities: u,
                gamma,
                iterations,
            });
        }
        policy = next;
    }
}

/// `max_s |U(s) - max_a (R(s) + gamma * sum T U)|`.
pub fn bellman_residual(t: &TransitionModel, r: &RewardVector, gamma: f64, u: &[f64]) -> f64 {
    (0..t.state_count())
        .map(|s| {
            let q = action_values(t, r, gamma, u, s);
            (u[s] - q[0].max(q[1])).abs()
        })
        .fold(0.0, f64::max)
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Most likely next state under the policy's action; ties go to the
/// lower-power state, then the lower id.
pub fn recommend(t: &TransitionModel, solution: &PolicySolution, powers: &[f64], state: usize) -> Result<usize> {
    let m = t.state_count();
    if state >= m || solution.policy.len() != m {
        return Err(Error::StateOutOfRange { state, count: m });
    }
    let row = t.row(state, solution.policy[state]);
    let power = |s: usize| powers.get(s).copied().unwrap_or(0.0);
    let mut best = 0;
    for (s, &p) in row.iter().enumerate().skip(1) {
        let b = row[best];
        if p > b + TIE_TOLERANCE || ((p - b).abs() <= TIE_TOLERANCE && power(s) < power(best)) {
            best = s;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// `delta` probability moved off the recommended state.
    Applied { delta: f64 },
    /// The recommended state had no mass to give.
    Unchanged,
    /// No strict states exist; nothing can receive mass.
    NoStrictStates,
}

/// Moves `factor * T[s][a][recommended]` evenly onto the strict states of the
/// same row, then renormalizes that row.
pub fn online_update(
    t: &mut TransitionModel,
    state: usize,
    action: Action,
    recommended: usize,
    strict: &[usize],
    factor: f64,
) -> Result<UpdateOutcome> {
    let m = t.state_count();
    if state >= m || recommended >= m {
        return Err(Error::StateOutOfRange {
            state: state.max(recommended),
            count: m,
        });
    }
    if !(0.0..=1.0).contains(&factor) {
        return Err(Error::InvalidParams(format!("update factor {factor} outside [0, 1]")));
    }
    if let Some(&bad) = strict.iter().find(|&&k| k >= m) {
        return Err(Error::StateOutOfRange { state: bad, count: m });
    }
    if strict.is_empty() {
        return Ok(UpdateOutcome::NoStrictStates);
    }
    let row = t.row_mut(state, action);
    let delta = factor * row[recommended];
    if !(delta > 0.0) {
        return Ok(UpdateOutcome::Unchanged);
    }
    row[recommended] -= delta;
    let share = delta / strict.len() as f64;
    for &k in strict {
        row[k] += share;
    }
    let sum: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v = (*v / sum).max(0.0);
    }
    Ok(UpdateOutcome::Applied { delta })
}

/// Online planner: policy iteration over a transition model that learns from
/// strict-state clashes.
#[derive(Debug, Clone)]
pub struct MdpPlanner {
    pub transitions: TransitionModel,
    pub rewards: RewardVector,
    pub powers: Vec<f64>,
    pub strict: Vec<usize>,
    pub config: PlannerConfig,
    pub solution: PolicySolution,
    pub skipped_updates: u64,
}

impl MdpPlanner {
    pub fn new(transitions: TransitionModel, powers: Vec<f64>, strict: Vec<usize>, config: PlannerConfig) -> Result<Self> {
        let rewards = RewardVector::from_powers(&powers);
        let solution = policy_iteration(&transitions, &rewards, config.gamma)?;
        Ok(MdpPlanner {
            transitions,
            rewards,
            powers,
            strict,
            config,
            solution,
            skipped_updates: 0,
        })
    }

    /// Resumes from a persisted solution without re-solving.
    pub fn with_solution(
        transitions: TransitionModel,
        powers: Vec<f64>,
        strict: Vec<usize>,
        config: PlannerConfig,
        solution: PolicySolution,
    ) -> Result<Self> {
        let rewards = RewardVector::from_powers(&powers);
        check_problem(&transitions, &rewards, config.gamma)?;
        if solution.policy.len() != transitions.state_count() {
            return Err(Error::LengthMismatch("policy does not match state count".into()));
        }
        Ok(MdpPlanner {
            transitions,
            rewards,
            powers,
            strict,
            config,
            solution,
            skipped_updates: 0,
        })
    }
}

impl Planner for MdpPlanner {
    fn recommend(&mut self, _step: usize, state: usize) -> Result<usize> {
        recommend(&self.transitions, &self.solution, &self.powers, state)
    }

    fn on_strict_clash(&mut self, state: usize, recommended: usize, _actual: usize) -> Result<bool> {
        let action = self.solution.policy[state];
        match online_update(
            &mut self.transitions,
            state,
            action,
            recommended,
            &self.strict,
            self.config.update_factor,
        )? {
            UpdateOutcome::Applied { .. } => Ok(true),
            UpdateOutcome::Unchanged => Ok(false),
            UpdateOutcome::NoStrictStates => {
                self.skipped_updates += 1;
                Ok(false)
            }
        }
    }

    fn replan(&mut self) -> Result<()> {
        self.solution = replan(&self.transitions, &self.rewards, self.config.gamma, Some(&self.solution))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::Actuation;

    fn two_state() -> (TransitionModel, RewardVector) {
        let t = TransitionModel::from_rows(vec![
            [vec![1.0, 0.0], vec![0.0, 1.0]],
            [vec![0.0, 1.0], vec![1.0, 0.0]],
        ])
        .unwrap();
        (t, RewardVector(vec![-10.0, -1.0]))
    }

    #[test]
    fn hand_solved_two_state() {
        let (t, r) = two_state();
        let sol = policy_iteration(&t, &r, 0.9).unwrap();
        assert_eq!(sol.policy, vec![Action::Move, Action::Stay]);
        assert!((sol.utilities[0] + 19.0).abs() < 1e-9);
        assert!((sol.utilities[1] + 10.0).abs() < 1e-9);
        assert!(bellman_residual(&t, &r, 0.9, &sol.utilities) < 1e-9);
    }

    #[test]
    fn single_state() {
        let t = TransitionModel::identity(1);
        let r = RewardVector(vec![-5.0]);
        let sol = policy_iteration(&t, &r, 0.9).unwrap();
        assert_eq!(sol.policy, vec![Action::Stay]);
        assert!((sol.utilities[0] + 50.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_problems() {
        let (t, r) = two_state();
        assert_eq!(policy_iteration(&t, &r, 1.0), Err(Error::InvalidGamma(1.0)));
        let mut broken = t.clone();
        broken.row_mut(0, Action::Stay)[0] = 0.5;
        assert!(matches!(policy_iteration(&broken, &r, 0.9), Err(Error::NotStochastic { .. })));
    }

    #[test]
    fn estimate_frequencies_and_defaults() {
        let mut c = JointTransitionCounts::default();
        c.add(0, 0, Actuation::Stay, Action::Stay, 9);
        c.add(0, 1, Actuation::Move, Action::Stay, 1);
        let t = estimate_transition_model(&c, 4, 0.0);
        assert_eq!(&t.row(0, Action::Stay)[..2], &[0.9, 0.1]);
        let third = 1.0 / 3.0;
        assert_eq!(t.row(0, Action::Move), &[0.0, third, third, third]);
        assert_eq!(t.row(2, Action::Stay), &[0.0, 0.0, 1.0, 0.0]);
        t.check_stochastic().unwrap();

        let smoothed = estimate_transition_model(&c, 4, 1e-6);
        smoothed.check_stochastic().unwrap();
        assert!(smoothed.row(0, Action::Stay)[3] > 0.0);
    }

    #[test]
    fn reward_is_negated_power() {
        let r = RewardVector::from_powers(&[150.0, 0.0, 40.0]);
        assert_eq!(r.0[0], -150.0);
        assert_eq!(r.0[1], 0.0);
        assert!(r.0[2] > r.0[0]);
    }

    #[test]
    fn recommend_argmax_and_ties() {
        let t = TransitionModel::from_rows(vec![
            [vec![1.0, 0.0, 0.0], vec![0.0, 0.7, 0.3]],
            [vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]],
            [vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
        ])
        .unwrap();
        let sol = PolicySolution {
            policy: vec![Action::Move, Action::Stay, Action::Stay],
            utilities: vec![0.0; 3],
            gamma: 0.9,
            iterations: 1,
        };
        let powers = [100.0, 10.0, 40.0];
        assert_eq!(recommend(&t, &sol, &powers, 0).unwrap(), 1);
        assert_eq!(recommend(&t, &sol, &powers, 1).unwrap(), 2);
        assert_eq!(recommend(&t, &sol, &powers, 2).unwrap(), 2);
        assert!(recommend(&t, &sol, &powers, 3).is_err());
    }

    #[test]
    fn update_moves_mass_to_strict() {
        let mut t = TransitionModel::from_rows(vec![
            [vec![0.0, 0.5, 0.5], vec![0.0, 0.5, 0.5]],
            [vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]],
            [vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
        ])
        .unwrap();
        let out = online_update(&mut t, 0, Action::Move, 1, &[2], 0.1).unwrap();
        assert_eq!(out, UpdateOutcome::Applied { delta: 0.05 });
        assert!((t.row(0, Action::Move)[1] - 0.45).abs() < 1e-15);
        assert!((t.row(0, Action::Move)[2] - 0.55).abs() < 1e-15);
        assert_eq!(t.row(0, Action::Stay), &[0.0, 0.5, 0.5]);

        let before = t.clone();
        assert_eq!(online_update(&mut t, 0, Action::Move, 0, &[2], 0.1).unwrap(), UpdateOutcome::Unchanged);
        assert_eq!(online_update(&mut t, 0, Action::Move, 1, &[], 0.1).unwrap(), UpdateOutcome::NoStrictStates);
        assert_eq!(t, before);
        t.check_stochastic().unwrap();
    }
}
