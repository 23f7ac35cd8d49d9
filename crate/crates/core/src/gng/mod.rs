//! Growing Neural Gas.
//!
//! Neurons adapt toward presented inputs (winner and its topological
//! neighbors), edges are created between the two closest neurons and age out
//! when not refreshed, and new neurons are inserted where accumulated error is
//! largest. Clusters are the connected components of the final edge graph.

mod components;
mod knn;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use components::{connected_components, Components};
pub use knn::{knn_assign, ClusterAssignment};

/// Default neighbourhood size for cluster assignment.
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    /// Order-preserving surrogate: squared distance for Euclidean.
    #[inline]
    fn rank(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }

    fn from_rank(self, rank: f64) -> f64 {
        match self {
            Metric::Euclidean => libm::sqrt(rank),
            Metric::Manhattan => rank,
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.from_rank(self.rank(a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GngParams {
    pub max_nodes: usize,
    pub max_edge_age: u32,
    /// Error scaling of the two neurons an insertion splits.
    pub alpha: f64,
    /// Multiplier applied to every error after each presentation.
    pub error_decay: f64,
    pub eps_winner: f64,
    pub eps_neighbor: f64,
    /// Presentations between insertions.
    pub insertion_interval: usize,
    pub epochs: usize,
    pub start_nodes: usize,
    #[serde(default)]
    pub metric: Metric,
    pub seed: u64,
}

impl GngParams {
    /// Reference hyper-parameters for device modes.
    pub fn device_modes() -> Self {
        GngParams {
            max_nodes: 10_000,
            max_edge_age: 100,
            alpha: 0.5,
            error_decay: 0.995,
            ..Self::common()
        }
    }

    /// Reference hyper-parameters for domain states.
    pub fn domain_states() -> Self {
        GngParams {
            max_nodes: 20_000,
            max_edge_age: 50,
            alpha: 0.3,
            error_decay: 0.9,
            ..Self::common()
        }
    }

    fn common() -> Self {
        GngParams {
            max_nodes: 10_000,
            max_edge_age: 100,
            alpha: 0.5,
            error_decay: 0.995,
            eps_winner: 0.05,
            eps_neighbor: 0.006,
            insertion_interval: 20,
            epochs: 150,
            start_nodes: 1000,
            metric: Metric::Euclidean,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        let fail = |msg: &str| Err(Error::InvalidParams(format!("gng: {msg}")));
        if self.max_nodes == 0 || self.start_nodes == 0 {
            return fail("max_nodes and start_nodes must be positive");
        }
        if self.start_nodes > self.max_nodes {
            return fail("start_nodes exceeds max_nodes");
        }
        if self.max_edge_age == 0 || self.insertion_interval == 0 || self.epochs == 0 {
            return fail("max_edge_age, insertion_interval and epochs must be positive");
        }
        if !unit(self.alpha) || !unit(self.error_decay) {
            return fail("alpha and error_decay must lie in (0, 1)");
        }
        if !(unit(self.eps_winner) && self.eps_neighbor > 0.0 && self.eps_neighbor < self.eps_winner) {
            return fail("need 0 < eps_neighbor < eps_winner < 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neuron {
    pub position: Vec<f64>,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    /// Lower endpoint index.
    pub a: usize,
    /// Higher endpoint index.
    pub b: usize,
    pub age: u32,
}

/// A trained network: neurons, aged edges and component labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GngGraph {
    pub params: GngParams,
    pub dim: usize,
    pub neurons: Vec<Neuron>,
    pub edges: Vec<Edge>,
    pub labels: Vec<usize>,
    pub component_count: usize,
}

impl GngGraph {
    /// Builds a graph from raw parts and labels its components.
    pub fn from_parts(params: GngParams, dim: usize, neurons: Vec<Neuron>, mut edges: Vec<Edge>) -> Self {
        for e in &mut edges {
            if e.a > e.b {
                core::mem::swap(&mut e.a, &mut e.b);
            }
        }
        edges.sort();
        let comps = connected_components(neurons.len(), edges.iter().map(|e| (e.a, e.b)));
        GngGraph {
            params,
            dim,
            neurons,
            edges,
            labels: comps.labels,
            component_count: comps.count,
        }
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// Neuron indices of component `label`.
    pub fn members(&self, label: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }

    /// Mean position of the neurons in component `label`.
    pub fn centroid(&self, label: usize) -> Vec<f64> {
        let mut acc = alloc::vec![0.0; self.dim];
        let mut n = 0usize;
        for i in self.members(label) {
            for (a, p) in acc.iter_mut().zip(&self.neurons[i].position) {
                *a += p;
            }
            n += 1;
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        acc
    }
}

/// Incremental trainer. [`gng_train`] drives it over whole epochs; the
/// single-step [`Gng::present`] is public so the graph can be inspected
/// between presentations.
#[derive(Debug, Clone)]
pub struct Gng {
    params: GngParams,
    dim: usize,
    positions: Vec<Vec<f64>>,
    errors: Vec<f64>,
    /// Presentation count at which each neuron was last winner or runner-up.
    last_active: Vec<u64>,
    adjacency: Vec<Vec<usize>>,
    ages: BTreeMap<(usize, usize), u32>,
    presentations: u64,
}

#[inline]
fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Gng {
    /// Seeds `start_nodes` neurons at randomly chosen data points, preferring
    /// distinct positions.
    pub fn new(data: &[Vec<f64>], params: GngParams) -> Result<Self> {
        params.validate()?;
        let dim = check_data(data)?;
        if data.len() < params.start_nodes {
            return Err(Error::InsufficientData {
                needed: params.start_nodes,
                available: data.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);

        let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
        let mut chosen = Vec::with_capacity(params.start_nodes);
        let mut repeats = Vec::new();
        for &i in &order {
            if chosen.len() == params.start_nodes {
                break;
            }
            let bits: Vec<u64> = data[i].iter().map(|v| v.to_bits()).collect();
            if seen.insert(bits) {
                chosen.push(i);
            } else if repeats.len() < params.start_nodes {
                repeats.push(i);
            }
        }
        // Fewer distinct points than start nodes: fill with repeats.
        let missing = params.start_nodes - chosen.len();
        chosen.extend(repeats.into_iter().take(missing));

        let n = chosen.len();
        Ok(Gng {
            dim,
            positions: chosen.iter().map(|&i| data[i].clone()).collect(),
            errors: alloc::vec![0.0; n],
            last_active: alloc::vec![0; n],
            adjacency: alloc::vec![Vec::new(); n],
            ages: BTreeMap::new(),
            presentations: 0,
            params,
        })
    }

    pub fn neuron_count(&self) -> usize {
        self.positions.len()
    }

    pub fn presentations(&self) -> u64 {
        self.presentations
    }

    pub fn edge_ages(&self) -> impl Iterator<Item = ((usize, usize), u32)> + '_ {
        self.ages.iter().map(|(&k, &v)| (k, v))
    }

    pub fn degree(&self, neuron: usize) -> usize {
        self.adjacency[neuron].len()
    }

    fn two_nearest(&self, x: &[f64]) -> (usize, f64, Option<usize>) {
        let metric = self.params.metric;
        let (mut b1, mut d1) = (0usize, f64::INFINITY);
        let (mut b2, mut d2) = (usize::MAX, f64::INFINITY);
        for (i, p) in self.positions.iter().enumerate() {
            let d = metric.rank(p, x);
            if d < d1 {
                b2 = b1;
                d2 = d1;
                b1 = i;
                d1 = d;
            } else if d < d2 {
                b2 = i;
                d2 = d;
            }
        }
        let second = (self.positions.len() > 1).then_some(b2);
        (b1, metric.from_rank(d1), second)
    }

    /// One adaptation step for input `x`.
    pub fn present(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        let (w1, dist, w2) = self.two_nearest(x);

        for &nb in &self.adjacency[w1] {
            if let Some(age) = self.ages.get_mut(&key(w1, nb)) {
                *age += 1;
            }
        }
        self.errors[w1] += dist * dist;

        let (ew, en) = (self.params.eps_winner, self.params.eps_neighbor);
        for (p, xi) in self.positions[w1].iter_mut().zip(x) {
            *p += ew * (xi - *p);
        }
        for k in 0..self.adjacency[w1].len() {
            let nb = self.adjacency[w1][k];
            for (p, xi) in self.positions[nb].iter_mut().zip(x) {
                *p += en * (xi - *p);
            }
        }

        self.presentations += 1;
        self.last_active[w1] = self.presentations;
        if let Some(w2) = w2 {
            self.last_active[w2] = self.presentations;
            self.connect(w1, w2);
        }
        self.prune(w1);

        if self.presentations % self.params.insertion_interval as u64 == 0
            && self.positions.len() < self.params.max_nodes
        {
            self.insert();
        }
        let decay = self.params.error_decay;
        self.errors.iter_mut().for_each(|e| *e *= decay);
    }

    fn connect(&mut self, a: usize, b: usize) {
        if self.ages.insert(key(a, b), 0).is_none() {
            self.adjacency[a].push(b);
            self.adjacency[b].push(a);
        }
    }

    fn disconnect(&mut self, a: usize, b: usize) {
        if self.ages.remove(&key(a, b)).is_some() {
            self.adjacency[a].retain(|&n| n != b);
            self.adjacency[b].retain(|&n| n != a);
        }
    }

    /// Only the winner's edges aged, so only they can have expired.
    fn prune(&mut self, winner: usize) {
        let max_age = self.params.max_edge_age;
        let expired: Vec<usize> = self.adjacency[winner]
            .iter()
            .copied()
            .filter(|&nb| self.ages[&key(winner, nb)] > max_age)
            .collect();
        if expired.is_empty() {
            return;
        }
        let mut orphans = Vec::new();
        for nb in expired {
            self.disconnect(winner, nb);
            if self.adjacency[nb].is_empty() {
                orphans.push(nb);
            }
        }
        if self.adjacency[winner].is_empty() {
            orphans.push(winner);
        }
        orphans.sort_unstable_by(|a, b| b.cmp(a));
        for i in orphans {
            if self.positions.len() < 2 {
                break;
            }
            self.remove_isolated(i);
        }
    }

    fn remove_isolated(&mut self, i: usize) {
        debug_assert!(self.adjacency[i].is_empty());
        let last = self.positions.len() - 1;
        self.positions.swap_remove(i);
        self.errors.swap_remove(i);
        self.last_active.swap_remove(i);
        self.adjacency.swap_remove(i);
        if i == last {
            return;
        }
        let moved = self.adjacency[i].clone();
        for nb in moved {
            let age = self.ages.remove(&key(last, nb)).unwrap_or(0);
            self.ages.insert(key(i, nb), age);
            for n in self.adjacency[nb].iter_mut() {
                if *n == last {
                    *n = i;
                }
            }
        }
    }

    /// Highest-error candidate; the first one wins ties.
    fn argmax_error(&self, candidates: impl Iterator<Item = usize>) -> Option<usize> {
        let mut best: Option<usize> = None;
        for c in candidates {
            if best.is_none_or(|b| self.errors[c] > self.errors[b]) {
                best = Some(c);
            }
        }
        best
    }

    fn insert(&mut self) {
        let n = self.positions.len();
        if n < 2 {
            return;
        }
        let Some(q) = self.argmax_error(0..n) else { return };
        let f = if self.adjacency[q].is_empty() {
            // no neighbor: split toward the next-worst neuron overall
            self.argmax_error((0..n).filter(|&i| i != q))
        } else {
            self.argmax_error(self.adjacency[q].iter().copied())
        };
        let Some(f) = f else { return };

        let mid: Vec<f64> = self.positions[q]
            .iter()
            .zip(&self.positions[f])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let r = n;
        self.positions.push(mid);
        self.adjacency.push(Vec::new());
        self.disconnect(q, f);
        self.connect(q, r);
        self.connect(r, f);
        let alpha = self.params.alpha;
        self.errors[q] *= alpha;
        self.errors[f] *= alpha;
        self.errors.push(self.errors[q]);
        self.last_active.push(self.presentations);
    }

    /// Freezes the network. Neurons that were neither winner nor runner-up
    /// during the last `idle_limit` presentations are dead units and are
    /// dropped with their edges, as are neurons that never joined an edge.
    pub fn finish(mut self, idle_limit: u64) -> GngGraph {
        let horizon = self.presentations.saturating_sub(idle_limit);
        let mut dead: Vec<usize> = (0..self.positions.len())
            .filter(|&i| self.last_active[i] <= horizon && self.presentations > idle_limit)
            .collect();
        if dead.len() == self.positions.len() {
            dead.clear();
        }
        dead.sort_unstable_by(|a, b| b.cmp(a));
        for i in dead {
            for nb in self.adjacency[i].clone() {
                self.disconnect(i, nb);
            }
            self.remove_isolated(i);
        }
        if !self.ages.is_empty() {
            let mut isolated: Vec<usize> = (0..self.positions.len())
                .filter(|&i| self.adjacency[i].is_empty())
                .collect();
            isolated.sort_unstable_by(|a, b| b.cmp(a));
            for i in isolated {
                self.remove_isolated(i);
            }
        }
        let neurons = self
            .positions
            .into_iter()
            .zip(self.errors)
            .map(|(position, error)| Neuron { position, error })
            .collect();
        let edges = self.ages.into_iter().map(|((a, b), age)| Edge { a, b, age }).collect();
        GngGraph::from_parts(self.params, self.dim, neurons, edges)
    }
}

fn check_data(data: &[Vec<f64>]) -> Result<usize> {
    let first = data.first().ok_or(Error::EmptyData)?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidParams("gng: zero-dimensional data".into()));
    }
    for v in data {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    Ok(dim)
}

/// Trains a network over `params.epochs` shuffled passes of `data`.
pub fn gng_train(data: &[Vec<f64>], params: &GngParams) -> Result<GngGraph> {
    let mut gng = Gng::new(data, params.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::mix(params.seed));
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            gng.present(&data[i]);
        }
    }
    Ok(gng.finish(data.len() as u64))
}
