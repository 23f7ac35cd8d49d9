use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::GngGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub cluster_id: usize,
    /// Distance to the nearest neuron.
    pub distance: f64,
}

/// Majority component label among the `k` nearest neurons. Among tied labels
/// the one owning the closest neuron wins.
pub fn knn_assign(graph: &GngGraph, point: &[f64], k: usize) -> Result<ClusterAssignment> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if point.len() != graph.dim {
        return Err(Error::DimensionMismatch {
            expected: graph.dim,
            found: point.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let metric = graph.params.metric;
    let mut dists: Vec<(f64, usize)> = graph
        .neurons
        .iter()
        .enumerate()
        .map(|(i, n)| (metric.rank(&n.position, point), i))
        .collect();
    let k = k.min(dists.len());
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, by_dist);
        dists.truncate(k);
    }
    dists.sort_unstable_by(by_dist);

    // (label, votes) in order of first (closest) appearance
    let mut votes: Vec<(usize, usize)> = Vec::with_capacity(k);
    for &(_, i) in &dists {
        let label = graph.labels[i];
        match votes.iter_mut().find(|(l, _)| *l == label) {
            Some(v) => v.1 += 1,
            None => votes.push((label, 1)),
        }
    }
    let top = votes.iter().map(|v| v.1).max().unwrap_or(0);
    let cluster_id = votes.iter().find(|v| v.1 == top).map(|v| v.0).unwrap_or(0);
    Ok(ClusterAssignment {
        cluster_id,
        distance: metric.from_rank(dists[0].0),
    })
}
