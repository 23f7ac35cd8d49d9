//! Two-step clustering: device modes per device, then domain states across
//! devices.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gng::{gng_train, knn_assign, GngGraph, GngParams, DEFAULT_K};
use crate::trace::{AlignedFrame, DeviceRegistry, FeatureRange, FeatureVector, NormStats};
use crate::{seed, Error, Result};

/// Operating modes of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeModel {
    pub device_id: String,
    pub stats: NormStats,
    pub graph: GngGraph,
    pub mode_count: usize,
    /// Mean de-normalized power of each mode's neurons, watts.
    pub mode_power: Vec<f64>,
}

/// Index of the power coordinate in device feature vectors.
const POWER_AXIS: usize = 3;

impl ModeModel {
    /// Trains on `(timestamp, power)` samples of a single device.
    pub fn fit(device_id: &str, samples: &[(i64, f64)], params: &GngParams) -> Result<Self> {
        let stats = NormStats::from_samples(samples.iter().copied())
            .map_err(|e| Error::for_device(device_id, e))?;
        let data: Vec<Vec<f64>> = samples
            .iter()
            .map(|&(t, p)| FeatureVector::from_sample(t, p, &stats).normalized.to_vec())
            .collect();
        let graph = gng_train(&data, params).map_err(|e| Error::for_device(device_id, e))?;
        let mode_power = (0..graph.component_count)
            .map(|label| {
                let (sum, n) = graph
                    .members(label)
                    .map(|i| stats.power.denormalize(graph.neurons[i].position[POWER_AXIS]))
                    .fold((0.0, 0usize), |(s, n), p| (s + p, n + 1));
                (sum / n.max(1) as f64).max(0.0)
            })
            .collect();
        Ok(ModeModel {
            device_id: device_id.into(),
            stats,
            mode_count: graph.component_count,
            graph,
            mode_power,
        })
    }

    pub fn assign(&self, timestamp: i64, power: f64) -> Result<usize> {
        let f = FeatureVector::from_sample(timestamp, power, &self.stats);
        Ok(knn_assign(&self.graph, &f.normalized, DEFAULT_K)?.cluster_id)
    }
}

/// Parameters for the mode model of the `index`-th registered device.
pub fn device_params(params: &GngParams, index: usize) -> GngParams {
    GngParams {
        seed: seed::derive_indexed(params.seed, "device-modes", index),
        ..params.clone()
    }
}

/// Power samples of the `index`-th device across `frames`.
pub fn device_samples(frames: &[AlignedFrame], index: usize) -> Vec<(i64, f64)> {
    frames.iter().map(|f| (f.timestamp, f.powers[index])).collect()
}

pub fn fit_device_mode(
    frames: &[AlignedFrame],
    registry: &DeviceRegistry,
    index: usize,
    params: &GngParams,
) -> Result<ModeModel> {
    let device = &registry.0[index];
    if frames.is_empty() {
        return Err(Error::DeviceNeverSeen(device.clone()));
    }
    ModeModel::fit(device, &device_samples(frames, index), &device_params(params, index))
}

/// One independent mode model per registered device.
pub fn fit_device_modes(
    frames: &[AlignedFrame],
    registry: &DeviceRegistry,
    params: &GngParams,
) -> Result<Vec<ModeModel>> {
    (0..registry.len())
        .map(|i| fit_device_mode(frames, registry, i, params))
        .collect()
}

pub fn assign_mode(model: &ModeModel, power: f64, timestamp: i64) -> Result<usize> {
    model.assign(timestamp, power)
}

/// Mode id of every device, in registry order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeVector(pub Vec<usize>);

/// How a mode vector is embedded for domain-state clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainEncoding {
    /// Each device contributes its mode's mean power, normalized by the
    /// device's training power range.
    #[default]
    ModePower,
    /// Concatenated one-hot mode indicators.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStateModel {
    pub encoding: DomainEncoding,
    pub power_ranges: Vec<FeatureRange>,
    pub mode_powers: Vec<Vec<f64>>,
    pub graph: GngGraph,
    pub state_count: usize,
    /// Watts.
    pub state_power: Vec<f64>,
    pub representatives: Vec<ModeVector>,
}

fn encode(
    encoding: DomainEncoding,
    ranges: &[FeatureRange],
    mode_powers: &[Vec<f64>],
    modes: &ModeVector,
) -> Result<Vec<f64>> {
    if modes.0.len() != mode_powers.len() {
        return Err(Error::LengthMismatch(alloc::format!(
            "mode vector has {} entries for {} devices",
            modes.0.len(),
            mode_powers.len()
        )));
    }
    let mut out = Vec::new();
    for (d, &m) in modes.0.iter().enumerate() {
        let powers = &mode_powers[d];
        if m >= powers.len() {
            return Err(Error::StateOutOfRange {
                state: m,
                count: powers.len(),
            });
        }
        match encoding {
            DomainEncoding::ModePower => out.push(ranges[d].normalize(powers[m])),
            DomainEncoding::OneHot => out.extend((0..powers.len()).map(|i| if i == m { 1.0 } else { 0.0 })),
        }
    }
    Ok(out)
}

impl DomainStateModel {
    pub fn features(&self, modes: &ModeVector) -> Result<Vec<f64>> {
        encode(self.encoding, &self.power_ranges, &self.mode_powers, modes)
    }

    pub fn assign(&self, modes: &ModeVector) -> Result<usize> {
        Ok(knn_assign(&self.graph, &self.features(modes)?, DEFAULT_K)?.cluster_id)
    }

    pub fn state_power(&self, state: usize) -> Result<f64> {
        self.state_power.get(state).copied().ok_or(Error::StateOutOfRange {
            state,
            count: self.state_count,
        })
    }
}

pub fn mode_vector(models: &[ModeModel], frame: &AlignedFrame) -> Result<ModeVector> {
    if frame.powers.len() != models.len() {
        return Err(Error::LengthMismatch(alloc::format!(
            "frame has {} devices, {} mode models",
            frame.powers.len(),
            models.len()
        )));
    }
    models
        .iter()
        .zip(&frame.powers)
        .map(|(m, &p)| m.assign(frame.timestamp, p))
        .collect::<Result<Vec<_>>>()
        .map(ModeVector)
}

pub fn fit_domain_states(
    frames: &[AlignedFrame],
    mode_models: &[ModeModel],
    params: &GngParams,
    encoding: DomainEncoding,
) -> Result<DomainStateModel> {
    let power_ranges: Vec<FeatureRange> = mode_models.iter().map(|m| m.stats.power).collect();
    let mode_powers: Vec<Vec<f64>> = mode_models.iter().map(|m| m.mode_power.clone()).collect();

    let vectors: Vec<ModeVector> = frames
        .iter()
        .map(|f| mode_vector(mode_models, f))
        .collect::<Result<_>>()?;
    let data: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| encode(encoding, &power_ranges, &mode_powers, v))
        .collect::<Result<_>>()?;
    let params = GngParams {
        seed: seed::derive(params.seed, "domain-states"),
        ..params.clone()
    };
    let graph = gng_train(&data, &params)?;

    // Features depend only on the mode vector, so assign each distinct one once.
    let mut distinct: BTreeMap<ModeVector, (Vec<f64>, usize)> = BTreeMap::new();
    for (v, x) in vectors.iter().zip(&data) {
        if !distinct.contains_key(v) {
            let state = knn_assign(&graph, x, DEFAULT_K)?.cluster_id;
            distinct.insert(v.clone(), (x.clone(), state));
        }
    }

    let metric = graph.params.metric;
    let mut representatives = Vec::with_capacity(graph.component_count);
    let mut state_power = Vec::with_capacity(graph.component_count);
    for state in 0..graph.component_count {
        let centroid = graph.centroid(state);
        let closest = |own_only: bool| {
            distinct
                .iter()
                .filter(|(_, (_, s))| !own_only || *s == state)
                .map(|(v, (x, _))| (metric.distance(x, &centroid), v))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, v)| v.clone())
        };
        let rep = closest(true).or_else(|| closest(false)).ok_or(Error::EmptyData)?;
        let power = rep.0.iter().enumerate().map(|(d, &m)| mode_powers[d][m]).sum::<f64>();
        state_power.push(power.max(0.0));
        representatives.push(rep);
    }

    Ok(DomainStateModel {
        encoding,
        power_ranges,
        mode_powers,
        state_count: graph.component_count,
        graph,
        state_power,
        representatives,
    })
}

pub fn assign_domain_state(model: &DomainStateModel, modes: &ModeVector) -> Result<usize> {
    model.assign(modes)
}

pub fn state_power(model: &DomainStateModel, state: usize) -> Result<f64> {
    model.state_power(state)
}

/// Both clustering levels for one device registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModels {
    pub registry: DeviceRegistry,
    pub modes: Vec<ModeModel>,
    pub domain: DomainStateModel,
}

impl StateModels {
    pub fn fit(
        frames: &[AlignedFrame],
        registry: &DeviceRegistry,
        mode_params: &GngParams,
        domain_params: &GngParams,
        encoding: DomainEncoding,
    ) -> Result<Self> {
        let modes = fit_device_modes(frames, registry, mode_params)?;
        let domain = fit_domain_states(frames, &modes, domain_params, encoding)?;
        Ok(StateModels {
            registry: registry.clone(),
            modes,
            domain,
        })
    }

    pub fn state_count(&self) -> usize {
        self.domain.state_count
    }

    pub fn mode_vector(&self, frame: &AlignedFrame) -> Result<ModeVector> {
        mode_vector(&self.modes, frame)
    }

    /// Domain state of every frame. Mode vectors repeat heavily, so
    /// assignments are memoized per distinct vector.
    pub fn assign_frames(&self, frames: &[AlignedFrame]) -> Result<Vec<usize>> {
        let mut memo: BTreeMap<ModeVector, usize> = BTreeMap::new();
        frames
            .iter()
            .map(|f| {
                let v = self.mode_vector(f)?;
                if let Some(&s) = memo.get(&v) {
                    return Ok(s);
                }
                let s = self.domain.assign(&v)?;
                memo.insert(v, s);
                Ok(s)
            })
            .collect()
    }
}
