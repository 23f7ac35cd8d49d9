//! Synthetic smart-home traces driven by a cyclic user routine.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::states::ModeVector;
use crate::trace::Reading;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDevice {
    pub id: String,
    /// Watts drawn in each mode.
    pub mode_powers: Vec<f64>,
}

/// One block of the routine: a mode per device held for `duration` readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineStep {
    pub modes: Vec<usize>,
    pub duration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub devices: Vec<SyntheticDevice>,
    /// Repeated cyclically.
    pub routine: Vec<RoutineStep>,
    /// Probability that a block deviates to uniformly random modes.
    pub noise: f64,
    /// Half-width of uniform power jitter, watts.
    pub jitter: f64,
    /// Readings per device.
    pub length: usize,
    pub start: i64,
    /// Seconds between readings.
    pub cadence: i64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    /// Time-major: all devices at one timestamp, then the next timestamp.
    pub readings: Vec<Reading>,
    /// Ground-truth modes at each timestamp.
    pub modes: Vec<ModeVector>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(format!("synthetic spec: {msg}")));
        if self.devices.is_empty() {
            return fail("no devices".into());
        }
        for d in &self.devices {
            if d.mode_powers.is_empty() || d.mode_powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return fail(format!("device `{}` needs non-negative mode powers", d.id));
            }
        }
        if self.routine.is_empty() {
            return fail("empty routine".into());
        }
        for (i, step) in self.routine.iter().enumerate() {
            if step.duration == 0 || step.modes.len() != self.devices.len() {
                return fail(format!("routine step {i} malformed"));
            }
            if step.modes.iter().zip(&self.devices).any(|(&m, d)| m >= d.mode_powers.len()) {
                return fail(format!("routine step {i} names an unknown mode"));
            }
        }
        if self.length < 2 {
            return fail("length must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.noise) || !(self.jitter >= 0.0) || self.cadence <= 0 {
            return fail("noise, jitter or cadence out of range".into());
        }
        Ok(())
    }
}

pub fn generate_synthetic_trace(spec: &SyntheticSpec) -> Result<SyntheticTrace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.devices.len();
    let mut readings = Vec::with_capacity(spec.length * k);
    let mut modes = Vec::with_capacity(spec.length);
    let mut t = 0usize;
    'outer: for step in spec.routine.iter().cycle() {
        let block: Vec<usize> = if spec.noise > 0.0 && rng.random::<f64>() < spec.noise {
            spec.devices
                .iter()
                .map(|d| rng.random_range(0..d.mode_powers.len()))
                .collect()
        } else {
            step.modes.clone()
        };
        for _ in 0..step.duration {
            if t == spec.length {
                break 'outer;
            }
            let timestamp = spec.start + t as i64 * spec.cadence;
            for (d, &m) in spec.devices.iter().zip(&block) {
                let mut power = d.mode_powers[m];
                if spec.jitter > 0.0 {
                    power = (power + rng.random_range(-spec.jitter..=spec.jitter)).max(0.0);
                }
                readings.push(Reading::new(timestamp, d.id.clone(), power)?);
            }
            modes.push(ModeVector(block.clone()));
            t += 1;
        }
    }
    Ok(SyntheticTrace { readings, modes })
}

/// 2016-01-01T00:00:00Z
pub const DEFAULT_START: i64 = 1_451_606_400;

const BASES: [[usize; 4]; 2] = [[1, 0, 0, 0], [0, 0, 1, 0]];

const EXCURSIONS: [[usize; 4]; 20] = [
    [1, 2, 0, 0],
    [0, 1, 1, 0],
    [1, 0, 0, 2],
    [0, 2, 1, 1],
    [1, 1, 0, 1],
    [0, 0, 1, 2],
    [1, 2, 1, 0],
    [0, 1, 0, 1],
    [1, 0, 1, 2],
    [0, 2, 0, 2],
    [1, 1, 1, 1],
    [0, 2, 1, 0],
    [1, 0, 1, 1],
    [0, 0, 0, 2],
    [1, 2, 0, 2],
    [0, 1, 1, 2],
    [1, 1, 0, 0],
    [0, 2, 0, 1],
    [1, 0, 0, 1],
    [0, 0, 1, 1],
];

fn cyclic_scenario(
    length: usize,
    seed: u64,
    excursions: usize,
    base_len: usize,
    excursion_len: usize,
) -> SyntheticSpec {
    let device = |id: &str, powers: &[f64]| SyntheticDevice {
        id: id.into(),
        mode_powers: powers.to_vec(),
    };
    let devices = alloc::vec![
        device("fridge", &[5.0, 150.0]),
        device("heater", &[0.0, 1000.0, 2000.0]),
        device("tv", &[0.0, 120.0]),
        device("washer", &[0.0, 500.0, 2200.0]),
    ];
    let mut routine = Vec::new();
    for (i, e) in EXCURSIONS.iter().take(excursions).enumerate() {
        routine.push(RoutineStep {
            modes: BASES[i % 2].to_vec(),
            duration: base_len,
        });
        routine.push(RoutineStep {
            modes: e.to_vec(),
            duration: excursion_len,
        });
    }
    SyntheticSpec {
        devices,
        routine,
        noise: 0.05,
        jitter: 3.0,
        length,
        start: DEFAULT_START,
        cadence: 15,
        seed,
    }
}

/// Four appliances with two or three modes each. Two cheap base states
/// alternate with eight expensive excursions; a base block lasts 75 minutes
/// and an excursion just under two hours.
pub fn standard_scenario(length: usize, seed: u64) -> SyntheticSpec {
    cyclic_scenario(length, seed, 8, 300, 450)
}

/// Same appliances as [`standard_scenario`], but twenty half-hour excursions
/// separated by brief base visits: about 96% of the time is spent in rarely
/// repeated, expensive configurations.
pub fn wasteful_scenario(length: usize, seed: u64) -> SyntheticSpec {
    cyclic_scenario(length, seed, 20, 5, 120)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    fn square_wave() -> SyntheticSpec {
        SyntheticSpec {
            devices: vec![SyntheticDevice {
                id: "lamp".into(),
                mode_powers: vec![0.0, 100.0],
            }],
            routine: vec![
                RoutineStep { modes: vec![0], duration: 240 },
                RoutineStep { modes: vec![1], duration: 240 },
            ],
            noise: 0.0,
            jitter: 0.0,
            length: 960,
            start: DEFAULT_START,
            cadence: 15,
            seed: 1,
        }
    }

    #[test]
    fn noiseless_square_wave() {
        let trace = generate_synthetic_trace(&square_wave()).unwrap();
        assert_eq!(trace.readings.len(), 960);
        for (t, r) in trace.readings.iter().enumerate() {
            let expected = if (t / 240) % 2 == 0 { 0.0 } else { 100.0 };
            assert_eq!(r.power, expected);
            assert_eq!(r.timestamp, DEFAULT_START + 15 * t as i64);
        }
    }

    #[test]
    fn three_of_four_tuples() {
        let mut spec = square_wave();
        spec.devices.push(SyntheticDevice {
            id: "tv".into(),
            mode_powers: vec![0.0, 80.0],
        });
        spec.routine = vec![
            RoutineStep { modes: vec![0, 0], duration: 10 },
            RoutineStep { modes: vec![1, 0], duration: 10 },
            RoutineStep { modes: vec![1, 1], duration: 10 },
        ];
        let trace = generate_synthetic_trace(&spec).unwrap();
        let distinct: BTreeSet<_> = trace.modes.iter().cloned().collect();
        assert_eq!(distinct.len(), 3);
        assert_eq!(trace.readings.len(), 2 * 960);
    }

    #[test]
    fn invalid_specs() {
        let mut s = square_wave();
        s.length = 1;
        assert!(generate_synthetic_trace(&s).is_err());
        let mut s = square_wave();
        s.routine[0].modes = vec![2];
        assert!(generate_synthetic_trace(&s).is_err());
        let mut s = square_wave();
        s.devices.clear();
        assert!(generate_synthetic_trace(&s).is_err());
    }

    #[test]
    fn standard_scenario_is_valid() {
        let spec = standard_scenario(1000, 3);
        spec.validate().unwrap();
        let a = generate_synthetic_trace(&spec).unwrap();
        assert_eq!(a, generate_synthetic_trace(&spec).unwrap());
    }
}
