//! Readings, clustering features and the synchronized all-device view.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One timestamped power measurement of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub device_id: String,
    /// Watts.
    pub power: f64,
}

impl Reading {
    pub fn new(timestamp: i64, device_id: impl Into<String>, power: f64) -> Result<Self> {
        let device_id = device_id.into();
        if !(power >= 0.0) || !power.is_finite() {
            return Err(Error::NegativePower {
                device: device_id,
                timestamp,
                power,
            });
        }
        if DateTime::from_timestamp(timestamp, 0).is_none() {
            return Err(Error::InvalidTimestamp(timestamp));
        }
        Ok(Reading {
            timestamp,
            device_id,
            power,
        })
    }
}

/// UTC calendar fields used as clustering features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Calendar {
    pub hour: u32,
    pub month: u32,
    pub year: i32,
}

impl Calendar {
    pub fn from_timestamp(timestamp: i64) -> Calendar {
        let dt = DateTime::from_timestamp(timestamp, 0).unwrap_or(if timestamp < 0 {
            DateTime::<Utc>::MIN_UTC
        } else {
            DateTime::<Utc>::MAX_UTC
        });
        Calendar {
            hour: dt.hour(),
            month: dt.month(),
            year: dt.year(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    fn singleton(v: f64) -> Self {
        FeatureRange { min: v, max: v }
    }

    fn include(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    /// Min-max scaling clamped to [0, 1]; a degenerate range maps to 0.
    pub fn normalize(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if !(span > 0.0) {
            return 0.0;
        }
        ((v - self.min) / span).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// Per-feature extrema over a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub hour: FeatureRange,
    pub month: FeatureRange,
    pub year: FeatureRange,
    pub power: FeatureRange,
}

impl NormStats {
    /// Statistics over `(timestamp, power)` samples.
    pub fn from_samples<I: IntoIterator<Item = (i64, f64)>>(samples: I) -> Result<Self> {
        let mut iter = samples.into_iter();
        let (ts, p) = iter.next().ok_or(Error::EmptyTrace)?;
        let cal = Calendar::from_timestamp(ts);
        let mut stats = NormStats {
            hour: FeatureRange::singleton(f64::from(cal.hour)),
            month: FeatureRange::singleton(f64::from(cal.month)),
            year: FeatureRange::singleton(f64::from(cal.year)),
            power: FeatureRange::singleton(p),
        };
        for (ts, p) in iter {
            let cal = Calendar::from_timestamp(ts);
            stats.hour.include(f64::from(cal.hour));
            stats.month.include(f64::from(cal.month));
            stats.year.include(f64::from(cal.year));
            stats.power.include(p);
        }
        Ok(stats)
    }
}

pub const FEATURE_DIM: usize = 4;

/// Calendar and power features with their normalized form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub hour: u32,
    pub month: u32,
    pub year: i32,
    pub power: f64,
    /// `[hour, month, year, power]`, each in [0, 1].
    pub normalized: [f64; FEATURE_DIM],
}

impl FeatureVector {
    pub fn from_sample(timestamp: i64, power: f64, stats: &NormStats) -> Self {
        let cal = Calendar::from_timestamp(timestamp);
        FeatureVector {
            hour: cal.hour,
            month: cal.month,
            year: cal.year,
            power,
            normalized: [
                stats.hour.normalize(f64::from(cal.hour)),
                stats.month.normalize(f64::from(cal.month)),
                stats.year.normalize(f64::from(cal.year)),
                stats.power.normalize(power),
            ],
        }
    }
}

pub fn compute_norm_stats(readings: &[Reading]) -> Result<NormStats> {
    NormStats::from_samples(readings.iter().map(|r| (r.timestamp, r.power)))
}

pub fn extract_features(reading: &Reading, stats: &NormStats) -> FeatureVector {
    FeatureVector::from_sample(reading.timestamp, reading.power, stats)
}

/// Ordered list of devices; the position of a device is its slot in every frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceRegistry(pub Vec<String>);

impl DeviceRegistry {
    /// Distinct device ids in lexicographic order.
    pub fn from_readings(readings: &[Reading]) -> Self {
        let mut ids: Vec<String> = readings.iter().map(|r| r.device_id.clone()).collect();
        ids.sort();
        ids.dedup();
        DeviceRegistry(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, device: &str) -> Option<usize> {
        self.0.iter().position(|d| d == device)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Power of every registered device at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedFrame {
    pub timestamp: i64,
    pub powers: Vec<f64>,
}

/// One frame per distinct timestamp, filling gaps with the last observation
/// (or the first one, before a device has reported). Readings of devices
/// outside the registry are ignored.
pub fn align_frames(readings: &[Reading], registry: &DeviceRegistry) -> Result<Vec<AlignedFrame>> {
    let index: BTreeMap<&str, usize> = registry.iter().enumerate().map(|(i, d)| (d, i)).collect();
    let mut streams: Vec<Vec<(i64, f64)>> = alloc::vec![Vec::new(); registry.len()];
    for r in readings {
        let Some(&slot) = index.get(r.device_id.as_str()) else {
            continue;
        };
        let stream = &mut streams[slot];
        if let Some(&(last, _)) = stream.last() {
            if r.timestamp < last {
                return Err(Error::UnorderedStream {
                    device: r.device_id.clone(),
                    timestamp: r.timestamp,
                });
            }
        }
        stream.push((r.timestamp, r.power));
    }
    for (device, stream) in registry.iter().zip(&streams) {
        if stream.is_empty() {
            return Err(Error::DeviceNeverSeen(device.into()));
        }
    }

    let mut times: Vec<i64> = streams.iter().flatten().map(|&(t, _)| t).collect();
    times.sort_unstable();
    times.dedup();

    let mut cursors = alloc::vec![0usize; streams.len()];
    let mut current: Vec<f64> = streams.iter().map(|s| s[0].1).collect();
    let mut frames = Vec::with_capacity(times.len());
    for t in times {
        for (d, stream) in streams.iter().enumerate() {
            let c = &mut cursors[d];
            while *c < stream.len() && stream[*c].0 <= t {
                current[d] = stream[*c].1;
                *c += 1;
            }
        }
        frames.push(AlignedFrame {
            timestamp: t,
            powers: current.clone(),
        });
    }
    Ok(frames)
}

/// Chronological split: the first `round(fraction * n)` items are training data.
pub fn split_train_test<T>(frames: &[T], train_fraction: f64) -> Result<(&[T], &[T])> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidFraction(train_fraction));
    }
    let cut = libm::round(train_fraction * frames.len() as f64) as usize;
    Ok(frames.split_at(cut.min(frames.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn r(ts: i64, dev: &str, p: f64) -> Reading {
        Reading::new(ts, dev, p).unwrap()
    }

    #[test]
    fn negative_power_rejected() {
        assert!(matches!(
            Reading::new(1451606400, "refrigerator", -3.0),
            Err(Error::NegativePower { .. })
        ));
    }

    #[test]
    fn norm_stats_extrema() {
        let single = compute_norm_stats(&[r(1451606400, "a", 5.0)]).unwrap();
        assert_eq!(single.power.min, single.power.max);
        assert_eq!(single.hour.min, single.hour.max);
        assert_eq!(single.year.min, single.year.max);

        let two = compute_norm_stats(&[r(0, "a", 0.0), r(15, "a", 200.0)]).unwrap();
        assert_eq!((two.power.min, two.power.max), (0.0, 200.0));

        // 2016-01-01 and 2016-03-20
        let months = compute_norm_stats(&[r(1451606400, "a", 1.0), r(1458432000, "a", 1.0)]).unwrap();
        assert_eq!((months.month.min, months.month.max), (1.0, 3.0));

        assert_eq!(compute_norm_stats(&[]), Err(Error::EmptyTrace));
    }

    #[test]
    fn features_decompose_utc_and_clamp() {
        // 2016-03-15T14:00:00Z
        let ts = 1458050400;
        let stats = NormStats {
            hour: FeatureRange { min: 0.0, max: 23.0 },
            month: FeatureRange { min: 1.0, max: 12.0 },
            year: FeatureRange { min: 2016.0, max: 2016.0 },
            power: FeatureRange { min: 0.0, max: 100.0 },
        };
        let f = extract_features(&r(ts, "a", 100.0), &stats);
        assert_eq!((f.hour, f.month, f.year), (14, 3, 2016));
        assert_eq!(f.normalized[3], 1.0);
        assert_eq!(f.normalized[2], 0.0);
        let above = extract_features(&r(ts, "a", 250.0), &stats);
        assert_eq!(above.normalized[3], 1.0);
        assert!(f.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn align_identical_timestamps() {
        let rs = vec![r(0, "a", 1.0), r(0, "b", 2.0), r(15, "a", 3.0), r(15, "b", 4.0)];
        let reg = DeviceRegistry::from_readings(&rs);
        let frames = align_frames(&rs, &reg).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].powers, vec![3.0, 4.0]);
    }

    #[test]
    fn align_forward_and_back_fill() {
        let rs = vec![r(0, "a", 1.0), r(0, "b", 2.0), r(15, "a", 3.0), r(30, "a", 5.0), r(30, "b", 6.0)];
        let reg = DeviceRegistry::from_readings(&rs);
        let frames = align_frames(&rs, &reg).unwrap();
        assert_eq!(frames[1].powers, vec![3.0, 2.0]);

        let late = vec![r(0, "a", 1.0), r(15, "b", 9.0)];
        let frames = align_frames(&late, &DeviceRegistry::from_readings(&late)).unwrap();
        assert_eq!(frames[0].powers, vec![1.0, 9.0]);
    }

    #[test]
    fn align_single_device_is_identity() {
        let rs = vec![r(0, "a", 1.0), r(15, "a", 2.0), r(30, "a", 0.5)];
        let frames = align_frames(&rs, &DeviceRegistry::from_readings(&rs)).unwrap();
        let back: Vec<(i64, f64)> = frames.iter().map(|f| (f.timestamp, f.powers[0])).collect();
        assert_eq!(back, vec![(0, 1.0), (15, 2.0), (30, 0.5)]);
    }

    #[test]
    fn align_errors() {
        let rs = vec![r(0, "a", 1.0)];
        let reg = DeviceRegistry(vec!["a".into(), "ghost".into()]);
        assert_eq!(align_frames(&rs, &reg), Err(Error::DeviceNeverSeen("ghost".into())));
        let back = vec![r(15, "a", 1.0), r(0, "a", 1.0)];
        assert!(matches!(
            align_frames(&back, &DeviceRegistry::from_readings(&back)),
            Err(Error::UnorderedStream { .. })
        ));
    }

    #[test]
    fn split_sizes() {
        let frames: Vec<u32> = (0..10).collect();
        let (train, test) = split_train_test(&frames, 0.5).unwrap();
        assert_eq!(train, &[0, 1, 2, 3, 4]);
        assert_eq!(test, &[5, 6, 7, 8, 9]);
        assert_eq!(split_train_test(&frames, 1.0), Err(Error::InvalidFraction(1.0)));
        assert!(split_train_test(&frames, 0.0).is_err());

        let big = vec![(); 3_000_000];
        let (train, test) = split_train_test(&big, 2.0 / 3.0).unwrap();
        assert_eq!((train.len(), test.len()), (2_000_000, 1_000_000));
    }
}
