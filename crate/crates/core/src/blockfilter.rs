//! Steady-state block filter and event extraction.
//!
//! The filter tracks the running mean of the current steady segment and
//! declares a change-point once `min_segment_len` consecutive samples deviate
//! from it by more than `max(abs_threshold, rel_threshold * mean)`. Shorter
//! excursions (start-up spikes, meter glitches) are absorbed into the
//! surrounding segment without moving its level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PowerSeries;

/// A run of samples with a constant imputed level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadySegment {
    pub start_index: usize,
    /// Inclusive.
    pub end_index: usize,
    /// Mean of the segment's steady samples, in watts.
    pub level: f64,
    /// Timestamp of `start_index`.
    pub start_time: f64,
}

impl SteadySegment {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A steady-level transition, the unit the mixture model clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Timestamp of the first sample of the post-change segment.
    pub time: f64,
    /// Index of that sample within its source series.
    pub sample_index: usize,
    pub delta: f64,
    pub post_level: f64,
    pub feature: Vec<f64>,
}

impl Event {
    /// Builds an event whose feature is derived from `delta` (and `post_level` when `dim == 2`).
    pub fn new(time: f64, sample_index: usize, delta: f64, post_level: f64, dim: usize) -> Self {
        let feature = match dim {
            1 => vec![delta],
            _ => vec![delta, post_level],
        };
        Self {
            time,
            sample_index,
            delta,
            post_level,
            feature,
        }
    }

    /// A bare feature vector with no originating segment, for tests and direct use.
    pub fn from_feature(time: f64, feature: Vec<f64>) -> Self {
        let delta = feature.first().copied().unwrap_or(0.0);
        let post_level = feature.get(1).copied().unwrap_or(0.0);
        Self {
            time,
            sample_index: 0,
            delta,
            post_level,
            feature,
        }
    }

    pub fn dim(&self) -> usize {
        self.feature.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub abs_threshold: f64,
    pub rel_threshold: f64,
    pub min_segment_len: usize,
    pub event_threshold: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            abs_threshold: 15.0,
            rel_threshold: 0.05,
            min_segment_len: 3,
            event_threshold: 30.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("filter.{name}"), format!("must be positive, got {v}")))
            }
        };
        positive("abs_threshold", self.abs_threshold)?;
        positive("rel_threshold", self.rel_threshold)?;
        positive("event_threshold", self.event_threshold)?;
        if self.rel_threshold >= 1.0 {
            return Err(Error::config(
                "filter.rel_threshold",
                format!("must be below 1, got {}", self.rel_threshold),
            ));
        }
        if self.min_segment_len == 0 {
            return Err(Error::config("filter.min_segment_len", "must be at least 1"));
        }
        Ok(())
    }

    /// Deviation allowed around a segment at `level` before a sample counts as a change.
    pub fn change_threshold(&self, level: f64) -> f64 {
        self.abs_threshold.max(self.rel_threshold * level.abs())
    }
}

#[derive(Default)]
struct Accum {
    sum: f64,
    count: usize,
}

impl Accum {
    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    fn push(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }
}

/// Segments the series into steady levels.
pub fn block_filter(series: &PowerSeries, params: &FilterParams) -> Result<Vec<SteadySegment>> {
    params.validate()?;
    let x = series.values();
    let ts = series.timestamps();
    if x.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    if x.len() < params.min_segment_len {
        return Err(Error::InsufficientData(format!(
            "series of {} samples is shorter than min_segment_len {}",
            x.len(),
            params.min_segment_len
        )));
    }

    let mut segments = Vec::new();
    let mut start = 0usize;
    let mut steady = Accum::default();
    steady.push(x[0]);
    // candidate change: first index and accumulated samples
    let mut pending_start = 0usize;
    let mut pending = Accum::default();

    for (i, &xi) in x.iter().enumerate().skip(1) {
        let level = steady.mean();
        if (xi - level).abs() <= params.change_threshold(level) {
            // excursion too short to be a new state
            pending = Accum::default();
            steady.push(xi);
            continue;
        }
        if pending.count > 0 {
            let p = pending.mean();
            if (xi - p).abs() > params.change_threshold(p) {
                pending = Accum::default();
            }
        }
        if pending.count == 0 {
            pending_start = i;
        }
        pending.push(xi);
        if pending.count >= params.min_segment_len {
            segments.push(SteadySegment {
                start_index: start,
                end_index: pending_start - 1,
                level,
                start_time: ts[start],
            });
            start = pending_start;
            steady = std::mem::take(&mut pending);
        }
    }
    segments.push(SteadySegment {
        start_index: start,
        end_index: x.len() - 1,
        level: steady.mean(),
        start_time: ts[start],
    });
    Ok(segments)
}

/// One event per consecutive segment pair whose level difference reaches `event_threshold`.
pub fn extract_events(
    segments: &[SteadySegment],
    params: &FilterParams,
    feature_dim: usize,
) -> Result<Vec<Event>> {
    if !(1..=2).contains(&feature_dim) {
        return Err(Error::config("filter.feature_dim", format!("must be 1 or 2, got {feature_dim}")));
    }
    Ok(segments
        .windows(2)
        .filter_map(|pair| {
            let delta = pair[1].level - pair[0].level;
            (delta.abs() >= params.event_threshold).then(|| {
                Event::new(
                    pair[1].start_time,
                    pair[1].start_index,
                    delta,
                    pair[1].level,
                    feature_dim,
                )
            })
        })
        .collect())
}

/// Piecewise-constant reconstruction of the series from its segments.
pub fn reconstruct(segments: &[SteadySegment]) -> Vec<f64> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.level, s.len()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::mean_absolute_error;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn series(values: Vec<f64>) -> PowerSeries {
        PowerSeries::new(0.0, 1.0, values).unwrap()
    }

    fn noisy(levels: &[(f64, usize)], sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        levels
            .iter()
            .flat_map(|&(l, n)| std::iter::repeat_n(l, n))
            .map(|l| l + noise.sample(&mut rng))
            .collect()
    }

    #[test]
    fn constant_series_is_one_segment() {
        let segs = block_filter(&series(vec![100.0; 40]), &FilterParams::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].level, 100.0);
        assert_eq!((segs[0].start_index, segs[0].end_index), (0, 39));
    }

    #[test]
    fn step_gives_two_segments() {
        let mut v = vec![0.0; 50];
        v.extend(vec![1500.0; 50]);
        let params = FilterParams {
            abs_threshold: 20.0,
            ..Default::default()
        };
        let segs = block_filter(&series(v), &params).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].level, 0.0);
        assert_eq!(segs[1].level, 1500.0);
        assert_eq!(segs[1].start_index, 50);
    }

    #[test]
    fn white_noise_stays_one_segment() {
        let n = 500;
        let v = noisy(&[(100.0, n)], 5.0, 11);
        let params = FilterParams {
            abs_threshold: 20.0,
            ..Default::default()
        };
        let segs = block_filter(&series(v), &params).unwrap();
        assert_eq!(segs.len(), 1);
        // 4 standard errors of the mean
        assert!((segs[0].level - 100.0).abs() < 4.0 * 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn short_spike_is_absorbed() {
        let mut v = vec![100.0; 20];
        v[10] = 3000.0;
        v[11] = 2800.0;
        let segs = block_filter(&series(v), &FilterParams::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].level, 100.0);
    }

    #[test]
    fn too_short_series_errors() {
        let params = FilterParams {
            min_segment_len: 5,
            ..Default::default()
        };
        assert!(block_filter(&series(vec![1.0; 3]), &params).is_err());
    }

    fn seg(level: f64, start: usize) -> SteadySegment {
        SteadySegment {
            start_index: start,
            end_index: start + 9,
            level,
            start_time: start as f64,
        }
    }

    #[test]
    fn event_extraction_examples() {
        let params = FilterParams {
            event_threshold: 100.0,
            ..Default::default()
        };
        let ev = extract_events(&[seg(0.0, 0), seg(1500.0, 10)], &params, 1).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].delta, 1500.0);
        assert_eq!(ev[0].feature, vec![1500.0]);
        assert_eq!(ev[0].time, 10.0);

        assert!(extract_events(&[seg(0.0, 0)], &params, 1).unwrap().is_empty());
        assert!(extract_events(&[seg(100.0, 0), seg(130.0, 10)], &params, 1)
            .unwrap()
            .is_empty());

        let ev = extract_events(&[seg(0.0, 0), seg(1500.0, 10)], &params, 2).unwrap();
        assert_eq!(ev[0].feature, vec![1500.0, 1500.0]);
        assert!(extract_events(&[seg(0.0, 0)], &params, 3).is_err());
    }

    #[test]
    fn alternating_levels_alternate_deltas() {
        let params = FilterParams::default();
        let segs: Vec<_> = (0..10)
            .map(|i| seg(if i % 2 == 0 { 200.0 } else { 1200.0 }, i * 10))
            .collect();
        let ev = extract_events(&segs, &params, 1).unwrap();
        assert_eq!(ev.len(), 9);
        for (i, e) in ev.iter().enumerate() {
            let expected = if i % 2 == 0 { 1000.0 } else { -1000.0 };
            assert_eq!(e.delta, expected);
        }
    }

    #[test]
    fn reconstruction_error_bounded_by_threshold() {
        let levels = [(0.0, 40), (1500.0, 30), (1620.0, 25), (120.0, 60), (0.0, 30)];
        let v = noisy(&levels, 3.0, 5);
        let params = FilterParams::default();
        let segs = block_filter(&series(v.clone()), &params).unwrap();
        let recon = reconstruct(&segs);
        assert_eq!(recon.len(), v.len());
        let mae = mean_absolute_error(&recon, &v).unwrap();
        let max_level = segs.iter().map(|s| s.level.abs()).fold(0.0, f64::max);
        assert!(mae <= params.change_threshold(max_level), "mae {mae}");
        assert_eq!(segs.len(), levels.len());
    }

    proptest! {
        #[test]
        fn segments_partition_series(values in prop::collection::vec(0.0f64..3000.0, 3..300)) {
            let params = FilterParams::default();
            let segs = block_filter(&series(values.clone()), &params).unwrap();
            prop_assert_eq!(segs[0].start_index, 0);
            prop_assert_eq!(segs.last().unwrap().end_index, values.len() - 1);
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].end_index + 1, w[1].start_index);
            }
            for s in &segs {
                prop_assert!(s.start_index <= s.end_index);
                prop_assert!(s.level.is_finite());
            }
        }

        #[test]
        fn doubling_event_threshold_never_adds_events(
            levels in prop::collection::vec(0.0f64..3000.0, 2..50),
            thr in 1.0f64..500.0,
        ) {
            let segs: Vec<_> = levels.iter().enumerate().map(|(i, &l)| seg(l, i * 10)).collect();
            let p1 = FilterParams { event_threshold: thr, ..Default::default() };
            let p2 = FilterParams { event_threshold: 2.0 * thr, ..Default::default() };
            let n1 = extract_events(&segs, &p1, 1).unwrap().len();
            let n2 = extract_events(&segs, &p2, 1).unwrap().len();
            prop_assert!(n2 <= n1);
        }
    }
}
