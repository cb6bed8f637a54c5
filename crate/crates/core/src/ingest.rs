//! Loading, validating and resampling aggregate power readings.
//!
//! Input files are two-column delimited text (comma or tab) holding a
//! timestamp and a reading in watts. Timestamps may be epoch seconds or
//! ISO-8601; both are normalized to epoch seconds. Readings are binned onto a
//! uniform grid, short gaps are filled according to [`GapFill`] and gaps
//! longer than `max_gap` split the data into independent segments.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing sample periods.
const PERIOD_EPS: f64 = 1e-9;

/// A uniformly sampled run of power readings in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    timestamps: Vec<f64>,
    values: Vec<f64>,
    sample_period: f64,
}

impl PowerSeries {
    /// Builds a series starting at `start` with one reading every `sample_period` seconds.
    pub fn new(start: f64, sample_period: f64, values: Vec<f64>) -> Result<Self> {
        if !(sample_period > 0.0) || !sample_period.is_finite() {
            return Err(Error::invalid(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        if !start.is_finite() {
            return Err(Error::invalid("start timestamp must be finite"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite reading at sample {i}")));
        }
        let timestamps = (0..values.len())
            .map(|i| start + i as f64 * sample_period)
            .collect();
        Ok(Self {
            timestamps,
            values,
            sample_period,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp of the sample after the last one.
    pub fn end_time(&self) -> f64 {
        self.timestamps
            .first()
            .map_or(0.0, |t0| t0 + self.len() as f64 * self.sample_period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapFill {
    ForwardFill,
    ZeroFill,
    /// Every gap splits the data, regardless of its length.
    DropSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativePolicy {
    Reject,
    ClampToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeaderMode {
    /// Skip the first row when it does not parse as data.
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Output sample period in seconds; `None` keeps the native spacing.
    pub resample_period: Option<f64>,
    pub gap_fill: GapFill,
    /// Longest gap (seconds between surviving readings) that is filled in place.
    pub max_gap: f64,
    pub negative_policy: NegativePolicy,
    pub time_column: usize,
    pub value_column: usize,
    pub header: HeaderMode,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            resample_period: None,
            gap_fill: GapFill::ForwardFill,
            max_gap: 300.0,
            negative_policy: NegativePolicy::ClampToZero,
            time_column: 0,
            value_column: 1,
            header: HeaderMode::Auto,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.resample_period {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::config(
                    "ingest.resample_period",
                    format!("must be positive, got {p}"),
                ));
            }
            if self.max_gap < p {
                return Err(Error::config(
                    "ingest.max_gap",
                    format!("must be at least resample_period ({p}), got {}", self.max_gap),
                ));
            }
        }
        if !(self.max_gap > 0.0) || !self.max_gap.is_finite() {
            return Err(Error::config(
                "ingest.max_gap",
                format!("must be positive, got {}", self.max_gap),
            ));
        }
        if self.time_column == self.value_column {
            return Err(Error::config(
                "ingest.value_column",
                "must differ from time_column",
            ));
        }
        Ok(())
    }
}

/// A stretch of missing data between two surviving readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Timestamp of the last reading before the gap.
    pub start: f64,
    /// Timestamp of the first reading after the gap.
    pub end: f64,
    /// `true` when the gap was filled in place; `false` when it split the data.
    pub filled: bool,
}

/// Result of [`load_series`]: uniform segments plus what happened at the gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub segments: Vec<PowerSeries>,
    pub gaps: Vec<GapReport>,
    pub rows_read: usize,
    pub clamped: usize,
}

impl LoadedSeries {
    pub fn total_samples(&self) -> usize {
        self.segments.iter().map(PowerSeries::len).sum()
    }
}

/// Parses a timestamp given as epoch seconds or ISO-8601 (naive times are UTC).
pub fn parse_timestamp(field: &str) -> Option<f64> {
    let s = field.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_micros() as f64 / 1e6);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_micros() as f64 / 1e6);
        }
    }
    None
}

struct Row {
    line: usize,
    time: f64,
    value: Option<f64>,
}

fn read_rows(path: &Path, cfg: &IngestConfig) -> Result<(Vec<Row>, usize)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let first_data_line = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .unwrap_or("");
    let delimiter = if first_data_line.contains('\t') { b'\t' } else { b',' };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut rows = Vec::new();
    let mut clamped = 0;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let is_first = std::mem::replace(&mut first, false);
        let (Some(tf), Some(vf)) = (record.get(cfg.time_column), record.get(cfg.value_column))
        else {
            if is_first && cfg.header != HeaderMode::Absent {
                continue;
            }
            return Err(parse_err(
                line,
                format!(
                    "expected columns {} and {}, found {} fields",
                    cfg.time_column,
                    cfg.value_column,
                    record.len()
                ),
            ));
        };
        let time = parse_timestamp(tf);
        let value = parse_reading(vf);
        if is_first {
            match cfg.header {
                HeaderMode::Present => continue,
                HeaderMode::Auto if time.is_none() || value.is_err() => continue,
                _ => {}
            }
        }
        let time = time.ok_or_else(|| parse_err(line, format!("unparseable timestamp {tf:?}")))?;
        let value = value.map_err(|_| parse_err(line, format!("unparseable reading {vf:?}")))?;
        let value = match value {
            Some(v) if v < 0.0 => match cfg.negative_policy {
                NegativePolicy::Reject => {
                    return Err(parse_err(line, format!("negative reading {v} W")))
                }
                NegativePolicy::ClampToZero => {
                    clamped += 1;
                    Some(0.0)
                }
            },
            other => other,
        };
        if let Some(prev) = rows.last() {
            let prev: &Row = prev;
            if time <= prev.time {
                return Err(parse_err(
                    line,
                    format!(
                        "timestamp {time} does not increase (previous {} on line {})",
                        prev.time, prev.line
                    ),
                ));
            }
        }
        rows.push(Row { line, time, value });
    }
    Ok((rows, clamped))
}

/// `Ok(None)` marks a missing reading (empty or NaN); it becomes a gap.
fn parse_reading(field: &str) -> std::result::Result<Option<f64>, ()> {
    let s = field.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_nan() => Ok(None),
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

fn median_spacing(times: &[f64]) -> Option<f64> {
    let mut diffs: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.is_empty() {
        return None;
    }
    diffs.sort_by(f64::total_cmp);
    Some(diffs[diffs.len() / 2])
}

/// Reads, validates and resamples a delimited power file.
pub fn load_series(path: impl AsRef<Path>, cfg: &IngestConfig) -> Result<LoadedSeries> {
    let path = path.as_ref();
    cfg.validate()?;
    let (rows, clamped) = read_rows(path, cfg)?;
    let rows_read = rows.len();

    let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let native = median_spacing(&times);
    let period = match (cfg.resample_period, native) {
        (Some(p), Some(n)) if p < n * (1.0 - PERIOD_EPS) => {
            return Err(Error::config(
                "ingest.resample_period",
                format!("{p} s is finer than the native spacing {n} s (upsampling not supported)"),
            ))
        }
        (Some(p), _) => p,
        (None, Some(n)) => n,
        (None, None) => 1.0,
    };

    let observed: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.value.map(|v| (r.time, v)))
        .collect();
    if observed.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: no valid readings after validation",
            path.display()
        )));
    }

    let t0 = observed[0].0;
    let bins = bin_means(observed.iter().copied(), t0, period);
    let (segments, gaps) = assemble_segments(&bins, t0, period, cfg)?;
    Ok(LoadedSeries {
        segments,
        gaps,
        rows_read,
        clamped,
    })
}

/// Mean of the readings falling in each `period`-wide bin anchored at `t0`.
fn bin_means(readings: impl Iterator<Item = (f64, f64)>, t0: f64, period: f64) -> Vec<Option<f64>> {
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (t, v) in readings {
        let idx = ((t - t0) / period + PERIOD_EPS).floor() as usize;
        if sums.len() <= idx {
            sums.resize(idx + 1, (0.0, 0));
        }
        sums[idx].0 += v;
        sums[idx].1 += 1;
    }
    sums.into_iter()
        .map(|(s, n)| (n > 0).then(|| s / n as f64))
        .collect()
}

fn assemble_segments(
    bins: &[Option<f64>],
    t0: f64,
    period: f64,
    cfg: &IngestConfig,
) -> Result<(Vec<PowerSeries>, Vec<GapReport>)> {
    let mut segments = Vec::new();
    let mut gaps = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut current_start = 0usize;
    let mut i = 0;
    while i < bins.len() {
        match bins[i] {
            Some(v) => {
                if current.is_empty() {
                    current_start = i;
                }
                current.push(v);
                i += 1;
            }
            None => {
                let run_start = i;
                while i < bins.len() && bins[i].is_none() {
                    i += 1;
                }
                let run = i - run_start;
                let start = t0 + (run_start - 1) as f64 * period;
                let end = t0 + i as f64 * period;
                let span = (run + 1) as f64 * period;
                let fill = span <= cfg.max_gap * (1.0 + PERIOD_EPS)
                    && cfg.gap_fill != GapFill::DropSegment;
                gaps.push(GapReport {
                    start,
                    end,
                    filled: fill,
                });
                if fill {
                    let v = match cfg.gap_fill {
                        GapFill::ForwardFill => *current.last().expect("gap follows a reading"),
                        _ => 0.0,
                    };
                    current.extend(std::iter::repeat_n(v, run));
                } else {
                    let start_t = t0 + current_start as f64 * period;
                    segments.push(PowerSeries::new(start_t, period, std::mem::take(&mut current))?);
                }
            }
        }
    }
    if !current.is_empty() {
        let start_t = t0 + current_start as f64 * period;
        segments.push(PowerSeries::new(start_t, period, current)?);
    }
    Ok((segments, gaps))
}

/// Mean-aggregates a series into `period`-wide bins aligned to its first sample.
pub fn resample(series: &PowerSeries, period: f64) -> Result<PowerSeries> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::invalid(format!("period must be positive, got {period}")));
    }
    if period < series.sample_period() * (1.0 - PERIOD_EPS) {
        return Err(Error::invalid(format!(
            "period {period} s is finer than the native spacing {} s (upsampling not supported)",
            series.sample_period()
        )));
    }
    if series.is_empty() {
        return PowerSeries::new(0.0, period, Vec::new());
    }
    if (period - series.sample_period()).abs() <= PERIOD_EPS * period {
        return Ok(series.clone());
    }
    let t0 = series.timestamps()[0];
    let bins = bin_means(
        series
            .timestamps()
            .iter()
            .copied()
            .zip(series.values().iter().copied()),
        t0,
        period,
    );
    let values = bins
        .into_iter()
        .map(|b| b.expect("bins at least as wide as the native spacing are never empty"))
        .collect();
    PowerSeries::new(t0, period, values)
}

/// `(1/N) Σ |pred_t − truth_t|` in watts.
pub fn mean_absolute_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("mean absolute error of empty sequences"));
    }
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_constant_series() {
        let f = write_tmp("0,100\n1,100\n2,100\n");
        let loaded = load_series(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(loaded.segments.len(), 1);
        let s = &loaded.segments[0];
        assert_eq!(s.values(), &[100.0, 100.0, 100.0]);
        assert_eq!(s.timestamps(), &[0.0, 1.0, 2.0]);
        assert_eq!(s.sample_period(), 1.0);
    }

    #[test]
    fn short_gap_is_forward_filled() {
        let f = write_tmp("0,100\n1,120\n4,300\n5,300\n");
        let cfg = IngestConfig {
            resample_period: Some(1.0),
            max_gap: 10.0,
            ..Default::default()
        };
        let loaded = load_series(f.path(), &cfg).unwrap();
        assert_eq!(loaded.segments.len(), 1);
        assert_eq!(loaded.segments[0].values(), &[100.0, 120.0, 120.0, 120.0, 300.0, 300.0]);
        assert_eq!(loaded.gaps, vec![GapReport { start: 1.0, end: 4.0, filled: true }]);
    }

    #[test]
    fn zero_fill_and_long_gap_split() {
        let f = write_tmp("0,100\n1,100\n3,100\n4,100\n100,50\n101,50\n");
        let cfg = IngestConfig {
            resample_period: Some(1.0),
            max_gap: 10.0,
            gap_fill: GapFill::ZeroFill,
            ..Default::default()
        };
        let loaded = load_series(f.path(), &cfg).unwrap();
        assert_eq!(loaded.segments.len(), 2);
        assert_eq!(loaded.segments[0].values(), &[100.0, 100.0, 0.0, 100.0, 100.0]);
        assert_eq!(loaded.segments[1].timestamps(), &[100.0, 101.0]);
        assert!(!loaded.gaps[1].filled);
    }

    #[test]
    fn negative_reading_rejected_with_line() {
        let f = write_tmp("0,100\n1,-5\n2,100\n");
        let cfg = IngestConfig {
            negative_policy: NegativePolicy::Reject,
            ..Default::default()
        };
        match load_series(f.path(), &cfg) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn negative_reading_clamped_by_default() {
        let f = write_tmp("0,100\n1,-5\n2,100\n");
        let loaded = load_series(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(loaded.segments[0].values(), &[100.0, 0.0, 100.0]);
        assert_eq!(loaded.clamped, 1);
    }

    #[test]
    fn header_tab_and_iso_timestamps() {
        let f = write_tmp(
            "time\tpower\n2016-03-06T00:00:00Z\t10\n2016-03-06 00:00:01\t20\n2016-03-06T00:00:02\t30\n",
        );
        let loaded = load_series(f.path(), &IngestConfig::default()).unwrap();
        let s = &loaded.segments[0];
        assert_eq!(s.values(), &[10.0, 20.0, 30.0]);
        assert_eq!(s.timestamps()[0], 1_457_222_400.0);
    }

    #[test]
    fn garbage_row_reports_line() {
        let f = write_tmp("0,100\n1,abc\n");
        match load_series(f.path(), &IngestConfig::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_series("/nonexistent/power.csv", &IngestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn empty_after_validation() {
        let f = write_tmp("time,power\n");
        assert!(matches!(
            load_series(f.path(), &IngestConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn non_increasing_timestamps_rejected() {
        let f = write_tmp("0,1\n2,1\n2,1\n");
        assert!(matches!(
            load_series(f.path(), &IngestConfig::default()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn resample_bin_means() {
        let s = PowerSeries::new(0.0, 1.0, vec![100.0, 100.0, 200.0, 200.0]).unwrap();
        let r = resample(&s, 2.0).unwrap();
        assert_eq!(r.values(), &[100.0, 200.0]);
        assert_eq!(r.sample_period(), 2.0);
        assert_eq!(r.timestamps(), &[0.0, 2.0]);

        let s = PowerSeries::new(0.0, 1.0, vec![0.0, 300.0, 600.0]).unwrap();
        assert_eq!(resample(&s, 3.0).unwrap().values(), &[300.0]);
    }

    #[test]
    fn resample_identity_and_upsampling_error() {
        let s = PowerSeries::new(5.0, 2.0, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(resample(&s, 2.0).unwrap(), s);
        assert!(resample(&s, 1.0).is_err());
    }

    #[test]
    fn mae_examples() {
        let truth = [1.0, 2.0, 3.0];
        assert_eq!(mean_absolute_error(&truth, &truth).unwrap(), 0.0);
        let shifted: Vec<f64> = truth.iter().map(|t| t + 5.0).collect();
        assert_eq!(mean_absolute_error(&shifted, &truth).unwrap(), 5.0);
        assert_eq!(mean_absolute_error(&[0.0, 10.0], &[10.0, 30.0]).unwrap(), 15.0);
        assert!(mean_absolute_error(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mean_absolute_error(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn resample_is_idempotent(values in prop::collection::vec(0.0f64..5000.0, 1..200), factor in 1usize..6) {
            let s = PowerSeries::new(0.0, 1.0, values).unwrap();
            let once = resample(&s, factor as f64).unwrap();
            let twice = resample(&once, factor as f64).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn mae_symmetric_nonnegative(pairs in prop::collection::vec((0.0f64..1e4, 0.0f64..1e4), 1..100)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ab = mean_absolute_error(&a, &b).unwrap();
            let ba = mean_absolute_error(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab == 0.0, a == b);
        }
    }
}
