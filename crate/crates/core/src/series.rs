//! Weekly series construction: incident aggregation, global-max scaling,
//! lag shifting, seasonal dummies, windowing and the chronological split.
//!
//! Weeks are flat seven-day blocks anchored at an epoch date, not ISO weeks.
//! Bucket `i` covers `[epoch + 7i, epoch + 7i + 6]`.

use std::ops::Range;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weeks of history per input window.
pub const INPUT_WEEKS: usize = 5;
/// Weeks forecast per window.
pub const HORIZON: usize = 4;
pub const WEEK_DUMMIES: usize = 53;
pub const MONTH_DUMMIES: usize = 12;
pub const DEFAULT_SPLIT: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("row {row}: date {date} outside [{start}, {end}]")]
    OutOfRange {
        row: usize,
        date: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("end date {end} precedes epoch {epoch}")]
    EmptyRange { epoch: NaiveDate, end: NaiveDate },
    #[error("cannot scale an all-zero series")]
    AllZero,
    #[error("series is empty")]
    Empty,
    #[error("invalid {kind:?} value {value} at week {index}")]
    InvalidValue {
        kind: SeriesKind,
        index: usize,
        value: f64,
    },
    #[error("lag {lag} needs |lag| < series length {len}")]
    LagTooLarge { lag: i32, len: usize },
    #[error("{what}: need at least {min} rows, have {rows}")]
    TooFewRows {
        what: &'static str,
        rows: usize,
        min: usize,
    },
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("series misaligned: {0}")]
    Misaligned(String),
}

pub type Result<T, E = SeriesError> = std::result::Result<T, E>;

/// One week bucket relative to an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CalendarWeek {
    pub index: usize,
    pub epoch: NaiveDate,
}

impl CalendarWeek {
    /// Bucket holding `date`, or `None` before the epoch.
    pub fn containing(epoch: NaiveDate, date: NaiveDate) -> Option<Self> {
        let days = (date - epoch).num_days();
        (days >= 0).then(|| Self {
            index: (days / 7) as usize,
            epoch,
        })
    }

    pub fn start(&self) -> NaiveDate {
        self.epoch + Duration::days(7 * self.index as i64)
    }

    /// 1-based position of the block within its calendar year, capped at 53.
    pub fn week_of_year(&self) -> usize {
        (self.start().ordinal0() as usize / 7 + 1).min(WEEK_DUMMIES)
    }

    /// 1-based month of the block's first day.
    pub fn month(&self) -> usize {
        self.start().month() as usize
    }
}

/// Number of seven-day buckets needed to cover `[epoch, end]` inclusive.
pub fn bucket_count(epoch: NaiveDate, end: NaiveDate) -> Result<usize> {
    let days = (end - epoch).num_days() + 1;
    if days <= 0 {
        return Err(SeriesError::EmptyRange { epoch, end });
    }
    Ok((days as usize).div_ceil(7))
}

/// Last day covered by `weeks` buckets.
pub fn last_day(epoch: NaiveDate, weeks: usize) -> NaiveDate {
    epoch + Duration::days(7 * weeks as i64 - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub date: NaiveDate,
    /// Free-text annotations (bias, offense). Retained, never used.
    pub tags: Vec<String>,
    /// 1-based source row for diagnostics; 0 when not from a file.
    pub row: usize,
}

impl IncidentRecord {
    pub fn on(date: NaiveDate) -> Self {
        Self {
            date,
            tags: Vec::new(),
            row: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    /// Non-negative integer counts.
    RawCount,
    /// Target scaled so its global maximum is exactly 100.
    Scaled,
    /// Exogenous interest index already on a 0-100 scale.
    Index,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    epoch: NaiveDate,
    values: Vec<f64>,
    kind: SeriesKind,
}

impl WeeklySeries {
    pub fn new(epoch: NaiveDate, values: Vec<f64>, kind: SeriesKind) -> Result<Self> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (index, &value) in values.iter().enumerate() {
            let ok = value.is_finite()
                && match kind {
                    SeriesKind::RawCount => value >= 0.0 && value.fract() == 0.0,
                    SeriesKind::Scaled | SeriesKind::Index => (0.0..=100.0).contains(&value),
                };
            if !ok {
                return Err(SeriesError::InvalidValue { kind, index, value });
            }
        }
        if kind == SeriesKind::Scaled && !values.contains(&100.0) {
            return Err(SeriesError::Misaligned(
                "scaled series must reach 100 at its maximum".into(),
            ));
        }
        Ok(Self {
            epoch,
            values,
            kind,
        })
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn week(&self, index: usize) -> CalendarWeek {
        CalendarWeek {
            index,
            epoch: self.epoch,
        }
    }

    /// Same calendar and kind, new values. Used for permuted copies.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(SeriesError::Misaligned(format!(
                "replacement has {} weeks, series has {}",
                values.len(),
                self.values.len()
            )));
        }
        Self::new(self.epoch, values, self.kind)
    }
}

/// Counts incidents per seven-day bucket over `[epoch, end]`.
pub fn aggregate_weekly(incidents: &[IncidentRecord], epoch: NaiveDate, end: NaiveDate) -> Result<WeeklySeries> {
    let weeks = bucket_count(epoch, end)?;
    aggregate_into(incidents, epoch, weeks, end)
}

/// Counts incidents into a fixed number of buckets; every date must fall in
/// `[epoch, epoch + 7 * weeks - 1]`.
pub fn aggregate_weeks(incidents: &[IncidentRecord], epoch: NaiveDate, weeks: usize) -> Result<WeeklySeries> {
    if weeks == 0 {
        return Err(SeriesError::Empty);
    }
    aggregate_into(incidents, epoch, weeks, last_day(epoch, weeks))
}

fn aggregate_into(incidents: &[IncidentRecord], epoch: NaiveDate, weeks: usize, end: NaiveDate) -> Result<WeeklySeries> {
    let mut counts = vec![0.0; weeks];
    for (i, rec) in incidents.iter().enumerate() {
        let row = if rec.row > 0 { rec.row } else { i + 1 };
        let out = || SeriesError::OutOfRange {
            row,
            date: rec.date,
            start: epoch,
            end,
        };
        if rec.date > end {
            return Err(out());
        }
        let week = CalendarWeek::containing(epoch, rec.date).ok_or_else(out)?;
        counts[week.index] += 1.0;
    }
    WeeklySeries::new(epoch, counts, SeriesKind::RawCount)
}

/// `out[i] = 100 * values[i] / max(values)`.
pub fn scale_global_max(series: &WeeklySeries) -> Result<WeeklySeries> {
    let max = series.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(SeriesError::AllZero);
    }
    let values = series
        .values
        .iter()
        .map(|&v| if v == max { 100.0 } else { 100.0 * v / max })
        .collect();
    WeeklySeries::new(series.epoch, values, SeriesKind::Scaled)
}

/// A series shifted in time; `None` marks weeks without a source value.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedSeries {
    pub lag: i32,
    pub values: Vec<Option<f64>>,
}

/// `out[i] = in[i - lag]`. Positive lags look further back; `lag = -1`
/// brings next week's value forward.
pub fn apply_lag(series: &WeeklySeries, lag: i32) -> Result<LaggedSeries> {
    let n = series.len();
    if lag.unsigned_abs() as usize >= n {
        return Err(SeriesError::LagTooLarge { lag, len: n });
    }
    let values = (0..n as i64)
        .map(|i| {
            let src = i - lag as i64;
            (0..n as i64).contains(&src).then(|| series.values[src as usize])
        })
        .collect();
    Ok(LaggedSeries { lag, values })
}

/// Per-week model inputs.
///
/// Channel layout per row: scaled target history, then the lagged exogenous
/// value when present, then a 53-wide week-of-year one-hot and a 12-wide
/// month one-hot. Rows whose lagged exogenous value is missing are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    weeks: Vec<usize>,
    channels: usize,
    data: Vec<f64>,
    target: Vec<f64>,
    lag: Option<i32>,
}

impl FeatureMatrix {
    /// History and seasonal dummies only.
    pub fn baseline(target: &WeeklySeries) -> Result<Self> {
        Self::build(target, None)
    }

    /// [`baseline`](Self::baseline) plus an all-zero exogenous slot, giving
    /// the same width as a feature matrix. The slot never receives gradient,
    /// so the fitted model is still history plus seasonality, but it starts
    /// from the same initial weights as the feature models.
    pub fn baseline_matched(target: &WeeklySeries) -> Result<Self> {
        let zeros = LaggedSeries {
            lag: 0,
            values: vec![Some(0.0); target.len()],
        };
        let mut m = Self::build(target, Some(&zeros))?;
        m.lag = None;
        Ok(m)
    }

    /// History, seasonal dummies and `feature` shifted by `lag`.
    pub fn with_exogenous(target: &WeeklySeries, feature: &WeeklySeries, lag: i32) -> Result<Self> {
        if feature.epoch() != target.epoch() || feature.len() != target.len() {
            return Err(SeriesError::Misaligned(format!(
                "target {} weeks from {}, feature {} weeks from {}",
                target.len(),
                target.epoch(),
                feature.len(),
                feature.epoch()
            )));
        }
        let lagged = apply_lag(feature, lag)?;
        Self::build(target, Some(&lagged))
    }

    fn build(target: &WeeklySeries, exogenous: Option<&LaggedSeries>) -> Result<Self> {
        if target.kind() != SeriesKind::Scaled {
            return Err(SeriesError::Misaligned(
                "feature matrices are built from the scaled target".into(),
            ));
        }
        let exo_channels = usize::from(exogenous.is_some());
        let channels = 1 + exo_channels + WEEK_DUMMIES + MONTH_DUMMIES;
        let mut weeks = Vec::new();
        let mut data = Vec::new();
        let mut tgt = Vec::new();
        for (i, &h) in target.values().iter().enumerate() {
            let exo = match exogenous {
                Some(l) => match l.values[i] {
                    Some(v) => Some(v),
                    None => continue,
                },
                None => None,
            };
            let week = target.week(i);
            let start = data.len();
            data.resize(start + channels, 0.0);
            let row = &mut data[start..];
            row[0] = h;
            if let Some(v) = exo {
                row[1] = v;
            }
            let dummies = 1 + exo_channels;
            row[dummies + week.week_of_year() - 1] = 1.0;
            row[dummies + WEEK_DUMMIES + week.month() - 1] = 1.0;
            weeks.push(i);
            tgt.push(h);
        }
        Ok(Self {
            weeks,
            channels,
            data,
            target: tgt,
            lag: exogenous.map(|l| l.lag),
        })
    }

    pub fn rows(&self) -> usize {
        self.weeks.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Scaled target value of each row.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Week index of each row.
    pub fn weeks(&self) -> &[usize] {
        &self.weeks
    }

    pub fn lag(&self) -> Option<i32> {
        self.lag
    }

    pub fn has_exogenous(&self) -> bool {
        self.lag.is_some()
    }

    /// Contiguous row range as its own matrix.
    pub fn slice(&self, rows: Range<usize>) -> Self {
        Self {
            weeks: self.weeks[rows.clone()].to_vec(),
            channels: self.channels,
            data: self.data[rows.start * self.channels..rows.end * self.channels].to_vec(),
            target: self.target[rows].to_vec(),
            lag: self.lag,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// `input_len x channels`, row-major.
    pub inputs: Vec<f64>,
    /// Scaled target values of the following `horizon` weeks.
    pub targets: Vec<f64>,
    pub input_weeks: Range<usize>,
    pub target_weeks: Range<usize>,
}

/// Stride-`stride` windows: sample `k` reads rows `[k*s, k*s + in_len)` and
/// targets rows `[k*s + in_len, k*s + in_len + horizon)`.
pub fn make_windows(matrix: &FeatureMatrix, in_len: usize, horizon: usize, stride: usize) -> Result<Vec<WindowSample>> {
    let min = in_len + horizon;
    if in_len == 0 || horizon == 0 || stride == 0 {
        return Err(SeriesError::Misaligned(
            "window length, horizon and stride must be >= 1".into(),
        ));
    }
    if matrix.rows() < min {
        return Err(SeriesError::TooFewRows {
            what: "windowing",
            rows: matrix.rows(),
            min,
        });
    }
    let c = matrix.channels();
    let weeks = matrix.weeks();
    let mut out = Vec::new();
    let mut k = 0;
    while k + min <= matrix.rows() {
        let inputs = matrix.data[k * c..(k + in_len) * c].to_vec();
        let targets = matrix.target[k + in_len..k + min].to_vec();
        out.push(WindowSample {
            inputs,
            targets,
            input_weeks: weeks[k]..weeks[k + in_len - 1] + 1,
            target_weeks: weeks[k + in_len]..weeks[k + min - 1] + 1,
        });
        k += stride;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    pub split_fraction: f64,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub channels: usize,
    pub input_len: usize,
    pub horizon: usize,
}

impl SplitDataset {
    /// Every week touched by a training window is absent from every
    /// validation window.
    pub fn is_disjoint(&self) -> bool {
        let mut train_weeks = std::collections::BTreeSet::new();
        for w in &self.train {
            train_weeks.extend(w.input_weeks.clone());
            train_weeks.extend(w.target_weeks.clone());
        }
        let overlap = self.validation.iter().any(|w| {
            w.input_weeks
                .clone()
                .chain(w.target_weeks.clone())
                .any(|wk| train_weeks.contains(&wk))
        });
        !overlap
    }
}

/// First `floor(fraction * rows)` rows train, the rest validate; each
/// segment is windowed on its own so no week is shared.
pub fn chronological_split(matrix: &FeatureMatrix, fraction: f64) -> Result<SplitDataset> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SeriesError::BadFraction(fraction));
    }
    let cut = (fraction * matrix.rows() as f64).floor() as usize;
    let min = INPUT_WEEKS + HORIZON;
    if cut < min {
        return Err(SeriesError::TooFewRows {
            what: "training segment",
            rows: cut,
            min,
        });
    }
    if matrix.rows() - cut < min {
        return Err(SeriesError::TooFewRows {
            what: "validation segment",
            rows: matrix.rows() - cut,
            min,
        });
    }
    let train_m = matrix.slice(0..cut);
    let val_m = matrix.slice(cut..matrix.rows());
    Ok(SplitDataset {
        train: make_windows(&train_m, INPUT_WEEKS, HORIZON, 1)?,
        validation: make_windows(&val_m, INPUT_WEEKS, HORIZON, 1)?,
        split_fraction: fraction,
        train_rows: cut,
        validation_rows: matrix.rows() - cut,
        channels: matrix.channels(),
        input_len: INPUT_WEEKS,
        horizon: HORIZON,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn scaled(n: usize) -> WeeklySeries {
        let raw: Vec<f64> = (0..n).map(|i| (i % 17 + 1) as f64).collect();
        scale_global_max(&WeeklySeries::new(d("2015-01-01"), raw, SeriesKind::RawCount).unwrap()).unwrap()
    }

    #[test]
    fn same_block_shares_bucket() {
        let inc = [IncidentRecord::on(d("2015-01-01")), IncidentRecord::on(d("2015-01-03"))];
        let s = aggregate_weekly(&inc, d("2015-01-01"), d("2015-01-20")).unwrap();
        assert_eq!(s.values()[0], 2.0);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn out_of_range_names_row() {
        let inc = [
            IncidentRecord::on(d("2015-01-02")),
            IncidentRecord::on(d("2014-12-31")),
        ];
        let err = aggregate_weekly(&inc, d("2015-01-01"), d("2015-02-01")).unwrap_err();
        assert!(matches!(err, SeriesError::OutOfRange { row: 2, .. }), "{err}");
    }

    #[test]
    fn five_year_span_bucket_count() {
        // 1826 days -> 260.86 blocks -> 261 buckets.
        assert_eq!(bucket_count(d("2015-01-01"), d("2019-12-31")).unwrap(), 261);
        assert_eq!(last_day(d("2015-01-01"), 262), d("2020-01-08"));
    }

    #[test]
    fn scaling_examples() {
        let e = d("2015-01-01");
        let s = scale_global_max(&WeeklySeries::new(e, vec![1.0, 20.0, 7.0], SeriesKind::RawCount).unwrap()).unwrap();
        assert_eq!(s.values(), &[5.0, 100.0, 35.0]);
        let c = scale_global_max(&WeeklySeries::new(e, vec![3.0; 3], SeriesKind::RawCount).unwrap()).unwrap();
        assert_eq!(c.values(), &[100.0; 3]);
        let z = WeeklySeries::new(e, vec![0.0; 3], SeriesKind::RawCount).unwrap();
        assert_eq!(scale_global_max(&z), Err(SeriesError::AllZero));
    }

    #[test]
    fn raw_counts_must_be_non_negative_integers() {
        let e = d("2015-01-01");
        assert!(WeeklySeries::new(e, vec![1.5], SeriesKind::RawCount).is_err());
        assert!(WeeklySeries::new(e, vec![-1.0], SeriesKind::RawCount).is_err());
        assert!(WeeklySeries::new(e, vec![101.0], SeriesKind::Index).is_err());
    }

    #[test]
    fn lag_shift_semantics() {
        let s = WeeklySeries::new(d("2015-01-01"), vec![1.0, 2.0, 3.0, 4.0], SeriesKind::Index).unwrap();
        assert_eq!(apply_lag(&s, 0).unwrap().values, vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)]);
        assert_eq!(apply_lag(&s, 1).unwrap().values, vec![None, Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(apply_lag(&s, -1).unwrap().values, vec![Some(2.0), Some(3.0), Some(4.0), None]);
        assert!(apply_lag(&s, 4).is_err());
        assert!(apply_lag(&s, -4).is_err());
    }

    #[test]
    fn dummies_are_one_hot() {
        let t = scaled(120);
        let f = WeeklySeries::new(t.epoch(), vec![50.0; 120], SeriesKind::Index).unwrap();
        let m = FeatureMatrix::with_exogenous(&t, &f, 2).unwrap();
        assert_eq!(m.channels(), 67);
        assert_eq!(m.rows(), 118);
        for r in 0..m.rows() {
            let row = m.row(r);
            assert_eq!(row[2..55].iter().sum::<f64>(), 1.0);
            assert_eq!(row[55..67].iter().sum::<f64>(), 1.0);
        }
        // First retained row is week 2: 2015-01-15, block 3 of the year, January.
        assert_eq!(m.weeks()[0], 2);
        assert_eq!(m.row(0)[2 + 2], 1.0);
        assert_eq!(m.row(0)[55], 1.0);
    }

    #[test]
    fn window_counts() {
        let m = FeatureMatrix::baseline(&scaled(262)).unwrap();
        assert_eq!(make_windows(&m, 5, 4, 1).unwrap().len(), 254);
        let nine = m.slice(0..9);
        assert_eq!(make_windows(&nine, 5, 4, 1).unwrap().len(), 1);
        let eight = m.slice(0..8);
        assert!(matches!(
            make_windows(&eight, 5, 4, 1),
            Err(SeriesError::TooFewRows { min: 9, .. })
        ));
    }

    #[test]
    fn split_262_weeks() {
        let m = FeatureMatrix::baseline(&scaled(262)).unwrap();
        let s = chronological_split(&m, 0.8).unwrap();
        assert_eq!((s.train_rows, s.validation_rows), (209, 53));
        assert_eq!((s.train.len(), s.validation.len()), (201, 45));
        assert!(s.is_disjoint());
        assert_eq!(chronological_split(&m, 1.0), Err(SeriesError::BadFraction(1.0)));
    }
}
