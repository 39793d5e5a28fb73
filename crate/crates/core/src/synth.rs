//! Planted-signal datasets with a known coupling coefficient and lag.
//!
//! ```text
//! x_t  integer random walk, clipped to [0, 100]
//! y_t  = round(max(0, base + alpha * x_{t - lag} + amp * sin(2 pi t / 52) + eps_t))
//! eps_t ~ N(0, noise_std^2)
//! ```
//!
//! A second walk drawn from an unrelated stream serves as the uncoupled
//! control feature.

use std::f64::consts::PI;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{SeriesKind, WeeklySeries};
use crate::tensor::RngState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub weeks: usize,
    pub alpha: f64,
    pub lag: i32,
    pub base: f64,
    pub seasonal_amplitude: f64,
    pub noise_std: f64,
    /// Standard deviation of the walk increments before rounding.
    pub walk_step: f64,
    pub walk_start: f64,
    pub seed: u64,
    pub epoch: NaiveDate,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            weeks: 262,
            alpha: 0.8,
            lag: 2,
            base: 5.0,
            seasonal_amplitude: 3.0,
            noise_std: 1.0,
            walk_step: 4.0,
            walk_start: 50.0,
            seed: 0,
            epoch: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
        }
    }
}

/// Lags the generator accepts; matches the experiment grid.
pub const SUPPORTED_LAGS: [i32; 5] = [-1, 0, 1, 2, 3];

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.weeks < 60 {
            return bad(format!("need at least 60 weeks, got {}", self.weeks));
        }
        if !SUPPORTED_LAGS.contains(&self.lag) {
            return bad(format!("planted lag {} outside {:?}", self.lag, SUPPORTED_LAGS));
        }
        if !(self.noise_std >= 0.0) || !(self.walk_step >= 0.0) {
            return bad("noise_std and walk_step must be >= 0".into());
        }
        if !(0.0..=100.0).contains(&self.walk_start) {
            return bad("walk_start must lie in [0, 100]".into());
        }
        if ![self.alpha, self.base, self.seasonal_amplitude].iter().all(|v| v.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Raw weekly counts.
    pub target: WeeklySeries,
    /// Walk the target depends on, at `spec.lag`.
    pub planted: WeeklySeries,
    /// Independent walk with no coupling.
    pub noise: WeeklySeries,
    pub spec: SyntheticSpec,
}

/// Integer walk of `len` steps clipped to `[0, 100]`.
pub fn integer_walk(len: usize, start: f64, step: f64, rng: &mut RngState) -> Vec<f64> {
    let mut x = start.round();
    (0..len)
        .map(|i| {
            if i > 0 {
                x = (x + (step * rng.standard_normal()).round()).clamp(0.0, 100.0);
            }
            x
        })
        .collect()
}

pub fn seasonal_term(amplitude: f64, week: usize) -> f64 {
    amplitude * (2.0 * PI * week as f64 / 52.0).sin()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, SynthError> {
    spec.validate()?;
    let t = spec.weeks;
    // The walk extends past both ends so every y_t has a defined x_{t-lag}.
    let before = spec.lag.max(0) as usize;
    let after = (-spec.lag).max(0) as usize;
    let mut walk_rng = RngState::new(spec.seed, "synth/planted-walk");
    let full = integer_walk(before + t + after, spec.walk_start, spec.walk_step, &mut walk_rng);
    let planted: Vec<f64> = full[before..before + t].to_vec();

    let mut noise_rng = RngState::new(spec.seed, "synth/target-noise");
    let target: Vec<f64> = (0..t)
        .map(|i| {
            let x_lag = full[(before as i64 + i as i64 - spec.lag as i64) as usize];
            let eps = if spec.noise_std > 0.0 {
                spec.noise_std * noise_rng.standard_normal()
            } else {
                0.0
            };
            (spec.base + spec.alpha * x_lag + seasonal_term(spec.seasonal_amplitude, i) + eps)
                .max(0.0)
                .round()
        })
        .collect();

    let mut control_rng = RngState::new(spec.seed, "synth/noise-walk");
    let control = integer_walk(t, spec.walk_start, spec.walk_step, &mut control_rng);

    let wrap = |v: Vec<f64>, kind| WeeklySeries::new(spec.epoch, v, kind).map_err(|e| SynthError::Invalid(e.to_string()));
    Ok(SyntheticData {
        target: wrap(target, SeriesKind::RawCount)?,
        planted: wrap(planted, SeriesKind::Index)?,
        noise: wrap(control, SeriesKind::Index)?,
        spec: spec.clone(),
    })
}
