//! Forecast scores on the 0-100 scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} observations")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("series of length {len} is shorter than the SSIM window {window}")]
    TooShort { len: usize, window: usize },
    #[error("invalid SSIM config: {0}")]
    Config(String),
}

/// Mean absolute residual.
pub fn scaled_mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Uniform-window SSIM parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub data_range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            data_range: 100.0,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    fn validate(&self) -> Result<(), MetricError> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(MetricError::Config(format!("window {} must be odd", self.window)));
        }
        if !(self.c1() > 0.0 && self.c2() > 0.0) {
            return Err(MetricError::Config("C1 and C2 must be positive".into()));
        }
        Ok(())
    }
}

/// Mean SSIM over all stride-1 windows. Window statistics use population
/// (1/n) moments. The result lies in `[-1, 1]` and is 1 for identical inputs.
pub fn ssim_1d(a: &[f64], b: &[f64], cfg: &SsimConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    let w = cfg.window;
    if a.len() < w {
        return Err(MetricError::TooShort { len: a.len(), window: w });
    }
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let n = w as f64;
    let windows = a.len() - w + 1;
    let mut total = 0.0;
    for start in 0..windows {
        let xa = &a[start..start + w];
        let xb = &b[start..start + w];
        let ma = xa.iter().sum::<f64>() / n;
        let mb = xb.iter().sum::<f64>() / n;
        let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
        for (p, q) in xa.iter().zip(xb) {
            let (da, db) = (p - ma, q - mb);
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
        va /= n;
        vb /= n;
        cov /= n;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    Ok(total / windows as f64)
}
