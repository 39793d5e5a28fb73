//! Reference grid transcribed from published per-lag and permutation
//! tables. Used to exercise classification and rendering without training.

use thiserror::Error;

use trendlag::importance::{classify_cell, GridReport, LagCellResult, PermutationStatus, Provenance, RunSummary};
use trendlag::train::{StopReason, TrainConfig};

pub const REFERENCE_CELLS: &str = include_str!("../fixtures/reference_cells.csv");
pub const REFERENCE_BASELINE: f64 = 12.18;
pub const REFERENCE_LAGS: [i32; 5] = [-1, 0, 1, 2, 3];

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("reference row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("reference csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct ReferenceCell {
    pub feature: String,
    pub lag: i32,
    pub mae_original: f64,
    pub mae_baseline: f64,
    /// Lowest permuted MAE; only present for cells that beat the baseline.
    pub perm_mae_min: Option<f64>,
}

pub fn reference_cells() -> Result<Vec<ReferenceCell>, ReferenceError> {
    let mut rdr = csv::Reader::from_reader(REFERENCE_CELLS.as_bytes());
    let cells: Vec<ReferenceCell> = rdr.deserialize().collect::<Result<_, _>>()?;
    for (i, c) in cells.iter().enumerate() {
        let improves = c.mae_original < c.mae_baseline;
        if improves != c.perm_mae_min.is_some() {
            return Err(ReferenceError::Row {
                row: i + 2,
                message: format!("{} lag {}: permuted value present iff the cell improves", c.feature, c.lag),
            });
        }
    }
    Ok(cells)
}

fn placeholder_run(label: String, mae: f64) -> RunSummary {
    RunSummary {
        label,
        mae,
        ssim: None,
        best_epoch: 0,
        epochs: 0,
        stop_reason: StopReason::Patience,
        weight_checksum: String::new(),
        recipe_checksum: String::new(),
        train_windows: 0,
        validation_windows: 0,
    }
}

/// The reference cells as a [`GridReport`] with K = 1 (the lowest permuted
/// value stands in for the permutation set).
pub fn reference_report() -> Result<GridReport, ReferenceError> {
    let rows = reference_cells()?;
    let mut features: Vec<String> = Vec::new();
    for r in &rows {
        if !features.contains(&r.feature) {
            features.push(r.feature.clone());
        }
    }
    let cells = rows
        .iter()
        .map(|r| {
            let pi = r.perm_mae_min.map(|p| p - r.mae_original);
            let class = classify_cell(r.mae_original, r.mae_baseline, pi.unwrap_or(f64::NAN));
            LagCellResult {
                feature: r.feature.clone(),
                lag: r.lag,
                mae_original: Some(r.mae_original),
                mae_baseline: r.mae_baseline,
                perm_maes: r.perm_mae_min.into_iter().collect(),
                pi,
                perm_mean: r.perm_mae_min,
                perm_max: r.perm_mae_min,
                improves: class.improves,
                significant: class.significant,
                permutation: if pi.is_some() { PermutationStatus::Done } else { PermutationStatus::Skipped },
                original: Some(placeholder_run(format!("cell/{}/lag={}", r.feature, r.lag), r.mae_original)),
                permuted: Vec::new(),
                permuted_feature_checksums: Vec::new(),
                failure: None,
            }
        })
        .collect();
    Ok(GridReport {
        target_id: "reference".into(),
        features,
        lags: REFERENCE_LAGS.to_vec(),
        permutations: 1,
        mae_baseline: REFERENCE_BASELINE,
        baseline: placeholder_run("baseline".into(), REFERENCE_BASELINE),
        cells,
        provenance: Provenance {
            master_seed: 0,
            rng_algorithm: String::new(),
            train_config: TrainConfig::default(),
            network: String::new(),
            split_fraction: 0.8,
            target_checksum: String::new(),
            feature_checksums: Vec::new(),
            notes: vec!["reference values transcribed from tables; no models were trained".into()],
            run_config: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_complete() {
        let r = reference_report().unwrap();
        assert_eq!(r.features.len(), 8);
        assert_eq!(r.cells.len(), 40);
        for f in &r.features {
            for l in REFERENCE_LAGS {
                assert!(r.cell(f, l).is_some(), "{f} {l}");
            }
        }
    }
}
