//! Baseline-vs-feature comparison over a lag grid, with retrain-per-permutation
//! importance for the cells that beat the baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{ssim_1d, SsimConfig};
use crate::series::{
    chronological_split, scale_global_max, FeatureMatrix, SeriesError, SeriesKind, SplitDataset, WeeklySeries,
    DEFAULT_SPLIT, MONTH_DUMMIES, WEEK_DUMMIES,
};
use crate::tensor::{NetworkSpec, RngState};
use crate::train::{recipe_checksum, train, StopReason, TrainConfig, TrainError, TrainedModel};

pub const DEFAULT_LAGS: [i32; 5] = [-1, 0, 1, 2, 3];
pub const DEFAULT_PERMUTATIONS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImportanceError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("feature {name:?}: {reason}")]
    Feature { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub target_id: String,
    pub features: Vec<String>,
    pub lags: Vec<i32>,
    /// Permuted retrainings per improving cell. Zero disables the test.
    pub permutations: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub kernel_size: usize,
    pub split_fraction: f64,
}

impl ExperimentPlan {
    pub fn new(target_id: impl Into<String>, features: Vec<String>) -> Self {
        Self {
            target_id: target_id.into(),
            features,
            lags: DEFAULT_LAGS.to_vec(),
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            train: TrainConfig::default(),
            kernel_size: 3,
            split_fraction: DEFAULT_SPLIT,
        }
    }

    pub fn validate(&self) -> Result<(), ImportanceError> {
        let bad = |m: String| Err(ImportanceError::Plan(m));
        if self.lags.is_empty() {
            return bad("lag set is empty".into());
        }
        for (i, l) in self.lags.iter().enumerate() {
            if self.lags[..i].contains(l) {
                return bad(format!("lag {l} listed twice"));
            }
        }
        for (i, f) in self.features.iter().enumerate() {
            if f.is_empty() {
                return bad("empty feature id".into());
            }
            if self.features[..i].contains(f) {
                return bad(format!("feature {f:?} listed twice"));
            }
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return bad(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction {} outside (0, 1)", self.split_fraction));
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn network_spec(&self, channels: usize) -> NetworkSpec {
        NetworkSpec {
            kernel_size: self.kernel_size,
            ..NetworkSpec::forecaster(channels)
        }
    }

    fn config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedSeries {
    pub name: String,
    pub series: WeeklySeries,
}

/// Target plus candidate features, calendar-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub target: WeeklySeries,
    pub features: Vec<NamedSeries>,
}

impl ExperimentData {
    pub fn feature(&self, name: &str) -> Option<&WeeklySeries> {
        self.features.iter().find(|f| f.name == name).map(|f| &f.series)
    }
}

/// Summary of one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub mae: f64,
    pub ssim: Option<f64>,
    pub best_epoch: usize,
    pub epochs: usize,
    pub stop_reason: StopReason,
    pub weight_checksum: String,
    pub recipe_checksum: String,
    pub train_windows: usize,
    pub validation_windows: usize,
}

/// Fitted-model summary plus its epoch log.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub summary: RunSummary,
    pub log: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationStatus {
    Done,
    /// The cell did not beat the baseline.
    Skipped,
    /// The plan asked for zero permutations.
    Disabled,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCellResult {
    pub feature: String,
    pub lag: i32,
    pub mae_original: Option<f64>,
    pub mae_baseline: f64,
    pub perm_maes: Vec<f64>,
    pub pi: Option<f64>,
    pub perm_mean: Option<f64>,
    pub perm_max: Option<f64>,
    pub improves: bool,
    pub significant: bool,
    pub permutation: PermutationStatus,
    pub original: Option<RunSummary>,
    pub permuted: Vec<RunSummary>,
    /// SHA-256 of each permuted feature series, in permutation order.
    pub permuted_feature_checksums: Vec<String>,
    pub failure: Option<String>,
}

impl LagCellResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub rng_algorithm: String,
    pub train_config: TrainConfig,
    pub network: String,
    pub split_fraction: f64,
    pub target_checksum: String,
    pub feature_checksums: Vec<(String, String)>,
    pub notes: Vec<String>,
    /// Fully resolved run configuration, filled in by the caller.
    pub run_config: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub target_id: String,
    pub features: Vec<String>,
    pub lags: Vec<i32>,
    pub permutations: usize,
    pub mae_baseline: f64,
    pub baseline: RunSummary,
    /// Feature-major, in plan order.
    pub cells: Vec<LagCellResult>,
    pub provenance: Provenance,
}

impl GridReport {
    pub fn cell(&self, feature: &str, lag: i32) -> Option<&LagCellResult> {
        self.cells.iter().find(|c| c.feature == feature && c.lag == lag)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LagCellResult> {
        self.cells.iter().filter(|c| c.failed())
    }

    pub fn significant(&self) -> impl Iterator<Item = &LagCellResult> {
        self.cells.iter().filter(|c| c.significant)
    }

    /// Mean original MAE per feature over the lags that completed.
    pub fn feature_means(&self) -> Vec<(String, Option<f64>)> {
        self.features
            .iter()
            .map(|f| {
                let v: Vec<f64> = self.cells.iter().filter(|c| &c.feature == f).filter_map(|c| c.mae_original).collect();
                let mean = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
                (f.clone(), mean)
            })
            .collect()
    }
}

/// Report plus training logs keyed by run label.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub report: GridReport,
    pub logs: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub improves: bool,
    pub significant: bool,
}

/// `improves` iff the feature model strictly beats the baseline;
/// `significant` iff it improves and `pi > 0`.
pub fn classify_cell(mae_original: f64, mae_baseline: f64, pi: f64) -> Classification {
    let improves = mae_original < mae_baseline;
    Classification {
        improves,
        significant: improves && pi > 0.0,
    }
}

/// Uniform random reordering of the time indices.
pub fn permute_series(series: &WeeklySeries, rng: &mut RngState) -> WeeklySeries {
    let mut values = series.values().to_vec();
    rng.shuffle(&mut values);
    series.with_values(values).expect("a permutation keeps values valid")
}

pub fn series_checksum(series: &WeeklySeries) -> String {
    let mut h = Sha256::new();
    h.update(series.epoch().to_string().as_bytes());
    for v in series.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Target on the 0-100 scale; raw counts are scaled by their maximum.
pub fn prepare_target(target: &WeeklySeries) -> Result<WeeklySeries, ImportanceError> {
    Ok(match target.kind() {
        SeriesKind::RawCount => scale_global_max(target)?,
        _ => target.clone(),
    })
}

/// Every model in a grid draws initial weights, dropout masks and batch
/// order from this stream under the master seed, so two runs that differ
/// only in their input start from the same point.
pub const MODEL_STREAM: &str = "model";

pub fn baseline_label() -> String {
    "baseline".to_string()
}

pub fn cell_label(feature: &str, lag: i32) -> String {
    format!("cell/{feature}/lag={lag}")
}

pub fn perm_label(feature: &str, lag: i32, k: usize) -> String {
    format!("perm/{feature}/lag={lag}/k={k}")
}

fn fit(matrix: &FeatureMatrix, plan: &ExperimentPlan, label: String) -> Result<ModelRun, ImportanceError> {
    let data: SplitDataset = chronological_split(matrix, plan.split_fraction)?;
    let spec = plan.network_spec(data.channels);
    let cfg = plan.config();
    let model: TrainedModel = train(&spec, &data, &cfg, MODEL_STREAM)?;
    let preds = model.predict(&data.validation)?;
    let p1: Vec<f64> = preds.iter().map(|p| p[0]).collect();
    let t1: Vec<f64> = data.validation.iter().map(|s| s.targets[0]).collect();
    let ssim = ssim_1d(&p1, &t1, &SsimConfig::default()).ok();
    let mae = model.mae_on(&data.validation)?;
    let summary = RunSummary {
        mae,
        ssim,
        best_epoch: model.best_epoch,
        epochs: model.history.len(),
        stop_reason: model.stop_reason,
        weight_checksum: model.weight_checksum.clone(),
        recipe_checksum: recipe_checksum(&cfg, &spec),
        train_windows: data.train.len(),
        validation_windows: data.validation.len(),
        label: label.clone(),
    };
    let log = format!("# run {label}\n# mae {mae:.6}\n{}", model.log_table());
    Ok(ModelRun { summary, log })
}

/// Fits the history-plus-seasonality model. `target` must already be on the
/// 0-100 scale. The exogenous channel is present but held at zero, so the
/// baseline and every feature model share their initial weights.
pub fn train_baseline(target: &WeeklySeries, plan: &ExperimentPlan) -> Result<ModelRun, ImportanceError> {
    plan.validate()?;
    let matrix = FeatureMatrix::baseline_matched(target)?;
    fit(&matrix, plan, baseline_label())
}

/// Fits the model with `feature` as an extra channel at lag `lag`.
pub fn evaluate_feature_lag(
    target: &WeeklySeries,
    name: &str,
    feature: &WeeklySeries,
    lag: i32,
    plan: &ExperimentPlan,
) -> Result<ModelRun, ImportanceError> {
    plan.validate()?;
    let matrix = FeatureMatrix::with_exogenous(target, feature, lag)?;
    fit(&matrix, plan, cell_label(name, lag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationOutcome {
    pub runs: Vec<ModelRun>,
    pub perm_maes: Vec<f64>,
    pub permuted_checksums: Vec<String>,
    /// `min(perm_maes) - mae_original`; `None` when `K = 0`.
    pub pi: Option<f64>,
}

/// Retrains from scratch on `K` independently permuted copies of the raw
/// feature and evaluates each on its own validation windows.
pub fn permutation_test(
    target: &WeeklySeries,
    name: &str,
    feature: &WeeklySeries,
    lag: i32,
    mae_original: f64,
    plan: &ExperimentPlan,
) -> Result<PermutationOutcome, ImportanceError> {
    plan.validate()?;
    let mut runs = Vec::with_capacity(plan.permutations);
    let mut checksums = Vec::with_capacity(plan.permutations);
    for k in 1..=plan.permutations {
        let mut rng = RngState::new(plan.seed, format!("permute/{name}/lag={lag}/k={k}"));
        let permuted = permute_series(feature, &mut rng);
        checksums.push(series_checksum(&permuted));
        let matrix = FeatureMatrix::with_exogenous(target, &permuted, lag)?;
        runs.push(fit(&matrix, plan, perm_label(name, lag, k))?);
    }
    let perm_maes: Vec<f64> = runs.iter().map(|r| r.summary.mae).collect();
    let pi = perm_maes.iter().copied().reduce(f64::min).map(|m| m - mae_original);
    Ok(PermutationOutcome {
        runs,
        perm_maes,
        permuted_checksums: checksums,
        pi,
    })
}

fn check_alignment(data: &ExperimentData, plan: &ExperimentPlan) -> Result<(), ImportanceError> {
    for name in &plan.features {
        let f = data.feature(name).ok_or_else(|| ImportanceError::Feature {
            name: name.clone(),
            reason: "not present in the data".into(),
        })?;
        if f.epoch() != data.target.epoch() || f.len() != data.target.len() {
            return Err(ImportanceError::Feature {
                name: name.clone(),
                reason: format!(
                    "covers {} weeks from {}, target covers {} from {}",
                    f.len(),
                    f.epoch(),
                    data.target.len(),
                    data.target.epoch()
                ),
            });
        }
    }
    Ok(())
}

struct Phase1 {
    run: Result<ModelRun, ImportanceError>,
}

/// Baseline once, then every (feature, lag) cell; cells that beat the
/// baseline get the permutation test. Cells run in parallel and the report
/// is assembled in plan order, so the result is independent of scheduling.
/// A failing cell is recorded and the rest of the grid continues; a failing
/// baseline aborts.
pub fn run_grid(plan: &ExperimentPlan, data: &ExperimentData) -> Result<GridRun, ImportanceError> {
    plan.validate()?;
    check_alignment(data, plan)?;
    let target = prepare_target(&data.target)?;

    let jobs: Vec<(&str, i32)> = plan
        .features
        .iter()
        .flat_map(|f| plan.lags.iter().map(move |&l| (f.as_str(), l)))
        .collect();

    let (baseline, phase1) = rayon::join(
        || train_baseline(&target, plan),
        || {
            jobs.par_iter()
                .map(|&(name, lag)| {
                    let feature = data.feature(name).expect("checked above");
                    Phase1 {
                        run: evaluate_feature_lag(&target, name, feature, lag, plan),
                    }
                })
                .collect::<Vec<_>>()
        },
    );
    let baseline = baseline?;
    let mae_baseline = baseline.summary.mae;

    let phase2: Vec<Option<Result<PermutationOutcome, ImportanceError>>> = jobs
        .par_iter()
        .zip(phase1.par_iter())
        .map(|(&(name, lag), p1)| {
            let run = p1.run.as_ref().ok()?;
            if !(run.summary.mae < mae_baseline) || plan.permutations == 0 {
                return None;
            }
            let feature = data.feature(name).expect("checked above");
            Some(permutation_test(&target, name, feature, lag, run.summary.mae, plan))
        })
        .collect();

    let mut logs = vec![(baseline_label(), baseline.log.clone())];
    let mut cells = Vec::with_capacity(jobs.len());
    for ((&(name, lag), p1), p2) in jobs.iter().zip(phase1).zip(phase2) {
        let mut cell = LagCellResult {
            feature: name.to_string(),
            lag,
            mae_original: None,
            mae_baseline,
            perm_maes: Vec::new(),
            pi: None,
            perm_mean: None,
            perm_max: None,
            improves: false,
            significant: false,
            permutation: PermutationStatus::Skipped,
            original: None,
            permuted: Vec::new(),
            permuted_feature_checksums: Vec::new(),
            failure: None,
        };
        match p1.run {
            Err(e) => {
                cell.failure = Some(format!("evaluate: {e}"));
                cells.push(cell);
                continue;
            }
            Ok(run) => {
                cell.mae_original = Some(run.summary.mae);
                logs.push((run.summary.label.clone(), run.log));
                cell.original = Some(run.summary);
            }
        }
        let mae = cell.mae_original.expect("set above");
        cell.improves = classify_cell(mae, mae_baseline, f64::NAN).improves;
        match p2 {
            None if cell.improves => cell.permutation = PermutationStatus::Disabled,
            None => {}
            Some(Err(e)) => {
                cell.permutation = PermutationStatus::Failed;
                cell.failure = Some(format!("permutation: {e}"));
            }
            Some(Ok(out)) => {
                cell.permutation = PermutationStatus::Done;
                let pi = out.pi.expect("K >= 1 when the test runs");
                cell.significant = classify_cell(mae, mae_baseline, pi).significant;
                cell.pi = Some(pi);
                cell.perm_mean = Some(out.perm_maes.iter().sum::<f64>() / out.perm_maes.len() as f64);
                cell.perm_max = out.perm_maes.iter().copied().reduce(f64::max);
                cell.perm_maes = out.perm_maes;
                cell.permuted_feature_checksums = out.permuted_checksums;
                for r in out.runs {
                    logs.push((r.summary.label.clone(), r.log));
                    cell.permuted.push(r.summary);
                }
            }
        }
        cells.push(cell);
    }

    let provenance = Provenance {
        master_seed: plan.seed,
        rng_algorithm: RngState::ALGORITHM.to_string(),
        train_config: plan.config(),
        network: plan.network_spec(2 + WEEK_DUMMIES + MONTH_DUMMIES).describe(),
        split_fraction: plan.split_fraction,
        target_checksum: series_checksum(&data.target),
        feature_checksums: plan
            .features
            .iter()
            .map(|f| (f.clone(), series_checksum(data.feature(f).expect("checked above"))))
            .collect(),
        notes: vec![
            "validation windows serve both early stopping and the reported MAE; there is no separate test split".into(),
            "pi is the minimum over permutations minus the original MAE; perm_mean and perm_max are diagnostics".into(),
        ],
        run_config: None,
    };
    Ok(GridRun {
        report: GridReport {
            target_id: plan.target_id.clone(),
            features: plan.features.clone(),
            lags: plan.lags.clone(),
            permutations: plan.permutations,
            mae_baseline,
            baseline: baseline.summary,
            cells,
            provenance,
        },
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn series(values: Vec<f64>) -> WeeklySeries {
        WeeklySeries::new(NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(), values, SeriesKind::Index).unwrap()
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify_cell(11.39, 12.18, 12.72 - 11.39),
            Classification { improves: true, significant: true }
        );
        assert_eq!(
            classify_cell(12.13, 12.18, 11.96 - 12.13),
            Classification { improves: true, significant: false }
        );
        for pi in [-1.0, 0.0, 1.0] {
            assert!(!classify_cell(12.18, 12.18, pi).improves);
        }
        assert!(!classify_cell(11.0, 12.0, 0.0).significant);
    }

    #[test]
    fn permutation_keeps_multiset_and_is_seeded() {
        let s = series((0..50).map(|i| (i * 7 % 13) as f64).collect());
        let a = permute_series(&s, &mut RngState::new(3, "p"));
        let b = permute_series(&s, &mut RngState::new(3, "p"));
        assert_eq!(a, b);
        let mut x = a.values().to_vec();
        let mut y = s.values().to_vec();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        assert_eq!(x, y);
        let one = series(vec![4.0]);
        assert_eq!(permute_series(&one, &mut RngState::new(1, "p")), one);
    }

    #[test]
    fn plan_validation() {
        let mut p = ExperimentPlan::new("t", vec!["a".into()]);
        assert!(p.validate().is_ok());
        p.lags = vec![1, 1];
        assert!(p.validate().is_err());
        p.lags = vec![0];
        p.kernel_size = 4;
        assert!(p.validate().is_err());
    }

    #[test]
    fn labels_are_distinct() {
        assert_ne!(cell_label("a", 1), cell_label("a", 2));
        assert_ne!(perm_label("a", 1, 1), perm_label("a", 1, 2));
    }
}
