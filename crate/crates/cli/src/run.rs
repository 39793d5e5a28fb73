//! File-level workflows behind the subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Duration;
use thiserror::Error;

use trendlag::importance::{run_grid, series_checksum, ExperimentData, GridReport, ImportanceError, NamedSeries};
use trendlag::series::{aggregate_weeks, last_day, IncidentRecord, SeriesError, WeeklySeries};
use trendlag::synth::{generate_synthetic, SynthError, SyntheticData, SyntheticSpec};

use crate::config::{ConfigError, FeatureSelection, RunConfig, Span};
use crate::ingest::{parse_incidents, parse_trends, render_incidents, IngestError, TrendTable};
use crate::report::{emit_grid, write_logs, ReportError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn write(path: &Path, body: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, body).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parsed and calendar-aligned inputs for one config.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub incidents: Vec<IncidentRecord>,
    /// Incidents outside the configured window, left out of the target.
    pub dropped: usize,
    pub target: WeeklySeries,
    pub trends: TrendTable,
    pub features: Vec<String>,
}

impl Inputs {
    pub fn data(&self) -> ExperimentData {
        ExperimentData {
            target: self.target.clone(),
            features: self
                .trends
                .series()
                .into_iter()
                .filter(|s| self.features.contains(&s.name))
                .collect::<Vec<NamedSeries>>(),
        }
    }
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, RunError> {
    let weeks = cfg.weeks()?;
    let end = last_day(cfg.epoch, weeks);
    let incidents = parse_incidents(&cfg.incidents)?;
    let in_window: Vec<IncidentRecord> = incidents
        .iter()
        .filter(|r| r.date >= cfg.epoch && r.date <= end)
        .cloned()
        .collect();
    let dropped = incidents.len() - in_window.len();
    let target = aggregate_weeks(&in_window, cfg.epoch, weeks)?;
    let trends_path = cfg.trends.display().to_string();
    let trends = parse_trends(&cfg.trends)?.window(cfg.epoch, weeks, &trends_path)?;
    let features = cfg.features.resolve(&trends.names)?;
    Ok(Inputs {
        incidents,
        dropped,
        target,
        trends,
        features,
    })
}

/// Normalized copies of both inputs plus a manifest, written to `out`.
/// Returns the manifest text.
pub fn ingest(cfg: &RunConfig, out: &Path) -> Result<String, RunError> {
    let inputs = load_inputs(cfg)?;
    write(&out.join("incidents.csv"), &render_incidents(&inputs.incidents))?;
    write(&out.join("trends.csv"), &inputs.trends.render())?;
    let mut m = String::new();
    let _ = writeln!(
        m,
        "target {}: {} incidents, {} weeks from {} ({} outside window) sha256={}",
        cfg.target_id,
        inputs.incidents.len(),
        inputs.target.len(),
        cfg.epoch,
        inputs.dropped,
        series_checksum(&inputs.target)
    );
    let _ = writeln!(m, "series: {}", inputs.features.len());
    for s in inputs.data().features {
        let _ = writeln!(m, "  {} sha256={}", s.name, series_checksum(&s.series));
    }
    write(&out.join("manifest.txt"), &m)?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub report: GridReport,
    pub files: Vec<PathBuf>,
    pub log_dir: PathBuf,
}

impl GridOutcome {
    pub fn failed_cells(&self) -> usize {
        self.report.failures().count()
    }
}

/// Runs the grid, embeds the resolved config in the provenance and writes
/// every output into `cfg.out_dir`.
pub fn grid(cfg: &RunConfig) -> Result<GridOutcome, RunError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let plan = cfg.plan(inputs.features.clone())?;
    let run = run_grid(&plan, &inputs.data())?;
    let mut report = run.report;
    report.provenance.run_config = Some(cfg.render());
    let files = emit_grid(&report, &cfg.out_dir)?;
    let log_dir = write_logs(&cfg.out_dir, &run.logs)?;
    let failures: String = report
        .failures()
        .map(|c| format!("{} lag={}: {}\n", c.feature, c.lag, c.failure.as_deref().unwrap_or("")))
        .collect();
    if !failures.is_empty() {
        write(&cfg.out_dir.join("failures.txt"), &failures)?;
    }
    Ok(GridOutcome { report, files, log_dir })
}

/// One incident row per unit count, dated at its bucket start.
pub fn synthetic_incidents(data: &SyntheticData) -> Vec<IncidentRecord> {
    let mut out = Vec::new();
    for (i, &n) in data.target.values().iter().enumerate() {
        let date = data.target.epoch() + Duration::days(7 * i as i64);
        for _ in 0..n as usize {
            out.push(IncidentRecord::on(date));
        }
    }
    out
}

pub const PLANTED: &str = "planted";
pub const NOISE: &str = "noise";

pub fn synthetic_trends(data: &SyntheticData) -> TrendTable {
    TrendTable {
        epoch: data.planted.epoch(),
        names: vec![PLANTED.into(), NOISE.into()],
        columns: vec![data.planted.values().to_vec(), data.noise.values().to_vec()],
    }
}

pub fn render_synth_spec(spec: &SyntheticSpec) -> String {
    format!(
        "weeks = {}\nalpha = {:?}\nlag = {}\nbase = {:?}\nseasonal_amplitude = {:?}\nnoise_std = {:?}\n\
         walk_step = {:?}\nwalk_start = {:?}\nseed = {}\nepoch = {}\n",
        spec.weeks,
        spec.alpha,
        spec.lag,
        spec.base,
        spec.seasonal_amplitude,
        spec.noise_std,
        spec.walk_step,
        spec.walk_start,
        spec.seed,
        spec.epoch
    )
}

/// Writes incidents.csv, trends.csv, run.cfg and synth.txt under `out`.
/// The config points at the two CSVs and writes its grid into `out/grid`.
pub fn synth(spec: &SyntheticSpec, out: &Path) -> Result<RunConfig, RunError> {
    let data = generate_synthetic(spec)?;
    write(&out.join("incidents.csv"), &render_incidents(&synthetic_incidents(&data)))?;
    write(&out.join("trends.csv"), &synthetic_trends(&data).render())?;
    write(&out.join("synth.txt"), &render_synth_spec(spec))?;
    let mut cfg = RunConfig::new("incidents.csv", "trends.csv");
    cfg.out_dir = PathBuf::from("grid");
    cfg.target_id = "synthetic".into();
    cfg.features = FeatureSelection::Named(vec![PLANTED.into(), NOISE.into()]);
    cfg.epoch = spec.epoch;
    cfg.span = Span::Weeks(spec.weeks);
    cfg.seed = spec.seed;
    write(&out.join("run.cfg"), &cfg.render())?;
    Ok(cfg)
}
