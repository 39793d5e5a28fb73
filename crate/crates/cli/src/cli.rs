//! Argument parsing and subcommand dispatch.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use trendlag::synth::SyntheticSpec;

use crate::config::{key_help, RunConfig, Span};
use crate::ingest::parse_date;
use crate::reference::reference_report;
use crate::report::{emit_grid, load_report, REPORT_JSON};
use crate::{run, selftest};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "trendlag", version, about = "Lagged search-trend features for weekly incident forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the input CSVs and write normalized copies plus a manifest.
    Ingest(IngestArgs),
    /// Run the baseline / lag grid / permutation experiment from a config.
    #[command(after_help = key_help())]
    Grid(GridArgs),
    /// Write a planted-signal dataset and a matching run.cfg.
    Synth(SynthArgs),
    /// Re-render outputs from a stored report.json.
    Report(ReportArgs),
    /// Run the gradient, optimizer, scheduler and planted-signal checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Take input paths and calendar window from a run config.
    #[arg(long, conflicts_with_all = ["incidents", "trends"])]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub incidents: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub trends: Option<PathBuf>,
    #[arg(long, value_parser = date_arg)]
    pub epoch: Option<NaiveDate>,
    #[arg(long)]
    pub weeks: Option<usize>,
    /// Directory for the normalized files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub weeks: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lag: Option<i32>,
    #[arg(long, allow_hyphen_values = true)]
    pub base: Option<f64>,
    #[arg(long)]
    pub seasonal_amplitude: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub walk_step: Option<f64>,
    #[arg(long)]
    pub walk_start: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = date_arg)]
    pub epoch: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding report.json.
    #[arg(long, required_unless_present = "reference")]
    pub from: Option<PathBuf>,
    /// Render the built-in reference grid instead.
    #[arg(long, conflicts_with = "from")]
    pub reference: bool,
    /// Output directory; defaults to the `--from` directory.
    #[arg(long, required_if_eq("reference", "true"))]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the planted-signal grid (several minutes).
    #[arg(long)]
    pub skip_planted: bool,
}

fn date_arg(s: &str) -> Result<NaiveDate, String> {
    parse_date(s).ok_or_else(|| format!("{s:?} is not an ISO date (YYYY-MM-DD)"))
}

fn fail(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_USAGE)
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Grid(a) => grid(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report(a),
        Command::Selftest(a) => selftest(a),
    }
}

fn ingest(a: IngestArgs) -> ExitCode {
    let mut cfg = match &a.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail(e),
        },
        None => RunConfig::new(a.incidents.clone().expect("clap"), a.trends.clone().expect("clap")),
    };
    if let Some(e) = a.epoch {
        cfg.epoch = e;
    }
    if let Some(w) = a.weeks {
        cfg.span = Span::Weeks(w);
    }
    match run::ingest(&cfg, &a.out) {
        Ok(manifest) => {
            print!("{manifest}");
            ExitCode::from(EXIT_OK)
        }
        Err(e) => fail(e),
    }
}

fn grid(a: GridArgs) -> ExitCode {
    let mut cfg = match RunConfig::load(&a.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    match run::grid(&cfg) {
        Err(e) => fail(e),
        Ok(out) => {
            let r = &out.report;
            println!("baseline mae {:.4}", r.mae_baseline);
            for c in r.significant() {
                println!("significant: {} lag {} (mae {:.4}, pi {:.4})", c.feature, c.lag, c.mae_original.unwrap_or(f64::NAN), c.pi.unwrap_or(f64::NAN));
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            println!("logs in {}", out.log_dir.display());
            let failed = out.failed_cells();
            if failed > 0 {
                for c in r.failures() {
                    eprintln!("cell {} lag {} failed: {}", c.feature, c.lag, c.failure.as_deref().unwrap_or(""));
                }
                eprintln!("{failed} cell(s) failed; see failures.txt");
                return ExitCode::from(EXIT_PARTIAL);
            }
            ExitCode::from(EXIT_OK)
        }
    }
}

fn synth(a: SynthArgs) -> ExitCode {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        weeks: a.weeks.unwrap_or(d.weeks),
        alpha: a.alpha.unwrap_or(d.alpha),
        lag: a.lag.unwrap_or(d.lag),
        base: a.base.unwrap_or(d.base),
        seasonal_amplitude: a.seasonal_amplitude.unwrap_or(d.seasonal_amplitude),
        noise_std: a.noise_std.unwrap_or(d.noise_std),
        walk_step: a.walk_step.unwrap_or(d.walk_step),
        walk_start: a.walk_start.unwrap_or(d.walk_start),
        seed: a.seed.unwrap_or(d.seed),
        epoch: a.epoch.unwrap_or(d.epoch),
    };
    match run::synth(&spec, &a.out) {
        Ok(_) => {
            println!("wrote synthetic dataset to {}", a.out.display());
            println!("next: trendlag grid --config {}", a.out.join("run.cfg").display());
            ExitCode::from(EXIT_OK)
        }
        Err(e) => fail(e),
    }
}

fn report(a: ReportArgs) -> ExitCode {
    let (rep, out) = if a.reference {
        match reference_report() {
            Ok(r) => (r, a.out.expect("clap")),
            Err(e) => return fail(e),
        }
    } else {
        let from = a.from.expect("clap");
        match load_report(&from.join(REPORT_JSON)) {
            Ok(r) => (r, a.out.unwrap_or(from)),
            Err(e) => return fail(e),
        }
    };
    match emit_grid(&rep, &out) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(EXIT_OK)
        }
        Err(e) => fail(e),
    }
}

fn selftest(a: SelftestArgs) -> ExitCode {
    let checks = selftest::run_all(a.trials, !a.skip_planted, a.seed);
    for c in &checks {
        println!("{}", c.line());
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::from(EXIT_OK)
    } else {
        ExitCode::from(EXIT_USAGE)
    }
}
