//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use trendlag::importance::ExperimentPlan;
use trendlag::series::last_day;
use trendlag::train::TrainConfig;

use crate::ingest::parse_date;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?} (see `trendlag grid --help` for the key list)")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: {key}: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("`weeks` and `end` are mutually exclusive")]
    SpanConflict,
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which trend columns enter the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSelection {
    All,
    Named(Vec<String>),
}

impl FeatureSelection {
    pub fn resolve(&self, available: &[String]) -> Result<Vec<String>, ConfigError> {
        match self {
            Self::All => Ok(available.to_vec()),
            Self::Named(names) => {
                for n in names {
                    if !available.contains(n) {
                        return Err(ConfigError::Invalid(format!("feature {n:?} not found in trends file")));
                    }
                }
                Ok(names.clone())
            }
        }
    }
}

/// How far the weekly grid extends past `epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Span {
    Weeks(usize),
    End(NaiveDate),
}

impl Span {
    pub fn weeks(&self, epoch: NaiveDate) -> Result<usize, ConfigError> {
        match *self {
            Self::Weeks(w) => Ok(w),
            Self::End(end) => trendlag::series::bucket_count(epoch, end).map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub incidents: PathBuf,
    pub trends: PathBuf,
    pub out_dir: PathBuf,
    pub target_id: String,
    pub features: FeatureSelection,
    pub epoch: NaiveDate,
    pub span: Span,
    pub lags: Vec<i32>,
    pub permutations: usize,
    pub seed: u64,
    pub kernel_size: usize,
    pub split_fraction: f64,
    /// `train.seed` is not a key: every model derives its stream from `seed`.
    pub train: TrainConfig,
}

pub const DEFAULT_WEEKS: usize = 262;

pub fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date")
}

impl RunConfig {
    pub fn new(incidents: impl Into<PathBuf>, trends: impl Into<PathBuf>) -> Self {
        let plan = ExperimentPlan::new("incidents", Vec::new());
        Self {
            incidents: incidents.into(),
            trends: trends.into(),
            out_dir: PathBuf::from("out"),
            target_id: plan.target_id,
            features: FeatureSelection::All,
            epoch: default_epoch(),
            span: Span::Weeks(DEFAULT_WEEKS),
            lags: plan.lags,
            permutations: plan.permutations,
            seed: plan.seed,
            kernel_size: plan.kernel_size,
            split_fraction: plan.split_fraction,
            train: plan.train,
        }
    }

    pub fn weeks(&self) -> Result<usize, ConfigError> {
        self.span.weeks(self.epoch)
    }

    pub fn end(&self) -> Result<NaiveDate, ConfigError> {
        Ok(last_day(self.epoch, self.weeks()?))
    }

    pub fn plan(&self, features: Vec<String>) -> Result<ExperimentPlan, ConfigError> {
        let plan = ExperimentPlan {
            target_id: self.target_id.clone(),
            features,
            lags: self.lags.clone(),
            permutations: self.permutations,
            seed: self.seed,
            train: TrainConfig {
                seed: self.seed,
                ..self.train.clone()
            },
            kernel_size: self.kernel_size,
            split_fraction: self.split_fraction,
        };
        plan.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.weeks()? == 0 {
            return Err(ConfigError::Invalid("weeks must be >= 1".into()));
        }
        if let FeatureSelection::Named(n) = &self.features {
            if n.is_empty() {
                return Err(ConfigError::Invalid("features list is empty".into()));
            }
        }
        self.plan(Vec::new()).map(|_| ())
    }

    /// Every key with its resolved value, one per line.
    pub fn render(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("incidents", self.incidents.display().to_string());
        kv("trends", self.trends.display().to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("target_id", self.target_id.clone());
        kv(
            "features",
            match &self.features {
                FeatureSelection::All => "*".into(),
                FeatureSelection::Named(n) => n.join(", "),
            },
        );
        kv("epoch", self.epoch.to_string());
        match self.span {
            Span::Weeks(w) => kv("weeks", w.to_string()),
            Span::End(d) => kv("end", d.to_string()),
        }
        kv("lags", self.lags.iter().map(i32::to_string).collect::<Vec<_>>().join(", "));
        kv("permutations", self.permutations.to_string());
        kv("seed", self.seed.to_string());
        kv("kernel_size", self.kernel_size.to_string());
        kv("split_fraction", format!("{:?}", self.split_fraction));
        kv("batch_size", t.batch_size.to_string());
        kv("max_epochs", t.max_epochs.to_string());
        kv("early_stop_patience", t.early_stop_patience.to_string());
        kv("plateau_patience", t.plateau_patience.to_string());
        kv("plateau_factor", format!("{:?}", t.plateau_factor));
        kv("min_lr", format!("{:?}", t.min_lr));
        kv("initial_lr", format!("{:?}", t.initial_lr));
        kv("beta1", format!("{:?}", t.beta1));
        kv("beta2", format!("{:?}", t.beta2));
        kv("epsilon", format!("{:?}", t.epsilon));
        kv("shuffle", t.shuffle.to_string());
        s
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::new("", "");
        let mut seen: Vec<&str> = Vec::new();
        let (mut weeks, mut end) = (None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(&key) = KEYS.iter().map(|(k, _)| k).find(|name| **name == k) else {
                return Err(ConfigError::UnknownKey { line, key: k.into() });
            };
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate { line, key: k.into() });
            }
            seen.push(key);
            let t = &mut cfg.train;
            let ctx = Ctx { line, key };
            match key {
                "incidents" => cfg.incidents = ctx.path(v)?,
                "trends" => cfg.trends = ctx.path(v)?,
                "out_dir" => cfg.out_dir = ctx.path(v)?,
                "target_id" => cfg.target_id = ctx.nonempty(v)?,
                "features" => cfg.features = ctx.features(v)?,
                "epoch" => cfg.epoch = ctx.date(v)?,
                "weeks" => weeks = Some(ctx.num(v)?),
                "end" => end = Some(ctx.date(v)?),
                "lags" => cfg.lags = ctx.list(v)?,
                "permutations" => cfg.permutations = ctx.num(v)?,
                "seed" => cfg.seed = ctx.num(v)?,
                "kernel_size" => cfg.kernel_size = ctx.num(v)?,
                "split_fraction" => cfg.split_fraction = ctx.num(v)?,
                "batch_size" => t.batch_size = ctx.num(v)?,
                "max_epochs" => t.max_epochs = ctx.num(v)?,
                "early_stop_patience" => t.early_stop_patience = ctx.num(v)?,
                "plateau_patience" => t.plateau_patience = ctx.num(v)?,
                "plateau_factor" => t.plateau_factor = ctx.num(v)?,
                "min_lr" => t.min_lr = ctx.num(v)?,
                "initial_lr" => t.initial_lr = ctx.num(v)?,
                "beta1" => t.beta1 = ctx.num(v)?,
                "beta2" => t.beta2 = ctx.num(v)?,
                "epsilon" => t.epsilon = ctx.num(v)?,
                "shuffle" => t.shuffle = ctx.num(v)?,
                _ => unreachable!("key table and match arms agree"),
            }
        }
        for req in ["incidents", "trends"] {
            if !seen.contains(&req) {
                return Err(ConfigError::Missing(req));
            }
        }
        cfg.span = match (weeks, end) {
            (Some(_), Some(_)) => return Err(ConfigError::SpanConflict),
            (None, Some(e)) => Span::End(e),
            (Some(w), None) => Span::Weeks(w),
            (None, None) => Span::Weeks(DEFAULT_WEEKS),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.incidents, &mut cfg.trends, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

struct Ctx {
    line: usize,
    key: &'static str,
}

impl Ctx {
    fn err(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            line: self.line,
            key: self.key.into(),
            message: message.into(),
        }
    }

    fn num<T: FromStr>(&self, v: &str) -> Result<T, ConfigError> {
        v.parse().map_err(|_| self.err(format!("cannot parse {v:?}")))
    }

    fn nonempty(&self, v: &str) -> Result<String, ConfigError> {
        if v.is_empty() {
            return Err(self.err("empty value"));
        }
        Ok(v.to_string())
    }

    fn path(&self, v: &str) -> Result<PathBuf, ConfigError> {
        self.nonempty(v).map(PathBuf::from)
    }

    fn date(&self, v: &str) -> Result<NaiveDate, ConfigError> {
        parse_date(v).ok_or_else(|| self.err(format!("{v:?} is not an ISO date")))
    }

    fn list<T: FromStr>(&self, v: &str) -> Result<Vec<T>, ConfigError> {
        v.split(',').map(|p| self.num(p.trim())).collect()
    }

    fn features(&self, v: &str) -> Result<FeatureSelection, ConfigError> {
        if v == "*" {
            return Ok(FeatureSelection::All);
        }
        let names: Vec<String> = v.split(',').map(|p| p.trim().to_string()).collect();
        if names.iter().any(String::is_empty) {
            return Err(self.err("empty feature name"));
        }
        Ok(FeatureSelection::Named(names))
    }
}

/// Recognized keys with a one-line description.
pub const KEYS: [(&str, &str); 24] = [
    ("incidents", "incident CSV (date,bias,offense); required"),
    ("trends", "wide weekly trends CSV (week_start,<name>...); required"),
    ("out_dir", "output directory [out]"),
    ("target_id", "label for the incident target [incidents]"),
    ("features", "`*` for every trends column, or a comma list of column names [*]"),
    ("epoch", "first bucket start, ISO date [2015-01-01]"),
    ("weeks", "number of weekly buckets [262]; exclusive with `end`"),
    ("end", "last included day, ISO date; exclusive with `weeks`"),
    ("lags", "comma list of lags in weeks [-1, 0, 1, 2, 3]"),
    ("permutations", "permuted retrainings per improving cell, 0 disables [3]"),
    ("seed", "master seed for every random stream [0]"),
    ("kernel_size", "odd convolution width [3]"),
    ("split_fraction", "chronological training share [0.8]"),
    ("batch_size", "windows per batch [4]"),
    ("max_epochs", "epoch cap [500]"),
    ("early_stop_patience", "epochs without improvement before stopping [15]"),
    ("plateau_patience", "epochs without improvement before an lr cut [5]"),
    ("plateau_factor", "lr multiplier on plateau [0.1]"),
    ("min_lr", "lr floor [1e-9]"),
    ("initial_lr", "starting Adam learning rate [0.001]"),
    ("beta1", "Adam first-moment decay [0.9]"),
    ("beta2", "Adam second-moment decay [0.999]"),
    ("epsilon", "Adam denominator offset [1e-8]"),
    ("shuffle", "reshuffle training batches each epoch [false]"),
];

pub fn key_help() -> String {
    let mut s = String::from("Config keys (`key = value`, `#` starts a comment):\n");
    for (k, d) in KEYS {
        let _ = writeln!(s, "  {k:<20} {d}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_expands_defaults() {
        let c = RunConfig::parse("incidents = a.csv\ntrends = b.csv # wide\n").unwrap();
        assert_eq!(c.weeks().unwrap(), 262);
        assert_eq!(c.lags, vec![-1, 0, 1, 2, 3]);
        assert_eq!(c.train.early_stop_patience, 15);
        assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        let base = "incidents = a\ntrends = b\n";
        for (extra, want) in [
            ("learning_rate = 1\n", "unknown key"),
            ("seed = 1\nseed = 2\n", "set twice"),
            ("seed = x\n", "cannot parse"),
            ("weeks = 10\nend = 2016-01-01\n", "mutually exclusive"),
            ("kernel_size = 4\n", "odd"),
            ("just words\n", "expected `key = value`"),
        ] {
            let e = RunConfig::parse(&format!("{base}{extra}")).unwrap_err().to_string();
            assert!(e.contains(want), "{extra:?}: {e}");
        }
        assert!(matches!(RunConfig::parse("trends = b\n"), Err(ConfigError::Missing("incidents"))));
    }

    #[test]
    fn end_date_span() {
        let c = RunConfig::parse("incidents = a\ntrends = b\nend = 2019-12-31\n").unwrap();
        assert_eq!(c.weeks().unwrap(), 261);
        assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn help_lists_every_key() {
        let h = key_help();
        for (k, _) in KEYS {
            assert!(h.contains(k));
        }
    }
}
