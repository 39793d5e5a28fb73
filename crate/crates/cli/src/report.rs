//! Rendering a [`GridReport`] to files. Every renderer is a pure function of
//! the report, so re-emitting a stored report reproduces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use trendlag::importance::{GridReport, LagCellResult};

pub const GRID_CSV: &str = "grid.csv";
pub const HEATMAP_SVG: &str = "heatmap.svg";
pub const PROVENANCE_TXT: &str = "provenance.txt";
pub const TABLES_TXT: &str = "tables.txt";
pub const REPORT_JSON: &str = "report.json";
pub const LOG_DIR: &str = "logs";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Features ordered by mean MAE across lags, highest first; features with no
/// completed cell go last. Ties break on name.
pub fn feature_order(report: &GridReport) -> Vec<String> {
    let mut means = report.feature_means();
    means.sort_by(|(a, ma), (b, mb)| match (ma, mb) {
        (Some(x), Some(y)) => y.total_cmp(x).then_with(|| a.cmp(b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    });
    means.into_iter().map(|(f, _)| f).collect()
}

fn ordered_cells(report: &GridReport) -> Vec<&LagCellResult> {
    let mut out = Vec::with_capacity(report.cells.len());
    for f in feature_order(report) {
        for lag in &report.lags {
            if let Some(c) = report.cell(&f, *lag) {
                out.push(c);
            }
        }
    }
    out
}

pub fn render_grid_csv(report: &GridReport) -> String {
    let k = report.permutations.max(report.cells.iter().map(|c| c.perm_maes.len()).max().unwrap_or(0));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["feature", "lag", "mae_original", "mae_baseline"].map(String::from).to_vec();
    header.extend((1..=k).map(|i| format!("perm_mae_{i}")));
    header.extend(["pi", "improves", "significant"].map(String::from));
    w.write_record(&header).expect("in-memory write");
    for c in ordered_cells(report) {
        let mut row = vec![c.feature.clone(), c.lag.to_string(), opt(c.mae_original), c.mae_baseline.to_string()];
        row.extend((0..k).map(|i| opt(c.perm_maes.get(i).copied())));
        row.push(opt(c.pi));
        row.push(c.improves.to_string());
        row.push(c.significant.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

const PURPLE: (f64, f64, f64) = (118.0, 42.0, 131.0);
const GREEN: (f64, f64, f64) = (27.0, 120.0, 55.0);
const FAILED: &str = "#bdbdbd";

/// Diverging fill: white at the baseline, purple below, green above.
pub fn cell_color(mae: f64, baseline: f64, spread: f64) -> String {
    let t = if spread > 0.0 { ((mae - baseline) / spread).clamp(-1.0, 1.0) } else { 0.0 };
    let end = if t < 0.0 { PURPLE } else { GREEN };
    let a = t.abs();
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_heatmap_svg(report: &GridReport) -> String {
    let rows = feature_order(report);
    let base = report.mae_baseline;
    let spread = report
        .cells
        .iter()
        .filter_map(|c| c.mae_original)
        .map(|m| (m - base).abs())
        .fold(0.0, f64::max);
    let (cw, ch, left, top) = (64.0, 22.0, 220.0, 40.0);
    let width = left + cw * report.lags.len() as f64 + 40.0;
    let grid_h = ch * rows.len() as f64;
    let height = top + grid_h + 110.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="16" font-size="13">Scaled MAE by lag: {} (baseline {base:.2})</text>"#,
        xml_escape(&report.target_id)
    );
    for (j, lag) in report.lags.iter().enumerate() {
        let x = left + cw * (j as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{lag}</text>"#, top - 6.0);
    }
    for (i, f) in rows.iter().enumerate() {
        let y = top + ch * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + ch * 0.7,
            xml_escape(f)
        );
        for (j, lag) in report.lags.iter().enumerate() {
            let x = left + cw * j as f64;
            let cell = report.cell(f, *lag);
            let (fill, label, weight) = match cell.and_then(|c| c.mae_original.map(|m| (c, m))) {
                Some((c, m)) => (
                    cell_color(m, base, spread),
                    format!("{m:.2}{}", if c.improves { "*" } else { "" }),
                    if c.significant { "bold" } else { "normal" },
                ),
                None => (FAILED.to_string(), "n/a".to_string(), "normal"),
            };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="#ffffff"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-weight="{weight}">{label}</text>"#,
                x + cw / 2.0,
                y + ch * 0.7
            );
        }
    }

    // Legend: a stepped bar from baseline - spread to baseline + spread.
    let ly = top + grid_h + 24.0;
    let steps = 20;
    let lw = cw * report.lags.len().max(3) as f64;
    let sw = lw / steps as f64;
    for k in 0..steps {
        let v = base - spread + 2.0 * spread * (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{ly}" width="{sw}" height="12" fill="{}"/>"#,
            left + sw * k as f64,
            cell_color(v, base, spread)
        );
    }
    for (frac, v) in [(0.0, base - spread), (0.5, base), (1.0, base + spread)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{v:.2}</text>"#,
            left + lw * frac,
            ly + 26.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="{}">purple: below baseline {base:.2} (better); green: above (worse)</text>"#,
        ly + 44.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="{}">* improves on baseline; bold: survives permutation; gray: failed cell</text>"#,
        ly + 60.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn render_provenance(report: &GridReport) -> String {
    let p = &report.provenance;
    let mut s = String::new();
    let _ = writeln!(s, "target_id: {}", report.target_id);
    let _ = writeln!(s, "master_seed: {}", p.master_seed);
    let _ = writeln!(s, "rng_algorithm: {}", p.rng_algorithm);
    let _ = writeln!(s, "network: {}", p.network);
    let _ = writeln!(s, "train_config: {}", p.train_config.canonical());
    let _ = writeln!(s, "split_fraction: {}", p.split_fraction);
    let _ = writeln!(s, "lags: {:?}", report.lags);
    let _ = writeln!(s, "permutations: {}", report.permutations);
    let _ = writeln!(s, "\n[input checksums]");
    let _ = writeln!(s, "{}: {}", report.target_id, p.target_checksum);
    for (f, c) in &p.feature_checksums {
        let _ = writeln!(s, "{f}: {c}");
    }
    let _ = writeln!(s, "\n[models]");
    let b = &report.baseline;
    let _ = writeln!(s, "{} mae={} weights={}", b.label, b.mae, b.weight_checksum);
    for c in &report.cells {
        for r in c.original.iter().chain(&c.permuted) {
            let _ = writeln!(s, "{} mae={} weights={}", r.label, r.mae, r.weight_checksum);
        }
        if let Some(f) = &c.failure {
            let _ = writeln!(s, "{} lag={} FAILED: {f}", c.feature, c.lag);
        }
    }
    let _ = writeln!(s, "\n[notes]");
    for n in &p.notes {
        let _ = writeln!(s, "- {n}");
    }
    if let Some(cfg) = &p.run_config {
        let _ = writeln!(s, "\n[run config]");
        s.push_str(cfg);
        if !cfg.ends_with('\n') {
            s.push('\n');
        }
    }
    s
}

/// Two plain-text tables: per-lag MAE with `*` where the cell beats the
/// baseline, and lowest permuted MAE with the original in parentheses,
/// starred where the cell survives permutation. Only improving features
/// are listed, in input order.
pub fn render_tables(report: &GridReport) -> String {
    let improving: Vec<&String> = report
        .features
        .iter()
        .filter(|f| report.cells.iter().any(|c| &c.feature == *f && c.improves))
        .collect();
    let name_w = improving.iter().map(|f| f.len()).max().unwrap_or(0).max(8);
    let mut s = String::new();
    let header = |s: &mut String, title: &str| {
        let _ = writeln!(s, "{title}");
        let _ = write!(s, "{:<name_w$}", "feature");
        for l in &report.lags {
            let _ = write!(s, " {l:>16}");
        }
        s.push('\n');
    };

    header(&mut s, "Scaled MAE per lag (* below baseline)");
    for f in &improving {
        let _ = write!(s, "{f:<name_w$}");
        for l in &report.lags {
            let txt = match report.cell(f, *l) {
                Some(LagCellResult {
                    mae_original: Some(m),
                    improves,
                    ..
                }) => format!("{m:.2}{}", if *improves { "*" } else { "" }),
                _ => "-".into(),
            };
            let _ = write!(s, " {txt:>16}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "{:<name_w$} {:>16.2}\n", "baseline", report.mae_baseline);

    header(&mut s, "Lowest permuted MAE (original, * survives permutation)");
    for f in &improving {
        let _ = write!(s, "{f:<name_w$}");
        for l in &report.lags {
            let txt = match report.cell(f, *l) {
                Some(c) if !c.perm_maes.is_empty() => {
                    let min = c.perm_maes.iter().copied().fold(f64::INFINITY, f64::min);
                    let orig = c.mae_original.unwrap_or(f64::NAN);
                    format!("{min:.2} ({orig:.2}{})", if c.significant { "*" } else { "" })
                }
                _ => String::new(),
            };
            let _ = write!(s, " {txt:>16}");
        }
        s.push('\n');
    }
    s
}

pub fn render_json(report: &GridReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(io(&path))?;
    Ok(path)
}

/// Writes grid.csv, heatmap.svg, provenance.txt, tables.txt and report.json.
pub fn emit_grid(report: &GridReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    Ok(vec![
        write(dir, GRID_CSV, &render_grid_csv(report))?,
        write(dir, HEATMAP_SVG, &render_heatmap_svg(report))?,
        write(dir, PROVENANCE_TXT, &render_provenance(report))?,
        write(dir, TABLES_TXT, &render_tables(report))?,
        write(dir, REPORT_JSON, &render_json(report))?,
    ])
}

pub fn log_file_name(label: &str) -> String {
    let safe: String = label
        .chars()
        .map(|c| match c {
            '/' => '~',
            c if c.is_ascii_alphanumeric() || "-=.".contains(c) => c,
            _ => '_',
        })
        .collect();
    format!("{safe}.log")
}

pub fn write_logs(dir: &Path, logs: &[(String, String)]) -> Result<PathBuf, ReportError> {
    let log_dir = dir.join(LOG_DIR);
    fs::create_dir_all(&log_dir).map_err(io(&log_dir))?;
    for (label, body) in logs {
        write(&log_dir, &log_file_name(label), body)?;
    }
    Ok(log_dir)
}

pub fn load_report(path: &Path) -> Result<GridReport, ReportError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}
