use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use proptest::prelude::*;

use trendlag::series::aggregate_weekly;
use trendlag_cli::config::{FeatureSelection, RunConfig, Span};
use trendlag_cli::ingest::{parse_incidents, parse_trends, render_incidents};
use trendlag_cli::reference::reference_report;
use trendlag_cli::report::{cell_color, emit_grid, render_grid_csv, render_tables, GRID_CSV, HEATMAP_SVG, PROVENANCE_TXT};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn trendlag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trendlag")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn incident_fixture_row_count_survives_aggregation() {
    let path = fixture("michigan_incidents.csv");
    let text = fs::read_to_string(&path).unwrap();
    let rows = text.lines().count() - 1;
    let recs = parse_incidents(&path).unwrap();
    assert_eq!(recs.len(), rows);
    let epoch = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2020, 1, 8).unwrap();
    let s = aggregate_weekly(&recs, epoch, end).unwrap();
    assert_eq!(s.len(), 262);
    assert_eq!(s.values().iter().sum::<f64>() as usize, rows);
    assert!(s.values().iter().all(|&v| v >= 1.0));
}

#[test]
fn fixtures_are_normalized() {
    let inc = fixture("michigan_incidents.csv");
    assert_eq!(render_incidents(&parse_incidents(&inc).unwrap()), fs::read_to_string(&inc).unwrap());
    let tr = fixture("theory_trends.csv");
    let table = parse_trends(&tr).unwrap();
    assert_eq!(table.render(), fs::read_to_string(&tr).unwrap());
    assert_eq!(table.names.len(), 36);
    assert_eq!(table.weeks(), 262);
    for s in table.series() {
        assert_eq!(s.series.len(), 262);
        assert!(s.series.values().contains(&100.0), "{}", s.name);
    }
}

#[test]
fn shipped_config_loads() {
    let cfg = RunConfig::load(&fixture("run.cfg")).unwrap();
    assert_eq!(cfg.weeks().unwrap(), 262);
    assert_eq!(cfg.features, FeatureSelection::All);
    assert!(cfg.incidents.exists() && cfg.trends.exists());
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    let names = prop::collection::vec("[A-Za-z][A-Za-z0-9 .-]{0,12}[A-Za-z0-9]", 1..5);
    (
        (names, any::<bool>(), 0usize..4000, prop::collection::btree_set(-6i32..8, 1..6)),
        (0usize..6, any::<u64>(), 0usize..4, 0.05f64..0.95),
        (1usize..64, 1usize..900, 1usize..40, 1usize..20, 0.01f64..0.99, 1e-12f64..1.0, any::<bool>()),
        any::<bool>(),
    )
        .prop_map(|((names, all, span, lags), (k, seed, kern, frac), (bs, me, esp, pp, pf, lr, shuf), use_end)| {
            let mut c = RunConfig::new("data/inc.csv", "/abs/trends.csv");
            c.features = if all {
                FeatureSelection::All
            } else {
                let mut uniq: Vec<String> = Vec::new();
                for n in names {
                    if !uniq.contains(&n) {
                        uniq.push(n);
                    }
                }
                FeatureSelection::Named(uniq)
            };
            c.span = if use_end {
                Span::End(c.epoch + chrono::Duration::days(span as i64))
            } else {
                Span::Weeks(span + 1)
            };
            c.lags = lags.into_iter().collect();
            c.permutations = k;
            c.seed = seed;
            c.kernel_size = 2 * kern + 1;
            c.split_fraction = frac;
            c.train.batch_size = bs;
            c.train.max_epochs = me;
            c.train.early_stop_patience = esp;
            c.train.plateau_patience = pp;
            c.train.plateau_factor = pf;
            c.train.initial_lr = lr;
            c.train.min_lr = lr / 3.0;
            c.train.shuffle = shuf;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn config_round_trip(cfg in arb_config()) {
        let text = cfg.render();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.render(), text);
    }
}

#[test]
fn reference_report_renders_table_stars() {
    let r = reference_report().unwrap();
    let tables = render_tables(&r);
    let roth = tables.lines().find(|l| l.starts_with("Rothschilds")).unwrap();
    for v in ["11.95*", "12.05*", "12.12*", "12.03*"] {
        assert!(roth.contains(v), "{roth}");
    }
    assert!(roth.contains("12.30") && !roth.contains("12.30*"), "{roth}");
    let csv = render_grid_csv(&r);
    assert!(csv.starts_with("feature,lag,mae_original,mae_baseline,perm_mae_1,pi,improves,significant\n"));
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn re_emission_is_byte_identical() {
    let r = reference_report().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files = emit_grid(&r, a.path()).unwrap();
    emit_grid(&r, b.path()).unwrap();
    // Through the stored JSON as well.
    let c = tempfile::tempdir().unwrap();
    let status = trendlag(&["report", "--from", a.path().to_str().unwrap(), "--out", c.path().to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in files {
        let name = f.file_name().unwrap();
        let bytes = fs::read(&f).unwrap();
        assert_eq!(bytes, fs::read(b.path().join(name)).unwrap(), "{name:?}");
        assert_eq!(bytes, fs::read(c.path().join(name)).unwrap(), "{name:?}");
    }
}

#[test]
fn single_cell_report() {
    let mut r = reference_report().unwrap();
    r.cells.truncate(1);
    r.features.truncate(1);
    let csv = render_grid_csv(&r);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "feature,lag,mae_original,mae_baseline,perm_mae_1,pi,improves,significant");
    assert_eq!(lines[1], "Ten Days Of Darkness,-1,12.45,12.18,,,false,false");
}

#[test]
fn heatmap_marks_cells_and_legend() {
    let r = reference_report().unwrap();
    let d = tempfile::tempdir().unwrap();
    emit_grid(&r, d.path()).unwrap();
    let svg = fs::read_to_string(d.path().join(HEATMAP_SVG)).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("baseline 12.18"));
    assert!(svg.contains(r#"font-weight="bold">11.39*</text>"#));
    assert!(svg.contains(r#"font-weight="normal">12.07*</text>"#));
    // RAHOWA at lag 2 sets the spread and gets full green; the best cell
    // is purple at 0.79 / 1.92 of full strength.
    assert!(svg.contains(r##"fill="#1b7837""##));
    let best = cell_color(11.39, 12.18, 14.10 - 12.18);
    assert!(svg.contains(&format!(r#"fill="{best}""#)), "{best}");
    let grid = fs::read_to_string(d.path().join(GRID_CSV)).unwrap();
    // Highest mean MAE first.
    assert!(grid.lines().nth(1).unwrap().starts_with("RAHOWA,"));
    assert!(d.path().join(PROVENANCE_TXT).exists());
}

#[test]
fn ingest_echoes_series_names() {
    let d = tempfile::tempdir().unwrap();
    let o = trendlag(&["ingest", "--config", fixture("run.cfg").to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("target michigan:"), "{out}");
    assert!(out.contains("series: 36"), "{out}");
    let table = parse_trends(&fixture("theory_trends.csv")).unwrap();
    for n in &table.names {
        assert!(out.contains(&format!("  {n} sha256=")), "{n}");
    }
    assert_eq!(fs::read(d.path().join("trends.csv")).unwrap(), fs::read(fixture("theory_trends.csv")).unwrap());
    assert_eq!(
        fs::read(d.path().join("incidents.csv")).unwrap(),
        fs::read(fixture("michigan_incidents.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(trendlag(&["grid", "--bogus"]).status.code(), Some(1));
    assert_eq!(trendlag(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(trendlag(&["--help"]).status.code(), Some(0));
    let help = stdout(&trendlag(&["grid", "--help"]));
    assert!(help.contains("early_stop_patience") && help.contains("split_fraction"), "{help}");

    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.cfg");
    fs::write(&cfg, "incidents = a.csv\ntrends = b.csv\nlearning_rate = 0.1\n").unwrap();
    let o = trendlag(&["grid", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key \"learning_rate\""));

    let bad_csv = d.path().join("inc.csv");
    fs::write(&bad_csv, "date,bias\n2015-01-02,x\n02/01/2015,y\n").unwrap();
    let o = trendlag(&["ingest", "--incidents", bad_csv.to_str().unwrap(), "--trends", "nope.csv", "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn failing_cell_gives_partial_status() {
    let d = tempfile::tempdir().unwrap();
    let syn = d.path().join("syn");
    let o = trendlag(&["synth", "--weeks", "60", "--out", syn.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // Lag 40 leaves too few rows for a validation window; lag 0 is fine.
    let cfg = syn.join("run.cfg");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text = text
        .replace("lags = -1, 0, 1, 2, 3", "lags = 0, 40")
        .replace("max_epochs = 500", "max_epochs = 2")
        .replace("features = planted, noise", "features = planted");
    fs::write(&cfg, text).unwrap();
    let o = trendlag(&["grid", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = fs::read_to_string(syn.join("grid").join(GRID_CSV)).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert!(grid.contains("planted,40,,"));
    assert!(syn.join("grid").join("failures.txt").exists());
    assert!(syn.join("grid").join("logs").join("baseline.log").exists());
}
