//! Regenerates the shipped stand-in fixtures:
//!
//! * `michigan_incidents.csv`: 262 weeks from 2015-01-01 of incident rows.
//!   Weekly counts are `round(7.4 + 1.2 sin(2 pi t / 52) + 3.7 z_t)` clipped to
//!   [1, 19], with week 75 set to 20. Each incident gets a uniform day inside
//!   its week and a bias / offense tag drawn uniformly from short lists.
//! * `theory_trends.csv`: 36 weekly 0-100 series. Each is an integer walk
//!   plus a yearly cycle, clipped at zero and rescaled so its maximum is 100.
//!   Every third series is a sparse spike train instead.
//!
//! All draws come from master seed 7 with one stream per fixture and column.
//!
//! `cargo run -p trendlag-cli --example make_fixtures -- crates/cli/fixtures`

use std::f64::consts::PI;
use std::path::PathBuf;

use chrono::{Duration, NaiveDate};

use trendlag::series::IncidentRecord;
use trendlag::tensor::RngState;
use trendlag_cli::ingest::{render_incidents, TrendTable};

const SEED: u64 = 7;
const WEEKS: usize = 262;

pub const THEORIES: [&str; 36] = [
    "Adrenochrome",
    "Deep State",
    "Deep Underground Military Bases",
    "D.U.M.B.s",
    "Died Suddenly",
    "Event 201",
    "Fall Of The Cabal",
    "Frazzledrip",
    "George Soros",
    "JQ",
    "Kalergi Plan",
    "Kristallnacht",
    "Mole Children",
    "Obama Kenya",
    "Pedogate",
    "Pizzagate",
    "Q Sent Me",
    "Q-Anon",
    "RAHOWA",
    "Rothschilds",
    "Seth Rich Murder",
    "Takiya",
    "Ten Days Of Darkness",
    "The 14 Words",
    "The Cabal",
    "The Deep State",
    "The Great Awakening",
    "The Great Replacement",
    "The Great Reset",
    "Trump 19th President",
    "Tunnel Children",
    "Tuskegee Syphilis Study",
    "U.S.S. Liberty",
    "We Are The Storm",
    "White Genocide",
    "Zionism",
];

const BIAS: [&str; 5] = ["anti-black", "anti-jewish", "anti-hispanic", "anti-lgbt", "anti-muslim"];
const OFFENSE: [&str; 4] = ["intimidation", "simple assault", "vandalism", "aggravated assault"];

fn weekly_counts() -> Vec<usize> {
    let mut rng = RngState::new(SEED, "fixture/incident-counts");
    (0..WEEKS)
        .map(|t| {
            let v = 7.4 + 1.2 * (2.0 * PI * t as f64 / 52.0).sin() + 3.7 * rng.standard_normal();
            if t == 75 {
                20
            } else {
                v.round().clamp(1.0, 19.0) as usize
            }
        })
        .collect()
}

fn pick<'a>(rng: &mut RngState, items: &[&'a str]) -> &'a str {
    items[(rng.next_u64() % items.len() as u64) as usize]
}

fn incidents(epoch: NaiveDate) -> Vec<IncidentRecord> {
    let mut rng = RngState::new(SEED, "fixture/incident-rows");
    let mut out = Vec::new();
    for (t, n) in weekly_counts().into_iter().enumerate() {
        let start = epoch + Duration::days(7 * t as i64);
        let mut days: Vec<i64> = (0..n).map(|_| (rng.uniform() * 7.0) as i64 % 7).collect();
        days.sort_unstable();
        for d in days {
            out.push(IncidentRecord {
                date: start + Duration::days(d),
                tags: vec![pick(&mut rng, &BIAS).into(), pick(&mut rng, &OFFENSE).into()],
                row: 0,
            });
        }
    }
    out
}

fn trend_column(i: usize) -> Vec<f64> {
    let mut rng = RngState::new(SEED, format!("fixture/trend/{}", THEORIES[i]));
    let raw: Vec<f64> = if i % 3 == 2 {
        (0..WEEKS)
            .map(|_| if rng.uniform() < 0.08 { 10.0 + 90.0 * rng.uniform() } else { 2.0 * rng.uniform() })
            .collect()
    } else {
        let start = 20.0 + 40.0 * rng.uniform();
        let step = 3.0 + 5.0 * rng.uniform();
        let amp = 15.0 * rng.uniform();
        let phase = 2.0 * PI * rng.uniform();
        let mut x = start;
        (0..WEEKS)
            .map(|t| {
                x = (x + step * rng.standard_normal()).clamp(0.0, 100.0);
                (x + amp * (2.0 * PI * t as f64 / 52.0 + phase).sin()).max(0.0)
            })
            .collect()
    };
    let max = raw.iter().copied().fold(0.0, f64::max);
    raw.iter().map(|v| (100.0 * v / max).round()).collect()
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/cli/fixtures".into()));
    let epoch = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();

    let recs = incidents(epoch);
    std::fs::write(dir.join("michigan_incidents.csv"), render_incidents(&recs)).unwrap();

    let table = TrendTable {
        epoch,
        names: THEORIES.iter().map(|s| s.to_string()).collect(),
        columns: (0..THEORIES.len()).map(trend_column).collect(),
    };
    std::fs::write(dir.join("theory_trends.csv"), table.render()).unwrap();

    let counts = weekly_counts();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let sd = (counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    println!(
        "incidents: {} rows, weekly mean {mean:.2}, sd {sd:.2}, min {}, max {}",
        recs.len(),
        counts.iter().min().unwrap(),
        counts.iter().max().unwrap()
    );
}
