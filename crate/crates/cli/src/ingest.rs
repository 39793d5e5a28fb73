//! Strict CSV readers for incident and trend tables, plus their normalized
//! writers.

use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use thiserror::Error;

use trendlag::importance::NamedSeries;
use trendlag::series::{IncidentRecord, SeriesKind, WeeklySeries};

pub const INCIDENT_COLUMNS: [&str; 3] = ["date", "bias", "offense"];
pub const WEEK_COLUMN: &str = "week_start";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: file is empty")]
    Empty { path: String },
    #[error("{path}: header present but no data rows")]
    NoRows { path: String },
    #[error("{path}: unknown column {column:?}; allowed columns are {allowed}")]
    UnknownColumn {
        path: String,
        column: String,
        allowed: String,
    },
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: String, column: String },
    #[error("{path}: column {column:?} appears twice")]
    DuplicateColumn { path: String, column: String },
    #[error("{path} line {line}: {column}: {value:?} is not an ISO date (YYYY-MM-DD)")]
    BadDate {
        path: String,
        line: usize,
        column: String,
        value: String,
    },
    #[error("{path} line {line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path} line {line}, column {column:?}: {value:?} is not an integer in [0, 100]")]
    BadValue {
        path: String,
        line: usize,
        column: String,
        value: String,
    },
    #[error("{path} line {line}, column {column:?}: empty cell")]
    MissingCell {
        path: String,
        line: usize,
        column: String,
    },
    #[error("{path} line {line}: missing week {expected} (next row starts {found})")]
    MissingWeek {
        path: String,
        line: usize,
        expected: NaiveDate,
        found: NaiveDate,
    },
    #[error("{path}: trend table covers {have_from}..{have_to}, need {want_from} for {weeks} weeks")]
    Coverage {
        path: String,
        have_from: NaiveDate,
        have_to: NaiveDate,
        want_from: NaiveDate,
        weeks: usize,
    },
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes())
}

// Data row `i` (0-based) sits on file line `i + 2`.
fn line_of(pos: Option<&csv::Position>, fallback: usize) -> usize {
    pos.map(|p| p.line() as usize).unwrap_or(fallback)
}

fn malformed(path: &str, fallback: usize, e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback);
    IngestError::Malformed {
        path: path.to_string(),
        line,
        message: e.to_string(),
    }
}

pub fn parse_incidents(path: &Path) -> Result<Vec<IncidentRecord>, IngestError> {
    parse_incidents_str(&read(path)?, &path.display().to_string())
}

/// Incidents in file order. Row numbers are file line numbers. Tags are
/// always `[bias, offense]`, empty when the column is absent.
pub fn parse_incidents_str(text: &str, path: &str) -> Result<Vec<IncidentRecord>, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::Empty { path: path.into() });
    }
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| malformed(path, 1, e))?.clone();
    let mut index = [None; 3];
    for (i, h) in headers.iter().enumerate() {
        let Some(slot) = INCIDENT_COLUMNS.iter().position(|c| *c == h) else {
            return Err(IngestError::UnknownColumn {
                path: path.into(),
                column: h.into(),
                allowed: INCIDENT_COLUMNS.join(", "),
            });
        };
        if index[slot].replace(i).is_some() {
            return Err(IngestError::DuplicateColumn {
                path: path.into(),
                column: h.into(),
            });
        }
    }
    let date_col = index[0].ok_or_else(|| IngestError::MissingColumn {
        path: path.into(),
        column: "date".into(),
    })?;

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(path, i + 2, e))?;
        let line = line_of(rec.position(), i + 2);
        let raw = &rec[date_col];
        let date = parse_date(raw).ok_or_else(|| IngestError::BadDate {
            path: path.into(),
            line,
            column: "date".into(),
            value: raw.into(),
        })?;
        let tag = |slot: usize| index[slot].map(|c| rec[c].to_string()).unwrap_or_default();
        out.push(IncidentRecord {
            date,
            tags: vec![tag(1), tag(2)],
            row: line,
        });
    }
    if out.is_empty() {
        return Err(IngestError::NoRows { path: path.into() });
    }
    Ok(out)
}

/// Canonical `date,bias,offense` form.
pub fn render_incidents(records: &[IncidentRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(INCIDENT_COLUMNS).expect("in-memory write");
    for r in records {
        let tag = |i: usize| r.tags.get(i).map(String::as_str).unwrap_or("");
        w.write_record([r.date.to_string().as_str(), tag(0), tag(1)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Wide weekly table: one integer 0-100 column per named series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendTable {
    pub epoch: NaiveDate,
    pub names: Vec<String>,
    /// Column-major values.
    pub columns: Vec<Vec<f64>>,
}

impl TrendTable {
    pub fn weeks(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn last_week(&self) -> NaiveDate {
        self.epoch + Duration::days(7 * (self.weeks() as i64 - 1))
    }

    /// Rows `[epoch, epoch + 7 * weeks)`; `epoch` must be one of the table's
    /// week starts.
    pub fn window(&self, epoch: NaiveDate, weeks: usize, path: &str) -> Result<TrendTable, IngestError> {
        let offset = (epoch - self.epoch).num_days();
        let fits = offset >= 0 && offset % 7 == 0 && (offset / 7) as usize + weeks <= self.weeks();
        if !fits || weeks == 0 {
            return Err(IngestError::Coverage {
                path: path.into(),
                have_from: self.epoch,
                have_to: self.last_week(),
                want_from: epoch,
                weeks,
            });
        }
        let start = (offset / 7) as usize;
        Ok(TrendTable {
            epoch,
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[start..start + weeks].to_vec()).collect(),
        })
    }

    pub fn series(&self) -> Vec<NamedSeries> {
        self.names
            .iter()
            .zip(&self.columns)
            .map(|(name, col)| NamedSeries {
                name: name.clone(),
                series: WeeklySeries::new(self.epoch, col.clone(), SeriesKind::Index)
                    .expect("validated at parse time"),
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![WEEK_COLUMN.to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.weeks() {
            let mut row = vec![(self.epoch + Duration::days(7 * i as i64)).to_string()];
            row.extend(self.columns.iter().map(|c| format!("{}", c[i] as u32)));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

pub fn parse_trends(path: &Path) -> Result<TrendTable, IngestError> {
    parse_trends_str(&read(path)?, &path.display().to_string())
}

pub fn parse_trends_str(text: &str, path: &str) -> Result<TrendTable, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::Empty { path: path.into() });
    }
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| malformed(path, 1, e))?.clone();
    if headers.get(0) != Some(WEEK_COLUMN) {
        return Err(IngestError::MissingColumn {
            path: path.into(),
            column: WEEK_COLUMN.into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(IngestError::Malformed {
            path: path.into(),
            line: 1,
            message: "no series columns after week_start".into(),
        });
    }
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() || n == WEEK_COLUMN {
            return Err(IngestError::Malformed {
                path: path.into(),
                line: 1,
                message: format!("invalid series name {n:?} in column {}", i + 2),
            });
        }
        if names[..i].contains(n) {
            return Err(IngestError::DuplicateColumn {
                path: path.into(),
                column: n.clone(),
            });
        }
    }

    let mut columns = vec![Vec::new(); names.len()];
    let mut epoch = None;
    let mut prev: Option<NaiveDate> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(path, i + 2, e))?;
        let line = line_of(rec.position(), i + 2);
        let raw = &rec[0];
        let date = parse_date(raw).ok_or_else(|| IngestError::BadDate {
            path: path.into(),
            line,
            column: WEEK_COLUMN.into(),
            value: raw.into(),
        })?;
        if let Some(p) = prev {
            let expected = p + Duration::days(7);
            if date != expected {
                return Err(IngestError::MissingWeek {
                    path: path.into(),
                    line,
                    expected,
                    found: date,
                });
            }
        }
        epoch.get_or_insert(date);
        prev = Some(date);
        for (c, name) in names.iter().enumerate() {
            let cell = &rec[c + 1];
            if cell.is_empty() {
                return Err(IngestError::MissingCell {
                    path: path.into(),
                    line,
                    column: name.clone(),
                });
            }
            let v: u32 = match cell.parse() {
                Ok(v) if v <= 100 => v,
                _ => {
                    return Err(IngestError::BadValue {
                        path: path.into(),
                        line,
                        column: name.clone(),
                        value: cell.into(),
                    })
                }
            };
            columns[c].push(f64::from(v));
        }
    }
    let Some(epoch) = epoch else {
        return Err(IngestError::NoRows { path: path.into() });
    };
    Ok(TrendTable { epoch, names, columns })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incident_example_row() {
        let r = parse_incidents_str("date,bias,offense\n2015-01-02,anti-X,vandalism\n", "t").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].date, NaiveDate::from_ymd_opt(2015, 1, 2).unwrap());
        assert_eq!(r[0].tags, vec!["anti-X", "vandalism"]);
        assert_eq!(r[0].row, 2);
    }

    #[test]
    fn non_iso_date_cites_line() {
        let e = parse_incidents_str("date,bias,offense\n2015-01-02,a,b\n02/01/2015,a,b\n", "t").unwrap_err();
        assert!(matches!(e, IngestError::BadDate { line: 3, .. }), "{e}");
        assert!(e.to_string().contains("line 3"));
    }

    #[test]
    fn unknown_and_missing_columns() {
        assert!(matches!(
            parse_incidents_str("date,county\n2015-01-01,x\n", "t"),
            Err(IngestError::UnknownColumn { .. })
        ));
        assert!(matches!(
            parse_incidents_str("bias\nx\n", "t"),
            Err(IngestError::MissingColumn { .. })
        ));
        assert!(matches!(parse_incidents_str("", "t"), Err(IngestError::Empty { .. })));
        assert!(matches!(parse_incidents_str("date\n", "t"), Err(IngestError::NoRows { .. })));
    }

    #[test]
    fn date_only_incidents_render_with_blank_tags() {
        let r = parse_incidents_str("date\n2015-03-04\n", "t").unwrap();
        assert_eq!(render_incidents(&r), "date,bias,offense\n2015-03-04,,\n");
    }

    #[test]
    fn trend_errors() {
        let gap = "week_start,a\n2015-01-01,3\n2015-01-15,4\n";
        let e = parse_trends_str(gap, "t").unwrap_err();
        assert!(e.to_string().contains("missing week 2015-01-08"), "{e}");
        let high = "week_start,a\n2015-01-01,101\n";
        assert!(matches!(
            parse_trends_str(high, "t"),
            Err(IngestError::BadValue { line: 2, .. })
        ));
        let blank = "week_start,a,b\n2015-01-01,1,\n";
        assert!(matches!(parse_trends_str(blank, "t"), Err(IngestError::MissingCell { .. })));
    }

    #[test]
    fn trend_window_and_round_trip() {
        let text = "week_start,a,b\n2015-01-01,1,2\n2015-01-08,3,4\n2015-01-15,5,6\n";
        let t = parse_trends_str(text, "t").unwrap();
        assert_eq!(t.render(), text);
        let w = t.window(NaiveDate::from_ymd_opt(2015, 1, 8).unwrap(), 2, "t").unwrap();
        assert_eq!(w.columns, vec![vec![3.0, 5.0], vec![4.0, 6.0]]);
        assert!(t.window(NaiveDate::from_ymd_opt(2015, 1, 8).unwrap(), 3, "t").is_err());
        assert_eq!(t.series().len(), 2);
    }
}
