//! Flat-file structured records.
//!
//! | file | columns |
//! |---|---|
//! | `flowsheet.csv` | patient_id, field, value, timestamp |
//! | `social_history_table.csv` | patient_id, alcohol_use, tobacco_use, drug_use, timestamp |
//! | `employment_status.csv` | patient_id, status |
//! | `occupation.csv` | patient_id, title, timestamp |
//! | `visits.csv` | patient_id, visit_date |
//!
//! Row numbers in errors count data rows from 1.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::CaseStudyError;
use crate::corpus_io::parse_timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuredSource {
    Flowsheet,
    SocialHistoryTable,
    EmploymentStatus,
    Occupation,
}

impl StructuredSource {
    pub const ALL: [StructuredSource; 4] = [
        StructuredSource::Flowsheet,
        StructuredSource::SocialHistoryTable,
        StructuredSource::EmploymentStatus,
        StructuredSource::Occupation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StructuredSource::Flowsheet => "flowsheet",
            StructuredSource::SocialHistoryTable => "social_history_table",
            StructuredSource::EmploymentStatus => "employment_status",
            StructuredSource::Occupation => "occupation",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StructuredRecord {
    pub patient_id: String,
    pub source: StructuredSource,
    pub field: String,
    pub value: String,
    /// Absent for employment-status rows.
    pub timestamp: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Visit {
    pub patient_id: String,
    pub visit_date: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructuredData {
    pub records: Vec<StructuredRecord>,
    pub visits: Vec<Visit>,
}

pub const VISITS_FILE: &str = "visits.csv";

struct Table {
    file: String,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn err(&self, row: usize, message: impl Into<String>) -> CaseStudyError {
        CaseStudyError::Row { file: self.file.clone(), row, message: message.into() }
    }
}

/// Reads a CSV and projects each row onto `columns` (in that order).
fn read_table(r: impl Read, file: &str, columns: &[&str]) -> Result<Table, CaseStudyError> {
    let csv_err = |source| CaseStudyError::Csv { file: file.to_string(), source };
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == *c).ok_or_else(|| CaseStudyError::Row {
                file: file.to_string(),
                row: 0,
                message: format!("missing column {c:?}"),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| CaseStudyError::Row { file: file.to_string(), row: i + 1, message: e.to_string() })?;
        rows.push(idx.iter().map(|&j| rec.get(j).unwrap_or("").to_string()).collect());
    }
    Ok(Table { file: file.to_string(), rows })
}

fn patient(t: &Table, row: usize, v: &str) -> Result<String, CaseStudyError> {
    if v.is_empty() {
        return Err(t.err(row, "empty patient_id"));
    }
    Ok(v.to_string())
}

fn date(t: &Table, row: usize, v: &str) -> Result<NaiveDate, CaseStudyError> {
    parse_timestamp(v).ok_or_else(|| t.err(row, "unparseable timestamp"))
}

fn boolean(t: &Table, row: usize, v: &str) -> Result<String, CaseStudyError> {
    match v.to_ascii_lowercase().as_str() {
        "true" => Ok("true".into()),
        "false" => Ok("false".into()),
        _ => Err(t.err(row, format!("invalid boolean {v:?}"))),
    }
}

pub fn read_flowsheet(r: impl Read) -> Result<Vec<StructuredRecord>, CaseStudyError> {
    let t = read_table(r, "flowsheet.csv", &["patient_id", "field", "value", "timestamp"])?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let row = i + 1;
            if c[1].is_empty() {
                return Err(t.err(row, "empty field name"));
            }
            Ok(StructuredRecord {
                patient_id: patient(&t, row, &c[0])?,
                source: StructuredSource::Flowsheet,
                field: c[1].clone(),
                value: c[2].clone(),
                timestamp: Some(date(&t, row, &c[3])?),
            })
        })
        .collect()
}

/// One record per substance column.
pub fn read_social_history_table(r: impl Read) -> Result<Vec<StructuredRecord>, CaseStudyError> {
    let cols = ["patient_id", "alcohol_use", "tobacco_use", "drug_use", "timestamp"];
    let t = read_table(r, "social_history_table.csv", &cols)?;
    let mut out = Vec::new();
    for (i, c) in t.rows.iter().enumerate() {
        let row = i + 1;
        let patient_id = patient(&t, row, &c[0])?;
        let ts = date(&t, row, &c[4])?;
        for k in 1..=3 {
            out.push(StructuredRecord {
                patient_id: patient_id.clone(),
                source: StructuredSource::SocialHistoryTable,
                field: cols[k].to_string(),
                value: boolean(&t, row, &c[k])?,
                timestamp: Some(ts),
            });
        }
    }
    Ok(out)
}

pub fn read_employment_status(r: impl Read) -> Result<Vec<StructuredRecord>, CaseStudyError> {
    let t = read_table(r, "employment_status.csv", &["patient_id", "status"])?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, c)| {
            Ok(StructuredRecord {
                patient_id: patient(&t, i + 1, &c[0])?,
                source: StructuredSource::EmploymentStatus,
                field: "status".into(),
                value: c[1].clone(),
                timestamp: None,
            })
        })
        .collect()
}

pub fn read_occupation(r: impl Read) -> Result<Vec<StructuredRecord>, CaseStudyError> {
    let t = read_table(r, "occupation.csv", &["patient_id", "title", "timestamp"])?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let row = i + 1;
            Ok(StructuredRecord {
                patient_id: patient(&t, row, &c[0])?,
                source: StructuredSource::Occupation,
                field: "title".into(),
                value: c[1].clone(),
                timestamp: Some(date(&t, row, &c[2])?),
            })
        })
        .collect()
}

pub fn read_visits(r: impl Read) -> Result<Vec<Visit>, CaseStudyError> {
    let t = read_table(r, VISITS_FILE, &["patient_id", "visit_date"])?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let row = i + 1;
            Ok(Visit { patient_id: patient(&t, row, &c[0])?, visit_date: date(&t, row, &c[1])? })
        })
        .collect()
}

fn open(dir: &Path, name: &str) -> Result<Option<std::fs::File>, CaseStudyError> {
    let path = dir.join(name);
    match std::fs::File::open(&path) {
        Ok(f) => Ok(Some(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("{} not found; treating as empty", path.display());
            Ok(None)
        }
        Err(source) => Err(CaseStudyError::Io { path, source }),
    }
}

/// Reads every table present in `dir`. Employment-status rows carry no
/// date, so they are kept only for patients with a visit in `year`.
pub fn ingest_structured(dir: &Path, year: i32) -> Result<StructuredData, CaseStudyError> {
    let mut data = StructuredData::default();
    if let Some(f) = open(dir, VISITS_FILE)? {
        data.visits = read_visits(f)?;
    }
    let visited: BTreeSet<&str> = data
        .visits
        .iter()
        .filter(|v| v.visit_date.year() == year)
        .map(|v| v.patient_id.as_str())
        .collect();
    for source in StructuredSource::ALL {
        let Some(f) = open(dir, &source.file_name())? else { continue };
        let recs = match source {
            StructuredSource::Flowsheet => read_flowsheet(f)?,
            StructuredSource::SocialHistoryTable => read_social_history_table(f)?,
            StructuredSource::Occupation => read_occupation(f)?,
            StructuredSource::EmploymentStatus => {
                let all = read_employment_status(f)?;
                let n = all.len();
                let kept: Vec<_> = all.into_iter().filter(|r| visited.contains(r.patient_id.as_str())).collect();
                if kept.len() < n {
                    log::info!("employment_status: dropped {} rows without a {year} visit", n - kept.len());
                }
                kept
            }
        };
        data.records.extend(recs);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn social_history_row() {
        let recs = read_social_history_table("patient_id,alcohol_use,tobacco_use,drug_use,timestamp\np1,false,true,false,2021-03-04\n".as_bytes()).unwrap();
        assert_eq!(recs.len(), 3);
        let tob = recs.iter().find(|r| r.field == "tobacco_use").unwrap();
        assert_eq!(tob.value, "true");
        assert_eq!(tob.timestamp, NaiveDate::from_ymd_opt(2021, 3, 4));
    }

    #[test]
    fn bad_timestamp_names_row() {
        let mut csv = String::from("patient_id,field,value,timestamp\n");
        for i in 0..16 {
            csv.push_str(&format!("p{i},tobacco_status,current,2021-01-01\n"));
        }
        csv.push_str("p99,tobacco_status,current,yesterday\n");
        let err = read_flowsheet(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.ends_with("row 17: unparseable timestamp"), "{err}");
    }

    #[test]
    fn employment_requires_visit_in_year() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("employment_status.csv"), "patient_id,status\np1,employed\np2,retired\n").unwrap();
        std::fs::write(dir.path().join("visits.csv"), "patient_id,visit_date\np1,2021-06-01\np2,2019-02-02\n").unwrap();
        let d = ingest_structured(dir.path(), 2021).unwrap();
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.records[0].patient_id, "p1");
    }

    #[test]
    fn schema_violations() {
        assert!(read_visits("patient_id\np1\n".as_bytes()).is_err());
        let err = read_social_history_table("patient_id,alcohol_use,tobacco_use,drug_use,timestamp\np1,maybe,true,false,2021-03-04\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 1: invalid boolean"), "{err}");
    }
}
