//! Synthetic structured tables loosely consistent with an annotated corpus.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::compare::{extracted_indicators, Sdoh};
use super::structured::{StructuredSource, VISITS_FILE};
use super::CaseStudyError;
use crate::corpus_io::Document;
use crate::schema::AnnotationSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowsheetRow {
    pub patient_id: String,
    pub field: String,
    pub value: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialHistoryRow {
    pub patient_id: String,
    pub alcohol_use: bool,
    pub tobacco_use: bool,
    pub drug_use: bool,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmploymentStatusRow {
    pub patient_id: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupationRow {
    pub patient_id: String,
    pub title: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitRow {
    pub patient_id: String,
    pub visit_date: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructuredTables {
    pub flowsheet: Vec<FlowsheetRow>,
    pub social_history: Vec<SocialHistoryRow>,
    pub employment_status: Vec<EmploymentStatusRow>,
    pub occupation: Vec<OccupationRow>,
    pub visits: Vec<VisitRow>,
}

const RECALL: f64 = 0.7;
const FALSE_POSITIVE: f64 = 0.05;
const TITLES: &[&str] = &["teacher", "driver", "cashier", "nurse", "construction worker"];

fn date(rng: &mut ChaCha8Rng, year: i32) -> String {
    let d = NaiveDate::from_yo_opt(year, rng.gen_range(1..=365)).expect("valid ordinal");
    d.format("%Y-%m-%d").to_string()
}

/// Structured rows record each gold-positive indicator with probability
/// 0.7 and add occasional false positives. About one extra patient per
/// five corpus patients exists only in the structured tables.
pub fn synthesize_structured(entries: &[(Document, AnnotationSet)], year: i32, seed: u64) -> StructuredTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = extracted_indicators(entries, None);
    let mut patients: BTreeSet<String> =
        entries.iter().map(|(d, _)| d.patient_id.clone()).filter(|p| !p.is_empty()).collect();
    let extra = patients.len().div_ceil(5);
    patients.extend((0..extra).map(|i| format!("S{i:04}")));

    let mut t = StructuredTables::default();
    for p in &patients {
        let has = |s: Sdoh| truth.iter().any(|i| i.sdoh == s && &i.patient_id == p);
        let flag = |rng: &mut ChaCha8Rng, s: Sdoh| {
            if has(s) {
                rng.gen_bool(RECALL)
            } else {
                rng.gen_bool(FALSE_POSITIVE)
            }
        };
        let visit_year = if rng.gen_bool(0.9) { year } else { year - 1 };
        t.visits.push(VisitRow { patient_id: p.clone(), visit_date: date(&mut rng, visit_year) });

        let alcohol_use = flag(&mut rng, Sdoh::AlcoholCurrent);
        let tobacco_use = flag(&mut rng, Sdoh::TobaccoCurrent);
        let drug_use = flag(&mut rng, Sdoh::DrugCurrent);
        t.social_history.push(SocialHistoryRow {
            patient_id: p.clone(),
            alcohol_use,
            tobacco_use,
            drug_use,
            timestamp: date(&mut rng, year),
        });

        let living = if flag(&mut rng, Sdoh::HomelessCurrent) {
            "homeless"
        } else {
            ["lives alone", "with family", "with others"].choose(&mut rng).copied().unwrap_or("with family")
        };
        t.flowsheet.push(FlowsheetRow {
            patient_id: p.clone(),
            field: "living_situation".into(),
            value: living.into(),
            timestamp: date(&mut rng, year),
        });

        let status = if flag(&mut rng, Sdoh::EmploymentAny) {
            ["employed", "unemployed", "retired"].choose(&mut rng).copied().unwrap_or("employed")
        } else {
            "unknown"
        };
        t.employment_status.push(EmploymentStatusRow { patient_id: p.clone(), status: status.into() });
        if rng.gen_bool(0.2) {
            t.occupation.push(OccupationRow {
                patient_id: p.clone(),
                title: TITLES.choose(&mut rng).copied().unwrap_or("teacher").into(),
                timestamp: date(&mut rng, year),
            });
        }
    }
    t
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T], header: &[&str]) -> Result<(), CaseStudyError> {
    let path = dir.join(name);
    let file = std::fs::File::create(&path).map_err(|source| CaseStudyError::Io { path, source })?;
    let csv_err = |source| CaseStudyError::Csv { file: name.to_string(), source };
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(file);
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

pub fn write_structured(dir: &Path, t: &StructuredTables) -> Result<(), CaseStudyError> {
    std::fs::create_dir_all(dir).map_err(|source| CaseStudyError::Io { path: dir.to_path_buf(), source })?;
    let name = |s: StructuredSource| s.file_name();
    write_csv(dir, &name(StructuredSource::Flowsheet), &t.flowsheet, &["patient_id", "field", "value", "timestamp"])?;
    write_csv(
        dir,
        &name(StructuredSource::SocialHistoryTable),
        &t.social_history,
        &["patient_id", "alcohol_use", "tobacco_use", "drug_use", "timestamp"],
    )?;
    write_csv(dir, &name(StructuredSource::EmploymentStatus), &t.employment_status, &["patient_id", "status"])?;
    write_csv(dir, &name(StructuredSource::Occupation), &t.occupation, &["patient_id", "title", "timestamp"])?;
    write_csv(dir, VISITS_FILE, &t.visits, &["patient_id", "visit_date"])
}
