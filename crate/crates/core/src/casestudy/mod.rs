//! Patient-level comparison of structured EHR records with events
//! extracted from narrative text.

mod compare;
mod lexicon;
mod mapping;
mod stratify;
mod structured;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use compare::{
    compare, extracted_indicators, narrative_patients, patient_indicators, structured_indicators, ComparisonReport,
    ComparisonRow, IndicatorSource, PatientIndicator, Sdoh, DENOMINATOR_NOTE,
};
pub use lexicon::{normalize_substances, CategoryReport, LexiconRule, NormalizationLexicon, SubstanceCategory, SubstanceReport, UNNORMALIZED};
pub use mapping::{MappingRule, Predicate, StructuredMapping};
pub use stratify::{stratify, CountRow, CountTable, Stratification, TOP_SPECIALTIES};
pub use structured::{
    ingest_structured, read_employment_status, read_flowsheet, read_occupation, read_social_history_table, read_visits,
    StructuredData, StructuredRecord, StructuredSource, Visit,
};
pub use synth::{synthesize_structured, write_structured, StructuredTables};

#[derive(Debug, Error)]
pub enum CaseStudyError {
    #[error("{file}: row {row}: {message}")]
    Row { file: String, row: usize, message: String },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("structured mapping: {0}")]
    Mapping(String),
    #[error("substance lexicon: {0}")]
    Lexicon(String),
}
