//! Corpora on disk: documents, standoff annotations, manifests, sections,
//! tokenization and synthetic corpus generation.
//!
//! A corpus directory holds `<id>.txt` / `<id>.ann` pairs plus a
//! `manifest.csv` with columns `id,patient_id,timestamp,note_type,specialty,partition`.
//! Annotation offsets are character offsets into the `.txt` content.

mod section;
mod standoff;
pub mod synth;
mod tokenize;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{AnnotationSet, LabelInventory, Span};

pub use section::{default_headers, extract_social_history, Section, DEFAULT_HEADERS};
pub use standoff::{parse_annotations, parse_standoff, serialize_standoff, StandoffError};
pub use synth::{generate_corpus, SynthError, SynthGrammar};
pub use tokenize::{tokenize, tokenize_document, Token, TokenizedDocument};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("document {id}: {source}")]
    Standoff {
        id: String,
        #[source]
        source: StandoffError,
    },
    #[error("duplicate document id {0} in partition")]
    DuplicateId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteType {
    Progress,
    Emergency,
    SocialHistory,
}

impl NoteType {
    pub const ALL: [NoteType; 3] = [NoteType::Progress, NoteType::Emergency, NoteType::SocialHistory];

    pub fn as_str(self) -> &'static str {
        match self {
            NoteType::Progress => "progress",
            NoteType::Emergency => "emergency",
            NoteType::SocialHistory => "social_history",
        }
    }
}

impl fmt::Display for NoteType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoteType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NoteType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown note type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionName {
    Train,
    Dev,
    Test,
}

impl PartitionName {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionName::Train => "train",
            PartitionName::Dev => "dev",
            PartitionName::Test => "test",
        }
    }
}

impl FromStr for PartitionName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(PartitionName::Train),
            "dev" => Ok(PartitionName::Dev),
            "test" => Ok(PartitionName::Test),
            _ => Err(format!("unknown partition {s:?}")),
        }
    }
}

/// A clinical note and its social-history section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub patient_id: String,
    /// ISO-8601 date or date-time.
    pub timestamp: String,
    pub note_type: NoteType,
    pub specialty: Option<String>,
    pub full_text: String,
    pub section_text: String,
    /// Character offset of `section_text` inside `full_text`.
    pub section_offset: usize,
}

impl Document {
    /// A document whose whole text is the annotated section.
    pub fn from_section(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Document {
            id: id.into(),
            patient_id: String::new(),
            timestamp: String::new(),
            note_type: NoteType::SocialHistory,
            specialty: None,
            full_text: text.clone(),
            section_text: text,
            section_offset: 0,
        }
    }

    pub fn section_len(&self) -> usize {
        self.section_text.chars().count()
    }

    /// Text covered by `span` in section coordinates.
    pub fn span_text(&self, span: Span) -> String {
        span_text(&self.section_text, span)
    }

    pub fn date(&self) -> Option<NaiveDate> {
        parse_timestamp(&self.timestamp)
    }

    fn apply_manifest(&mut self, row: &ManifestRow) {
        self.patient_id = row.patient_id.clone();
        self.timestamp = row.timestamp.clone();
        self.note_type = row.note_type;
        self.specialty = row.specialty.clone().filter(|s| !s.is_empty());
    }
}

pub fn span_text(text: &str, span: Span) -> String {
    text.chars().skip(span.start).take(span.len()).collect()
}

/// Accepts `YYYY-MM-DD` and `YYYY-MM-DDTHH:MM:SS` (space separator allowed).
pub fn parse_timestamp(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.date())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub patient_id: String,
    pub timestamp: String,
    pub note_type: NoteType,
    #[serde(default)]
    pub specialty: Option<String>,
    pub partition: PartitionName,
}

impl ManifestRow {
    pub fn for_document(doc: &Document, partition: PartitionName) -> Self {
        ManifestRow {
            id: doc.id.clone(),
            patient_id: doc.patient_id.clone(),
            timestamp: doc.timestamp.clone(),
            note_type: doc.note_type,
            specialty: doc.specialty.clone(),
            partition,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.csv";

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, CorpusError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<ManifestRow>().enumerate() {
        let row = rec.map_err(|e| CorpusError::Manifest {
            row: i + 1,
            message: e.to_string(),
        })?;
        if !row.timestamp.is_empty() && parse_timestamp(&row.timestamp).is_none() {
            return Err(CorpusError::Manifest {
                row: i + 1,
                message: format!("unparseable timestamp {:?}", row.timestamp),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Documents with their gold (or predicted) annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPartition {
    pub name: PartitionName,
    pub entries: Vec<(Document, AnnotationSet)>,
}

impl CorpusPartition {
    pub fn new(name: PartitionName) -> Self {
        CorpusPartition {
            name,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn check_unique_ids(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for (d, _) in &self.entries {
            if !seen.insert(d.id.as_str()) {
                return Err(CorpusError::DuplicateId(d.id.clone()));
            }
        }
        Ok(())
    }
}

/// Reads a corpus directory, grouped by manifest partition. A missing
/// `.ann` file yields an empty annotation set.
pub fn read_corpus_dir(
    dir: &Path,
    inv: &LabelInventory,
) -> Result<BTreeMap<PartitionName, CorpusPartition>, CorpusError> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let mut out: BTreeMap<PartitionName, CorpusPartition> = BTreeMap::new();
    for row in &manifest {
        let txt_path = dir.join(format!("{}.txt", row.id));
        let text = fs::read_to_string(&txt_path).map_err(io_err(&txt_path))?;
        let ann_path = dir.join(format!("{}.ann", row.id));
        let ann = match fs::read_to_string(&ann_path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(&ann_path)(e)),
        };
        let (mut doc, anns) = parse_standoff(&row.id, &text, &ann, inv).map_err(|source| {
            CorpusError::Standoff {
                id: row.id.clone(),
                source,
            }
        })?;
        doc.apply_manifest(row);
        out.entry(row.partition)
            .or_insert_with(|| CorpusPartition::new(row.partition))
            .entries
            .push((doc, anns));
    }
    for p in out.values() {
        p.check_unique_ids()?;
    }
    Ok(out)
}

/// Reads every partition of a corpus directory into one list, in manifest order.
pub fn read_corpus_entries(
    dir: &Path,
    inv: &LabelInventory,
) -> Result<Vec<(Document, AnnotationSet, PartitionName)>, CorpusError> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let mut parts = read_corpus_dir(dir, inv)?;
    let mut by_id: BTreeMap<String, (Document, AnnotationSet, PartitionName)> = BTreeMap::new();
    for (name, p) in std::mem::take(&mut parts) {
        for (d, a) in p.entries {
            by_id.insert(d.id.clone(), (d, a, name));
        }
    }
    Ok(manifest
        .iter()
        .filter_map(|r| by_id.remove(&r.id))
        .collect())
}

/// Writes `<id>.txt` (section text), `<id>.ann` and `manifest.csv`.
pub fn write_corpus_dir(dir: &Path, partitions: &[&CorpusPartition]) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut rows = Vec::new();
    for p in partitions {
        for (doc, anns) in &p.entries {
            let txt = dir.join(format!("{}.txt", doc.id));
            fs::write(&txt, &doc.section_text).map_err(io_err(&txt))?;
            let ann = dir.join(format!("{}.ann", doc.id));
            fs::write(&ann, serialize_standoff(doc, anns)).map_err(io_err(&ann))?;
            rows.push(ManifestRow::for_document(doc, p.name));
        }
    }
    write_manifest(&dir.join(MANIFEST_FILE), &rows)
}

/// Keeps only the latest social-history documentation record per patient;
/// other note types pass through. Ties keep the first in input order.
pub fn keep_latest_social_history(docs: Vec<Document>) -> Vec<Document> {
    let mut latest: BTreeMap<String, (Option<NaiveDate>, String, usize)> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        if d.note_type != NoteType::SocialHistory {
            continue;
        }
        let key = (d.date(), d.timestamp.clone(), i);
        latest
            .entry(d.patient_id.clone())
            .and_modify(|cur| {
                if (key.0, &key.1) > (cur.0, &cur.1) {
                    *cur = key.clone();
                }
            })
            .or_insert(key);
    }
    let keep: HashSet<usize> = latest.values().map(|(_, _, i)| *i).collect();
    docs.into_iter()
        .enumerate()
        .filter(|(i, d)| d.note_type != NoteType::SocialHistory || keep.contains(i))
        .map(|(_, d)| d)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, patient: &str, ts: &str, nt: NoteType) -> Document {
        let mut d = Document::from_section(id, "x");
        d.patient_id = patient.into();
        d.timestamp = ts.into();
        d.note_type = nt;
        d
    }

    #[test]
    fn latest_social_history_per_patient() {
        let docs = vec![
            doc("a", "p1", "2021-01-01", NoteType::SocialHistory),
            doc("b", "p1", "2021-06-01", NoteType::SocialHistory),
            doc("c", "p1", "2021-02-01", NoteType::Progress),
            doc("d", "p2", "2021-03-01", NoteType::SocialHistory),
        ];
        let ids: Vec<String> = keep_latest_social_history(docs).into_iter().map(|d| d.id).collect();
        assert_eq!(ids, ["b", "c", "d"]);
    }

    #[test]
    fn timestamps() {
        assert!(parse_timestamp("2021-03-04").is_some());
        assert!(parse_timestamp("2021-03-04T10:11:12").is_some());
        assert!(parse_timestamp("03/04/2021").is_none());
    }

    #[test]
    fn corpus_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grammar = SynthGrammar::default_grammar();
        let inv = LabelInventory::default();
        let p = generate_corpus(&grammar, 5, 3).unwrap();
        write_corpus_dir(dir.path(), &[&p]).unwrap();
        let back = read_corpus_dir(dir.path(), &inv).unwrap();
        let q = &back[&PartitionName::Train];
        assert_eq!(q.len(), 5);
        for ((d1, a1), (d2, a2)) in p.entries.iter().zip(&q.entries) {
            assert_eq!(d1.section_text, d2.section_text);
            assert_eq!(d1.patient_id, d2.patient_id);
            assert_eq!(a1.normalized(), a2.normalized());
        }
    }
}
