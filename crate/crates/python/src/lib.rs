//! Python bindings for `sdoh-eventkit`.
//!
//! Structured results (score reports, note labels, comparison reports) are
//! returned as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use sdoh_eventkit::assembly::{predict_document, to_json_events};
use sdoh_eventkit::casestudy::{compare, IndicatorSource, PatientIndicator, Sdoh};
use sdoh_eventkit::corpus_io::{
    extract_social_history, default_headers, generate_corpus, parse_annotations, read_corpus_entries,
    serialize_standoff, tokenize, write_corpus_dir, CorpusPartition, Document as CoreDocument, PartitionName,
    SynthGrammar,
};
use sdoh_eventkit::model::{load_checkpoint, save_checkpoint, train, ModelConfig, ModelParams};
use sdoh_eventkit::notelevel::{events_to_note_labels, Field};
use sdoh_eventkit::scorer::{report, score_documents};
use sdoh_eventkit::{AnnotationSet, LabelInventory};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(json_to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, json_to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &serde_json::to_value(v).map_err(value_err)?)
}

/// A note's social-history section with its metadata.
#[pyclass(name = "Document", from_py_object)]
#[derive(Clone)]
pub struct PyDocument {
    inner: CoreDocument,
}

#[pymethods]
impl PyDocument {
    #[new]
    #[pyo3(signature = (id, text, patient_id = String::new(), timestamp = String::new()))]
    fn new(id: String, text: String, patient_id: String, timestamp: String) -> Self {
        let mut inner = CoreDocument::from_section(id, text);
        inner.patient_id = patient_id;
        inner.timestamp = timestamp;
        PyDocument { inner }
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn patient_id(&self) -> &str {
        &self.inner.patient_id
    }

    #[getter]
    fn timestamp(&self) -> &str {
        &self.inner.timestamp
    }

    #[getter]
    fn note_type(&self) -> &'static str {
        self.inner.note_type.as_str()
    }

    #[getter]
    fn specialty(&self) -> Option<&str> {
        self.inner.specialty.as_deref()
    }

    #[getter]
    fn text(&self) -> &str {
        &self.inner.section_text
    }

    fn __repr__(&self) -> String {
        format!("Document(id={:?}, chars={})", self.inner.id, self.inner.section_len())
    }
}

/// Events (and orphan entities) annotated on one document.
#[pyclass(name = "Annotations", from_py_object)]
#[derive(Clone)]
pub struct PyAnnotations {
    inner: AnnotationSet,
}

#[pymethods]
impl PyAnnotations {
    /// Parses standoff annotation text against the document's section text.
    #[staticmethod]
    #[pyo3(signature = (document, ann, include_method = false))]
    fn from_standoff(document: &PyDocument, ann: &str, include_method: bool) -> PyResult<Self> {
        let inv = LabelInventory::new(include_method);
        let inner = parse_annotations(&document.inner.id, &document.inner.section_text, ann, &inv).map_err(value_err)?;
        Ok(PyAnnotations { inner })
    }

    #[getter]
    fn document_id(&self) -> &str {
        &self.inner.document_id
    }

    fn __len__(&self) -> usize {
        self.inner.events.len()
    }

    fn to_standoff(&self, document: &PyDocument) -> String {
        serialize_standoff(&document.inner, &self.inner)
    }

    /// Events as dicts with trigger/argument text taken from `document`.
    fn events<'py>(&self, py: Python<'py>, document: &PyDocument) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &to_json_events(&document.inner.section_text, &self.inner).events)
    }

    /// Note-level value per field; `unknown` when no event supplies one.
    fn note_labels<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let labels = events_to_note_labels(&self.inner.events);
        let d = PyDict::new(py);
        for f in Field::ALL {
            d.set_item(f.as_str(), labels.get(f).as_str())?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Annotations(document_id={:?}, events={})", self.inner.document_id, self.inner.events.len())
    }
}

/// Annotated documents.
#[pyclass(name = "Corpus", from_py_object)]
#[derive(Clone)]
pub struct PyCorpus {
    entries: Vec<(CoreDocument, AnnotationSet)>,
}

#[pymethods]
impl PyCorpus {
    /// Generates a synthetic corpus from the bundled grammar.
    #[staticmethod]
    #[pyo3(signature = (n_docs, seed = 7))]
    fn synthetic(n_docs: usize, seed: u64) -> PyResult<Self> {
        let p = generate_corpus(&SynthGrammar::default_grammar(), n_docs, seed).map_err(value_err)?;
        Ok(PyCorpus { entries: p.entries })
    }

    /// Reads a corpus directory (`<id>.txt`, `<id>.ann`, `manifest.csv`).
    #[staticmethod]
    #[pyo3(signature = (path, include_method = false))]
    fn read(path: PathBuf, include_method: bool) -> PyResult<Self> {
        let entries = read_corpus_entries(&path, &LabelInventory::new(include_method)).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(PyCorpus { entries: entries.into_iter().map(|(d, a, _)| (d, a)).collect() })
    }

    /// Writes every document into the training partition of `path`.
    fn write(&self, path: PathBuf) -> PyResult<()> {
        let mut p = CorpusPartition::new(PartitionName::Train);
        p.entries = self.entries.clone();
        write_corpus_dir(&path, &[&p]).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.entries.len()
    }

    fn __getitem__(&self, index: isize) -> PyResult<(PyDocument, PyAnnotations)> {
        let n = self.entries.len() as isize;
        let i = if index < 0 { index + n } else { index };
        if i < 0 || i >= n {
            return Err(PyIndexError::new_err("corpus index out of range"));
        }
        let (d, a) = &self.entries[i as usize];
        Ok((PyDocument { inner: d.clone() }, PyAnnotations { inner: a.clone() }))
    }

    /// Documents `[start, end)` as a new corpus.
    fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.entries.len());
        PyCorpus { entries: self.entries[start.min(end)..end].to_vec() }
    }

    fn annotations(&self) -> Vec<PyAnnotations> {
        self.entries.iter().map(|(_, a)| PyAnnotations { inner: a.clone() }).collect()
    }

    fn documents(&self) -> Vec<PyDocument> {
        self.entries.iter().map(|(d, _)| PyDocument { inner: d.clone() }).collect()
    }
}

/// A trained span/relation model.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    /// Trains with the toy encoder. `config` holds model settings by name,
    /// e.g. `{"epochs": 20, "hidden_dim": 32}`; unset fields keep defaults.
    #[staticmethod]
    #[pyo3(signature = (corpus, config = None))]
    fn train(py: Python<'_>, corpus: &PyCorpus, config: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg: ModelConfig = match config {
            Some(d) => {
                let json = py.import("json")?.call_method1("dumps", (d,))?.extract::<String>()?;
                serde_json::from_str(&json).map_err(value_err)?
            }
            None => ModelConfig::default(),
        };
        let mut part = CorpusPartition::new(PartitionName::Train);
        part.entries = corpus.entries.clone();
        let inner = py.detach(|| train(&part, &cfg, &cfg.inventory())).map_err(value_err)?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: load_checkpoint(&path).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, &path).map_err(value_err)
    }

    fn predict(&self, py: Python<'_>, document: &PyDocument) -> PyResult<PyAnnotations> {
        let (anns, _) = py.detach(|| predict_document(&self.inner, &document.inner, None)).map_err(value_err)?;
        Ok(PyAnnotations { inner: anns })
    }

    fn predict_corpus(&self, py: Python<'_>, corpus: &PyCorpus) -> PyResult<Vec<PyAnnotations>> {
        py.detach(|| {
            corpus
                .entries
                .iter()
                .map(|(d, _)| predict_document(&self.inner, d, None).map(|(a, _)| PyAnnotations { inner: a }))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(value_err)
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.config)
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.weights.num_parameters()
    }
}

/// Scores predictions against gold; returns the full report as a dict.
#[pyfunction]
fn score<'py>(py: Python<'py>, gold: Vec<PyAnnotations>, pred: Vec<PyAnnotations>) -> PyResult<Bound<'py, PyAny>> {
    let g: Vec<_> = gold.into_iter().map(|a| a.inner).collect();
    let p: Vec<_> = pred.into_iter().map(|a| a.inner).collect();
    let (counts, _) = score_documents(&g, &p).map_err(value_err)?;
    to_py(py, &report(&counts))
}

fn parse_sdoh(s: &str) -> PyResult<Sdoh> {
    Sdoh::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| PyValueError::new_err(format!("unknown sdoh {s:?}")))
}

/// Partitions positive patients per SDOH. Each indicator is a
/// `(patient_id, sdoh)` pair, e.g. `("p1", "tobacco_current")`.
#[pyfunction]
#[pyo3(signature = (structured, extracted, narrative = None))]
fn compare_indicators<'py>(
    py: Python<'py>,
    structured: Vec<(String, String)>,
    extracted: Vec<(String, String)>,
    narrative: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut all = Vec::new();
    for (rows, source) in [(structured, IndicatorSource::Structured), (extracted, IndicatorSource::Extracted)] {
        for (p, s) in rows {
            all.push(PatientIndicator::new(p, parse_sdoh(&s)?, source));
        }
    }
    let narrative = narrative.map(|n| n.into_iter().collect());
    to_py(py, &compare(&all, narrative.as_ref()))
}

/// `(token, start, end)` triples with character offsets.
#[pyfunction(name = "tokenize")]
fn py_tokenize(text: &str) -> Vec<(String, usize, usize)> {
    tokenize(text).tokens.into_iter().map(|t| (t.text, t.span.start, t.span.end)).collect()
}

/// The social-history section of a note and its character offset.
#[pyfunction(name = "extract_social_history")]
#[pyo3(signature = (text, headers = None))]
fn py_extract_social_history(text: &str, headers: Option<Vec<String>>) -> Option<(String, usize)> {
    let headers = headers.unwrap_or_else(default_headers);
    extract_social_history(text, &headers).map(|s| (s.text, s.offset))
}

#[pymodule]
#[pyo3(name = "sdoh_eventkit")]
fn sdoh_eventkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    init(m)
}

/// Registers classes and functions on `m`; also used to embed the module.
pub fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", sdoh_eventkit::VERSION)?;
    m.add_class::<PyDocument>()?;
    m.add_class::<PyAnnotations>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(compare_indicators, m)?)?;
    m.add_function(wrap_pyfunction!(py_tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(py_extract_social_history, m)?)?;
    Ok(())
}
