//! The `sdoh-eventkit` command line.
//!
//! Every subcommand reads an optional JSON [`RunConfig`] (`--config`),
//! applies flag overrides on top of it, checks that every input path
//! exists, and writes its artifacts under `--output-dir`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{predict_document, to_json_events, JsonEvents};
use crate::casestudy::{
    compare, ingest_structured, narrative_patients, normalize_substances, patient_indicators, stratify,
    synthesize_structured, write_structured, CaseStudyError, NormalizationLexicon, StructuredMapping,
};
use crate::corpus_io::{
    default_headers, extract_social_history, generate_corpus, read_corpus_entries, read_manifest, write_corpus_dir,
    CorpusError, CorpusPartition, Document, NoteType, PartitionName, SynthError, SynthGrammar, MANIFEST_FILE,
};
use crate::model::{
    load_checkpoint, save_checkpoint, train_with, EncoderKind, FileEncoder, ModelConfig, ModelError,
    RelationCandidatePolicy, CHECKPOINT_VERSION, EMBEDDINGS_VERSION,
};
use crate::notelevel::{events_to_note_labels, note_metrics_by_id, read_note_labels_csv, write_note_labels_csv, NoteLevelError};
use crate::schema::{validate_event, AnnotationSet};
use crate::scorer::{report, score_documents, ScoreError};

pub const ENV_LOG: &str = "SDOH_EVENTKIT_LOG";
pub const DEFAULT_YEAR: i32 = 2021;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation; reported with usage text and exit status 2.
    #[error("{0}")]
    Usage(String),
    #[error("input path does not exist: {0}")]
    MissingPath(PathBuf),
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
    #[error("{0} annotation violations")]
    Invalid(usize),
    #[error("thread pool: {0}")]
    Threads(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    NoteLevel(#[from] NoteLevelError),
    #[error(transparent)]
    CaseStudy(#[from] CaseStudyError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Settings shared by all subcommands; flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub structured: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub headers: Vec<String>,
    pub year: i32,
    pub grammar: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            checkpoint: None,
            structured: None,
            output_dir: PathBuf::from("out"),
            model: ModelConfig::default(),
            headers: default_headers(),
            year: DEFAULT_YEAR,
            grammar: None,
            lexicon: None,
            mapping: None,
            embeddings: None,
            seed: 7,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let s = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        serde_json::from_str(&s).map_err(|source| CliError::Json { path: path.into(), source })
    }
}

#[derive(Debug, Parser)]
#[command(name = "sdoh-eventkit", version, about = "Event-based SDOH extraction, scoring and reporting")]
pub struct Cli {
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that receives every artifact.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for document-parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a corpus against the event schema.
    Validate(CorpusArgs),
    /// Write a synthetic annotated corpus and matching structured tables.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Extract events with a trained model.
    Predict(PredictArgs),
    /// Score predicted events against gold.
    Score(ScoreArgs),
    /// Derive note-level labels from a corpus's events.
    NoteLabels(CorpusArgs),
    /// Compare two note-level label tables.
    NoteMetrics(NoteMetricsArgs),
    /// Patient-level structured-vs-extracted comparison and substance tables.
    Compare(CompareArgs),
    /// Bundle the reports found under one or more directories.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Only documents of this manifest partition.
    #[arg(long)]
    pub partition: Option<PartitionName>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub docs: usize,
    /// Trailing documents assigned to the test partition.
    #[arg(long, default_value_t = 0)]
    pub heldout: usize,
    #[arg(long)]
    pub grammar: Option<PathBuf>,
    #[arg(long)]
    pub year: Option<i32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncoderFlag {
    Toy,
    File,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyFlag {
    EntityOnly,
    EntityOrSubtype,
}

#[derive(Debug, Default, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub width_embedding_dim: Option<usize>,
    #[arg(long)]
    pub max_span_width: Option<usize>,
    #[arg(long)]
    pub neg_entity_samples: Option<usize>,
    #[arg(long)]
    pub neg_relation_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub include_method: bool,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderFlag>,
    #[arg(long, value_enum)]
    pub relation_policy: Option<PolicyFlag>,
}

impl ModelFlags {
    fn apply(&self, c: &mut ModelConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(epochs, learning_rate, hidden_dim, width_embedding_dim, max_span_width, neg_entity_samples, neg_relation_samples, seed);
        c.include_method |= self.include_method;
        if let Some(e) = self.encoder {
            c.encoder = match e {
                EncoderFlag::Toy => EncoderKind::Toy,
                EncoderFlag::File => EncoderKind::File,
            };
        }
        if let Some(p) = self.relation_policy {
            c.relation_candidate_policy = match p {
                PolicyFlag::EntityOnly => RelationCandidatePolicy::EntityOnly,
                PolicyFlag::EntityOrSubtype => RelationCandidatePolicy::EntityOrSubtype,
            };
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Training partition.
    #[arg(long, default_value = "train")]
    pub partition: PartitionName,
    /// Precomputed token embeddings (for `--encoder file`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Standoff corpus directory (annotations are ignored).
    #[arg(long, conflicts_with = "notes")]
    pub corpus: Option<PathBuf>,
    /// Directory of full clinical notes (`*.txt`, optional manifest.csv);
    /// the social-history section is located by header.
    #[arg(long)]
    pub notes: Option<PathBuf>,
    #[arg(long)]
    pub partition: Option<PartitionName>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Section headers, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub headers: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub partition: Option<PartitionName>,
}

#[derive(Debug, Args)]
pub struct NoteMetricsArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Corpus holding the extracted events (usually `predict` output).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory with the structured CSV tables.
    #[arg(long)]
    pub structured: Option<PathBuf>,
    #[arg(long)]
    pub year: Option<i32>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long, default_value_t = crate::casestudy::TOP_SPECIALTIES)]
    pub top_specialties: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directories to search for reports (default: the output directory).
    #[arg(long)]
    pub input: Vec<PathBuf>,
}

/// `--version` text with the on-disk format versions.
pub fn long_version() -> String {
    format!(
        "{} (checkpoint format v{}, embeddings format v{})",
        crate::VERSION,
        CHECKPOINT_VERSION,
        EMBEDDINGS_VERSION
    )
}

/// Parses arguments; clap errors carry their own exit status.
pub fn parse<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = Cli::command().long_version(long_version()).try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

pub fn usage() -> String {
    Cli::command().render_usage().to_string()
}

fn require(p: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    p.ok_or_else(|| CliError::Usage(format!("missing required argument --{flag}")))
}

fn check_exists(paths: &[&Path]) -> Result<(), CliError> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::MissingPath(p.to_path_buf()));
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| CliError::Json { path: path.into(), source })?;
    s.push('\n');
    write_file(path, s)
}

fn read_entries(dir: &Path, config: &RunConfig, partition: Option<PartitionName>) -> Result<Vec<(Document, AnnotationSet, PartitionName)>, CliError> {
    let inv = config.model.inventory();
    let mut entries = read_corpus_entries(dir, &inv)?;
    if let Some(p) = partition {
        entries.retain(|e| e.2 == p);
    }
    Ok(entries)
}

fn pairs(entries: Vec<(Document, AnnotationSet, PartitionName)>) -> Vec<(Document, AnnotationSet)> {
    entries.into_iter().map(|(d, a, _)| (d, a)).collect()
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => {
            check_exists(&[p])?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(o) = cli.output_dir {
        config.output_dir = o;
    }
    if let Some(t) = cli.threads {
        config.threads = Some(t);
    }
    if let Some(n) = config.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A second call in the same process (tests) keeps the first pool.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("{}", CliError::Threads(e.to_string()));
        }
    }
    match cli.command {
        Command::Validate(a) => run_validate(config, a),
        Command::Synth(a) => run_synth(config, a),
        Command::Train(a) => run_train(config, a),
        Command::Predict(a) => run_predict(config, a),
        Command::Score(a) => run_score(config, a),
        Command::NoteLabels(a) => run_note_labels(config, a),
        Command::NoteMetrics(a) => run_note_metrics(config, a),
        Command::Compare(a) => run_compare(config, a),
        Command::Report(a) => run_report(config, a),
    }
}

#[derive(Debug, Serialize)]
struct ViolationRow {
    document_id: String,
    event: usize,
    event_type: String,
    violation: String,
    incomplete: bool,
}

fn run_validate(config: RunConfig, a: CorpusArgs) -> Result<(), CliError> {
    let corpus = require(a.corpus.or(config.corpus.clone()), "corpus")?;
    check_exists(&[&corpus])?;
    let entries = read_entries(&corpus, &config, a.partition)?;
    let inv = config.model.inventory();
    let mut rows = Vec::new();
    for (doc, anns, _) in &entries {
        for (i, e) in anns.events.iter().enumerate() {
            for v in validate_event(e, &inv) {
                println!("{}\tevent {}\t{}\t{}", doc.id, i + 1, e.trigger.event_type, v);
                rows.push(ViolationRow {
                    document_id: doc.id.clone(),
                    event: i + 1,
                    event_type: e.trigger.event_type.to_string(),
                    violation: v.to_string(),
                    incomplete: v.is_incompleteness(),
                });
            }
        }
    }
    create_dir(&config.output_dir)?;
    write_json(&config.output_dir.join("validation.json"), &rows)?;
    let errors = rows.iter().filter(|r| !r.incomplete).count();
    println!(
        "{} documents, {} events, {} violations ({} incomplete events)",
        entries.len(),
        entries.iter().map(|e| e.1.events.len()).sum::<usize>(),
        errors,
        rows.len() - errors
    );
    if errors > 0 {
        return Err(CliError::Invalid(errors));
    }
    Ok(())
}

fn run_synth(config: RunConfig, a: SynthArgs) -> Result<(), CliError> {
    let grammar_path = a.grammar.or(config.grammar.clone());
    if let Some(p) = &grammar_path {
        check_exists(&[p])?;
    }
    let grammar = match &grammar_path {
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|source| CliError::Io { path: p.clone(), source })?;
            SynthGrammar::from_json(&s)?
        }
        None => SynthGrammar::default_grammar(),
    };
    if a.heldout > a.docs {
        return Err(CliError::Usage(format!("--heldout {} exceeds --docs {}", a.heldout, a.docs)));
    }
    let seed = a.seed.unwrap_or(config.seed);
    let year = a.year.unwrap_or(config.year);
    let mut train = generate_corpus(&grammar, a.docs, seed)?;
    let mut test = CorpusPartition::new(PartitionName::Test);
    test.entries = train.entries.split_off(a.docs - a.heldout);

    let out = &config.output_dir;
    create_dir(out)?;
    write_corpus_dir(&out.join("corpus"), &[&train, &test])?;
    let all: Vec<_> = train.entries.iter().chain(&test.entries).cloned().collect();
    write_structured(&out.join("structured"), &synthesize_structured(&all, year, seed))?;
    write_file(&out.join("grammar.json"), grammar.to_json())?;
    println!("wrote {} documents ({} held out) to {}", a.docs, a.heldout, out.display());
    Ok(())
}

fn load_embeddings(path: Option<&PathBuf>) -> Result<Option<FileEncoder>, CliError> {
    Ok(match path {
        Some(p) => Some(FileEncoder::read(p)?),
        None => None,
    })
}

fn run_train(mut config: RunConfig, a: TrainArgs) -> Result<(), CliError> {
    a.model.apply(&mut config.model);
    let corpus = require(a.corpus.or(config.corpus.clone()), "corpus")?;
    let emb_path = a.embeddings.or(config.embeddings.clone());
    check_exists(&[&corpus])?;
    if let Some(p) = &emb_path {
        check_exists(&[p])?;
    }
    config.model.validate()?;
    let inv = config.model.inventory();
    let mut part = CorpusPartition::new(a.partition);
    part.entries = pairs(read_entries(&corpus, &config, Some(a.partition))?);
    let embeddings = load_embeddings(emb_path.as_ref())?;
    log::info!("training on {} documents", part.len());
    let (params, rep) = train_with(&part, &config.model, &inv, embeddings.as_ref())?;

    let out = &config.output_dir;
    create_dir(out)?;
    save_checkpoint(&params, &out.join("model.ckpt"))?;
    let mut log = String::from("epoch,mean_loss\n");
    for (i, l) in rep.epoch_losses.iter().enumerate() {
        log.push_str(&format!("{},{}\n", i + 1, l));
    }
    write_file(&out.join("train_log.csv"), log)?;
    write_json(
        &out.join("train_report.json"),
        &serde_json::json!({
            "documents": part.len(),
            "sentences": rep.sentences,
            "epochs": rep.epoch_losses.len(),
            "final_loss": rep.epoch_losses.last(),
            "skipped_gold_spans": {
                "unaligned": rep.alignment.unaligned,
                "too_wide": rep.alignment.too_wide,
                "label_conflicts": rep.alignment.label_conflicts,
            },
            "config": config.model,
        }),
    )?;
    println!(
        "trained {} epochs on {} documents; final mean loss {:.6}",
        rep.epoch_losses.len(),
        part.len(),
        rep.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Full notes from a directory; documents without a section are skipped.
fn read_notes(dir: &Path, headers: &[String]) -> Result<Vec<(Document, PartitionName)>, CliError> {
    let manifest = dir.join(MANIFEST_FILE);
    let meta: BTreeMap<String, _> = if manifest.exists() {
        read_manifest(&manifest)?.into_iter().map(|r| (r.id.clone(), r)).collect()
    } else {
        BTreeMap::new()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| CliError::Io { path: dir.into(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let full_text = fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let Some(section) = extract_social_history(&full_text, headers) else {
            log::warn!("{id}: no social-history section; skipped");
            continue;
        };
        let mut doc = Document::from_section(id.clone(), section.text);
        doc.full_text = full_text;
        doc.section_offset = section.offset;
        doc.note_type = NoteType::Progress;
        let mut partition = PartitionName::Test;
        if let Some(r) = meta.get(&id) {
            doc.patient_id = r.patient_id.clone();
            doc.timestamp = r.timestamp.clone();
            doc.note_type = r.note_type;
            doc.specialty = r.specialty.clone().filter(|s| !s.is_empty());
            partition = r.partition;
        }
        out.push((doc, partition));
    }
    Ok(out)
}

fn run_predict(config: RunConfig, a: PredictArgs) -> Result<(), CliError> {
    let checkpoint = require(a.checkpoint.or(config.checkpoint.clone()), "checkpoint")?;
    let emb_path = a.embeddings.or(config.embeddings.clone());
    let (docs, source) = match (a.notes, a.corpus.or(config.corpus.clone())) {
        (Some(n), _) => (None, n),
        (None, Some(c)) => (Some(()), c),
        (None, None) => return Err(CliError::Usage("missing required argument --corpus or --notes".into())),
    };
    check_exists(&[&checkpoint, &source])?;
    if let Some(p) = &emb_path {
        check_exists(&[p])?;
    }
    let params = load_checkpoint(&checkpoint)?;
    let embeddings = load_embeddings(emb_path.as_ref())?;
    let mut inputs: Vec<(Document, PartitionName)> = match docs {
        Some(()) => {
            let mut c = config.clone();
            c.model.include_method = params.config.include_method;
            read_entries(&source, &c, a.partition)?.into_iter().map(|(d, _, p)| (d, p)).collect()
        }
        None => {
            let headers = if a.headers.is_empty() { config.headers.clone() } else { a.headers };
            read_notes(&source, &headers)?
        }
    };
    if let Some(p) = a.partition {
        inputs.retain(|(_, q)| *q == p);
    }

    let results: Vec<_> = inputs
        .par_iter()
        .map(|(doc, _)| predict_document(&params, doc, embeddings.as_ref()))
        .collect::<Result<_, _>>()?;

    let mut parts: BTreeMap<PartitionName, CorpusPartition> = BTreeMap::new();
    let mut events: Vec<JsonEvents> = Vec::new();
    let (mut dropped, mut conflicts) = (0, 0);
    for ((doc, p), (anns, asm)) in inputs.into_iter().zip(results) {
        dropped += asm.dropped_incompatible;
        conflicts += asm.duplicate_conflicts;
        events.push(to_json_events(&doc.section_text, &anns));
        parts.entry(p).or_insert_with(|| CorpusPartition::new(p)).entries.push((doc, anns));
    }
    let out = &config.output_dir;
    create_dir(out)?;
    let refs: Vec<&CorpusPartition> = parts.values().collect();
    write_corpus_dir(&out.join("predictions"), &refs)?;
    write_json(&out.join("events.json"), &events)?;
    write_json(
        &out.join("assembly.json"),
        &serde_json::json!({
            "documents": events.len(),
            "events": events.iter().map(|e| e.events.len()).sum::<usize>(),
            "dropped_incompatible_arguments": dropped,
            "duplicate_labeled_conflicts": conflicts,
        }),
    )?;
    println!("predicted {} documents", events.len());
    Ok(())
}

fn run_score(config: RunConfig, a: ScoreArgs) -> Result<(), CliError> {
    check_exists(&[&a.gold, &a.pred])?;
    let gold: Vec<AnnotationSet> = read_entries(&a.gold, &config, a.partition)?.into_iter().map(|e| e.1).collect();
    let pred: Vec<AnnotationSet> = read_entries(&a.pred, &config, a.partition)?.into_iter().map(|e| e.1).collect();
    let (counts, alignment) = score_documents(&gold, &pred)?;
    let rep = report(&counts);
    let out = &config.output_dir;
    create_dir(out)?;
    write_json(&out.join("score.json"), &rep)?;
    write_file(&out.join("score.txt"), rep.to_table())?;
    write_json(&out.join("alignment.json"), &alignment)?;
    print!("{}", rep.to_table());
    Ok(())
}

fn run_note_labels(config: RunConfig, a: CorpusArgs) -> Result<(), CliError> {
    let corpus = require(a.corpus.or(config.corpus.clone()), "corpus")?;
    check_exists(&[&corpus])?;
    let rows: Vec<_> = read_entries(&corpus, &config, a.partition)?
        .into_iter()
        .map(|(d, anns, _)| (d.id, events_to_note_labels(&anns.events)))
        .collect();
    create_dir(&config.output_dir)?;
    let path = config.output_dir.join("note_labels.csv");
    let f = fs::File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    write_note_labels_csv(f, &rows)?;
    println!("wrote note-level labels for {} documents", rows.len());
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<(String, crate::notelevel::NoteLabelSet)>, CliError> {
    let f = fs::File::open(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    Ok(read_note_labels_csv(f)?)
}

fn run_note_metrics(config: RunConfig, a: NoteMetricsArgs) -> Result<(), CliError> {
    check_exists(&[&a.gold, &a.pred])?;
    let m = note_metrics_by_id(&read_labels(&a.gold)?, &read_labels(&a.pred)?)?;
    let out = &config.output_dir;
    create_dir(out)?;
    write_json(&out.join("note_metrics.json"), &m)?;
    write_file(&out.join("note_metrics.txt"), m.to_table())?;
    print!("{}", m.to_table());
    Ok(())
}

fn run_compare(config: RunConfig, a: CompareArgs) -> Result<(), CliError> {
    let corpus = require(a.corpus.or(config.corpus.clone()), "corpus")?;
    let structured = require(a.structured.or(config.structured.clone()), "structured")?;
    let lexicon_path = a.lexicon.or(config.lexicon.clone());
    let mapping_path = a.mapping.or(config.mapping.clone());
    let mut inputs = vec![corpus.as_path(), structured.as_path()];
    inputs.extend(lexicon_path.as_deref());
    inputs.extend(mapping_path.as_deref());
    check_exists(&inputs)?;
    let read = |p: &Path| fs::read_to_string(p).map_err(|source| CliError::Io { path: p.into(), source });
    let lexicon = match &lexicon_path {
        Some(p) => NormalizationLexicon::from_json(&read(p)?)?,
        None => NormalizationLexicon::default_lexicon(),
    };
    let mapping = match &mapping_path {
        Some(p) => StructuredMapping::from_json(&read(p)?)?,
        None => StructuredMapping::default_mapping(),
    };
    let year = a.year.unwrap_or(config.year);

    let entries = pairs(read_entries(&corpus, &config, None)?);
    let data = ingest_structured(&structured, year)?;
    let indicators = patient_indicators(&data, &mapping, &entries, Some(year));
    let narrative = narrative_patients(&entries, Some(year));
    let comparison = compare(&indicators, Some(&narrative));
    let strat = stratify(&entries, a.top_specialties);
    let substances = normalize_substances(&entries, &lexicon);

    let out = &config.output_dir;
    create_dir(out)?;
    write_json(&out.join("comparison.json"), &comparison)?;
    write_file(&out.join("comparison.txt"), comparison.to_table())?;
    write_json(&out.join("stratification.json"), &strat)?;
    write_file(
        &out.join("stratification.txt"),
        format!(
            "# documents by note type\n{}\n# documents by specialty (top {})\n{}",
            strat.by_note_type.to_table(),
            a.top_specialties,
            strat.by_specialty.to_table()
        ),
    )?;
    write_json(&out.join("substances.json"), &substances)?;
    write_file(&out.join("substances.txt"), substances.to_table())?;
    let mut csv = String::from("patient_id,sdoh,source\n");
    for i in &indicators {
        csv.push_str(&format!("{},{},{}\n", i.patient_id, i.sdoh.as_str(), serde_json::to_value(i.source).unwrap_or_default().as_str().unwrap_or("")));
    }
    write_file(&out.join("indicators.csv"), csv)?;
    print!("{}", comparison.to_table());
    Ok(())
}

/// Report files recognized by `report`, with their text renderings.
const REPORTS: &[(&str, Option<&str>)] = &[
    ("train_report.json", None),
    ("assembly.json", None),
    ("score.json", Some("score.txt")),
    ("note_metrics.json", Some("note_metrics.txt")),
    ("comparison.json", Some("comparison.txt")),
    ("stratification.json", Some("stratification.txt")),
    ("substances.json", Some("substances.txt")),
];

fn find_reports(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| CliError::Io { path: dir.into(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_reports(&p, found)?;
        } else if p.file_name().is_some_and(|n| REPORTS.iter().any(|(j, _)| n == *j)) {
            found.push(p);
        }
    }
    Ok(())
}

fn run_report(config: RunConfig, a: ReportArgs) -> Result<(), CliError> {
    let inputs = if a.input.is_empty() { vec![config.output_dir.clone()] } else { a.input };
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    check_exists(&refs)?;
    let mut found = Vec::new();
    for d in &inputs {
        find_reports(d, &mut found)?;
    }
    let summary_path = config.output_dir.join("summary.json");
    found.retain(|p| p != &summary_path);

    let mut json = serde_json::Map::new();
    let mut md = String::from("# sdoh-eventkit summary\n");
    for p in &found {
        let s = fs::read_to_string(p).map_err(|source| CliError::Io { path: p.clone(), source })?;
        let v: serde_json::Value = serde_json::from_str(&s).map_err(|source| CliError::Json { path: p.clone(), source })?;
        let key = p.display().to_string();
        md.push_str(&format!("\n## {key}\n\n"));
        let name = p.file_name().unwrap_or_default().to_string_lossy();
        let text = REPORTS.iter().find(|(j, _)| *j == name).and_then(|(_, t)| *t).map(|t| p.with_file_name(t));
        match text.filter(|t| t.exists()) {
            Some(t) => {
                let body = fs::read_to_string(&t).map_err(|source| CliError::Io { path: t.clone(), source })?;
                md.push_str(&format!("```\n{}```\n", body));
            }
            None => md.push_str(&format!("```json\n{}\n```\n", serde_json::to_string_pretty(&v).unwrap_or_default())),
        }
        json.insert(key, v);
    }
    create_dir(&config.output_dir)?;
    write_json(&summary_path, &json)?;
    write_file(&config.output_dir.join("summary.md"), md)?;
    println!("bundled {} reports", found.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let mut c = ModelConfig::default();
        let f = ModelFlags { epochs: Some(3), encoder: Some(EncoderFlag::File), ..Default::default() };
        f.apply(&mut c);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.encoder, EncoderKind::File);
        assert_eq!(c.hidden_dim, ModelConfig::default().hidden_dim);
    }

    #[test]
    fn run_config_round_trip() {
        let c = RunConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
        let partial: RunConfig = serde_json::from_str(r#"{"year": 2020, "model": {"epochs": 5}}"#).unwrap();
        assert_eq!((partial.year, partial.model.epochs), (2020, 5));
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn predict_without_checkpoint_is_usage_error() {
        let cli = parse(["sdoh-eventkit", "predict", "--corpus", "x"]).unwrap();
        let err = run(cli).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_flag_is_rejected() {
        let err = parse(["sdoh-eventkit", "score", "--bogus"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
