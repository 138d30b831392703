//! Event-based extraction of social determinants of health (SDOH) from
//! clinical social-history text.
//!
//! The crate covers the whole pipeline:
//!
//! - [`schema`]: event types, arguments, label inventories and validation.
//! - [`corpus_io`]: standoff annotation files, section extraction,
//!   tokenization and synthetic corpora.
//! - [`model`]: a span-based joint entity / subtype / relation classifier
//!   with hand-written backpropagation and portable checkpoints.
//! - [`assembly`]: decoding head outputs into events.
//! - [`scorer`]: slot-filling evaluation with micro-averaged and per-label
//!   reports.
//! - [`notelevel`]: note-level labels and their classification metrics.
//! - [`casestudy`]: patient-level comparison of structured records against
//!   extracted events.
//! - [`cli`]: the `sdoh-eventkit` command line.

pub mod assembly;
pub mod casestudy;
pub mod cli;
pub mod corpus_io;
pub mod model;
pub mod notelevel;
pub mod schema;
pub mod scorer;

pub use schema::{
    Argument, AnnotationSet, Event, EventType, LabelInventory, LabeledArgType, Span,
    SpanOnlyArgType, SubtypeLabel, Trigger,
};

/// Version of the toolkit.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
