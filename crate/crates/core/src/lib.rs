//! Privacy rewriting of labeled text corpora and crowd-label aggregation.
//!
//! The crate covers the whole path from a labeled binary-task corpus to an
//! F1 table:
//!
//! - [`corpus`]: data model, tokenization, ingestion, splitting, task lexicons.
//! - [`pii`]: gazetteer and pattern based PII redaction with placeholder tokens.
//! - [`codec`]: a latent bag-of-embeddings text codec with (ε, δ)-calibrated
//!   noise for differentially private rewriting.
//! - [`annotation`]: simulated crowdworkers and the HIT/annotation file round trip.
//! - [`aggregation`]: majority vote, threshold votes, MACE, and two-step combinators.
//! - [`evaluation`]: F1, paired bootstrap, indicator-word and copied-word statistics.
//! - [`experiment`]: the three rewriting pipelines and the configurable experiment runner.
//!
//! The `privlabel` binary exposes each stage as a subcommand.

pub mod aggregation;
pub mod annotation;
pub mod cli;
pub mod codec;
pub mod corpus;
mod error;
pub mod evaluation;
pub mod experiment;
pub mod pii;
pub mod seed;

pub use error::Error;

pub use corpus::{Corpus, DataPoint, Label};
