//! Author name normalization toolkit.
//!
//! The crate is organized around the stages of the normalization pipeline:
//! record formats ([`record`]), string normalization and classical metrics
//! ([`textnorm`]), ISBN handling ([`isbn`]), bibliographic source lookup
//! ([`sources`]), entity dataset construction ([`dataset`]), the neural
//! substrate ([`neural`]), the Siamese name matcher ([`siamese`]) backed by a
//! random-projection forest ([`ann`]), the seq2seq corrector ([`seq2seq`]),
//! the logistic-regression ranker ([`ranker`]), and end-to-end orchestration
//! ([`pipeline`]).

pub mod ann;
pub mod dataset;
pub mod isbn;
pub mod neural;
pub mod pipeline;
pub mod ranker;
pub mod record;
pub mod seed;
pub mod seq2seq;
pub mod siamese;
pub mod sources;
pub mod textnorm;

pub use record::{AnnotatedBook, BookRecord, NameEntity, Proposal};
pub use textnorm::NormalizedName;
