//! Bookmark–attribute relation classification for radiology report
//! sentences.
//!
//! The pipeline ingests bookmarked sentences ([`corpus`]), pairs every
//! target bookmark with every matched attribute mention, encodes each pair
//! ([`features`]), classifies it as relevant, uncertain or irrelevant with a
//! self-attention CNN ([`model`], built on [`autodiff`]) and optionally lets
//! cue rules ([`rules`]) override the prediction. [`harness`] trains and
//! evaluates; [`synth`] generates labelled corpora for testing.

pub mod autodiff;
pub mod error;

pub use error::{Error, Result};
pub mod corpus;
pub mod features;
pub mod harness;
pub mod model;
pub mod rules;
pub mod synth;
