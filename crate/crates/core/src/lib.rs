//! Text-to-video quality assessment workbench.
//!
//! Subjective-score normalization ([`study`]), prompt curation ([`prompts`]),
//! the alignment + fidelity quality network ([`model`]), its training losses
//! and loop ([`training`]), and the correlation-based evaluation protocol
//! ([`eval`]). All records live in a JSON-lines [`data::DatasetManifest`].

pub mod data;
mod hash;
pub mod model;
pub mod prompts;
pub mod selftest;
pub mod study;
pub mod synth;
pub mod eval;
pub mod training;
