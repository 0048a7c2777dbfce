//! Transfer of extractive question-answering datasets across languages by
//! sentence-level machine translation and embedding-based answer alignment.

pub mod align;
pub mod analytics;
pub mod artifact;
pub mod cache;
pub mod compose;
pub mod dataset;
pub mod embed;
pub mod exec;
#[cfg(feature = "http")]
mod httpc;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub mod text;
pub mod translate;
