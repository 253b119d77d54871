//! Experiment harness for two-player game dynamics: run configurations,
//! training/analysis pipelines and deterministic data-file emitters.

pub mod config;
pub mod output;
pub mod pipeline;
