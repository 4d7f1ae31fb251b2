//! Command-line pipeline around `qdose-core`: run configuration, the
//! trajectory file format, versioned JSON artifacts, per-stage manifests
//! with content hashes, and the stage runners behind the `qdose` binary.
//!
//! A run lives in one directory. Stages communicate only through files in
//! it, so any stage can be re-run on its own and produces byte-identical
//! outputs for the same configuration and inputs.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;

pub use cli::run_command;
pub use config::{RunConfig, SeedStream};
pub use error::{QdoseError, Result};
pub use manifest::{ArtifactRecord, RunManifest};
pub use pipeline::{run_stage, run_stage_with, Features, Stage, StageOptions};
