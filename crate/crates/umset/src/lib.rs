//! Experiment tooling around [`umset_core`]: dataset ingestion, JSON
//! experiment configs, the multi-seed runner with JSONL/CSV export,
//! generated-dataset manifests, and brute-force verification suites.

pub mod config;
pub mod experiment;
pub mod export;
pub mod ingest;
pub mod manifest;
pub mod verify;
