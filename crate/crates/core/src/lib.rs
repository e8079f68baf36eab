//! Detection and analysis of Solana wallet-drainer phishing transactions.
//!
//! The pipeline: `ingest` acquires and normalizes transactions into the
//! `txmodel` representation, `rules` flags the three phishing families,
//! `analysis` aggregates detections into reports, and `synth` generates
//! labeled corpora for testing the whole chain end to end.

pub mod analysis;
pub mod ingest;
pub mod rules;
pub mod synth;
pub mod txmodel;

#[cfg(test)]
pub(crate) mod testutil;

pub use txmodel::{Address, Asset, Transaction};
