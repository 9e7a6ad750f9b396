//! Verification of social-media phishing claims against URL-reputation
//! services, and detection of security/privacy misinformation with a
//! feature-engineered random-forest pipeline.

pub mod annotate;
pub mod balance;
pub mod claims;
pub mod clock;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod jsonl;
pub mod lexicon;
pub mod mocknet;
pub mod model;
pub mod pipeline;
pub mod prevalence;
pub mod report;
pub mod reputation;
pub mod stats;
pub mod synth;
pub mod textfeat;

pub use error::{Error, Result};
