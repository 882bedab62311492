//! Domain-adversarial training with phonetic features.
//!
//! The crate implements single-label and multi-label domain-adversarial
//! networks (DANNs), an FBANK acoustic frontend, SPE phonetic-feature
//! targets, and the two-stage adaptation pipeline that trains a
//! multi-label DANN on phonetic targets, appends its probability scores
//! to the acoustic features, and trains a phoneme classifier on top —
//! all verifiable on synthetic domain-shift corpora.
//!
//! Everything is seed-deterministic: the same configuration and seed
//! reproduce results bit for bit.

pub mod archive;
pub mod bench;
pub mod config;
pub mod dann;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod losses;
pub mod matrix;
pub mod nn;
pub mod phonetics;
pub mod pipeline;
pub mod rcv;
pub mod report;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
