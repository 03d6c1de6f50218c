//! Location-aware dense retrieval for point-of-interest recommendation
//! questions.
//!
//! The crate implements a bi-encoder that embeds questions and POIs into a
//! shared vector space, with a dedicated location module on the POI side so
//! that geographic proximity shapes the learned representations. Around the
//! model sit the pieces needed to run it end to end: deterministic synthetic
//! corpora, geographic pretraining, contrastive training with tiered
//! negatives, a persisted embedding index with exact top-k search, ranking
//! metrics, and classical baselines.
//!
//! Everything is seeded: the same seed and config produce byte-identical
//! checkpoints, indexes, and reports.

pub mod baselines;
pub mod contrastive;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod geo;
pub mod geo_pretrain;
pub mod index;
pub mod nn;

pub use error::{Error, Result};
