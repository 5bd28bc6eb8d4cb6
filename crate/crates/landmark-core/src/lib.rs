//! Collective landmark mapping from per-user recordings in unknown coordinate frames.
//!
//! Recordings arrive as trajectories plus timestamped text annotations, each in its
//! own private frame. The pipeline derives one observation per annotation
//! ([`trajectory`], [`identify`]), scores observation relatedness from labels
//! ([`relatedness`]), solves for per-recording rigid transforms that pull related
//! observations together ([`align`]), aggregates them into a semantic landmark map
//! ([`aggregate`]), and scores maps against ground truth ([`evaluate`]). The
//! [`simulate`] module synthesizes whole experiments end to end.

pub mod aggregate;
pub mod align;
pub mod error;
pub mod evaluate;
pub mod formats;
pub mod identify;
pub mod model;
pub mod pipeline;
pub mod relatedness;
pub mod render;
pub mod seeding;
pub mod simulate;
pub mod trajectory;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
