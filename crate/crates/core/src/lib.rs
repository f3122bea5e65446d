//! Semantic channel equalization between independently trained encoder/decoder
//! agents.
//!
//! A transmitter projects its latent vectors onto a set of shared anchors
//! ([`relative`]), the receiver pseudo-inverts that projection in its own latent
//! space ([`inverse`]) and hands the result to its decoder. Anchors are either
//! drawn at random or built as cluster prototypes ([`anchors`]). The [`agents`]
//! module provides the synthetic encoders and decoders used to exercise the
//! pipeline and [`eval`] measures how well it works.

pub mod agents;
pub mod anchors;
pub mod error;
pub mod eval;
pub mod inverse;
pub mod numerics;
pub mod relative;
pub mod seed;

pub use error::{Error, Result};
pub use numerics::RealMatrix;
