//! Per-stage seeds derived from the single global `--seed`.

use semeq_core::seed::{derive_seed, fnv1a64};

/// Seed of the generated Gaussian mixture.
pub fn data(global: u64) -> u64 {
    derive_seed(global, "gen-data", 0)
}

/// Encoder seed of the agent named `id`.
pub fn agent(global: u64, id: &str) -> u64 {
    derive_seed(global, "agent", fnv1a64(id.as_bytes()))
}

/// Seed of an anchor support built by the `anchors` command.
pub fn support(global: u64) -> u64 {
    derive_seed(global, "anchors", 0)
}

/// Initial-point seed of the inverse in the `equalize` command and in
/// `evaluate` with stored anchors.
pub fn inverse(global: u64) -> u64 {
    derive_seed(global, "inverse", 0)
}

/// Cell seed of replicate `r` of a sweep.
pub fn replicate(global: u64, r: u64) -> u64 {
    derive_seed(global, "replicate", r)
}
