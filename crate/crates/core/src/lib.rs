//! Hierarchical blind search under computational cost constraints.
//!
//! A blind search tests a huge number of hypotheses (leaves of a layered
//! tree). Coarse layers carry cheap, smoothed statistics; a fitted
//! [`Strategy`](fit::Strategy) decides, from the value observed at a node,
//! whether to stop exploring that subtree or to jump to a deeper layer. The
//! strategy is fitted by approximate dynamic programming over Monte-Carlo
//! samples drawn along random root-to-leaf paths, so nothing proportional to
//! the tree size is ever held in memory.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, parallel drivers
//! and the command-line tool live in the `blindsearch` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod engine;
mod error;
pub mod fit;
pub mod isotonic;
pub mod models;
pub mod oracle;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};

/// Deterministic per-stream generator: every `(seed, stream)` pair yields an
/// independent ChaCha8 sequence, so work can be split across threads without
/// changing results.
pub fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
