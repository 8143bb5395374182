//! Distributional reinforcement learning with distribution-entropy regularization.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over immutable inputs plus explicitly passed, seeded
//! generators; file formats, configuration and the CLI live in the `derl`
//! companion crate.
//!
//! Module map:
//!
//! - [`dist`]: categorical and quantile value distributions, divergences,
//!   the categorical projection and the expectation/remainder decomposition.
//! - [`mdp`]: finite MDPs and the toy environments used throughout.
//! - [`ops`]: exact tabular dynamic programming, including the
//!   distribution-entropy-regularized Bellman operator and DERPI.
//! - [`nn`]: a small MLP with reverse-mode gradients and Adam.
//! - [`agents`]: fitted Q/Z iteration, DERAC and the actor-critic ablation family.
//! - [`verify`]: executable certificates for the regularization results.
#![no_std]

extern crate alloc;

pub mod agents;
pub mod dist;
mod error;
pub(crate) mod math;
pub mod mdp;
pub mod nn;
pub mod ops;
pub mod verify;

pub use error::{Error, Result};

/// Seeded generator used by every stochastic routine in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
