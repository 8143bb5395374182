//! Learning agents on sampled transitions.
//!
//! Value-based agents fit a network to bootstrapped targets from a frozen
//! copy: Neural FQI regresses scalar action values, Neural FZI fits
//! categorical return distributions (plain, decomposed or mixed cross
//! entropy) or quantile functions (quantile Huber regression). The
//! actor-critic family pairs a softmax policy with a scalar, categorical
//! (DERAC) or quantile critic.
//!
//! States are fed to networks one-hot encoded.

mod actor_critic;
mod categorical;
mod config;
mod quantile;
mod replay;
mod run;
mod scalar;

pub use actor_critic::{
    ac_critic_loss, ac_critic_update, actor_loss, derac_actor_step, derac_critic_loss, derac_critic_terms, derac_critic_update,
    policy_probs, CriticTerms,
};
pub use categorical::{
    categorical_dists, categorical_means, decomposed_ce_loss, fzi_categorical_loss, fzi_categorical_target,
    fzi_categorical_update, FziMode,
};
pub use config::AgentConfig;
pub use quantile::{
    fractions_from_draws, quantile_critic_loss, quantile_critic_update, quantile_huber_grad, quantile_huber_loss,
    quantile_means, sample_quantile_fractions, tau_embedding, QuantileTarget,
};
pub use replay::{replay_and_sync, ReplayBuffer, TargetNetworkPair};
pub use run::{ac_variant_run, run_agent, AcVariant, EpisodeRecord, EvalPoint, RunRecord, RunSchedule, Variant};
pub use scalar::{fqi_loss, fqi_update};

use alloc::vec::Vec;

/// Gradient-carrying loss value.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// Gradient with respect to the network's flat parameters.
    pub grads: Vec<f64>,
    /// Samples whose exact decomposition was clipped.
    pub clipped: usize,
}

/// One-hot encoding of `state` among `n` states.
pub fn one_hot(state: usize, n: usize) -> Vec<f64> {
    let mut v = alloc::vec![0.0; n];
    v[state] = 1.0;
    v
}
