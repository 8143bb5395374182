use alloc::vec::Vec;

use crate::mdp::TabularMdp;
use crate::ops::MuSource;
use crate::{dist, Error, Result};

/// Learning hyperparameters shared by every agent.
///
/// `epsilon` (decomposition proportion) and `alpha = epsilon / (1 - epsilon)`
/// are private so they cannot drift apart; set them through
/// [`AgentConfig::set_epsilon`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    epsilon: f64,
    alpha: f64,
    /// Proportion kept from the target in the mixed-target ablation (`[0, 1]`).
    pub mix_epsilon: f64,
    /// Weight of the cross-entropy term in the DERAC critic.
    pub lambda: f64,
    /// Vanilla-entropy temperature.
    pub beta: f64,
    pub gamma: f64,
    pub atoms: usize,
    /// Categorical support; `None` derives it from the environment.
    pub support: Option<(f64, f64)>,
    pub quantiles: usize,
    pub quantile_embedding: usize,
    pub huber_kappa: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub batch_size: usize,
    /// Hard target sync period in environment steps.
    pub target_period: usize,
    /// Polyak rate; replaces hard syncs when set.
    pub polyak_tau: Option<f64>,
    pub replay_capacity: usize,
    pub learning_starts: usize,
    pub train_every: usize,
    pub hidden: Vec<usize>,
    /// Epsilon-greedy exploration rate of value-based agents.
    pub explore: f64,
    pub mu_source: MuSource,
    pub max_episode_len: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.9,
            alpha: 9.0,
            mix_epsilon: 1.0,
            lambda: 0.5,
            beta: 0.2,
            gamma: 0.99,
            atoms: 51,
            support: None,
            quantiles: 32,
            quantile_embedding: 64,
            huber_kappa: 1.0,
            critic_lr: 3e-4,
            actor_lr: 3e-4,
            batch_size: 256,
            target_period: 1000,
            polyak_tau: Some(5e-3),
            replay_capacity: 100_000,
            learning_starts: 10_000,
            train_every: 1,
            hidden: alloc::vec![64],
            explore: 0.1,
            mu_source: MuSource::Decomposed,
            max_episode_len: 200,
        }
    }
}

impl AgentConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Sets the decomposition proportion and `alpha = epsilon / (1 - epsilon)`.
    pub fn set_epsilon(&mut self, epsilon: f64) -> Result<()> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::EpsilonOutOfRange(epsilon));
        }
        self.epsilon = epsilon;
        self.alpha = epsilon / (1.0 - epsilon);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &'static str); 15] = [
            ((0.0..=1.0).contains(&self.mix_epsilon), "mix_epsilon must lie in [0, 1]"),
            (self.gamma > 0.0 && self.gamma < 1.0, "gamma must lie in (0, 1)"),
            ((0.0..=1.0).contains(&self.lambda), "lambda must lie in [0, 1]"),
            (self.beta >= 0.0, "beta must be nonnegative"),
            (self.atoms >= 2, "atoms must be at least 2"),
            (self.quantiles >= 1, "quantiles must be at least 1"),
            (self.huber_kappa > 0.0, "huber_kappa must be positive"),
            (self.critic_lr > 0.0 && self.actor_lr > 0.0, "learning rates must be positive"),
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (self.target_period >= 1, "target_period must be at least 1"),
            (self.polyak_tau.map_or(true, |t| t > 0.0 && t <= 1.0), "polyak_tau must lie in (0, 1]"),
            (self.replay_capacity >= 1, "replay_capacity must be at least 1"),
            (self.train_every >= 1, "train_every must be at least 1"),
            ((0.0..=1.0).contains(&self.explore), "explore must lie in [0, 1]"),
            (self.max_episode_len >= 1, "max_episode_len must be at least 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidConfig(msg));
            }
        }
        if let Some((lo, hi)) = self.support {
            if !(lo < hi) {
                return Err(Error::InvalidConfig("support must satisfy lo < hi"));
            }
        }
        Ok(())
    }

    /// Categorical grid: the configured support, or
    /// `[Rmin / (1 - gamma), Rmax / (1 - gamma)]` for `env`.
    pub fn grid_for(&self, env: &TabularMdp) -> Vec<f64> {
        let (lo, hi) = self.support.unwrap_or_else(|| {
            let (rmin, rmax) = env.reward_range();
            let (lo, hi) = (rmin / (1.0 - self.gamma), rmax / (1.0 - self.gamma));
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 1.0, hi + 1.0)
            }
        });
        dist::uniform_grid(lo, hi, self.atoms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_tracks_epsilon() {
        let mut c = AgentConfig::default();
        assert_eq!(c.alpha(), 9.0);
        c.set_epsilon(0.5).unwrap();
        assert_eq!(c.alpha(), 1.0);
        assert_eq!(c.set_epsilon(1.0), Err(Error::EpsilonOutOfRange(1.0)));
        assert_eq!(c.epsilon(), 0.5);
    }

    #[test]
    fn defaults_follow_hyperparameter_sheet() {
        let c = AgentConfig::default();
        assert_eq!((c.batch_size, c.gamma, c.atoms, c.quantiles, c.huber_kappa), (256, 0.99, 51, 32, 1.0));
        assert_eq!((c.critic_lr, c.actor_lr, c.polyak_tau, c.beta), (3e-4, 3e-4, Some(5e-3), 0.2));
        assert_eq!(c.learning_starts, 10_000);
        c.validate().unwrap();
    }

    #[test]
    fn grid_spans_return_bounds() {
        let env = crate::mdp::make_risky_chain(5, 0.0, 1.0, 0.9).unwrap();
        let mut c = AgentConfig::default();
        c.gamma = 0.5;
        c.atoms = 5;
        assert_eq!(c.grid_for(&env), alloc::vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
