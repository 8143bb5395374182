//! Online training loops with periodic greedy evaluation.

use alloc::vec::Vec;

use rand::Rng as _;

use super::categorical::{categorical_means, fzi_categorical_update, FziMode};
use super::quantile::{quantile_critic_update, quantile_means, QuantileTarget};
use super::replay::{replay_and_sync, ReplayBuffer, TargetNetworkPair};
use super::{actor_critic, one_hot, scalar, AgentConfig};
use crate::math;
use crate::mdp::{sample_transition, TabularMdp, Transition};
use crate::nn::{Activation, Adam, Network};
use crate::{Error, Result};

/// Every agent the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Neural FQI.
    Fqi,
    /// Categorical FZI with cross entropy.
    FziCe,
    /// Categorical FZI with the decomposed loss at `epsilon`.
    FziDecomposed,
    /// Categorical FZI against the target mixed with its expectation bin at `mix_epsilon`.
    FziMix,
    /// Quantile FZI.
    FziQuantile,
    /// Actor with the distribution-entropy-regularized categorical critic.
    Derac,
    Ac,
    AcVe,
    AcRe,
    AcReVe,
}

/// The actor-critic ablation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcVariant {
    Ac,
    AcVe,
    AcRe,
    AcReVe,
}

impl From<AcVariant> for Variant {
    fn from(v: AcVariant) -> Self {
        match v {
            AcVariant::Ac => Variant::Ac,
            AcVariant::AcVe => Variant::AcVe,
            AcVariant::AcRe => Variant::AcRe,
            AcVariant::AcReVe => Variant::AcReVe,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CriticKind {
    Scalar,
    Categorical,
    Quantile,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Fqi,
        Variant::FziCe,
        Variant::FziDecomposed,
        Variant::FziMix,
        Variant::FziQuantile,
        Variant::Derac,
        Variant::Ac,
        Variant::AcVe,
        Variant::AcRe,
        Variant::AcReVe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fqi => "fqi",
            Variant::FziCe => "fzi-ce",
            Variant::FziDecomposed => "fzi-decomposed",
            Variant::FziMix => "fzi-mix",
            Variant::FziQuantile => "fzi-quantile",
            Variant::Derac => "derac",
            Variant::Ac => "ac",
            Variant::AcVe => "ac+ve",
            Variant::AcRe => "ac+re",
            Variant::AcReVe => "ac+re+ve",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    pub fn is_actor_critic(self) -> bool {
        matches!(self, Variant::Derac | Variant::Ac | Variant::AcVe | Variant::AcRe | Variant::AcReVe)
    }

    fn critic(self) -> CriticKind {
        match self {
            Variant::Fqi | Variant::Ac | Variant::AcVe => CriticKind::Scalar,
            Variant::FziCe | Variant::FziDecomposed | Variant::FziMix | Variant::Derac => CriticKind::Categorical,
            Variant::FziQuantile | Variant::AcRe | Variant::AcReVe => CriticKind::Quantile,
        }
    }

    fn vanilla_entropy(self) -> bool {
        matches!(self, Variant::AcVe | Variant::AcReVe)
    }

    /// Component summary: critic representation, critic loss, policy and
    /// entropy bonus.
    pub fn components(self) -> [(&'static str, &'static str); 4] {
        let critic = match self.critic() {
            CriticKind::Scalar => "scalar",
            CriticKind::Categorical => "categorical",
            CriticKind::Quantile => "quantile",
        };
        let loss = match self {
            Variant::Fqi | Variant::Ac | Variant::AcVe => "squared-td",
            Variant::FziCe => "cross-entropy",
            Variant::FziDecomposed => "decomposed-cross-entropy",
            Variant::FziMix => "mixed-cross-entropy",
            Variant::FziQuantile | Variant::AcRe | Variant::AcReVe => "quantile-huber",
            Variant::Derac => "derac",
        };
        let policy = if self.is_actor_critic() { "softmax-actor" } else { "epsilon-greedy" };
        let entropy = if self.vanilla_entropy() { "beta" } else { "none" };
        [("critic", critic), ("critic_loss", loss), ("policy", policy), ("vanilla_entropy", entropy)]
    }
}

/// Step budget and evaluation cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSchedule {
    pub total_steps: usize,
    /// Evaluate every this many environment steps.
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for RunSchedule {
    fn default() -> Self {
        Self { total_steps: 10_000, eval_every: 500, eval_episodes: 10 }
    }
}

/// Greedy-policy evaluation at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub return_mean: f64,
    pub return_std: f64,
}

/// A completed training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Environment step at which the episode ended.
    pub step: usize,
    pub episode: usize,
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub evals: Vec<EvalPoint>,
    pub episodes: Vec<EpisodeRecord>,
    /// Greedy action per state at the end of training.
    pub greedy_policy: Vec<usize>,
    /// Clipped exact decompositions (fallbacks to plain cross entropy).
    pub clipped: usize,
    pub syncs: usize,
    pub updates: usize,
}

impl RunRecord {
    /// Trapezoid-free area under the evaluation curve: the mean of the
    /// evaluation returns (0 for an empty curve).
    pub fn auc(&self) -> f64 {
        if self.evals.is_empty() {
            0.0
        } else {
            self.evals.iter().map(|e| e.return_mean).sum::<f64>() / self.evals.len() as f64
        }
    }
}

struct Agent<'a> {
    variant: Variant,
    config: &'a AgentConfig,
    grid: Vec<f64>,
    critic: TargetNetworkPair,
    critic_opt: Adam,
    actor: Option<(Network, Adam)>,
    clipped: usize,
    updates: usize,
}

impl<'a> Agent<'a> {
    fn new(env: &TabularMdp, variant: Variant, config: &'a AgentConfig, rng: &mut crate::Rng) -> Result<Self> {
        let (ns, na) = (env.n_states(), env.n_actions());
        let grid = config.grid_for(env);
        let h = &config.hidden;
        let critic = match variant.critic() {
            CriticKind::Scalar => Network::mlp(ns, h, na, Activation::Tanh, None, rng)?,
            CriticKind::Categorical => Network::mlp(ns, h, na * grid.len(), Activation::Tanh, Some(grid.len()), rng)?,
            CriticKind::Quantile => Network::mlp(ns + config.quantile_embedding, h, na, Activation::Tanh, None, rng)?,
        };
        let actor = if variant.is_actor_critic() {
            let net = Network::mlp(ns, h, na, Activation::Tanh, Some(na), rng)?;
            let opt = Adam::new(net.n_params(), config.actor_lr);
            Some((net, opt))
        } else {
            None
        };
        let critic_opt = Adam::new(critic.n_params(), config.critic_lr);
        Ok(Self {
            variant,
            config,
            grid,
            critic: TargetNetworkPair::new(critic, config.target_period, config.polyak_tau),
            critic_opt,
            actor,
            clipped: 0,
            updates: 0,
        })
    }

    fn action_values(&self, state: usize) -> Result<Vec<f64>> {
        let net = &self.critic.online;
        match self.variant.critic() {
            CriticKind::Scalar => net.predict(&one_hot(state, net.input_size())),
            CriticKind::Categorical => categorical_means(net, state, &self.grid),
            CriticKind::Quantile => quantile_means(net, state, self.config.quantiles, self.config.quantile_embedding),
        }
    }

    fn greedy(&self, state: usize) -> Result<usize> {
        match &self.actor {
            Some((actor, _)) => Ok(math::argmax(&actor_critic::policy_probs(actor, state)?)),
            None => Ok(math::argmax(&self.action_values(state)?)),
        }
    }

    fn act(&self, state: usize, n_actions: usize, rng: &mut crate::Rng) -> Result<usize> {
        match &self.actor {
            Some((actor, _)) => {
                let pi = actor_critic::policy_probs(actor, state)?;
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (a, p) in pi.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(a);
                    }
                }
                Ok(n_actions - 1)
            }
            None => {
                if rng.gen::<f64>() < self.config.explore {
                    Ok(rng.gen_range(0..n_actions))
                } else {
                    self.greedy(state)
                }
            }
        }
    }

    fn beta(&self) -> f64 {
        if self.variant.vanilla_entropy() {
            self.config.beta
        } else {
            0.0
        }
    }

    fn update(&mut self, batch: &[Transition], rng: &mut crate::Rng) -> Result<()> {
        let cfg = self.config;
        let beta = self.beta();
        let pair = &mut self.critic;
        let opt = &mut self.critic_opt;
        match self.variant {
            Variant::Fqi => {
                scalar::fqi_update(&mut pair.online, opt, &pair.target, batch, cfg)?;
            }
            Variant::FziCe | Variant::FziDecomposed | Variant::FziMix => {
                let mode = match self.variant {
                    Variant::FziCe => FziMode::VanillaCe,
                    Variant::FziDecomposed => FziMode::Decomposed(cfg.epsilon()),
                    _ => FziMode::AblationMix(cfg.mix_epsilon),
                };
                let (_, clipped) =
                    fzi_categorical_update(&mut pair.online, opt, &pair.target, batch, &self.grid, cfg, mode)?;
                self.clipped += clipped;
            }
            Variant::FziQuantile => {
                quantile_critic_update(&mut pair.online, opt, &pair.target, batch, cfg, QuantileTarget::Greedy, rng)?;
            }
            Variant::Derac | Variant::Ac | Variant::AcVe | Variant::AcRe | Variant::AcReVe => {
                let (actor, actor_opt) = self.actor.as_mut().expect("actor-critic variant has an actor");
                match self.variant.critic() {
                    CriticKind::Scalar => {
                        actor_critic::ac_critic_update(&mut pair.online, opt, &pair.target, actor, batch, cfg, beta)?;
                    }
                    CriticKind::Categorical => {
                        let (_, clipped) = actor_critic::derac_critic_update(
                            &mut pair.online,
                            opt,
                            &pair.target,
                            actor,
                            batch,
                            &self.grid,
                            cfg,
                        )?;
                        self.clipped += clipped;
                    }
                    CriticKind::Quantile => {
                        let kind = QuantileTarget::Policy { policy: actor, beta };
                        quantile_critic_update(&mut pair.online, opt, &pair.target, batch, cfg, kind, rng)?;
                    }
                }
                let states: Vec<usize> = batch.iter().map(|t| t.state).collect();
                let net = &pair.online;
                let q: Vec<Vec<f64>> = states
                    .iter()
                    .map(|&s| match self.variant.critic() {
                        CriticKind::Scalar => net.predict(&one_hot(s, net.input_size())),
                        CriticKind::Categorical => categorical_means(net, s, &self.grid),
                        CriticKind::Quantile => quantile_means(net, s, cfg.quantiles, cfg.quantile_embedding),
                    })
                    .collect::<Result<_>>()?;
                actor_critic::derac_actor_step(actor, actor_opt, &states, &q, beta)?;
            }
        }
        self.updates += 1;
        Ok(())
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, math::sqrt(var))
}

fn evaluate(env: &TabularMdp, agent: &Agent<'_>, episodes: usize, max_len: usize, seed: u64) -> Result<(f64, f64)> {
    let policy: Vec<usize> = (0..env.n_states()).map(|s| agent.greedy(s)).collect::<Result<_>>()?;
    let mut rng = crate::seeded_rng(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.start();
        let mut total = 0.0;
        for _ in 0..max_len {
            let (r, next, done) = sample_transition(env, s, policy[s], &mut rng)?;
            total += r;
            if done {
                break;
            }
            s = next;
        }
        returns.push(total);
    }
    Ok(mean_std(&returns))
}

/// Trains `variant` on `env` for the scheduled number of steps and returns
/// its learning curve. Bit-reproducible from `(config, schedule, seed)`.
pub fn run_agent(
    env: &TabularMdp,
    variant: Variant,
    config: &AgentConfig,
    schedule: &RunSchedule,
    seed: u64,
) -> Result<RunRecord> {
    config.validate()?;
    if schedule.eval_every == 0 || schedule.eval_episodes == 0 {
        return Err(Error::InvalidConfig("evaluation cadence and episode count must be positive"));
    }
    let mut master = crate::seeded_rng(seed);
    let mut agent = Agent::new(env, variant, config, &mut master)?;
    let mut env_rng = crate::seeded_rng(master.gen());
    let mut act_rng = crate::seeded_rng(master.gen());
    let mut learn_rng = crate::seeded_rng(master.gen());
    let mut buffer = ReplayBuffer::new(config.replay_capacity, master.gen());
    let eval_seed: u64 = master.gen();

    let mut evals = Vec::new();
    let mut episodes = Vec::new();
    let mut state = env.start();
    let mut ep_return = 0.0;
    let mut ep_len = 0;
    for step in 1..=schedule.total_steps {
        let action = agent.act(state, env.n_actions(), &mut act_rng)?;
        let (reward, next_state, done) = sample_transition(env, state, action, &mut env_rng)?;
        let t = Transition { state, action, reward, next_state, done };
        ep_return += reward;
        ep_len += 1;
        if done || ep_len >= config.max_episode_len {
            episodes.push(EpisodeRecord { step, episode: episodes.len(), ret: ep_return });
            state = env.start();
            ep_return = 0.0;
            ep_len = 0;
        } else {
            state = next_state;
        }
        buffer.push(t);
        if step >= config.learning_starts && step % config.train_every == 0 {
            let batch = buffer.sample(config.batch_size);
            agent.update(&batch, &mut learn_rng)?;
        }
        replay_and_sync(&mut buffer, &mut agent.critic, step, None);
        if step % schedule.eval_every == 0 {
            let (return_mean, return_std) = evaluate(
                env,
                &agent,
                schedule.eval_episodes,
                config.max_episode_len,
                eval_seed.wrapping_add(step as u64),
            )?;
            evals.push(EvalPoint { step, return_mean, return_std });
        }
    }
    let greedy_policy = (0..env.n_states()).map(|s| agent.greedy(s)).collect::<Result<_>>()?;
    Ok(RunRecord {
        variant,
        seed,
        evals,
        episodes,
        greedy_policy,
        clipped: agent.clipped,
        syncs: agent.critic.syncs(),
        updates: agent.updates,
    })
}

/// One member of the actor-critic ablation family; see [`run_agent`].
pub fn ac_variant_run(
    env: &TabularMdp,
    variant: AcVariant,
    config: &AgentConfig,
    schedule: &RunSchedule,
    seed: u64,
) -> Result<RunRecord> {
    run_agent(env, variant.into(), config, schedule, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp;

    fn quick() -> (AgentConfig, RunSchedule) {
        let mut cfg = AgentConfig::default();
        cfg.batch_size = 8;
        cfg.learning_starts = 10;
        cfg.hidden = alloc::vec![8];
        cfg.quantiles = 4;
        cfg.quantile_embedding = 4;
        cfg.atoms = 11;
        (cfg, RunSchedule { total_steps: 60, eval_every: 20, eval_episodes: 2 })
    }

    #[test]
    fn every_variant_runs_and_is_reproducible() {
        let env = mdp::make_risky_chain(4, 0.1, 0.5, 0.9).unwrap();
        let (cfg, schedule) = quick();
        for v in Variant::ALL {
            let a = run_agent(&env, v, &cfg, &schedule, 3).unwrap();
            let b = run_agent(&env, v, &cfg, &schedule, 3).unwrap();
            assert_eq!(a, b, "{}", v.name());
            assert_eq!(a.evals.len(), 3);
            assert_eq!(Variant::from_name(v.name()), Some(v));
        }
    }

    #[test]
    fn zero_steps_gives_empty_curve() {
        let env = mdp::make_chain(3, 0.0, 0.9).unwrap();
        let (cfg, mut schedule) = quick();
        schedule.total_steps = 0;
        let r = run_agent(&env, Variant::Fqi, &cfg, &schedule, 1).unwrap();
        assert!(r.evals.is_empty() && r.episodes.is_empty());
        assert_eq!(r.auc(), 0.0);
    }

    #[test]
    fn re_differs_from_ac_only_in_critic() {
        let diff: Vec<&str> = Variant::Ac
            .components()
            .iter()
            .zip(Variant::AcRe.components().iter())
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.0)
            .collect();
        assert_eq!(diff, alloc::vec!["critic", "critic_loss"]);
    }
}
