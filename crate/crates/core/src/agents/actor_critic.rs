//! Actor-critic pieces: the scalar critic of the AC baseline, the DERAC
//! categorical critic and the exact-expectation softmax actor.

use alloc::vec::Vec;

use super::categorical::{group_backward, mixed_target, weighted_ce};
use super::{one_hot, AgentConfig, LossGrad};
use crate::dist;
use crate::math;
use crate::mdp::Transition;
use crate::nn::{Adam, Network};
use crate::ops::MuSource;
use crate::{Error, Result};

/// `pi(.|state)` from a softmax policy network.
pub fn policy_probs(policy: &Network, state: usize) -> Result<Vec<f64>> {
    policy.predict(&one_hot(state, policy.input_size()))
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * math::ln(p)
    } else {
        0.0
    }
}

/// Squared TD error of a scalar critic against
/// `y = r + gamma * sum_a' pi(a'|s') (Q*(s', a') - beta ln pi(a'|s'))`.
pub fn ac_critic_loss(
    net: &Network,
    target: &Network,
    policy: &Network,
    batch: &[Transition],
    gamma: f64,
    beta: f64,
) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("batch must be nonempty"));
    }
    let ns = net.input_size();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = alloc::vec![0.0; net.n_params()];
    let mut loss = 0.0;
    for t in batch {
        let y = if t.done {
            t.reward
        } else {
            let pi = policy_probs(policy, t.next_state)?;
            let q = target.predict(&one_hot(t.next_state, ns))?;
            let v: f64 = pi.iter().zip(&q).map(|(p, q)| p * q).sum::<f64>() - beta * pi.iter().map(|&p| xlogx(p)).sum::<f64>();
            t.reward + gamma * v
        };
        let cache = net.forward(&one_hot(t.state, ns))?;
        let diff = cache.output()[t.action] - y;
        loss += diff * diff;
        let mut g = alloc::vec![0.0; net.output_size()];
        g[t.action] = 2.0 * diff * scale;
        net.backward(&cache, &g, &mut grads)?;
    }
    Ok(LossGrad { loss: loss * scale, grads, clipped: 0 })
}

pub fn ac_critic_update(
    net: &mut Network,
    opt: &mut Adam,
    target: &Network,
    policy: &Network,
    batch: &[Transition],
    config: &AgentConfig,
    beta: f64,
) -> Result<f64> {
    let lg = ac_critic_loss(net, target, policy, batch, config.gamma, beta)?;
    opt.step(net.params_mut(), &lg.grads)?;
    Ok(lg.loss)
}

/// The two DERAC critic terms with their separate parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticTerms {
    /// Mean squared TD error of expectations.
    pub td: f64,
    /// Mean cross entropy from the remainder stand-in to the prediction.
    pub ce: f64,
    pub td_grads: Vec<f64>,
    pub ce_grads: Vec<f64>,
    pub clipped: usize,
}

/// Computes both DERAC critic terms over `batch`:
///
/// - `td`: `(r + gamma * sum_a' pi(a'|s') E[q*(s', a')] - E[q(s, a)])^2`;
/// - `ce`: `H(mu, q(s, a))`, with `mu` the exact remainder of the
///   policy-mixed projected target (or that whole target, per
///   `config.mu_source`).
pub fn derac_critic_terms(
    net: &Network,
    target: &Network,
    policy: &Network,
    batch: &[Transition],
    grid: &[f64],
    config: &AgentConfig,
) -> Result<CriticTerms> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("batch must be nonempty"));
    }
    let n = grid.len();
    if net.softmax_group() != Some(n) {
        return Err(Error::ShapeMismatch { expected: n, found: net.softmax_group().unwrap_or(0) });
    }
    let ns = net.input_size();
    let scale = 1.0 / batch.len() as f64;
    let mut terms = CriticTerms {
        td: 0.0,
        ce: 0.0,
        td_grads: alloc::vec![0.0; net.n_params()],
        ce_grads: alloc::vec![0.0; net.n_params()],
        clipped: 0,
    };
    for t in batch {
        let pi = if t.done { Vec::new() } else { policy_probs(policy, t.next_state)? };
        let y = if t.done {
            t.reward
        } else {
            let next = target.predict(&one_hot(t.next_state, ns))?;
            let v: f64 = next
                .chunks(n)
                .zip(&pi)
                .map(|(probs, p)| p * probs.iter().zip(grid).map(|(q, z)| q * z).sum::<f64>())
                .sum();
            t.reward + config.gamma * v
        };
        let p = mixed_target(target, t, grid, config.gamma, &pi)?;
        let mu = match config.mu_source {
            MuSource::WholeTarget => p,
            MuSource::Decomposed => {
                let d = dist::decompose_exact(&p, config.epsilon())?;
                terms.clipped += usize::from(d.clipped);
                d.mu
            }
        };

        let cache = net.forward(&one_hot(t.state, ns))?;
        let q = &cache.output()[t.action * n..(t.action + 1) * n];
        let mean: f64 = q.iter().zip(grid).map(|(q, z)| q * z).sum();
        let diff = mean - y;
        terms.td += diff * diff;
        let mut g = alloc::vec![0.0; net.output_size()];
        for (slot, z) in g[t.action * n..(t.action + 1) * n].iter_mut().zip(grid) {
            *slot = 2.0 * diff * z * scale;
        }
        net.backward(&cache, &g, &mut terms.td_grads)?;

        let logits = &cache.logits()[t.action * n..(t.action + 1) * n];
        let (ce, g) = weighted_ce(logits, mu.probs());
        terms.ce += ce;
        group_backward(net, &cache, t.action, n, &g, scale, &mut terms.ce_grads)?;
    }
    terms.td *= scale;
    terms.ce *= scale;
    Ok(terms)
}

/// `(1 - lambda) * td + lambda * ce` and its gradient.
pub fn derac_critic_loss(
    net: &Network,
    target: &Network,
    policy: &Network,
    batch: &[Transition],
    grid: &[f64],
    config: &AgentConfig,
) -> Result<LossGrad> {
    let terms = derac_critic_terms(net, target, policy, batch, grid, config)?;
    let l = config.lambda;
    let grads = terms
        .td_grads
        .iter()
        .zip(&terms.ce_grads)
        .map(|(a, b)| (1.0 - l) * a + l * b)
        .collect();
    Ok(LossGrad { loss: (1.0 - l) * terms.td + l * terms.ce, grads, clipped: terms.clipped })
}

/// One optimizer step on [`derac_critic_loss`]; returns the pre-step loss
/// and the clipped-decomposition count.
pub fn derac_critic_update(
    net: &mut Network,
    opt: &mut Adam,
    target: &Network,
    policy: &Network,
    batch: &[Transition],
    grid: &[f64],
    config: &AgentConfig,
) -> Result<(f64, usize)> {
    let lg = derac_critic_loss(net, target, policy, batch, grid, config)?;
    opt.step(net.params_mut(), &lg.grads)?;
    Ok((lg.loss, lg.clipped))
}

/// Negative actor objective `-mean_s [sum_a pi(a|s) q(s, a) + beta H(pi(.|s))]`
/// with its gradient; `q_values[k]` holds the critic's expected returns for
/// `states[k]`.
pub fn actor_loss(policy: &Network, states: &[usize], q_values: &[Vec<f64>], beta: f64) -> Result<LossGrad> {
    if states.is_empty() || states.len() != q_values.len() {
        return Err(Error::ShapeMismatch { expected: states.len().max(1), found: q_values.len() });
    }
    let scale = 1.0 / states.len() as f64;
    let mut grads = alloc::vec![0.0; policy.n_params()];
    let mut objective = 0.0;
    for (&s, q) in states.iter().zip(q_values) {
        let cache = policy.forward(&one_hot(s, policy.input_size()))?;
        let pi = cache.output();
        if q.len() != pi.len() {
            return Err(Error::ShapeMismatch { expected: pi.len(), found: q.len() });
        }
        // Per-action soft value q_a - beta ln pi_a; dJ/dlogit_a = pi_a (v_a - J).
        let soft: Vec<f64> = pi
            .iter()
            .zip(q)
            .map(|(&p, &qa)| if p > 0.0 { qa - beta * math::ln(p) } else { qa })
            .collect();
        let j: f64 = pi.iter().zip(&q[..]).map(|(p, q)| p * q).sum::<f64>() - beta * pi.iter().map(|&p| xlogx(p)).sum::<f64>();
        objective += j;
        let g: Vec<f64> = pi.iter().zip(&soft).map(|(p, v)| -p * (v - j) * scale).collect();
        policy.backward_logits(&cache, &g, &mut grads)?;
    }
    Ok(LossGrad { loss: -objective * scale, grads, clipped: 0 })
}

/// One ascent step on the actor objective; the critic only enters through
/// `q_values`. Returns the objective before the step.
pub fn derac_actor_step(
    policy: &mut Network,
    opt: &mut Adam,
    states: &[usize],
    q_values: &[Vec<f64>],
    beta: f64,
) -> Result<f64> {
    let lg = actor_loss(policy, states, q_values, beta)?;
    opt.step(policy.params_mut(), &lg.grads)?;
    Ok(-lg.loss)
}
