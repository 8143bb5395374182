//! Categorical Neural FZI: a softmax head with one group of atom
//! probabilities per action, fitted to projected bootstrap targets.

use alloc::vec::Vec;

use super::{one_hot, AgentConfig, LossGrad};
use crate::dist::{self, CategoricalDist};
use crate::math;
use crate::mdp::Transition;
use crate::nn::{Adam, Cache, Network};
use crate::{Error, Result};

fn check_head(net: &Network, grid: &[f64]) -> Result<usize> {
    match net.softmax_group() {
        Some(g) if g == grid.len() => Ok(net.output_size() / g),
        _ => Err(Error::ShapeMismatch { expected: grid.len(), found: net.softmax_group().unwrap_or(0) }),
    }
}

/// Per-action return distributions predicted for `state`.
pub fn categorical_dists(net: &Network, state: usize, grid: &[f64]) -> Result<Vec<CategoricalDist>> {
    check_head(net, grid)?;
    let out = net.predict(&one_hot(state, net.input_size()))?;
    Ok(out
        .chunks(grid.len())
        .map(|p| CategoricalDist::from_parts(grid.to_vec(), p.to_vec()))
        .collect())
}

/// Per-action expected returns predicted for `state`.
pub fn categorical_means(net: &Network, state: usize, grid: &[f64]) -> Result<Vec<f64>> {
    check_head(net, grid)?;
    let out = net.predict(&one_hot(state, net.input_size()))?;
    Ok(out
        .chunks(grid.len())
        .map(|p| p.iter().zip(grid).map(|(p, z)| p * z).sum())
        .collect())
}

/// Projected target `r + gamma * Z*(s', a')` mixed over `a'` with `weights`
/// (`delta_r` projected on terminal transitions).
pub(crate) fn mixed_target(
    target: &Network,
    t: &Transition,
    grid: &[f64],
    gamma: f64,
    weights: &[f64],
) -> Result<CategoricalDist> {
    if t.done {
        return Ok(dist::project_weighted(core::iter::once((t.reward, 1.0)), grid));
    }
    let out = target.predict(&one_hot(t.next_state, target.input_size()))?;
    Ok(mix_output(&out, t.reward, grid, gamma, weights))
}

fn mix_output(out: &[f64], reward: f64, grid: &[f64], gamma: f64, weights: &[f64]) -> CategoricalDist {
    let items = out
        .chunks(grid.len())
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .flat_map(|(probs, &w)| grid.iter().zip(probs).map(move |(&z, &p)| (reward + gamma * z, w * p)));
    dist::project_weighted(items, grid)
}

/// Bootstrap target of categorical FZI: the distribution of the target
/// network's greedy-by-expectation action at `s'`, shifted by `r`, scaled
/// by `gamma` and projected onto `grid`.
pub fn fzi_categorical_target(target: &Network, t: &Transition, grid: &[f64], gamma: f64) -> Result<CategoricalDist> {
    let n_actions = check_head(target, grid)?;
    if t.done {
        return Ok(dist::project_weighted(core::iter::once((t.reward, 1.0)), grid));
    }
    let out = target.predict(&one_hot(t.next_state, target.input_size()))?;
    let means: Vec<f64> = out.chunks(grid.len()).map(|p| p.iter().zip(grid).map(|(p, z)| p * z).sum()).collect();
    let mut weights = alloc::vec![0.0; n_actions];
    weights[math::argmax(&means)] = 1.0;
    Ok(mix_output(&out, t.reward, grid, gamma, &weights))
}

/// `-ln q_m + alpha * H(mu, q)` with `m` the expectation bin of `target`,
/// `mu` its exact remainder and `alpha = epsilon / (1 - epsilon)`.
///
/// Fails with [`Error::ClippedDecomposition`] when the remainder would need
/// clipping; callers fall back to plain cross entropy.
pub fn decomposed_ce_loss(target: &CategoricalDist, predicted: &CategoricalDist, epsilon: f64) -> Result<f64> {
    if !target.same_grid(predicted) {
        return Err(Error::AtomMismatch);
    }
    let d = dist::decompose_exact(target, epsilon)?;
    if d.clipped {
        return Err(Error::ClippedDecomposition);
    }
    let q_m = predicted.probs()[d.bin];
    if !(q_m > 0.0) {
        return Err(Error::AbsoluteContinuity { bin: d.bin });
    }
    let alpha = epsilon / (1.0 - epsilon);
    Ok(-math::ln(q_m) + alpha * dist::cross_entropy(&d.mu, predicted)?)
}

/// Target weighting of the categorical FZI loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FziMode {
    /// Cross entropy to the projected target.
    VanillaCe,
    /// Decomposed loss `-ln q_m + alpha * H(mu, q)` with the given proportion.
    Decomposed(f64),
    /// Cross entropy to `(1 - epsilon) * delta_m + epsilon * target`.
    AblationMix(f64),
}

/// `-sum_i w_i ln softmax(logits)_i` and its gradient `(sum w) q - w` with
/// respect to the logits.
pub(crate) fn weighted_ce(logits: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(logits.iter().map(|l| math::exp(l - max)).sum::<f64>());
    let total: f64 = w.iter().sum();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(w.len());
    for (&l, &wi) in logits.iter().zip(w) {
        let log_q = l - lse;
        if wi != 0.0 {
            loss -= wi * log_q;
        }
        grad.push(total * math::exp(log_q) - wi);
    }
    (loss, grad)
}

/// Target weights for one sample; the flag marks a clipped decomposition.
fn mode_weights(p: &CategoricalDist, mode: FziMode) -> Result<(Vec<f64>, bool)> {
    match mode {
        FziMode::VanillaCe => Ok((p.probs().to_vec(), false)),
        FziMode::AblationMix(eps) => Ok((dist::mix_with_dirac(p, eps)?.probs().to_vec(), false)),
        FziMode::Decomposed(eps) => {
            let d = dist::decompose_exact(p, eps)?;
            if d.clipped {
                return Ok((p.probs().to_vec(), true));
            }
            let alpha = eps / (1.0 - eps);
            let mut w: Vec<f64> = d.mu.probs().iter().map(|m| alpha * m).collect();
            w[d.bin] += 1.0;
            Ok((w, false))
        }
    }
}

pub(crate) fn group_backward(
    net: &Network,
    cache: &Cache,
    action: usize,
    group: usize,
    grad_group: &[f64],
    scale: f64,
    grads: &mut [f64],
) -> Result<()> {
    let mut g = alloc::vec![0.0; net.output_size()];
    for (slot, v) in g[action * group..(action + 1) * group].iter_mut().zip(grad_group) {
        *slot = v * scale;
    }
    net.backward_logits(cache, &g, grads)
}

/// Mean categorical FZI loss over `batch` and its parameter gradient.
/// Clipped decompositions fall back to plain cross entropy and are counted.
pub fn fzi_categorical_loss(
    net: &Network,
    target: &Network,
    batch: &[Transition],
    grid: &[f64],
    gamma: f64,
    mode: FziMode,
) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("batch must be nonempty"));
    }
    check_head(net, grid)?;
    let n = grid.len();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = alloc::vec![0.0; net.n_params()];
    let mut loss = 0.0;
    let mut clipped = 0;
    for t in batch {
        let p = fzi_categorical_target(target, t, grid, gamma)?;
        let (w, was_clipped) = mode_weights(&p, mode)?;
        clipped += usize::from(was_clipped);
        let cache = net.forward(&one_hot(t.state, net.input_size()))?;
        let logits = &cache.logits()[t.action * n..(t.action + 1) * n];
        let (l, g) = weighted_ce(logits, &w);
        loss += l;
        group_backward(net, &cache, t.action, n, &g, scale, &mut grads)?;
    }
    Ok(LossGrad { loss: loss * scale, grads, clipped })
}

/// One optimizer step on [`fzi_categorical_loss`]; returns the pre-step
/// loss and the number of clipped decompositions.
pub fn fzi_categorical_update(
    net: &mut Network,
    opt: &mut Adam,
    target: &Network,
    batch: &[Transition],
    grid: &[f64],
    config: &AgentConfig,
    mode: FziMode,
) -> Result<(f64, usize)> {
    let lg = fzi_categorical_loss(net, target, batch, grid, config.gamma, mode)?;
    opt.step(net.params_mut(), &lg.grads)?;
    Ok((lg.loss, lg.clipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use alloc::vec;

    /// Net whose output group for every state/action is `probs` (zero
    /// weights, log-probability biases).
    fn constant_head(n_states: usize, n_actions: usize, probs: &[f64]) -> Network {
        let n = probs.len();
        let out = n_actions * n;
        let mut params = vec![0.0; n_states * out + out];
        for a in 0..n_actions {
            for (i, p) in probs.iter().enumerate() {
                params[n_states * out + a * n + i] = libm::log(*p);
            }
        }
        Network::from_params(&[n_states, out], &[Activation::Identity], Some(n), params).unwrap()
    }

    #[test]
    fn target_is_shifted_scaled_projection() {
        let grid = [0.0, 1.0, 2.0];
        let target = constant_head(2, 2, &[0.5, 1e-300, 0.5]);
        let t = Transition { state: 0, action: 0, reward: 1.0, next_state: 1, done: false };
        let y = fzi_categorical_target(&target, &t, &grid, 0.5).unwrap();
        // atoms {1, 2} from {0, 2}; the negligible middle mass lands on 1.5.
        assert!((y.probs()[1] - 0.5).abs() < 1e-12);
        assert!((y.probs()[2] - 0.5).abs() < 1e-12);

        let term = Transition { state: 0, action: 0, reward: 0.0, next_state: 1, done: true };
        let y = fzi_categorical_target(&target, &term, &grid, 0.5).unwrap();
        assert_eq!(y.probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn decomposed_loss_examples() {
        let grid = [0.0, 1.0, 2.0];
        let u = CategoricalDist::uniform(&grid);
        let p = CategoricalDist::new(grid.to_vec(), vec![0.1, 0.6, 0.3]).unwrap();
        let loss = decomposed_ce_loss(&p, &u, 0.5).unwrap();
        assert!((loss - 2.0 * libm::log(3.0)).abs() < 1e-12);
        let eps = 0.8;
        let alpha = eps / (1.0 - eps);
        assert!((decomposed_ce_loss(&p, &u, eps).unwrap() - (1.0 + alpha) * libm::log(3.0)).abs() < 1e-12);
        assert_eq!(decomposed_ce_loss(&p, &u, 0.1), Err(Error::ClippedDecomposition));
    }

    #[test]
    fn decomposed_loss_is_scaled_cross_entropy() {
        let grid = [0.0, 1.0, 2.0];
        let p = CategoricalDist::new(grid.to_vec(), vec![0.1, 0.6, 0.3]).unwrap();
        let q = CategoricalDist::new(grid.to_vec(), vec![0.2, 0.5, 0.3]).unwrap();
        let lhs = decomposed_ce_loss(&p, &q, 0.5).unwrap();
        let rhs = dist::cross_entropy(&p, &q).unwrap() / 0.5;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn mix_at_one_matches_vanilla() {
        let mut rng = crate::seeded_rng(2);
        let grid = dist::uniform_grid(0.0, 4.0, 5);
        let net = Network::mlp(3, &[6], 10, Activation::Tanh, Some(5), &mut rng).unwrap();
        let target = Network::mlp(3, &[6], 10, Activation::Tanh, Some(5), &mut rng).unwrap();
        let batch = [
            Transition { state: 0, action: 1, reward: 1.0, next_state: 1, done: false },
            Transition { state: 2, action: 0, reward: 0.5, next_state: 2, done: true },
        ];
        let a = fzi_categorical_loss(&net, &target, &batch, &grid, 0.9, FziMode::VanillaCe).unwrap();
        let b = fzi_categorical_loss(&net, &target, &batch, &grid, 0.9, FziMode::AblationMix(1.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decomposed_mode_loss_matches_direct_formula() {
        let mut rng = crate::seeded_rng(9);
        let grid = dist::uniform_grid(0.0, 4.0, 5);
        let net = Network::mlp(3, &[6], 10, Activation::Tanh, Some(5), &mut rng).unwrap();
        let target = Network::mlp(3, &[6], 10, Activation::Tanh, Some(5), &mut rng).unwrap();
        let t = Transition { state: 0, action: 1, reward: 1.0, next_state: 1, done: false };
        let lg = fzi_categorical_loss(&net, &target, &[t], &grid, 0.9, FziMode::Decomposed(0.95)).unwrap();
        let p = fzi_categorical_target(&target, &t, &grid, 0.9).unwrap();
        let q = &categorical_dists(&net, 0, &grid).unwrap()[1];
        match decomposed_ce_loss(&p, q, 0.95) {
            Ok(direct) => assert!((lg.loss - direct).abs() < 1e-12),
            Err(Error::ClippedDecomposition) => assert_eq!(lg.clipped, 1),
            Err(e) => panic!("{e}"),
        }
    }
}
