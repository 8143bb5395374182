//! Quantile critics: sampled fractions, the quantile Huber loss and an
//! implicit-quantile style network taking `[one_hot(s), cos(pi k tau)]`.

use alloc::vec::Vec;

use super::{one_hot, AgentConfig, LossGrad};
use crate::dist::QuantileDist;
use crate::math;
use crate::mdp::Transition;
use crate::nn::{Adam, Network};
use crate::{Error, Result};

/// Cumulative sums of `draws` normalized by their total: ascending, ending at 1.
pub fn fractions_from_draws(draws: &[f64]) -> Vec<f64> {
    let total: f64 = draws.iter().sum();
    let mut acc = 0.0;
    let mut out: Vec<f64> = draws
        .iter()
        .map(|d| {
            acc += d;
            acc / total
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// `n` ascending fractions from uniform draws, via [`fractions_from_draws`].
pub fn sample_quantile_fractions<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n.max(1)).map(|_| rng.gen::<f64>()).collect();
    fractions_from_draws(&draws)
}

/// Interval midpoints `(tau_{i-1} + tau_i) / 2`, with `tau_0 = 0`.
fn midpoints(fractions: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    fractions
        .iter()
        .map(|&t| {
            let m = 0.5 * (prev + t);
            prev = t;
            m
        })
        .collect()
}

fn huber(u: f64, kappa: f64) -> f64 {
    if u.abs() <= kappa {
        0.5 * u * u
    } else {
        kappa * (u.abs() - 0.5 * kappa)
    }
}

fn huber_slope(u: f64, kappa: f64) -> f64 {
    if u.abs() <= kappa {
        u
    } else {
        kappa * u.signum()
    }
}

/// `sum_i sum_j w_j |tau_i - 1{u < 0}| Huber(u) / kappa / N` with
/// `u = target_j - value_i`, and its gradient with respect to the values.
fn weighted_huber(fractions: &[f64], values: &[f64], targets: &[(f64, f64)], kappa: f64) -> (f64, Vec<f64>) {
    let n = values.len() as f64;
    let mut loss = 0.0;
    let mut grad = alloc::vec![0.0; values.len()];
    for (i, (&tau, &v)) in fractions.iter().zip(values).enumerate() {
        for &(t, w) in targets {
            let u = t - v;
            let weight = (tau - if u < 0.0 { 1.0 } else { 0.0 }).abs();
            loss += w * weight * huber(u, kappa) / kappa;
            grad[i] -= w * weight * huber_slope(u, kappa) / kappa;
        }
    }
    (loss / n, grad.into_iter().map(|g| g / n).collect())
}

/// Mean over `(i, j)` of `|tau_i - 1{u < 0}| Huber_kappa(u) / kappa`,
/// `u = targets[j] - predicted.values[i]`.
pub fn quantile_huber_loss(predicted: &QuantileDist, targets: &[f64], kappa: f64) -> f64 {
    let w = 1.0 / targets.len() as f64;
    let t: Vec<(f64, f64)> = targets.iter().map(|&x| (x, w)).collect();
    weighted_huber(predicted.fractions(), predicted.values(), &t, kappa).0
}

/// Gradient of [`quantile_huber_loss`] with respect to the predicted values.
pub fn quantile_huber_grad(predicted: &QuantileDist, targets: &[f64], kappa: f64) -> Vec<f64> {
    let w = 1.0 / targets.len() as f64;
    let t: Vec<(f64, f64)> = targets.iter().map(|&x| (x, w)).collect();
    weighted_huber(predicted.fractions(), predicted.values(), &t, kappa).1
}

/// `[cos(pi * k * tau)]` for `k = 1..=dim`.
pub fn tau_embedding(tau: f64, dim: usize) -> Vec<f64> {
    (1..=dim).map(|k| math::cos(core::f64::consts::PI * k as f64 * tau)).collect()
}

fn critic_input(state: usize, n_states: usize, tau: f64, dim: usize) -> Vec<f64> {
    let mut x = one_hot(state, n_states);
    x.extend(tau_embedding(tau, dim));
    x
}

fn n_states_of(net: &Network, dim: usize) -> Result<usize> {
    net.input_size()
        .checked_sub(dim)
        .filter(|&n| n > 0)
        .ok_or(Error::ShapeMismatch { expected: dim + 1, found: net.input_size() })
}

/// Quantile values per fraction, each a vector over actions.
fn quantile_values(net: &Network, state: usize, taus: &[f64], dim: usize) -> Result<Vec<Vec<f64>>> {
    let ns = n_states_of(net, dim)?;
    taus.iter().map(|&t| net.predict(&critic_input(state, ns, t, dim))).collect()
}

/// Expected return per action, averaging the quantile values at the
/// midpoints `(i + 0.5) / n` of `n` equal fraction intervals.
pub fn quantile_means(net: &Network, state: usize, n: usize, dim: usize) -> Result<Vec<f64>> {
    let taus: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let values = quantile_values(net, state, &taus, dim)?;
    let mut means = alloc::vec![0.0; net.output_size()];
    for row in &values {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    Ok(means)
}

/// How target-side actions are chosen.
#[derive(Debug, Clone, Copy)]
pub enum QuantileTarget<'a> {
    /// Greedy by expectation (quantile FZI).
    Greedy,
    /// Mixture over `a' ~ pi(.|s')`, with soft shift `-beta ln pi(a'|s')`.
    Policy { policy: &'a Network, beta: f64 },
}

/// Quantile regression loss of the critic over `batch`. `fractions[k]` holds
/// the cumulative prediction and target fractions of sample `k`; values are
/// evaluated at the interval midpoints.
pub fn quantile_critic_loss(
    net: &Network,
    target: &Network,
    batch: &[Transition],
    fractions: &[(Vec<f64>, Vec<f64>)],
    config: &AgentConfig,
    kind: QuantileTarget<'_>,
) -> Result<LossGrad> {
    if batch.is_empty() || fractions.len() != batch.len() {
        return Err(Error::ShapeMismatch { expected: batch.len().max(1), found: fractions.len() });
    }
    let dim = config.quantile_embedding;
    let ns = n_states_of(net, dim)?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = alloc::vec![0.0; net.n_params()];
    let mut loss = 0.0;
    for (t, (pred_taus, target_taus)) in batch.iter().zip(fractions) {
        let targets = target_samples(target, t, target_taus, config, kind)?;
        let taus = midpoints(pred_taus);
        let caches: Vec<_> = taus
            .iter()
            .map(|&tau| net.forward(&critic_input(t.state, ns, tau, dim)))
            .collect::<Result<_>>()?;
        let values: Vec<f64> = caches.iter().map(|c| c.output()[t.action]).collect();
        let (l, g) = weighted_huber(&taus, &values, &targets, config.huber_kappa);
        loss += l;
        for (cache, gi) in caches.iter().zip(g) {
            let mut go = alloc::vec![0.0; net.output_size()];
            go[t.action] = gi * scale;
            net.backward(cache, &go, &mut grads)?;
        }
    }
    Ok(LossGrad { loss: loss * scale, grads, clipped: 0 })
}

/// Weighted target samples `(value, weight)` for one transition.
fn target_samples(
    target: &Network,
    t: &Transition,
    target_taus: &[f64],
    config: &AgentConfig,
    kind: QuantileTarget<'_>,
) -> Result<Vec<(f64, f64)>> {
    if t.done {
        return Ok(alloc::vec![(t.reward, 1.0)]);
    }
    let dim = config.quantile_embedding;
    let (weights, shift): (Vec<f64>, Vec<f64>) = match kind {
        QuantileTarget::Greedy => {
            let means = quantile_means(target, t.next_state, config.quantiles, dim)?;
            let mut w = alloc::vec![0.0; means.len()];
            w[math::argmax(&means)] = 1.0;
            let zero = alloc::vec![0.0; means.len()];
            (w, zero)
        }
        QuantileTarget::Policy { policy, beta } => {
            let pi = policy.predict(&one_hot(t.next_state, policy.input_size()))?;
            let shift = pi.iter().map(|&p| if p > 0.0 { -beta * math::ln(p) } else { 0.0 }).collect();
            (pi, shift)
        }
    };
    let taus = midpoints(target_taus);
    let values = quantile_values(target, t.next_state, &taus, dim)?;
    let m = taus.len() as f64;
    let mut out = Vec::with_capacity(taus.len() * weights.len());
    for row in &values {
        for (a, (&w, &z)) in weights.iter().zip(row).enumerate() {
            if w > 0.0 {
                out.push((t.reward + config.gamma * (z + shift[a]), w / m));
            }
        }
    }
    Ok(out)
}

/// Samples fractions with `rng`, then one optimizer step on
/// [`quantile_critic_loss`]; returns the pre-step loss.
#[allow(clippy::too_many_arguments)]
pub fn quantile_critic_update<R: rand::Rng + ?Sized>(
    net: &mut Network,
    opt: &mut Adam,
    target: &Network,
    batch: &[Transition],
    config: &AgentConfig,
    kind: QuantileTarget<'_>,
    rng: &mut R,
) -> Result<f64> {
    let fractions: Vec<(Vec<f64>, Vec<f64>)> = batch
        .iter()
        .map(|_| {
            let a = sample_quantile_fractions(config.quantiles, rng);
            let b = sample_quantile_fractions(config.quantiles, rng);
            (a, b)
        })
        .collect();
    let lg = quantile_critic_loss(net, target, batch, &fractions, config, kind)?;
    opt.step(net.params_mut(), &lg.grads)?;
    Ok(lg.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn fraction_examples() {
        assert_eq!(fractions_from_draws(&[0.7]), vec![1.0]);
        assert_eq!(fractions_from_draws(&[0.3, 0.3]), vec![0.5, 1.0]);
        let mut rng = crate::seeded_rng(0);
        assert_eq!(sample_quantile_fractions(1, &mut rng), vec![1.0]);
        for _ in 0..10_000 {
            let f = sample_quantile_fractions(8, &mut rng);
            assert!(f.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(f[7], 1.0);
        }
    }

    #[test]
    fn loss_zero_at_targets() {
        let q = QuantileDist::new(vec![0.25, 0.75], vec![2.0, 2.0]).unwrap();
        assert_eq!(quantile_huber_loss(&q, &[2.0, 2.0, 2.0], 1.0), 0.0);
    }

    fn scan_minimizer(tau: f64, samples: &[f64]) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=101_000 {
            let c = k as f64 * 1e-3;
            let q = QuantileDist::new_unsorted(vec![tau], vec![c]);
            let l = quantile_huber_loss(&q, samples, 1.0);
            if l < best.0 {
                best = (l, c);
            }
        }
        best.1
    }

    #[test]
    fn constant_minimizers() {
        let samples = [1.0, 2.0, 3.0, 100.0];
        let median = scan_minimizer(0.5, &samples);
        assert!((2.0..=3.0).contains(&median), "{median}");
        assert!(scan_minimizer(0.9, &samples) >= median);
    }

    #[test]
    fn huber_grad_matches_differences() {
        let q = QuantileDist::new(vec![0.1, 0.5, 0.9], vec![-0.3, 0.4, 2.2]).unwrap();
        let targets = [0.0, 0.5, 1.0, 3.5];
        let g = quantile_huber_grad(&q, &targets, 1.0);
        let numeric = crate::nn::numeric_gradient(q.values(), |v| {
            quantile_huber_loss(&QuantileDist::new_unsorted(q.fractions().to_vec(), v.to_vec()), &targets, 1.0)
        }, 1e-6);
        assert!(crate::nn::max_relative_error(&g, &numeric) < 1e-6);
    }
}
