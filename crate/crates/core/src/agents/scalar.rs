//! Neural fitted Q-iteration.

use alloc::vec::Vec;

use super::{one_hot, AgentConfig, LossGrad};
use crate::mdp::Transition;
use crate::nn::{Adam, Network};
use crate::{Error, Result};

/// Mean squared error between `Q(s, a)` and `y = r + gamma * max_a' Q*(s', a')`
/// (`y = r` on terminal transitions), with its parameter gradient.
pub fn fqi_loss(net: &Network, target: &Network, batch: &[Transition], gamma: f64) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("batch must be nonempty"));
    }
    let n_states = net.input_size();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = alloc::vec![0.0; net.n_params()];
    let mut loss = 0.0;
    for t in batch {
        let y = if t.done {
            t.reward
        } else {
            let next = target.predict(&one_hot(t.next_state, n_states))?;
            t.reward + gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let cache = net.forward(&one_hot(t.state, n_states))?;
        let diff = cache.output()[t.action] - y;
        loss += diff * diff;
        let mut g: Vec<f64> = alloc::vec![0.0; net.output_size()];
        g[t.action] = 2.0 * diff * scale;
        net.backward(&cache, &g, &mut grads)?;
    }
    Ok(LossGrad { loss: loss * scale, grads, clipped: 0 })
}

/// One optimizer step on [`fqi_loss`]; returns the loss before the step.
pub fn fqi_update(
    net: &mut Network,
    opt: &mut Adam,
    target: &Network,
    batch: &[Transition],
    config: &AgentConfig,
) -> Result<f64> {
    let lg = fqi_loss(net, target, batch, config.gamma)?;
    opt.step(net.params_mut(), &lg.grads)?;
    Ok(lg.loss)
}
