//! Small multi-layer perceptron with reverse-mode gradients and Adam.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix
//! (row-major, `out x in`) followed by its bias.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => math::tanh(z),
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    /// Output is split into consecutive softmax groups of this size.
    softmax_group: Option<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// `layers[0]` is the input, `layers[l + 1]` the output of layer `l`.
    layers: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Cache {
    /// Network output (after the softmax groups, if any).
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Output before the softmax groups.
    pub fn logits(&self) -> &[f64] {
        self.layers.last().expect("cache has at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Network {
    /// Seeded network with weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: rand::Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        softmax_group: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::from_params(sizes, activations, softmax_group, alloc::vec![0.0; param_count(sizes)])?;
        let mut offset = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / math::sqrt(w[0] as f64);
            let n = w[1] * w[0] + w[1];
            for p in &mut net.params[offset..offset + n] {
                *p = rng.gen_range(-bound..=bound);
            }
            offset += n;
        }
        Ok(net)
    }

    /// Network with hidden layers of `hidden_act` and a linear output layer.
    pub fn mlp<R: rand::Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        softmax_group: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = alloc::vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut acts = alloc::vec![hidden_act; hidden.len()];
        acts.push(Activation::Identity);
        Self::new(&sizes, &acts, softmax_group, rng)
    }

    pub fn from_params(
        sizes: &[usize],
        activations: &[Activation],
        softmax_group: Option<usize>,
        params: Vec<f64>,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidConfig("network needs at least two nonzero layer sizes"));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::ShapeMismatch { expected: sizes.len() - 1, found: activations.len() });
        }
        if let Some(g) = softmax_group {
            if g == 0 || sizes[sizes.len() - 1] % g != 0 {
                return Err(Error::InvalidConfig("softmax group must divide the output size"));
            }
        }
        let n = param_count(sizes);
        if params.len() != n {
            return Err(Error::ShapeMismatch { expected: n, found: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("network parameters must be finite"));
        }
        Ok(Self { sizes: sizes.to_vec(), activations: activations.to_vec(), softmax_group, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn softmax_group(&self) -> Option<usize> {
        self.softmax_group
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Hard copy of another network's parameters.
    pub fn copy_from(&mut self, other: &Network) {
        self.params.copy_from_slice(&other.params);
    }

    /// `self <- tau * online + (1 - tau) * self`.
    pub fn polyak_from(&mut self, online: &Network, tau: f64) {
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Cache> {
        if input.len() != self.input_size() {
            return Err(Error::ShapeMismatch { expected: self.input_size(), found: input.len() });
        }
        let mut layers = Vec::with_capacity(self.sizes.len());
        let mut pre = Vec::with_capacity(self.sizes.len() - 1);
        layers.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &layers[l];
            let z: Vec<f64> = (0..n_out)
                .map(|i| {
                    let row = &weights[i * n_in..(i + 1) * n_in];
                    bias[i] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
                })
                .collect();
            let act = self.activations[l];
            layers.push(z.iter().map(|&z| act.apply(z)).collect());
            pre.push(z);
            offset += n_in * n_out + n_out;
        }
        let logits = layers.last().expect("nonempty");
        let output = match self.softmax_group {
            Some(g) => logits.chunks(g).flat_map(math::softmax).collect(),
            None => logits.clone(),
        };
        Ok(Cache { layers, pre, output })
    }

    /// Output only.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.output)
    }

    fn check_cache(&self, cache: &Cache) -> Result<()> {
        let ok = cache.layers.len() == self.sizes.len()
            && cache.layers.iter().zip(&self.sizes).all(|(l, &n)| l.len() == n)
            && cache.output.len() == self.output_size();
        if ok {
            Ok(())
        } else {
            Err(Error::CacheMismatch)
        }
    }

    /// Accumulates into `grads` the parameter gradient of a loss whose
    /// gradient with respect to the network output is `grad_output`.
    pub fn backward(&self, cache: &Cache, grad_output: &[f64], grads: &mut [f64]) -> Result<()> {
        self.check_cache(cache)?;
        if grad_output.len() != self.output_size() {
            return Err(Error::ShapeMismatch { expected: self.output_size(), found: grad_output.len() });
        }
        match self.softmax_group {
            None => self.backward_logits(cache, grad_output, grads),
            Some(g) => {
                let mut grad_logits = Vec::with_capacity(grad_output.len());
                for (y, dy) in cache.output.chunks(g).zip(grad_output.chunks(g)) {
                    let dot: f64 = y.iter().zip(dy).map(|(y, d)| y * d).sum();
                    grad_logits.extend(y.iter().zip(dy).map(|(y, d)| y * (d - dot)));
                }
                self.backward_logits(cache, &grad_logits, grads)
            }
        }
    }

    /// Like [`Network::backward`], but `grad_logits` is taken with respect to
    /// the pre-softmax output (e.g. `q - target` for a cross-entropy loss).
    pub fn backward_logits(&self, cache: &Cache, grad_logits: &[f64], grads: &mut [f64]) -> Result<()> {
        self.check_cache(cache)?;
        if grad_logits.len() != self.output_size() {
            return Err(Error::ShapeMismatch { expected: self.output_size(), found: grad_logits.len() });
        }
        if grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), found: grads.len() });
        }
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let act = self.activations[n_layers - 1];
        let mut delta: Vec<f64> = grad_logits
            .iter()
            .zip(&cache.pre[n_layers - 1])
            .zip(&cache.layers[n_layers])
            .map(|((g, &z), &y)| g * act.derivative(z, y))
            .collect();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.layers[l];
            for i in 0..n_out {
                let d = delta[i];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grads[off + i * n_in..off + (i + 1) * n_in];
                for (g, xj) in row.iter_mut().zip(x) {
                    *g += d * xj;
                }
                grads[off + n_in * n_out + i] += d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let act = self.activations[l - 1];
                let mut prev = alloc::vec![0.0; n_in];
                for (i, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(&weights[i * n_in..(i + 1) * n_in]) {
                        *p += w * d;
                    }
                }
                for ((p, &z), &y) in prev.iter_mut().zip(&cache.pre[l - 1]).zip(&cache.layers[l]) {
                    *p *= act.derivative(z, y);
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Smallest absolute pre-activation over hidden relu units for `input`.
    pub fn min_relu_margin(&self, input: &[f64]) -> Result<f64> {
        let cache = self.forward(input)?;
        Ok(cache
            .pre
            .iter()
            .zip(&self.activations)
            .filter(|(_, a)| **a == Activation::Relu)
            .flat_map(|(z, _)| z.iter().map(|z| z.abs()))
            .fold(f64::INFINITY, f64::min))
    }
}

/// Central finite-difference gradient of `f` at `params`.
pub fn numeric_gradient(params: &[f64], mut f: impl FnMut(&[f64]) -> f64, h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / f64::max(1e-8, a.abs() + n.abs()))
        .fold(0.0, f64::max)
}

/// Compares backpropagated gradients of `loss(output)` against central
/// differences with step `h`; `loss` returns the value and its gradient
/// with respect to the network output. Returns the max relative error.
pub fn grad_check(
    net: &Network,
    input: &[f64],
    loss: impl Fn(&[f64]) -> (f64, Vec<f64>),
    h: f64,
) -> Result<f64> {
    let cache = net.forward(input)?;
    let (_, grad_out) = loss(cache.output());
    let mut analytic = alloc::vec![0.0; net.n_params()];
    net.backward(&cache, &grad_out, &mut analytic)?;
    let mut probe = net.clone();
    let numeric = numeric_gradient(net.params(), |p| {
        probe.params.copy_from_slice(p);
        loss(&probe.predict(input).expect("shape checked above")).0
    }, h);
    Ok(max_relative_error(&analytic, &numeric))
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    /// Default moments `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: alloc::vec![0.0; n_params],
            v: alloc::vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch { expected: self.m.len(), found: grads.len() });
        }
        self.t += 1;
        let c1 = 1.0 - math::powf(self.beta1, self.t as f64);
        let c2 = 1.0 - math::powf(self.beta2, self.t as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (math::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}
