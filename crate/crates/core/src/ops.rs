//! Exact tabular dynamic programming.
//!
//! Classical and distributional Bellman backups, the
//! distribution-entropy-regularized backup `T_d`, policy evaluation and
//! improvement, distribution-entropy-regularized policy iteration (DERPI),
//! soft policy iteration, and (distributional) value iteration.
//!
//! All sweeps visit `(s, a)` pairs and successors in index order, so results
//! are reproducible bit for bit.

use alloc::vec::Vec;

use crate::dist::{self, CategoricalDist};
use crate::math;
use crate::mdp::TabularMdp;
use crate::{Error, Result};

/// Iteration cap for the inner fixed-point loops.
const MAX_SWEEPS: usize = 1_000_000;

/// Action values `Q[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, values: alloc::vec![0.0; n_states * n_actions] }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch { expected: n_states * n_actions, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("Q table entries must be finite"));
        }
        Ok(Self { n_states, n_actions, values })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_s,a |self - other|`.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max_a Q[s][a]` per state.
    pub fn state_values(&self) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Stochastic policy `pi[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch { expected: n_states * n_actions, found: probs.len() });
        }
        for row in probs.chunks(n_actions) {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig("policy rows must be probability vectors"));
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self { n_states, n_actions, probs: alloc::vec![p; n_states * n_actions] }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = alloc::vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self { n_states: actions.len(), n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// Most probable action per state, lowest index on ties.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| math::argmax(self.row(s))).collect()
    }

    /// Largest absolute difference between two policies' probabilities.
    pub fn sup_distance(&self, other: &Policy) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Entropy `-sum_a pi ln pi` of the action distribution in state `s`.
    pub fn entropy(&self, s: usize) -> f64 {
        -self
            .row(s)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * math::ln(p))
            .sum::<f64>()
    }
}

/// Return distributions `Z[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistTable {
    n_states: usize,
    n_actions: usize,
    entries: Vec<CategoricalDist>,
}

impl DistTable {
    /// Builds a table; callers of the grid-based operators must supply
    /// entries on one shared grid (checked there, not here, because exact
    /// unprojected backups produce per-entry atom sets).
    pub fn new(n_states: usize, n_actions: usize, entries: Vec<CategoricalDist>) -> Result<Self> {
        if entries.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch { expected: n_states * n_actions, found: entries.len() });
        }
        Ok(Self { n_states, n_actions, entries })
    }

    /// Every entry uniform over `grid`.
    pub fn uniform(n_states: usize, n_actions: usize, grid: &[f64]) -> Self {
        let u = CategoricalDist::uniform(grid);
        Self { n_states, n_actions, entries: alloc::vec![u; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> &CategoricalDist {
        &self.entries[s * self.n_actions + a]
    }

    pub fn entries(&self) -> &[CategoricalDist] {
        &self.entries
    }

    /// The common grid, if every entry shares one.
    pub fn shared_grid(&self) -> Option<&[f64]> {
        let first = self.entries.first()?;
        self.entries
            .iter()
            .all(|e| e.same_grid(first))
            .then(|| first.atoms())
    }

    /// Expectation table `E[Z[s][a]]`.
    pub fn expectations(&self) -> QTable {
        QTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values: self.entries.iter().map(dist::expectation).collect(),
        }
    }

    /// Largest absolute difference of masses between two tables on the same grids.
    pub fn sup_mass_distance(&self, other: &DistTable) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .flat_map(|(a, b)| a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

fn check_q(mdp: &TabularMdp, q: &QTable) -> Result<()> {
    let expected = mdp.n_states() * mdp.n_actions();
    if q.n_states != mdp.n_states() || q.n_actions != mdp.n_actions() {
        return Err(Error::ShapeMismatch { expected, found: q.values.len() });
    }
    Ok(())
}

fn check_policy(mdp: &TabularMdp, pi: &Policy) -> Result<()> {
    if pi.n_states != mdp.n_states() || pi.n_actions != mdp.n_actions() {
        return Err(Error::ShapeMismatch {
            expected: mdp.n_states() * mdp.n_actions(),
            found: pi.probs.len(),
        });
    }
    Ok(())
}

fn check_dist(mdp: &TabularMdp, z: &DistTable) -> Result<()> {
    if z.n_states != mdp.n_states() || z.n_actions != mdp.n_actions() {
        return Err(Error::ShapeMismatch {
            expected: mdp.n_states() * mdp.n_actions(),
            found: z.entries.len(),
        });
    }
    Ok(())
}

/// `V(s) = sum_a pi(a|s) Q(s, a)`.
fn policy_values(q: &QTable, pi: &Policy) -> Vec<f64> {
    (0..q.n_states)
        .map(|s| q.row(s).iter().zip(pi.row(s)).map(|(q, p)| q * p).sum())
        .collect()
}

/// `reward(s, a) + gamma * sum_s' P(s'|s,a) * next[s']`.
fn backup_with(mdp: &TabularMdp, next: &[f64], reward: impl Fn(usize, usize) -> f64) -> QTable {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut values = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let ev: f64 = mdp.next_probs(s, a).iter().zip(next).map(|(p, v)| p * v).sum();
            values.push(reward(s, a) + mdp.gamma() * ev);
        }
    }
    QTable { n_states: ns, n_actions: na, values }
}

/// `(T^pi Q)(s, a) = E[R(s, a)] + gamma * E_{s', a'~pi} Q(s', a')`.
pub fn bellman_backup(mdp: &TabularMdp, q: &QTable, pi: &Policy) -> Result<QTable> {
    check_q(mdp, q)?;
    check_policy(mdp, pi)?;
    let v = policy_values(q, pi);
    Ok(backup_with(mdp, &v, |s, a| mdp.expected_reward(s, a)))
}

/// Optimality backup: the policy average replaced by `max_a'`.
pub fn bellman_optimality_backup(mdp: &TabularMdp, q: &QTable) -> Result<QTable> {
    check_q(mdp, q)?;
    let v = q.state_values();
    Ok(backup_with(mdp, &v, |s, a| mdp.expected_reward(s, a)))
}

/// Exact distributional backup: each output entry is the mixture over
/// `(s', a', reward outcome)` of `r + gamma * Z(s', a')`.
///
/// With `project` the mixture is projected onto the inputs' shared grid.
/// Without it the result lives on the exact induced atom set; that set
/// includes images of zero-mass atoms, so two input tables on one grid
/// produce outputs on identical atom sets.
pub fn distributional_backup(mdp: &TabularMdp, z: &DistTable, pi: &Policy, project: bool) -> Result<DistTable> {
    check_dist(mdp, z)?;
    check_policy(mdp, pi)?;
    let grid = z.shared_grid().ok_or(Error::AtomMismatch)?.to_vec();
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let mut entries = Vec::with_capacity(ns * na);
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            let outcomes = mdp.reward(s, a).outcomes();
            let mut out = alloc::vec![0.0; grid.len()];
            atoms.clear();
            for (s2, &p) in mdp.next_probs(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (a2, &pa) in pi.row(s2).iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    let next = z.get(s2, a2);
                    for &(r, pr) in &outcomes {
                        let w = p * pa * pr;
                        for (&zj, &qj) in grid.iter().zip(next.probs()) {
                            let x = r + gamma * zj;
                            if project {
                                dist::accumulate_projected(&mut out, &grid, x, w * qj);
                            } else {
                                atoms.push((x, w * qj));
                            }
                        }
                    }
                }
            }
            let entry = if project {
                CategoricalDist::from_parts(grid.clone(), out)
            } else {
                merge_atoms(&mut atoms)
            };
            entries.push(entry);
        }
    }
    Ok(DistTable { n_states: ns, n_actions: na, entries })
}

fn merge_atoms(atoms: &mut [(f64, f64)]) -> CategoricalDist {
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut xs: Vec<f64> = Vec::with_capacity(atoms.len());
    let mut ps: Vec<f64> = Vec::with_capacity(atoms.len());
    for &(x, p) in atoms.iter() {
        if xs.last() == Some(&x) {
            *ps.last_mut().unwrap() += p;
        } else {
            xs.push(x);
            ps.push(p);
        }
    }
    CategoricalDist::from_parts(xs, ps)
}

/// The increasing transform `f(H) = sqrt(lambda * H) / gamma`.
pub fn f_transform(entropy: f64, lambda: f64, gamma: f64) -> Result<f64> {
    if entropy < 0.0 {
        return Err(Error::NegativeEntropy(entropy));
    }
    Ok(math::sqrt(lambda * entropy) / gamma)
}

/// Default cap on the cross entropy fed to the regularizer: `ln(atoms) + 10`.
pub fn default_entropy_bound(atoms: usize) -> f64 {
    math::ln(atoms as f64) + 10.0
}

/// Inputs of the distribution-entropy regularizer: the current estimate
/// `q = Z[s][a]`, the remainder distributions `mu[s][a]`, the weight
/// `lambda` and the entropy bound `M`.
#[derive(Debug, Clone)]
pub struct Regularizer {
    pub z: DistTable,
    pub mu: DistTable,
    pub lambda: f64,
    pub entropy_bound: f64,
}

impl Regularizer {
    /// Cross entropy `H(mu[s][a], Z[s][a])` per pair, checked against the bound.
    pub fn cross_entropies(&self) -> Result<Vec<f64>> {
        self.mu
            .entries
            .iter()
            .zip(&self.z.entries)
            .map(|(mu, q)| {
                let h = dist::cross_entropy(mu, q)?;
                if h > self.entropy_bound {
                    Err(Error::EntropyUnbounded { value: h, bound: self.entropy_bound })
                } else {
                    Ok(h)
                }
            })
            .collect()
    }

    /// Corrected rewards `r(s, a) + gamma * f(H(mu, q))` in `[s][a]` layout.
    pub fn corrected_rewards(&self, mdp: &TabularMdp) -> Result<Vec<f64>> {
        check_dist(mdp, &self.z)?;
        check_dist(mdp, &self.mu)?;
        let gamma = mdp.gamma();
        let entropies = self.cross_entropies()?;
        let na = mdp.n_actions();
        entropies
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let bonus = gamma * f_transform(h, self.lambda, gamma)?;
                Ok(mdp.expected_reward(i / na, i % na) + bonus)
            })
            .collect()
    }
}

/// `(T_d^pi Q)(s, a) = r(s, a) + gamma * f(H(mu, q)) + gamma * E_{s', a'~pi} Q(s', a')`.
pub fn der_bellman_backup(mdp: &TabularMdp, q: &QTable, pi: &Policy, reg: &Regularizer) -> Result<QTable> {
    check_q(mdp, q)?;
    check_policy(mdp, pi)?;
    let corrected = reg.corrected_rewards(mdp)?;
    let v = policy_values(q, pi);
    Ok(backup_with(mdp, &v, |s, a| corrected[s * mdp.n_actions() + a]))
}

/// Which backup [`policy_evaluation`] iterates.
#[derive(Debug, Clone, Copy)]
pub enum Backup<'a> {
    Plain,
    Der(&'a Regularizer),
}

/// Iterates `Q <- T Q` from zero until the result is within `tol` (sup
/// norm) of the fixed point, using the contraction bound
/// `|Q_k - Q*| <= gamma / (1 - gamma) * |Q_k - Q_{k-1}|`.
pub fn policy_evaluation(mdp: &TabularMdp, pi: &Policy, backup: Backup<'_>, tol: f64) -> Result<QTable> {
    check_policy(mdp, pi)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be positive"));
    }
    let rewards: Vec<f64> = match backup {
        Backup::Plain => (0..mdp.n_states() * mdp.n_actions())
            .map(|i| mdp.expected_reward(i / mdp.n_actions(), i % mdp.n_actions()))
            .collect(),
        Backup::Der(reg) => reg.corrected_rewards(mdp)?,
    };
    evaluate_with_rewards(mdp, pi, &rewards, tol)
}

fn evaluate_with_rewards(mdp: &TabularMdp, pi: &Policy, rewards: &[f64], tol: f64) -> Result<QTable> {
    let gamma = mdp.gamma();
    let na = mdp.n_actions();
    let mut q = QTable::zeros(mdp.n_states(), na);
    for _ in 0..MAX_SWEEPS {
        let v = policy_values(&q, pi);
        let next = backup_with(mdp, &v, |s, a| rewards[s * na + a]);
        let change = next.sup_distance(&q);
        q = next;
        if change * gamma / (1.0 - gamma) < tol {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_SWEEPS })
}

/// Greedy deterministic policy, lowest action index on ties.
pub fn policy_improvement(q: &QTable) -> Policy {
    let actions: Vec<usize> = (0..q.n_states).map(|s| math::argmax(q.row(s))).collect();
    Policy::deterministic(q.n_actions, &actions)
}

/// Source of the remainder distribution `mu` in the regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuSource {
    /// Exact decomposition of the bootstrapped target (clipped when ill-posed).
    Decomposed,
    /// The whole bootstrapped target distribution.
    WholeTarget,
}

/// Settings of [`derpi`].
#[derive(Debug, Clone)]
pub struct DerpiConfig {
    pub lambda: f64,
    /// Proportion used by the exact decomposition of the target.
    pub epsilon: f64,
    pub mu_source: MuSource,
    /// Atom grid for `Z`; defaults to 51 atoms over the return bounds.
    pub grid: Option<Vec<f64>>,
    /// Cross-entropy bound `M`; defaults to [`default_entropy_bound`].
    pub entropy_bound: Option<f64>,
    /// Policy-evaluation tolerance.
    pub tol: f64,
    /// Stopping tolerance (largest mass change) when computing `Z`.
    pub dist_tol: f64,
    /// Recompute `Z` and `mu` for every new policy instead of keeping the
    /// ones of the initial policy. The corrected reward then moves with the
    /// policy and traces are no longer guaranteed to be monotone.
    pub refresh: bool,
    pub max_iters: usize,
}

impl DerpiConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            epsilon: 0.9,
            mu_source: MuSource::Decomposed,
            grid: None,
            entropy_bound: None,
            tol: 1e-10,
            dist_tol: 1e-12,
            refresh: false,
            max_iters: 100,
        }
    }
}

impl DerpiConfig {
    /// The configured grid, or 51 atoms over the MDP's return bounds
    /// (padded by one when the bounds coincide).
    pub fn grid_for(&self, mdp: &TabularMdp) -> Vec<f64> {
        match &self.grid {
            Some(g) => g.clone(),
            None => {
                let (lo, hi) = mdp.return_bounds();
                let pad = if hi - lo > 1e-9 { 0.0 } else { 1.0 };
                dist::uniform_grid(lo - pad, hi + pad, 51)
            }
        }
    }
}

/// Regularizer of a fixed policy: `Z` from [`distributional_evaluation`]
/// on `grid`, `mu` from the projected target `T^pi Z`. Also returns the
/// number of clipped decompositions.
pub fn regularizer_for(
    mdp: &TabularMdp,
    pi: &Policy,
    grid: &[f64],
    config: &DerpiConfig,
) -> Result<(Regularizer, usize)> {
    let z = distributional_evaluation(mdp, pi, grid, config.dist_tol)?;
    let target = distributional_backup(mdp, &z, pi, true)?;
    let mut clipped = 0;
    let mut mu_entries = Vec::with_capacity(target.entries.len());
    for p in target.entries() {
        let mu = match config.mu_source {
            MuSource::WholeTarget => p.clone(),
            MuSource::Decomposed => {
                let d = dist::decompose_exact(p, config.epsilon)?;
                clipped += usize::from(d.clipped);
                d.mu
            }
        };
        mu_entries.push(mu);
    }
    let reg = Regularizer {
        z,
        mu: DistTable { n_states: mdp.n_states(), n_actions: mdp.n_actions(), entries: mu_entries },
        lambda: config.lambda,
        entropy_bound: config.entropy_bound.unwrap_or_else(|| default_entropy_bound(grid.len())),
    };
    Ok((reg, clipped))
}

/// Outcome of [`derpi`].
#[derive(Debug, Clone)]
pub struct DerpiResult {
    pub policy: Policy,
    /// Corrected action values of the returned policy.
    pub q: QTable,
    /// Return distributions of the returned policy.
    pub z: DistTable,
    /// Remainder distributions used by the last evaluation.
    pub mu: DistTable,
    /// Corrected action values after each evaluation, in order.
    pub trace: Vec<QTable>,
    /// Pairs whose exact decomposition needed clipping, summed over iterations.
    pub clipped: usize,
}

/// Distribution-entropy-regularized policy iteration.
///
/// Starting from the uniform policy, the regularizer is built by
/// [`regularizer_for`] (once, or per policy with `refresh`). Each iteration
/// then evaluates the policy under `T_d` and improves greedily, stopping
/// when the greedy policy repeats.
pub fn derpi(mdp: &TabularMdp, config: &DerpiConfig) -> Result<DerpiResult> {
    if !(0.0..=1.0).contains(&config.lambda) {
        return Err(Error::InvalidConfig("lambda must lie in [0, 1]"));
    }
    let grid = config.grid_for(mdp);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut pi = Policy::uniform(ns, na);
    let mut trace = Vec::new();
    let (mut reg, mut clipped) = regularizer_for(mdp, &pi, &grid, config)?;
    for iter in 0..config.max_iters {
        if config.refresh && iter > 0 {
            let (fresh, c) = regularizer_for(mdp, &pi, &grid, config)?;
            reg = fresh;
            clipped += c;
        }
        let q = policy_evaluation(mdp, &pi, Backup::Der(&reg), config.tol)?;
        trace.push(q.clone());
        let improved = policy_improvement(&q);
        if improved == pi {
            return Ok(DerpiResult { policy: pi, q, z: reg.z, mu: reg.mu, trace, clipped });
        }
        pi = improved;
    }
    Err(Error::NonConvergence { iterations: config.max_iters })
}

/// Iterates the projected distributional backup for a fixed policy, from
/// the uniform table on `grid`, until the largest mass change is below `tol`.
pub fn distributional_evaluation(mdp: &TabularMdp, pi: &Policy, grid: &[f64], tol: f64) -> Result<DistTable> {
    let mut z = DistTable::uniform(mdp.n_states(), mdp.n_actions(), grid);
    for _ in 0..MAX_SWEEPS {
        let next = distributional_backup(mdp, &z, pi, true)?;
        let change = next.sup_mass_distance(&z);
        z = next;
        if change < tol {
            return Ok(z);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_SWEEPS })
}

/// Plain policy iteration from the uniform policy (greedy improvement,
/// exact-equality stopping rule).
pub fn policy_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<(Policy, QTable)> {
    soft_policy_iteration(mdp, 0.0, tol, max_iters)
}

/// Soft policy iteration: evaluation with reward `r(s, a) + beta * H(pi(.|s))`
/// and improvement `pi(.|s) ∝ exp(Q(s, .) / beta)` (greedy when `beta = 0`).
/// Stops when the policy moves by less than `tol` (exactly repeats for `beta = 0`).
pub fn soft_policy_iteration(mdp: &TabularMdp, beta: f64, tol: f64, max_iters: usize) -> Result<(Policy, QTable)> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidConfig("beta must be nonnegative"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut pi = Policy::uniform(ns, na);
    for _ in 0..max_iters {
        let rewards: Vec<f64> = (0..ns * na)
            .map(|i| mdp.expected_reward(i / na, i % na) + beta * pi.entropy(i / na))
            .collect();
        let q = evaluate_with_rewards(mdp, &pi, &rewards, tol)?;
        let improved = if beta == 0.0 {
            policy_improvement(&q)
        } else {
            soft_improvement(&q, beta)
        };
        let stable = if beta == 0.0 { improved == pi } else { improved.sup_distance(&pi) < tol };
        if stable {
            return Ok((improved, q));
        }
        pi = improved;
    }
    Err(Error::NonConvergence { iterations: max_iters })
}

/// `pi(.|s) = softmax(Q(s, .) / beta)`.
pub fn soft_improvement(q: &QTable, beta: f64) -> Policy {
    let mut probs = Vec::with_capacity(q.values.len());
    for s in 0..q.n_states {
        let scaled: Vec<f64> = q.row(s).iter().map(|v| v / beta).collect();
        probs.extend(math::softmax(&scaled));
    }
    Policy { n_states: q.n_states, n_actions: q.n_actions, probs }
}

/// Iterates the optimality backup from zero until within `tol` of the fixed point.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be positive"));
    }
    let gamma = mdp.gamma();
    let mut q = QTable::zeros(mdp.n_states(), mdp.n_actions());
    for _ in 0..MAX_SWEEPS {
        let next = bellman_optimality_backup(mdp, &q)?;
        let change = next.sup_distance(&q);
        q = next;
        if change * gamma / (1.0 - gamma) < tol {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_SWEEPS })
}

/// Distributional value iteration on a fixed grid: each sweep backs up
/// through the action maximizing the next state's expected return, then
/// projects. Stops when the largest mass change is below `tol`.
pub fn distributional_value_iteration(mdp: &TabularMdp, grid: &[f64], tol: f64) -> Result<DistTable> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidDistribution("grid must be strictly ascending"));
    }
    let na = mdp.n_actions();
    let mut z = DistTable::uniform(mdp.n_states(), na, grid);
    for _ in 0..MAX_SWEEPS {
        let greedy = policy_improvement(&z.expectations());
        let next = distributional_backup(mdp, &z, &greedy, true)?;
        let change = next.sup_mass_distance(&z);
        z = next;
        if change < tol {
            return Ok(z);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_SWEEPS })
}
