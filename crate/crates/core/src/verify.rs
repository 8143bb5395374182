//! Executable certificates for the decomposition, the KL results, the
//! decomposed loss identity and DERPI.
//!
//! Every check draws random instances from its own seeded generator,
//! measures a slack (`bound + tolerance - observed`, or `tolerance - |error|`
//! for identities) per trial and records the smallest one. A trial fails
//! when its slack is negative.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::agents::decomposed_ce_loss;
use crate::dist::{self, CategoricalDist};
use crate::mdp::{self, TabularMdp};
use crate::ops::{self, Backup, DerpiConfig, DistTable, Policy, QTable};
use crate::{math, seeded_rng, Result, Rng};

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// Smallest slack seen over all trials; negative iff some trial failed.
    pub worst_margin: f64,
    pub seed: u64,
}

impl PropertyReport {
    fn new(name: &'static str, seed: u64) -> Self {
        Self { name, trials: 0, failures: 0, worst_margin: f64::INFINITY, seed }
    }

    fn record(&mut self, margin: f64) {
        self.trials += 1;
        // NaN slack counts as a failure.
        if !(margin >= 0.0) {
            self.failures += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
    }

    fn merge(&mut self, other: &PropertyReport) {
        self.trials += other.trials;
        self.failures += other.failures;
        if other.worst_margin < self.worst_margin || other.worst_margin.is_nan() {
            self.worst_margin = other.worst_margin;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Trial counts used by [`run_suite`].
pub const DEFAULT_TRIALS: [(&str, usize); 7] = [
    ("prop1", 1000),
    ("kl_nonexpansion", 500),
    ("pinsker_w1", 1000),
    ("expectation_contraction", 500),
    ("prop3_identity", 1000),
    ("derpi_policy", 100),
    ("corrected_reward", 50),
];

/// Runs every check at its default trial count; check `i` uses `seed + i`.
pub fn run_suite(seed: u64) -> Result<Vec<PropertyReport>> {
    let checks: [fn(usize, u64) -> Result<PropertyReport>; 7] = [
        check_prop1,
        check_kl_nonexpansion,
        check_pinsker_and_w1,
        check_expectation_contraction,
        check_prop3_identity,
        check_derpi_policy,
        check_corrected_reward,
    ];
    checks
        .iter()
        .zip(DEFAULT_TRIALS)
        .enumerate()
        .map(|(i, (check, (_, trials)))| check(trials, seed.wrapping_add(i as u64)))
        .collect()
}

// ---------------------------------------------------------------------------
// Random instances

fn random_probs(rng: &mut Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|p| p / total).collect()
}

fn random_dist(rng: &mut Rng, grid: &[f64]) -> CategoricalDist {
    CategoricalDist::new(grid.to_vec(), random_probs(rng, grid.len())).expect("valid by construction")
}

fn random_grid(rng: &mut Rng, n: usize) -> Vec<f64> {
    loop {
        let mut atoms: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        atoms.sort_by(f64::total_cmp);
        if atoms.windows(2).all(|w| w[1] - w[0] > 1e-6) {
            return atoms;
        }
    }
}

fn random_table(rng: &mut Rng, mdp: &TabularMdp, grid: &[f64]) -> DistTable {
    let entries = (0..mdp.n_states() * mdp.n_actions()).map(|_| random_dist(rng, grid)).collect();
    DistTable::new(mdp.n_states(), mdp.n_actions(), entries).expect("sizes match")
}

fn random_policy(rng: &mut Rng, n_states: usize, n_actions: usize) -> Policy {
    let probs = (0..n_states).flat_map(|_| random_probs(rng, n_actions)).collect();
    Policy::new(n_states, n_actions, probs).expect("rows are normalized")
}

fn random_gamma(rng: &mut Rng) -> f64 {
    rng.gen_range(0.5..=0.95)
}

fn random_small_mdp(rng: &mut Rng, max_states: usize, max_actions: usize, stochastic: bool) -> TabularMdp {
    let ns = rng.gen_range(1..=max_states);
    let na = rng.gen_range(1..=max_actions);
    let gamma = random_gamma(rng);
    mdp::random_mdp(ns, na, gamma, stochastic, rng)
}

// ---------------------------------------------------------------------------
// Oracles

/// Solves `a x = b` (row-major `n x n`) by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("nonempty range");
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = alloc::vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    x
}

/// Exact action values of `pi` under the reward table `rewards` (`[s][a]`
/// layout): solves `(I - gamma P_pi) V = r_pi`, then `Q = r + gamma P V`.
fn solve_q(mdp: &TabularMdp, pi: &Policy, rewards: &[f64]) -> QTable {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let mut a = alloc::vec![0.0; ns * ns];
    let mut b = alloc::vec![0.0; ns];
    for s in 0..ns {
        a[s * ns + s] += 1.0;
        for act in 0..na {
            let w = pi.prob(s, act);
            b[s] += w * rewards[s * na + act];
            for (s2, &p) in mdp.next_probs(s, act).iter().enumerate() {
                a[s * ns + s2] -= gamma * w * p;
            }
        }
    }
    let v = solve_dense(a, b);
    let values = (0..ns * na)
        .map(|i| {
            let (s, act) = (i / na, i % na);
            let next: f64 = mdp.next_probs(s, act).iter().zip(&v).map(|(p, v)| p * v).sum();
            rewards[i] + gamma * next
        })
        .collect();
    QTable::from_values(ns, na, values).expect("sizes match")
}

fn expected_rewards(mdp: &TabularMdp) -> Vec<f64> {
    let na = mdp.n_actions();
    (0..mdp.n_states() * na).map(|i| mdp.expected_reward(i / na, i % na)).collect()
}

/// Best deterministic policy by enumerating all `|A|^|S|` of them, with its
/// state values. Returns the policy whose values dominate every other one.
fn enumerate_optimal(mdp: &TabularMdp) -> (Vec<usize>, Vec<f64>) {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let rewards = expected_rewards(mdp);
    let count = na.pow(ns as u32);
    let mut best: Option<(Vec<usize>, Vec<f64>)> = None;
    for code in 0..count {
        let mut c = code;
        let actions: Vec<usize> = (0..ns)
            .map(|_| {
                let a = c % na;
                c /= na;
                a
            })
            .collect();
        let pi = Policy::deterministic(na, &actions);
        let q = solve_q(mdp, &pi, &rewards);
        let v: Vec<f64> = actions.iter().enumerate().map(|(s, &a)| q.get(s, a)).collect();
        let better = match &best {
            None => true,
            Some((_, bv)) => v.iter().sum::<f64>() > bv.iter().sum::<f64>(),
        };
        if better {
            best = Some((actions, v));
        }
    }
    best.expect("at least one policy")
}

// ---------------------------------------------------------------------------
// Decomposition bound

/// Random discrete law, its constant `c = max |x - E|`, and `epsilon`.
/// Resamples until no atom sits on the expectation.
fn cdf_bound_instance(rng: &mut Rng) -> (CategoricalDist, f64) {
    loop {
        let k = rng.gen_range(2..=8);
        let grid = random_grid(rng, k);
        let p = random_dist(rng, &grid);
        let e = p.mean();
        if grid.iter().all(|&x| (x - e).abs() > 1e-9) {
            let eps = rng.gen_range(0.0..1.0);
            return (p, eps);
        }
    }
}

/// Brute-force `sup_x |F(x) - ((1 - eps) 1{x >= E} + eps F(x))|` over every
/// breakpoint, every gap midpoint and both tails, with `F` summed directly.
fn cdf_bound_sup(p: &CategoricalDist, eps: f64) -> f64 {
    let e = p.mean();
    let f = |x: f64| -> f64 { p.atoms().iter().zip(p.probs()).filter(|(&a, _)| a <= x).map(|(_, &q)| q).sum() };
    let mut points: Vec<f64> = p.atoms().to_vec();
    points.push(e);
    points.sort_by(f64::total_cmp);
    let mut probes = points.clone();
    probes.extend(points.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    probes.push(points[0] - 1.0);
    probes.push(points[points.len() - 1] + 1.0);
    probes
        .iter()
        .map(|&x| {
            let fx = f(x);
            let step = if x >= e { 1.0 } else { 0.0 };
            (fx - ((1.0 - eps) * step + eps * fx)).abs()
        })
        .fold(0.0, f64::max)
}

/// Closed form `(1 - eps) max{1 - F(E-), F(E-)}` and the variance bound
/// `(1 - eps)(1 - sigma^2 / 2c^2)`, with `c` bounding `|X - E|`.
pub fn cdf_bound_sides(p: &CategoricalDist, eps: f64) -> (f64, f64) {
    let e = p.mean();
    let left = p.cdf_left(e);
    let c = p.atoms().iter().map(|&x| (x - e).abs()).fold(0.0, f64::max);
    let closed = (1.0 - eps) * (1.0 - left).max(left);
    let bound = (1.0 - eps) * (1.0 - p.variance() / (2.0 * c * c));
    (closed, bound)
}

/// With `F_mu := F`, the sup-norm gap between `F` and its decomposition
/// equals `(1 - eps) max{1 - F(E-), F(E-)}` (1e-12) and stays below
/// `(1 - eps)(1 - sigma^2 / 2c^2)` (1e-9).
pub fn check_prop1(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = seeded_rng(seed);
    let mut report = PropertyReport::new("prop1", seed);
    for _ in 0..trials {
        let (p, eps) = cdf_bound_instance(&mut rng);
        let sup = cdf_bound_sup(&p, eps);
        let (closed, bound) = cdf_bound_sides(&p, eps);
        report.record((1e-12 - (sup - closed).abs()).min(bound + 1e-9 - sup));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// KL results

/// `sup KL(T Z1, T Z2) <= sup KL(Z1, Z2)` for the exact backup on random
/// deterministic-reward MDPs and random table pairs on a shared grid.
pub fn check_kl_nonexpansion(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = seeded_rng(seed);
    let mut report = PropertyReport::new("kl_nonexpansion", seed);
    for _ in 0..trials {
        let mdp = random_small_mdp(&mut rng, 4, 3, false);
        let n = rng.gen_range(2..=12);
        let grid = random_grid(&mut rng, n);
        let z1 = random_table(&mut rng, &mdp, &grid);
        let z2 = random_table(&mut rng, &mdp, &grid);
        let pi = random_policy(&mut rng, mdp.n_states(), mdp.n_actions());
        let t1 = ops::distributional_backup(&mdp, &z1, &pi, false)?;
        let t2 = ops::distributional_backup(&mdp, &z2, &pi, false)?;
        let before = sup_kl(&z1, &z2)?;
        let after = sup_kl(&t1, &t2)?;
        report.record(before + 1e-10 - after);
    }
    Ok(report)
}

fn sup_kl(a: &DistTable, b: &DistTable) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (p, q) in a.entries().iter().zip(b.entries()) {
        worst = worst.max(dist::kl_divergence(p, q)?);
    }
    Ok(worst)
}

/// `TV <= sqrt(KL / 2)` and `W1 <= diameter * TV` on random shared-grid pairs.
pub fn check_pinsker_and_w1(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = seeded_rng(seed);
    let mut report = PropertyReport::new("pinsker_w1", seed);
    for _ in 0..trials {
        let n = rng.gen_range(2..=20);
        let grid = random_grid(&mut rng, n);
        let p = random_dist(&mut rng, &grid);
        let q = random_dist(&mut rng, &grid);
        let kl = dist::kl_divergence(&p, &q)?;
        let tv = dist::total_variation(&p, &q)?;
        let w1 = dist::wasserstein(&p, &q, 1);
        let diameter = grid[n - 1] - grid[0];
        let pinsker = math::sqrt(kl / 2.0) + 1e-10 - tv;
        let transport = diameter * tv + 1e-10 - w1;
        report.record(pinsker.min(transport));
    }
    Ok(report)
}

/// `|E T Z1 - E T Z2|_inf <= gamma |E Z1 - E Z2|_inf` for the exact backup,
/// with stochastic rewards and random policies.
pub fn check_expectation_contraction(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = seeded_rng(seed);
    let mut report = PropertyReport::new("expectation_contraction", seed);
    for _ in 0..trials {
        let stochastic = rng.gen_bool(0.5);
        let mdp = random_small_mdp(&mut rng, 5, 3, stochastic);
        let n = rng.gen_range(2..=12);
        let grid = random_grid(&mut rng, n);
        let z1 = random_table(&mut rng, &mdp, &grid);
        let z2 = random_table(&mut rng, &mdp, &grid);
        let pi = random_policy(&mut rng, mdp.n_states(), mdp.n_actions());
        let t1 = ops::distributional_backup(&mdp, &z1, &pi, false)?;
        let t2 = ops::distributional_backup(&mdp, &z2, &pi, false)?;
        let before = z1.expectations().sup_distance(&z2.expectations());
        let after = t1.expectations().sup_distance(&t2.expectations());
        report.record(mdp.gamma() * before + 1e-10 - after);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Decomposed loss identity

/// Random target `p` with an unclipped exact decomposition at `eps`.
fn unclipped_triple(rng: &mut Rng, grid: &[f64]) -> (CategoricalDist, f64, dist::Decomposition) {
    loop {
        let eps = rng.gen_range(0.05..0.95);
        let k = rng.gen_range(0..grid.len());
        let mu = random_probs(rng, grid.len());
        let probs: Vec<f64> =
            mu.iter().enumerate().map(|(i, &m)| eps * m + if i == k { 1.0 - eps } else { 0.0 }).collect();
        let p = CategoricalDist::new(grid.to_vec(), probs).expect("valid by construction");
        let d = dist::decompose_exact(&p, eps).expect("eps in (0, 1)");
        if !d.clipped {
            return (p, eps, d);
        }
    }
}

/// Grid points `q` of the open 2-simplex with denominator 200.
fn simplex_grid() -> impl Iterator<Item = [f64; 3]> {
    const N: usize = 200;
    (1..N).flat_map(|i| (1..N - i).map(move |j| [i as f64 / N as f64, j as f64 / N as f64, (N - i - j) as f64 / N as f64]))
}

/// Number of trials in [`check_prop3_identity`] that also scan the simplex grid.
const ARGMIN_SCANS: usize = 10;

/// `(1 - eps)(-ln q_m) + eps H(mu, q) = H(p, q)` on unclipped random
/// triples (1e-12, also through the agents' decomposed loss), and equal
/// argmins of both forms over a 200-step simplex grid on 3 atoms.
pub fn check_prop3_identity(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = seeded_rng(seed);
    let mut report = PropertyReport::new("prop3_identity", seed);
    for trial in 0..trials {
        let n = rng.gen_range(3..=12);
        let grid = dist::uniform_grid(-1.0, 1.0, n);
        let (p, eps, d) = unclipped_triple(&mut rng, &grid);
        let q = random_dist(&mut rng, &grid);
        let whole = dist::cross_entropy(&p, &q)?;
        let split = (1.0 - eps) * -math::ln(q.probs()[d.bin]) + eps * dist::cross_entropy(&d.mu, &q)?;
        let loss = (1.0 - eps) * decomposed_ce_loss(&p, &q, eps)?;
        let mut margin = 1e-12 - (split - whole).abs().max((loss - whole).abs());
        if trial < ARGMIN_SCANS {
            margin = margin.min(argmin_agreement(&mut rng)?);
        }
        report.record(margin);
    }
    Ok(report)
}

/// Scans the simplex grid for the minimizers of `H(p, q)` and of the
/// decomposed form. Slack is `1e-12` when the argmins coincide, and
/// otherwise `1e-12` minus the gap between the two forms' values at the
/// decomposed argmin (a tie under rounding still passes).
fn argmin_agreement(rng: &mut Rng) -> Result<f64> {
    let grid = [-1.0, 0.0, 1.0];
    let (p, eps, d) = unclipped_triple(rng, &grid);
    let mut best_whole = (f64::INFINITY, [0.0; 3]);
    let mut best_split = (f64::INFINITY, [0.0; 3]);
    for q in simplex_grid() {
        let whole: f64 = -(0..3).map(|i| p.probs()[i] * math::ln(q[i])).sum::<f64>();
        let cross_mu: f64 = -(0..3).map(|i| d.mu.probs()[i] * math::ln(q[i])).sum::<f64>();
        let split = (1.0 - eps) * -math::ln(q[d.bin]) + eps * cross_mu;
        if whole < best_whole.0 {
            best_whole = (whole, q);
        }
        if split < best_split.0 {
            best_split = (split, q);
        }
    }
    if best_whole.1 == best_split.1 {
        return Ok(1e-12);
    }
    let q = best_split.1;
    let whole_at_split: f64 = -(0..3).map(|i| p.probs()[i] * math::ln(q[i])).sum::<f64>();
    Ok(1e-12 - (whole_at_split - best_whole.0).abs())
}

// ---------------------------------------------------------------------------
// DERPI

const DERPI_LAMBDAS: [f64; 3] = [0.0, 0.3, 0.7];

/// On random MDPs with at most 6 states and 3 actions: DERPI at `lambda = 0`
/// returns the enumerated optimal policy, and every DERPI trace for
/// `lambda` in {0, 0.3, 0.7} is pairwise nondecreasing within 1e-9.
pub fn check_derpi_policy(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = seeded_rng(seed);
    let mut report = PropertyReport::new("derpi_policy", seed);
    for _ in 0..trials {
        let mdp = random_small_mdp(&mut rng, 6, 3, false);
        let (optimal, _) = enumerate_optimal(&mdp);
        let mut margin = f64::INFINITY;
        for lambda in DERPI_LAMBDAS {
            let result = ops::derpi(&mdp, &DerpiConfig::new(lambda))?;
            if lambda == 0.0 {
                let found = result.policy.greedy_actions();
                margin = margin.min(if found == optimal { 0.0 } else { -1.0 });
            }
            margin = margin.min(trace_slack(&result.trace) + 1e-9);
        }
        report.record(margin);
    }
    Ok(report)
}

/// Smallest `q_{k+1}(s, a) - q_k(s, a)` over a trace (infinity when it has one entry).
pub fn trace_slack(trace: &[QTable]) -> f64 {
    trace
        .windows(2)
        .flat_map(|w| w[1].values().iter().zip(w[0].values()).map(|(b, a)| b - a).collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min)
}

/// Tolerance of the evaluations compared in [`check_corrected_reward`].
const CORRECTED_TOL: f64 = 1e-10;

/// The der evaluation fixed point of a random policy equals the exact
/// values of that policy on the MDP with rewards `r + gamma f(H)`, within
/// ten times the evaluation tolerance.
pub fn check_corrected_reward(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = seeded_rng(seed);
    let mut report = PropertyReport::new("corrected_reward", seed);
    for _ in 0..trials {
        let mdp = random_small_mdp(&mut rng, 6, 3, false);
        let pi = random_policy(&mut rng, mdp.n_states(), mdp.n_actions());
        let config = DerpiConfig::new(rng.gen_range(0.0..=1.0));
        let grid = config.grid_for(&mdp);
        let (reg, _) = ops::regularizer_for(&mdp, &pi, &grid, &config)?;
        let q = ops::policy_evaluation(&mdp, &pi, Backup::Der(&reg), CORRECTED_TOL)?;
        let oracle = solve_q(&mdp, &pi, &reg.corrected_rewards(&mdp)?);
        report.record(10.0 * CORRECTED_TOL - q.sup_distance(&oracle));
    }
    Ok(report)
}

/// [`check_derpi_policy`] and [`check_corrected_reward`] merged into one
/// report (the corrected-reward part runs `trials / 2` instances, at least one).
pub fn check_derpi(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut report = check_derpi_policy(trials, seed)?;
    let corrected = check_corrected_reward((trials / 2).max(1), seed.wrapping_add(1))?;
    report.merge(&corrected);
    report.name = "derpi";
    Ok(report)
}
