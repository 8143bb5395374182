//! Finite MDPs and the toy environments used by the operators, the agents
//! and the certificates.
//!
//! Rewards are attached to `(state, action)` pairs and may be random (a
//! [`CategoricalDist`] over reward values) but never depend on the sampled
//! next state. Terminal states are absorbing self-loops with zero reward.

use alloc::vec::Vec;


use crate::dist::CategoricalDist;
use crate::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-12;

/// Reward of a `(state, action)` pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Reward {
    Fixed(f64),
    Dist(CategoricalDist),
}

impl Reward {
    pub fn mean(&self) -> f64 {
        match self {
            Reward::Fixed(r) => *r,
            Reward::Dist(d) => d.mean(),
        }
    }

    /// `(value, probability)` outcomes with positive probability.
    pub fn outcomes(&self) -> Vec<(f64, f64)> {
        match self {
            Reward::Fixed(r) => alloc::vec![(*r, 1.0)],
            Reward::Dist(d) => d
                .atoms()
                .iter()
                .zip(d.probs())
                .filter(|(_, &p)| p > 0.0)
                .map(|(&a, &p)| (a, p))
                .collect(),
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            Reward::Fixed(r) => (*r, *r),
            Reward::Dist(d) => (d.atoms()[0], *d.atoms().last().unwrap()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Reward::Fixed(_))
    }
}

/// A finite MDP with transition tensor `P[s][a][s']` and reward table `R[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<Reward>,
    gamma: f64,
    terminal: Vec<bool>,
    start: usize,
}

impl TabularMdp {
    /// Validates and builds an MDP. `transition` is laid out as
    /// `[s][a][s']`, `reward` as `[s][a]`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<Reward>,
        gamma: f64,
        terminal: Vec<bool>,
        start: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("empty state or action set"));
        }
        let sa = n_states * n_actions;
        if transition.len() != sa * n_states {
            return Err(Error::ShapeMismatch { expected: sa * n_states, found: transition.len() });
        }
        if reward.len() != sa {
            return Err(Error::ShapeMismatch { expected: sa, found: reward.len() });
        }
        if terminal.len() != n_states {
            return Err(Error::ShapeMismatch { expected: n_states, found: terminal.len() });
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidMdp("gamma must lie in (0, 1)"));
        }
        if start >= n_states {
            return Err(Error::InvalidMdp("start state out of range"));
        }
        for row in transition.chunks(n_states) {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidMdp("negative transition probability"));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidMdp("transition row does not sum to one"));
            }
        }
        let mdp = Self { n_states, n_actions, transition, reward, gamma, terminal, start };
        for s in (0..n_states).filter(|&s| mdp.terminal[s]) {
            for a in 0..n_actions {
                if mdp.next_probs(s, a)[s] != 1.0 || mdp.reward(s, a) != &Reward::Fixed(0.0) {
                    return Err(Error::InvalidMdp("terminal state must self-loop with zero reward"));
                }
            }
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminals(&self) -> &[bool] {
        &self.terminal
    }

    /// `P[s][a][..]`.
    pub fn next_probs(&self, s: usize, a: usize) -> &[f64] {
        let off = (s * self.n_actions + a) * self.n_states;
        &self.transition[off..off + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> &Reward {
        &self.reward[s * self.n_actions + a]
    }

    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.reward(s, a).mean()
    }

    pub fn has_deterministic_rewards(&self) -> bool {
        self.reward.iter().all(Reward::is_deterministic)
    }

    /// Smallest and largest reward outcome over all pairs.
    pub fn reward_range(&self) -> (f64, f64) {
        self.reward.iter().map(Reward::bounds).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), (a, b)| (lo.min(a), hi.max(b)),
        )
    }

    /// Return support `[R_min / (1 - gamma), R_max / (1 - gamma)]`.
    pub fn return_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.reward_range();
        (lo / (1.0 - self.gamma), hi / (1.0 - self.gamma))
    }

    /// Same MDP with every reward replaced by `f(s, a, reward)`; used for
    /// the corrected-reward construction.
    pub fn with_rewards(&self, mut f: impl FnMut(usize, usize, &Reward) -> Reward) -> Result<Self> {
        let reward = (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| f(s, a, self.reward(s, a)))
            .collect();
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            reward,
            self.gamma,
            self.terminal.clone(),
            self.start,
        )
    }

    pub(crate) fn check_pair(&self, s: usize, a: usize) -> Result<()> {
        if s < self.n_states && a < self.n_actions {
            Ok(())
        } else {
            Err(Error::InvalidStateAction { state: s, action: a })
        }
    }
}

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
}

/// A recorded sequence of steps.
pub type Trajectory = Vec<Transition>;

/// Draws `(reward, next_state, done)` for `(s, a)`. Terminal states return
/// `(0, s, true)` without consuming randomness.
pub fn sample_transition<R: rand::Rng + ?Sized>(
    mdp: &TabularMdp,
    s: usize,
    a: usize,
    rng: &mut R,
) -> Result<(f64, usize, bool)> {
    mdp.check_pair(s, a)?;
    if mdp.is_terminal(s) {
        return Ok((0.0, s, true));
    }
    let next = sample_index(mdp.next_probs(s, a), rng);
    let reward = match mdp.reward(s, a) {
        Reward::Fixed(r) => *r,
        Reward::Dist(d) => d.atoms()[sample_index(d.probs(), rng)],
    };
    Ok((reward, next, mdp.is_terminal(next)))
}

fn sample_index<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    if let Some(i) = probs.iter().position(|&p| p == 1.0) {
        return i;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Chain actions.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Bandit actions.
pub const SAFE: usize = 0;
pub const RISKY: usize = 1;

/// Grid actions.
pub const UP: usize = 0;
pub const GRID_RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const GRID_LEFT: usize = 3;

/// Reward for leaving the chain through its left end.
pub const LEFT_EXIT_REWARD: f64 = 0.01;

/// `n`-state chain with actions `{LEFT, RIGHT}`, starting in state 0.
///
/// State `n - 1` is the absorbing terminal and state `n - 2` the goal cell:
/// any action there pays 1 and ends the episode. `LEFT` in state 0 leaves
/// through the left end, paying [`LEFT_EXIT_REWARD`]. Interior moves go the
/// intended way with probability `1 - slip` and the opposite way otherwise;
/// slipping off the left end terminates with no reward.
pub fn make_chain(n: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    chain_with_goal(n, slip, gamma, Reward::Fixed(1.0))
}

/// [`make_chain`] whose goal pays `1 - spread` or `1 + spread` with equal
/// probability: same mean, higher dispersion.
pub fn make_risky_chain(n: usize, slip: f64, spread: f64, gamma: f64) -> Result<TabularMdp> {
    if !(spread > 0.0) {
        return Err(Error::InvalidMdp("spread must be positive"));
    }
    let goal = CategoricalDist::new(alloc::vec![1.0 - spread, 1.0 + spread], alloc::vec![0.5, 0.5])?;
    chain_with_goal(n, slip, gamma, Reward::Dist(goal))
}

fn chain_with_goal(n: usize, slip: f64, gamma: f64, goal_reward: Reward) -> Result<TabularMdp> {
    if n < 2 {
        return Err(Error::InvalidMdp("chain needs at least two states"));
    }
    if !(0.0..=0.5).contains(&slip) {
        return Err(Error::InvalidMdp("slip must lie in [0, 0.5]"));
    }
    let (actions, sink, goal) = (2, n - 1, n - 2);
    let mut transition = alloc::vec![0.0; n * actions * n];
    let mut reward = alloc::vec![Reward::Fixed(0.0); n * actions];
    let mut terminal = alloc::vec![false; n];
    terminal[sink] = true;
    let idx = |s: usize, a: usize, t: usize| (s * actions + a) * n + t;
    // Left of state 0 is the sink.
    let step = |s: usize, dir: isize| -> usize {
        if s == 0 && dir < 0 {
            sink
        } else {
            (s as isize + dir) as usize
        }
    };
    for s in 0..n {
        for a in 0..actions {
            if s == sink || s == goal {
                transition[idx(s, a, sink)] = 1.0;
                if s == goal {
                    reward[s * actions + a] = goal_reward.clone();
                }
                continue;
            }
            if s == 0 && a == LEFT {
                transition[idx(s, a, sink)] = 1.0;
                reward[s * actions + a] = Reward::Fixed(LEFT_EXIT_REWARD);
                continue;
            }
            let dir = if a == RIGHT { 1 } else { -1 };
            transition[idx(s, a, step(s, dir))] += 1.0 - slip;
            transition[idx(s, a, step(s, -dir))] += slip;
        }
    }
    TabularMdp::new(n, actions, transition, reward, gamma, terminal, 0)
}

/// Cliff-walking grid, `width` columns by `height` rows, row 0 at the top.
///
/// Start is the bottom-left cell, goal the bottom-right cell, and the cells
/// between them on the bottom row are the cliff. Entering the goal pays 1
/// and terminates; stepping into the cliff pays `fall_penalty` and resets
/// to start. Moves are deterministic and bumping a wall stays put. Goal and
/// cliff cells are absorbing (cliff cells are unreachable).
pub fn make_cliff_grid(width: usize, height: usize, fall_penalty: f64, gamma: f64) -> Result<TabularMdp> {
    if width < 3 || height < 2 {
        return Err(Error::InvalidMdp("cliff grid needs width >= 3 and height >= 2"));
    }
    let n = width * height;
    let actions = 4;
    let cell = |col: usize, row: usize| row * width + col;
    let bottom = height - 1;
    let start = cell(0, bottom);
    let goal = cell(width - 1, bottom);
    let is_cliff = |s: usize| s / width == bottom && s != start && s != goal;
    let mut transition = alloc::vec![0.0; n * actions * n];
    let mut reward = alloc::vec![Reward::Fixed(0.0); n * actions];
    let terminal: Vec<bool> = (0..n).map(|s| s == goal || is_cliff(s)).collect();
    for s in 0..n {
        let (col, row) = (s % width, s / width);
        for a in 0..actions {
            let off = (s * actions + a) * n;
            if terminal[s] {
                transition[off + s] = 1.0;
                continue;
            }
            let target = match a {
                UP if row > 0 => cell(col, row - 1),
                DOWN if row + 1 < height => cell(col, row + 1),
                GRID_LEFT if col > 0 => cell(col - 1, row),
                GRID_RIGHT if col + 1 < width => cell(col + 1, row),
                _ => s,
            };
            if is_cliff(target) {
                transition[off + start] = 1.0;
                reward[s * actions + a] = Reward::Fixed(fall_penalty);
            } else {
                transition[off + target] = 1.0;
                if target == goal {
                    reward[s * actions + a] = Reward::Fixed(1.0);
                }
            }
        }
    }
    TabularMdp::new(n, actions, transition, reward, gamma, terminal, start)
}

/// Discount used by [`make_risky_bandit`]; episodes last one step so it
/// only matters for bootstrapping from the terminal state.
pub const BANDIT_GAMMA: f64 = 0.9;

/// One decision state (0) plus an absorbing terminal (1). `SAFE` pays
/// `mean`; `RISKY` pays `mean - spread` or `mean + spread` with equal
/// probability. Both actions end the episode.
pub fn make_risky_bandit(mean: f64, spread: f64) -> Result<TabularMdp> {
    if !(spread > 0.0) {
        return Err(Error::InvalidMdp("spread must be positive"));
    }
    let risky = CategoricalDist::new(alloc::vec![mean - spread, mean + spread], alloc::vec![0.5, 0.5])?;
    let transition = alloc::vec![
        0.0, 1.0, 0.0, 1.0, // decision state
        0.0, 1.0, 0.0, 1.0, // terminal
    ];
    let reward = alloc::vec![
        Reward::Fixed(mean),
        Reward::Dist(risky),
        Reward::Fixed(0.0),
        Reward::Fixed(0.0),
    ];
    TabularMdp::new(2, 2, transition, reward, BANDIT_GAMMA, alloc::vec![false, true], 0)
}

/// Random MDP for property checks: rewards uniform in `[-1, 1]`, dense
/// random transition rows, no terminal states.
pub fn random_mdp<R: rand::Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    stochastic_rewards: bool,
    rng: &mut R,
) -> TabularMdp {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let row: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>() + 0.05).collect();
        let total: f64 = row.iter().sum();
        let mut row: Vec<f64> = row.iter().map(|p| p / total).collect();
        // Put the rounding residue on the largest entry so rows sum to one.
        let residue = 1.0 - row.iter().sum::<f64>();
        let k = crate::math::argmax(&row);
        row[k] += residue;
        transition.extend(row);
    }
    let reward = (0..n_states * n_actions)
        .map(|_| {
            let r: f64 = rng.gen_range(-1.0..=1.0);
            if stochastic_rewards {
                let spread: f64 = rng.gen_range(0.0..=0.5);
                let lo = (r - spread).max(-1.0);
                let hi = (r + spread).min(1.0);
                if hi > lo {
                    Reward::Dist(CategoricalDist::from_parts(alloc::vec![lo, hi], alloc::vec![0.5, 0.5]))
                } else {
                    Reward::Fixed(r)
                }
            } else {
                Reward::Fixed(r)
            }
        })
        .collect();
    TabularMdp::new(n_states, n_actions, transition, reward, gamma, alloc::vec![false; n_states], 0)
        .expect("random MDP is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_sums_ok(mdp: &TabularMdp) -> bool {
        (0..mdp.n_states()).all(|s| {
            (0..mdp.n_actions()).all(|a| (mdp.next_probs(s, a).iter().sum::<f64>() - 1.0).abs() <= 1e-12)
        })
    }

    #[test]
    fn two_state_chain() {
        let mdp = make_chain(2, 0.0, 0.9).unwrap();
        assert_eq!(mdp.n_states(), 2);
        assert!(mdp.is_terminal(1));
        assert_eq!(mdp.next_probs(0, RIGHT), &[0.0, 1.0]);
        assert_eq!(mdp.expected_reward(0, RIGHT), 1.0);
        let mut rng = crate::seeded_rng(1);
        assert_eq!(sample_transition(&mdp, 0, RIGHT, &mut rng).unwrap(), (1.0, 1, true));
    }

    #[test]
    fn constructors_are_row_stochastic() {
        assert!(row_sums_ok(&make_chain(5, 0.1, 0.9).unwrap()));
        assert!(row_sums_ok(&make_chain(7, 0.5, 0.9).unwrap()));
        assert!(row_sums_ok(&make_risky_chain(6, 0.2, 0.5, 0.9).unwrap()));
        assert!(row_sums_ok(&make_cliff_grid(5, 4, -1.0, 0.9).unwrap()));
        assert!(row_sums_ok(&make_risky_bandit(1.0, 1.0).unwrap()));
        let mut rng = crate::seeded_rng(3);
        assert!(row_sums_ok(&random_mdp(5, 3, 0.9, true, &mut rng)));
    }

    #[test]
    fn cliff_grid_shape() {
        let mdp = make_cliff_grid(4, 3, -1.0, 0.9).unwrap();
        assert_eq!(mdp.n_states(), 12);
        for s in 0..12 {
            for a in 0..4 {
                let row = mdp.next_probs(s, a);
                assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
                assert_eq!(row.iter().filter(|&&p| p == 0.0).count(), 11);
            }
        }
        // Stepping right from start falls into the cliff.
        assert_eq!(mdp.expected_reward(mdp.start(), GRID_RIGHT), -1.0);
        assert_eq!(mdp.next_probs(mdp.start(), GRID_RIGHT)[mdp.start()], 1.0);
    }

    #[test]
    fn risky_bandit_has_equal_means() {
        let mdp = make_risky_bandit(1.0, 1.0).unwrap();
        assert_eq!(mdp.expected_reward(0, SAFE), 1.0);
        assert_eq!(mdp.expected_reward(0, RISKY), 1.0);
        match mdp.reward(0, RISKY) {
            Reward::Dist(d) => {
                assert_eq!(d.atoms(), &[0.0, 2.0]);
                assert_eq!(d.probs(), &[0.5, 0.5]);
                assert_eq!(d.variance(), 1.0);
            }
            other => panic!("unexpected reward {other:?}"),
        }
        let wide = make_risky_bandit(0.5, 3.0).unwrap();
        if let Reward::Dist(d) = wide.reward(0, RISKY) {
            assert_eq!(d.variance(), 9.0);
        }
    }

    #[test]
    fn terminal_sampling() {
        let mdp = make_chain(4, 0.2, 0.9).unwrap();
        let mut rng = crate::seeded_rng(0);
        assert_eq!(sample_transition(&mdp, 3, LEFT, &mut rng).unwrap(), (0.0, 3, true));
        assert_eq!(
            sample_transition(&mdp, 9, 0, &mut rng),
            Err(Error::InvalidStateAction { state: 9, action: 0 })
        );
    }

    #[test]
    fn deterministic_transitions_ignore_seed() {
        let mdp = make_cliff_grid(4, 3, -1.0, 0.9).unwrap();
        for seed in 0..5 {
            let mut rng = crate::seeded_rng(seed);
            assert_eq!(sample_transition(&mdp, 4, UP, &mut rng).unwrap(), (0.0, 0, false));
        }
    }

    #[test]
    fn invalid_constructions() {
        assert!(make_chain(1, 0.0, 0.9).is_err());
        assert!(make_chain(4, 0.6, 0.9).is_err());
        assert!(make_chain(4, 0.1, 1.0).is_err());
        assert!(make_cliff_grid(2, 3, -1.0, 0.9).is_err());
        assert!(make_risky_bandit(1.0, 0.0).is_err());
        let bad_terminal = TabularMdp::new(
            1,
            1,
            alloc::vec![1.0],
            alloc::vec![Reward::Fixed(1.0)],
            0.9,
            alloc::vec![true],
            0,
        );
        assert!(bad_terminal.is_err());
    }
}
