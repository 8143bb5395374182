//! Value-distribution representations and the exact metrics between them.
//!
//! [`CategoricalDist`] holds probability mass on an ascending atom grid; most
//! divergences require two distributions to share the *same* grid and return
//! [`Error::AtomMismatch`] otherwise. No implicit re-gridding happens anywhere:
//! use [`project_categorical`] explicitly when grids differ.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Tolerance on the total mass of a categorical distribution.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Probability masses on a strictly ascending grid of atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl CategoricalDist {
    /// Validates and builds a distribution.
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms"));
        }
        if atoms.len() != probs.len() {
            return Err(Error::InvalidDistribution("atoms and probs differ in length"));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite atom"));
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDistribution("atoms not strictly ascending"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDistribution("negative or non-finite mass"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution("masses do not sum to one"));
        }
        Ok(Self { atoms, probs })
    }

    /// Internal constructor for results that are valid by construction.
    pub(crate) fn from_parts(atoms: Vec<f64>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(atoms.len(), probs.len());
        debug_assert!(atoms.windows(2).all(|w| w[0] < w[1]));
        Self { atoms, probs }
    }

    /// A unit point mass at `atom`.
    pub fn dirac(atom: f64) -> Self {
        Self::from_parts(alloc::vec![atom], alloc::vec![1.0])
    }

    /// A point mass on bin `index` of `grid`.
    pub fn dirac_on(grid: &[f64], index: usize) -> Self {
        let mut probs = alloc::vec![0.0; grid.len()];
        probs[index] = 1.0;
        Self::from_parts(grid.to_vec(), probs)
    }

    /// Equal mass on every atom of `grid`.
    pub fn uniform(grid: &[f64]) -> Self {
        let n = grid.len() as f64;
        Self::from_parts(grid.to_vec(), alloc::vec![1.0 / n; grid.len()])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// True when both distributions live on bitwise-identical grids.
    pub fn same_grid(&self, other: &Self) -> bool {
        self.atoms == other.atoms
    }

    pub fn mean(&self) -> f64 {
        expectation(self)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .zip(&self.probs)
            .map(|(&a, &p)| p * (a - m) * (a - m))
            .sum()
    }

    /// Right-continuous CDF `P(Z <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a <= x);
        self.probs[..k].iter().sum()
    }

    /// Left limit `P(Z < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a < x);
        self.probs[..k].iter().sum()
    }
}

/// Evenly spaced grid of `n` atoms spanning `[v_min, v_max]`, endpoints exact.
pub fn uniform_grid(v_min: f64, v_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1, "grid needs at least one atom");
    if n == 1 {
        return alloc::vec![v_min];
    }
    let step = (v_max - v_min) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| v_min + step * i as f64).collect();
    grid[n - 1] = v_max;
    grid
}

pub fn expectation(d: &CategoricalDist) -> f64 {
    d.atoms.iter().zip(&d.probs).map(|(&a, &p)| a * p).sum()
}

/// Shannon entropy in nats.
pub fn entropy(d: &CategoricalDist) -> f64 {
    -d.probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * math::ln(p))
        .sum::<f64>()
}

fn require_shared_grid(p: &CategoricalDist, q: &CategoricalDist) -> Result<()> {
    if p.same_grid(q) {
        Ok(())
    } else {
        Err(Error::AtomMismatch)
    }
}

/// `KL(p || q)` in nats over bins where `p` is positive.
pub fn kl_divergence(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    require_shared_grid(p, q)?;
    let mut kl = 0.0;
    for (bin, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::AbsoluteContinuity { bin });
            }
            kl += pi * math::ln(pi / qi);
        }
    }
    Ok(kl.max(0.0))
}

/// Cross entropy `H(p, q) = -sum p ln q`.
pub fn cross_entropy(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    require_shared_grid(p, q)?;
    let mut h = 0.0;
    for (bin, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::AbsoluteContinuity { bin });
            }
            h -= pi * math::ln(qi);
        }
    }
    Ok(h)
}

pub fn total_variation(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    require_shared_grid(p, q)?;
    let l1: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * l1)
}

/// Exact `W_order` distance between two categorical laws, computed from
/// their piecewise-constant quantile functions. Grids may differ.
pub fn wasserstein(p: &CategoricalDist, q: &CategoricalDist, order: u32) -> f64 {
    assert!(order >= 1, "Wasserstein order must be positive");
    let (n, m) = (p.len(), q.len());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut cp, mut cq) = (p.probs[0], q.probs[0]);
    let mut level = 0.0;
    let mut total = 0.0;
    loop {
        let next = cp.min(cq);
        if next > level {
            let gap = (p.atoms[i] - q.atoms[j]).abs();
            total += (next - level) * pow_u(gap, order);
            level = next;
        }
        if cp <= cq {
            i += 1;
            if i == n {
                break;
            }
            cp += p.probs[i];
        } else {
            j += 1;
            if j == m {
                break;
            }
            cq += q.probs[j];
        }
    }
    if order == 1 {
        total
    } else {
        math::powf(total, 1.0 / f64::from(order))
    }
}

fn pow_u(x: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, _| acc * x)
}

/// Cramér (l2 CDF) distance, evaluated on the union of both grids.
pub fn cramer_distance(p: &CategoricalDist, q: &CategoricalDist) -> f64 {
    let mut grid: Vec<f64> = p.atoms.iter().chain(&q.atoms).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut sum = 0.0;
    for w in grid.windows(2) {
        let diff = p.cdf(w[0]) - q.cdf(w[0]);
        sum += diff * diff * (w[1] - w[0]);
    }
    math::sqrt(sum)
}

/// Projects `src` onto `target_atoms` by splitting each source atom's mass
/// linearly between its two neighbouring target atoms. Mass outside the
/// target support lands on the boundary atoms.
pub fn project_categorical(src: &CategoricalDist, target_atoms: &[f64]) -> CategoricalDist {
    project_weighted(src.atoms.iter().copied().zip(src.probs.iter().copied()), target_atoms)
}

/// Projection of an arbitrary weighted atom list; used by the backups to
/// avoid materializing the unprojected mixture.
pub(crate) fn project_weighted(
    items: impl IntoIterator<Item = (f64, f64)>,
    target: &[f64],
) -> CategoricalDist {
    let mut out = alloc::vec![0.0; target.len()];
    for (x, w) in items {
        accumulate_projected(&mut out, target, x, w);
    }
    CategoricalDist::from_parts(target.to_vec(), out)
}

#[inline]
pub(crate) fn accumulate_projected(out: &mut [f64], target: &[f64], x: f64, w: f64) {
    let last = target.len() - 1;
    if x <= target[0] {
        out[0] += w;
    } else if x >= target[last] {
        out[last] += w;
    } else {
        let upper = target.partition_point(|&t| t <= x);
        let lower = upper - 1;
        if target[lower] == x {
            out[lower] += w;
        } else {
            let frac = (x - target[lower]) / (target[upper] - target[lower]);
            let up = w * frac;
            out[upper] += up;
            out[lower] += w - up;
        }
    }
}

/// Index of the atom nearest to the expectation, lower index on ties.
pub fn expectation_bin(d: &CategoricalDist) -> usize {
    nearest_atom(&d.atoms, expectation(d))
}

pub(crate) fn nearest_atom(atoms: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_gap = (atoms[0] - x).abs();
    for (i, &a) in atoms.iter().enumerate().skip(1) {
        let gap = (a - x).abs();
        if gap < best_gap {
            best = i;
            best_gap = gap;
        }
    }
    best
}

/// Result of splitting a distribution into a point mass at its expectation
/// bin and a remainder `mu`: `p = (1 - epsilon) * delta_bin + epsilon * mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub epsilon: f64,
    pub expectation: f64,
    pub bin: usize,
    pub mu: CategoricalDist,
    /// Set when the raw remainder had negative mass that was clipped; the
    /// reconstruction identity no longer holds in that case.
    pub clipped: bool,
}

impl Decomposition {
    /// `(1 - epsilon) * delta_bin + epsilon * mu` on the remainder's grid.
    pub fn reconstruct(&self) -> CategoricalDist {
        let probs = self
            .mu
            .probs
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let dirac = if i == self.bin { 1.0 - self.epsilon } else { 0.0 };
                dirac + self.epsilon * m
            })
            .collect();
        CategoricalDist::from_parts(self.mu.atoms.clone(), probs)
    }
}

/// Solves `p = (1 - epsilon) * delta_m + epsilon * mu` for `mu`, with `m` the
/// expectation bin of `p`. Negative remainder mass is clipped and the
/// result renormalized, with [`Decomposition::clipped`] set.
pub fn decompose_exact(p: &CategoricalDist, epsilon: f64) -> Result<Decomposition> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let bin = expectation_bin(p);
    let mut mu: Vec<f64> = p
        .probs
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            let dirac = if i == bin { 1.0 - epsilon } else { 0.0 };
            (pi - dirac) / epsilon
        })
        .collect();
    let clipped = mu.iter().any(|&m| m < 0.0);
    if clipped {
        for m in &mut mu {
            *m = m.max(0.0);
        }
    }
    let total: f64 = mu.iter().sum();
    for m in &mut mu {
        *m /= total;
    }
    Ok(Decomposition {
        epsilon,
        expectation: expectation(p),
        bin,
        mu: CategoricalDist::from_parts(p.atoms.clone(), mu),
        clipped,
    })
}

/// `(1 - epsilon) * delta_m + epsilon * p` on `p`'s grid, `m` the expectation
/// bin of `p`. `epsilon = 1` returns `p`, `epsilon = 0` the point mass.
pub fn mix_with_dirac(p: &CategoricalDist, epsilon: f64) -> Result<CategoricalDist> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let bin = expectation_bin(p);
    let probs = p
        .probs
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            let dirac = if i == bin { 1.0 - epsilon } else { 0.0 };
            epsilon * pi + dirac
        })
        .collect();
    Ok(CategoricalDist::from_parts(p.atoms.clone(), probs))
}

/// Quantile representation: `values[i]` is the quantile at `fractions[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileDist {
    fractions: Vec<f64>,
    values: Vec<f64>,
}

impl QuantileDist {
    pub fn new(fractions: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() || fractions.len() != values.len() {
            return Err(Error::InvalidDistribution("fractions and values differ in length"));
        }
        if fractions[0] <= 0.0 || *fractions.last().unwrap() > 1.0 {
            return Err(Error::InvalidDistribution("fractions outside (0, 1]"));
        }
        if fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDistribution("fractions not strictly ascending"));
        }
        if values.windows(2).any(|w| w[0] > w[1]) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution("quantile values not nondecreasing"));
        }
        Ok(Self { fractions, values })
    }

    /// Builds without checking monotonicity of `values`; learned quantile
    /// heads are not guaranteed to be sorted.
    pub fn new_unsorted(fractions: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(fractions.len(), values.len());
        Self { fractions, values }
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean of a quantile representation, weighting each value by the width
/// `tau_i - tau_{i-1}` of its fraction interval (`tau_0 = 0`).
pub fn quantile_expectation(d: &QuantileDist) -> f64 {
    let mut prev = 0.0;
    let mut total = 0.0;
    for (&tau, &v) in d.fractions.iter().zip(&d.values) {
        total += (tau - prev) * v;
        prev = tau;
    }
    total
}
