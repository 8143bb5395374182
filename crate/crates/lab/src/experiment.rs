//! Seeded experiment execution: single configurations, the mixed-target
//! sweep and the actor-critic ablation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use derl_core::agents::{run_agent, AcVariant, AgentConfig, RunRecord, RunSchedule, Variant};
use derl_core::mdp::TabularMdp;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Series name used in CSV files and plots.
    pub label: String,
    pub record: RunRecord,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn seed(&self) -> u64 {
        self.record.seed
    }
}

fn worker_count(jobs: usize) -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs).max(1)
}

/// Runs `variant` once per seed on a pool of worker threads. Results come
/// back in seed order and do not depend on the number of workers.
pub fn run_seeds(
    env: &TabularMdp,
    variant: Variant,
    agent: &AgentConfig,
    schedule: &RunSchedule,
    seeds: &[u64],
    label: &str,
) -> Result<Vec<RunResult>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..worker_count(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let started = Instant::now();
                let outcome = run_agent(env, variant, agent, schedule, seed)
                    .map(|record| RunResult { label: label.to_string(), record, wall_time: started.elapsed() })
                    .map_err(LabError::from);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|slot| slot.expect("every seed is claimed by a worker"))
        .collect()
}

/// One run per configured seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let env = config.build_env()?;
    run_seeds(&env, config.variant, &config.agent, &config.schedule, &config.seeds, config.variant.name())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub seed: u64,
    pub auc: f64,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    /// One row per `(epsilon, seed)`, in input order.
    pub rows: Vec<SweepRow>,
    /// Mean AUC over seeds per epsilon.
    pub means: Vec<(f64, f64)>,
    /// Spearman correlation between epsilon and mean AUC (NaN when either
    /// side is constant).
    pub spearman: f64,
    pub runs: Vec<RunResult>,
}

/// Label of the mixed-target run at `epsilon`.
pub fn sweep_label(epsilon: f64) -> String {
    format!("fzi-mix eps={epsilon}")
}

/// Trains the mixed-target categorical agent at every `epsilon` for every
/// seed. The base variant must be a categorical FZI agent.
pub fn sweep_epsilon(config: &ExperimentConfig, epsilons: &[f64]) -> Result<SweepTable> {
    if !matches!(config.variant, Variant::FziCe | Variant::FziDecomposed | Variant::FziMix) {
        return Err(LabError::Invalid(format!(
            "the epsilon sweep needs a categorical FZI variant, got `{}`",
            config.variant.name()
        )));
    }
    if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(LabError::Invalid("sweep epsilons must be a nonempty list in [0, 1]".into()));
    }
    config.validate()?;
    let env = config.build_env()?;
    let mut rows = Vec::new();
    let mut means = Vec::new();
    let mut runs = Vec::new();
    for &epsilon in epsilons {
        let mut agent = config.agent.clone();
        agent.mix_epsilon = epsilon;
        let results = run_seeds(&env, Variant::FziMix, &agent, &config.schedule, &config.seeds, &sweep_label(epsilon))?;
        let aucs: Vec<f64> = results.iter().map(|r| r.record.auc()).collect();
        rows.extend(results.iter().zip(&aucs).map(|(r, &auc)| SweepRow { epsilon, seed: r.seed(), auc }));
        means.push((epsilon, mean(&aucs)));
        runs.extend(results);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = means.iter().copied().unzip();
    Ok(SweepTable { rows, means, spearman: spearman(&xs, &ys), runs })
}

/// Runs the four actor-critic variants on every seed.
pub fn ablate_ac(config: &ExperimentConfig) -> Result<Vec<(AcVariant, Vec<RunResult>)>> {
    config.validate()?;
    let env = config.build_env()?;
    [AcVariant::Ac, AcVariant::AcVe, AcVariant::AcRe, AcVariant::AcReVe]
        .into_iter()
        .map(|v| {
            let variant = Variant::from(v);
            run_seeds(&env, variant, &config.agent, &config.schedule, &config.seeds, variant.name()).map(|r| (v, r))
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// 1-based ranks; tied values share the average of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

/// Pearson correlation of the ranks of `xs` and `ys`.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
