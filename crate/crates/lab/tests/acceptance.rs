//! Acceptance suite: twelve criteria, each printed as one PASS/FAIL line.
//!
//! Runs sequentially so the runtime limits are measured without other
//! tests competing for the CPU. Exits nonzero when any criterion fails.

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use derl::experiment::mean;
use derl::export::write_runs;
use derl::{run_experiment, sweep_epsilon, EnvSpec, ExperimentConfig};
use derl_core::agents::{
    self, ac_variant_run, AcVariant, AgentConfig, FziMode, QuantileTarget, RunSchedule, Variant,
};
use derl_core::dist::{self, QuantileDist};
use derl_core::mdp::{self, Transition};
use derl_core::nn::{Activation, Network};
use derl_core::ops::{self, DerpiConfig, MuSource};
use derl_core::verify::{self, PropertyReport};
use derl_core::{seeded_rng, Rng};
use rand::Rng as _;

const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn from_report(r: &PropertyReport) -> Outcome {
    outcome(r.passed(), format!("{} trials, {} failures, worst margin {:.3e}", r.trials, r.failures, r.worst_margin))
}

fn both(a: Outcome, b: Outcome) -> Outcome {
    outcome(a.pass && b.pass, format!("{}; {}", a.detail, b.detail))
}

fn probs(rng: &mut Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|p| p / total).collect()
}

// 1 ---------------------------------------------------------------------

fn decomposed_identity() -> Outcome {
    let report = verify::check_prop3_identity(1000, SEED).unwrap();
    // Independent recomputation of both sides from first principles.
    let mut rng = seeded_rng(SEED ^ 1);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 1000 {
        let n = rng.gen_range(3..12);
        let eps = rng.gen_range(0.05..0.95);
        let k = rng.gen_range(0..n);
        let mu = probs(&mut rng, n);
        let q = probs(&mut rng, n);
        let p: Vec<f64> = mu.iter().enumerate().map(|(i, m)| eps * m + if i == k { 1.0 - eps } else { 0.0 }).collect();
        let h = |a: &[f64], b: &[f64]| -> f64 { -a.iter().zip(b).map(|(x, y)| x * y.ln()).sum::<f64>() };
        let lhs = (1.0 - eps) * -q[k].ln() + eps * h(&mu, &q);
        worst = worst.max((lhs - h(&p, &q)).abs());
        done += 1;
    }
    both(from_report(&report), outcome(worst <= 1e-12, format!("independent max error {worst:.2e}")))
}

// 4 ---------------------------------------------------------------------

fn pinsker_and_transport() -> Outcome {
    let report = verify::check_pinsker_and_w1(1000, SEED + 2).unwrap();
    let mut rng = seeded_rng(SEED ^ 4);
    let mut ok = true;
    for _ in 0..1000 {
        let n = rng.gen_range(2..20);
        let grid = dist::uniform_grid(-1.0, 1.0, n);
        let (p, q) = (probs(&mut rng, n), probs(&mut rng, n));
        let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
        let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let mut cdf_gap = 0.0;
        let mut w1 = 0.0;
        for i in 0..n - 1 {
            cdf_gap += p[i] - q[i];
            w1 += cdf_gap.abs() * (grid[i + 1] - grid[i]);
        }
        ok &= tv <= (kl / 2.0).sqrt() + 1e-10 && w1 <= 2.0 * tv + 1e-10;
    }
    both(from_report(&report), outcome(ok, "independent formulas hold"))
}

// 8 ---------------------------------------------------------------------

fn central_difference(net: &Network, f: impl Fn(&Network) -> f64, h: f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.n_params())
        .map(|i| {
            let orig = net.params()[i];
            probe.params_mut()[i] = orig + h;
            let up = f(&probe);
            probe.params_mut()[i] = orig - h;
            let down = f(&probe);
            probe.params_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max |a - n| / max(1e-6, |a| + |n|)`.
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn random_batch(rng: &mut Rng, ns: usize, na: usize, len: usize) -> Vec<Transition> {
    (0..len)
        .map(|_| Transition {
            state: rng.gen_range(0..ns),
            action: rng.gen_range(0..na),
            reward: rng.gen_range(-1.0..1.0),
            next_state: rng.gen_range(0..ns),
            done: rng.gen_bool(0.3),
        })
        .collect()
}

fn gradient_checks() -> (f64, usize) {
    let mut rng = seeded_rng(SEED ^ 8);
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut record = |analytic: &[f64], numeric: &[f64]| {
        worst = worst.max(rel_error(analytic, numeric));
        checks += 1;
    };
    let h = 1e-5;
    for _ in 0..100 {
        let ns = rng.gen_range(2..5);
        let na = rng.gen_range(2..4);
        let n = rng.gen_range(3..8);
        let hidden = rng.gen_range(2..6);
        let grid = dist::uniform_grid(-3.0, 3.0, n);
        let gamma = rng.gen_range(0.5..0.99);
        let len = rng.gen_range(1..5);
        let batch = random_batch(&mut rng, ns, na, len);
        let mut cfg = AgentConfig::default();
        cfg.gamma = gamma;
        cfg.set_epsilon(rng.gen_range(0.1..0.9)).unwrap();
        cfg.lambda = rng.gen_range(0.0..=1.0);
        cfg.beta = rng.gen_range(0.0..0.5);
        cfg.quantiles = rng.gen_range(1..5);
        cfg.quantile_embedding = rng.gen_range(1..4);
        cfg.huber_kappa = rng.gen_range(0.2..2.0);
        cfg.mu_source = if rng.gen_bool(0.5) { MuSource::Decomposed } else { MuSource::WholeTarget };

        let scalar = Network::mlp(ns, &[hidden], na, Activation::Tanh, None, &mut rng).unwrap();
        let scalar_t = Network::mlp(ns, &[hidden], na, Activation::Tanh, None, &mut rng).unwrap();
        let cat = Network::mlp(ns, &[hidden], na * n, Activation::Tanh, Some(n), &mut rng).unwrap();
        let cat_t = Network::mlp(ns, &[hidden], na * n, Activation::Tanh, Some(n), &mut rng).unwrap();
        let dim = cfg.quantile_embedding;
        let quant = Network::mlp(ns + dim, &[hidden], na, Activation::Tanh, None, &mut rng).unwrap();
        let quant_t = Network::mlp(ns + dim, &[hidden], na, Activation::Tanh, None, &mut rng).unwrap();
        let policy = Network::mlp(ns, &[hidden], na, Activation::Tanh, Some(na), &mut rng).unwrap();

        let lg = agents::fqi_loss(&scalar, &scalar_t, &batch, gamma).unwrap();
        record(&lg.grads, &central_difference(&scalar, |p| agents::fqi_loss(p, &scalar_t, &batch, gamma).unwrap().loss, h));

        let eps = cfg.epsilon();
        for mode in [FziMode::VanillaCe, FziMode::Decomposed(eps), FziMode::AblationMix(eps)] {
            let lg = agents::fzi_categorical_loss(&cat, &cat_t, &batch, &grid, gamma, mode).unwrap();
            let f = |p: &Network| agents::fzi_categorical_loss(p, &cat_t, &batch, &grid, gamma, mode).unwrap().loss;
            record(&lg.grads, &central_difference(&cat, f, h));
        }

        let fractions: Vec<(Vec<f64>, Vec<f64>)> = batch
            .iter()
            .map(|_| {
                (
                    agents::sample_quantile_fractions(cfg.quantiles, &mut rng),
                    agents::sample_quantile_fractions(cfg.quantiles, &mut rng),
                )
            })
            .collect();
        for kind in [QuantileTarget::Greedy, QuantileTarget::Policy { policy: &policy, beta: cfg.beta }] {
            let lg = agents::quantile_critic_loss(&quant, &quant_t, &batch, &fractions, &cfg, kind).unwrap();
            let f = |p: &Network| agents::quantile_critic_loss(p, &quant_t, &batch, &fractions, &cfg, kind).unwrap().loss;
            record(&lg.grads, &central_difference(&quant, f, h));
        }

        let lg = agents::ac_critic_loss(&scalar, &scalar_t, &policy, &batch, gamma, cfg.beta).unwrap();
        let f = |p: &Network| agents::ac_critic_loss(p, &scalar_t, &policy, &batch, gamma, cfg.beta).unwrap().loss;
        record(&lg.grads, &central_difference(&scalar, f, h));

        let lg = agents::derac_critic_loss(&cat, &cat_t, &policy, &batch, &grid, &cfg).unwrap();
        let f = |p: &Network| agents::derac_critic_loss(p, &cat_t, &policy, &batch, &grid, &cfg).unwrap().loss;
        record(&lg.grads, &central_difference(&cat, f, h));

        let states: Vec<usize> = batch.iter().map(|t| t.state).collect();
        let qs: Vec<Vec<f64>> = states.iter().map(|_| (0..na).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let lg = agents::actor_loss(&policy, &states, &qs, cfg.beta).unwrap();
        let f = |p: &Network| agents::actor_loss(p, &states, &qs, cfg.beta).unwrap().loss;
        record(&lg.grads, &central_difference(&policy, f, h));
    }
    (worst, checks)
}

fn operator_consistency() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (name, env) in [
        ("chain", mdp::make_chain(8, 0.1, 0.9).unwrap()),
        ("cliff", mdp::make_cliff_grid(5, 3, -1.0, 0.9).unwrap()),
    ] {
        let (lo, hi) = env.return_bounds();
        let grid = dist::uniform_grid(lo, hi, 201);
        let spacing = grid[1] - grid[0];
        let q = ops::value_iteration(&env, 1e-10).unwrap();
        let z = ops::distributional_value_iteration(&env, &grid, 1e-10).unwrap();
        let gap = z.expectations().sup_distance(&q);
        ok &= gap <= spacing;
        details.push(format!("{name} gap {gap:.2e} <= spacing {spacing:.2e}"));
    }
    let (worst, checks) = gradient_checks();
    ok &= worst <= 1e-4;
    details.push(format!("{checks} gradient checks, worst relative error {worst:.2e}"));
    outcome(ok, details.join("; "))
}

// 9 ---------------------------------------------------------------------

fn derac_endpoints() -> Outcome {
    let mut rng = seeded_rng(SEED ^ 9);
    let (ns, na, n) = (3, 2, 7);
    let grid = dist::uniform_grid(-2.0, 2.0, n);
    let net = Network::mlp(ns, &[5], na * n, Activation::Tanh, Some(n), &mut rng).unwrap();
    let target = Network::mlp(ns, &[5], na * n, Activation::Tanh, Some(n), &mut rng).unwrap();
    let policy = Network::mlp(ns, &[5], na, Activation::Tanh, Some(na), &mut rng).unwrap();
    let mut cfg = AgentConfig::default();
    cfg.gamma = 0.9;
    cfg.mu_source = MuSource::WholeTarget;
    let mut ok = true;
    for batch_seed in 0..20 {
        let mut brng = seeded_rng(batch_seed);
        let batch = random_batch(&mut brng, ns, na, 6);
        let terminal: Vec<Transition> = batch.iter().map(|t| Transition { done: true, ..*t }).collect();
        for b in [&batch, &terminal] {
            cfg.lambda = 0.0;
            let l0 = agents::derac_critic_loss(&net, &target, &policy, b, &grid, &cfg).unwrap();
            cfg.lambda = 1.0;
            let l1 = agents::derac_critic_loss(&net, &target, &policy, b, &grid, &cfg).unwrap();
            let terms = agents::derac_critic_terms(&net, &target, &policy, b, &grid, &cfg).unwrap();
            ok &= l0.loss.to_bits() == terms.td.to_bits() && l0.grads == terms.td_grads;
            ok &= l1.loss.to_bits() == terms.ce.to_bits() && l1.grads == terms.ce_grads;

            // Scalar TD loss of the expectation, computed here.
            let scale = 1.0 / b.len() as f64;
            let mut td = 0.0;
            for t in b.iter() {
                let y = if t.done {
                    t.reward
                } else {
                    let pi = agents::policy_probs(&policy, t.next_state).unwrap();
                    let next = target.predict(&agents::one_hot(t.next_state, ns)).unwrap();
                    let v: f64 = next
                        .chunks(n)
                        .zip(&pi)
                        .map(|(q, p)| p * q.iter().zip(&grid).map(|(q, z)| q * z).sum::<f64>())
                        .sum();
                    t.reward + cfg.gamma * v
                };
                let out = net.predict(&agents::one_hot(t.state, ns)).unwrap();
                let m: f64 = out[t.action * n..(t.action + 1) * n].iter().zip(&grid).map(|(q, z)| q * z).sum();
                td += (m - y) * (m - y);
            }
            ok &= l0.loss.to_bits() == (td * scale).to_bits();
        }
        // With terminal targets both critics see the same projected target.
        let ce = agents::fzi_categorical_loss(&net, &target, &terminal, &grid, cfg.gamma, FziMode::VanillaCe).unwrap();
        cfg.lambda = 1.0;
        let l1 = agents::derac_critic_loss(&net, &target, &policy, &terminal, &grid, &cfg).unwrap();
        ok &= l1.loss.to_bits() == ce.loss.to_bits() && l1.grads == ce.grads;
    }

    // Constant minimizers of the quantile loss against the empirical band.
    let samples = [1.0, 2.0, 3.0, 100.0];
    let pinball = |tau: f64, c: f64| -> f64 {
        samples.iter().map(|&x| if x >= c { tau * (x - c) } else { (1.0 - tau) * (c - x) }).sum()
    };
    let band = |tau: f64| -> (f64, f64) {
        let k = tau * samples.len() as f64;
        if (k - k.round()).abs() < 1e-12 && k.round() >= 1.0 {
            let k = k.round() as usize;
            (samples[k - 1], samples[k])
        } else {
            let v = samples[k.ceil() as usize - 1];
            (v, v)
        }
    };
    let mut details = Vec::new();
    for (tau, kappa) in [(0.1, 1e-6), (0.25, 1e-6), (0.5, 1e-6), (0.5, 1.0), (0.75, 1e-6), (0.9, 1e-6)] {
        let (lo, hi) = band(tau);
        let mut best = (f64::INFINITY, 0.0);
        let mut pin_best = f64::INFINITY;
        let mut pin_set = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=101_000 {
            let c = k as f64 * 1e-3;
            let q = QuantileDist::new_unsorted(vec![tau], vec![c]);
            let l = agents::quantile_huber_loss(&q, &samples, kappa);
            if l < best.0 {
                best = (l, c);
            }
            let p = pinball(tau, c);
            if p < pin_best - 1e-9 {
                pin_best = p;
                pin_set = (c, c);
            } else if (p - pin_best).abs() <= 1e-9 {
                pin_set.1 = c;
            }
        }
        let inside = best.1 >= lo - 1e-3 && best.1 <= hi + 1e-3;
        let brute = (pin_set.0 - lo).abs() <= 1e-3 && (pin_set.1 - hi).abs() <= 1e-3;
        ok &= inside && brute;
        details.push(format!("tau {tau} kappa {kappa}: {:.3} in [{lo}, {hi}]", best.1));
    }
    outcome(ok, format!("endpoints bitwise over 40 batches; {}", details.join(", ")))
}

// 10 --------------------------------------------------------------------

fn sweep_config() -> ExperimentConfig {
    let mut agent = AgentConfig::default();
    agent.gamma = 0.9;
    agent.hidden = vec![32];
    agent.batch_size = 32;
    agent.learning_starts = 500;
    agent.critic_lr = 1e-3;
    ExperimentConfig {
        name: "sweep".into(),
        env: EnvSpec::RiskyChain { n: 8, slip: 0.1, spread: 0.5 },
        variant: Variant::FziMix,
        agent,
        seeds: (0..5).collect(),
        schedule: RunSchedule { total_steps: 8000, eval_every: 500, eval_episodes: 10 },
        output: PathBuf::from("unused"),
    }
}

fn epsilon_sweep() -> Outcome {
    let eps = [0.0, 0.25, 0.5, 0.75, 1.0];
    let table = sweep_epsilon(&sweep_config(), &eps).unwrap();
    let means: Vec<String> = table.means.iter().map(|(e, m)| format!("{e}:{m:.3}")).collect();
    let first = table.means[0].1;
    let last = table.means[eps.len() - 1].1;
    outcome(
        table.spearman >= 0.6 && last >= first,
        format!("mean AUC {}; spearman {:.2}", means.join(" "), table.spearman),
    )
}

// 11 --------------------------------------------------------------------

fn ablation() -> Outcome {
    let bandit = mdp::make_risky_bandit(1.0, 0.5).unwrap();
    let plain = ops::policy_evaluation(&bandit, &ops::Policy::uniform(2, 2), ops::Backup::Plain, 1e-12).unwrap();
    let result = ops::derpi(&bandit, &DerpiConfig::new(0.5)).unwrap();
    let (risky, safe) = (result.q.get(0, mdp::RISKY), result.q.get(0, mdp::SAFE));
    let exact = outcome(
        risky > safe && (plain.get(0, mdp::RISKY) - plain.get(0, mdp::SAFE)).abs() < 1e-12,
        format!("corrected Q risky {risky:.4} > safe {safe:.4}, plain means tie"),
    );

    let env = mdp::make_chain(16, 0.1, 0.8).unwrap();
    let mut cfg = AgentConfig::default();
    cfg.gamma = 0.8;
    cfg.hidden = vec![32];
    cfg.batch_size = 32;
    cfg.learning_starts = 500;
    cfg.critic_lr = 1e-3;
    cfg.actor_lr = 1e-3;
    let schedule = RunSchedule { total_steps: 6000, eval_every: 500, eval_episodes: 10 };
    let mean_return = |v: AcVariant| -> f64 {
        let aucs: Vec<f64> = (0..5).map(|s| ac_variant_run(&env, v, &cfg, &schedule, s).unwrap().auc()).collect();
        mean(&aucs)
    };
    let (ac, ve) = (mean_return(AcVariant::Ac), mean_return(AcVariant::AcVe));
    both(exact, outcome(ve >= ac, format!("slip chain mean return AC {ac:.3}, AC+VE {ve:.3}")))
}

// 12 --------------------------------------------------------------------

fn determinism() -> Outcome {
    let mut ok = true;
    let mut files = 0;
    for variant in [Variant::Fqi, Variant::FziDecomposed, Variant::FziQuantile, Variant::Derac, Variant::AcReVe] {
        let mut cfg = sweep_config();
        cfg.variant = variant;
        cfg.seeds = vec![7, 8];
        cfg.agent.learning_starts = 100;
        cfg.agent.quantiles = 8;
        cfg.agent.quantile_embedding = 8;
        cfg.schedule = RunSchedule { total_steps: 600, eval_every: 200, eval_episodes: 3 };
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let dir = std::env::temp_dir().join(format!("derl-acceptance-{}-{rep}", std::process::id()));
            let _ = std::fs::remove_dir_all(&dir);
            let runs = run_experiment(&cfg).unwrap();
            let paths = write_runs(&dir, &cfg.name, &cfg.dump(), &runs).unwrap();
            outputs.push(paths.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
            std::fs::remove_dir_all(&dir).unwrap();
        }
        files += outputs[0].len();
        ok &= outputs[0] == outputs[1];
    }
    outcome(ok, format!("{files} files byte-identical across repeats"))
}

// -----------------------------------------------------------------------

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Option<Duration>, Check); 12] = [
        ("decomposed loss identity", Some(Duration::from_secs(1)), decomposed_identity),
        ("expectation contraction", Some(Duration::from_secs(5)), || {
            from_report(&verify::check_expectation_contraction(500, SEED + 3).unwrap())
        }),
        ("sup-KL non-expansion", Some(Duration::from_secs(10)), || {
            from_report(&verify::check_kl_nonexpansion(500, SEED + 1).unwrap())
        }),
        ("Pinsker and W1 chain", Some(Duration::from_secs(2)), pinsker_and_transport),
        ("decomposition CDF bound", Some(Duration::from_secs(2)), || {
            from_report(&verify::check_prop1(1000, SEED).unwrap())
        }),
        ("DERPI optimality and monotone traces", Some(Duration::from_secs(60)), || {
            from_report(&verify::check_derpi_policy(100, SEED + 5).unwrap())
        }),
        ("corrected-reward consistency", Some(Duration::from_secs(10)), || {
            from_report(&verify::check_corrected_reward(50, SEED + 6).unwrap())
        }),
        ("operator and gradient consistency", Some(Duration::from_secs(30)), operator_consistency),
        ("DERAC endpoints and quantile minimizers", None, derac_endpoints),
        ("mixed-target epsilon sweep", Some(Duration::from_secs(600)), epsilon_sweep),
        ("risk-seeking correction and AC+VE ablation", None, ablation),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let (mut pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        let timing = match limit {
            Some(l) => {
                pass &= elapsed <= l;
                format!("{elapsed:.2?} (limit {l:?})")
            }
            None => format!("{elapsed:.2?}"),
        };
        failed += usize::from(!pass);
        let status = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{status} criterion {:>2} {name}: {detail} [{timing}]", i + 1);
        let _ = out.flush();
    }
    let _ = writeln!(out, "acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
