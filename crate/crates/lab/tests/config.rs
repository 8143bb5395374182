use std::path::PathBuf;

use derl::{parse_config, EnvSpec, ExperimentConfig, LabError};
use derl_core::agents::{AgentConfig, RunSchedule, Variant};
use derl_core::ops::MuSource;
use proptest::prelude::*;

#[test]
fn defaults_section_alone_gives_full_defaults() {
    let cfg = parse_config("[defaults]\n").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    let a = &cfg.agent;
    assert_eq!(a.gamma, 0.99);
    assert_eq!(a.batch_size, 256);
    assert_eq!(a.atoms, 51);
    assert_eq!(a.quantiles, 32);
    assert_eq!(a.quantile_embedding, 64);
    assert_eq!(a.critic_lr, 3e-4);
    assert_eq!(a.actor_lr, 3e-4);
    assert_eq!(a.polyak_tau, Some(5e-3));
    assert_eq!(a.beta, 0.2);
    assert_eq!(a.huber_kappa, 1.0);
    assert_eq!(a.max_episode_len, 200);
    assert_eq!(cfg.schedule, RunSchedule { total_steps: 10_000, eval_every: 500, eval_episodes: 10 });
}

#[test]
fn out_of_range_gamma_is_a_parse_error() {
    let err = parse_config("[defaults]\ngamma = 1.5\n").unwrap_err();
    assert!(matches!(err, LabError::Parse { line: 2, .. }), "{err}");
    assert!(err.is_config_error());
}

#[test]
fn missing_defaults_section() {
    let err = parse_config("[agent]\nvariant = fqi\n").unwrap_err();
    assert!(matches!(err, LabError::MissingSection(ref s) if s == "defaults"));
}

#[test]
fn unknown_keys_are_hard_errors() {
    let err = parse_config("[defaults]\n\n[agent]\nlearning_rate = 0.1\n").unwrap_err();
    match err {
        LabError::UnknownKey { line, section, key } => {
            assert_eq!((line, section.as_str(), key.as_str()), (4, "agent", "learning_rate"));
        }
        other => panic!("unexpected {other}"),
    }
    assert!(parse_config("[defaults]\nbatch_size = 3\n").is_err());
}

#[test]
fn malformed_values_report_their_line() {
    for (text, line) in [
        ("[defaults]\n[agent]\natoms = many\n", 3),
        ("[defaults]\n[agent]\nvariant = dqn\n", 3),
        ("[defaults]\n[run]\nseeds =\n", 3),
        ("[defaults]\nnot a pair\n", 2),
        ("gamma = 0.9\n", 1),
        ("[defaults]\n[agent]\nepsilon = 1\n", 3),
        ("[defaults]\n[agent]\nsupport = 3, 1\n", 3),
    ] {
        match parse_config(text) {
            Err(LabError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn full_file_is_parsed() {
    let text = "# sweep settings\n[defaults]\ngamma = 0.9\nmax_episode_len = 50\n\n[env]\nkind = risky_chain\nn = 8\nspread = 0.25\n\n[agent]\nvariant = fzi-mix\nepsilon = 0.8\nmix_epsilon = 0.5\nhidden = 32, 16\nsupport = -1, 2\npolyak_tau = none\nmu_source = whole_target\n\n[run]\nname = sweep\nseeds = 0, 1, 2\ntotal_steps = 8000\noutput = out/dir\n";
    let cfg = parse_config(text).unwrap();
    assert_eq!(cfg.env, EnvSpec::RiskyChain { n: 8, slip: 0.1, spread: 0.25 });
    assert_eq!(cfg.variant, Variant::FziMix);
    assert_eq!(cfg.agent.gamma, 0.9);
    assert_eq!(cfg.agent.max_episode_len, 50);
    assert!((cfg.agent.epsilon() - 0.8).abs() < 1e-15);
    assert!((cfg.agent.alpha() - 4.0).abs() < 1e-12);
    assert_eq!(cfg.agent.hidden, vec![32, 16]);
    assert_eq!(cfg.agent.support, Some((-1.0, 2.0)));
    assert_eq!(cfg.agent.polyak_tau, None);
    assert_eq!(cfg.agent.mu_source, MuSource::WholeTarget);
    assert_eq!(cfg.seeds, vec![0, 1, 2]);
    assert_eq!(cfg.output, PathBuf::from("out/dir"));
    assert_eq!(parse_config(&cfg.dump()).unwrap(), cfg);
}

#[test]
fn dump_is_canonical() {
    let text = "[run]\nseeds=4,5\n[defaults]\n  gamma=0.95   # comment\n[env]\nkind=cliff\n";
    let once = parse_config(text).unwrap().dump();
    assert_eq!(parse_config(&once).unwrap().dump(), once);
    assert!(once.starts_with("[defaults]\ngamma = 0.950000000000\n"));
}

fn env_strategy() -> impl Strategy<Value = EnvSpec> {
    prop_oneof![
        (2usize..20, 0.0f64..0.5).prop_map(|(n, slip)| EnvSpec::Chain { n, slip }),
        (2usize..20, 0.0f64..0.5, 0.01f64..2.0).prop_map(|(n, slip, spread)| EnvSpec::RiskyChain { n, slip, spread }),
        (3usize..8, 2usize..6, -5.0f64..0.0).prop_map(|(width, height, fall_penalty)| EnvSpec::Cliff { width, height, fall_penalty }),
        (-2.0f64..2.0, 0.01f64..2.0).prop_map(|(mean, spread)| EnvSpec::RiskyBandit { mean, spread }),
        "[a-z]{1,8}\\.mdp".prop_map(|p| EnvSpec::File { path: PathBuf::from(p) }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dump_then_parse_is_identity(
        env in env_strategy(),
        variant in 0usize..10,
        gamma in 0.01f64..0.999,
        eps in 0.01f64..0.99,
        mix in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
        hidden in proptest::collection::vec(1usize..128, 1..4),
        seeds in proptest::collection::vec(any::<u64>(), 1..6),
        tau in proptest::option::of(0.001f64..1.0),
        support in proptest::option::of((-10.0f64..0.0, 0.1f64..10.0)),
        steps in 0usize..100_000,
    ) {
        let mut agent = AgentConfig::default();
        agent.set_epsilon(eps).unwrap();
        agent.gamma = gamma;
        agent.mix_epsilon = mix;
        agent.lambda = lambda;
        agent.hidden = hidden;
        agent.polyak_tau = tau;
        agent.support = support;
        let cfg = ExperimentConfig {
            name: "prop".into(),
            env,
            variant: Variant::ALL[variant],
            agent,
            seeds,
            schedule: RunSchedule { total_steps: steps, eval_every: 250, eval_episodes: 4 },
            output: PathBuf::from("results/x"),
        };
        let back = parse_config(&cfg.dump()).unwrap();
        prop_assert_eq!(back.agent.epsilon().to_bits(), cfg.agent.epsilon().to_bits());
        prop_assert_eq!(back, cfg);
    }
}
