use derl::format::*;
use derl_core::dist::CategoricalDist;
use derl_core::mdp::{self, Reward};
use derl_core::nn::{Activation, Network};
use derl_core::ops::{DistTable, QTable};
use derl_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng as _;

fn random_dist(rng: &mut derl_core::Rng, n: usize) -> CategoricalDist {
    let mut atoms: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
    atoms.sort_by(f64::total_cmp);
    atoms.dedup();
    let raw: Vec<f64> = atoms.iter().map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    CategoricalDist::new(atoms, raw.iter().map(|p| p / total).collect()).unwrap()
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let text = fmt_num(x);
        prop_assert_eq!(text.parse::<f64>().unwrap().to_bits(), x.to_bits());
        let digits = text.trim_start_matches('-').trim_start_matches(['0', '.']).chars().filter(char::is_ascii_digit).count();
        prop_assert!(digits >= 12 || x == 0.0, "{}", text);
    }

    #[test]
    fn distributions_round_trip(seed in any::<u64>(), n in 1usize..40) {
        let d = random_dist(&mut seeded_rng(seed), n);
        let back = parse_dist(&write_dist(&d)).unwrap();
        prop_assert_eq!(bits(back.atoms()), bits(d.atoms()));
        prop_assert_eq!(bits(back.probs()), bits(d.probs()));
    }

    #[test]
    fn mdps_round_trip(seed in any::<u64>(), ns in 1usize..7, na in 1usize..4, stochastic in any::<bool>()) {
        let mut rng = seeded_rng(seed);
        let m = mdp::random_mdp(ns, na, 0.9, stochastic, &mut rng);
        prop_assert_eq!(parse_mdp(&write_mdp(&m)).unwrap(), m);
    }

    #[test]
    fn tables_round_trip(seed in any::<u64>(), ns in 1usize..6, na in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let q = QTable::from_values(ns, na, (0..ns * na).map(|_| rng.gen_range(-50.0..50.0)).collect()).unwrap();
        prop_assert_eq!(parse_qtable(&write_qtable(&q)).unwrap(), q);
        let z = DistTable::new(ns, na, (0..ns * na).map(|_| random_dist(&mut rng, 5)).collect()).unwrap();
        prop_assert_eq!(parse_dist_table(&write_dist_table(&z)).unwrap(), z);
    }

    #[test]
    fn networks_round_trip_bit_exactly(seed in any::<u64>(), hidden in 1usize..12, out in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let net = Network::mlp(5, &[hidden, hidden], out * 3, Activation::Tanh, Some(3), &mut rng).unwrap();
        let back = parse_network(&write_network(&net)).unwrap();
        prop_assert_eq!(bits(back.params()), bits(net.params()));
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        prop_assert_eq!(bits(&back.predict(&x).unwrap()), bits(&net.predict(&x).unwrap()));
        prop_assert_eq!(back, net);
    }
}

#[test]
fn bundled_environments_round_trip() {
    let envs = [
        mdp::make_chain(6, 0.1, 0.9).unwrap(),
        mdp::make_risky_chain(6, 0.1, 0.5, 0.9).unwrap(),
        mdp::make_cliff_grid(4, 3, -1.0, 0.95).unwrap(),
        mdp::make_risky_bandit(1.0, 0.5).unwrap(),
    ];
    for env in envs {
        let text = write_mdp(&env);
        assert_eq!(parse_mdp(&text).unwrap(), env);
        assert_eq!(write_mdp(&parse_mdp(&text).unwrap()), text);
    }
}

#[test]
fn risky_rewards_use_dist_lines() {
    let text = write_mdp(&mdp::make_risky_bandit(1.0, 0.5).unwrap());
    assert!(text.lines().any(|l| l.starts_with("R 0 1 : dist 0.500000000000 1.50000000000 | ")));
    let m = parse_mdp(&text).unwrap();
    assert!(matches!(m.reward(0, 1), Reward::Dist(_)));
}

#[test]
fn trace_csv_layout() {
    let q0 = QTable::from_values(1, 2, vec![0.0, 1.0]).unwrap();
    let q1 = QTable::from_values(1, 2, vec![0.5, 1.5]).unwrap();
    let csv = write_trace_csv(&[q0, q1]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iter,s,a,q");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[4], "1,0,1,1.50000000000");
}

#[test]
fn network_header_mismatch_is_reported() {
    let net = Network::mlp(2, &[3], 1, Activation::Relu, None, &mut seeded_rng(0)).unwrap();
    let text = write_network(&net).replacen("params: ", "params: 1", 1);
    assert!(parse_network(&text).is_err());
}
