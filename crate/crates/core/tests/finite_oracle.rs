use spinsys_core::finite::{simulate_terminal, ExactOracle, FiniteSystem};
use spinsys_core::seeds::total_variation;
use spinsys_core::{simulate_finite, Configuration, LatticeBox, LocalFunction, RateModel, Site};

fn glauber_cross() -> FiniteSystem {
    let active = [
        Site::new([0, 0]),
        Site::new([1, 0]),
        Site::new([-1, 0]),
        Site::new([0, 1]),
        Site::new([0, -1]),
    ];
    let eta = Configuration::indicator(&[Site::new([0, 0]), Site::new([2, 0])]);
    FiniteSystem::new(eta, active, RateModel::glauber(2, 0.4).unwrap(), 0.8).unwrap()
}

fn bits_to_state(bits: &[bool]) -> usize {
    bits.iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .fold(0, |acc, (i, _)| acc | (1 << i))
}

#[test]
fn simulator_matches_oracle_in_two_dimensions() {
    let system = glauber_cross();
    let oracle = ExactOracle::new(&system).unwrap();
    let exact = oracle.distribution(system.horizon());
    let n = 40_000;
    let mut counts = vec![0usize; exact.len()];
    for seed in 0..n {
        counts[bits_to_state(&simulate_terminal(&system, seed))] += 1;
    }
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let tv = total_variation(&empirical, &exact);
    assert!(tv < 0.03, "TV {tv}");
}

#[test]
fn terminal_fast_path_matches_full_trajectory() {
    let system = glauber_cross();
    let oracle = ExactOracle::new(&system).unwrap();
    for seed in 0..200 {
        let traj = simulate_finite(&system, seed).unwrap();
        let fast = simulate_terminal(&system, seed);
        assert_eq!(oracle.state_of(&traj.final_state()), bits_to_state(&fast));
    }
}

#[test]
fn kernel_satisfies_semigroup_law() {
    let system = FiniteSystem::on_box(
        Configuration::zero(),
        LatticeBox::new(1, 1),
        RateModel::contact(1, 1.5).unwrap(),
        1.0,
    )
    .unwrap();
    let oracle = ExactOracle::new(&system).unwrap();
    let (t1, t2) = (0.3, 0.55);
    let k1 = oracle.kernel(t1).unwrap();
    let k2 = oracle.kernel(t2).unwrap();
    let k12 = oracle.kernel(t1 + t2).unwrap();
    let n = k1.len();
    for i in 0..n {
        let row_sum: f64 = k12[i].iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-10);
        for j in 0..n {
            let prod: f64 = (0..n).map(|k| k1[i][k] * k2[k][j]).sum();
            assert!((prod - k12[i][j]).abs() < 1e-10, "({i},{j})");
        }
    }
}

#[test]
fn kolmogorov_equations_hold_by_richardson_extrapolation() {
    let system = FiniteSystem::on_box(
        Configuration::indicator(&[Site::d1(0)]),
        LatticeBox::new(1, 1),
        RateModel::voter(1),
        1.0,
    )
    .unwrap();
    let oracle = ExactOracle::new(&system).unwrap();
    let f = oracle.function_values(&LocalFunction::coordinate(Site::d1(1)));
    let t = 0.7;
    let central = |h: f64| -> Vec<f64> {
        let plus = oracle.apply(&f, t + h);
        let minus = oracle.apply(&f, t - h);
        plus.iter()
            .zip(&minus)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect()
    };
    let (d1, d2) = (central(1e-2), central(5e-3));
    let derivative: Vec<f64> = d1
        .iter()
        .zip(&d2)
        .map(|(a, b)| (4.0 * b - a) / 3.0)
        .collect();
    let backward = oracle.apply(&oracle.generator_apply(&f), t);
    let forward = oracle.generator_apply(&oracle.apply(&f, t));
    for s in 0..oracle.n_states() {
        assert!((derivative[s] - backward[s]).abs() < 1e-7);
        assert!((backward[s] - forward[s]).abs() < 1e-10);
    }
}

#[test]
fn trajectories_are_markov_at_an_intermediate_time() {
    let system = FiniteSystem::on_box(
        Configuration::indicator(&[Site::d1(0)]),
        LatticeBox::new(1, 1),
        RateModel::contact(1, 1.5).unwrap(),
        1.0,
    )
    .unwrap();
    let oracle = ExactOracle::new(&system).unwrap();
    let s = 0.4;
    let k = oracle.kernel(1.0 - s).unwrap();
    let start = oracle.initial_state();
    let mut counts = vec![0usize; oracle.n_states()];
    let mut total = 0;
    for seed in 0..40_000 {
        let traj = simulate_finite(&system, seed).unwrap();
        if oracle.state_of(&traj.state_at(s)) == start {
            counts[oracle.state_of(&traj.final_state())] += 1;
            total += 1;
        }
    }
    assert!(total > 5_000);
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let tv = total_variation(&empirical, &k[start]);
    assert!(tv < 0.04, "TV {tv} over {total} conditioned samples");
}

#[test]
fn oracle_refuses_large_state_spaces() {
    let system = FiniteSystem::on_box(
        Configuration::zero(),
        LatticeBox::new(2, 2),
        RateModel::voter(2),
        1.0,
    )
    .unwrap();
    assert!(ExactOracle::new(&system).is_err());
}
