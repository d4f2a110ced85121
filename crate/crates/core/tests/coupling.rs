use proptest::prelude::*;
use spinsys_core::graphical::run_two_config;
use spinsys_core::seeds::proportion;
use spinsys_core::{
    build_timeline, run_coupled, simulate_invasion, Configuration, LatticeBox, RateModel, Site,
    WeightFamily,
};

fn models() -> Vec<RateModel> {
    vec![
        RateModel::contact(1, 1.5).unwrap(),
        RateModel::voter(1),
        RateModel::glauber(1, 0.7).unwrap(),
        RateModel::independent(1, 2.0, 3.0).unwrap(),
        RateModel::long_range_geometric(1, 0.3, 1.0).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn containment_holds_for_every_model(
        which in 0usize..5,
        seed in any::<u64>(),
        devs in prop::collection::btree_set(-5i64..=5, 0..6),
        one_background in any::<bool>(),
    ) {
        let model = &models()[which];
        let mut eta = if one_background { Configuration::one() } else { Configuration::zero() };
        for x in devs {
            eta.flip_mut(&Site::d1(x));
        }
        let window = LatticeBox::new(1, 5);
        let tl = build_timeline(window, 1.0, model, &WeightFamily::uniform(), seed).unwrap();
        let bundle = run_coupled(&tl, model, &eta, &[1, 2, 4], 1e-9).unwrap();
        prop_assert!(bundle.violations().is_empty(), "{:?}", bundle.violations());
    }

    #[test]
    fn discrepancies_stay_inside_the_invasion(
        which in 0usize..5,
        seed in any::<u64>(),
        w in -3i64..=3,
        n in 1u32..=3,
    ) {
        let model = &models()[which];
        let window = LatticeBox::new(1, 4);
        let tl = build_timeline(window, 1.0, model, &WeightFamily::uniform(), seed).unwrap();
        let eta = Configuration::indicator(&[Site::d1(2), Site::d1(-1)]);
        let run = run_two_config(&tl, model, &eta, &Site::d1(w), n, 1e-9).unwrap();
        prop_assert!(run.violations.is_empty(), "{:?}", run.violations);
    }
}

#[test]
fn containment_holds_in_two_dimensions_with_radial_weights() {
    let model = RateModel::glauber(2, 0.5).unwrap();
    let weights = WeightFamily::radial_exponential(0.2).unwrap();
    let window = LatticeBox::new(2, 3);
    let eta = Configuration::indicator(&[Site::new([0, 0]), Site::new([1, -2])]);
    for seed in 0..300 {
        let tl = build_timeline(window, 0.7, &model, &weights, seed).unwrap();
        let bundle = run_coupled(&tl, &model, &eta, &[1, 2], 1e-9).unwrap();
        assert!(bundle.violations().is_empty(), "seed {seed}");
    }
}

#[test]
fn coupled_invasion_has_the_law_of_the_invasion_process() {
    let model = RateModel::contact(1, 1.5).unwrap();
    let window = LatticeBox::new(1, 4);
    let inner = LatticeBox::new(1, 2);
    let outside: Vec<Site> = window
        .sites()
        .into_iter()
        .filter(|s| !inner.contains(s))
        .collect();
    let alpha = model.influence();
    let (t, n) = (1.0, 4_000);
    let mut coupled_hits = 0;
    let mut direct_hits = 0;
    for seed in 0..n as u64 {
        let tl = build_timeline(window, t, &model, &WeightFamily::uniform(), seed).unwrap();
        let bundle = run_coupled(&tl, &model, &Configuration::zero(), &[2], 1e-9).unwrap();
        coupled_hits += usize::from(bundle.zeta(0).final_state().eval(&Site::d1(0)));
        let out = simulate_invasion(&outside, &alpha, t, window, seed + 1_000_000).unwrap();
        direct_hits += usize::from(out.is_occupied(&Site::d1(0)));
    }
    let (p1, s1) = proportion(coupled_hits, n);
    let (p2, s2) = proportion(direct_hits, n);
    assert!(
        (p1 - p2).abs() <= 4.0 * (s1 * s1 + s2 * s2).sqrt(),
        "{p1} vs {p2}"
    );
}

#[test]
fn boxes_must_fit_the_window() {
    let model = RateModel::voter(1);
    let tl = build_timeline(
        LatticeBox::new(1, 2),
        1.0,
        &model,
        &WeightFamily::uniform(),
        1,
    )
    .unwrap();
    assert!(run_coupled(&tl, &model, &Configuration::zero(), &[1, 3], 1e-9).is_err());
    assert!(run_coupled(&tl, &model, &Configuration::zero(), &[2, 1], 1e-9).is_err());
    assert!(run_two_config(&tl, &model, &Configuration::zero(), &Site::d1(5), 1, 1e-9).is_err());
}
