use proptest::prelude::*;
use spinsys_core::invasion::{monotone_pair, reachability_oracle, InvasionKernel};
use spinsys_core::seeds::mean_sem;
use spinsys_core::{simulate_invasion, ArrowGraph, Influence, LatticeBox, RateModel, Site};

fn long_range() -> Influence {
    Influence::finite(
        1,
        vec![
            (Site::d1(-2), 0.3),
            (Site::d1(-1), 1.0),
            (Site::d1(1), 0.5),
            (Site::d1(3), 0.2),
        ],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frontier_matches_graph_reachability(
        seed in any::<u64>(),
        starts in prop::collection::btree_set(-4i64..=4, 1..4),
        t in 0.05f64..1.5,
    ) {
        let window = LatticeBox::new(1, 6);
        let kernel = InvasionKernel::new(&long_range(), window).unwrap();
        let initial: Vec<Site> = starts.into_iter().map(Site::d1).collect();
        let out = kernel.simulate(&initial, t, seed).unwrap();
        let graph = kernel.sample_graph(t, seed);
        let reach = graph.reachable_set(&initial, t);
        for v in window.sites() {
            prop_assert_eq!(out.is_occupied(&v), reach.contains(&v), "site {}", v);
        }
    }

    #[test]
    fn reversal_is_an_involution_and_swaps_reachability(seed in any::<u64>(), t in 0.1f64..1.0) {
        let window = LatticeBox::new(1, 4);
        let graph = ArrowGraph::sample(&long_range(), window, t, seed).unwrap();
        let twice = graph.reversed(t).reversed(t);
        prop_assert_eq!(twice.arrows().len(), graph.arrows().len());
        for (a, b) in twice.arrows().iter().zip(graph.arrows()) {
            prop_assert!((a.time - b.time).abs() < 1e-12);
            prop_assert_eq!(&a.from, &b.from);
            prop_assert_eq!(&a.to, &b.to);
        }
        let rev = graph.reversed(t);
        for x in window.sites() {
            for y in window.sites() {
                prop_assert_eq!(
                    reachability_oracle(&graph, std::slice::from_ref(&x), &y, t),
                    reachability_oracle(&rev, std::slice::from_ref(&y), &x, t)
                );
            }
        }
    }

    #[test]
    fn larger_kernels_dominate(seed in any::<u64>(), factor in 1.0f64..3.0) {
        let small = long_range();
        let offsets = vec![
            (Site::d1(-2), 0.3 * factor),
            (Site::d1(-1), 1.0 * factor),
            (Site::d1(1), 0.5 * factor),
            (Site::d1(3), 0.2 * factor),
            (Site::d1(2), 0.1),
        ];
        let large = Influence::finite(1, offsets);
        let pair = monotone_pair(&small, &large, &[Site::d1(0)], 1.0, LatticeBox::new(1, 6), seed).unwrap();
        prop_assert!(pair.domination_violations().is_empty());
    }
}

#[test]
fn monotone_coupling_rejects_undominated_kernels() {
    let small = RateModel::contact(1, 2.0).unwrap().influence();
    let large = RateModel::contact(1, 1.0).unwrap().influence();
    assert!(monotone_pair(
        &small,
        &large,
        &[Site::d1(0)],
        1.0,
        LatticeBox::new(1, 4),
        1
    )
    .is_err());
}

#[test]
fn single_site_invasions_stay_finite_and_below_the_growth_envelope() {
    let alpha = RateModel::contact(1, 1.5).unwrap().influence();
    let window = LatticeBox::new(1, 20);
    for &t in &[0.5, 1.0, 1.5] {
        let sizes: Vec<f64> = (0..3_000)
            .map(|seed| {
                let out = simulate_invasion(&[Site::d1(0)], &alpha, t, window, seed).unwrap();
                assert!(!out.touched_boundary());
                out.occupation_times().len() as f64
            })
            .collect();
        let (mean, sem) = mean_sem(&sizes);
        assert!(mean <= (3.0 * t).exp() + 3.0 * sem, "t={t}: {mean}");
    }
}

#[test]
fn occupation_times_are_sorted_and_start_at_zero() {
    let window = LatticeBox::new(1, 6);
    let out = simulate_invasion(&[Site::d1(0)], &long_range(), 1.0, window, 9).unwrap();
    let times: Vec<f64> = out.occupation_times().iter().map(|(_, s)| *s).collect();
    assert_eq!(times[0], 0.0);
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
    assert!(times.iter().all(|&s| s <= 1.0));
}
