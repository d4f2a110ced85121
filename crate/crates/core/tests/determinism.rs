use spinsys_core::invasion::growth_curve;
use spinsys_core::observables::{semigroup_mc, Construction};
use spinsys_core::{Configuration, LatticeBox, LocalFunction, RateModel, Site, WeightFamily};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn monte_carlo_results_do_not_depend_on_thread_count() {
    let model = RateModel::contact(1, 1.5).unwrap();
    let f = LocalFunction::coordinate(Site::d1(0));
    let eta = Configuration::indicator(&[Site::d1(1)]);
    let run = || {
        semigroup_mc(
            &f,
            &eta,
            &model,
            &WeightFamily::uniform(),
            0.5,
            2,
            3_000,
            77,
            Construction::Graphical,
        )
        .unwrap()
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one.mean.to_bits(), four.mean.to_bits());
    assert_eq!(one.sem.to_bits(), four.sem.to_bits());
}

#[test]
fn growth_curves_do_not_depend_on_thread_count() {
    let alpha_bar = RateModel::voter(1).influence().transpose();
    let run = || {
        growth_curve(
            &Site::d1(0),
            &alpha_bar,
            &WeightFamily::uniform(),
            &[0.5, 1.0],
            2_000,
            LatticeBox::new(1, 10),
            5,
        )
        .unwrap()
    };
    assert_eq!(in_pool(1, run), in_pool(3, run));
}

#[test]
fn different_seeds_give_different_samples() {
    let model = RateModel::voter(1);
    let f = LocalFunction::coordinate(Site::d1(0));
    let eta: Configuration = "bg=period:10; dev=".parse().unwrap();
    let a = semigroup_mc(
        &f,
        &eta,
        &model,
        &WeightFamily::uniform(),
        1.0,
        2,
        2_000,
        1,
        Construction::Thinned,
    )
    .unwrap();
    let b = semigroup_mc(
        &f,
        &eta,
        &model,
        &WeightFamily::uniform(),
        1.0,
        2,
        2_000,
        2,
        Construction::Thinned,
    )
    .unwrap();
    assert_ne!(a.mean, b.mean);
}
