//! Invasion processes: occupied sites never vacate, and an arrow from `x` to
//! `y` at time `s` occupies `y` if `x` was occupied before `s`.
//!
//! Arrows of the ordered pair `(x, y)` form a Poisson process of intensity
//! `α(x, y)` whose randomness is keyed by the experiment seed and the two
//! sites only. The frontier simulator and the fully sampled [`ArrowGraph`]
//! therefore see exactly the same arrows.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde_json::json;

use crate::configurations::Configuration;
use crate::error::{Result, SpinError};
use crate::lattice::{Frame, LatticeBox, Site};
use crate::rates::{influence_constant, Influence, WeightFamily};
use crate::seeds::{
    derive_seed, hash_words, mean_sem, proportion, replica_seed, rng_from_seed, SimRng,
};

/// Arrows of one ordered pair, in increasing time, each with a uniform mark
/// on `[0, 1)` used for thinning.
struct PairStream {
    rng: SimRng,
    gap: Exp<f64>,
    now: f64,
}

fn pair_seed(seed: u64, x: &Site, y: &Site) -> u64 {
    let words = x
        .coords()
        .iter()
        .chain(std::iter::once(&i64::MIN))
        .chain(y.coords())
        .map(|&c| c as u64);
    hash_words(seed, words)
}

impl PairStream {
    fn new(seed: u64, x: &Site, y: &Site, intensity: f64) -> Self {
        PairStream {
            rng: rng_from_seed(pair_seed(seed, x, y)),
            gap: Exp::new(intensity).expect("positive arrow intensity"),
            now: 0.0,
        }
    }

    fn next_arrow(&mut self) -> (f64, f64) {
        self.now += self.gap.sample(&mut self.rng);
        let mark = self.rng.random::<f64>();
        (self.now, mark)
    }
}

#[derive(Clone, Debug)]
pub struct InvasionOutcome {
    occupied: Configuration,
    /// `(site, time of occupation)`, sites of the initial set at time 0.
    occupation: Vec<(Site, f64)>,
    touched_boundary: bool,
}

impl InvasionOutcome {
    pub fn occupied(&self) -> &Configuration {
        &self.occupied
    }

    pub fn occupation_times(&self) -> &[(Site, f64)] {
        &self.occupation
    }

    /// True when some occupied site lies on the boundary of the window, i.e.
    /// the truncation to the window may have mattered.
    pub fn touched_boundary(&self) -> bool {
        self.touched_boundary
    }

    pub fn is_occupied(&self, v: &Site) -> bool {
        self.occupied.eval(v)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Arrival {
    time: f64,
    target: usize,
}

impl Eq for Arrival {}

impl Ord for Arrival {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.target.cmp(&self.target))
    }
}

impl PartialOrd for Arrival {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// An influence kernel on a window with its outgoing adjacency precomputed.
#[derive(Clone, Debug)]
pub struct InvasionKernel {
    window: LatticeBox,
    frame: Frame,
    alpha: Influence,
    outgoing: Vec<Vec<(usize, f64)>>,
}

impl InvasionKernel {
    pub fn new(alpha: &Influence, window: LatticeBox) -> Result<Self> {
        if alpha.dim() != window.dim() {
            return Err(SpinError::Dimension {
                expected: window.dim(),
                found: alpha.dim(),
            });
        }
        let frame = Frame::from_box(window);
        let outgoing = alpha.outgoing_in(&frame);
        Ok(InvasionKernel {
            window,
            frame,
            alpha: alpha.clone(),
            outgoing,
        })
    }

    pub fn window(&self) -> LatticeBox {
        self.window
    }

    pub fn alpha(&self) -> &Influence {
        &self.alpha
    }

    fn positions(&self, sites: &[Site]) -> Result<Vec<usize>> {
        sites
            .iter()
            .map(|s| {
                self.frame.position(s).ok_or_else(|| {
                    SpinError::Precondition(format!("initial site {s} lies outside the window"))
                })
            })
            .collect()
    }

    /// Earliest-arrival sweep. `keep(x, y, mark)` decides whether an arrow
    /// of the `(x, y)` stream belongs to the process being simulated.
    fn frontier(
        &self,
        initial: &[usize],
        t: f64,
        seed: u64,
        keep: impl Fn(usize, usize, f64) -> bool,
    ) -> Vec<Option<f64>> {
        let sites = self.frame.sites();
        let mut occupied_at: Vec<Option<f64>> = vec![None; sites.len()];
        let mut heap = BinaryHeap::new();
        for &i in initial {
            heap.push(Arrival {
                time: 0.0,
                target: i,
            });
        }
        while let Some(Arrival { time, target: x }) = heap.pop() {
            if occupied_at[x].is_some() {
                continue;
            }
            occupied_at[x] = Some(time);
            for &(y, intensity) in &self.outgoing[x] {
                if occupied_at[y].is_some() {
                    continue;
                }
                let mut stream = PairStream::new(seed, &sites[x], &sites[y], intensity);
                loop {
                    let (s, mark) = stream.next_arrow();
                    if s > t {
                        break;
                    }
                    if s > time && keep(x, y, mark) {
                        heap.push(Arrival { time: s, target: y });
                        break;
                    }
                }
            }
        }
        occupied_at
    }

    fn outcome(&self, occupied_at: &[Option<f64>]) -> InvasionOutcome {
        let sites = self.frame.sites();
        let mut occupation: Vec<(Site, f64)> = occupied_at
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (sites[i].clone(), t)))
            .collect();
        occupation.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        let touched_boundary = occupation.iter().any(|(s, _)| self.window.on_boundary(s));
        InvasionOutcome {
            occupied: Configuration::indicator(occupation.iter().map(|(s, _)| s)),
            occupation,
            touched_boundary,
        }
    }

    /// `ζ_t` started from `1_W`, restricted to the window.
    pub fn simulate(&self, initial: &[Site], t: f64, seed: u64) -> Result<InvasionOutcome> {
        let init = self.positions(initial)?;
        let occ = self.frontier(&init, t, seed, |_, _, _| true);
        Ok(self.outcome(&occ))
    }

    /// All arrows of the window on `[0, horizon]`.
    pub fn sample_graph(&self, horizon: f64, seed: u64) -> ArrowGraph {
        let sites = self.frame.sites();
        let mut arrows = Vec::new();
        for (x, targets) in self.outgoing.iter().enumerate() {
            for &(y, intensity) in targets {
                let mut stream = PairStream::new(seed, &sites[x], &sites[y], intensity);
                loop {
                    let (s, _) = stream.next_arrow();
                    if s > horizon {
                        break;
                    }
                    arrows.push(Arrow {
                        time: s,
                        from: sites[x].clone(),
                        to: sites[y].clone(),
                    });
                }
            }
        }
        ArrowGraph::new(self.window, horizon, arrows)
    }
}

/// `ζ_t` of the `(W, α)`-invasion process on `window`.
pub fn simulate_invasion(
    initial: &[Site],
    alpha: &Influence,
    t: f64,
    window: LatticeBox,
    seed: u64,
) -> Result<InvasionOutcome> {
    InvasionKernel::new(alpha, window)?.simulate(initial, t, seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arrow {
    pub time: f64,
    pub from: Site,
    pub to: Site,
}

/// A fully sampled arrow configuration on a window over `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrowGraph {
    window: LatticeBox,
    horizon: f64,
    arrows: Vec<Arrow>,
}

impl ArrowGraph {
    /// Arrows are sorted by time.
    pub fn new(window: LatticeBox, horizon: f64, mut arrows: Vec<Arrow>) -> Self {
        arrows.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then_with(|| a.from.cmp(&b.from))
                .then_with(|| a.to.cmp(&b.to))
        });
        ArrowGraph {
            window,
            horizon,
            arrows,
        }
    }

    pub fn sample(alpha: &Influence, window: LatticeBox, horizon: f64, seed: u64) -> Result<Self> {
        Ok(InvasionKernel::new(alpha, window)?.sample_graph(horizon, seed))
    }

    pub fn arrows(&self) -> &[Arrow] {
        &self.arrows
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn window(&self) -> LatticeBox {
        self.window
    }

    /// The graph seen backwards from time `t`: `(s, x, y) ↦ (t - s, y, x)`
    /// for every arrow with `s <= t`.
    pub fn reversed(&self, t: f64) -> ArrowGraph {
        let arrows = self
            .arrows
            .iter()
            .filter(|a| a.time <= t)
            .map(|a| Arrow {
                time: t - a.time,
                from: a.to.clone(),
                to: a.from.clone(),
            })
            .collect();
        ArrowGraph::new(self.window, t, arrows)
    }

    /// Sites reachable at time `t` from `W × {0}` along time-increasing paths.
    pub fn reachable_set(&self, initial: &[Site], t: f64) -> BTreeSet<Site> {
        let mut reached: BTreeSet<Site> = initial.iter().cloned().collect();
        for a in self.arrows.iter().take_while(|a| a.time <= t) {
            if reached.contains(&a.from) {
                reached.insert(a.to.clone());
            }
        }
        reached
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "window_radius": self.window.radius(),
            "dimension": self.window.dim(),
            "horizon": self.horizon,
            "arrows": self
                .arrows
                .iter()
                .map(|a| json!([a.time, a.from.to_string(), a.to.to_string()]))
                .collect::<Vec<_>>(),
        })
    }
}

/// Whether `(v, t)` is reachable from `W × {0}` in `graph`.
pub fn reachability_oracle(graph: &ArrowGraph, initial: &[Site], v: &Site, t: f64) -> bool {
    initial.contains(v) || graph.reachable_set(initial, t).contains(v)
}

#[derive(Clone, Debug)]
pub struct DualityViolation {
    pub seed: u64,
    pub forward: bool,
    pub backward: bool,
    pub graph: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct DualityReport {
    pub samples: usize,
    /// Samples where `(v, t)` is reached from `W × {0}`.
    pub forward_hits: usize,
    pub violations: Vec<DualityViolation>,
    pub boundary_touches: usize,
}

/// Per-sample duality: for each seed, reachability of `(v, t)` from `W × {0}`
/// in the sampled graph must equal reachability of `W × {t}` from `(v, 0)` in
/// the reversed graph.
pub fn duality_check(
    v: &Site,
    initial: &[Site],
    t: f64,
    alpha: &Influence,
    window: LatticeBox,
    seeds: std::ops::Range<u64>,
) -> Result<DualityReport> {
    let kernel = InvasionKernel::new(alpha, window)?;
    kernel.positions(initial)?;
    let results: Vec<(u64, bool, bool, bool)> = seeds
        .into_par_iter()
        .map(|seed| {
            let g = kernel.sample_graph(t, seed);
            let forward = reachability_oracle(&g, initial, v, t);
            let back = g.reversed(t).reachable_set(std::slice::from_ref(v), t);
            let backward = initial.iter().any(|w| back.contains(w));
            let touched = back
                .iter()
                .chain(g.reachable_set(initial, t).iter())
                .any(|s| window.on_boundary(s));
            (seed, forward, backward, touched)
        })
        .collect();
    let mut report = DualityReport {
        samples: results.len(),
        forward_hits: 0,
        violations: Vec::new(),
        boundary_touches: 0,
    };
    for (seed, forward, backward, touched) in results {
        report.forward_hits += usize::from(forward);
        report.boundary_touches += usize::from(touched);
        if forward != backward {
            report.violations.push(DualityViolation {
                seed,
                forward,
                backward,
                graph: kernel.sample_graph(t, seed).to_json(),
            });
        }
    }
    if report.boundary_touches > 0 {
        warn!(
            "{} of {} duality samples reached the window boundary",
            report.boundary_touches, report.samples
        );
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug)]
pub struct StatisticalDuality {
    /// `P_{W,α}(ζ_t(v) = 1)` and its standard error.
    pub forward: (f64, f64),
    /// `P_{v,ᾱ}(ζ_t meets W)` and its standard error.
    pub backward: (f64, f64),
}

impl StatisticalDuality {
    pub fn z_score(&self) -> f64 {
        let se = (self.forward.1.powi(2) + self.backward.1.powi(2)).sqrt();
        if se == 0.0 {
            if self.forward.0 == self.backward.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.forward.0 - self.backward.0).abs() / se
        }
    }

    pub fn agrees_within(&self, sigmas: f64) -> bool {
        self.z_score() <= sigmas
    }
}

/// Both sides of the duality identity estimated from independent seeds.
pub fn duality_statistical(
    v: &Site,
    initial: &[Site],
    t: f64,
    alpha: &Influence,
    window: LatticeBox,
    replicas: usize,
    seed: u64,
) -> Result<StatisticalDuality> {
    let forward_kernel = InvasionKernel::new(alpha, window)?;
    let backward_kernel = InvasionKernel::new(&alpha.transpose(), window)?;
    let fseed = derive_seed(seed, "duality-forward");
    let bseed = derive_seed(seed, "duality-backward");
    let forward: Vec<bool> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            forward_kernel
                .simulate(initial, t, replica_seed(fseed, i))
                .map(|o| o.is_occupied(v))
        })
        .collect::<Result<_>>()?;
    let backward: Vec<bool> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            backward_kernel
                .simulate(std::slice::from_ref(v), t, replica_seed(bseed, i))
                .map(|o| initial.iter().any(|w| o.is_occupied(w)))
        })
        .collect::<Result<_>>()?;
    let count = |xs: &[bool]| xs.iter().filter(|&&b| b).count();
    Ok(StatisticalDuality {
        forward: proportion(count(&forward), replicas),
        backward: proportion(count(&backward), replicas),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthRow {
    pub t: f64,
    pub mean_q: f64,
    pub sem: f64,
    /// `λ_w e^{A t}`.
    pub bound: f64,
    pub boundary_touch_fraction: f64,
}

impl GrowthRow {
    /// `mean ≤ bound · (1 + sigmas · SEM / mean)`.
    pub fn within_bound(&self, sigmas: f64) -> bool {
        let rel = if self.mean_q > 0.0 {
            self.sem / self.mean_q
        } else {
            0.0
        };
        self.mean_q <= self.bound * (1.0 + sigmas * rel) * (1.0 + 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    pub a_constant: f64,
    pub rows: Vec<GrowthRow>,
    /// Means are nondecreasing along the grid.
    pub monotone: bool,
}

/// Mean weighted size `E_{w,ᾱ}[q(ζ_t)]` along a time grid, with the bound
/// `λ_w e^{A t}` where `A` is the influence constant of `α = transpose(ᾱ)`.
pub fn growth_curve(
    w: &Site,
    alpha_bar: &Influence,
    weights: &WeightFamily,
    t_grid: &[f64],
    replicas: usize,
    window: LatticeBox,
    seed: u64,
) -> Result<GrowthReport> {
    if t_grid.windows(2).any(|p| p[0] > p[1]) || t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(SpinError::InvalidParameter(
            "time grid must be nonnegative and nondecreasing".into(),
        ));
    }
    if replicas == 0 {
        return Err(SpinError::InvalidParameter(
            "replicas must be positive".into(),
        ));
    }
    let a = influence_constant(&alpha_bar.transpose(), weights, Some(&window))?;
    let kernel = InvasionKernel::new(alpha_bar, window)?;
    let t_max = t_grid.last().copied().unwrap_or(0.0);
    let runs: Vec<InvasionOutcome> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| kernel.simulate(std::slice::from_ref(w), t_max, replica_seed(seed, i)))
        .collect::<Result<_>>()?;
    let lw = weights.lambda(w);
    let rows: Vec<GrowthRow> = t_grid
        .iter()
        .map(|&t| {
            let qs: Vec<f64> = runs
                .iter()
                .map(|r| {
                    let mut terms: Vec<f64> = r
                        .occupation_times()
                        .iter()
                        .filter(|(_, s)| *s <= t)
                        .map(|(y, _)| weights.lambda(y))
                        .collect();
                    terms.sort_by(f64::total_cmp);
                    crate::seeds::pairwise_sum(&terms)
                })
                .collect();
            let touches = runs
                .iter()
                .filter(|r| {
                    r.occupation_times()
                        .iter()
                        .any(|(y, s)| *s <= t && window.on_boundary(y))
                })
                .count();
            let (mean_q, sem) = mean_sem(&qs);
            GrowthRow {
                t,
                mean_q,
                sem,
                bound: lw * (a * t).exp(),
                boundary_touch_fraction: touches as f64 / replicas as f64,
            }
        })
        .collect();
    if let Some(last) = rows.last() {
        if last.boundary_touch_fraction > 0.0 {
            warn!(
                "{:.3}% of invasion runs reached the window boundary by t = {}",
                100.0 * last.boundary_touch_fraction,
                last.t
            );
        }
    }
    let monotone = rows.windows(2).all(|p| p[0].mean_q <= p[1].mean_q);
    Ok(GrowthReport {
        a_constant: a,
        rows,
        monotone,
    })
}

#[derive(Clone, Debug)]
pub struct MonotonePair {
    pub smaller: InvasionOutcome,
    pub larger: InvasionOutcome,
}

impl MonotonePair {
    /// Sites occupied under the smaller kernel but not the larger one.
    pub fn domination_violations(&self) -> Vec<Site> {
        self.smaller
            .occupation_times()
            .iter()
            .filter(|(s, _)| !self.larger.is_occupied(s))
            .map(|(s, _)| s.clone())
            .collect()
    }
}

/// Couple the `(W, α)` and `(W, α̃)` processes by thinning: every `α̃` arrow
/// with mark `m` also belongs to the `α` process iff `m α̃ < α`.
pub fn monotone_pair(
    alpha: &Influence,
    alpha_tilde: &Influence,
    initial: &[Site],
    t: f64,
    window: LatticeBox,
    seed: u64,
) -> Result<MonotonePair> {
    let big = InvasionKernel::new(alpha_tilde, window)?;
    let small_out = alpha.outgoing_in(&big.frame);
    let sites = big.frame.sites();
    for (x, targets) in small_out.iter().enumerate() {
        for &(y, a) in targets {
            let at = alpha_tilde.a_of(&sites[x], &sites[y]);
            if a > at * (1.0 + 1e-12) {
                return Err(SpinError::Precondition(format!(
                    "kernel not dominated at ({}, {}): {a} > {at}",
                    sites[x], sites[y]
                )));
            }
        }
    }
    let init = big.positions(initial)?;
    let larger = big.frontier(&init, t, seed, |_, _, _| true);
    let smaller = big.frontier(&init, t, seed, |x, y, mark| {
        let at = alpha_tilde.a_of(&sites[x], &sites[y]);
        mark * at < alpha.a_of(&sites[x], &sites[y])
    });
    Ok(MonotonePair {
        smaller: big.outcome(&smaller),
        larger: big.outcome(&larger),
    })
}
