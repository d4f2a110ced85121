//! Finite spin systems: only the sites of a finite active set `W` flip, the
//! exterior stays frozen to the initial configuration.
//!
//! [`simulate_finite`] thins a rate-`C` clock per active site against the
//! current rates. [`ExactOracle`] solves the same chain by uniformization of
//! its `2^|W|`-state generator.

use crate::configurations::{Configuration, FrameState, SpinLookup};
use crate::error::{Result, SpinError};
use crate::lattice::{Frame, LatticeBox, Site};
use crate::observables::LocalFunction;
use crate::rates::{constant_c, RateModel};
use crate::seeds::pairwise_sum;
use crate::timeline::{EventStream, Timeline};

/// Largest active set the exact oracle accepts.
pub const MAX_ORACLE_SITES: usize = 14;
/// Largest active set for which full transition kernels are materialized.
pub const MAX_KERNEL_SITES: usize = 10;
/// Total Poisson truncation error allowed per uniformization call.
pub const TRUNCATION_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct FiniteSystem {
    eta: Configuration,
    active: Frame,
    model: RateModel,
    horizon: f64,
    tol: f64,
    c: f64,
}

impl FiniteSystem {
    pub fn new(
        eta: Configuration,
        active: impl IntoIterator<Item = Site>,
        model: RateModel,
        horizon: f64,
    ) -> Result<Self> {
        let active = Frame::from_sites(active);
        if let Some(v) = active.sites().iter().find(|v| v.dim() != model.dim()) {
            return Err(SpinError::Dimension {
                expected: model.dim(),
                found: v.dim(),
            });
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(SpinError::InvalidParameter(format!(
                "horizon must be a nonnegative number, got {horizon}"
            )));
        }
        let c = constant_c(&model)?;
        Ok(FiniteSystem {
            eta,
            active,
            model,
            horizon,
            tol: 1e-9,
            c,
        })
    }

    pub fn on_box(
        eta: Configuration,
        b: LatticeBox,
        model: RateModel,
        horizon: f64,
    ) -> Result<Self> {
        Self::new(eta, b.sites(), model, horizon)
    }

    /// Truncation tolerance for long-range rates.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn eta(&self) -> &Configuration {
        &self.eta
    }

    pub fn active(&self) -> &Frame {
        &self.active
    }

    pub fn model(&self) -> &RateModel {
        &self.model
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// The constant `C` of the model, the thinning clock intensity.
    pub fn rate_bound(&self) -> f64 {
        self.c
    }
}

/// Flips of a finite system: `events[k] = (time, site)`, strictly increasing
/// times in `(0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    initial: Configuration,
    events: Vec<(f64, Site)>,
    horizon: f64,
}

impl Trajectory {
    pub fn new(initial: Configuration, events: Vec<(f64, Site)>, horizon: f64) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0].0 < w[1].0));
        Trajectory {
            initial,
            events,
            horizon,
        }
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn events(&self) -> &[(f64, Site)] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// State at time `t`, right-continuous.
    pub fn state_at(&self, t: f64) -> Configuration {
        let mut cfg = self.initial.clone();
        for (_, v) in self.events.iter().take_while(|(s, _)| *s <= t) {
            cfg.flip_mut(v);
        }
        cfg
    }

    pub fn final_state(&self) -> Configuration {
        self.state_at(self.horizon)
    }

    /// `(time, site, value after the flip)` for every event.
    pub fn events_with_values(&self) -> Vec<(f64, Site, bool)> {
        let mut cfg = self.initial.clone();
        self.events
            .iter()
            .map(|(t, v)| {
                cfg.flip_mut(v);
                (*t, v.clone(), cfg.eval(v))
            })
            .collect()
    }
}

fn overflow(time: f64, site: &Site, rate: f64, clock: f64) -> SpinError {
    SpinError::MarkOverflow {
        time,
        site: site.to_string(),
        lower: 0.0,
        width: rate,
        rate: clock,
    }
}

/// Run the finite system on a given timeline: at a ring of active site `v`
/// with mark `u`, flip iff `u < c_v(current)`. Rings of inactive sites are
/// ignored. Each active site's clock must be at least its largest rate.
pub fn run_on_timeline(system: &FiniteSystem, timeline: &Timeline) -> Result<Trajectory> {
    let frame = timeline.frame();
    let mut active = vec![false; frame.len()];
    for v in system.active.sites() {
        let i = frame.position(v).ok_or_else(|| {
            SpinError::Precondition(format!("active site {v} has no clock on the timeline"))
        })?;
        active[i] = true;
    }
    let mut state = FrameState::new(frame, &system.eta);
    let mut events = Vec::new();
    for e in timeline.events() {
        if e.time > system.horizon {
            break;
        }
        if !active[e.site] {
            continue;
        }
        let v = timeline.site(e);
        let c = system.model.rate(v, &state, system.tol);
        if c > timeline.rates()[e.site] * (1.0 + 1e-12) {
            return Err(overflow(e.time, v, c, timeline.rates()[e.site]));
        }
        if e.mark < c {
            state.toggle(e.site);
            events.push((e.time, v.clone()));
        }
    }
    Ok(Trajectory::new(system.eta.clone(), events, system.horizon))
}

/// Thinning simulation of the finite system: clocks of intensity `C` on every
/// active site, deterministic given `seed`.
pub fn simulate_finite(system: &FiniteSystem, seed: u64) -> Result<Trajectory> {
    let timeline = Timeline::uniform(system.active.clone(), system.c, system.horizon, seed)?;
    run_on_timeline(system, &timeline)
}

/// Same law and randomness as [`simulate_finite`], returning only the final
/// spins of the active sites (in frame order) without recording events.
pub fn simulate_terminal(system: &FiniteSystem, seed: u64) -> Vec<bool> {
    let frame = &system.active;
    let mut state = FrameState::new(frame, &system.eta);
    let stream = EventStream::new(vec![system.c; frame.len()], system.horizon, seed);
    for e in stream {
        let v = &frame.sites()[e.site];
        if e.mark < system.model.rate(v, &state, system.tol) {
            state.toggle(e.site);
        }
    }
    state.bits().to_vec()
}

/// Uniformization oracle for a finite system with at most
/// [`MAX_ORACLE_SITES`] active sites. State `s` has bit `i` equal to the spin
/// at `active.sites()[i]`.
#[derive(Clone, Debug)]
pub struct ExactOracle {
    active: Frame,
    eta: Configuration,
    n: usize,
    /// `rates[s * n + i]`: rate of flipping site `i` in state `s`.
    rates: Vec<f64>,
    exit: Vec<f64>,
    uniform_rate: f64,
}

impl ExactOracle {
    pub fn new(system: &FiniteSystem) -> Result<Self> {
        let n = system.active.len();
        if n > MAX_ORACLE_SITES {
            return Err(SpinError::StateSpaceTooLarge {
                sites: n,
                max: MAX_ORACLE_SITES,
            });
        }
        let states = 1usize << n;
        let mut rates = Vec::with_capacity(states * n);
        let mut exit = Vec::with_capacity(states);
        for s in 0..states {
            let state = FrameState::from_bits(&system.active, &system.eta, bits_of(s, n));
            let row: Vec<f64> = system
                .active
                .sites()
                .iter()
                .map(|v| system.model.rate(v, &state, system.tol))
                .collect();
            exit.push(pairwise_sum(&row));
            rates.extend(row);
        }
        let uniform_rate = exit.iter().copied().fold(0.0, f64::max);
        Ok(ExactOracle {
            active: system.active.clone(),
            eta: system.eta.clone(),
            n,
            rates,
            exit,
            uniform_rate,
        })
    }

    pub fn active(&self) -> &Frame {
        &self.active
    }

    pub fn n_states(&self) -> usize {
        1 << self.n
    }

    /// Largest total exit rate, the uniformization intensity.
    pub fn uniform_rate(&self) -> f64 {
        self.uniform_rate
    }

    pub fn flip_rate(&self, state: usize, site: usize) -> f64 {
        self.rates[state * self.n + site]
    }

    pub fn state_of(&self, cfg: &impl SpinLookup) -> usize {
        self.active
            .sites()
            .iter()
            .enumerate()
            .filter(|(_, v)| cfg.spin(v))
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }

    pub fn initial_state(&self) -> usize {
        self.state_of(&self.eta)
    }

    pub fn configuration(&self, state: usize) -> Configuration {
        FrameState::from_bits(&self.active, &self.eta, bits_of(state, self.n)).to_configuration()
    }

    /// `f` evaluated at every state.
    pub fn values_of(&self, f: impl Fn(&FrameState) -> f64) -> Vec<f64> {
        (0..self.n_states())
            .map(|s| {
                f(&FrameState::from_bits(
                    &self.active,
                    &self.eta,
                    bits_of(s, self.n),
                ))
            })
            .collect()
    }

    pub fn function_values(&self, f: &LocalFunction) -> Vec<f64> {
        self.values_of(|state| f.eval(state))
    }

    /// `(Q g)(s) = Σ_i r_i(s) (g(s^i) - g(s))`.
    pub fn generator_apply(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n_states())
            .map(|s| {
                let terms: Vec<f64> = (0..self.n)
                    .map(|i| self.flip_rate(s, i) * (g[s ^ (1 << i)] - g[s]))
                    .collect();
                pairwise_sum(&terms)
            })
            .collect()
    }

    fn step_backward(&self, g: &[f64]) -> Vec<f64> {
        let q = self.generator_apply(g);
        g.iter()
            .zip(&q)
            .map(|(x, qx)| x + qx / self.uniform_rate)
            .collect()
    }

    fn step_forward(&self, p: &[f64]) -> Vec<f64> {
        (0..self.n_states())
            .map(|s| {
                let mut acc = p[s] * (1.0 - self.exit[s] / self.uniform_rate);
                for i in 0..self.n {
                    let from = s ^ (1 << i);
                    acc += p[from] * self.flip_rate(from, i) / self.uniform_rate;
                }
                acc
            })
            .collect()
    }

    fn uniformize(&self, v: &[f64], t: f64, step: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        assert!(t >= 0.0, "negative time");
        if t == 0.0 || self.uniform_rate == 0.0 {
            return v.to_vec();
        }
        // keep Λ dt <= 30 so that e^{-Λ dt} stays well inside f64 range
        let chunks = (self.uniform_rate * t / 30.0).ceil().max(1.0) as usize;
        let x = self.uniform_rate * t / chunks as f64;
        let eps = TRUNCATION_EPS / chunks as f64;
        let mut current = v.to_vec();
        for _ in 0..chunks {
            let mut weight = (-x).exp();
            let mut power = current.clone();
            let mut acc: Vec<f64> = power.iter().map(|p| weight * p).collect();
            let mut k = 0usize;
            loop {
                let next = weight * x / (k + 1) as f64;
                let tail_bound = if (k + 2) as f64 > x {
                    next / (1.0 - x / (k + 2) as f64)
                } else {
                    f64::INFINITY
                };
                if tail_bound < eps {
                    break;
                }
                power = step(&power);
                k += 1;
                weight = next;
                for (a, p) in acc.iter_mut().zip(&power) {
                    *a += weight * p;
                }
            }
            current = acc;
        }
        current
    }

    /// `p e^{tQ}`: the law at time `t` started from the distribution `p`.
    pub fn evolve(&self, p: &[f64], t: f64) -> Vec<f64> {
        self.uniformize(p, t, |x| self.step_forward(x))
    }

    /// `e^{tQ} g`: the function `s ↦ E_s[g(state_t)]`.
    pub fn apply(&self, g: &[f64], t: f64) -> Vec<f64> {
        self.uniformize(g, t, |x| self.step_backward(x))
    }

    /// Law at time `t` of the system started from its initial configuration.
    pub fn distribution(&self, t: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.n_states()];
        p[self.initial_state()] = 1.0;
        self.evolve(&p, t)
    }

    /// Transition kernel at time `t`, `kernel[s][s']`.
    pub fn kernel(&self, t: f64) -> Result<Vec<Vec<f64>>> {
        if self.n > MAX_KERNEL_SITES {
            return Err(SpinError::StateSpaceTooLarge {
                sites: self.n,
                max: MAX_KERNEL_SITES,
            });
        }
        Ok((0..self.n_states())
            .map(|s| {
                let mut p = vec![0.0; self.n_states()];
                p[s] = 1.0;
                self.evolve(&p, t)
            })
            .collect())
    }

    /// `S(t) f` at the initial configuration.
    pub fn expectation(&self, f: &LocalFunction, t: f64) -> f64 {
        let g = self.apply(&self.function_values(f), t);
        g[self.initial_state()]
    }
}

fn bits_of(state: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| state & (1 << i) != 0).collect()
}

/// `S_W(t) f(η) = E_{η,W}[f(ξ_t)]` computed exactly.
pub fn semigroup_exact(system: &FiniteSystem, t: f64, f: &LocalFunction) -> Result<f64> {
    Ok(ExactOracle::new(system)?.expectation(f, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;

    fn single_site(model: RateModel, horizon: f64) -> FiniteSystem {
        FiniteSystem::new(Configuration::zero(), [Site::d1(0)], model, horizon).unwrap()
    }

    #[test]
    fn contact_from_empty_never_moves() {
        let m = RateModel::contact(1, 2.0).unwrap();
        let sys =
            FiniteSystem::on_box(Configuration::zero(), LatticeBox::new(1, 3), m, 5.0).unwrap();
        for seed in 0..20 {
            assert!(simulate_finite(&sys, seed).unwrap().events().is_empty());
        }
    }

    #[test]
    fn voter_consensus_is_absorbing() {
        let sys = FiniteSystem::on_box(
            Configuration::one(),
            LatticeBox::new(1, 3),
            RateModel::voter(1),
            5.0,
        )
        .unwrap();
        assert!(simulate_finite(&sys, 9).unwrap().events().is_empty());
    }

    #[test]
    fn independent_two_state_closed_form() {
        let sys = single_site(RateModel::independent(1, 1.0, 1.0).unwrap(), 0.5);
        let oracle = ExactOracle::new(&sys).unwrap();
        let p = oracle.distribution(0.5);
        let want = (1.0 - (-1.0f64).exp()) / 2.0;
        assert!((p[1] - want).abs() < 1e-12);
        assert!((p[0] - (1.0 - want)).abs() < 1e-12);
        assert!((want - 0.3161).abs() < 1e-4);
    }

    #[test]
    fn distribution_at_zero_is_point_mass() {
        let m = RateModel::contact(1, 1.5).unwrap();
        let eta = Configuration::indicator(&[Site::d1(0)]);
        let sys = FiniteSystem::on_box(eta, LatticeBox::new(1, 1), m, 1.0).unwrap();
        let oracle = ExactOracle::new(&sys).unwrap();
        let p = oracle.distribution(0.0);
        assert_eq!(p[oracle.initial_state()], 1.0);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn kernel_rows_are_stochastic() {
        let m = RateModel::glauber(1, 0.7).unwrap();
        let sys =
            FiniteSystem::on_box(Configuration::zero(), LatticeBox::new(1, 1), m, 1.0).unwrap();
        let k = ExactOracle::new(&sys).unwrap().kernel(2.5).unwrap();
        for row in k {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= -1e-15));
        }
    }

    #[test]
    fn long_horizons_are_chunked() {
        let sys = single_site(RateModel::independent(1, 1.0, 1.0).unwrap(), 100.0);
        let p = ExactOracle::new(&sys).unwrap().distribution(100.0);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_large_active_sets() {
        let m = RateModel::voter(1);
        let sys =
            FiniteSystem::on_box(Configuration::zero(), LatticeBox::new(1, 7), m, 1.0).unwrap();
        assert!(matches!(
            ExactOracle::new(&sys),
            Err(SpinError::StateSpaceTooLarge { sites: 15, .. })
        ));
    }

    #[test]
    fn terminal_fast_path_matches_trajectory() {
        let m = RateModel::contact(1, 1.5).unwrap();
        let eta = Configuration::indicator(&[Site::d1(0)]);
        let sys = FiniteSystem::on_box(eta, LatticeBox::new(1, 2), m, 1.0).unwrap();
        for seed in 0..50 {
            let traj = simulate_finite(&sys, seed).unwrap().final_state();
            let bits = simulate_terminal(&sys, seed);
            for (v, b) in sys.active().sites().iter().zip(bits) {
                assert_eq!(traj.eval(v), b);
            }
        }
    }

    #[test]
    fn trajectory_state_is_right_continuous() {
        let v = Site::d1(0);
        let t = Trajectory::new(Configuration::zero(), vec![(0.5, v.clone())], 1.0);
        assert!(!t.state_at(0.49).eval(&v));
        assert!(t.state_at(0.5).eval(&v));
        assert_eq!(t.events_with_values(), vec![(0.5, v, true)]);
    }
}
