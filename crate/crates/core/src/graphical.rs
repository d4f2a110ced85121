//! Processes read off one timeline: the finite systems `ξ^{η,n}` on a family
//! of boxes, the invasion processes `ζ^n` that bound their disagreements, and
//! the two-configuration coupling with its discrepancy process.
//!
//! Containment is checked exactly at every event. Violations are recorded,
//! not panicked on, so callers can report counterexamples.

use log::warn;

use crate::configurations::{Configuration, FrameState};
use crate::error::{Result, SpinError};
use crate::finite::Trajectory;
use crate::lattice::{LatticeBox, Site};
use crate::rates::{RateModel, WeightFamily};
use crate::timeline::{build_timeline, Timeline};

#[derive(Clone, Debug, PartialEq)]
pub struct ContainmentViolation {
    pub time: f64,
    pub site: Site,
    /// Radius of the box whose `ζ` vanishes at `site`.
    pub inner_box: u32,
    /// Radius of a larger box whose `ξ` disagrees there.
    pub outer_box: u32,
}

/// Output of [`run_coupled`]; index `k` refers to `boxes[k]`.
#[derive(Clone, Debug)]
pub struct CoupledBundle {
    boxes: Vec<u32>,
    xi: Vec<Trajectory>,
    zeta: Vec<Trajectory>,
    violations: Vec<ContainmentViolation>,
    events_processed: usize,
}

impl CoupledBundle {
    pub fn boxes(&self) -> &[u32] {
        &self.boxes
    }

    pub fn xi(&self, k: usize) -> &Trajectory {
        &self.xi[k]
    }

    pub fn zeta(&self, k: usize) -> &Trajectory {
        &self.zeta[k]
    }

    pub fn violations(&self) -> &[ContainmentViolation] {
        &self.violations
    }

    pub fn events_processed(&self) -> usize {
        self.events_processed
    }
}

fn window_of(timeline: &Timeline) -> Result<LatticeBox> {
    timeline
        .frame()
        .as_box()
        .ok_or_else(|| SpinError::Precondition("coupled runs need a timeline on a box".into()))
}

fn check_boxes(window: &LatticeBox, boxes: &[u32]) -> Result<()> {
    if boxes.is_empty() {
        return Err(SpinError::InvalidParameter("box schedule is empty".into()));
    }
    if let Some(w) = boxes.windows(2).find(|w| w[0] >= w[1]) {
        return Err(SpinError::InvalidParameter(format!(
            "box schedule must be strictly increasing, found {} then {}",
            w[0], w[1]
        )));
    }
    let largest = *boxes.last().expect("non-empty");
    if largest > window.radius() {
        return Err(SpinError::BoxOrder {
            inner: largest,
            outer: window.radius(),
        });
    }
    Ok(())
}

fn mark_overflow(time: f64, site: &Site, lower: f64, width: f64, rate: f64) -> SpinError {
    SpinError::MarkOverflow {
        time,
        site: site.to_string(),
        lower,
        width,
        rate,
    }
}

/// Drive `ξ^{η,n}` for every `n` in `boxes` and the invasion processes `ζ^n`
/// (started from the window minus `Box(n)`) with one timeline.
///
/// At a ring of `v` with mark `u`, `ξ^{η,n}` flips iff `u < c_v(ξ^{η,n})`, and
/// a vacant `ζ^n(v)` becomes occupied iff `A^n <= u < A^n + γ_a(v, ζ^n)`, where
/// `A^n` is the least rate at `v` among the copies on boxes `>= n`.
pub fn run_coupled(
    timeline: &Timeline,
    model: &RateModel,
    eta: &Configuration,
    boxes: &[u32],
    tol: f64,
) -> Result<CoupledBundle> {
    let window = window_of(timeline)?;
    check_boxes(&window, boxes)?;
    let frame = timeline.frame();
    let sites = frame.sites();
    let k_count = boxes.len();
    let norms: Vec<u64> = sites.iter().map(Site::max_norm).collect();
    let in_box = |k: usize, i: usize| norms[i] <= u64::from(boxes[k]);
    let incoming = model.influence().incoming_in(frame);

    let mut xi: Vec<FrameState> = (0..k_count).map(|_| FrameState::new(frame, eta)).collect();
    let mut zeta: Vec<Vec<bool>> = (0..k_count)
        .map(|k| (0..sites.len()).map(|i| !in_box(k, i)).collect())
        .collect();
    let zeta_initial: Vec<Configuration> = zeta
        .iter()
        .map(|z| Configuration::indicator(sites.iter().zip(z).filter(|(_, &b)| b).map(|(s, _)| s)))
        .collect();
    let mut xi_events: Vec<Vec<(f64, Site)>> = vec![Vec::new(); k_count];
    let mut zeta_events: Vec<Vec<(f64, Site)>> = vec![Vec::new(); k_count];
    let mut violations = Vec::new();
    let mut rates = vec![f64::NAN; k_count];
    let mut floors = vec![f64::NAN; k_count];

    let check =
        |xi: &[FrameState], zeta: &[Vec<bool>], time: f64, out: &mut Vec<ContainmentViolation>| {
            for k in 0..k_count {
                for (i, site) in sites.iter().enumerate() {
                    if !in_box(k, i) || zeta[k][i] {
                        continue;
                    }
                    for m in k + 1..k_count {
                        if xi[m].get(i) != xi[k].get(i) {
                            out.push(ContainmentViolation {
                                time,
                                site: site.clone(),
                                inner_box: boxes[k],
                                outer_box: boxes[m],
                            });
                        }
                    }
                }
            }
        };
    check(&xi, &zeta, 0.0, &mut violations);

    for e in timeline.events() {
        let i = e.site;
        let v = &sites[i];
        let clock = timeline.rates()[i];
        let first = match (0..k_count).find(|&k| in_box(k, i)) {
            Some(k) => k,
            None => continue,
        };
        for k in first..k_count {
            rates[k] = model.rate(v, &xi[k], tol);
            if rates[k] > clock * (1.0 + 1e-12) {
                return Err(mark_overflow(e.time, v, 0.0, rates[k], clock));
            }
        }
        let mut floor = f64::INFINITY;
        for k in (first..k_count).rev() {
            floor = floor.min(rates[k]);
            floors[k] = floor;
        }
        for k in first..k_count {
            if zeta[k][i] {
                continue;
            }
            let width: f64 = incoming[i]
                .iter()
                .filter(|(w, _)| zeta[k][*w])
                .map(|(_, a)| a)
                .sum();
            if floors[k] + width > clock * (1.0 + 1e-12) {
                return Err(mark_overflow(e.time, v, floors[k], width, clock));
            }
            if floors[k] <= e.mark && e.mark < floors[k] + width {
                zeta[k][i] = true;
                zeta_events[k].push((e.time, v.clone()));
            }
        }
        for k in first..k_count {
            if e.mark < rates[k] {
                xi[k].toggle(i);
                xi_events[k].push((e.time, v.clone()));
            }
        }
        check(&xi, &zeta, e.time, &mut violations);
    }

    let horizon = timeline.horizon();
    Ok(CoupledBundle {
        boxes: boxes.to_vec(),
        xi: xi_events
            .into_iter()
            .map(|ev| Trajectory::new(eta.clone(), ev, horizon))
            .collect(),
        zeta: zeta_events
            .into_iter()
            .zip(zeta_initial)
            .map(|(ev, init)| Trajectory::new(init, ev, horizon))
            .collect(),
        violations,
        events_processed: timeline.events().len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InclusionViolation {
    pub time: f64,
    pub site: Site,
}

/// Output of [`run_two_config`].
#[derive(Clone, Debug)]
pub struct TwoConfigRun {
    pub first: Trajectory,
    pub second: Trajectory,
    /// The discrepancy process `Γ`, started from `1_w`.
    pub discrepancy: Trajectory,
    pub violations: Vec<InclusionViolation>,
}

/// Couple the finite systems on `Box(n)` started from `η` and `η^w` through one
/// timeline, together with the discrepancy process `Γ`: a vacant `Γ(v)`
/// becomes occupied iff `B <= u < B + γ(v, Γ)` with `B` the smaller of the two
/// rates at `v`. `Γ` spreads with the influence restricted to targets in
/// `Box(n)`, which is `a_n` whenever `w ∈ Box(n)`.
pub fn run_two_config(
    timeline: &Timeline,
    model: &RateModel,
    eta: &Configuration,
    w: &Site,
    n: u32,
    tol: f64,
) -> Result<TwoConfigRun> {
    let window = window_of(timeline)?;
    check_boxes(&window, &[n])?;
    let frame = timeline.frame();
    let sites = frame.sites();
    let wi = frame.position(w).ok_or_else(|| {
        SpinError::Precondition(format!(
            "flipped site {w} lies outside the window: the two copies coincide on it"
        ))
    })?;
    let active = LatticeBox::new(window.dim(), n);
    let incoming = model
        .influence()
        .restrict_targets(active)
        .incoming_in(frame);
    let eta2 = eta.flip(w);
    let mut xi1 = FrameState::new(frame, eta);
    let mut xi2 = FrameState::new(frame, &eta2);
    let mut gamma = vec![false; sites.len()];
    gamma[wi] = true;
    let mut ev1 = Vec::new();
    let mut ev2 = Vec::new();
    let mut evg = Vec::new();
    let mut violations = Vec::new();

    let check = |x1: &FrameState,
                 x2: &FrameState,
                 g: &[bool],
                 time: f64,
                 out: &mut Vec<InclusionViolation>| {
        for (i, site) in sites.iter().enumerate() {
            if x1.get(i) != x2.get(i) && !g[i] {
                out.push(InclusionViolation {
                    time,
                    site: site.clone(),
                });
            }
        }
    };
    check(&xi1, &xi2, &gamma, 0.0, &mut violations);

    for e in timeline.events() {
        let i = e.site;
        let v = &sites[i];
        if !active.contains(v) {
            continue;
        }
        let clock = timeline.rates()[i];
        let c1 = model.rate(v, &xi1, tol);
        let c2 = model.rate(v, &xi2, tol);
        if c1.max(c2) > clock * (1.0 + 1e-12) {
            return Err(mark_overflow(e.time, v, 0.0, c1.max(c2), clock));
        }
        if !gamma[i] {
            let floor = c1.min(c2);
            let width: f64 = incoming[i]
                .iter()
                .filter(|(x, _)| gamma[*x])
                .map(|(_, a)| a)
                .sum();
            if floor + width > clock * (1.0 + 1e-12) {
                return Err(mark_overflow(e.time, v, floor, width, clock));
            }
            if floor <= e.mark && e.mark < floor + width {
                gamma[i] = true;
                evg.push((e.time, v.clone()));
            }
        }
        if e.mark < c1 {
            xi1.toggle(i);
            ev1.push((e.time, v.clone()));
        }
        if e.mark < c2 {
            xi2.toggle(i);
            ev2.push((e.time, v.clone()));
        }
        check(&xi1, &xi2, &gamma, e.time, &mut violations);
    }

    let horizon = timeline.horizon();
    Ok(TwoConfigRun {
        first: Trajectory::new(eta.clone(), ev1, horizon),
        second: Trajectory::new(eta2, ev2, horizon),
        discrepancy: Trajectory::new(Configuration::indicator([w]), evg, horizon),
        violations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitEstimate {
    /// `ξ^{η,n_K}_t(v)` for the largest box.
    pub value: bool,
    /// Smallest 1-based `i` with `ξ^{η,n_i}_t(v) = … = ξ^{η,n_K}_t(v)`.
    pub stabilization_index: usize,
    /// True when only the largest box agrees with itself (`index = K > 1`).
    pub window_limited: bool,
}

/// Estimate the limit process at `(v, t)` from the coupled copies on
/// `boxes`, simulated on a window equal to the largest box.
pub fn limit_estimate(
    model: &RateModel,
    weights: &WeightFamily,
    eta: &Configuration,
    v: &Site,
    t: f64,
    boxes: &[u32],
    seed: u64,
    tol: f64,
) -> Result<LimitEstimate> {
    let largest = *boxes
        .last()
        .ok_or_else(|| SpinError::InvalidParameter("box schedule is empty".into()))?;
    let window = LatticeBox::new(model.dim(), largest);
    let timeline = build_timeline(window, t, model, weights, seed)?;
    let bundle = run_coupled(&timeline, model, eta, boxes, tol)?;
    let values: Vec<bool> = (0..boxes.len())
        .map(|k| bundle.xi(k).final_state().eval(v))
        .collect();
    let value = *values.last().expect("non-empty");
    let stabilization_index = values
        .iter()
        .rposition(|&b| b != value)
        .map_or(1, |i| i + 2);
    let window_limited = boxes.len() > 1 && stabilization_index == boxes.len();
    if window_limited {
        warn!(
            "value at {v} only settles in the largest box (radius {largest}); the window may be too small"
        );
    }
    Ok(LimitEstimate {
        value,
        stabilization_index,
        window_limited,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::{run_on_timeline, FiniteSystem};

    fn contact() -> RateModel {
        RateModel::contact(1, 1.5).unwrap()
    }

    #[test]
    fn single_box_matches_the_finite_simulator() {
        let m = contact();
        let eta = Configuration::indicator(&[Site::d1(0)]);
        let w = WeightFamily::uniform();
        for seed in 0..20 {
            let tl = build_timeline(LatticeBox::new(1, 2), 1.0, &m, &w, seed).unwrap();
            let bundle = run_coupled(&tl, &m, &eta, &[2], 1e-9).unwrap();
            let sys =
                FiniteSystem::on_box(eta.clone(), LatticeBox::new(1, 2), m.clone(), 1.0).unwrap();
            let plain = run_on_timeline(&sys, &tl).unwrap();
            assert_eq!(bundle.xi(0), &plain);
        }
    }

    #[test]
    fn independent_spins_never_grow_zeta() {
        let m = RateModel::independent(1, 1.0, 2.0).unwrap();
        let w = WeightFamily::uniform();
        let tl = build_timeline(LatticeBox::new(1, 4), 2.0, &m, &w, 5).unwrap();
        let b = run_coupled(&tl, &m, &Configuration::zero(), &[1, 2, 4], 0.0).unwrap();
        assert!(b.violations().is_empty());
        for k in 0..3 {
            assert!(b.zeta(k).events().is_empty());
        }
        let inner = LatticeBox::new(1, 1);
        for t in [0.5, 1.0, 2.0] {
            let x0 = b.xi(0).state_at(t);
            for k in 1..3 {
                assert!(x0.agree_on(&b.xi(k).state_at(t), &inner.sites()));
            }
        }
    }

    #[test]
    fn contact_containment_holds() {
        let m = contact();
        let w = WeightFamily::uniform();
        let eta: Configuration = "bg=period:10; dev=".parse().unwrap();
        for seed in 0..200 {
            let tl = build_timeline(LatticeBox::new(1, 4), 1.0, &m, &w, seed).unwrap();
            let b = run_coupled(&tl, &m, &eta, &[1, 2, 3], 1e-9).unwrap();
            assert!(
                b.violations().is_empty(),
                "seed {seed}: {:?}",
                b.violations()[0]
            );
        }
    }

    #[test]
    fn two_config_inclusion_holds() {
        let m = contact();
        let w = WeightFamily::uniform();
        let eta: Configuration = "bg=period:10; dev=".parse().unwrap();
        for seed in 0..200 {
            let tl = build_timeline(LatticeBox::new(1, 4), 1.0, &m, &w, seed).unwrap();
            let r = run_two_config(&tl, &m, &eta, &Site::d1(0), 3, 1e-9).unwrap();
            assert!(r.violations.is_empty());
        }
    }

    #[test]
    fn independent_discrepancy_stays_at_the_flipped_site() {
        let m = RateModel::independent(1, 1.0, 1.0).unwrap();
        let w = WeightFamily::uniform();
        let tl = build_timeline(LatticeBox::new(1, 3), 3.0, &m, &w, 1).unwrap();
        let r = run_two_config(&tl, &m, &Configuration::zero(), &Site::d1(1), 2, 0.0).unwrap();
        assert!(r.discrepancy.events().is_empty());
        let off: Vec<Site> = (-3..=3).filter(|&x| x != 1).map(Site::d1).collect();
        for t in [0.5, 1.5, 3.0] {
            assert!(r.first.state_at(t).agree_on(&r.second.state_at(t), &off));
        }
    }

    #[test]
    fn flipped_site_outside_window_is_rejected() {
        let m = contact();
        let tl =
            build_timeline(LatticeBox::new(1, 2), 1.0, &m, &WeightFamily::uniform(), 0).unwrap();
        let err = run_two_config(&tl, &m, &Configuration::zero(), &Site::d1(7), 1, 0.0);
        assert!(matches!(err, Err(SpinError::Precondition(_))));
    }

    #[test]
    fn limit_estimate_at_time_zero_is_the_initial_value() {
        let m = contact();
        let eta = Configuration::indicator(&[Site::d1(0)]);
        let est = limit_estimate(
            &m,
            &WeightFamily::uniform(),
            &eta,
            &Site::d1(0),
            0.0,
            &[1, 2, 3],
            4,
            1e-9,
        )
        .unwrap();
        assert!(est.value);
        assert_eq!(est.stabilization_index, 1);
    }

    #[test]
    fn independent_limit_stabilizes_immediately() {
        let m = RateModel::independent(1, 1.0, 1.0).unwrap();
        for seed in 0..30 {
            let est = limit_estimate(
                &m,
                &WeightFamily::uniform(),
                &Configuration::zero(),
                &Site::d1(0),
                1.0,
                &[1, 2, 3],
                seed,
                0.0,
            )
            .unwrap();
            assert_eq!(est.stabilization_index, 1);
        }
    }

    #[test]
    fn bad_box_schedules_are_rejected() {
        let m = contact();
        let tl =
            build_timeline(LatticeBox::new(1, 2), 1.0, &m, &WeightFamily::uniform(), 0).unwrap();
        let eta = Configuration::zero();
        assert!(run_coupled(&tl, &m, &eta, &[2, 1], 0.0).is_err());
        assert!(run_coupled(&tl, &m, &eta, &[1, 3], 0.0).is_err());
        assert!(run_coupled(&tl, &m, &eta, &[], 0.0).is_err());
    }
}
