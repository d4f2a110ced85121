//! Realized Poisson clocks with uniform marks.
//!
//! Site `v` of the window carries a clock of intensity `rate_of(v)`; each ring
//! comes with a mark uniform on `[0, rate_of(v))`. A dynamics flips `v` at a
//! ring when the mark falls below its current rate, so any family of processes
//! read off the same timeline is coupled event by event.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Result, SpinError};
use crate::lattice::{Frame, LatticeBox, Site};
use crate::rates::{constant_a, constant_c, RateModel, WeightFamily};
use crate::seeds::{rng_from_seed, SimRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    /// Frame position of the ringing site.
    pub site: usize,
    pub mark: f64,
}

/// Superposed clocks of a finite set of sites, generated lazily in time order.
pub struct EventStream {
    rng: SimRng,
    clock: Option<Exp<f64>>,
    cumulative: Option<Vec<f64>>,
    rates: Vec<f64>,
    total: f64,
    horizon: f64,
    now: f64,
}

impl EventStream {
    pub fn new(rates: Vec<f64>, horizon: f64, seed: u64) -> Self {
        let total: f64 = rates.iter().sum();
        let uniform = rates.windows(2).all(|w| w[0] == w[1]);
        let cumulative = (!uniform).then(|| {
            rates
                .iter()
                .scan(0.0, |acc, r| {
                    *acc += r;
                    Some(*acc)
                })
                .collect()
        });
        EventStream {
            rng: rng_from_seed(seed),
            clock: (total > 0.0).then(|| Exp::new(total).expect("positive total rate")),
            cumulative,
            rates,
            total,
            horizon,
            now: 0.0,
        }
    }
}

impl Iterator for EventStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        let clock = self.clock.as_ref()?;
        self.now += clock.sample(&mut self.rng);
        if self.now > self.horizon {
            self.clock = None;
            return None;
        }
        let site = match &self.cumulative {
            None => self.rng.random_range(0..self.rates.len()),
            Some(cum) => {
                let x = self.rng.random::<f64>() * self.total;
                cum.partition_point(|&c| c <= x).min(cum.len() - 1)
            }
        };
        let mark = self.rng.random::<f64>() * self.rates[site];
        Some(Event {
            time: self.now,
            site,
            mark,
        })
    }
}

/// An immutable realization of the clocks on a finite frame over `[0, horizon]`.
#[derive(Clone, Debug)]
pub struct Timeline {
    frame: Frame,
    horizon: f64,
    rates: Vec<f64>,
    events: Vec<Event>,
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon >= 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(SpinError::InvalidParameter(format!(
            "horizon must be a nonnegative number, got {horizon}"
        )))
    }
}

impl Timeline {
    /// Clocks of arbitrary per-site intensities.
    pub fn with_rates(frame: Frame, rates: Vec<f64>, horizon: f64, seed: u64) -> Result<Self> {
        check_horizon(horizon)?;
        assert_eq!(frame.len(), rates.len(), "one rate per frame site");
        if let Some(bad) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(SpinError::InvalidParameter(format!(
                "clock intensity {bad}"
            )));
        }
        let events = EventStream::new(rates.clone(), horizon, seed).collect();
        Ok(Timeline {
            frame,
            horizon,
            rates,
            events,
        })
    }

    /// Clocks of common intensity `rate`, as used by the thinning simulator.
    pub fn uniform(frame: Frame, rate: f64, horizon: f64, seed: u64) -> Result<Self> {
        let rates = vec![rate; frame.len()];
        Self::with_rates(frame, rates, horizon, seed)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate_of(&self, v: &Site) -> Option<f64> {
        self.frame.position(v).map(|i| self.rates[i])
    }

    pub fn site(&self, e: &Event) -> &Site {
        &self.frame.sites()[e.site]
    }
}

/// Clocks of intensity `C + A λ_v / λ` on every site of `window`.
///
/// Refuses models with unbounded rates or divergent influence sums.
pub fn build_timeline(
    window: LatticeBox,
    horizon: f64,
    model: &RateModel,
    weights: &WeightFamily,
    seed: u64,
) -> Result<Timeline> {
    if window.dim() != model.dim() {
        return Err(SpinError::Dimension {
            expected: model.dim(),
            found: window.dim(),
        });
    }
    let c = constant_c(model)?;
    let a = constant_a(model, weights, Some(&window))?;
    let frame = Frame::from_box(window);
    let rates = frame
        .sites()
        .iter()
        .map(|v| c + a * weights.lambda(v) / weights.lambda_inf())
        .collect();
    Timeline::with_rates(frame, rates, horizon, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_horizon_has_no_events() {
        let m = RateModel::contact(1, 1.5).unwrap();
        let t =
            build_timeline(LatticeBox::new(1, 1), 0.0, &m, &WeightFamily::uniform(), 3).unwrap();
        assert!(t.events().is_empty());
    }

    #[test]
    fn contact_clock_intensity_is_c_plus_a() {
        let m = RateModel::contact(1, 1.5).unwrap();
        let t =
            build_timeline(LatticeBox::new(1, 1), 1.0, &m, &WeightFamily::uniform(), 3).unwrap();
        assert!(t.rates().iter().all(|&r| r == 6.0));
    }

    #[test]
    fn events_are_ordered_with_marks_in_range() {
        let m = RateModel::contact(2, 1.0).unwrap();
        let t =
            build_timeline(LatticeBox::new(2, 2), 2.0, &m, &WeightFamily::uniform(), 11).unwrap();
        assert!(t.events().windows(2).all(|w| w[0].time < w[1].time));
        for e in t.events() {
            assert!(e.time <= 2.0);
            assert!(e.mark >= 0.0 && e.mark < t.rates()[e.site]);
        }
    }

    #[test]
    fn mean_event_count_matches_total_intensity() {
        let m = RateModel::contact(1, 1.5).unwrap();
        let w = WeightFamily::uniform();
        let n = 4000;
        let total: usize = (0..n)
            .map(|s| {
                build_timeline(LatticeBox::new(1, 1), 1.0, &m, &w, s)
                    .unwrap()
                    .events()
                    .len()
            })
            .sum();
        let mean = total as f64 / n as f64;
        // Poisson(18): sd of the mean is sqrt(18 / 4000)
        assert!(
            (mean - 18.0).abs() < 4.0 * (18.0f64 / n as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn uneven_rates_select_sites_proportionally() {
        let frame = Frame::from_sites([Site::d1(0), Site::d1(1)]);
        let t = Timeline::with_rates(frame, vec![1.0, 3.0], 4000.0, 5).unwrap();
        let ones = t.events().iter().filter(|e| e.site == 1).count() as f64;
        let frac = ones / t.events().len() as f64;
        assert!((frac - 0.75).abs() < 0.02, "{frac}");
    }

    #[test]
    fn divergent_influence_is_refused() {
        let m = RateModel::long_range_geometric(1, 1.2, 1.0).unwrap();
        let err = build_timeline(LatticeBox::new(1, 2), 1.0, &m, &WeightFamily::uniform(), 0);
        assert!(err.unwrap_err().is_hypothesis_violation());
    }

    #[test]
    fn same_seed_same_timeline() {
        let m = RateModel::voter(1);
        let w = WeightFamily::uniform();
        let a = build_timeline(LatticeBox::new(1, 3), 3.0, &m, &w, 42).unwrap();
        let b = build_timeline(LatticeBox::new(1, 3), 3.0, &m, &w, 42).unwrap();
        assert_eq!(a.events(), b.events());
    }
}
