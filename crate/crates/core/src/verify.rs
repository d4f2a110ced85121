//! The standard verification suite and model-specific checks.
//!
//! Each criterion returns a [`CriterionOutcome`]; the suite is deterministic
//! given [`SuiteOptions::seed`]. `scale` multiplies every replica and seed
//! count (1.0 is the full suite).

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::configurations::Configuration;
use crate::error::Result;
use crate::experiment::ExperimentConfig;
use crate::finite::{simulate_terminal, ExactOracle, FiniteSystem};
use crate::graphical::{limit_estimate, run_coupled, run_two_config};
use crate::invasion::{
    duality_check, duality_statistical, growth_curve, monotone_pair, simulate_invasion,
};
use crate::lattice::{LatticeBox, Site};
use crate::observables::{
    generator_check, integral_identity_check, invariance_check, triple_norm_growth, Construction,
    InvarianceMode, LocalFunction, MeasureSpec,
};
use crate::rates::{check_lipschitz, influence_brute_force, RateModel, WeightFamily};
use crate::seeds::{derive_seed, proportion, replica_seed, total_variation};
use crate::timeline::build_timeline;

const TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 20240601,
            scale: 1.0,
        }
    }
}

impl SuiteOptions {
    pub fn quick() -> Self {
        SuiteOptions {
            scale: 0.1,
            ..Self::default()
        }
    }

    fn count(&self, full: usize) -> usize {
        ((full as f64 * self.scale).round() as usize).max(10)
    }

    fn sub_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: &str, name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> CriterionOutcome {
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome {
        id: id.to_string(),
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn origin() -> Site {
    Site::d1(0)
}

fn contact(infection: f64) -> RateModel {
    RateModel::contact(1, infection).expect("valid infection rate")
}

fn alternating() -> Configuration {
    "bg=period:10; dev=".parse().expect("valid configuration")
}

/// Empirical end-state law of a finite system against its oracle.
fn oracle_tv(system: &FiniteSystem, samples: usize, seed: u64) -> Result<f64> {
    let oracle = ExactOracle::new(system)?;
    let exact = oracle.distribution(system.horizon());
    let states: Vec<usize> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            simulate_terminal(system, replica_seed(seed, i))
                .iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .fold(0usize, |acc, (k, _)| acc | (1 << k))
        })
        .collect();
    let mut counts = vec![0usize; exact.len()];
    for s in states {
        counts[s] += 1;
    }
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / samples as f64).collect();
    Ok(total_variation(&empirical, &exact))
}

pub fn oracle_equivalence(opts: &SuiteOptions) -> CriterionOutcome {
    timed("1", "oracle equivalence", || {
        let eta = Configuration::indicator(&[origin()]);
        let system = FiniteSystem::on_box(eta, LatticeBox::new(1, 1), contact(1.5), 1.0)?;
        let samples = opts.count(100_000);
        let tv = oracle_tv(&system, samples, opts.sub_seed("oracle"))?;
        Ok((
            tv <= 0.02,
            format!("TV = {tv:.4} over {samples} samples (limit 0.02)"),
        ))
    })
}

fn seeds(opts: &SuiteOptions, label: &str, full: usize) -> Vec<u64> {
    let base = opts.sub_seed(label);
    (0..opts.count(full) as u64)
        .map(|i| replica_seed(base, i))
        .collect()
}

pub fn coupling_containment(opts: &SuiteOptions) -> CriterionOutcome {
    timed("2", "coupling containment", || {
        let model = contact(1.5);
        let eta = alternating();
        let window = LatticeBox::new(1, 4);
        let weights = WeightFamily::uniform();
        let runs = seeds(opts, "containment", 10_000);
        let violations = runs
            .par_iter()
            .map(|&s| {
                let tl = build_timeline(window, 1.0, &model, &weights, s)?;
                Ok(run_coupled(&tl, &model, &eta, &[1, 2, 3], TOL)?
                    .violations()
                    .len())
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum::<usize>();
        Ok((
            violations == 0,
            format!("{violations} violations over {} seeds", runs.len()),
        ))
    })
}

pub fn two_config_discrepancy(opts: &SuiteOptions) -> CriterionOutcome {
    timed("3", "two-configuration discrepancy", || {
        let model = contact(1.5);
        let eta = alternating();
        let window = LatticeBox::new(1, 4);
        let weights = WeightFamily::uniform();
        let runs = seeds(opts, "two-config", 10_000);
        let violations = runs
            .par_iter()
            .map(|&s| {
                let tl = build_timeline(window, 1.0, &model, &weights, s)?;
                let mut total = 0;
                for n in [1, 2, 3] {
                    total += run_two_config(&tl, &model, &eta, &origin(), n, TOL)?
                        .violations
                        .len();
                }
                Ok(total)
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum::<usize>();
        Ok((
            violations == 0,
            format!(
                "{violations} violations over {} seeds x boxes 1,2,3",
                runs.len()
            ),
        ))
    })
}

pub fn duality(opts: &SuiteOptions) -> CriterionOutcome {
    timed("4", "duality", || {
        let alpha = contact(1.5).influence();
        let inner = LatticeBox::new(1, 1);
        let initial: Vec<Site> = LatticeBox::new(1, 2)
            .sites()
            .into_iter()
            .filter(|s| !inner.contains(s))
            .collect();
        let window = LatticeBox::new(1, 6);
        let n = opts.count(10_000) as u64;
        let base = opts.sub_seed("duality") >> 1;
        let report = duality_check(&origin(), &initial, 1.0, &alpha, window, base..base + n)?;
        let stat = duality_statistical(
            &origin(),
            &initial,
            1.0,
            &alpha,
            window,
            n as usize,
            opts.sub_seed("duality-statistical"),
        )?;
        let passed = report.violations.is_empty() && stat.agrees_within(3.0);
        Ok((
            passed,
            format!(
                "{} per-sample violations over {} graphs; forward {:.4}±{:.4}, backward {:.4}±{:.4}, z = {:.2}",
                report.violations.len(),
                report.samples,
                stat.forward.0,
                stat.forward.1,
                stat.backward.0,
                stat.backward.1,
                stat.z_score()
            ),
        ))
    })
}

pub fn growth_bound(opts: &SuiteOptions) -> CriterionOutcome {
    timed("5", "growth bound", || {
        let alpha_bar = contact(1.5).influence().transpose();
        let report = growth_curve(
            &origin(),
            &alpha_bar,
            &WeightFamily::uniform(),
            &[0.25, 0.5, 1.0],
            opts.count(10_000),
            LatticeBox::new(1, 12),
            opts.sub_seed("growth"),
        )?;
        let rows_ok = report.rows.iter().all(|r| r.within_bound(3.0));
        let touch = report
            .rows
            .last()
            .map_or(0.0, |r| r.boundary_touch_fraction);
        let cells: Vec<String> = report
            .rows
            .iter()
            .map(|r| format!("t={}: {:.3}±{:.3} <= {:.3}", r.t, r.mean_q, r.sem, r.bound))
            .collect();
        Ok((
            rows_ok && touch <= 0.01,
            format!(
                "A = {}; {}; boundary touch {:.4}",
                report.a_constant,
                cells.join(", "),
                touch
            ),
        ))
    })
}

pub fn monotone_coupling(opts: &SuiteOptions) -> CriterionOutcome {
    timed("6", "monotone coupling", || {
        let small = contact(1.0).influence().transpose();
        let large = contact(1.5).influence().transpose();
        let window = LatticeBox::new(1, 8);
        let runs = seeds(opts, "monotone", 10_000);
        let violations = runs
            .par_iter()
            .map(|&s| {
                let pair = monotone_pair(&small, &large, &[origin()], 1.0, window, s)?;
                Ok(pair.domination_violations().len())
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum::<usize>();
        Ok((
            violations == 0,
            format!("{violations} violations over {} seeds", runs.len()),
        ))
    })
}

pub fn generator_limit(opts: &SuiteOptions) -> CriterionOutcome {
    timed("7", "generator limit", || {
        let f = LocalFunction::coordinate(origin());
        let times = [0.2, 0.1, 0.05];
        let independent = RateModel::independent(1, 1.0, 1.0)?;
        let report = generator_check(
            &f,
            &Configuration::zero(),
            &independent,
            &times,
            1,
            opts.count(100_000),
            opts.sub_seed("generator-independent"),
            Construction::Thinned,
        )?;
        let mut closed_ok = true;
        let mut cells = Vec::new();
        for r in &report.rows {
            let exact = (1.0 - (-2.0 * r.t).exp()) / (2.0 * r.t);
            let err = (r.quotient - exact).abs();
            closed_ok &= err <= 3.0 * r.sem / r.t;
            cells.push(format!(
                "t={}: |{:.4}-{:.4}| vs {:.4}",
                r.t,
                r.quotient,
                exact,
                3.0 * r.sem / r.t
            ));
        }
        let eta = Configuration::indicator(&[Site::d1(1)]);
        let contact_report = generator_check(
            &f,
            &eta,
            &contact(1.5),
            &times,
            1,
            opts.count(100_000),
            opts.sub_seed("generator-contact"),
            Construction::Thinned,
        )?;
        let residuals: Vec<String> = contact_report
            .rows
            .iter()
            .map(|r| format!("{:.4}", r.residual))
            .collect();
        Ok((
            closed_ok && contact_report.decreasing,
            format!(
                "independent {}; contact residuals [{}]",
                cells.join(", "),
                residuals.join(", ")
            ),
        ))
    })
}

pub fn integral_identity(_opts: &SuiteOptions) -> CriterionOutcome {
    timed("8", "integral identity", || {
        let f = LocalFunction::coordinate(origin());
        let eta = Configuration::indicator(&[origin()]);
        let report = integral_identity_check(&f, &eta, &contact(1.5), 1.0, 1, 65)?;
        Ok((
            report.residual <= 1e-6,
            format!(
                "lhs {:.10}, rhs {:.10}, residual {:.2e} (limit 1e-6)",
                report.lhs, report.rhs, report.residual
            ),
        ))
    })
}

pub fn norm_growth(opts: &SuiteOptions) -> CriterionOutcome {
    timed("9", "norm growth", || {
        let f = LocalFunction::coordinate(origin());
        let report = triple_norm_growth(
            &f,
            &RateModel::independent(1, 1.0, 1.0)?,
            &WeightFamily::uniform(),
            &Configuration::zero(),
            0.5,
            2,
            opts.count(10_000),
            opts.sub_seed("norm-growth"),
        )?;
        Ok((
            report.within_bound(3.0),
            format!(
                "estimate {:.4}±{:.4}, bound {:.4} (A = {})",
                report.estimate, report.sigma, report.bound, report.a_constant
            ),
        ))
    })
}

/// Indicators of every pattern on each support; by linearity they span all
/// tabulated functions there.
fn indicator_basis() -> Vec<LocalFunction> {
    let supports: [&[i64]; 5] = [&[0], &[0, 1], &[0, 2], &[-1, 0, 1], &[0, 1, 3]];
    let mut out = Vec::new();
    for s in supports {
        let sites: Vec<Site> = s.iter().map(|&x| Site::d1(x)).collect();
        for p in 0..1usize << sites.len() {
            let mut table = vec![0.0; 1 << sites.len()];
            table[p] = 1.0;
            out.push(LocalFunction::new(sites.clone(), table).expect("valid table"));
        }
    }
    out
}

pub fn invariance(_opts: &SuiteOptions) -> CriterionOutcome {
    timed("10", "invariance", || {
        let basis = indicator_basis();
        let mut worst: f64 = 0.0;
        for (birth, death) in [(1.0, 1.0), (2.0, 3.0)] {
            let model = RateModel::independent(1, birth, death)?;
            let mu = MeasureSpec::bernoulli(birth / (birth + death))?;
            for f in &basis {
                let est = invariance_check(&mu, f, &model, InvarianceMode::Exact, TOL)?;
                worst = worst.max(est.value.abs());
            }
        }
        let voter = RateModel::voter(1);
        let all_one = MeasureSpec::PointMass(Configuration::one());
        let mut voter_exact = true;
        for f in &basis {
            voter_exact &=
                invariance_check(&all_one, f, &voter, InvarianceMode::Exact, TOL)?.value == 0.0;
        }
        Ok((
            worst <= 1e-12 && voter_exact,
            format!(
                "{} functions; independent max |∫Ωf dμ| = {worst:.2e}; voter at all-one exactly zero: {voter_exact}",
                basis.len()
            ),
        ))
    })
}

/// Brute-force influence and Lipschitz audit for one model on radius-2
/// windows. Returns (passed, detail).
pub fn influence_audit(model: &RateModel) -> Result<(bool, String)> {
    let declared = model.influence();
    let o = Site::origin(model.dim());
    let radius = if model.dim() == 1 { 2 } else { 1 };
    let brute = influence_brute_force(model, radius, TOL)?;
    let mut mismatches = 0;
    for (offset, sup) in &brute {
        if declared.a_of(offset, &o) != *sup {
            mismatches += 1;
        }
    }
    let report = check_lipschitz(model, &LatticeBox::new(model.dim(), radius), &o, TOL)?;
    let ok = mismatches == 0 && report.passed() && report.worst_slack >= 0.0;
    Ok((
        ok,
        format!(
            "{}: {mismatches} influence mismatches, {} pairs checked, worst slack {:.3e}",
            model.name(),
            report.pairs_checked,
            report.worst_slack
        ),
    ))
}

pub fn influence_correctness(_opts: &SuiteOptions) -> CriterionOutcome {
    timed("11", "influence correctness", || {
        let models = [
            contact(1.5),
            RateModel::voter(1),
            RateModel::glauber(1, 0.7)?,
            RateModel::independent(1, 2.0, 3.0)?,
        ];
        let mut passed = true;
        let mut details = Vec::new();
        for m in &models {
            let (ok, d) = influence_audit(m)?;
            passed &= ok;
            details.push(d);
        }
        Ok((passed, details.join("; ")))
    })
}

pub fn limit_stabilization(opts: &SuiteOptions) -> CriterionOutcome {
    timed("12", "limit stabilization", || {
        let model = contact(1.5);
        let weights = WeightFamily::uniform();
        let boxes: Vec<u32> = (1..=6).collect();
        let eta = Configuration::one();
        let runs = seeds(opts, "stabilization", 10_000);
        let late = runs
            .par_iter()
            .map(|&s| {
                let est = limit_estimate(&model, &weights, &eta, &origin(), 0.5, &boxes, s, TOL)?;
                Ok(usize::from(est.stabilization_index > 3))
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum::<usize>();
        let alpha_bar = model.influence().transpose();
        let window = LatticeBox::new(1, 8);
        let inner = LatticeBox::new(1, 3);
        let escape_runs = seeds(opts, "stabilization-escape", 10_000);
        let escapes = escape_runs
            .par_iter()
            .map(|&s| {
                let out = simulate_invasion(&[origin()], &alpha_bar, 0.5, window, s)?;
                Ok(usize::from(
                    out.occupation_times()
                        .iter()
                        .any(|(v, _)| !inner.contains(v)),
                ))
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum::<usize>();
        let (p1, s1) = proportion(late, runs.len());
        let (p2, s2) = proportion(escapes, escape_runs.len());
        let sigma = (s1 * s1 + s2 * s2).sqrt();
        Ok((
            p1 <= p2 + 3.0 * sigma,
            format!("P(index > 3) = {p1:.4}, P(escape Box(3)) = {p2:.4}, sigma {sigma:.4}"),
        ))
    })
}

type Criterion = fn(&SuiteOptions) -> CriterionOutcome;

pub const STANDARD_CRITERIA: [Criterion; 12] = [
    oracle_equivalence,
    coupling_containment,
    two_config_discrepancy,
    duality,
    growth_bound,
    monotone_coupling,
    generator_limit,
    integral_identity,
    norm_growth,
    invariance,
    influence_correctness,
    limit_stabilization,
];

/// Run the twelve standard criteria in order.
pub fn standard_suite(opts: &SuiteOptions) -> Vec<CriterionOutcome> {
    STANDARD_CRITERIA.iter().map(|c| c(opts)).collect()
}

/// Checks specific to the model of a configuration: influence audit,
/// oracle agreement on `Box(1)`, coupling containment on the configured
/// window and boxes, and the growth bound of its transposed influence.
pub fn model_suite(cfg: &ExperimentConfig, opts: &SuiteOptions) -> Vec<CriterionOutcome> {
    let model = &cfg.model;
    let dim = cfg.dimension;
    let mut out = Vec::new();
    if model.range().is_some() {
        out.push(timed("model-influence", "influence audit", || {
            influence_audit(model)
        }));
    }
    out.push(timed("model-oracle", "oracle equivalence", || {
        let system = FiniteSystem::on_box(
            cfg.initial.clone(),
            LatticeBox::new(dim, 1),
            model.clone(),
            cfg.horizon,
        )?;
        let samples = opts.count(100_000);
        let tv = oracle_tv(&system, samples, opts.sub_seed("model-oracle"))?;
        Ok((tv <= 0.02, format!("TV = {tv:.4} over {samples} samples")))
    }));
    out.push(timed("model-containment", "coupling containment", || {
        let runs = seeds(opts, "model-containment", cfg.replicas);
        let violations = runs
            .par_iter()
            .map(|&s| {
                let tl = build_timeline(cfg.window, cfg.horizon, model, &cfg.weights, s)?;
                Ok(run_coupled(&tl, model, &cfg.initial, &cfg.boxes, cfg.tol)?
                    .violations()
                    .len())
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum::<usize>();
        Ok((
            violations == 0,
            format!("{violations} violations over {} seeds", runs.len()),
        ))
    }));
    if model.range().is_some() {
        out.push(timed("model-growth", "growth bound", || {
            let report = growth_curve(
                &Site::origin(dim),
                &model.influence().transpose(),
                &cfg.weights,
                &cfg.time_grid,
                cfg.replicas,
                cfg.window,
                opts.sub_seed("model-growth"),
            )?;
            let ok = report.rows.iter().all(|r| r.within_bound(3.0));
            let cells: Vec<String> = report
                .rows
                .iter()
                .map(|r| format!("t={}: {:.3} <= {:.3}", r.t, r.mean_q, r.bound))
                .collect();
            Ok((ok, cells.join(", ")))
        }));
    }
    out
}

/// JSON manifest of a suite run.
pub fn manifest(outcomes: &[CriterionOutcome], opts: &SuiteOptions) -> serde_json::Value {
    serde_json::json!({
        "seed": opts.seed,
        "scale": opts.scale,
        "all_passed": outcomes.iter().all(|o| o.passed),
        "criteria": outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_basis_covers_every_pattern() {
        assert_eq!(indicator_basis().len(), 2 + 4 + 4 + 8 + 8);
    }

    #[test]
    fn exact_criteria_pass() {
        let opts = SuiteOptions::quick();
        assert!(integral_identity(&opts).passed);
        assert!(invariance(&opts).passed);
        assert!(influence_correctness(&opts).passed);
    }

    #[test]
    fn outcome_lines_name_their_status() {
        let o = CriterionOutcome {
            id: "1".into(),
            name: "x".into(),
            passed: false,
            detail: "d".into(),
            seconds: 0.0,
        };
        assert!(o.to_string().starts_with("FAIL [1] x"));
    }
}
