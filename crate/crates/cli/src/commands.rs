use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde_json::json;
use spinsys_core::experiment::ExperimentConfig;
use spinsys_core::invasion::{duality_check, duality_statistical, growth_curve};
use spinsys_core::observables::{
    generator_check as run_generator_check, invariance_check, triple_norm_growth, Construction,
    InvarianceMode,
};
use spinsys_core::rates::check_lipschitz;
use spinsys_core::seeds::{derive_seed, mean_sem, replica_seed};
use spinsys_core::verify::{manifest, model_suite, standard_suite, SuiteOptions};
use spinsys_core::{
    build_timeline, run_coupled, simulate_finite, FiniteSystem, LatticeBox, LocalFunction,
    MeasureSpec, Site, SpinError,
};

use crate::output::{csv_with_header, num, open};
use crate::{Common, Failure};

type Outcome = Result<(), Failure>;

fn config_error(location: &str, message: &str) -> Failure {
    Failure::Error(
        SpinError::Config {
            location: location.into(),
            message: message.into(),
        }
        .into(),
    )
}

/// Parse, apply overrides, echo the constants and audit a declared influence.
fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::from_path(&common.config)?;
    let mut raw = cfg.raw.clone();
    if let Some(seed) = common.seed {
        raw.seed = seed;
    }
    if let Some(r) = common.replicas {
        raw.replicas = r;
    }
    let cfg = ExperimentConfig::from_raw(raw)?;
    let k = cfg.constants()?;
    log::info!(
        "{}: C = {}, A = {}, lambda = {}",
        cfg.model.name(),
        k.c,
        k.a,
        k.lambda_inf
    );
    if cfg.model.has_declared_influence() {
        audit_declared_influence(&cfg)?;
    }
    Ok(cfg)
}

fn audit_declared_influence(cfg: &ExperimentConfig) -> Outcome {
    let dim = cfg.dimension;
    let fits = |r: u32| (2 * r as usize + 1).pow(dim as u32) <= 20;
    let largest = (0..=9).rev().find(|&r| fits(r)).unwrap_or(0);
    let radius = match cfg.model.range() {
        Some(r) => (r as u32).min(largest),
        None => largest,
    };
    if radius == 0 {
        return Ok(());
    }
    let report = check_lipschitz(
        &cfg.model,
        &LatticeBox::new(dim, radius),
        &Site::origin(dim),
        cfg.tol,
    )?;
    match report.witness {
        None => Ok(()),
        Some(w) => Err(Failure::Violation {
            message: format!(
                "declared influence of {} fails the Lipschitz check at the origin",
                cfg.model.name()
            ),
            counterexample: json!({
                "site": report.site.to_string(),
                "first": w.first.to_string(),
                "second": w.second.to_string(),
                "rate_gap": w.rate_gap,
                "bound": w.bound,
                "worst_slack": report.worst_slack,
            }),
        }),
    }
}

fn probe_site(cfg: &ExperimentConfig) -> Site {
    cfg.probe_site
        .clone()
        .unwrap_or_else(|| Site::origin(cfg.dimension))
}

fn probe_time(cfg: &ExperimentConfig) -> f64 {
    cfg.probe_time.unwrap_or(cfg.horizon)
}

fn function(cfg: &ExperimentConfig) -> Result<&LocalFunction, Failure> {
    cfg.function
        .as_ref()
        .ok_or_else(|| config_error("function", "this command needs a [function] section"))
}

pub fn simulate(common: &Common) -> Outcome {
    let cfg = load(common)?;
    let system = FiniteSystem::on_box(
        cfg.initial.clone(),
        cfg.active_box,
        cfg.model.clone(),
        cfg.horizon,
    )?
    .with_tol(cfg.tol);
    let traj = simulate_finite(&system, cfg.seed)?;
    let mut w = csv_with_header(
        common.out.as_deref(),
        &cfg,
        "simulate",
        &["time", "site", "value"],
    )?;
    for (t, site, value) in traj.events_with_values() {
        w.write_record([num(t), site.to_string(), u8::from(value).to_string()])
            .map_err(anyhow::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn converge(common: &Common) -> Outcome {
    let cfg = load(common)?;
    let v = probe_site(&cfg);
    let t = probe_time(&cfg);
    if !cfg.window.contains(&v) {
        return Err(config_error("probe.site", "must lie in the window"));
    }
    let k = cfg.boxes.len();
    let mut values = vec![Vec::with_capacity(cfg.replicas); k];
    for i in 0..cfg.replicas as u64 {
        let seed = replica_seed(cfg.seed, i);
        let tl = build_timeline(cfg.window, t, &cfg.model, &cfg.weights, seed)?;
        let bundle = run_coupled(&tl, &cfg.model, &cfg.initial, &cfg.boxes, cfg.tol)?;
        if let Some(bad) = bundle.violations().first() {
            return Err(Failure::Violation {
                message: "coupled processes escaped the invasion bound".into(),
                counterexample: json!({
                    "replica": i,
                    "seed": seed,
                    "time": bad.time,
                    "site": bad.site.to_string(),
                    "inner_box": bad.inner_box,
                    "outer_box": bad.outer_box,
                }),
            });
        }
        for (j, col) in values.iter_mut().enumerate() {
            col.push(bundle.xi(j).final_state().eval(&v));
        }
    }
    let mut w = csv_with_header(
        common.out.as_deref(),
        &cfg,
        "converge",
        &[
            "box",
            "mean",
            "sem",
            "disagree_with_largest",
            "disagree_sem",
        ],
    )?;
    let largest = &values[k - 1];
    for (j, col) in values.iter().enumerate() {
        let xs: Vec<f64> = col.iter().map(|&b| f64::from(u8::from(b))).collect();
        let ds: Vec<f64> = col
            .iter()
            .zip(largest)
            .map(|(a, b)| f64::from(u8::from(a != b)))
            .collect();
        let (m, s) = mean_sem(&xs);
        let (dm, ds) = mean_sem(&ds);
        w.write_record([cfg.boxes[j].to_string(), num(m), num(s), num(dm), num(ds)])
            .map_err(anyhow::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn duality(common: &Common) -> Outcome {
    let cfg = load(common)?;
    let v = probe_site(&cfg);
    let t = probe_time(&cfg);
    let initial = cfg
        .sources
        .clone()
        .ok_or_else(|| config_error("probe.sources", "duality needs the initial set"))?;
    let alpha = cfg.model.influence();
    let end = cfg
        .seed
        .checked_add(cfg.replicas as u64)
        .ok_or_else(|| config_error("seed", "seed + replicas overflows"))?;
    let report = duality_check(&v, &initial, t, &alpha, cfg.window, cfg.seed..end)?;
    if let Some(bad) = report.violations.first() {
        return Err(Failure::Violation {
            message: "forward and reversed reachability disagree".into(),
            counterexample: json!({
                "seed": bad.seed,
                "forward": bad.forward,
                "backward": bad.backward,
                "graph": bad.graph,
            }),
        });
    }
    let stat = duality_statistical(
        &v,
        &initial,
        t,
        &alpha,
        cfg.window,
        cfg.replicas,
        derive_seed(cfg.seed, "duality-statistical"),
    )?;
    let mut w = csv_with_header(
        common.out.as_deref(),
        &cfg,
        "duality",
        &[
            "samples",
            "forward_hits",
            "violations",
            "boundary_touches",
            "forward_p",
            "forward_se",
            "backward_p",
            "backward_se",
            "z",
        ],
    )?;
    w.write_record([
        report.samples.to_string(),
        report.forward_hits.to_string(),
        report.violations.len().to_string(),
        report.boundary_touches.to_string(),
        num(stat.forward.0),
        num(stat.forward.1),
        num(stat.backward.0),
        num(stat.backward.1),
        num(stat.z_score()),
    ])
    .map_err(anyhow::Error::from)?;
    w.flush()?;
    if !stat.agrees_within(3.0) {
        return Err(Failure::Violation {
            message: "independent forward and backward estimates differ by more than 3 sigma"
                .into(),
            counterexample: json!({
                "forward": stat.forward,
                "backward": stat.backward,
                "z": stat.z_score(),
            }),
        });
    }
    Ok(())
}

pub fn growth(common: &Common) -> Outcome {
    let cfg = load(common)?;
    let report = growth_curve(
        &probe_site(&cfg),
        &cfg.model.influence().transpose(),
        &cfg.weights,
        &cfg.time_grid,
        cfg.replicas,
        cfg.window,
        cfg.seed,
    )?;
    let mut w = csv_with_header(
        common.out.as_deref(),
        &cfg,
        "growth",
        &[
            "t",
            "mean_q",
            "sem",
            "bound",
            "boundary_touch_fraction",
            "within_bound",
        ],
    )?;
    for r in &report.rows {
        w.write_record([
            num(r.t),
            num(r.mean_q),
            num(r.sem),
            num(r.bound),
            num(r.boundary_touch_fraction),
            r.within_bound(3.0).to_string(),
        ])
        .map_err(anyhow::Error::from)?;
    }
    w.flush()?;
    if let Some(r) = report.rows.iter().find(|r| !r.within_bound(3.0)) {
        return Err(Failure::Violation {
            message: format!("mean weighted size exceeds its envelope at t = {}", r.t),
            counterexample: json!({
                "t": r.t,
                "mean_q": r.mean_q,
                "sem": r.sem,
                "bound": r.bound,
                "a_constant": report.a_constant,
            }),
        });
    }
    Ok(())
}

pub fn generator_check(common: &Common) -> Outcome {
    let cfg = load(common)?;
    let f = function(&cfg)?;
    let times = cfg.generator_times.as_ref().ok_or_else(|| {
        config_error(
            "generator.times",
            "this command needs a [generator] section",
        )
    })?;
    let n = cfg.generator_box.unwrap_or_else(|| {
        f.support()
            .iter()
            .map(|s| s.max_norm() as u32)
            .max()
            .unwrap_or(0)
    });
    let report = run_generator_check(
        f,
        &cfg.initial,
        &cfg.model,
        times,
        n,
        cfg.replicas,
        cfg.seed,
        Construction::Thinned,
    )?;
    let mut w = csv_with_header(
        common.out.as_deref(),
        &cfg,
        "generator-check",
        &[
            "t", "replicas", "estimate", "sem", "quotient", "omega", "residual",
        ],
    )?;
    for r in &report.rows {
        w.write_record([
            num(r.t),
            r.replicas.to_string(),
            num(r.estimate),
            num(r.sem),
            num(r.quotient),
            num(report.omega),
            num(r.residual),
        ])
        .map_err(anyhow::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn invariant_check(common: &Common) -> Outcome {
    let cfg = load(common)?;
    let f = function(&cfg)?;
    let mu = cfg
        .measure
        .as_ref()
        .ok_or_else(|| config_error("measure", "this command needs a [measure] section"))?;
    let exact = cfg.model.range().is_some() && !matches!(mu, MeasureSpec::Empirical(_));
    let mode = if exact {
        InvarianceMode::Exact
    } else {
        InvarianceMode::MonteCarlo {
            replicas: cfg.replicas,
            seed: cfg.seed,
        }
    };
    let est = invariance_check(mu, f, &cfg.model, mode, cfg.tol)?;
    let mut w = csv_with_header(
        common.out.as_deref(),
        &cfg,
        "invariant-check",
        &["mode", "value", "sem"],
    )?;
    let mode_name = if exact { "exact" } else { "mc" };
    w.write_record([mode_name.to_string(), num(est.value), num(est.sem)])
        .map_err(anyhow::Error::from)?;
    w.flush()?;
    let scale = 1.0_f64.max(cfg.constants()?.c * f.triple_norm(&cfg.weights));
    let tolerance = if exact { 1e-12 * scale } else { 3.0 * est.sem };
    if est.value.abs() > tolerance {
        return Err(Failure::Violation {
            message: format!(
                "the integral of the generator is {} (tolerance {tolerance})",
                est.value
            ),
            counterexample: json!({
                "measure": format!("{mu:?}"),
                "mode": mode_name,
                "value": est.value,
                "sem": est.sem,
            }),
        });
    }
    Ok(())
}

pub fn norm_growth(common: &Common) -> Outcome {
    let cfg = load(common)?;
    let f = function(&cfg)?;
    let n = *cfg.boxes.last().expect("validated non-empty");
    let report = triple_norm_growth(
        f,
        &cfg.model,
        &cfg.weights,
        &cfg.initial,
        probe_time(&cfg),
        n,
        cfg.replicas,
        cfg.seed,
    )?;
    let mut w = csv_with_header(
        common.out.as_deref(),
        &cfg,
        "norm-growth",
        &["site", "estimate", "sem", "bound"],
    )?;
    for (site, est, sem) in &report.per_site {
        w.write_record([site.to_string(), num(*est), num(*sem), String::new()])
            .map_err(anyhow::Error::from)?;
    }
    w.write_record([
        "total".to_string(),
        num(report.estimate),
        num(report.sigma),
        num(report.bound),
    ])
    .map_err(anyhow::Error::from)?;
    w.flush()?;
    if !report.within_bound(3.0) {
        return Err(Failure::Violation {
            message: "weighted influence norm exceeds its envelope".into(),
            counterexample: json!({
                "estimate": report.estimate,
                "sigma": report.sigma,
                "bound": report.bound,
                "norm_f": report.norm_f,
                "a_constant": report.a_constant,
            }),
        });
    }
    Ok(())
}

pub fn verify_all(
    config: Option<&Path>,
    out: Option<&Path>,
    quick: bool,
    seed: Option<u64>,
) -> Outcome {
    let mut opts = if quick {
        SuiteOptions::quick()
    } else {
        SuiteOptions::default()
    };
    if let Some(s) = seed {
        opts.seed = s;
    }
    let cfg = match config {
        Some(path) => Some(load(&Common {
            config: path.to_path_buf(),
            out: None,
            seed: None,
            replicas: None,
        })?),
        None => None,
    };
    let mut outcomes = standard_suite(&opts);
    if let Some(cfg) = &cfg {
        outcomes.extend(model_suite(cfg, &opts));
    }
    for o in &outcomes {
        eprintln!("{o}");
    }
    let doc = manifest(&outcomes, &opts);
    let mut sink = open(out)?;
    serde_json::to_writer_pretty(&mut sink, &doc)
        .map_err(|e| anyhow!(e))
        .context("writing manifest")?;
    writeln!(sink)?;
    sink.flush()?;
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.id.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation {
            message: format!("{} criteria failed: {}", failed.len(), failed.join(", ")),
            counterexample: doc,
        })
    }
}
