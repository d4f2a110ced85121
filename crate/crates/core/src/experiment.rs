//! Experiment configuration files (TOML).
//!
//! A file is parsed into [`RawConfig`], which round-trips through TOML
//! unchanged, and then validated into [`ExperimentConfig`] with typed values.
//! Validation errors name the offending key. See `docs/config.md` for the
//! full grammar.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::configurations::Configuration;
use crate::error::{Result, SpinError};
use crate::lattice::{LatticeBox, Site};
use crate::observables::{LocalFunction, MeasureSpec};
use crate::rates::{constant_a, constant_c, Influence, RateModel, RateTable, WeightFamily};

fn default_seed() -> u64 {
    1
}
fn default_replicas() -> usize {
    1000
}
fn default_horizon() -> f64 {
    1.0
}
fn default_window() -> u32 {
    4
}
fn default_tol() -> f64 {
    1e-9
}
fn default_initial() -> String {
    "bg=zero; dev=".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub dimension: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Radius of the simulation window.
    #[serde(default = "default_window")]
    pub window: u32,
    /// Box radii for coupled runs; defaults to every radius up to the window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<u32>>,
    /// Defaults to `[horizon]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_initial")]
    pub initial: String,
    /// Radius of the active box of finite systems; defaults to the window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_box: Option<u32>,
    pub model: RawModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<RawWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<RawFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<RawMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<RawProbe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<RawGenerator>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infection: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<u32>,
    /// Tabulated rates: pattern bit string to rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<BTreeMap<String, f64>>,
    /// Offset `w - v` to `a(w, v)`; replaces the built-in coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_influence: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWeights {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFunction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMeasure {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configuration: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProbe {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGenerator {
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<u32>,
}

fn wrap(key: &'static str) -> impl Fn(SpinError) -> SpinError {
    move |e| config_err(format!("model.{key}"), e.to_string())
}

fn config_err(location: impl Into<String>, message: impl Into<String>) -> SpinError {
    SpinError::Config {
        location: location.into(),
        message: message.into(),
    }
}

fn require<T: Copy>(value: Option<T>, location: &str, kind: &str) -> Result<T> {
    value.ok_or_else(|| config_err(location, format!("required for kind = {kind:?}")))
}

fn parse_site(text: &str, dim: usize, location: &str) -> Result<Site> {
    let s: Site = text
        .parse()
        .map_err(|e: SpinError| config_err(location, e.to_string()))?;
    if s.dim() != dim {
        return Err(config_err(
            location,
            format!("site {text:?} has {} coordinates, expected {dim}", s.dim()),
        ));
    }
    Ok(s)
}

fn parse_sites(texts: &[String], dim: usize, location: &str) -> Result<Vec<Site>> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| parse_site(t, dim, &format!("{location}[{i}]")))
        .collect()
}

fn parse_configuration(text: &str, dim: usize, location: &str) -> Result<Configuration> {
    let cfg: Configuration = text
        .parse()
        .map_err(|e: SpinError| config_err(location, e.to_string()))?;
    if let crate::configurations::Background::Periodic(p) = cfg.background() {
        if p.shape().len() != dim {
            return Err(config_err(
                location,
                "background pattern dimension mismatch",
            ));
        }
    }
    if let Some(s) = cfg.deviations().iter().find(|s| s.dim() != dim) {
        return Err(config_err(
            location,
            format!("site {s} has the wrong dimension"),
        ));
    }
    Ok(cfg)
}

/// Validated model from its config section.
pub fn build_model(raw: &RawModel, dim: usize) -> Result<RateModel> {
    let kind = raw.kind.as_str();
    let at = |key: &str| format!("model.{key}");
    let model = match kind {
        "contact" => RateModel::contact(dim, require(raw.infection, &at("infection"), kind)?)
            .map_err(wrap("infection"))?,
        "voter" => RateModel::voter(dim),
        "glauber" => {
            RateModel::glauber(dim, require(raw.beta, &at("beta"), kind)?).map_err(wrap("beta"))?
        }
        "independent" => RateModel::independent(
            dim,
            require(raw.birth, &at("birth"), kind)?,
            require(raw.death, &at("death"), kind)?,
        )
        .map_err(wrap("birth"))?,
        "long_range_geometric" => RateModel::long_range_geometric(
            dim,
            require(raw.theta, &at("theta"), kind)?,
            require(raw.scale, &at("scale"), kind)?,
        )
        .map_err(wrap("theta"))?,
        "tabulated" => {
            let radius = require(raw.radius, &at("radius"), kind)?;
            let rates = raw
                .rates
                .as_ref()
                .ok_or_else(|| config_err(at("rates"), "required for kind = \"tabulated\""))?;
            let table =
                RateTable::from_patterns(dim, radius, rates.iter().map(|(k, v)| (k.as_str(), *v)))
                    .map_err(wrap("rates"))?;
            RateModel::tabulated(table)
        }
        other => {
            return Err(config_err(
                at("kind"),
                format!(
                    "unknown model {other:?} (expected contact, voter, glauber, independent, \
                     long_range_geometric or tabulated)"
                ),
            ))
        }
    };
    match &raw.declared_influence {
        None => Ok(model),
        Some(map) => {
            let offsets = map
                .iter()
                .map(|(k, v)| {
                    let loc = format!("model.declared_influence.{k}");
                    if !(*v >= 0.0 && v.is_finite()) {
                        return Err(config_err(&loc, "coefficients must be nonnegative"));
                    }
                    Ok((parse_site(k, dim, &loc)?, *v))
                })
                .collect::<Result<Vec<_>>>()?;
            model
                .with_declared_influence(Influence::finite(dim, offsets))
                .map_err(wrap("declared_influence"))
        }
    }
}

fn build_weights(raw: Option<&RawWeights>) -> Result<WeightFamily> {
    match raw {
        None => Ok(WeightFamily::uniform()),
        Some(w) => match w.kind.as_str() {
            "uniform" => Ok(WeightFamily::uniform()),
            "radial_exponential" => {
                let kappa = require(w.kappa, "weights.kappa", "radial_exponential")?;
                WeightFamily::radial_exponential(kappa)
                    .map_err(|e| config_err("weights.kappa", e.to_string()))
            }
            other => Err(config_err(
                "weights.kind",
                format!("unknown weights {other:?} (expected uniform or radial_exponential)"),
            )),
        },
    }
}

fn build_function(raw: &RawFunction, dim: usize) -> Result<LocalFunction> {
    match (&raw.coordinate, &raw.support) {
        (Some(c), None) => Ok(LocalFunction::coordinate(parse_site(
            c,
            dim,
            "function.coordinate",
        )?)),
        (None, Some(support)) => {
            let sites = parse_sites(support, dim, "function.support")?;
            let table = raw
                .table
                .as_ref()
                .ok_or_else(|| config_err("function.table", "required with function.support"))?;
            LocalFunction::from_patterns(sites, table.iter().map(|(k, v)| (k.as_str(), *v)))
                .map_err(|e| config_err("function.table", e.to_string()))
        }
        _ => Err(config_err(
            "function",
            "give exactly one of `coordinate` or `support` + `table`",
        )),
    }
}

fn build_measure(raw: &RawMeasure, dim: usize) -> Result<MeasureSpec> {
    match raw.kind.as_str() {
        "bernoulli" => MeasureSpec::bernoulli(require(raw.p, "measure.p", "bernoulli")?)
            .map_err(|e| config_err("measure.p", e.to_string())),
        "point_mass" => {
            let text = raw
                .configuration
                .as_ref()
                .ok_or_else(|| config_err("measure.configuration", "required for point_mass"))?;
            Ok(MeasureSpec::PointMass(parse_configuration(
                text,
                dim,
                "measure.configuration",
            )?))
        }
        "empirical" => {
            let samples = raw
                .samples
                .as_ref()
                .ok_or_else(|| config_err("measure.samples", "required for empirical"))?;
            if samples.is_empty() {
                return Err(config_err("measure.samples", "needs at least one sample"));
            }
            Ok(MeasureSpec::Empirical(
                samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| parse_configuration(s, dim, &format!("measure.samples[{i}]")))
                    .collect::<Result<_>>()?,
            ))
        }
        other => Err(config_err(
            "measure.kind",
            format!("unknown measure {other:?} (expected bernoulli, point_mass or empirical)"),
        )),
    }
}

/// The rate bound, influence constant and weight floor of a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub c: f64,
    pub a: f64,
    pub lambda_inf: f64,
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub dimension: usize,
    pub model: RateModel,
    pub weights: WeightFamily,
    pub window: LatticeBox,
    pub boxes: Vec<u32>,
    pub horizon: f64,
    pub time_grid: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub tol: f64,
    pub initial: Configuration,
    pub active_box: LatticeBox,
    pub function: Option<LocalFunction>,
    pub measure: Option<MeasureSpec>,
    pub probe_site: Option<Site>,
    pub sources: Option<Vec<Site>>,
    pub probe_time: Option<f64>,
    pub generator_times: Option<Vec<f64>>,
    pub generator_box: Option<u32>,
}

fn check_positive(x: f64, location: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config_err(
            location,
            format!("must be positive and finite, got {x}"),
        ))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {col}")
                }
                None => "file".into(),
            };
            config_err(location, e.message().to_string())
        })?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let dim = raw.dimension;
        if !(1..=4).contains(&dim) {
            return Err(config_err(
                "dimension",
                format!("must be 1 to 4, got {dim}"),
            ));
        }
        check_positive(raw.tol, "tol")?;
        if !(raw.horizon >= 0.0 && raw.horizon.is_finite()) {
            return Err(config_err("horizon", "must be a nonnegative number"));
        }
        if raw.replicas == 0 {
            return Err(config_err("replicas", "must be positive"));
        }
        let model = build_model(&raw.model, dim)?;
        let weights = build_weights(raw.weights.as_ref())?;
        let window = LatticeBox::new(dim, raw.window);
        let boxes = raw
            .boxes
            .clone()
            .unwrap_or_else(|| (1..=raw.window.max(1)).collect());
        if boxes.is_empty() || boxes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err(
                "boxes",
                "must be a non-empty strictly increasing list",
            ));
        }
        if boxes.iter().any(|&b| b > raw.window) {
            return Err(config_err(
                "boxes",
                format!("radii must not exceed window = {}", raw.window),
            ));
        }
        let time_grid = raw.time_grid.clone().unwrap_or_else(|| vec![raw.horizon]);
        if time_grid.is_empty()
            || time_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite()))
            || time_grid.windows(2).any(|w| w[0] > w[1])
        {
            return Err(config_err(
                "time_grid",
                "must be nonnegative and nondecreasing",
            ));
        }
        let initial = parse_configuration(&raw.initial, dim, "initial")?;
        let active = raw.active_box.unwrap_or(raw.window);
        if active > raw.window {
            return Err(config_err("active_box", "must not exceed the window"));
        }
        let function = raw
            .function
            .as_ref()
            .map(|f| build_function(f, dim))
            .transpose()?;
        let measure = raw
            .measure
            .as_ref()
            .map(|m| build_measure(m, dim))
            .transpose()?;
        let (probe_site, sources, probe_time) = match &raw.probe {
            None => (None, None, None),
            Some(p) => (
                p.site
                    .as_deref()
                    .map(|s| parse_site(s, dim, "probe.site"))
                    .transpose()?,
                p.sources
                    .as_deref()
                    .map(|s| parse_sites(s, dim, "probe.sources"))
                    .transpose()?,
                match p.time {
                    Some(t) if !(t >= 0.0 && t.is_finite()) => {
                        return Err(config_err("probe.time", "must be a nonnegative number"))
                    }
                    other => other,
                },
            ),
        };
        let (generator_times, generator_box) = match &raw.generator {
            None => (None, None),
            Some(g) => {
                if g.times.is_empty()
                    || g.times.iter().any(|t| !(*t > 0.0))
                    || g.times.windows(2).any(|w| w[0] <= w[1])
                {
                    return Err(config_err(
                        "generator.times",
                        "must be positive and strictly decreasing",
                    ));
                }
                (Some(g.times.clone()), g.box_radius)
            }
        };
        Ok(ExperimentConfig {
            dimension: dim,
            model,
            weights,
            window,
            boxes,
            horizon: raw.horizon,
            time_grid,
            replicas: raw.replicas,
            seed: raw.seed,
            tol: raw.tol,
            initial,
            active_box: LatticeBox::new(dim, active),
            function,
            measure,
            probe_site,
            sources,
            probe_time,
            generator_times,
            generator_box,
            raw,
        })
    }

    /// Canonical TOML text of the configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.raw).expect("raw configs always serialize")
    }

    /// `C`, `A` (over the window) and `λ`; hypothesis violations are errors.
    pub fn constants(&self) -> Result<Constants> {
        Ok(Constants {
            c: constant_c(&self.model)?,
            a: constant_a(&self.model, &self.weights, Some(&self.window))?,
            lambda_inf: self.weights.lambda_inf(),
        })
    }

    /// `#`-prefixed lines embedding the configuration and its constants.
    pub fn header_lines(&self, command: &str) -> Result<Vec<String>> {
        let k = self.constants()?;
        let mut lines = vec![
            format!("# spinsys {command}"),
            format!("# model = {}", self.model.name()),
            format!("# C = {}", k.c),
            format!("# A = {}", k.a),
            format!("# lambda = {}", k.lambda_inf),
            "# --- config ---".to_string(),
        ];
        lines.extend(self.to_toml().lines().map(|l| format!("# {l}")));
        lines.push("# --------------".to_string());
        Ok(lines)
    }
}
