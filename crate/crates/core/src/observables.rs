//! Local functions and what the dynamics does to them: the pregenerator `Ω`,
//! Monte Carlo and exact semigroup values, and the invariance criterion
//! `∫ Ω f dμ = 0`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::configurations::{Configuration, FrameState, SpinLookup};
use crate::error::{Result, SpinError};
use crate::finite::{simulate_terminal, ExactOracle, FiniteSystem};
use crate::graphical::{run_coupled, run_two_config};
use crate::lattice::{Frame, LatticeBox, Site};
use crate::rates::{
    constant_a, geometric_truncation_radius, RateKind, RateModel, WeightFamily,
    MAX_ENUMERATION_SITES,
};
use crate::seeds::{derive_seed, mean_sem, pairwise_sum, replica_seed, rng_from_seed};
use crate::timeline::build_timeline;

/// A function of the spins on a finite support, stored as a table: bit `i` of
/// a pattern index is the spin at `support[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFunction {
    support: Vec<Site>,
    table: Vec<f64>,
}

impl LocalFunction {
    pub fn new(support: Vec<Site>, table: Vec<f64>) -> Result<Self> {
        if support.len() > MAX_ENUMERATION_SITES {
            return Err(SpinError::InvalidParameter(format!(
                "support of {} sites exceeds {MAX_ENUMERATION_SITES}",
                support.len()
            )));
        }
        let mut sorted = support.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(SpinError::InvalidParameter(
                "support sites must be distinct".into(),
            ));
        }
        if let Some(d) = support.windows(2).find(|w| w[0].dim() != w[1].dim()) {
            return Err(SpinError::Dimension {
                expected: d[0].dim(),
                found: d[1].dim(),
            });
        }
        if table.len() != 1 << support.len() {
            return Err(SpinError::InvalidParameter(format!(
                "table needs {} values, got {}",
                1usize << support.len(),
                table.len()
            )));
        }
        if let Some(bad) = table.iter().find(|x| !x.is_finite()) {
            return Err(SpinError::InvalidParameter(format!("table value {bad}")));
        }
        Ok(LocalFunction { support, table })
    }

    pub fn constant(value: f64) -> Self {
        LocalFunction {
            support: vec![],
            table: vec![value],
        }
    }

    /// `η ↦ η(v)`.
    pub fn coordinate(v: Site) -> Self {
        LocalFunction {
            support: vec![v],
            table: vec![0.0, 1.0],
        }
    }

    /// `η ↦ Π_{v∈sites} η(v)`.
    pub fn product(sites: Vec<Site>) -> Result<Self> {
        let n = sites.len();
        let mut table = vec![0.0; 1 << n];
        table[(1 << n) - 1] = 1.0;
        Self::new(sites, table)
    }

    pub fn from_fn(support: Vec<Site>, f: impl Fn(&[bool]) -> f64) -> Result<Self> {
        let n = support.len();
        if n > MAX_ENUMERATION_SITES {
            return Err(SpinError::InvalidParameter(format!(
                "support of {n} sites exceeds {MAX_ENUMERATION_SITES}"
            )));
        }
        let table = (0..1usize << n)
            .map(|p| f(&(0..n).map(|i| p & (1 << i) != 0).collect::<Vec<_>>()))
            .collect();
        Self::new(support, table)
    }

    /// Table given as `(bit string, value)` pairs; unlisted patterns are 0.
    pub fn from_patterns<'a>(
        support: Vec<Site>,
        entries: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let n = support.len();
        if n > MAX_ENUMERATION_SITES {
            return Err(SpinError::InvalidParameter(format!(
                "support of {n} sites exceeds {MAX_ENUMERATION_SITES}"
            )));
        }
        let mut table = vec![0.0; 1 << n];
        for (bits, value) in entries {
            table[crate::rates::pattern_index(bits, n)?] = value;
        }
        Self::new(support, table)
    }

    /// `Σ_k c_k f_k` on the union of the supports.
    pub fn linear_combination(terms: &[(f64, &LocalFunction)]) -> Result<Self> {
        let mut support: Vec<Site> = terms
            .iter()
            .flat_map(|(_, f)| f.support.iter().cloned())
            .collect();
        support.sort();
        support.dedup();
        let frame = Frame::from_sites(support.clone());
        let zero = Configuration::zero();
        Self::from_fn(support, |bits| {
            let state = FrameState::from_bits(&frame, &zero, bits.to_vec());
            terms.iter().map(|(c, f)| c * f.eval(&state)).sum()
        })
    }

    pub fn support(&self) -> &[Site] {
        &self.support
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn pattern_of(&self, state: &impl SpinLookup) -> usize {
        self.support
            .iter()
            .enumerate()
            .filter(|(_, v)| state.spin(v))
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }

    pub fn eval(&self, state: &impl SpinLookup) -> f64 {
        self.table[self.pattern_of(state)]
    }

    /// `Δ_f(v) = sup_η |f(η) - f(η^v)|`.
    pub fn delta(&self, v: &Site) -> f64 {
        let Some(i) = self.support.iter().position(|s| s == v) else {
            return 0.0;
        };
        let bit = 1 << i;
        (0..self.table.len())
            .filter(|p| p & bit == 0)
            .map(|p| (self.table[p] - self.table[p | bit]).abs())
            .fold(0.0, f64::max)
    }

    /// `|||f||| = Σ_v λ_v Δ_f(v)`.
    pub fn triple_norm(&self, weights: &WeightFamily) -> f64 {
        let terms: Vec<f64> = self
            .support
            .iter()
            .map(|v| weights.lambda(v) * self.delta(v))
            .collect();
        pairwise_sum(&terms)
    }

    pub fn sup_norm(&self) -> f64 {
        self.table.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }
}

/// `Ω f(η) = Σ_v c_v(η) [f(η^v) - f(η)]`; only `v ∈ D(f)` contribute.
pub fn omega(f: &LocalFunction, eta: &impl SpinLookup, model: &RateModel, tol: f64) -> f64 {
    omega_filtered(f, eta, model, tol, |_| true)
}

/// `Ω_n f(η)`: the sum restricted to `v ∈ Box(n)`.
pub fn omega_n(
    f: &LocalFunction,
    eta: &impl SpinLookup,
    model: &RateModel,
    n: u32,
    tol: f64,
) -> f64 {
    let b = LatticeBox::new(model.dim(), n);
    omega_filtered(f, eta, model, tol, |v| b.contains(v))
}

fn omega_filtered(
    f: &LocalFunction,
    eta: &impl SpinLookup,
    model: &RateModel,
    tol: f64,
    keep: impl Fn(&Site) -> bool,
) -> f64 {
    let p = f.pattern_of(eta);
    let terms: Vec<f64> = f
        .support
        .iter()
        .enumerate()
        .filter(|(_, v)| keep(v))
        .map(|(i, v)| {
            let jump = f.table[p ^ (1 << i)] - f.table[p];
            if jump == 0.0 {
                0.0
            } else {
                model.rate(v, eta, tol) * jump
            }
        })
        .collect();
    pairwise_sum(&terms)
}

/// A probability measure on configurations.
#[derive(Clone)]
pub enum MeasureSpec {
    /// Independent spins with `P(η(v) = 1) = density(v)`.
    ProductBernoulli {
        label: String,
        density: Arc<dyn Fn(&Site) -> f64 + Send + Sync>,
    },
    PointMass(Configuration),
    Empirical(Vec<Configuration>),
}

impl MeasureSpec {
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SpinError::InvalidParameter(format!(
                "Bernoulli density {p} is not in [0, 1]"
            )));
        }
        Ok(MeasureSpec::ProductBernoulli {
            label: format!("bernoulli({p})"),
            density: Arc::new(move |_: &Site| p),
        })
    }
}

impl fmt::Debug for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureSpec::ProductBernoulli { label, .. } => write!(f, "ProductBernoulli({label})"),
            MeasureSpec::PointMass(c) => write!(f, "PointMass({c})"),
            MeasureSpec::Empirical(s) => write!(f, "Empirical({} samples)", s.len()),
        }
    }
}

/// Which simulator produced Monte Carlo samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Construction {
    /// Rate-`C` clocks thinned against the current rate.
    Thinned,
    /// The coupled timeline with clocks `C + A λ_v / λ`.
    Graphical,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::Thinned => "thinned",
            Construction::Graphical => "graphical",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub sem: f64,
    pub replicas: usize,
    pub construction: Construction,
}

/// Monte Carlo estimate of `S_n(t) f(η)` with replica `i` seeded `seed + i`.
#[allow(clippy::too_many_arguments)]
pub fn semigroup_mc(
    f: &LocalFunction,
    eta: &Configuration,
    model: &RateModel,
    weights: &WeightFamily,
    t: f64,
    n: u32,
    replicas: usize,
    seed: u64,
    construction: Construction,
) -> Result<McEstimate> {
    let b = LatticeBox::new(model.dim(), n);
    if let Some(v) = f.support().iter().find(|v| !b.contains(v)) {
        return Err(SpinError::Precondition(format!(
            "support site {v} lies outside Box({n})"
        )));
    }
    if replicas == 0 {
        return Err(SpinError::InvalidParameter(
            "replicas must be positive".into(),
        ));
    }
    let tol = 1e-9;
    let values: Vec<f64> = match construction {
        Construction::Thinned => {
            let system = FiniteSystem::on_box(eta.clone(), b, model.clone(), t)?.with_tol(tol);
            (0..replicas as u64)
                .into_par_iter()
                .map(|i| {
                    let bits = simulate_terminal(&system, replica_seed(seed, i));
                    f.eval(&FrameState::from_bits(system.active(), eta, bits))
                })
                .collect()
        }
        Construction::Graphical => (0..replicas as u64)
            .into_par_iter()
            .map(|i| {
                let tl = build_timeline(b, t, model, weights, replica_seed(seed, i))?;
                let bundle = run_coupled(&tl, model, eta, &[n], tol)?;
                Ok(f.eval(&bundle.xi(0).final_state()))
            })
            .collect::<Result<_>>()?,
    };
    let (mean, sem) = mean_sem(&values);
    log::debug!("semigroup estimate from {replicas} {construction} replicas");
    Ok(McEstimate {
        mean,
        sem,
        replicas,
        construction,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorRow {
    pub t: f64,
    pub replicas: usize,
    pub estimate: f64,
    pub sem: f64,
    /// `(Ŝ(t)f - f) / t`.
    pub quotient: f64,
    /// `|quotient - Ω f(η)|`.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct GeneratorReport {
    pub omega: f64,
    pub rows: Vec<GeneratorRow>,
    /// Smallest `K >= 0` with `residual <= K t + 3 SEM / t` on every row.
    pub fitted_k: f64,
    /// Residuals strictly decrease as `t` decreases.
    pub decreasing: bool,
}

/// Compare difference quotients of the semigroup with `Ω f(η)` along a
/// decreasing list of times. Replica counts scale as `t^{-2}` from
/// `base_replicas` at the first time, so the quotient's noise stays level.
#[allow(clippy::too_many_arguments)]
pub fn generator_check(
    f: &LocalFunction,
    eta: &Configuration,
    model: &RateModel,
    t_list: &[f64],
    n: u32,
    base_replicas: usize,
    seed: u64,
    construction: Construction,
) -> Result<GeneratorReport> {
    if t_list.is_empty()
        || t_list.windows(2).any(|w| w[0] <= w[1])
        || t_list.iter().any(|t| !(*t > 0.0))
    {
        return Err(SpinError::InvalidParameter(
            "generator check needs positive, strictly decreasing times".into(),
        ));
    }
    let tol = 1e-9;
    let omega_value = omega_n(f, eta, model, n, tol);
    let f0 = f.eval(eta);
    let t0 = t_list[0];
    let weights = WeightFamily::uniform();
    let mut rows = Vec::with_capacity(t_list.len());
    for (k, &t) in t_list.iter().enumerate() {
        let replicas = (base_replicas as f64 * (t0 / t).powi(2)).ceil() as usize;
        let sub_seed = derive_seed(seed, &format!("generator:{k}"));
        let est = semigroup_mc(
            f,
            eta,
            model,
            &weights,
            t,
            n,
            replicas,
            sub_seed,
            construction,
        )?;
        let quotient = (est.mean - f0) / t;
        rows.push(GeneratorRow {
            t,
            replicas,
            estimate: est.mean,
            sem: est.sem,
            quotient,
            residual: (quotient - omega_value).abs(),
        });
    }
    let fitted_k = rows
        .iter()
        .map(|r| ((r.residual - 3.0 * r.sem / r.t) / r.t).max(0.0))
        .fold(0.0, f64::max);
    let decreasing = rows.windows(2).all(|w| w[1].residual < w[0].residual);
    if !decreasing {
        log::warn!("generator residuals do not decrease with t");
    }
    Ok(GeneratorReport {
        omega: omega_value,
        rows,
        fitted_k,
        decreasing,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegralReport {
    /// `S_n(t) f(η) - f(η)`.
    pub lhs: f64,
    /// `∫_0^t Ω_n S_n(s) f(η) ds` by composite Simpson.
    pub rhs: f64,
    pub residual: f64,
    /// A priori Simpson error bound `t h^4 / 180 · (2Λ)^5 ‖f‖_∞`.
    pub quadrature_bound: f64,
    pub points: usize,
}

/// `S_n(t) f(η) = f(η) + ∫_0^t Ω_n S_n(s) f(η) ds`, every term from the exact
/// oracle on `Box(n)`.
pub fn integral_identity_check(
    f: &LocalFunction,
    eta: &Configuration,
    model: &RateModel,
    t: f64,
    n: u32,
    points: usize,
) -> Result<IntegralReport> {
    if points < 3 || points.is_multiple_of(2) {
        return Err(SpinError::InvalidParameter(format!(
            "Simpson's rule needs an odd number of points >= 3, got {points}"
        )));
    }
    let system = FiniteSystem::on_box(
        eta.clone(),
        LatticeBox::new(model.dim(), n),
        model.clone(),
        t,
    )?;
    let oracle = ExactOracle::new(&system)?;
    let s0 = oracle.initial_state();
    let h = t / (points - 1) as f64;
    let mut g = oracle.function_values(f);
    let f0 = g[s0];
    let mut integrand = Vec::with_capacity(points);
    for k in 0..points {
        if k > 0 {
            g = oracle.apply(&g, h);
        }
        integrand.push(oracle.generator_apply(&g)[s0]);
    }
    let weighted: Vec<f64> = integrand
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let w = if k == 0 || k == points - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * y
        })
        .collect();
    let rhs = h / 3.0 * pairwise_sum(&weighted);
    let lhs = g[s0] - f0;
    let quadrature_bound =
        t * h.powi(4) / 180.0 * (2.0 * oracle.uniform_rate()).powi(5) * f.sup_norm();
    Ok(IntegralReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        quadrature_bound,
        points,
    })
}

#[derive(Clone, Debug)]
pub struct NormGrowthReport {
    /// `(w, mean |f(ξ^η_t) - f(ξ^{η^w}_t)|, SEM)` for every `w` of the window.
    pub per_site: Vec<(Site, f64, f64)>,
    /// `Σ_w λ_w Δ̂(w)`.
    pub estimate: f64,
    pub sigma: f64,
    pub norm_f: f64,
    pub a_constant: f64,
    /// `e^{A t} |||f|||`.
    pub bound: f64,
}

impl NormGrowthReport {
    pub fn within_bound(&self, sigmas: f64) -> bool {
        self.estimate <= self.bound + sigmas * self.sigma + 1e-12
    }
}

/// Estimate `|||S_n(t) f|||` through two-configuration couplings started from
/// `η` and `η^w`, for every `w` within the interaction range of `Box(n)`.
#[allow(clippy::too_many_arguments)]
pub fn triple_norm_growth(
    f: &LocalFunction,
    model: &RateModel,
    weights: &WeightFamily,
    eta: &Configuration,
    t: f64,
    n: u32,
    replicas: usize,
    seed: u64,
) -> Result<NormGrowthReport> {
    let range = model
        .range()
        .ok_or_else(|| SpinError::Unsupported("norm growth needs a finite-range model".into()))?;
    if replicas == 0 {
        return Err(SpinError::InvalidParameter(
            "replicas must be positive".into(),
        ));
    }
    let window = LatticeBox::new(model.dim(), n + range as u32);
    let a = constant_a(model, weights, Some(&window))?;
    let tol = 1e-9;
    let mut per_site = Vec::new();
    for w in window.sites() {
        let base = derive_seed(seed, &format!("norm-growth:{w}"));
        let diffs: Vec<f64> = (0..replicas as u64)
            .into_par_iter()
            .map(|i| {
                let tl = build_timeline(window, t, model, weights, replica_seed(base, i))?;
                let run = run_two_config(&tl, model, eta, &w, n, tol)?;
                let a = f.eval(&run.first.final_state());
                let b = f.eval(&run.second.final_state());
                Ok((a - b).abs())
            })
            .collect::<Result<_>>()?;
        let (mean, sem) = mean_sem(&diffs);
        per_site.push((w, mean, sem));
    }
    let estimate = pairwise_sum(
        &per_site
            .iter()
            .map(|(w, m, _)| weights.lambda(w) * m)
            .collect::<Vec<_>>(),
    );
    let sigma = pairwise_sum(
        &per_site
            .iter()
            .map(|(w, _, s)| (weights.lambda(w) * s).powi(2))
            .collect::<Vec<_>>(),
    )
    .sqrt();
    let norm_f = f.triple_norm(weights);
    Ok(NormGrowthReport {
        per_site,
        estimate,
        sigma,
        norm_f,
        a_constant: a,
        bound: (a * t).exp() * norm_f,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvarianceMode {
    Exact,
    MonteCarlo { replicas: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvarianceEstimate {
    /// Estimate of `∫ Ω f dμ`.
    pub value: f64,
    pub sem: f64,
}

/// Sites whose spins `Ω f` can depend on.
fn dependence_window(f: &LocalFunction, model: &RateModel, tol: f64) -> Vec<Site> {
    let reach = match (model.range(), model.kind()) {
        (Some(r), _) => r as u32,
        (None, RateKind::LongRangeGeometric { theta, scale }) => {
            geometric_truncation_radius(*theta, *scale, model.dim(), tol)
        }
        (None, _) => unreachable!("only the geometric kind has infinite range"),
    };
    let local = LatticeBox::new(model.dim(), reach).sites();
    let mut sites: Vec<Site> = f
        .support()
        .iter()
        .flat_map(|v| local.iter().map(move |o| v + o))
        .collect();
    sites.sort();
    sites.dedup();
    sites
}

/// `∫ Ω f dμ`, exactly by enumeration or by sampling.
pub fn invariance_check(
    mu: &MeasureSpec,
    f: &LocalFunction,
    model: &RateModel,
    mode: InvarianceMode,
    tol: f64,
) -> Result<InvarianceEstimate> {
    if let MeasureSpec::PointMass(cfg) = mu {
        return Ok(InvarianceEstimate {
            value: omega(f, cfg, model, tol),
            sem: 0.0,
        });
    }
    match mode {
        InvarianceMode::Exact => {
            if model.range().is_none() {
                return Err(SpinError::Unsupported(
                    "exact invariance check needs a finite-range model".into(),
                ));
            }
            let MeasureSpec::ProductBernoulli { density, .. } = mu else {
                return Err(SpinError::Unsupported(
                    "exact invariance check needs a product or point-mass measure".into(),
                ));
            };
            let sites = dependence_window(f, model, tol);
            if sites.len() > MAX_ENUMERATION_SITES {
                return Err(SpinError::StateSpaceTooLarge {
                    sites: sites.len(),
                    max: MAX_ENUMERATION_SITES,
                });
            }
            let ps: Vec<f64> = sites.iter().map(|v| density(v)).collect();
            let frame = Frame::from_sites(sites);
            let zero = Configuration::zero();
            let n = frame.len();
            let terms: Vec<f64> = (0..1usize << n)
                .filter_map(|p| {
                    let bits: Vec<bool> = (0..n).map(|i| p & (1 << i) != 0).collect();
                    let weight: f64 = bits
                        .iter()
                        .zip(&ps)
                        .map(|(&b, &q)| if b { q } else { 1.0 - q })
                        .product();
                    (weight > 0.0).then(|| {
                        let state = FrameState::from_bits(&frame, &zero, bits);
                        weight * omega(f, &state, model, tol)
                    })
                })
                .collect();
            Ok(InvarianceEstimate {
                value: pairwise_sum(&terms),
                sem: 0.0,
            })
        }
        InvarianceMode::MonteCarlo { replicas, seed } => {
            let values: Vec<f64> = match mu {
                MeasureSpec::Empirical(samples) => {
                    samples.iter().map(|c| omega(f, c, model, tol)).collect()
                }
                MeasureSpec::ProductBernoulli { density, .. } => {
                    let sites = dependence_window(f, model, tol);
                    let ps: Vec<f64> = sites.iter().map(|v| density(v)).collect();
                    let frame = Frame::from_sites(sites);
                    let zero = Configuration::zero();
                    (0..replicas as u64)
                        .into_par_iter()
                        .map(|i| {
                            let mut rng = rng_from_seed(replica_seed(seed, i));
                            let bits = ps.iter().map(|&q| rng.random::<f64>() < q).collect();
                            omega(f, &FrameState::from_bits(&frame, &zero, bits), model, tol)
                        })
                        .collect()
                }
                MeasureSpec::PointMass(_) => unreachable!("handled above"),
            };
            if values.is_empty() {
                return Err(SpinError::InvalidParameter("no samples".into()));
            }
            let (value, sem) = mean_sem(&values);
            Ok(InvarianceEstimate { value, sem })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: i64) -> Site {
        Site::d1(x)
    }

    #[test]
    fn delta_examples() {
        let f = LocalFunction::coordinate(s(0));
        assert_eq!(f.delta(&s(0)), 1.0);
        assert_eq!(f.delta(&s(1)), 0.0);
        assert_eq!(LocalFunction::constant(3.0).delta(&s(0)), 0.0);
        let g = LocalFunction::product(vec![s(0), s(1)]).unwrap();
        assert_eq!(g.delta(&s(0)), 1.0);
        assert_eq!(g.delta(&s(1)), 1.0);
    }

    #[test]
    fn omega_examples() {
        let ind = RateModel::independent(1, 2.0, 3.0).unwrap();
        let f = LocalFunction::coordinate(s(0));
        assert_eq!(omega(&f, &Configuration::zero(), &ind, 0.0), 2.0);
        assert_eq!(
            omega(
                &LocalFunction::constant(1.0),
                &Configuration::zero(),
                &ind,
                0.0
            ),
            0.0
        );
        let voter = RateModel::voter(1);
        assert_eq!(omega(&f, &Configuration::one(), &voter, 0.0), 0.0);
    }

    #[test]
    fn omega_n_examples() {
        let contact = RateModel::contact(1, 1.5).unwrap();
        let eta = Configuration::indicator(&[s(1)]);
        let f = LocalFunction::coordinate(s(0));
        assert_eq!(omega_n(&f, &eta, &contact, 0, 0.0), 1.5);
        let far = LocalFunction::coordinate(s(5));
        assert_eq!(omega_n(&far, &eta, &contact, 0, 0.0), 0.0);
        assert_eq!(
            omega_n(&far, &eta, &contact, 5, 0.0),
            omega(&far, &eta, &contact, 0.0)
        );
    }

    #[test]
    fn pattern_tables() {
        let f =
            LocalFunction::from_patterns(vec![s(0), s(1)], [("10", 2.0), ("11", -1.0)]).unwrap();
        let eta = Configuration::indicator(&[s(0)]);
        assert_eq!(f.eval(&eta), 2.0);
        assert_eq!(f.eval(&Configuration::one()), -1.0);
        assert!(LocalFunction::new(vec![s(0), s(0)], vec![0.0; 4]).is_err());
    }

    #[test]
    fn semigroup_mc_trivial_cases() {
        let ind = RateModel::independent(1, 1.0, 1.0).unwrap();
        let w = WeightFamily::uniform();
        let f = LocalFunction::coordinate(s(0));
        let e = semigroup_mc(
            &f,
            &Configuration::one(),
            &ind,
            &w,
            0.0,
            1,
            100,
            0,
            Construction::Thinned,
        )
        .unwrap();
        assert_eq!((e.mean, e.sem), (1.0, 0.0));
        let one = LocalFunction::constant(1.0);
        let e = semigroup_mc(
            &one,
            &Configuration::zero(),
            &ind,
            &w,
            0.7,
            1,
            100,
            0,
            Construction::Graphical,
        )
        .unwrap();
        assert_eq!((e.mean, e.sem), (1.0, 0.0));
    }

    #[test]
    fn semigroup_mc_independent_closed_form() {
        let ind = RateModel::independent(1, 1.0, 1.0).unwrap();
        let f = LocalFunction::coordinate(s(0));
        let want = (1.0 - (-1.0f64).exp()) / 2.0;
        for c in [Construction::Thinned, Construction::Graphical] {
            let e = semigroup_mc(
                &f,
                &Configuration::zero(),
                &ind,
                &WeightFamily::uniform(),
                0.5,
                0,
                40_000,
                1,
                c,
            )
            .unwrap();
            assert!(
                (e.mean - want).abs() < 4.0 * e.sem,
                "{c}: {} vs {want}",
                e.mean
            );
        }
    }

    #[test]
    fn integral_identity_trivial_and_closed_form() {
        let ind = RateModel::independent(1, 1.0, 1.0).unwrap();
        let f = LocalFunction::coordinate(s(0));
        let r = integral_identity_check(&f, &Configuration::zero(), &ind, 0.0, 0, 5).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        let r = integral_identity_check(&f, &Configuration::zero(), &ind, 0.8, 0, 65).unwrap();
        assert!((r.lhs - (1.0 - (-1.6f64).exp()) / 2.0).abs() < 1e-12);
        assert!(r.residual < 1e-8);
        assert!(integral_identity_check(&f, &Configuration::zero(), &ind, 1.0, 0, 4).is_err());
    }

    #[test]
    fn norm_growth_at_time_zero_is_the_norm() {
        let contact = RateModel::contact(1, 1.5).unwrap();
        let f = LocalFunction::coordinate(s(0));
        let r = triple_norm_growth(
            &f,
            &contact,
            &WeightFamily::uniform(),
            &Configuration::zero(),
            0.0,
            1,
            20,
            0,
        )
        .unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.norm_f, 1.0);
        assert!((r.bound - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invariance_examples() {
        let ind = RateModel::independent(1, 2.0, 3.0).unwrap();
        let f = LocalFunction::coordinate(s(0));
        let half = MeasureSpec::bernoulli(0.5).unwrap();
        let r = invariance_check(&half, &f, &ind, InvarianceMode::Exact, 0.0).unwrap();
        assert!((r.value + 0.5).abs() < 1e-12);
        let stationary = MeasureSpec::bernoulli(0.4).unwrap();
        let g = LocalFunction::product(vec![s(0), s(1), s(3)]).unwrap();
        let r = invariance_check(&stationary, &g, &ind, InvarianceMode::Exact, 0.0).unwrap();
        assert!(r.value.abs() < 1e-12);
        let voter = RateModel::voter(1);
        let r = invariance_check(
            &MeasureSpec::PointMass(Configuration::one()),
            &g,
            &voter,
            InvarianceMode::Exact,
            0.0,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn exact_mode_rejects_empirical_and_long_range() {
        let f = LocalFunction::coordinate(s(0));
        let emp = MeasureSpec::Empirical(vec![Configuration::zero()]);
        let ind = RateModel::independent(1, 1.0, 1.0).unwrap();
        assert!(invariance_check(&emp, &f, &ind, InvarianceMode::Exact, 0.0).is_err());
        let lr = RateModel::long_range_geometric(1, 0.5, 1.0).unwrap();
        let half = MeasureSpec::bernoulli(0.5).unwrap();
        assert!(invariance_check(&half, &f, &lr, InvarianceMode::Exact, 1e-9).is_err());
        let mc = InvarianceMode::MonteCarlo {
            replicas: 100,
            seed: 1,
        };
        assert!(invariance_check(&half, &f, &lr, mc, 1e-6).is_ok());
    }
}
