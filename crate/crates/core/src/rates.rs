//! Flip-rate families, influence coefficients and the constants `C` and `A`.
//!
//! The influence of site `w` on the rate at `v` is
//! `a(w, v) = sup_η |c_v(η) - c_v(η^w)|` with `a(v, v) = 0`. Built-in models
//! carry closed forms for `a`; [`influence_brute_force`] recomputes it by
//! enumeration and is what the tests compare against.

use std::fmt;
use std::sync::Arc;

use crate::configurations::{Configuration, SpinLookup};
use crate::error::{Result, SpinError};
use crate::lattice::{Frame, LatticeBox, Site};
use crate::seeds::pairwise_sum;

/// Largest window (in sites) that brute-force enumerations accept.
pub const MAX_ENUMERATION_SITES: usize = 20;
/// Largest window for pairwise enumerations (4^n pairs).
pub const MAX_PAIR_ENUMERATION_SITES: usize = 12;

/// Site weights `λ_v` with a declared positive lower bound `λ`.
#[derive(Clone)]
pub struct WeightFamily {
    label: String,
    lambda: Option<Arc<dyn Fn(&Site) -> f64 + Send + Sync>>,
    lambda_inf: f64,
}

impl WeightFamily {
    /// `λ_v ≡ 1`.
    pub fn uniform() -> Self {
        WeightFamily {
            label: "uniform".into(),
            lambda: None,
            lambda_inf: 1.0,
        }
    }

    pub fn from_fn(
        label: impl Into<String>,
        lambda: impl Fn(&Site) -> f64 + Send + Sync + 'static,
        lambda_inf: f64,
    ) -> Result<Self> {
        if !(lambda_inf > 0.0 && lambda_inf.is_finite()) {
            return Err(SpinError::InvalidParameter(format!(
                "weight lower bound must be positive, got {lambda_inf}"
            )));
        }
        Ok(WeightFamily {
            label: label.into(),
            lambda: Some(Arc::new(lambda)),
            lambda_inf,
        })
    }

    /// `λ_v = exp(κ |v|_inf)`, bounded below by 1.
    pub fn radial_exponential(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(SpinError::InvalidParameter(format!(
                "radial exponent must be a nonnegative number, got {kappa}"
            )));
        }
        Self::from_fn(
            format!("radial_exponential({kappa})"),
            move |v: &Site| (kappa * v.max_norm() as f64).exp(),
            1.0,
        )
    }

    pub fn is_uniform(&self) -> bool {
        self.lambda.is_none()
    }

    pub fn lambda(&self, v: &Site) -> f64 {
        match &self.lambda {
            None => 1.0,
            Some(f) => f(v),
        }
    }

    pub fn lambda_inf(&self) -> f64 {
        self.lambda_inf
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Check the declared lower bound on a finite set of sites.
    pub fn validate_on<'a>(&self, sites: impl IntoIterator<Item = &'a Site>) -> Result<()> {
        for v in sites {
            let l = self.lambda(v);
            if !(l >= self.lambda_inf && l.is_finite()) {
                return Err(SpinError::InvalidParameter(format!(
                    "weight λ at {v} is {l}, below the declared bound {}",
                    self.lambda_inf
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightFamily")
            .field("label", &self.label)
            .field("lambda_inf", &self.lambda_inf)
            .finish()
    }
}

impl Default for WeightFamily {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Rates of a finite-range model indexed by the local pattern around `v`.
///
/// Bit `i` of a pattern index is the spin at `v + offsets[i]`, with offsets
/// enumerated lexicographically over the box of radius `radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    dim: usize,
    radius: u32,
    offsets: Vec<Site>,
    rates: Vec<f64>,
}

impl RateTable {
    pub fn new(dim: usize, radius: u32, rates: Vec<f64>) -> Result<Self> {
        let window = LatticeBox::new(dim, radius);
        let n = window.len();
        if n > MAX_ENUMERATION_SITES {
            return Err(SpinError::InvalidParameter(format!(
                "rate table window has {n} sites (at most {MAX_ENUMERATION_SITES})"
            )));
        }
        if rates.len() != 1 << n {
            return Err(SpinError::InvalidParameter(format!(
                "rate table needs {} entries, got {}",
                1usize << n,
                rates.len()
            )));
        }
        if let Some(bad) = rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(SpinError::InvalidParameter(format!(
                "rates must be nonnegative numbers, found {bad}"
            )));
        }
        Ok(RateTable {
            dim,
            radius,
            offsets: window.sites(),
            rates,
        })
    }

    /// Build from `(pattern bit string, rate)` pairs; other patterns get rate 0.
    pub fn from_patterns<'a>(
        dim: usize,
        radius: u32,
        entries: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let n = LatticeBox::new(dim, radius).len();
        if n > MAX_ENUMERATION_SITES {
            return Err(SpinError::InvalidParameter(format!(
                "rate table window has {n} sites (at most {MAX_ENUMERATION_SITES})"
            )));
        }
        let mut rates = vec![0.0; 1 << n];
        for (bits, rate) in entries {
            rates[pattern_index(bits, n)?] = rate;
        }
        Self::new(dim, radius, rates)
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn offsets(&self) -> &[Site] {
        &self.offsets
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    fn index_at(&self, v: &Site, state: &impl SpinLookup) -> usize {
        self.offsets
            .iter()
            .enumerate()
            .filter(|(_, off)| state.spin(&(v + off)))
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }
}

/// Parse a bit string where character `i` is bit `i`.
pub fn pattern_index(bits: &str, n: usize) -> Result<usize> {
    if bits.len() != n {
        return Err(SpinError::Parse(format!(
            "pattern {bits:?} must have {n} bits"
        )));
    }
    bits.chars()
        .enumerate()
        .try_fold(0usize, |acc, (i, c)| match c {
            '0' => Ok(acc),
            '1' => Ok(acc | (1 << i)),
            other => Err(SpinError::Parse(format!("bad pattern bit {other:?}"))),
        })
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateKind {
    /// Recovery at rate 1, infection at `infection` per occupied neighbour.
    Contact {
        infection: f64,
    },
    /// Adopt the opinion of a uniformly chosen neighbour at rate 1.
    Voter,
    /// Heat-bath dynamics of the nearest-neighbour Ising model.
    Glauber {
        beta: f64,
    },
    Independent {
        birth: f64,
        death: f64,
    },
    /// Contact-like model with geometrically decaying infinite-range infection:
    /// a vacant `v` becomes occupied at rate `scale Σ θ^{|w-v|} η(w)`.
    LongRangeGeometric {
        theta: f64,
        scale: f64,
    },
    Tabulated(RateTable),
}

/// A translation-invariant family of flip rates on Z^dim.
#[derive(Clone, Debug, PartialEq)]
pub struct RateModel {
    kind: RateKind,
    dim: usize,
    declared: Option<Influence>,
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(SpinError::InvalidParameter(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

impl RateModel {
    pub fn contact(dim: usize, infection: f64) -> Result<Self> {
        Ok(Self::plain(
            dim,
            RateKind::Contact {
                infection: positive("infection rate", infection)?,
            },
        ))
    }

    pub fn voter(dim: usize) -> Self {
        Self::plain(dim, RateKind::Voter)
    }

    pub fn glauber(dim: usize, beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(SpinError::InvalidParameter(format!(
                "inverse temperature must be finite, got {beta}"
            )));
        }
        Ok(Self::plain(dim, RateKind::Glauber { beta }))
    }

    pub fn independent(dim: usize, birth: f64, death: f64) -> Result<Self> {
        Ok(Self::plain(
            dim,
            RateKind::Independent {
                birth: positive("birth rate", birth)?,
                death: positive("death rate", death)?,
            },
        ))
    }

    /// `theta >= 1` is accepted here and rejected by [`constant_c`] /
    /// [`constant_a`], which is where boundedness and summability are checked.
    pub fn long_range_geometric(dim: usize, theta: f64, scale: f64) -> Result<Self> {
        Ok(Self::plain(
            dim,
            RateKind::LongRangeGeometric {
                theta: positive("theta", theta)?,
                scale: positive("scale", scale)?,
            },
        ))
    }

    pub fn tabulated(table: RateTable) -> Self {
        let dim = table.dim;
        Self::plain(dim, RateKind::Tabulated(table))
    }

    fn plain(dim: usize, kind: RateKind) -> Self {
        assert!(dim >= 1);
        RateModel {
            kind,
            dim,
            declared: None,
        }
    }

    /// Replace the closed-form influence by a user-declared one. Declarations
    /// are what the engines trust, and what [`check_lipschitz`] audits.
    pub fn with_declared_influence(mut self, influence: Influence) -> Result<Self> {
        if influence.dim != self.dim {
            return Err(SpinError::Dimension {
                expected: self.dim,
                found: influence.dim,
            });
        }
        self.declared = Some(influence);
        Ok(self)
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_declared_influence(&self) -> bool {
        self.declared.is_some()
    }

    pub fn name(&self) -> String {
        match &self.kind {
            RateKind::Contact { infection } => format!("contact({infection})"),
            RateKind::Voter => "voter".into(),
            RateKind::Glauber { beta } => format!("glauber({beta})"),
            RateKind::Independent { birth, death } => format!("independent({birth},{death})"),
            RateKind::LongRangeGeometric { theta, scale } => {
                format!("long_range_geometric({theta},{scale})")
            }
            RateKind::Tabulated(t) => format!("tabulated(r={})", t.radius),
        }
    }

    /// Interaction range in max-norm, `None` for infinite range.
    pub fn range(&self) -> Option<u64> {
        match &self.kind {
            RateKind::Contact { .. } | RateKind::Voter | RateKind::Glauber { .. } => Some(1),
            RateKind::Independent { .. } => Some(0),
            RateKind::LongRangeGeometric { .. } => None,
            RateKind::Tabulated(t) => Some(u64::from(t.radius)),
        }
    }

    /// Flip rate `c_v(η)`. Exact for finite-range kinds; the long-range kind
    /// is truncated with error at most `tol`.
    pub fn rate(&self, v: &Site, state: &impl SpinLookup, tol: f64) -> f64 {
        debug_assert_eq!(v.dim(), self.dim);
        match &self.kind {
            RateKind::Contact { infection } => {
                if state.spin(v) {
                    1.0
                } else {
                    infection * v.neighbors().filter(|w| state.spin(w)).count() as f64
                }
            }
            RateKind::Voter => {
                let own = state.spin(v);
                let disagree = v.neighbors().filter(|w| state.spin(w) != own).count();
                disagree as f64 / (2 * self.dim) as f64
            }
            RateKind::Glauber { beta } => {
                let sigma = |b: bool| if b { 1.0 } else { -1.0 };
                let field: f64 = v.neighbors().map(|w| sigma(state.spin(&w))).sum();
                let h = sigma(state.spin(v)) * field;
                1.0 / (1.0 + (2.0 * beta * h).exp())
            }
            RateKind::Independent { birth, death } => {
                if state.spin(v) {
                    *death
                } else {
                    *birth
                }
            }
            RateKind::LongRangeGeometric { theta, scale } => {
                if state.spin(v) {
                    return 1.0;
                }
                let radius = geometric_truncation_radius(*theta, *scale, self.dim, tol);
                let b = LatticeBox::new(self.dim, radius);
                let terms: Vec<f64> = b
                    .sites()
                    .into_iter()
                    .filter(|off| off.max_norm() > 0 && state.spin(&(v + off)))
                    .map(|off| theta.powi(off.max_norm() as i32))
                    .collect();
                scale * pairwise_sum(&terms)
            }
            RateKind::Tabulated(t) => t.rates[t.index_at(v, state)],
        }
    }

    /// Influence coefficients: the declared ones if any, else the closed form.
    pub fn influence(&self) -> Influence {
        if let Some(d) = &self.declared {
            return d.clone();
        }
        self.closed_form_influence()
    }

    fn closed_form_influence(&self) -> Influence {
        let d = self.dim;
        let neighbours = |a: f64| {
            let offs = Site::origin(d)
                .neighbors()
                .map(|o| (o, a))
                .filter(|(_, a)| *a > 0.0)
                .collect();
            Influence::finite(d, offs)
        };
        match &self.kind {
            RateKind::Contact { infection } => neighbours(*infection),
            RateKind::Voter => neighbours(1.0 / (2 * d) as f64),
            RateKind::Glauber { beta } => neighbours(0.5 * (2.0 * beta.abs()).tanh()),
            RateKind::Independent { .. } => Influence::finite(d, vec![]),
            RateKind::LongRangeGeometric { theta, scale } => Influence {
                dim: d,
                kernel: Kernel::Geometric {
                    theta: *theta,
                    scale: *scale,
                },
                transposed: false,
                restriction: Restriction::None,
            },
            RateKind::Tabulated(t) => {
                let offs = t
                    .offsets
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| o.max_norm() > 0)
                    .map(|(bit, o)| {
                        let sup = (0..t.rates.len())
                            .map(|p| (t.rates[p] - t.rates[p ^ (1 << bit)]).abs())
                            .fold(0.0, f64::max);
                        (o.clone(), sup)
                    })
                    .filter(|(_, a)| *a > 0.0)
                    .collect();
                Influence::finite(d, offs)
            }
        }
    }
}

/// Number of sites at max-norm distance exactly `k >= 1` in Z^d.
fn shell_size(d: usize, k: u64) -> f64 {
    let k = k as f64;
    (2.0 * k + 1.0).powi(d as i32) - (2.0 * k - 1.0).powi(d as i32)
}

/// `Σ_{k > r} shell(k) θ^k`.
fn geometric_tail(theta: f64, d: usize, r: u64) -> f64 {
    if d == 1 {
        return 2.0 * theta.powi(r as i32 + 1) / (1.0 - theta);
    }
    let mut sum = 0.0;
    let mut k = r + 1;
    loop {
        let term = shell_size(d, k) * theta.powi(k as i32);
        sum += term;
        // once shells grow slower than θ shrinks, the remainder is below term·θ'/(1-θ')
        let ratio = theta * shell_size(d, k + 1) / shell_size(d, k);
        if ratio < 1.0 && term * ratio / (1.0 - ratio) < 1e-17 * sum.max(1e-300) {
            break;
        }
        if term == 0.0 {
            break;
        }
        k += 1;
    }
    sum
}

/// Truncation radius for long-range rate sums: the smallest `R` at least
/// `ceil(log(tol (1-θ)/scale) / log θ)` with `scale Σ_{|w|>R} θ^{|w|} <= tol`.
pub fn geometric_truncation_radius(theta: f64, scale: f64, dim: usize, tol: f64) -> u32 {
    assert!(theta > 0.0 && theta < 1.0, "truncation needs 0 < theta < 1");
    assert!(tol > 0.0, "long-range rates need a positive tolerance");
    let start = ((tol * (1.0 - theta) / scale).ln() / theta.ln()).ceil();
    let mut r = if start.is_finite() && start > 1.0 {
        start as u64
    } else {
        1
    };
    while scale * geometric_tail(theta, dim, r) > tol {
        r += 1;
    }
    r as u32
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// Nonzero coefficients `a(v + offset, v)`.
    Finite(Vec<(Site, f64)>),
    /// `a(w, v) = scale θ^{|w-v|_inf}`.
    Geometric { theta: f64, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Restriction {
    None,
    /// The truncation `a_n`: zero unless both sites lie in the box.
    Both(LatticeBox),
    /// Zero unless the influenced site (second argument) lies in the box.
    Targets(LatticeBox),
}

/// Influence coefficients `α(w, v)` of a translation-invariant kernel, with
/// optional transposition (`ā(w, v) = a(v, w)`) and truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct Influence {
    dim: usize,
    kernel: Kernel,
    transposed: bool,
    restriction: Restriction,
}

impl Influence {
    /// Finite kernel from `(w - v, a(w, v))` pairs; zero offsets and zero
    /// values are dropped (`a(v, v) = 0`).
    pub fn finite(dim: usize, offsets: Vec<(Site, f64)>) -> Self {
        let mut offsets: Vec<(Site, f64)> = offsets
            .into_iter()
            .filter(|(o, a)| o.max_norm() > 0 && *a != 0.0)
            .collect();
        offsets.sort_by(|a, b| a.0.cmp(&b.0));
        Influence {
            dim,
            kernel: Kernel::Finite(offsets),
            transposed: false,
            restriction: Restriction::None,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::finite(dim, vec![])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    /// `ā(w, v) = a(v, w)`.
    pub fn transpose(&self) -> Self {
        Influence {
            transposed: !self.transposed,
            ..self.clone()
        }
    }

    /// `a_n`: zero unless both sites lie in `b`.
    pub fn truncated(&self, b: LatticeBox) -> Self {
        Influence {
            restriction: Restriction::Both(b),
            ..self.clone()
        }
    }

    pub fn restrict_targets(&self, b: LatticeBox) -> Self {
        Influence {
            restriction: Restriction::Targets(b),
            ..self.clone()
        }
    }

    pub fn is_finite_range(&self) -> bool {
        matches!(self.kernel, Kernel::Finite(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.kernel, Kernel::Finite(o) if o.is_empty())
    }

    /// Max-norm range of a finite kernel.
    pub fn range(&self) -> Option<u64> {
        match &self.kernel {
            Kernel::Finite(o) => Some(o.iter().map(|(s, _)| s.max_norm()).max().unwrap_or(0)),
            Kernel::Geometric { .. } => None,
        }
    }

    fn kernel_at(&self, offset: &Site) -> f64 {
        match &self.kernel {
            Kernel::Finite(o) => o
                .binary_search_by(|(s, _)| s.cmp(offset))
                .map(|i| o[i].1)
                .unwrap_or(0.0),
            Kernel::Geometric { theta, scale } => {
                let k = offset.max_norm();
                if k == 0 {
                    0.0
                } else {
                    scale * theta.powi(k as i32)
                }
            }
        }
    }

    fn admits(&self, w: &Site, v: &Site) -> bool {
        match self.restriction {
            Restriction::None => true,
            Restriction::Both(b) => b.contains(w) && b.contains(v),
            Restriction::Targets(b) => b.contains(v),
        }
    }

    /// `α(w, v)`.
    pub fn a_of(&self, w: &Site, v: &Site) -> f64 {
        if w == v || !self.admits(w, v) {
            return 0.0;
        }
        if self.transposed {
            self.kernel_at(&(v - w))
        } else {
            self.kernel_at(&(w - v))
        }
    }

    /// `{w : α(w, v) > 0}` with coefficients; finite kernels only.
    pub fn sources_of(&self, v: &Site) -> Option<Vec<(Site, f64)>> {
        let Kernel::Finite(offs) = &self.kernel else {
            return None;
        };
        Some(
            offs.iter()
                .map(|(o, _)| if self.transposed { v - o } else { v + o })
                .map(|w| {
                    let a = self.a_of(&w, v);
                    (w, a)
                })
                .filter(|(_, a)| *a > 0.0)
                .collect(),
        )
    }

    /// `{y : α(x, y) > 0}` with coefficients; finite kernels only.
    pub fn targets_of(&self, x: &Site) -> Option<Vec<(Site, f64)>> {
        let Kernel::Finite(offs) = &self.kernel else {
            return None;
        };
        Some(
            offs.iter()
                .map(|(o, _)| if self.transposed { x + o } else { x - o })
                .map(|y| {
                    let a = self.a_of(x, &y);
                    (y, a)
                })
                .filter(|(_, a)| *a > 0.0)
                .collect(),
        )
    }

    /// For each frame position `v`, the frame positions `w` with `α(w, v) > 0`.
    pub fn incoming_in(&self, frame: &Frame) -> Vec<Vec<(usize, f64)>> {
        frame
            .sites()
            .iter()
            .map(|v| match self.sources_of(v) {
                Some(src) => src
                    .into_iter()
                    .filter_map(|(w, a)| frame.position(&w).map(|i| (i, a)))
                    .collect(),
                None => frame
                    .sites()
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (i, self.a_of(w, v)))
                    .filter(|(_, a)| *a > 0.0)
                    .collect(),
            })
            .collect()
    }

    /// For each frame position `x`, the frame positions `y` with `α(x, y) > 0`.
    pub fn outgoing_in(&self, frame: &Frame) -> Vec<Vec<(usize, f64)>> {
        frame
            .sites()
            .iter()
            .map(|x| match self.targets_of(x) {
                Some(t) => t
                    .into_iter()
                    .filter_map(|(y, a)| frame.position(&y).map(|i| (i, a)))
                    .collect(),
                None => frame
                    .sites()
                    .iter()
                    .enumerate()
                    .map(|(i, y)| (i, self.a_of(x, y)))
                    .filter(|(_, a)| *a > 0.0)
                    .collect(),
            })
            .collect()
    }

    /// `Σ_w α(w, v)` for an unrestricted kernel (independent of `v`).
    fn kernel_mass(&self) -> Result<f64> {
        match &self.kernel {
            Kernel::Finite(o) => Ok(pairwise_sum(&o.iter().map(|(_, a)| *a).collect::<Vec<_>>())),
            Kernel::Geometric { theta, scale } => {
                if *theta >= 1.0 {
                    return Err(SpinError::DivergentInfluence(format!(
                        "geometric influence with theta = {theta} >= 1 is not summable"
                    )));
                }
                Ok(scale * geometric_tail(*theta, self.dim, 0))
            }
        }
    }
}

/// Rate bound `C = sup_{v, η} c_v(η)`.
pub fn constant_c(model: &RateModel) -> Result<f64> {
    let d = model.dim as f64;
    let c = match &model.kind {
        RateKind::Contact { infection } => f64::max(1.0, 2.0 * d * infection),
        RateKind::Voter => 1.0,
        RateKind::Glauber { beta } => 1.0 / (1.0 + (-4.0 * d * beta.abs()).exp()),
        RateKind::Independent { birth, death } => birth.max(*death),
        RateKind::LongRangeGeometric { theta, scale } => {
            if *theta >= 1.0 {
                return Err(SpinError::UnboundedRates(format!(
                    "long-range infection with theta = {theta} >= 1 has unbounded rates"
                )));
            }
            f64::max(1.0, scale * geometric_tail(*theta, model.dim, 0))
        }
        RateKind::Tabulated(t) => t.rates.iter().copied().fold(0.0, f64::max),
    };
    if !c.is_finite() {
        return Err(SpinError::UnboundedRates(format!(
            "C = {c} for {}",
            model.name()
        )));
    }
    Ok(c)
}

/// Influence constant `A = sup_v Σ_{w≠v} (λ_w / λ_v) a(w, v)`.
///
/// Exact for uniform weights (translation invariance). Non-uniform weights
/// need a finite-range influence and a `scope`: the supremum is then taken over
/// the sites of `scope`, which is all any finite simulation uses.
pub fn constant_a(
    model: &RateModel,
    weights: &WeightFamily,
    scope: Option<&LatticeBox>,
) -> Result<f64> {
    influence_constant(&model.influence(), weights, scope).map_err(|e| match e {
        SpinError::DivergentInfluence(msg) => {
            SpinError::DivergentInfluence(format!("{msg} ({})", model.name()))
        }
        other => other,
    })
}

/// `sup_v Σ_{w≠v} (λ_w / λ_v) α(w, v)` for any kernel; truncations are
/// ignored, so the value bounds every truncated version.
pub fn influence_constant(
    alpha: &Influence,
    weights: &WeightFamily,
    scope: Option<&LatticeBox>,
) -> Result<f64> {
    let a = if weights.is_uniform() {
        alpha.kernel_mass()?
    } else {
        let scope = scope.ok_or_else(|| {
            SpinError::Unsupported("non-uniform weights need a finite scope for A".into())
        })?;
        weights.validate_on(&scope.sites())?;
        let free = Influence {
            restriction: Restriction::None,
            ..alpha.clone()
        };
        let mut sup = 0.0f64;
        for v in scope.sites() {
            let sources = free.sources_of(&v).ok_or_else(|| {
                SpinError::Unsupported(
                    "non-uniform weights are only supported for finite-range influences".into(),
                )
            })?;
            let lv = weights.lambda(&v);
            let terms: Vec<f64> = sources
                .iter()
                .map(|(w, a)| weights.lambda(w) / lv * a)
                .collect();
            sup = sup.max(pairwise_sum(&terms));
        }
        sup
    };
    if !a.is_finite() {
        return Err(SpinError::DivergentInfluence(format!("A = {a}")));
    }
    Ok(a)
}

/// `γ_α(v, χ) = (1 - χ(v)) Σ_{w≠v} α(w, v) χ(w)`.
///
/// For an infinite-range kernel and a configuration of infinite support, the
/// sum is truncated where the geometric tail drops below `1e-12`.
pub fn gamma(alpha: &Influence, v: &Site, chi: &Configuration) -> f64 {
    if chi.eval(v) {
        return 0.0;
    }
    let terms: Vec<f64> = if let Some(support) = chi.support() {
        support.iter().map(|w| alpha.a_of(w, v)).collect()
    } else if let Some(sources) = alpha.sources_of(v) {
        sources
            .into_iter()
            .filter(|(w, _)| chi.eval(w))
            .map(|(_, a)| a)
            .collect()
    } else {
        let Kernel::Geometric { theta, scale } = alpha.kernel else {
            unreachable!("only geometric kernels lack finite sources")
        };
        let r = geometric_truncation_radius(theta.min(1.0 - 1e-12), scale, alpha.dim, 1e-12);
        LatticeBox::new(alpha.dim, r)
            .sites()
            .into_iter()
            .map(|off| v + &off)
            .filter(|w| chi.eval(w))
            .map(|w| alpha.a_of(&w, v))
            .collect()
    };
    pairwise_sum(&terms)
}

/// `g_α(χ) = Σ_v λ_v γ_α(v, χ)` for finitely supported `χ`.
pub fn g_total(alpha: &Influence, weights: &WeightFamily, chi: &Configuration) -> Result<f64> {
    let support = chi.support().ok_or_else(|| {
        SpinError::Precondition("g_total needs a finitely supported configuration".into())
    })?;
    let mut terms = Vec::new();
    for w in support {
        match alpha.targets_of(w) {
            Some(targets) => {
                for (v, a) in targets {
                    if !chi.eval(&v) {
                        terms.push(weights.lambda(&v) * a);
                    }
                }
            }
            None => {
                if !weights.is_uniform() {
                    return Err(SpinError::Unsupported(
                        "g_total with infinite-range influence needs uniform weights".into(),
                    ));
                }
                // total outgoing mass, minus the arrows landing inside χ
                let out = if alpha.restriction == Restriction::None {
                    alpha.kernel_mass()?
                } else {
                    return Err(SpinError::Unsupported(
                        "g_total with a restricted infinite-range influence".into(),
                    ));
                };
                terms.push(out);
                for v in support {
                    terms.push(-alpha.a_of(w, v));
                }
            }
        }
    }
    Ok(pairwise_sum(&terms))
}

fn pattern_config(sites: &[Site], pattern: usize, exterior: &Configuration) -> Configuration {
    let mut cfg = exterior.clone();
    for (i, s) in sites.iter().enumerate() {
        cfg.set(s, pattern & (1 << i) != 0);
    }
    cfg
}

/// `sup |c_0(η) - c_0(η^w)|` for every offset `w ≠ 0` of the box of radius
/// `radius`, by enumerating all patterns on that box (exterior all zero).
/// Exact for models whose range is at most `radius`.
pub fn influence_brute_force(model: &RateModel, radius: u32, tol: f64) -> Result<Vec<(Site, f64)>> {
    let window = LatticeBox::new(model.dim, radius);
    let n = window.len();
    if n > MAX_ENUMERATION_SITES {
        return Err(SpinError::StateSpaceTooLarge {
            sites: n,
            max: MAX_ENUMERATION_SITES,
        });
    }
    let frame = Frame::from_box(window);
    let base = Configuration::zero();
    let origin = Site::origin(model.dim);
    let rates: Vec<f64> = (0..1usize << n)
        .map(|p| {
            let bits = (0..n).map(|i| p & (1 << i) != 0).collect();
            let state = crate::configurations::FrameState::from_bits(&frame, &base, bits);
            model.rate(&origin, &state, tol)
        })
        .collect();
    Ok(window
        .sites()
        .into_iter()
        .enumerate()
        .filter(|(_, w)| w.max_norm() > 0)
        .map(|(bit, w)| {
            let sup = (0..rates.len())
                .map(|p| (rates[p] - rates[p ^ (1 << bit)]).abs())
                .fold(0.0, f64::max);
            (w, sup)
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct LipschitzWitness {
    pub first: Configuration,
    pub second: Configuration,
    pub rate_gap: f64,
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct LipschitzReport {
    pub site: Site,
    pub pairs_checked: usize,
    /// `min (bound - |c_v(η1) - c_v(η2)|)` over all pairs; negative on failure.
    pub worst_slack: f64,
    pub witness: Option<LipschitzWitness>,
}

impl LipschitzReport {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

/// Audit the declared influence against the rates: for every pair of
/// configurations that agree at `v` and off `window` (exterior frozen to all
/// zeros, then all ones), `|c_v(η1) - c_v(η2)| <= Σ_{w differing} a(w, v)`.
///
/// `window` is centered at `v`. The agreement set always contains `v`: with
/// `a(v, v) = 0`, flipping `v` itself is not controlled by the coefficients.
/// Windows of up to [`MAX_PAIR_ENUMERATION_SITES`] sites enumerate every pair;
/// larger ones (up to [`MAX_ENUMERATION_SITES`]) check single-site
/// disagreements, which imply the pair bound by the triangle inequality.
pub fn check_lipschitz(
    model: &RateModel,
    window: &LatticeBox,
    v: &Site,
    tol: f64,
) -> Result<LipschitzReport> {
    let offsets = window.sites();
    let n = offsets.len();
    if n > MAX_ENUMERATION_SITES {
        return Err(SpinError::StateSpaceTooLarge {
            sites: n,
            max: MAX_ENUMERATION_SITES,
        });
    }
    let frame = Frame::from_sites(offsets.iter().map(|o| v + o));
    let sites = frame.sites().to_vec();
    let centre = frame.position(v).expect("window contains centre");
    let influence = model.influence();
    let coeff: Vec<f64> = sites.iter().map(|w| influence.a_of(w, v)).collect();
    let allowance = if model.range().is_none() {
        2.0 * tol
    } else {
        0.0
    };
    let masks: Vec<usize> = if n <= MAX_PAIR_ENUMERATION_SITES {
        (1..1usize << n)
            .filter(|m| m & (1 << centre) == 0)
            .collect()
    } else {
        (0..n).filter(|&i| i != centre).map(|i| 1 << i).collect()
    };
    let bound_of = |mask: usize| {
        let t: Vec<f64> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| coeff[i])
            .collect();
        pairwise_sum(&t) + allowance
    };
    let bounds: Vec<f64> = masks.iter().map(|&m| bound_of(m)).collect();

    let mut report = LipschitzReport {
        site: v.clone(),
        pairs_checked: 0,
        worst_slack: f64::INFINITY,
        witness: None,
    };
    for exterior in [Configuration::zero(), Configuration::one()] {
        let rates: Vec<f64> = (0..1usize << n)
            .map(|p| {
                let bits = (0..n).map(|i| p & (1 << i) != 0).collect();
                let state = crate::configurations::FrameState::from_bits(&frame, &exterior, bits);
                model.rate(v, &state, tol)
            })
            .collect();
        for p in 0..rates.len() {
            for (&mask, &bound) in masks.iter().zip(&bounds) {
                let gap = (rates[p] - rates[p ^ mask]).abs();
                let slack = bound - gap;
                report.pairs_checked += 1;
                if slack < report.worst_slack {
                    report.worst_slack = slack;
                }
                // sums of float coefficients: tolerate last-bit rounding
                if slack < -1e-12 * bound.max(1.0) && report.witness.is_none() {
                    report.witness = Some(LipschitzWitness {
                        first: pattern_config(&sites, p, &exterior),
                        second: pattern_config(&sites, p ^ mask, &exterior),
                        rate_gap: gap,
                        bound,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: i64) -> Site {
        Site::d1(x)
    }

    #[test]
    fn rate_examples() {
        let contact = RateModel::contact(1, 1.5).unwrap();
        let cfg = Configuration::indicator(&[s(1)]);
        assert_eq!(contact.rate(&s(0), &cfg, 0.0), 1.5);
        let ind = RateModel::independent(1, 2.0, 3.0).unwrap();
        assert_eq!(ind.rate(&s(0), &Configuration::one(), 0.0), 3.0);
        let voter = RateModel::voter(1);
        assert_eq!(voter.rate(&s(4), &Configuration::zero(), 0.0), 0.0);
    }

    #[test]
    fn contact_rate_matches_hand_enumeration() {
        // vacant origin: λ per occupied neighbour; occupied origin recovers at 1
        let m = RateModel::contact(1, 1.5).unwrap();
        let expected = [0.0, 1.5, 1.0, 1.0, 1.5, 3.0, 1.0, 1.0];
        for (p, want) in expected.iter().enumerate() {
            let mut c = Configuration::zero();
            for (bit, x) in [-1, 0, 1].into_iter().enumerate() {
                c.set(&s(x), p & (1 << bit) != 0);
            }
            // bit order: -1, 0, +1
            let occ0 = p & 2 != 0;
            let nb = (p & 1 != 0) as u32 + (p & 4 != 0) as u32;
            let hand = if occ0 { 1.0 } else { 1.5 * f64::from(nb) };
            assert_eq!(hand, *want);
            assert_eq!(m.rate(&s(0), &c, 0.0), hand);
        }
    }

    #[test]
    fn influence_examples() {
        let a = RateModel::contact(1, 1.5).unwrap().influence();
        assert_eq!(a.a_of(&s(1), &s(0)), 1.5);
        assert_eq!(a.a_of(&s(2), &s(0)), 0.0);
        assert_eq!(a.a_of(&s(0), &s(0)), 0.0);
        let v = RateModel::voter(1).influence();
        assert_eq!(v.a_of(&s(-1), &s(0)), 0.5);
        let i = RateModel::independent(1, 1.0, 2.0).unwrap().influence();
        assert!(i.is_zero());
    }

    #[test]
    fn brute_force_confirms_contact_influence() {
        let m = RateModel::contact(1, 1.5).unwrap();
        let bf = influence_brute_force(&m, 1, 0.0).unwrap();
        for (w, sup) in bf {
            assert_eq!(sup, m.influence().a_of(&w, &Site::origin(1)));
        }
    }

    #[test]
    fn constants_examples() {
        let contact = RateModel::contact(1, 1.5).unwrap();
        let w = WeightFamily::uniform();
        assert_eq!(constant_c(&contact).unwrap(), 3.0);
        assert_eq!(constant_a(&contact, &w, None).unwrap(), 3.0);
        assert_eq!(constant_c(&RateModel::voter(1)).unwrap(), 1.0);
        let ind = RateModel::independent(1, 2.0, 3.0).unwrap();
        assert_eq!(constant_c(&ind).unwrap(), 3.0);
        assert_eq!(constant_a(&ind, &w, None).unwrap(), 0.0);
        let lr = RateModel::long_range_geometric(1, 0.5, 1.0).unwrap();
        assert_eq!(constant_a(&lr, &w, None).unwrap(), 2.0);
    }

    #[test]
    fn divergent_long_range_is_rejected() {
        let lr = RateModel::long_range_geometric(1, 1.0, 1.0).unwrap();
        let err = constant_a(&lr, &WeightFamily::uniform(), None).unwrap_err();
        assert!(err.is_hypothesis_violation());
        assert!(constant_c(&lr).unwrap_err().is_hypothesis_violation());
    }

    #[test]
    fn geometric_a_in_two_dimensions_matches_shell_sum() {
        // Σ_k 8k θ^k = 8θ/(1-θ)^2 in d = 2
        let lr = RateModel::long_range_geometric(2, 0.3, 1.0).unwrap();
        let a = constant_a(&lr, &WeightFamily::uniform(), None).unwrap();
        let exact = 8.0 * 0.3 / (0.7f64 * 0.7);
        assert!((a - exact).abs() < 1e-12, "{a} vs {exact}");
    }

    #[test]
    fn truncation_radius_bounds_the_tail() {
        for &(theta, scale) in &[(0.5, 1.0), (0.9, 2.0), (0.1, 0.5)] {
            let r = geometric_truncation_radius(theta, scale, 1, 1e-9);
            assert!(scale * geometric_tail(theta, 1, u64::from(r)) <= 1e-9);
        }
    }

    #[test]
    fn long_range_rate_is_within_tolerance_of_closed_form() {
        // all ones except the origin: Σ_{w≠0} θ^{|w|} = 2θ/(1-θ)
        let lr = RateModel::long_range_geometric(1, 0.5, 1.0).unwrap();
        let c = Configuration::one().flip(&s(0));
        let r = lr.rate(&s(0), &c, 1e-9);
        assert!((r - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn gamma_examples() {
        let a = RateModel::contact(1, 1.5).unwrap().influence();
        assert_eq!(gamma(&a, &s(0), &Configuration::indicator(&[s(0)])), 0.0);
        assert_eq!(gamma(&a, &s(0), &Configuration::indicator(&[s(1)])), 1.5);
        assert_eq!(gamma(&a, &s(0), &Configuration::zero()), 0.0);
        // infinite support through the finite-source path
        assert_eq!(gamma(&a, &s(0), &Configuration::one().flip(&s(0))), 3.0);
    }

    #[test]
    fn g_total_examples() {
        let w = WeightFamily::uniform();
        let abar = RateModel::contact(1, 1.5).unwrap().influence().transpose();
        assert_eq!(g_total(&abar, &w, &Configuration::zero()).unwrap(), 0.0);
        assert_eq!(
            g_total(&abar, &w, &Configuration::indicator(&[s(0)])).unwrap(),
            3.0
        );
        let ind = RateModel::independent(1, 1.0, 1.0).unwrap().influence();
        let chi = Configuration::indicator(&[s(0), s(3)]);
        assert_eq!(g_total(&ind, &w, &chi).unwrap(), 0.0);
    }

    #[test]
    fn g_total_geometric_matches_direct_sum() {
        let lr = RateModel::long_range_geometric(1, 0.5, 1.0).unwrap();
        let abar = lr.influence().transpose();
        let chi = Configuration::indicator(&[s(0), s(1)]);
        let g = g_total(&abar, &WeightFamily::uniform(), &chi).unwrap();
        let direct: f64 = (-60..=60).map(s).map(|v| gamma(&abar, &v, &chi)).sum();
        assert!((g - direct).abs() < 1e-12, "{g} vs {direct}");
    }

    #[test]
    fn transpose_and_truncation() {
        let m = RateModel::tabulated(
            RateTable::from_patterns(
                1,
                1,
                [("001", 2.0), ("011", 2.0), ("101", 2.0), ("111", 2.0)],
            )
            .unwrap(),
        );
        // rate at v depends on η(v+1) only: a(v+1, v) = 2
        let a = m.influence();
        assert_eq!(a.a_of(&s(1), &s(0)), 2.0);
        assert_eq!(a.a_of(&s(-1), &s(0)), 0.0);
        let abar = a.transpose();
        assert_eq!(abar.a_of(&s(0), &s(1)), 2.0);
        assert_eq!(abar.a_of(&s(1), &s(0)), 0.0);
        let an = a.truncated(LatticeBox::new(1, 0));
        assert_eq!(an.a_of(&s(1), &s(0)), 0.0);
        assert_eq!(abar.sources_of(&s(1)).unwrap(), vec![(s(0), 2.0)]);
        assert_eq!(a.targets_of(&s(1)).unwrap(), vec![(s(0), 2.0)]);
    }

    #[test]
    fn non_uniform_weights_need_finite_range_and_scope() {
        let m = RateModel::contact(1, 1.0).unwrap();
        let w = WeightFamily::radial_exponential(0.5).unwrap();
        assert!(constant_a(&m, &w, None).is_err());
        let scope = LatticeBox::new(1, 3);
        let a = constant_a(&m, &w, Some(&scope)).unwrap();
        // at v = 0 both neighbours are heavier: 2 e^{1/2}
        assert!((a - 2.0 * 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_examples() {
        let ind = RateModel::independent(1, 2.0, 3.0).unwrap();
        let r = check_lipschitz(&ind, &LatticeBox::new(1, 2), &s(0), 0.0).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_slack, 0.0);
        let contact = RateModel::contact(1, 1.5).unwrap();
        let r = check_lipschitz(&contact, &LatticeBox::new(1, 2), &s(0), 0.0).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn misdeclared_influence_fails_with_witness() {
        // the right neighbour is missing from the declaration
        let declared = Influence::finite(1, vec![(s(-1), 1.5)]);
        let m = RateModel::contact(1, 1.5)
            .unwrap()
            .with_declared_influence(declared)
            .unwrap();
        let r = check_lipschitz(&m, &LatticeBox::new(1, 1), &s(0), 0.0).unwrap();
        let w = r.witness.expect("must fail");
        assert!(w.rate_gap > w.bound);
        assert!(r.worst_slack < 0.0);
        assert_eq!(w.first.eval(&s(0)), w.second.eval(&s(0)));
    }
}
