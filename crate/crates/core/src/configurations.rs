//! Elements of X = {0,1}^V as a periodic background plus finitely many
//! deviations.
//!
//! Text form: `bg=<zero|one|period:PATTERN>; dev=<sites>` where `PATTERN` is a
//! bit string (`period:10`) or, in more than one dimension, a shape and a
//! row-major bit string (`period:2x2:1001`). Sites in `dev` are separated by
//! spaces, coordinates by commas: `bg=zero; dev=-1,0 2,3`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SpinError};
use crate::lattice::{Frame, Site};
use crate::rates::WeightFamily;

/// Read access to the spin at a site.
pub trait SpinLookup {
    fn spin(&self, v: &Site) -> bool;
}

/// A periodic 0/1 pattern on Z^d; `shape[i]` is the period along axis `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pattern {
    shape: Vec<usize>,
    bits: Vec<bool>,
}

impl Pattern {
    pub fn new(shape: Vec<usize>, bits: Vec<bool>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(SpinError::InvalidParameter(format!(
                "pattern shape {shape:?} must be non-empty with positive periods"
            )));
        }
        let expected: usize = shape.iter().product();
        if bits.len() != expected {
            return Err(SpinError::InvalidParameter(format!(
                "pattern of shape {shape:?} needs {expected} bits, got {}",
                bits.len()
            )));
        }
        Ok(Pattern { shape, bits })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &p)| acc * p + i)
    }

    pub fn at(&self, v: &Site) -> bool {
        assert_eq!(
            v.dim(),
            self.shape.len(),
            "site dimension does not match pattern"
        );
        let idx: Vec<usize> = v
            .coords()
            .iter()
            .zip(&self.shape)
            .map(|(&c, &p)| c.rem_euclid(p as i64) as usize)
            .collect();
        self.bits[self.offset(&idx)]
    }

    /// Reduce every axis to its minimal period.
    fn minimized(mut self) -> Self {
        for axis in 0..self.shape.len() {
            let p = self.shape[axis];
            let best = (1..=p)
                .filter(|q| p.is_multiple_of(*q))
                .find(|&q| self.periodic_along(axis, q))
                .unwrap_or(p);
            if best < p {
                self = self.truncate_axis(axis, best);
            }
        }
        self
    }

    fn multi_indices(shape: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &p in shape {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..p).map(move |i| {
                        let mut v = prefix.clone();
                        v.push(i);
                        v
                    })
                })
                .collect();
        }
        out
    }

    fn periodic_along(&self, axis: usize, q: usize) -> bool {
        Self::multi_indices(&self.shape).into_iter().all(|idx| {
            let mut shifted = idx.clone();
            shifted[axis] = (idx[axis] + q) % self.shape[axis];
            self.bits[self.offset(&idx)] == self.bits[self.offset(&shifted)]
        })
    }

    fn truncate_axis(&self, axis: usize, q: usize) -> Self {
        let mut shape = self.shape.clone();
        shape[axis] = q;
        let bits = Self::multi_indices(&shape)
            .into_iter()
            .map(|idx| self.bits[self.offset(&idx)])
            .collect();
        Pattern { shape, bits }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Background {
    Zero,
    One,
    Periodic(Pattern),
}

impl Background {
    pub fn at(&self, v: &Site) -> bool {
        match self {
            Background::Zero => false,
            Background::One => true,
            Background::Periodic(p) => p.at(v),
        }
    }

    fn canonical(self) -> Self {
        match self {
            Background::Periodic(p) => {
                let p = p.minimized();
                if p.bits.iter().all(|b| !b) {
                    Background::Zero
                } else if p.bits.iter().all(|&b| b) {
                    Background::One
                } else {
                    Background::Periodic(p)
                }
            }
            other => other,
        }
    }
}

/// Weighted occupation `q(χ) = Σ λ_v χ(v)`; infinite for infinite support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QWeight {
    Finite(f64),
    Infinite,
}

impl QWeight {
    pub fn finite(self) -> Option<f64> {
        match self {
            QWeight::Finite(q) => Some(q),
            QWeight::Infinite => None,
        }
    }
}

/// A configuration in canonical form: minimal background period and
/// deviations exactly where the value differs from the background, so `==`
/// coincides with pointwise equality.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    background: Background,
    deviations: BTreeSet<Site>,
}

impl Configuration {
    pub fn zero() -> Self {
        Configuration {
            background: Background::Zero,
            deviations: BTreeSet::new(),
        }
    }

    pub fn one() -> Self {
        Configuration {
            background: Background::One,
            deviations: BTreeSet::new(),
        }
    }

    pub fn periodic(pattern: Pattern) -> Self {
        Configuration {
            background: Background::Periodic(pattern).canonical(),
            deviations: BTreeSet::new(),
        }
    }

    /// The indicator `1_W` of a finite site set.
    pub fn indicator<'a>(sites: impl IntoIterator<Item = &'a Site>) -> Self {
        Configuration {
            background: Background::Zero,
            deviations: sites.into_iter().cloned().collect(),
        }
    }

    pub fn background(&self) -> &Background {
        &self.background
    }

    /// Sites where the configuration differs from its background.
    pub fn deviations(&self) -> &BTreeSet<Site> {
        &self.deviations
    }

    /// True for elements of X' (finitely many ones).
    pub fn has_finite_support(&self) -> bool {
        self.background == Background::Zero
    }

    /// The occupied sites, when finitely many.
    pub fn support(&self) -> Option<&BTreeSet<Site>> {
        self.has_finite_support().then_some(&self.deviations)
    }

    pub fn eval(&self, v: &Site) -> bool {
        self.background.at(v) ^ self.deviations.contains(v)
    }

    /// `η^v`: the configuration flipped at `v` only.
    pub fn flip(&self, v: &Site) -> Self {
        let mut out = self.clone();
        out.flip_mut(v);
        out
    }

    pub fn flip_mut(&mut self, v: &Site) {
        if !self.deviations.remove(v) {
            self.deviations.insert(v.clone());
        }
    }

    pub fn set(&mut self, v: &Site, value: bool) {
        if self.eval(v) != value {
            self.flip_mut(v);
        }
    }

    pub fn agree_on<'a>(
        &self,
        other: &Configuration,
        sites: impl IntoIterator<Item = &'a Site>,
    ) -> bool {
        sites.into_iter().all(|v| self.eval(v) == other.eval(v))
    }

    pub fn q_weight(&self, weights: &WeightFamily) -> QWeight {
        if !self.has_finite_support() {
            return QWeight::Infinite;
        }
        let terms: Vec<f64> = self.deviations.iter().map(|v| weights.lambda(v)).collect();
        QWeight::Finite(crate::seeds::pairwise_sum(&terms))
    }

    /// Number of ones, when finite.
    pub fn cardinality(&self) -> Option<usize> {
        self.support().map(BTreeSet::len)
    }
}

impl SpinLookup for Configuration {
    fn spin(&self, v: &Site) -> bool {
        self.eval(v)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.background {
            Background::Zero => f.write_str("bg=zero")?,
            Background::One => f.write_str("bg=one")?,
            Background::Periodic(p) => {
                f.write_str("bg=period:")?;
                if p.shape.len() > 1 {
                    let shape: Vec<String> = p.shape.iter().map(ToString::to_string).collect();
                    write!(f, "{}:", shape.join("x"))?;
                }
                for &b in &p.bits {
                    f.write_str(if b { "1" } else { "0" })?;
                }
            }
        }
        f.write_str("; dev=")?;
        let devs: Vec<String> = self.deviations.iter().map(ToString::to_string).collect();
        f.write_str(&devs.join(" "))
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({self})")
    }
}

fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(SpinError::Parse(format!("bad pattern bit {other:?}"))),
        })
        .collect()
}

impl FromStr for Configuration {
    type Err = SpinError;

    fn from_str(s: &str) -> Result<Self> {
        let mut background = None;
        let mut deviations = BTreeSet::new();
        for field in s.split(';').map(str::trim).filter(|f| !f.is_empty()) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| SpinError::Parse(format!("expected key=value, got {field:?}")))?;
            match key.trim() {
                "bg" => {
                    let value = value.trim();
                    background = Some(match value {
                        "zero" => Background::Zero,
                        "one" => Background::One,
                        _ => {
                            let spec = value.strip_prefix("period:").ok_or_else(|| {
                                SpinError::Parse(format!("unknown background {value:?}"))
                            })?;
                            let pattern = match spec.split_once(':') {
                                Some((shape, bits)) => {
                                    let shape = shape
                                        .split('x')
                                        .map(|p| {
                                            p.parse::<usize>().map_err(|e| {
                                                SpinError::Parse(format!("bad period {p:?}: {e}"))
                                            })
                                        })
                                        .collect::<Result<Vec<_>>>()?;
                                    Pattern::new(shape, parse_bits(bits)?)?
                                }
                                None => {
                                    let bits = parse_bits(spec)?;
                                    Pattern::new(vec![bits.len()], bits)?
                                }
                            };
                            Background::Periodic(pattern)
                        }
                    });
                }
                "dev" => {
                    for token in value.split_whitespace() {
                        let site: Site = token.parse()?;
                        if !deviations.insert(site) {
                            return Err(SpinError::Parse(format!("duplicate deviation {token}")));
                        }
                    }
                }
                other => return Err(SpinError::Parse(format!("unknown field {other:?}"))),
            }
        }
        let background = background.ok_or_else(|| SpinError::Parse("missing bg=".into()))?;
        let mut cfg = Configuration {
            background: Background::Zero,
            deviations: BTreeSet::new(),
        };
        // Values are fixed against the background as written, then re-expressed
        // against the canonical one.
        let canonical = background.clone().canonical();
        cfg.background = canonical;
        for v in &deviations {
            let value = !background.at(v);
            cfg.set(v, value);
        }
        Ok(cfg)
    }
}

/// Dense spins on a frame, falling back to a base configuration elsewhere.
#[derive(Clone, Debug)]
pub struct FrameState<'a> {
    frame: &'a Frame,
    base: &'a Configuration,
    bits: Vec<bool>,
}

impl<'a> FrameState<'a> {
    pub fn new(frame: &'a Frame, base: &'a Configuration) -> Self {
        let bits = frame.sites().iter().map(|v| base.eval(v)).collect();
        FrameState { frame, base, bits }
    }

    pub fn from_bits(frame: &'a Frame, base: &'a Configuration, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), frame.len());
        FrameState { frame, base, bits }
    }

    pub fn frame(&self) -> &'a Frame {
        self.frame
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn toggle(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn set_bits(&mut self, bits: &[bool]) {
        self.bits.copy_from_slice(bits);
    }

    pub fn to_configuration(&self) -> Configuration {
        let mut cfg = self.base.clone();
        for (v, &b) in self.frame.sites().iter().zip(&self.bits) {
            cfg.set(v, b);
        }
        cfg
    }
}

impl SpinLookup for FrameState<'_> {
    fn spin(&self, v: &Site) -> bool {
        match self.frame.position(v) {
            Some(i) => self.bits[i],
            None => self.base.eval(v),
        }
    }
}
