//! Sites of Z^d and the centered max-norm boxes exhausting it.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use smallvec::SmallVec;

use crate::error::{Result, SpinError};

/// A lattice point of Z^d. Ordering is lexicographic in the coordinates.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(SmallVec<[i64; 4]>);

impl Site {
    pub fn new(coords: impl IntoIterator<Item = i64>) -> Self {
        let coords: SmallVec<[i64; 4]> = coords.into_iter().collect();
        assert!(!coords.is_empty(), "sites need at least one coordinate");
        Site(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Site::new(std::iter::repeat_n(0, dim))
    }

    /// Shorthand for one-dimensional sites.
    pub fn d1(x: i64) -> Self {
        Site::new([x])
    }

    /// The site `sign * e_axis`.
    pub fn unit(dim: usize, axis: usize, sign: i64) -> Self {
        Site::new((0..dim).map(|i| if i == axis { sign } else { 0 }))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn max_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    /// Max-norm distance.
    pub fn distance(&self, other: &Site) -> u64 {
        (self - other).max_norm()
    }

    /// The 2d nearest neighbours, in lexicographic order.
    pub fn neighbors(&self) -> impl Iterator<Item = Site> + '_ {
        let d = self.dim();
        (0..d)
            .flat_map(move |axis| [-1, 1].into_iter().map(move |s| (axis, s)))
            .map(move |(axis, s)| {
                let mut c = self.0.clone();
                c[axis] += s;
                Site(c)
            })
    }

    pub fn is_neighbor(&self, other: &Site) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).unsigned_abs())
            .sum::<u64>()
            == 1
    }
}

impl Add for &Site {
    type Output = Site;
    fn add(self, rhs: &Site) -> Site {
        debug_assert_eq!(self.dim(), rhs.dim());
        Site(
            self.0
                .iter()
                .zip(rhs.0.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl Sub for &Site {
    type Output = Site;
    fn sub(self, rhs: &Site) -> Site {
        debug_assert_eq!(self.dim(), rhs.dim());
        Site(
            self.0
                .iter()
                .zip(rhs.0.iter())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

impl FromStr for Site {
    type Err = SpinError;

    /// Comma-separated integer coordinates, e.g. `3` or `-1,2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        if s.is_empty() {
            return Err(SpinError::Parse("empty site".into()));
        }
        let coords = s
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<i64>()
                    .map_err(|e| SpinError::Parse(format!("bad coordinate {c:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Site::new(coords))
    }
}

/// The centered box `{v : |v|_inf <= radius}` of Z^dim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatticeBox {
    dim: usize,
    radius: u32,
}

impl LatticeBox {
    pub fn new(dim: usize, radius: u32) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        LatticeBox { dim, radius }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    /// Number of sites, `(2n+1)^d`.
    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, v: &Site) -> bool {
        v.dim() == self.dim && v.max_norm() <= u64::from(self.radius)
    }

    /// Sites with max-norm exactly `radius`.
    pub fn on_boundary(&self, v: &Site) -> bool {
        v.dim() == self.dim && v.max_norm() == u64::from(self.radius)
    }

    /// Position of `v` in the lexicographic enumeration, if inside.
    pub fn index_of(&self, v: &Site) -> Option<usize> {
        if !self.contains(v) {
            return None;
        }
        let r = i64::from(self.radius);
        let side = self.side();
        Some(
            v.coords()
                .iter()
                .fold(0usize, |acc, &c| acc * side + (c + r) as usize),
        )
    }

    pub fn site_at(&self, mut index: usize) -> Site {
        assert!(index < self.len(), "index {index} outside box");
        let side = self.side();
        let r = i64::from(self.radius);
        let mut coords = vec![0i64; self.dim];
        for slot in coords.iter_mut().rev() {
            *slot = (index % side) as i64 - r;
            index /= side;
        }
        Site::new(coords)
    }

    /// All sites in lexicographic order.
    pub fn sites(&self) -> Vec<Site> {
        (0..self.len()).map(|i| self.site_at(i)).collect()
    }

    /// Smallest box of this dimension containing `v`.
    pub fn smallest_containing(v: &Site) -> Self {
        LatticeBox::new(v.dim(), v.max_norm() as u32)
    }
}

/// Sites of `outer` that are not in `inner`, lexicographically ordered.
pub fn complement_in(outer: &LatticeBox, inner: &LatticeBox) -> Result<Vec<Site>> {
    if outer.dim() != inner.dim() {
        return Err(SpinError::Dimension {
            expected: outer.dim(),
            found: inner.dim(),
        });
    }
    if inner.radius() > outer.radius() {
        return Err(SpinError::BoxOrder {
            inner: inner.radius(),
            outer: outer.radius(),
        });
    }
    Ok(outer
        .sites()
        .into_iter()
        .filter(|v| !inner.contains(v))
        .collect())
}

/// A finite, ordered set of sites with constant-time position lookup.
///
/// Simulations keep their dynamic coordinates in dense arrays indexed by
/// frame position.
#[derive(Clone, Debug)]
pub struct Frame {
    sites: Vec<Site>,
    index: FrameIndex,
}

#[derive(Clone, Debug)]
enum FrameIndex {
    Box(LatticeBox),
    Map(HashMap<Site, usize>),
}

impl Frame {
    pub fn from_box(b: LatticeBox) -> Self {
        Frame {
            sites: b.sites(),
            index: FrameIndex::Box(b),
        }
    }

    /// Sorts and deduplicates `sites`.
    pub fn from_sites(sites: impl IntoIterator<Item = Site>) -> Self {
        let mut sites: Vec<Site> = sites.into_iter().collect();
        sites.sort();
        sites.dedup();
        let map = sites
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Frame {
            sites,
            index: FrameIndex::Map(map),
        }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn position(&self, v: &Site) -> Option<usize> {
        match &self.index {
            FrameIndex::Box(b) => b.index_of(v),
            FrameIndex::Map(m) => m.get(v).copied(),
        }
    }

    pub fn contains(&self, v: &Site) -> bool {
        self.position(v).is_some()
    }

    pub fn as_box(&self) -> Option<LatticeBox> {
        match self.index {
            FrameIndex::Box(b) => Some(b),
            FrameIndex::Map(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d1(xs: &[i64]) -> Vec<Site> {
        xs.iter().map(|&x| Site::d1(x)).collect()
    }

    #[test]
    fn boxes_in_one_dimension() {
        assert_eq!(LatticeBox::new(1, 0).sites(), d1(&[0]));
        assert_eq!(LatticeBox::new(1, 1).sites(), d1(&[-1, 0, 1]));
    }

    #[test]
    fn two_dimensional_box_has_nine_sites() {
        let b = LatticeBox::new(2, 1);
        let sites = b.sites();
        assert_eq!(sites.len(), 9);
        assert!(sites.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sites[0], Site::new([-1, -1]));
    }

    #[test]
    fn complements() {
        let c = complement_in(&LatticeBox::new(1, 2), &LatticeBox::new(1, 1)).unwrap();
        assert_eq!(c, d1(&[-2, 2]));
        let same = complement_in(&LatticeBox::new(1, 3), &LatticeBox::new(1, 3)).unwrap();
        assert!(same.is_empty());
        let c2 = complement_in(&LatticeBox::new(2, 2), &LatticeBox::new(2, 1)).unwrap();
        assert_eq!(c2.len(), 16);
    }

    #[test]
    fn complement_rejects_inverted_boxes() {
        let err = complement_in(&LatticeBox::new(1, 1), &LatticeBox::new(1, 2)).unwrap_err();
        assert_eq!(err, SpinError::BoxOrder { inner: 2, outer: 1 });
    }

    #[test]
    fn site_parsing() {
        assert_eq!("-1,2".parse::<Site>().unwrap(), Site::new([-1, 2]));
        assert_eq!("(3)".parse::<Site>().unwrap(), Site::d1(3));
        assert!("x".parse::<Site>().is_err());
    }

    #[test]
    fn neighbors_of_origin_in_2d() {
        let n: Vec<Site> = Site::origin(2).neighbors().collect();
        assert_eq!(n.len(), 4);
        assert!(n.iter().all(|w| w.is_neighbor(&Site::origin(2))));
    }

    proptest! {
        #[test]
        fn boxes_are_nested(dim in 1usize..4, n in 0u32..4) {
            let inner = LatticeBox::new(dim, n);
            let outer = LatticeBox::new(dim, n + 1);
            prop_assert_eq!(inner.len(), (2 * n as usize + 1).pow(dim as u32));
            for s in inner.sites() {
                prop_assert!(outer.contains(&s));
            }
        }

        #[test]
        fn minimal_box_is_max_norm(coords in proptest::collection::vec(-20i64..20, 1..4)) {
            let s = Site::new(coords);
            let b = LatticeBox::smallest_containing(&s);
            prop_assert!(b.contains(&s));
            prop_assert_eq!(u64::from(b.radius()), s.max_norm());
            if b.radius() > 0 {
                prop_assert!(!LatticeBox::new(s.dim(), b.radius() - 1).contains(&s));
            }
        }

        #[test]
        fn index_round_trip(dim in 1usize..4, n in 0u32..3, k in 0usize..343) {
            let b = LatticeBox::new(dim, n);
            let k = k % b.len();
            prop_assert_eq!(b.index_of(&b.site_at(k)), Some(k));
        }
    }
}
