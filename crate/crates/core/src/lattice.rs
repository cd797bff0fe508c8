//! Geometry of `Z^d` restricted to finite observation windows.
//!
//! Two set representations live here. [`SiteSet`] is a dense bitset over the
//! flat row-major indices of a [`BoxGeometry`] and is what the percolation code
//! works with. [`PointSet`] is a sparse hashed subset of `Z^d`, used by the
//! potential-theory code where targets (ranges of long walks, for instance) do
//! not fit in any reasonable dense window.

use std::fmt;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported lattice dimension. Step directions are packed into
/// 4-bit codes, so `2 * MAX_DIM` must not exceed 16.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("dimension must be in 1..={MAX_DIM}, got {0}")]
    BadDimension(usize),
    #[error("box side must be at least 1")]
    EmptyBox,
    #[error("ball of radius {radius} about {center} leaves the free window")]
    OutOfWindow { center: Point, radius: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A site of `Z^d`. Coordinates beyond the dimension are kept at zero so that
/// equality and hashing only see the meaningful part.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Point(pub [i32; MAX_DIM]);

impl Point {
    pub const ORIGIN: Point = Point([0; MAX_DIM]);

    pub fn new(coords: &[i32]) -> Point {
        assert!(coords.len() <= MAX_DIM, "too many coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point(c)
    }

    /// Unit vector along `axis`, scaled by `k`.
    pub fn axis(axis: usize, k: i32) -> Point {
        let mut p = Point::ORIGIN;
        p.0[axis] = k;
        p
    }

    #[inline]
    pub fn coords(&self, dim: usize) -> &[i32] {
        &self.0[..dim]
    }

    /// Moves one lattice step in direction `dir` (axis `dir / 2`, positive
    /// when `dir` is even).
    #[inline]
    pub fn step(&mut self, dir: u8) {
        let axis = (dir >> 1) as usize;
        if dir & 1 == 0 {
            self.0[axis] += 1;
        } else {
            self.0[axis] -= 1;
        }
    }

    #[inline]
    pub fn stepped(mut self, dir: u8) -> Point {
        self.step(dir);
        self
    }

    #[inline]
    pub fn add(&self, other: &Point) -> Point {
        let mut out = *self;
        for (a, b) in out.0.iter_mut().zip(other.0.iter()) {
            *a += *b;
        }
        out
    }

    #[inline]
    pub fn sub(&self, other: &Point) -> Point {
        let mut out = *self;
        for (a, b) in out.0.iter_mut().zip(other.0.iter()) {
            *a -= *b;
        }
        out
    }

    /// Sup-norm `|x| = max_i |x_i|`.
    #[inline]
    pub fn sup_norm(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    #[inline]
    pub fn sup_dist(&self, other: &Point) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or(0)
    }

    /// Squared Euclidean norm.
    #[inline]
    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|&c| (c as f64) * (c as f64)).sum()
    }

    pub fn l1_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs() as u64).sum()
    }
}

impl Point {
    /// Coordinates up to the last nonzero one (at least one entry).
    pub fn trimmed(&self) -> &[i32] {
        let last = self.0.iter().rposition(|&c| c != 0).map_or(1, |i| i + 1);
        &self.0[..last]
    }
}

// Points carry no dimension, so they serialize as their trimmed coordinate
// list; missing trailing coordinates read back as zeros.
impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.trimmed().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<i32>::deserialize(d)?;
        if v.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!("point has {} > {MAX_DIM} coordinates", v.len())));
        }
        Ok(Point::new(&v))
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.trimmed().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Free,
    Torus,
}

/// A hypercubic window `origin + [0, side)^d` with flat row-major indexing
/// (the last axis varies fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxGeometry {
    dim: usize,
    side: u32,
    boundary: Boundary,
    origin: Point,
    strides: [usize; MAX_DIM],
    volume: usize,
}

impl BoxGeometry {
    pub fn new(dim: usize, side: u32, boundary: Boundary, origin: Point) -> Result<Self, LatticeError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LatticeError::BadDimension(dim));
        }
        if side == 0 {
            return Err(LatticeError::EmptyBox);
        }
        let mut strides = [0usize; MAX_DIM];
        let mut acc = 1usize;
        for axis in (0..dim).rev() {
            strides[axis] = acc;
            acc = acc
                .checked_mul(side as usize)
                .expect("box volume overflows usize");
        }
        let mut origin = origin;
        origin.0[dim..].iter_mut().for_each(|c| *c = 0);
        Ok(BoxGeometry { dim, side, boundary, origin, strides, volume: acc })
    }

    /// The window `ball(o, half_width)`, i.e. side `2 * half_width + 1`.
    pub fn centered(dim: usize, half_width: u32, boundary: Boundary) -> Result<Self, LatticeError> {
        let h = half_width as i32;
        let origin = Point::new(&vec![-h; dim.min(MAX_DIM)]);
        BoxGeometry::new(dim, 2 * half_width + 1, boundary, origin)
    }

    /// `[0, side)^d` with the given boundary.
    pub fn cube(dim: usize, side: u32, boundary: Boundary) -> Result<Self, LatticeError> {
        BoxGeometry::new(dim, side, boundary, Point::ORIGIN)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }
    #[inline]
    pub fn side(&self) -> u32 {
        self.side
    }
    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    #[inline]
    pub fn origin(&self) -> Point {
        self.origin
    }
    #[inline]
    pub fn num_sites(&self) -> usize {
        self.volume
    }

    /// Same window grown by `margin` sites on every side (boundary kept).
    pub fn padded(&self, margin: u32) -> BoxGeometry {
        let m = margin as i32;
        let mut origin = self.origin;
        origin.0[..self.dim].iter_mut().for_each(|c| *c -= m);
        BoxGeometry::new(self.dim, self.side + 2 * margin, self.boundary, origin)
            .expect("padding keeps a valid geometry")
    }

    /// Coordinates of the site with flat index `idx`.
    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        debug_assert!(idx < self.volume);
        let mut p = self.origin;
        let mut rem = idx;
        for axis in 0..self.dim {
            let q = rem / self.strides[axis];
            rem -= q * self.strides[axis];
            p.0[axis] += q as i32;
        }
        p
    }

    /// Flat index of `p`. Under `Free` boundary, sites outside the window
    /// give `None`; under `Torus` every site is wrapped into the window.
    #[inline]
    pub fn index(&self, p: &Point) -> Option<usize> {
        let side = self.side as i64;
        let mut idx = 0usize;
        for axis in 0..self.dim {
            let mut c = (p.0[axis] - self.origin.0[axis]) as i64;
            if c < 0 || c >= side {
                match self.boundary {
                    Boundary::Free => return None,
                    Boundary::Torus => c = c.rem_euclid(side),
                }
            }
            idx += c as usize * self.strides[axis];
        }
        Some(idx)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|axis| {
            let c = p.0[axis] - self.origin.0[axis];
            c >= 0 && (c as u32) < self.side
        })
    }

    /// Neighbor of site `idx` in direction `dir`; `None` when the step leaves
    /// a free window.
    #[inline]
    pub fn neighbor(&self, idx: usize, dir: u8) -> Option<usize> {
        let axis = (dir >> 1) as usize;
        let stride = self.strides[axis];
        let c = (idx / stride) % self.side as usize;
        let last = self.side as usize - 1;
        if dir & 1 == 0 {
            if c < last {
                Some(idx + stride)
            } else if self.boundary == Boundary::Torus {
                Some(idx - last * stride)
            } else {
                None
            }
        } else if c > 0 {
            Some(idx - stride)
        } else if self.boundary == Boundary::Torus {
            Some(idx + last * stride)
        } else {
            None
        }
    }

    /// Neighbors of `idx` in direction order. A torus of side 1 or 2 reports
    /// repeated neighbors, exactly as the multigraph has them.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..2 * self.dim as u8).filter_map(move |dir| self.neighbor(idx, dir))
    }

    /// Coordinate of `idx` along `axis`, relative to the window origin.
    #[inline]
    pub fn axis_coord(&self, idx: usize, axis: usize) -> u32 {
        ((idx / self.strides[axis]) % self.side as usize) as u32
    }
}

/// A subset of a [`BoxGeometry`] stored as a bitset over flat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteSet {
    geom: BoxGeometry,
    bits: Vec<u64>,
    count: usize,
}

impl SiteSet {
    pub fn empty(geom: &BoxGeometry) -> SiteSet {
        SiteSet { geom: geom.clone(), bits: vec![0; geom.num_sites().div_ceil(64)], count: 0 }
    }

    pub fn full(geom: &BoxGeometry) -> SiteSet {
        let mut s = SiteSet::empty(geom);
        for idx in 0..geom.num_sites() {
            s.insert(idx);
        }
        s
    }

    pub fn from_indices(geom: &BoxGeometry, indices: impl IntoIterator<Item = usize>) -> SiteSet {
        let mut s = SiteSet::empty(geom);
        for idx in indices {
            s.insert(idx);
        }
        s
    }

    #[inline]
    pub fn geometry(&self) -> &BoxGeometry {
        &self.geom
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        idx < self.geom.num_sites() && self.bits[idx >> 6] >> (idx & 63) & 1 == 1
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.geom.index(p).is_some_and(|i| self.contains(i))
    }

    /// Returns `true` when the site was not present before.
    #[inline]
    pub fn insert(&mut self, idx: usize) -> bool {
        let word = &mut self.bits[idx >> 6];
        let mask = 1u64 << (idx & 63);
        let fresh = *word & mask == 0;
        *word |= mask;
        self.count += fresh as usize;
        fresh
    }

    pub fn remove(&mut self, idx: usize) -> bool {
        let word = &mut self.bits[idx >> 6];
        let mask = 1u64 << (idx & 63);
        let present = *word & mask != 0;
        *word &= !mask;
        self.count -= present as usize;
        present
    }

    /// Indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let tz = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(w * 64 + tz)
            })
        })
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.iter().map(|i| self.geom.point(i))
    }

    pub fn to_point_set(&self) -> PointSet {
        PointSet::from_points(self.geom.dim(), self.points())
    }

    fn assert_same_geometry(&self, other: &SiteSet) {
        assert_eq!(self.geom, other.geom, "site sets live on different geometries");
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        self.assert_same_geometry(other);
        let bits: Vec<u64> = self.bits.iter().zip(&other.bits).map(|(a, b)| a | b).collect();
        let count = bits.iter().map(|w| w.count_ones() as usize).sum();
        SiteSet { geom: self.geom.clone(), bits, count }
    }

    pub fn intersection(&self, other: &SiteSet) -> SiteSet {
        self.assert_same_geometry(other);
        let bits: Vec<u64> = self.bits.iter().zip(&other.bits).map(|(a, b)| a & b).collect();
        let count = bits.iter().map(|w| w.count_ones() as usize).sum();
        SiteSet { geom: self.geom.clone(), bits, count }
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.assert_same_geometry(other);
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &SiteSet) -> bool {
        self.assert_same_geometry(other);
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & b == 0)
    }
}

/// Sites `y` of the window with `|y - center| <= radius`.
///
/// Under `Free` boundary the whole ball must fit in the window; under `Torus`
/// the ball wraps (and may cover the torus several times over, in which case
/// the result is simply the full torus).
pub fn ball_sites(center: &Point, radius: u32, geom: &BoxGeometry) -> Result<SiteSet, LatticeError> {
    let dim = geom.dim();
    let r = radius as i32;
    if geom.boundary() == Boundary::Free {
        let lo = center.sub(&Point::new(&vec![r; dim]));
        let hi = center.add(&Point::new(&vec![r; dim]));
        if !geom.contains(&lo) || !geom.contains(&hi) {
            return Err(LatticeError::OutOfWindow { center: *center, radius });
        }
    }
    let mut set = SiteSet::empty(geom);
    let side = 2 * radius + 1;
    let offsets = BoxGeometry::new(dim, side, Boundary::Free, Point::new(&vec![-r; dim]))?;
    for k in 0..offsets.num_sites() {
        let p = center.add(&offsets.point(k));
        if let Some(idx) = geom.index(&p) {
            set.insert(idx);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Interior,
    Exterior,
}

/// Interior or exterior vertex boundary of `set` within its window.
///
/// Under `Free` boundary, exterior sites that fall outside the window cannot
/// be represented and are omitted; pad the window first when the full
/// exterior boundary is needed. Window edges themselves are not treated as
/// "outside" for the interior boundary.
pub fn boundary(set: &SiteSet, kind: BoundaryKind) -> SiteSet {
    let geom = set.geometry();
    let mut out = SiteSet::empty(geom);
    match kind {
        BoundaryKind::Interior => {
            for idx in set.iter() {
                if geom.neighbors(idx).any(|n| !set.contains(n)) {
                    out.insert(idx);
                }
            }
        }
        BoundaryKind::Exterior => {
            for idx in set.iter() {
                for n in geom.neighbors(idx) {
                    if !set.contains(n) {
                        out.insert(n);
                    }
                }
            }
        }
    }
    out
}

/// A finite subset of `Z^d` with O(1) membership and a cached bounding box.
#[derive(Debug, Clone)]
pub struct PointSet {
    dim: usize,
    points: Vec<Point>,
    lookup: FxHashSet<Point>,
    lo: Point,
    hi: Point,
}

impl PointSet {
    pub fn new(dim: usize) -> PointSet {
        assert!((1..=MAX_DIM).contains(&dim), "bad dimension {dim}");
        PointSet {
            dim,
            points: Vec::new(),
            lookup: FxHashSet::default(),
            lo: Point([i32::MAX; MAX_DIM]),
            hi: Point([i32::MIN; MAX_DIM]),
        }
    }

    pub fn from_points(dim: usize, pts: impl IntoIterator<Item = Point>) -> PointSet {
        let mut s = PointSet::new(dim);
        for p in pts {
            s.insert(p);
        }
        s
    }

    /// The sup-norm ball of radius `radius` about `center`.
    pub fn ball(dim: usize, center: &Point, radius: u32) -> PointSet {
        let r = radius as i32;
        let offsets = BoxGeometry::new(dim, 2 * radius + 1, Boundary::Free, Point::new(&vec![-r; dim]))
            .expect("valid ball geometry");
        PointSet::from_points(dim, (0..offsets.num_sites()).map(|k| center.add(&offsets.point(k))))
    }

    pub fn insert(&mut self, p: Point) -> bool {
        if !self.lookup.insert(p) {
            return false;
        }
        for axis in 0..self.dim {
            self.lo.0[axis] = self.lo.0[axis].min(p.0[axis]);
            self.hi.0[axis] = self.hi.0[axis].max(p.0[axis]);
        }
        self.points.push(p);
        true
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    /// Points in insertion order.
    #[inline]
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        if self.points.is_empty() {
            return false;
        }
        for axis in 0..self.dim {
            let c = p.0[axis];
            if c < self.lo.0[axis] || c > self.hi.0[axis] {
                return false;
            }
        }
        self.lookup.contains(p)
    }

    /// Bounding box corners, or `None` for the empty set.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        if self.is_empty() {
            None
        } else {
            let mut lo = self.lo;
            let mut hi = self.hi;
            lo.0[self.dim..].iter_mut().for_each(|c| *c = 0);
            hi.0[self.dim..].iter_mut().for_each(|c| *c = 0);
            Some((lo, hi))
        }
    }

    /// Center of the bounding box (rounded down) and the sup-norm radius of
    /// the smallest box about that center containing the set.
    pub fn center_and_radius(&self) -> Option<(Point, u32)> {
        let (lo, hi) = self.bounds()?;
        let mut c = Point::ORIGIN;
        for axis in 0..self.dim {
            c.0[axis] = ((lo.0[axis] as i64 + hi.0[axis] as i64).div_euclid(2)) as i32;
        }
        let r = self.points.iter().map(|p| p.sup_dist(&c)).max().unwrap_or(0);
        Some((c, r))
    }

    /// Sup-norm diameter `max |x - y|`, attained along some axis of the
    /// bounding box.
    pub fn diameter(&self) -> u32 {
        match self.bounds() {
            None => 0,
            Some((lo, hi)) => (0..self.dim).map(|a| (hi.0[a] - lo.0[a]) as u32).max().unwrap_or(0),
        }
    }

    /// Points with at least one nearest neighbor outside the set; these are
    /// the only sites where the equilibrium measure can be nonzero.
    pub fn exposed(&self) -> Vec<Point> {
        self.points
            .iter()
            .filter(|p| (0..2 * self.dim as u8).any(|dir| !self.contains(&p.stepped(dir))))
            .copied()
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.points.len() <= 1 {
            return true;
        }
        let mut seen = FxHashSet::default();
        let mut stack = vec![self.points[0]];
        seen.insert(self.points[0]);
        while let Some(p) = stack.pop() {
            for dir in 0..2 * self.dim as u8 {
                let q = p.stepped(dir);
                if self.contains(&q) && seen.insert(q) {
                    stack.push(q);
                }
            }
        }
        seen.len() == self.points.len()
    }

    pub fn is_subset(&self, other: &PointSet) -> bool {
        self.points.iter().all(|p| other.contains(p))
    }

    pub fn union(&self, other: &PointSet) -> PointSet {
        let mut out = self.clone();
        for p in other.points() {
            out.insert(*p);
        }
        out
    }

    /// Breadth-first order of the connected component of `root`, starting at
    /// `root`. Every prefix of the returned order is connected.
    pub fn bfs_order(&self, root: &Point) -> Vec<Point> {
        if !self.contains(root) {
            return Vec::new();
        }
        let mut seen = FxHashSet::default();
        let mut order = vec![*root];
        seen.insert(*root);
        let mut head = 0;
        while head < order.len() {
            let p = order[head];
            head += 1;
            for dir in 0..2 * self.dim as u8 {
                let q = p.stepped(dir);
                if self.contains(&q) && seen.insert(q) {
                    order.push(q);
                }
            }
        }
        order
    }
}

impl PartialEq for PointSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.len() == other.len() && self.is_subset(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn free(dim: usize, h: u32) -> BoxGeometry {
        BoxGeometry::centered(dim, h, Boundary::Free).unwrap()
    }

    #[test]
    fn ball_sizes() {
        let g3 = free(3, 4);
        assert_eq!(ball_sites(&Point::ORIGIN, 0, &g3).unwrap().len(), 1);
        assert_eq!(ball_sites(&Point::ORIGIN, 1, &free(2, 3)).unwrap().len(), 9);
        assert_eq!(ball_sites(&Point::ORIGIN, 2, &free(5, 2)).unwrap().len(), 3125);
    }

    #[test]
    fn ball_out_of_free_window_is_rejected() {
        let g = free(2, 3);
        let err = ball_sites(&Point::new(&[2, 0]), 2, &g).unwrap_err();
        assert!(matches!(err, LatticeError::OutOfWindow { .. }));
    }

    #[test]
    fn torus_ball_wraps() {
        let g = BoxGeometry::cube(2, 5, Boundary::Torus).unwrap();
        let b = ball_sites(&Point::ORIGIN, 1, &g).unwrap();
        assert_eq!(b.len(), 9);
        assert!(b.contains_point(&Point::new(&[4, 4])));
        // radius 2 on a side-5 torus covers everything
        assert_eq!(ball_sites(&Point::ORIGIN, 2, &g).unwrap().len(), 25);
    }

    #[test]
    fn boundaries_of_small_sets() {
        let g = free(2, 4);
        let o = SiteSet::from_indices(&g, g.index(&Point::ORIGIN));
        let ext = boundary(&o, BoundaryKind::Exterior);
        assert_eq!(ext.len(), 4);
        for p in ext.points() {
            assert_eq!(p.l1_norm(), 1);
        }
        let b2 = ball_sites(&Point::ORIGIN, 2, &g).unwrap();
        let int = boundary(&b2, BoundaryKind::Interior);
        assert_eq!(int.len(), 16);
        assert!(int.points().all(|p| p.sup_norm() == 2));
        assert!(boundary(&SiteSet::empty(&g), BoundaryKind::Interior).is_empty());
    }

    #[test]
    fn torus_neighbor_counts() {
        for dim in 1..=4 {
            let g = BoxGeometry::cube(dim, 4, Boundary::Torus).unwrap();
            for idx in 0..g.num_sites() {
                let nb: Vec<usize> = g.neighbors(idx).collect();
                assert_eq!(nb.len(), 2 * dim);
                for n in nb {
                    let step = g.point(idx).sub(&g.point(n)).l1_norm();
                    assert!(step == 1 || step == 3);
                }
            }
        }
    }

    #[test]
    fn point_set_geometry() {
        let b = PointSet::ball(3, &Point::new(&[1, 1, 1]), 2);
        assert_eq!(b.len(), 125);
        assert_eq!(b.diameter(), 4);
        assert_eq!(b.center_and_radius().unwrap(), (Point::new(&[1, 1, 1]), 2));
        assert_eq!(b.exposed().len(), 125 - 27);
        assert!(b.is_connected());
        let order = b.bfs_order(&Point::new(&[1, 1, 1]));
        assert_eq!(order.len(), 125);
        for k in 1..order.len() {
            assert!(PointSet::from_points(3, order[..k].iter().copied()).is_connected());
        }
    }

    proptest! {
        #[test]
        fn index_point_roundtrip(dim in 1usize..=5, side in 1u32..6, seed in any::<u64>()) {
            let g = BoxGeometry::new(dim, side, Boundary::Free, Point::new(&vec![-2; dim])).unwrap();
            let idx = (seed as usize) % g.num_sites();
            prop_assert_eq!(g.index(&g.point(idx)), Some(idx));
        }

        #[test]
        fn boundary_properties(bits in proptest::collection::vec(any::<bool>(), 49)) {
            let g = free(2, 3);
            let h = SiteSet::from_indices(&g, bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i));
            let int = boundary(&h, BoundaryKind::Interior);
            let ext = boundary(&h, BoundaryKind::Exterior);
            prop_assert!(int.is_subset(&h));
            prop_assert!(ext.is_disjoint(&h));
            for x in ext.iter() {
                prop_assert!(g.neighbors(x).any(|n| h.contains(n)));
            }
            for x in int.iter() {
                prop_assert!(g.neighbors(x).any(|n| !h.contains(n)));
            }
        }

        #[test]
        fn free_ball_volume(dim in 1usize..=4, r in 0u32..4) {
            let g = free(dim, 4);
            let b = ball_sites(&Point::ORIGIN, r, &g).unwrap();
            prop_assert_eq!(b.len(), (2 * r as usize + 1).pow(dim as u32));
        }
    }
}
