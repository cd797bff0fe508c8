//! Discrete potential theory for simple random walk on `Z^d`, `d >= 3`.
//!
//! Everything here is Monte Carlo with an explicit far-field treatment: walks
//! are stopped on a large sup-norm sphere and the contribution of what would
//! happen afterwards is filled in from the asymptotic Green function
//! `a_d |x|^{2-d}`. For the capacity estimators this correction is what makes
//! moderate escape radii usable.

mod capacity;
mod energy;
mod green;
mod hitting;
mod subbox;

pub use capacity::*;
pub use energy::*;
pub use green::*;
pub use hitting::*;
pub use subbox::*;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Point, PointSet};
use crate::walk::Target;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("the Green function diverges in dimension {0}; need d >= 3")]
    LowDimension(usize),
    #[error("Green table has no entry for the pair {0} - {1}")]
    MissingGreen(Point, Point),
    #[error("kill radius {kill} does not exceed the distance {dist} between the points")]
    KillRadiusTooSmall { kill: u32, dist: u32 },
    #[error("parameter check failed: {0}")]
    Parameters(String),
    #[error("requested capacity {requested} exceeds cap(K) = {available} beyond tolerance")]
    TrimTooLarge { requested: f64, available: f64 },
    #[error("set must be connected")]
    NotConnected,
    #[error("start site {0} is not in the set")]
    NotInSet(Point),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub(crate) fn require_transient(dim: usize) -> Result<(), PotentialError> {
    if dim < 3 {
        Err(PotentialError::LowDimension(dim))
    } else {
        Ok(())
    }
}

/// Constant `a_d = (d/2) Gamma(d/2 - 1) pi^{-d/2}` of the Green asymptotics
/// `g(o, x) ~ a_d |x|_2^{2-d}`.
pub fn green_asymptotic_constant(dim: usize) -> f64 {
    let d = dim as f64;
    0.5 * d * statrs::function::gamma::gamma(0.5 * d - 1.0) * std::f64::consts::PI.powf(-0.5 * d)
}

/// Leading-order Green function `a_d |x|_2^{2-d}`, for displacements away
/// from the origin.
#[inline]
pub fn green_asymptotic(dim: usize, x: &Point) -> f64 {
    let r2 = x.norm2();
    green_asymptotic_constant(dim) * r2.powf(1.0 - 0.5 * dim as f64)
}

/// Precomputed `a_d` and exponent, to avoid the gamma function in hot loops.
#[derive(Debug, Clone, Copy)]
pub struct FarField {
    a: f64,
    half_exp: f64,
}

impl FarField {
    pub fn new(dim: usize) -> FarField {
        FarField { a: green_asymptotic_constant(dim), half_exp: 1.0 - 0.5 * dim as f64 }
    }

    #[inline]
    pub fn at(&self, x: &Point) -> f64 {
        self.a * x.norm2().powf(self.half_exp)
    }
}

/// A sup-norm ball in a given dimension, used as a capacity target with
/// analytic membership and shell sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallTarget {
    pub dim: usize,
    pub center: Point,
    pub radius: u32,
}

impl Target for BallTarget {
    #[inline]
    fn contains_site(&self, p: &Point) -> bool {
        p.sup_dist(&self.center) <= self.radius
    }
    fn is_empty_target(&self) -> bool {
        false
    }
}

/// A finite target set for the capacity estimators.
#[derive(Debug, Clone)]
pub enum TargetSet<'a> {
    Points { set: &'a PointSet, exposed: Vec<Point> },
    Ball(BallTarget),
}

impl<'a> TargetSet<'a> {
    pub fn points(set: &'a PointSet) -> TargetSet<'a> {
        TargetSet::Points { set, exposed: set.exposed() }
    }

    pub fn ball(dim: usize, center: Point, radius: u32) -> TargetSet<'static> {
        TargetSet::Ball(BallTarget { dim, center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetSet::Points { set, .. } => set.dim(),
            TargetSet::Ball(b) => b.dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            TargetSet::Points { set, .. } => set.is_empty(),
            TargetSet::Ball(_) => false,
        }
    }

    pub fn len(&self) -> u64 {
        match self {
            TargetSet::Points { set, .. } => set.len() as u64,
            TargetSet::Ball(b) => (2 * b.radius as u64 + 1).pow(b.dim as u32),
        }
    }

    /// Center of the bounding box and sup-norm radius about it.
    pub fn center_radius(&self) -> (Point, u32) {
        match self {
            TargetSet::Points { set, .. } => set.center_and_radius().unwrap_or((Point::ORIGIN, 0)),
            TargetSet::Ball(b) => (b.center, b.radius),
        }
    }

    pub fn diameter(&self) -> u32 {
        match self {
            TargetSet::Points { set, .. } => set.diameter(),
            TargetSet::Ball(b) => 2 * b.radius,
        }
    }

    /// Sites with a neighbor outside the set; only these can have positive
    /// equilibrium measure.
    pub fn exposed_count(&self) -> u64 {
        match self {
            TargetSet::Points { exposed, .. } => exposed.len() as u64,
            TargetSet::Ball(b) => {
                let r = b.radius as u64;
                if r == 0 {
                    1
                } else {
                    (2 * r + 1).pow(b.dim as u32) - (2 * r - 1).pow(b.dim as u32)
                }
            }
        }
    }

    /// Uniform exposed site.
    pub fn sample_exposed<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            TargetSet::Points { exposed, .. } => exposed[rng.random_range(0..exposed.len())],
            TargetSet::Ball(b) => {
                let r = b.radius as i32;
                if r == 0 {
                    return b.center;
                }
                loop {
                    let mut p = b.center;
                    for c in p.0[..b.dim].iter_mut() {
                        *c += rng.random_range(-r..=r);
                    }
                    if p.sup_dist(&b.center) == b.radius {
                        return p;
                    }
                }
            }
        }
    }

    /// All exposed sites, when the set is given explicitly.
    pub fn exposed_sites(&self) -> Option<&[Point]> {
        match self {
            TargetSet::Points { exposed, .. } => Some(exposed),
            TargetSet::Ball(_) => None,
        }
    }
}

impl Target for TargetSet<'_> {
    #[inline]
    fn contains_site(&self, p: &Point) -> bool {
        match self {
            TargetSet::Points { set, .. } => set.contains(p),
            TargetSet::Ball(b) => b.contains_site(p),
        }
    }
    fn is_empty_target(&self) -> bool {
        self.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymptotic_constants() {
        assert!((green_asymptotic_constant(3) - 1.5 / std::f64::consts::PI).abs() < 1e-14);
        // d = 4: (2) Gamma(1) / pi^2
        assert!((green_asymptotic_constant(4) - 2.0 / std::f64::consts::PI.powi(2)).abs() < 1e-14);
        let ff = FarField::new(5);
        let x = Point::new(&[3, 4, 0, 0, 0]);
        assert!((ff.at(&x) - green_asymptotic(5, &x)).abs() < 1e-16);
    }

    #[test]
    fn ball_target_shell() {
        let t = TargetSet::ball(3, Point::ORIGIN, 2);
        assert_eq!(t.exposed_count(), 125 - 27);
        let mut r = crate::rng::stream(0, "shell", 0);
        for _ in 0..100 {
            assert_eq!(t.sample_exposed(&mut r).sup_norm(), 2);
        }
        let single = TargetSet::ball(5, Point::ORIGIN, 0);
        assert_eq!(single.exposed_count(), 1);
        assert_eq!(single.len(), 1);
    }
}
