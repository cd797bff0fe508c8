//! Green function estimators and Green tables.

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::{require_transient, FarField, PotentialError};
use crate::lattice::{Point, MAX_DIM};
use crate::stats::MeanVar;
use crate::walk::{exact_kernel, random_dir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GreenMethod {
    MonteCarloVisits,
    ExactSmallBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenParams {
    /// Walks are stopped on leaving the sup-norm ball of this radius about `y`.
    pub kill_radius: u32,
    pub walks: u64,
}

impl Default for GreenParams {
    fn default() -> Self {
        GreenParams { kill_radius: 64, walks: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: GreenMethod,
    pub kill_radius: u32,
    pub samples: u64,
    /// Mean far-field term added for the part of the walk after the kill sphere.
    pub far_field: f64,
}

/// Monte Carlo `g(x, y)`: visits to `y` before leaving `ball(y, kill_radius)`
/// plus the asymptotic Green function at the exit point.
///
/// The asymptotic formula has relative error of order `|z|^{-2}` at the exit
/// sphere; that systematic part is bounded by `far_field / kill_radius^2` and
/// added to the reported standard error in quadrature.
pub fn green<R: Rng + ?Sized>(
    x: &Point,
    y: &Point,
    dim: usize,
    params: &GreenParams,
    rng: &mut R,
) -> Result<GreenEstimate, PotentialError> {
    require_transient(dim)?;
    let dist = x.sup_dist(y);
    if params.kill_radius <= dist {
        return Err(PotentialError::KillRadiusTooSmall { kill: params.kill_radius, dist });
    }
    let ff = FarField::new(dim);
    let mut stats = MeanVar::new();
    let mut far = MeanVar::new();
    for _ in 0..params.walks {
        let mut pos = *x;
        let mut visits = (pos == *y) as u64;
        loop {
            pos.step(random_dir(rng, dim));
            if pos.sup_dist(y) > params.kill_radius {
                break;
            }
            visits += (pos == *y) as u64;
        }
        let tail = ff.at(&pos.sub(y));
        far.push(tail);
        stats.push(visits as f64 + tail);
    }
    let kr = params.kill_radius as f64;
    let systematic = far.mean() / (kr * kr);
    Ok(GreenEstimate {
        value: stats.mean(),
        stderr: (stats.stderr().powi(2) + systematic * systematic).sqrt(),
        method: GreenMethod::MonteCarloVisits,
        kill_radius: params.kill_radius,
        samples: params.walks,
        far_field: far.mean(),
    })
}

/// `g(x, y)` from the exact transition kernel up to time `t_max`, plus the
/// local limit tail beyond. The box of side `2 t_max + 1` must stay small.
pub fn green_exact_small_box(dim: usize, x: &Point, y: &Point, t_max: usize) -> Result<GreenEstimate, PotentialError> {
    require_transient(dim)?;
    let volume = (2 * t_max as u64 + 1).saturating_pow(dim as u32);
    if volume > 8_000_000 {
        return Err(PotentialError::Parameters(format!("exact box of {volume} sites is too large")));
    }
    let z = y.sub(x);
    let mut head = 0.0;
    for t in 0..=t_max {
        if z.sup_norm() as usize > t {
            continue;
        }
        let (geom, p) = exact_kernel(dim, t);
        head += p[geom.index(&z).unwrap()];
    }
    // local limit: p_t ~ 2 (d / 2 pi t)^{d/2} exp(-d |z|^2 / 2t) on matching parity
    let d = dim as f64;
    let r2 = z.norm2();
    let parity = (z.l1_norm() % 2) as usize;
    let mut tail = 0.0;
    let mut t = t_max + 1;
    if t % 2 != parity {
        t += 1;
    }
    let lclt = |t: f64| 2.0 * (d / (2.0 * std::f64::consts::PI * t)).powf(d / 2.0) * (-d * r2 / (2.0 * t)).exp();
    while t < 200_000 {
        tail += lclt(t as f64);
        t += 2;
    }
    // remaining sum by its integral, with r^2/t negligible
    tail += (d / (2.0 * std::f64::consts::PI)).powf(d / 2.0) * (t as f64 - 1.0).powf(1.0 - d / 2.0) / (d / 2.0 - 1.0);
    Ok(GreenEstimate {
        value: head + tail,
        stderr: 0.05 * tail,
        method: GreenMethod::ExactSmallBox,
        kill_radius: 0,
        samples: 0,
        far_field: tail,
    })
}

/// Lookup of `g(x, y)` for pairs of sites.
pub trait GreenTable {
    fn green(&self, x: &Point, y: &Point) -> Result<f64, PotentialError>;
}

/// Canonical form of a displacement under the lattice symmetries: sorted
/// absolute coordinates.
#[inline]
pub fn symmetry_class(z: &Point, dim: usize) -> Point {
    let mut c = Point::ORIGIN;
    for (i, v) in z.0[..dim].iter().enumerate() {
        c.0[i] = v.abs();
    }
    c.0[..dim].sort_unstable_by(|a, b| b.cmp(a));
    c
}

/// Translation-invariant Green table: Monte Carlo near field for
/// displacements with `|z| <= near_radius`, asymptotic formula beyond.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisplacementGreenTable {
    dim: usize,
    near_radius: u32,
    kill_radius: u32,
    walks: u64,
    classes: Vec<(Point, f64, f64)>,
    #[serde(skip)]
    lookup: FxHashMap<Point, usize>,
}

impl DisplacementGreenTable {
    /// Runs `walks` walks from the origin to the sup-sphere of radius
    /// `kill_radius`, sharing them across all near-field displacements. The
    /// kill ball is symmetric about the origin, so the exit law is invariant
    /// under the lattice symmetries and one representative per class gives
    /// the exact class mean of the far-field term.
    pub fn estimate<R: Rng + ?Sized>(
        dim: usize,
        near_radius: u32,
        kill_radius: u32,
        walks: u64,
        rng: &mut R,
    ) -> Result<DisplacementGreenTable, PotentialError> {
        require_transient(dim)?;
        if kill_radius <= near_radius {
            return Err(PotentialError::KillRadiusTooSmall { kill: kill_radius, dist: near_radius });
        }
        let h = near_radius as i32;
        // enumerate classes and their sizes
        let mut lookup: FxHashMap<Point, usize> = FxHashMap::default();
        let mut reps: Vec<Point> = Vec::new();
        let mut sizes: Vec<f64> = Vec::new();
        let side = 2 * near_radius as usize + 1;
        let total = side.pow(dim as u32);
        for code in 0..total {
            let mut p = Point::ORIGIN;
            let mut c = code;
            for axis in 0..dim {
                p.0[axis] = (c % side) as i32 - h;
                c /= side;
            }
            let key = symmetry_class(&p, dim);
            let idx = *lookup.entry(key).or_insert_with(|| {
                reps.push(key);
                sizes.push(0.0);
                reps.len() - 1
            });
            sizes[idx] += 1.0;
        }
        let n_classes = reps.len();
        let ff = FarField::new(dim);
        let mut stats = vec![MeanVar::new(); n_classes];
        let mut visits = vec![0u32; n_classes];
        let mut touched: Vec<usize> = Vec::new();
        for _ in 0..walks {
            let mut pos = Point::ORIGIN;
            loop {
                if pos.sup_norm() <= near_radius {
                    let idx = lookup[&symmetry_class(&pos, dim)];
                    if visits[idx] == 0 {
                        touched.push(idx);
                    }
                    visits[idx] += 1;
                }
                pos.step(random_dir(rng, dim));
                if pos.sup_norm() > kill_radius {
                    break;
                }
            }
            for (c, st) in stats.iter_mut().enumerate() {
                let v = visits[c] as f64 / sizes[c] + ff.at(&pos.sub(&reps[c]));
                st.push(v);
            }
            for &c in &touched {
                visits[c] = 0;
            }
            touched.clear();
        }
        let classes = reps.into_iter().zip(stats).map(|(p, s)| (p, s.mean(), s.stderr())).collect();
        Ok(DisplacementGreenTable { dim, near_radius, kill_radius, walks, classes, lookup })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn near_radius(&self) -> u32 {
        self.near_radius
    }

    /// `G(z) = g(o, z)`.
    #[inline]
    pub fn at(&self, z: &Point) -> f64 {
        if z.sup_norm() <= self.near_radius {
            self.classes[self.lookup[&symmetry_class(z, self.dim)]].1
        } else {
            super::green_asymptotic(self.dim, z)
        }
    }

    /// Monte Carlo standard error of `G(z)` (0 in the far field, where the
    /// error is systematic).
    pub fn stderr_at(&self, z: &Point) -> f64 {
        if z.sup_norm() <= self.near_radius {
            self.classes[self.lookup[&symmetry_class(z, self.dim)]].2
        } else {
            0.0
        }
    }

    /// Rebuilds the lookup after deserialization.
    pub fn reindex(&mut self) {
        self.lookup = self.classes.iter().enumerate().map(|(i, c)| (c.0, i)).collect();
    }
}

impl GreenTable for DisplacementGreenTable {
    fn green(&self, x: &Point, y: &Point) -> Result<f64, PotentialError> {
        Ok(self.at(&y.sub(x)))
    }
}

/// Explicit symmetric table over a finite set of pairs. Missing pairs are
/// reported, never guessed.
#[derive(Debug, Clone, Default)]
pub struct SiteGreenTable {
    map: FxHashMap<(Point, Point), f64>,
}

impl SiteGreenTable {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    fn key(x: &Point, y: &Point) -> (Point, Point) {
        if x <= y {
            (*x, *y)
        } else {
            (*y, *x)
        }
    }

    pub fn insert(&mut self, x: Point, y: Point, value: f64) {
        self.map.insert(Self::key(&x, &y), value);
    }

    /// Fills every pair from `sites` (including the diagonal) from a
    /// translation-invariant table.
    pub fn from_displacements(sites: &[Point], table: &DisplacementGreenTable) -> SiteGreenTable {
        let mut t = SiteGreenTable::new();
        for (i, x) in sites.iter().enumerate() {
            for y in &sites[i..] {
                t.insert(*x, *y, table.at(&y.sub(x)));
            }
        }
        t
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl GreenTable for SiteGreenTable {
    fn green(&self, x: &Point, y: &Point) -> Result<f64, PotentialError> {
        self.map.get(&Self::key(x, y)).copied().ok_or(PotentialError::MissingGreen(*x, *y))
    }
}

/// Keys of a symmetry class, for serialization checks.
pub fn class_count(dim: usize, near_radius: u32) -> usize {
    // multisets of size dim from {0..=h}
    let h = near_radius as usize + 1;
    let mut num = 1usize;
    let mut den = 1usize;
    for i in 0..dim.min(MAX_DIM) {
        num *= h + i;
        den *= i + 1;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::walk::green_origin_series;

    #[test]
    fn rejects_recurrent_dimensions() {
        let mut r = rng::stream(0, "g", 0);
        assert_eq!(
            green(&Point::ORIGIN, &Point::ORIGIN, 2, &GreenParams::default(), &mut r).unwrap_err(),
            PotentialError::LowDimension(2)
        );
    }

    #[test]
    fn origin_value_d3() {
        let mut r = rng::stream(1, "g", 0);
        let est = green(&Point::ORIGIN, &Point::ORIGIN, 3, &GreenParams { kill_radius: 24, walks: 40_000 }, &mut r).unwrap();
        assert!(est.value >= 1.0);
        let oracle = green_origin_series(3, 5000);
        assert!((est.value - oracle).abs() < 3.0 * est.stderr + 2e-3, "{} +- {} vs {}", est.value, est.stderr, oracle);
    }

    #[test]
    fn symmetric_pair_d3() {
        let x = Point::new(&[2, 1, 0]);
        let y = Point::new(&[-1, 0, 1]);
        let p = GreenParams { kill_radius: 20, walks: 40_000 };
        let a = green(&x, &y, 3, &p, &mut rng::stream(2, "g", 0)).unwrap();
        let b = green(&y, &x, 3, &p, &mut rng::stream(2, "g", 1)).unwrap();
        let joint = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 3.0 * joint);
    }

    #[test]
    fn exact_small_box_origin() {
        let e = green_exact_small_box(3, &Point::ORIGIN, &Point::ORIGIN, 30).unwrap();
        assert!((e.value - green_origin_series(3, 5000)).abs() < 2e-3, "{}", e.value);
    }

    #[test]
    fn displacement_table_d5() {
        let mut r = rng::stream(3, "tab", 0);
        let t = DisplacementGreenTable::estimate(5, 2, 16, 20_000, &mut r).unwrap();
        assert_eq!(t.classes.len(), class_count(5, 2));
        let g0 = t.at(&Point::ORIGIN);
        let oracle = green_origin_series(5, 2000);
        assert!((g0 - oracle).abs() < 3.0 * t.stderr_at(&Point::ORIGIN) + 1e-3, "{g0} vs {oracle}");
        // symmetry is built in
        let a = Point::new(&[1, -2, 0, 0, 0]);
        let b = Point::new(&[0, 0, 2, 0, -1]);
        assert_eq!(t.at(&a), t.at(&b));
        // near field against the exact kernel
        let z = Point::new(&[2, 0, 0, 0, 0]);
        let exact = green_exact_small_box(5, &Point::ORIGIN, &z, 11).unwrap();
        let joint = (t.stderr_at(&z).powi(2) + exact.stderr.powi(2)).sqrt();
        assert!((t.at(&z) - exact.value).abs() < 3.0 * joint, "{} vs {:?}", t.at(&z), exact);
    }

    #[test]
    fn site_table_reports_missing_pairs() {
        let mut t = SiteGreenTable::new();
        let (x, y) = (Point::ORIGIN, Point::axis(0, 1));
        t.insert(x, y, 0.5);
        assert_eq!(t.green(&y, &x).unwrap(), 0.5);
        assert!(matches!(t.green(&x, &x), Err(PotentialError::MissingGreen(..))));
    }
}
