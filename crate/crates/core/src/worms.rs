//! Poisson clouds of worms and of general zoo animals.
//!
//! A cloud at intensity `v` is generated as one Poisson process on
//! `region x [0, v]`: levels arrive with exponential gaps of rate `|region|`,
//! each carrying a uniform start site and an independent animal. The cloud at
//! `v' < v` is the prefix with level `<= v'`, and generating directly at `v'`
//! from the same stream gives that same prefix, which is the monotone
//! coupling.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Boundary, BoxGeometry, LatticeError, Point, PointSet, SiteSet};
use crate::lengths::LengthDistribution;
use crate::walk::{range_size_law, walk, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WormError {
    #[error("intensity must be finite and >= 0, got {0}")]
    BadIntensity(f64),
    #[error("invalid zoo table: {0}")]
    Zoo(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("policy {policy} does not match a {boundary:?} window")]
    Policy { policy: &'static str, boundary: Boundary },
    #[error("reference enumeration needs {needed} terms, budget is {budget}")]
    Budget { needed: u64, budget: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum GenerationPolicy {
    /// Starts on the torus; positions wrap.
    TorusWrap,
    /// Starts in the window enlarged by `margin`; positions outside the
    /// window are clipped from the trace.
    PaddedWindow { margin: u32 },
}

/// Default margin for padded generation: `min(cap, 4 sqrt(cap))`.
pub fn default_margin(cap: u64) -> u32 {
    (cap as f64).min(4.0 * (cap as f64).sqrt()).ceil() as u32
}

/// Per-worm bound on reaching distance `margin` within `len` sites:
/// `2d exp(-margin^2 / 2 len)`.
pub fn displacement_bound(dim: usize, margin: u32, len: u64) -> f64 {
    let m = margin as f64;
    (2.0 * dim as f64 * (-m * m / (2.0 * len.max(1) as f64)).exp()).min(1.0)
}

/// A finite law `nu` on rooted animals (finite connected sets containing `o`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooTable {
    pub dim: usize,
    pub animals: Vec<Vec<Point>>,
    pub probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl ZooTable {
    pub fn new(dim: usize, animals: Vec<Vec<Point>>, probs: Vec<f64>) -> Result<ZooTable, WormError> {
        if animals.is_empty() || animals.len() != probs.len() {
            return Err(WormError::Zoo("need one probability per animal".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(WormError::Zoo("probabilities must be >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(WormError::Zoo(format!("probabilities sum to {total}")));
        }
        for (i, a) in animals.iter().enumerate() {
            let set = PointSet::from_points(dim, a.iter().copied());
            if set.len() != a.len() || !set.contains(&Point::ORIGIN) || !set.is_connected() {
                return Err(WormError::Zoo(format!("animal {i} must be a connected set of distinct sites containing o")));
            }
        }
        let mut t = ZooTable { dim, animals, probs, cumulative: Vec::new() };
        t.reindex();
        Ok(t)
    }

    fn reindex(&mut self) {
        let mut acc = 0.0;
        self.cumulative = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        self.cumulative.partition_point(|c| *c <= u).min(self.animals.len() - 1)
    }

    /// `m_k = sum_H nu(H) |H|^k`.
    pub fn moment(&self, k: i32) -> f64 {
        self.animals.iter().zip(&self.probs).map(|(a, p)| p * (a.len() as f64).powi(k)).sum()
    }

    /// `Lambda / v = sum_H nu(H) |H| |closure H|`.
    pub fn closure_moment(&self) -> f64 {
        self.animals
            .iter()
            .zip(&self.probs)
            .map(|(a, p)| {
                let set = PointSet::from_points(self.dim, a.iter().copied());
                let closure = closure_size(&set);
                p * a.len() as f64 * closure as f64
            })
            .sum()
    }
}

/// `|H ∪ ∂^ext H|`.
pub fn closure_size(set: &PointSet) -> usize {
    let mut out = set.clone();
    for p in set.points() {
        for dir in 0..2 * set.dim() as u8 {
            out.insert(p.stepped(dir));
        }
    }
    out.len()
}

/// What is placed at each Poisson point.
#[derive(Debug, Clone)]
pub enum AnimalLaw {
    /// Random walk ranges with i.i.d. lengths (the worms model).
    Worms(LengthDistribution),
    /// An explicit table of rooted animals.
    Zoo(ZooTable),
}

impl AnimalLaw {
    /// Moments of the animal size `|H|`: exact for a zoo table, and for worms
    /// by exhaustive enumeration of paths up to `max_len` sites (errors if the
    /// law has support beyond).
    pub fn exact_size_moments(&self, dim: usize, max_len: u64) -> Result<(f64, f64), WormError> {
        match self {
            AnimalLaw::Zoo(t) => Ok((t.moment(1), t.moment(2))),
            AnimalLaw::Worms(dist) => {
                let hi = dist.support_max().or(dist.cap()).unwrap_or(u64::MAX);
                if hi > max_len {
                    return Err(WormError::Budget { needed: hi, budget: max_len });
                }
                let (mut m1, mut m2) = (0.0, 0.0);
                for l in dist.support_min()..=hi {
                    let w = dist.sampled_mass(l);
                    if w == 0.0 {
                        continue;
                    }
                    for (s, p) in range_size_law(dim, l as usize).iter().enumerate() {
                        m1 += w * p * s as f64;
                        m2 += w * p * (s * s) as f64;
                    }
                }
                Ok((m1, m2))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Walk(Trajectory),
    Table(usize),
}

/// One point of the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Animal {
    /// Position in `[0, v]` of the intensity axis.
    pub level: f64,
    pub start: Point,
    pub shape: Shape,
}

impl Animal {
    /// Number of sites visited counted with multiplicity (the worm length).
    pub fn length(&self, law: &AnimalLaw) -> u64 {
        match (&self.shape, law) {
            (Shape::Walk(t), _) => t.len() as u64,
            (Shape::Table(i), AnimalLaw::Zoo(z)) => z.animals[*i].len() as u64,
            (Shape::Table(_), AnimalLaw::Worms(_)) => unreachable!("table animal in a worm cloud"),
        }
    }

    /// Visited sites in `Z^d`, in visiting order, with repeats.
    pub fn positions<'a>(&'a self, law: &'a AnimalLaw) -> Box<dyn Iterator<Item = Point> + 'a> {
        match &self.shape {
            Shape::Walk(t) => Box::new(t.positions()),
            Shape::Table(i) => match law {
                AnimalLaw::Zoo(z) => Box::new(z.animals[*i].iter().map(move |o| self.start.add(o))),
                AnimalLaw::Worms(_) => unreachable!("table animal in a worm cloud"),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct WormCloud {
    /// Observation window.
    pub geom: BoxGeometry,
    /// Region holding the start sites.
    pub region: BoxGeometry,
    pub v: f64,
    pub policy: GenerationPolicy,
    pub law: AnimalLaw,
    /// Sorted by level.
    pub animals: Vec<Animal>,
    /// Rejections spent on the length cap.
    pub truncation_events: u64,
}

/// Samples a cloud at intensity `v` over the window.
pub fn generate_cloud<R: Rng + ?Sized>(
    geom: &BoxGeometry,
    v: f64,
    law: &AnimalLaw,
    policy: GenerationPolicy,
    rng: &mut R,
) -> Result<WormCloud, WormError> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(WormError::BadIntensity(v));
    }
    let region = match policy {
        GenerationPolicy::TorusWrap => {
            if geom.boundary() != Boundary::Torus {
                return Err(WormError::Policy { policy: "torus_wrap", boundary: geom.boundary() });
            }
            geom.clone()
        }
        GenerationPolicy::PaddedWindow { margin } => {
            if geom.boundary() != Boundary::Free {
                return Err(WormError::Policy { policy: "padded_window", boundary: geom.boundary() });
            }
            geom.padded(margin)
        }
    };
    let n_sites = region.num_sites();
    let mut animals = Vec::new();
    let mut truncation_events = 0;
    if v > 0.0 && n_sites > 0 {
        let gap = Exp::new(n_sites as f64).expect("positive rate");
        let mut level = 0.0;
        loop {
            level += gap.sample(rng);
            if level > v {
                break;
            }
            let start = region.point(rng.random_range(0..n_sites));
            let shape = match law {
                AnimalLaw::Worms(dist) => {
                    let (len, rej) = dist.sample_counted(rng);
                    truncation_events += rej as u64;
                    Shape::Walk(walk(geom.dim(), start, (len - 1) as usize, rng))
                }
                AnimalLaw::Zoo(z) => Shape::Table(z.sample(rng)),
            };
            animals.push(Animal { level, start, shape });
        }
    }
    Ok(WormCloud { geom: geom.clone(), region, v, policy, law: law.clone(), animals, truncation_events })
}

/// Visit counts per site and their total.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalTimeMeasure {
    pub counts: FxHashMap<Point, u64>,
    pub total: u64,
}

impl LocalTimeMeasure {
    pub fn at(&self, p: &Point) -> u64 {
        self.counts.get(p).copied().unwrap_or(0)
    }
}

impl WormCloud {
    /// The cloud at a lower intensity, from the same randomness.
    pub fn restrict(&self, v: f64) -> WormCloud {
        let keep = self.animals.partition_point(|a| a.level <= v);
        WormCloud { v: v.min(self.v), animals: self.animals[..keep].to_vec(), ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.animals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.animals.is_empty()
    }

    /// Occupied sites of the window: wrapped on the torus, clipped otherwise.
    pub fn trace(&self) -> SiteSet {
        let mut s = SiteSet::empty(&self.geom);
        for a in &self.animals {
            for p in a.positions(&self.law) {
                if let Some(i) = self.geom.index(&p) {
                    s.insert(i);
                }
            }
        }
        s
    }

    /// Trace of a single animal in the window.
    pub fn animal_trace(&self, a: &Animal) -> Vec<usize> {
        let mut v: Vec<usize> = a.positions(&self.law).filter_map(|p| self.geom.index(&p)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Visit counts, wrapped on the torus and unclipped otherwise, so that
    /// the total is exactly the sum of the lengths.
    pub fn local_time(&self) -> LocalTimeMeasure {
        let mut lt = LocalTimeMeasure::default();
        let torus = self.geom.boundary() == Boundary::Torus;
        for a in &self.animals {
            for p in a.positions(&self.law) {
                let key = if torus { self.geom.point(self.geom.index(&p).expect("torus index")) } else { p };
                *lt.counts.entry(key).or_insert(0) += 1;
                lt.total += 1;
            }
        }
        lt
    }

    pub fn total_length(&self) -> u64 {
        self.animals.iter().map(|a| a.length(&self.law)).sum()
    }

    /// Number of animals per start site of the region, by region index.
    pub fn start_counts(&self) -> Vec<u32> {
        let mut c = vec![0u32; self.region.num_sites()];
        for a in &self.animals {
            c[self.region.index(&a.start).expect("start in region")] += 1;
        }
        c
    }

    /// Number of animals whose trace (in the window) contains `p`.
    pub fn animals_containing(&self, p: &Point) -> usize {
        let Some(idx) = self.geom.index(p) else { return 0 };
        self.animals.iter().filter(|a| a.positions(&self.law).any(|q| self.geom.index(&q) == Some(idx))).count()
    }

    /// Per-worm bound on a padded-window worm started outside the padded
    /// region reaching the window.
    pub fn neglected_mass_bound(&self) -> f64 {
        match (self.policy, &self.law) {
            (GenerationPolicy::PaddedWindow { margin }, AnimalLaw::Worms(d)) => {
                let len = d.cap().or(d.support_max()).unwrap_or_else(|| d.tail_quantile(1e-12));
                displacement_bound(self.geom.dim(), margin, len)
            }
            _ => 0.0,
        }
    }
}

/// `E sum_i f(w_i)` and `Var sum_i f(w_i)` for a Poisson cloud with starts
/// in `region` and a length law: `v sum_x sum_l m(l) f` and
/// `v sum_x sum_l m(l) f^2` (for `f` depending on start and length only).
pub fn campbell_linear(v: f64, dist: &LengthDistribution, region: &[Point], f: impl Fn(&Point, u64) -> f64) -> (f64, f64) {
    let hi = dist.support_max().or(dist.cap()).unwrap_or_else(|| dist.tail_quantile(1e-15));
    let (mut m, mut s) = (0.0, 0.0);
    for x in region {
        for l in dist.support_min()..=hi {
            let w = dist.sampled_mass(l);
            let fx = f(x, l);
            m += w * fx;
            s += w * fx * fx;
        }
    }
    (v * m, v * s)
}

/// `E sum_{i, j} f(w_i, w_j) = v int f(w, w) + v^2 int int f(w, w')` for
/// `f` depending on starts and lengths.
pub fn campbell_bilinear(
    v: f64,
    dist: &LengthDistribution,
    region: &[Point],
    f: impl Fn((&Point, u64), (&Point, u64)) -> f64,
) -> (f64, f64) {
    let hi = dist.support_max().or(dist.cap()).unwrap_or_else(|| dist.tail_quantile(1e-15));
    let types: Vec<(Point, u64, f64)> = region
        .iter()
        .flat_map(|x| (dist.support_min()..=hi).map(move |l| (*x, l)))
        .map(|(x, l)| (x, l, dist.sampled_mass(l)))
        .filter(|t| t.2 > 0.0)
        .collect();
    let diag: f64 = types.iter().map(|(x, l, w)| w * f((x, *l), (x, *l))).sum();
    let mut off = 0.0;
    for (x, l, w) in &types {
        for (y, k, u) in &types {
            off += w * u * f((x, *l), (y, *k));
        }
    }
    (v * diag, v * v * off)
}

/// Brute-force expectation of a functional of the whole cloud over a tiny
/// region: the number of worms is Poisson(`v |region|`), truncated where the
/// remaining mass is below `tol`, and every ordered list of (start, length)
/// types is enumerated with its probability. Returns `(E F, E F^2)`.
pub fn enumerate_cloud_moments(
    v: f64,
    dist: &LengthDistribution,
    region: &[Point],
    f: impl Fn(&[(usize, u64)]) -> f64,
    tol: f64,
    budget: u64,
) -> Result<(f64, f64), WormError> {
    let hi = dist.support_max().or(dist.cap()).ok_or(WormError::Budget { needed: u64::MAX, budget })?;
    let lengths: Vec<(u64, f64)> =
        (dist.support_min()..=hi).map(|l| (l, dist.sampled_mass(l))).filter(|(_, w)| *w > 0.0).collect();
    let types: Vec<(usize, u64, f64)> = (0..region.len())
        .flat_map(|x| lengths.iter().map(move |(l, w)| (x, *l, *w / region.len() as f64)))
        .collect();
    let lambda = v * region.len() as f64;
    // Poisson weights until the tail is below tol
    let mut pn = vec![(-lambda).exp()];
    let mut acc = pn[0];
    while 1.0 - acc > tol {
        let n = pn.len() as f64;
        let next = pn.last().unwrap() * lambda / n;
        pn.push(next);
        acc += next;
        if pn.len() > 64 {
            break;
        }
    }
    let needed: u64 = (0..pn.len()).map(|n| (types.len() as u64).saturating_pow(n as u32)).fold(0u64, |a, b| a.saturating_add(b));
    if needed > budget {
        return Err(WormError::Budget { needed, budget });
    }
    let (mut e1, mut e2) = (0.0, 0.0);
    let mut config: Vec<(usize, u64)> = Vec::new();
    for (n, p) in pn.iter().enumerate() {
        let total = (types.len() as u64).pow(n as u32);
        for code in 0..total {
            config.clear();
            let mut c = code;
            let mut w = *p;
            for _ in 0..n {
                let t = types[(c % types.len() as u64) as usize];
                c /= types.len() as u64;
                w *= t.2;
                config.push((t.0, t.1));
            }
            let val = f(&config);
            e1 += w * val;
            e2 += w * val * val;
        }
    }
    Ok((e1, e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lengths::{DistConfig, LengthSpec};
    use crate::rng;
    use crate::stats::MeanVar;

    fn dirac(t: u64) -> LengthDistribution {
        LengthDistribution::new(LengthSpec::Dirac { t }).unwrap()
    }

    #[test]
    fn zero_intensity_is_empty() {
        let g = BoxGeometry::cube(2, 8, Boundary::Torus).unwrap();
        let c = generate_cloud(&g, 0.0, &AnimalLaw::Worms(dirac(3)), GenerationPolicy::TorusWrap, &mut rng::stream(0, "c", 0)).unwrap();
        assert!(c.is_empty());
        assert!(c.trace().is_empty());
        assert_eq!(c.local_time().total, 0);
    }

    #[test]
    fn policy_must_match_boundary() {
        let g = BoxGeometry::cube(2, 8, Boundary::Free).unwrap();
        let err = generate_cloud(&g, 1.0, &AnimalLaw::Worms(dirac(1)), GenerationPolicy::TorusWrap, &mut rng::stream(0, "c", 0));
        assert!(matches!(err, Err(WormError::Policy { .. })));
    }

    #[test]
    fn restriction_is_regeneration() {
        let g = BoxGeometry::cube(3, 10, Boundary::Torus).unwrap();
        let law = AnimalLaw::Worms(LengthDistribution::new(LengthSpec::Geometric { mean_t: 4.0 }).unwrap());
        for rep in 0..5 {
            let hi = generate_cloud(&g, 0.4, &law, GenerationPolicy::TorusWrap, &mut rng::stream(9, "mono", rep)).unwrap();
            let lo = generate_cloud(&g, 0.15, &law, GenerationPolicy::TorusWrap, &mut rng::stream(9, "mono", rep)).unwrap();
            assert_eq!(hi.restrict(0.15).animals, lo.animals);
            assert!(lo.trace().is_subset(&hi.trace()));
        }
    }

    #[test]
    fn counts_per_site_and_total_length() {
        let g = BoxGeometry::cube(2, 6, Boundary::Torus).unwrap();
        let law = AnimalLaw::Worms(dirac(4));
        let v = 0.7;
        let mut total = MeanVar::new();
        let mut per_site = MeanVar::new();
        for rep in 0..300 {
            let c = generate_cloud(&g, v, &law, GenerationPolicy::TorusWrap, &mut rng::stream(1, "cnt", rep)).unwrap();
            assert_eq!(c.local_time().total, c.total_length());
            assert_eq!(c.total_length(), 4 * c.len() as u64);
            total.push(c.len() as f64);
            c.start_counts().iter().for_each(|k| per_site.push(*k as f64));
        }
        assert!((total.mean() - v * 36.0).abs() < 3.0 * total.stderr());
        // Poisson: variance equals mean
        assert!((per_site.variance() - v).abs() < 0.1);
    }

    #[test]
    fn single_short_worm_trace() {
        let g = BoxGeometry::cube(2, 5, Boundary::Free).unwrap();
        let law = AnimalLaw::Worms(dirac(1));
        let mut c = generate_cloud(&g, 0.0, &law, GenerationPolicy::PaddedWindow { margin: 0 }, &mut rng::stream(0, "x", 0)).unwrap();
        let x = Point::new(&[2, 3]);
        c.animals.push(Animal { level: 0.0, start: x, shape: Shape::Walk(Trajectory::new(2, x)) });
        let t = c.trace();
        assert_eq!(t.len(), 1);
        assert!(t.contains_point(&x));
    }

    #[test]
    fn zoo_marginals_are_poisson() {
        let animals = vec![vec![Point::ORIGIN], vec![Point::ORIGIN, Point::axis(0, 1)]];
        let z = ZooTable::new(2, animals, vec![0.3, 0.7]).unwrap();
        let law = AnimalLaw::Zoo(z);
        let g = BoxGeometry::cube(2, 4, Boundary::Torus).unwrap();
        let v = 1.2;
        let mut counts = [MeanVar::new(), MeanVar::new()];
        for rep in 0..400 {
            let c = generate_cloud(&g, v, &law, GenerationPolicy::TorusWrap, &mut rng::stream(2, "zoo", rep)).unwrap();
            let mut per = vec![[0u32; 2]; 16];
            for a in &c.animals {
                let Shape::Table(i) = a.shape else { unreachable!() };
                per[g.index(&a.start).unwrap()][i] += 1;
            }
            for site in per {
                counts[0].push(site[0] as f64);
                counts[1].push(site[1] as f64);
            }
        }
        for (mv, p) in counts.iter().zip([0.3, 0.7]) {
            assert!((mv.mean() - v * p).abs() < 3.0 * mv.stderr());
            assert!((mv.variance() - v * p).abs() < 4.0 * mv.variance_stderr_normal());
        }
    }

    #[test]
    fn zoo_table_validation() {
        assert!(ZooTable::new(2, vec![vec![Point::axis(0, 1)]], vec![1.0]).is_err());
        assert!(ZooTable::new(2, vec![vec![Point::ORIGIN, Point::axis(0, 2)]], vec![1.0]).is_err());
        assert!(ZooTable::new(2, vec![vec![Point::ORIGIN]], vec![0.5]).is_err());
    }

    #[test]
    fn enumeration_agrees_with_campbell() {
        let dist = DistConfig { spec: LengthSpec::Table { masses: vec![0.5, 0.3, 0.2] }, cap: None }.build().unwrap();
        let region: Vec<Point> = (0..3).map(|i| Point::axis(0, i)).collect();
        let v = 0.2;
        let (m, var) = campbell_linear(v, &dist, &region, |_, l| l as f64);
        let (e1, e2) = enumerate_cloud_moments(v, &dist, &region, |c| c.iter().map(|t| t.1 as f64).sum(), 1e-6, 20_000_000).unwrap();
        assert!((m - e1).abs() < 1e-4, "{m} vs {e1}");
        assert!((var - (e2 - e1 * e1)).abs() < 1e-3);
        let (diag, off) = campbell_bilinear(v, &dist, &region, |a, b| (a.0 == b.0) as u8 as f64);
        let (b1, _) = enumerate_cloud_moments(
            v,
            &dist,
            &region,
            |c| c.iter().map(|a| c.iter().filter(|b| a.0 == b.0).count() as f64).sum(),
            1e-6,
            20_000_000,
        )
        .unwrap();
        assert!((diag + off - b1).abs() < 1e-4);
        assert!((diag - 3.0 * v).abs() < 1e-12 && (off - 3.0 * v * v).abs() < 1e-12);
    }

    #[test]
    fn exact_size_moments_of_short_worms() {
        let law = AnimalLaw::Worms(dirac(2));
        let (m1, m2) = law.exact_size_moments(3, 10).unwrap();
        assert_eq!((m1, m2), (2.0, 4.0));
        let law = AnimalLaw::Worms(dirac(3));
        // 6 of 36 two-step paths backtrack
        let (m1, _) = law.exact_size_moments(3, 10).unwrap();
        assert!((m1 - (3.0 * 30.0 + 2.0 * 6.0) / 36.0).abs() < 1e-12);
    }

    #[test]
    fn closure_of_a_domino() {
        let z = ZooTable::new(2, vec![vec![Point::ORIGIN, Point::axis(0, 1)]], vec![1.0]).unwrap();
        // two sites plus six neighbors
        assert_eq!(z.closure_moment(), 2.0 * 8.0);
    }
}
