//! Cluster labeling, crossing events, crossing probabilities and `v_c`
//! brackets, exploration by zoo distance, and target shooting.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Boundary, BoxGeometry, Point, SiteSet};
use crate::lengths::LengthDistribution;
use crate::rng;
use crate::stats::{wilson, MeanVar, Proportion, Z95};
use crate::walk::{random_dir, Target};
use crate::worms::{generate_cloud, AnimalLaw, GenerationPolicy, WormCloud, WormError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PercolationError {
    #[error("crossing is undefined on a torus")]
    TorusCrossing,
    #[error("axis {axis} out of range for dimension {dim}")]
    BadAxis { axis: usize, dim: usize },
    #[error("no bracket of 1/2 found in [{lo}, {hi}] after widening")]
    NonBracketing { lo: f64, hi: f64 },
    #[error(transparent)]
    Worms(#[from] WormError),
}

pub const NO_LABEL: u32 = u32::MAX;

/// Disjoint sets with union by size and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    unions: u64,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n], unions: 0 }
    }

    #[inline]
    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns the new root.
    #[inline]
    pub fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] { (ra, rb) } else { (rb, ra) };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.unions += 1;
        big
    }

    pub fn unions(&self) -> u64 {
        self.unions
    }
}

/// Component labels of an occupied set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabels {
    /// Per site; `NO_LABEL` for vacant sites. Labels are numbered by the
    /// smallest site index in each cluster.
    pub labels: Vec<u32>,
    pub sizes: Vec<u32>,
    pub largest: Option<u32>,
    pub unions: u64,
}

impl ClusterLabels {
    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }
}

pub fn label_clusters(grid: &SiteSet) -> ClusterLabels {
    let geom = grid.geometry();
    let n = geom.num_sites();
    let mut uf = UnionFind::new(n);
    for idx in grid.iter() {
        for axis in 0..geom.dim() {
            if let Some(j) = geom.neighbor(idx, (2 * axis) as u8) {
                if grid.contains(j) {
                    uf.union(idx as u32, j as u32);
                }
            }
        }
    }
    let mut labels = vec![NO_LABEL; n];
    let mut root_label = vec![NO_LABEL; n];
    let mut sizes = Vec::new();
    for idx in grid.iter() {
        let r = uf.find(idx as u32) as usize;
        if root_label[r] == NO_LABEL {
            root_label[r] = sizes.len() as u32;
            sizes.push(0);
        }
        labels[idx] = root_label[r];
        sizes[root_label[r] as usize] += 1;
    }
    let largest = sizes.iter().enumerate().max_by_key(|(i, s)| (**s, std::cmp::Reverse(*i))).map(|(i, _)| i as u32);
    ClusterLabels { labels, sizes, largest, unions: uf.unions() }
}

/// Does one cluster touch both faces orthogonal to `axis`?
pub fn crossing(labels: &ClusterLabels, geom: &BoxGeometry, axis: usize) -> Result<bool, PercolationError> {
    if geom.boundary() == Boundary::Torus {
        return Err(PercolationError::TorusCrossing);
    }
    if axis >= geom.dim() {
        return Err(PercolationError::BadAxis { axis, dim: geom.dim() });
    }
    let last = geom.side() - 1;
    let mut low = vec![false; labels.sizes.len()];
    for (idx, l) in labels.labels.iter().enumerate() {
        if *l != NO_LABEL && geom.axis_coord(idx, axis) == 0 {
            low[*l as usize] = true;
        }
    }
    Ok(labels
        .labels
        .iter()
        .enumerate()
        .any(|(idx, l)| *l != NO_LABEL && geom.axis_coord(idx, axis) == last && low[*l as usize]))
}

/// The smallest level at which the cloud crosses the window along `axis`,
/// found by adding animals in level order to a union-find that tracks face
/// contacts per cluster. `None` if the full cloud does not cross.
pub fn crossing_threshold(cloud: &WormCloud, axis: usize) -> Result<Option<f64>, PercolationError> {
    let geom = &cloud.geom;
    if geom.boundary() == Boundary::Torus {
        return Err(PercolationError::TorusCrossing);
    }
    if axis >= geom.dim() {
        return Err(PercolationError::BadAxis { axis, dim: geom.dim() });
    }
    let n = geom.num_sites();
    let last = geom.side() - 1;
    let mut uf = UnionFind::new(n);
    let mut occupied = SiteSet::empty(geom);
    let mut faces = vec![0u8; n];
    for a in &cloud.animals {
        for p in a.positions(&cloud.law) {
            let Some(idx) = geom.index(&p) else { continue };
            if !occupied.insert(idx) {
                continue;
            }
            let c = geom.axis_coord(idx, axis);
            let mut flags = (c == 0) as u8 | (((c == last) as u8) << 1);
            let mut root = idx as u32;
            for dir in 0..2 * geom.dim() as u8 {
                if let Some(j) = geom.neighbor(idx, dir) {
                    if occupied.contains(j) {
                        let rj = uf.find(j as u32);
                        flags |= faces[rj as usize];
                        root = uf.union(root, rj);
                    }
                }
            }
            faces[root as usize] |= flags;
            if faces[root as usize] == 3 {
                return Ok(Some(a.level));
            }
        }
    }
    Ok(None)
}

/// A crossing experiment: free window, animal law, generation policy.
#[derive(Debug, Clone)]
pub struct CrossingModel {
    pub geom: BoxGeometry,
    pub law: AnimalLaw,
    pub policy: GenerationPolicy,
    pub axis: usize,
}

/// Crossing thresholds of `replicas` independent clouds generated up to
/// `v_max`. Replica `i` uses stream `(master, "crossing", i)` whatever `v_max`
/// is, so thresholds below a smaller `v_max` agree.
pub fn crossing_thresholds(
    model: &CrossingModel,
    v_max: f64,
    replicas: u64,
    master: u64,
) -> Result<Vec<Option<f64>>, PercolationError> {
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(master, "crossing", i);
            let cloud = generate_cloud(&model.geom, v_max, &model.law, model.policy, &mut r)?;
            crossing_threshold(&cloud, model.axis)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    pub side: u32,
    pub v: f64,
    pub crossings: u64,
    pub replicas: u64,
    pub p: Proportion,
    pub seed0: u64,
}

fn estimate_from(thresholds: &[Option<f64>], v: f64, side: u32, master: u64) -> CrossingEstimate {
    let crossings = thresholds.iter().filter(|t| matches!(t, Some(x) if *x <= v)).count() as u64;
    let n = thresholds.len() as u64;
    CrossingEstimate { side, v, crossings, replicas: n, p: wilson(crossings, n, Z95), seed0: rng::derived_seed(master, "crossing", 0) }
}

pub fn estimate_crossing_prob(model: &CrossingModel, v: f64, replicas: u64, master: u64) -> Result<CrossingEstimate, PercolationError> {
    let t = crossing_thresholds(model, v, replicas, master)?;
    Ok(estimate_from(&t, v, model.geom.side(), master))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub side: u32,
    pub lo: f64,
    pub hi: f64,
    /// Midpoint whose interval contained 1/2, if the search stopped there.
    pub unresolved_at: Option<f64>,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<CrossingEstimate>,
    pub brackets: Vec<Bracket>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionParams {
    pub v_lo: f64,
    pub v_hi: f64,
    pub replicas: u64,
    pub max_iter: u32,
    /// Doublings/halvings of the initial interval before giving up.
    pub max_widen: u32,
    pub target: f64,
}

impl Default for BisectionParams {
    fn default() -> Self {
        BisectionParams { v_lo: 0.01, v_hi: 1.0, replicas: 200, max_iter: 12, max_widen: 6, target: 0.5 }
    }
}

/// Bisects for the intensity where the crossing probability passes the
/// target, one model (box size) at a time. A fixed replica set is reused at
/// every intensity, which is exact under the monotone coupling.
pub fn vc_bisection(models: &[CrossingModel], params: &BisectionParams, master: u64) -> Result<SweepResult, PercolationError> {
    let mut rows = Vec::new();
    let mut brackets = Vec::new();
    for model in models {
        let side = model.geom.side();
        let (mut lo, mut hi) = (params.v_lo, params.v_hi);
        let mut thr = crossing_thresholds(model, hi, params.replicas, master)?;
        let mut widen = 0;
        loop {
            let elo = estimate_from(&thr, lo, side, master);
            let ehi = estimate_from(&thr, hi, side, master);
            let lo_ok = elo.p.ci_hi < params.target;
            let hi_ok = ehi.p.ci_lo > params.target;
            if lo_ok && hi_ok {
                rows.push(elo);
                rows.push(ehi);
                break;
            }
            widen += 1;
            if widen > params.max_widen {
                return Err(PercolationError::NonBracketing { lo, hi });
            }
            if !lo_ok {
                lo /= 2.0;
            }
            if !hi_ok {
                hi *= 2.0;
                thr = crossing_thresholds(model, hi, params.replicas, master)?;
            }
        }
        let mut unresolved_at = None;
        let mut iters = 0;
        while iters < params.max_iter {
            iters += 1;
            let mid = 0.5 * (lo + hi);
            let e = estimate_from(&thr, mid, side, master);
            rows.push(e);
            if e.p.ci_hi < params.target {
                lo = mid;
            } else if e.p.ci_lo > params.target {
                hi = mid;
            } else {
                unresolved_at = Some(mid);
                break;
            }
        }
        brackets.push(Bracket { side, lo, hi, unresolved_at, exhausted: unresolved_at.is_none() });
    }
    Ok(SweepResult { rows, brackets })
}

/// Layers of animals by zoo distance from a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    /// Animal indices per layer; layer 0 holds the animals containing the root.
    pub layers: Vec<Vec<usize>>,
    /// Sites at zoo distance `k + 1`, by window index.
    pub layer_sites: Vec<Vec<usize>>,
    pub cluster: Vec<usize>,
    pub animal_count: usize,
    pub truncated: bool,
}

/// Breadth-first search over animals: an animal joins layer `k + 1` when its
/// trace meets the closure (trace plus outer boundary) of a layer-`k` animal.
/// Stops early, flagged, once `budget` animals have been taken.
pub fn explore_cluster_of_origin(cloud: &WormCloud, root: &Point, budget: usize) -> Exploration {
    let geom = &cloud.geom;
    let n = geom.num_sites();
    let traces: Vec<Vec<usize>> = cloud.animals.iter().map(|a| cloud.animal_trace(a)).collect();
    // site -> animals covering it, as a compressed table
    let mut start = vec![0u32; n + 1];
    for t in &traces {
        for &s in t {
            start[s + 1] += 1;
        }
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut cover = vec![0u32; start[n] as usize];
    for (a, t) in traces.iter().enumerate() {
        for &s in t {
            cover[fill[s] as usize] = a as u32;
            fill[s] += 1;
        }
    }
    let covering = |s: usize| &cover[start[s] as usize..start[s + 1] as usize];
    let mut empty = Exploration { layers: Vec::new(), layer_sites: Vec::new(), cluster: Vec::new(), animal_count: 0, truncated: false };
    let Some(o) = geom.index(root) else { return empty };
    let mut taken = vec![false; traces.len()];
    let mut in_cluster = SiteSet::empty(geom);
    let mut layer: Vec<usize> = covering(o).iter().map(|a| *a as usize).collect();
    layer.iter().for_each(|a| taken[*a] = true);
    let mut seen_site = SiteSet::empty(geom);
    while !layer.is_empty() {
        if empty.animal_count + layer.len() > budget {
            let room = budget - empty.animal_count;
            layer.truncate(room);
            empty.truncated = true;
        }
        empty.animal_count += layer.len();
        let mut sites = Vec::new();
        for &a in &layer {
            for &s in &traces[a] {
                if in_cluster.insert(s) {
                    sites.push(s);
                }
            }
        }
        sites.sort_unstable();
        empty.layer_sites.push(sites);
        if empty.truncated {
            empty.layers.push(layer);
            break;
        }
        let mut next = Vec::new();
        for &a in &layer {
            for &s in &traces[a] {
                let around = std::iter::once(s).chain(geom.neighbors(s));
                for q in around.collect::<Vec<_>>() {
                    if !seen_site.insert(q) {
                        continue;
                    }
                    for &b in covering(q) {
                        if !taken[b as usize] {
                            taken[b as usize] = true;
                            next.push(b as usize);
                        }
                    }
                }
            }
        }
        next.sort_unstable();
        empty.layers.push(std::mem::replace(&mut layer, next));
    }
    empty.cluster = in_cluster.iter().collect();
    empty
}

/// Parameters of a boomerang instance: worms start in `ball(y, 2R)`, are
/// longer than `(2 beta + 1) R^2`, hit `H` within `beta R^2` steps and come
/// back to `ball(y, R)` within `beta R^2` more.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingInstance {
    pub dim: usize,
    pub y: Point,
    pub big_r: u32,
    pub beta: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingReport {
    pub lambda_hat: f64,
    pub lambda_stderr: f64,
    /// `P(L > (2 beta + 1) R^2)`.
    pub long_tail: f64,
    /// `1 - exp(-lambda_hat)`.
    pub predicted: f64,
    pub empirical: Proportion,
    /// `lambda_hat / (cap(H) v R^2 P(L >= (2 beta + 1) R^2))`, when `cap(H)` is given.
    pub s_analogue: Option<f64>,
}

fn boomerang<K: Target + ?Sized, R: Rng + ?Sized>(inst: &ShootingInstance, h: &K, x: Point, horizon: u64, rng: &mut R) -> bool {
    let mut pos = x;
    let mut t = 0;
    while !h.contains_site(&pos) {
        if t == horizon {
            return false;
        }
        pos.step(random_dir(rng, inst.dim));
        t += 1;
    }
    let mut s = 0;
    while pos.sup_dist(&inst.y) > inst.big_r {
        if s == horizon {
            return false;
        }
        pos.step(random_dir(rng, inst.dim));
        s += 1;
    }
    true
}

fn uniform_in_ball<R: Rng + ?Sized>(dim: usize, c: &Point, r: u32, rng: &mut R) -> Point {
    let mut p = *c;
    for a in 0..dim {
        p.0[a] += rng.random_range(-(r as i32)..=r as i32);
    }
    p
}

/// Estimates the Poisson parameter `lambda = v sum_{l > (2b+1)R^2} m(l)
/// sum_{x in ball(y, 2R)} P_x(boomerang)` (the boomerang event only involves
/// the first `2 beta R^2` steps, so it does not depend on `l`), then samples
/// `clouds` independent Poisson clouds of such worms and reports how often at
/// least one boomerang occurs.
pub fn target_shooting_estimate<K: Target + ?Sized, R: Rng + ?Sized>(
    inst: &ShootingInstance,
    h: &K,
    dist: &LengthDistribution,
    walks: u64,
    clouds: u64,
    cap_h: Option<f64>,
    rng: &mut R,
) -> ShootingReport {
    let r2 = inst.big_r as f64 * inst.big_r as f64;
    let long = (2.0 * inst.beta + 1.0) * r2;
    let long_tail = dist.tail_mass(long.floor() + 1.0);
    let ball_size = (4.0 * inst.big_r as f64 + 1.0).powi(inst.dim as i32);
    let horizon = (inst.beta * r2).floor() as u64;
    let rate = inst.v * long_tail * ball_size;
    if rate == 0.0 || h.is_empty_target() {
        return ShootingReport {
            lambda_hat: 0.0,
            lambda_stderr: 0.0,
            long_tail,
            predicted: 0.0,
            empirical: wilson(0, clouds, Z95),
            s_analogue: None,
        };
    }
    let mut mv = MeanVar::new();
    for _ in 0..walks {
        let x = uniform_in_ball(inst.dim, &inst.y, 2 * inst.big_r, rng);
        mv.push(boomerang(inst, h, x, horizon, rng) as u8 as f64);
    }
    let lambda_hat = rate * mv.mean();
    let poisson = Poisson::new(rate).expect("positive rate");
    let mut successes = 0;
    for _ in 0..clouds {
        let count = poisson.sample(rng) as u64;
        let hit = (0..count).any(|_| {
            let x = uniform_in_ball(inst.dim, &inst.y, 2 * inst.big_r, rng);
            boomerang(inst, h, x, horizon, rng)
        });
        successes += hit as u64;
    }
    let tail_ge = dist.tail_mass(long.ceil());
    ShootingReport {
        lambda_hat,
        lambda_stderr: rate * mv.stderr(),
        long_tail,
        predicted: 1.0 - (-lambda_hat).exp(),
        empirical: wilson(successes, clouds, Z95),
        s_analogue: cap_h.map(|c| lambda_hat / (c * inst.v * r2 * tail_ge)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lengths::LengthSpec;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn bfs_partition(grid: &SiteSet) -> Vec<u32> {
        let geom = grid.geometry();
        let mut lab = vec![NO_LABEL; geom.num_sites()];
        let mut next = 0;
        for s in grid.iter() {
            if lab[s] != NO_LABEL {
                continue;
            }
            let mut q = VecDeque::from([s]);
            lab[s] = next;
            while let Some(x) = q.pop_front() {
                for y in geom.neighbors(x) {
                    if grid.contains(y) && lab[y] == NO_LABEL {
                        lab[y] = next;
                        q.push_back(y);
                    }
                }
            }
            next += 1;
        }
        lab
    }

    proptest! {
        #[test]
        fn labels_match_flood_fill(bits in prop::collection::vec(any::<bool>(), 64), torus in any::<bool>()) {
            let b = if torus { Boundary::Torus } else { Boundary::Free };
            let g = BoxGeometry::cube(2, 8, b).unwrap();
            let grid = SiteSet::from_indices(&g, bits.iter().enumerate().filter(|(_, x)| **x).map(|(i, _)| i));
            let l = label_clusters(&grid);
            // both number clusters by smallest index, so they agree exactly
            prop_assert_eq!(l.labels, bfs_partition(&grid));
        }
    }

    #[test]
    fn trivial_grids() {
        let g = BoxGeometry::cube(3, 5, Boundary::Torus).unwrap();
        assert_eq!(label_clusters(&SiteSet::empty(&g)).num_clusters(), 0);
        assert_eq!(label_clusters(&SiteSet::full(&g)).num_clusters(), 1);
        assert_eq!(crossing(&label_clusters(&SiteSet::full(&g)), &g, 0), Err(PercolationError::TorusCrossing));
    }

    #[test]
    fn crossing_cases() {
        let g = BoxGeometry::cube(2, 6, Boundary::Free).unwrap();
        assert!(!crossing(&label_clusters(&SiteSet::empty(&g)), &g, 0).unwrap());
        let line = SiteSet::from_indices(&g, (0..6).map(|x| g.index(&Point::new(&[x, 2])).unwrap()));
        assert!(crossing(&label_clusters(&line), &g, 0).unwrap());
        assert!(!crossing(&label_clusters(&line), &g, 1).unwrap());
        // everything except the slab x = 3
        let slab = SiteSet::from_indices(&g, (0..36).filter(|i| g.axis_coord(*i, 0) != 3));
        assert!(!crossing(&label_clusters(&slab), &g, 0).unwrap());
        assert!(crossing(&label_clusters(&slab), &g, 1).unwrap());
    }

    #[test]
    fn threshold_agrees_with_static_crossing() {
        let g = BoxGeometry::cube(2, 12, Boundary::Free).unwrap();
        let law = AnimalLaw::Worms(LengthDistribution::new(LengthSpec::Geometric { mean_t: 3.0 }).unwrap());
        for rep in 0..20 {
            let cloud = generate_cloud(&g, 0.6, &law, GenerationPolicy::PaddedWindow { margin: 4 }, &mut rng::stream(3, "thr", rep)).unwrap();
            let thr = crossing_threshold(&cloud, 0).unwrap();
            for v in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6] {
                let sub = cloud.restrict(v);
                let direct = crossing(&label_clusters(&sub.trace()), &g, 0).unwrap();
                assert_eq!(direct, matches!(thr, Some(t) if t <= v), "rep {rep} v {v}");
            }
        }
    }

    #[test]
    fn exploration_equals_cluster_of_origin() {
        let g = BoxGeometry::cube(3, 10, Boundary::Torus).unwrap();
        let law = AnimalLaw::Worms(LengthDistribution::new(LengthSpec::Geometric { mean_t: 3.0 }).unwrap());
        for rep in 0..20 {
            let cloud = generate_cloud(&g, 0.08, &law, GenerationPolicy::TorusWrap, &mut rng::stream(4, "exp", rep)).unwrap();
            let ex = explore_cluster_of_origin(&cloud, &Point::ORIGIN, usize::MAX);
            let labels = label_clusters(&cloud.trace());
            let o = g.index(&Point::ORIGIN).unwrap();
            let want: Vec<usize> = if labels.labels[o] == NO_LABEL {
                Vec::new()
            } else {
                (0..g.num_sites()).filter(|i| labels.labels[*i] == labels.labels[o]).collect()
            };
            assert_eq!(ex.cluster, want, "rep {rep}");
            assert!(!ex.truncated);
        }
    }

    #[test]
    fn shooting_trivia() {
        let dist = LengthDistribution::new(LengthSpec::Dirac { t: 1000 }).unwrap();
        let inst = ShootingInstance { dim: 3, y: Point::ORIGIN, big_r: 2, beta: 2.0, v: 0.0 };
        let h = crate::walk::Ball { center: Point::axis(0, 6), radius: 1 };
        let r = target_shooting_estimate(&inst, &h, &dist, 100, 100, None, &mut rng::stream(0, "ts", 0));
        assert_eq!(r.lambda_hat, 0.0);
        assert_eq!(r.empirical.successes, 0);
        let empty = crate::lattice::PointSet::new(3);
        let inst = ShootingInstance { v: 1.0, ..inst };
        let r = target_shooting_estimate(&inst, &empty, &dist, 100, 100, None, &mut rng::stream(0, "ts", 1));
        assert_eq!(r.lambda_hat, 0.0);
    }
}
