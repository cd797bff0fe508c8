//! Simple random walk on `Z^d`: trajectories, hitting times, ranges, and a
//! few exact series (return probabilities, expected range) used as oracles
//! and for moment computations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{BoxGeometry, Point, PointSet, SiteSet, MAX_DIM};

/// Uniform direction in `0..2d`.
#[inline]
pub fn random_dir<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> u8 {
    rng.random_range(0..(2 * dim) as u8)
}

/// A nearest-neighbor path, stored as its start plus 4-bit direction codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    dim: usize,
    start: Point,
    /// two codes per byte, low nibble first
    codes: Vec<u8>,
    n_steps: usize,
}

impl Trajectory {
    pub fn new(dim: usize, start: Point) -> Trajectory {
        assert!((1..=MAX_DIM).contains(&dim));
        Trajectory { dim, start, codes: Vec::new(), n_steps: 0 }
    }

    pub fn with_capacity(dim: usize, start: Point, steps: usize) -> Trajectory {
        let mut t = Trajectory::new(dim, start);
        t.codes.reserve(steps.div_ceil(2));
        t
    }

    pub fn from_directions(dim: usize, start: Point, dirs: &[u8]) -> Trajectory {
        let mut t = Trajectory::with_capacity(dim, start, dirs.len());
        for &d in dirs {
            t.push(d);
        }
        t
    }

    #[inline]
    pub fn push(&mut self, dir: u8) {
        debug_assert!((dir as usize) < 2 * self.dim);
        if self.n_steps % 2 == 0 {
            self.codes.push(dir);
        } else {
            *self.codes.last_mut().unwrap() |= dir << 4;
        }
        self.n_steps += 1;
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }
    #[inline]
    pub fn start(&self) -> Point {
        self.start
    }
    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    /// Number of sites, `L(w) = steps + 1`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }
    /// Never true: a trajectory has at least its start.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn direction(&self, i: usize) -> u8 {
        let b = self.codes[i / 2];
        if i % 2 == 0 {
            b & 0x0f
        } else {
            b >> 4
        }
    }

    pub fn directions(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.n_steps).map(|i| self.direction(i))
    }

    /// Sites `w(0), ..., w(L-1)`.
    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        let mut p = self.start;
        std::iter::once(self.start).chain(self.directions().map(move |d| {
            p.step(d);
            p
        }))
    }

    pub fn end(&self) -> Point {
        self.positions().last().unwrap()
    }

    /// The subpath `w[t1, t2]` (inclusive).
    pub fn segment(&self, t1: usize, t2: usize) -> Trajectory {
        assert!(t1 <= t2 && t2 <= self.n_steps);
        let start = self.positions().nth(t1).unwrap();
        let mut t = Trajectory::with_capacity(self.dim, start, t2 - t1);
        for i in t1..t2 {
            t.push(self.direction(i));
        }
        t
    }

    pub fn translated(&self, by: &Point) -> Trajectory {
        let mut t = self.clone();
        t.start = self.start.add(by);
        t
    }

    /// Maximum sup-norm displacement from the start.
    pub fn max_displacement(&self) -> u32 {
        self.positions().map(|p| p.sup_dist(&self.start)).max().unwrap_or(0)
    }
}

/// What happens when a walk leaves a window.
#[derive(Debug, Clone, Copy)]
pub enum ExitPolicy<'a> {
    /// Ignore windows entirely.
    None,
    /// Stop at the first step that would leave the window; that step is not taken.
    Absorb(&'a BoxGeometry),
    /// Keep walking but record the first time spent outside the window.
    Record(&'a BoxGeometry),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkOutcome {
    pub trajectory: Trajectory,
    /// First time index at which the walk was (or would have been) outside the window.
    pub exit_time: Option<usize>,
}

/// An SRW path with `n_steps` steps from `start`.
pub fn simulate_walk<R: Rng + ?Sized>(
    dim: usize,
    start: Point,
    n_steps: usize,
    rng: &mut R,
    policy: ExitPolicy<'_>,
) -> WalkOutcome {
    let mut traj = Trajectory::with_capacity(dim, start, n_steps);
    let mut pos = start;
    let mut exit_time = None;
    if let ExitPolicy::Absorb(g) | ExitPolicy::Record(g) = policy {
        if !g.contains(&start) {
            exit_time = Some(0);
            if matches!(policy, ExitPolicy::Absorb(_)) {
                return WalkOutcome { trajectory: traj, exit_time };
            }
        }
    }
    for t in 1..=n_steps {
        let dir = random_dir(rng, dim);
        let next = pos.stepped(dir);
        match policy {
            ExitPolicy::None => {}
            ExitPolicy::Absorb(g) => {
                if !g.contains(&next) {
                    exit_time = Some(t);
                    break;
                }
            }
            ExitPolicy::Record(g) => {
                if exit_time.is_none() && !g.contains(&next) {
                    exit_time = Some(t);
                }
            }
        }
        traj.push(dir);
        pos = next;
    }
    WalkOutcome { trajectory: traj, exit_time }
}

/// Shorthand for an unconstrained walk.
pub fn walk<R: Rng + ?Sized>(dim: usize, start: Point, n_steps: usize, rng: &mut R) -> Trajectory {
    simulate_walk(dim, start, n_steps, rng, ExitPolicy::None).trajectory
}

/// Anything that can answer "is this site in K".
pub trait Target {
    fn contains_site(&self, p: &Point) -> bool;
    fn is_empty_target(&self) -> bool;
}

impl Target for PointSet {
    #[inline]
    fn contains_site(&self, p: &Point) -> bool {
        self.contains(p)
    }
    fn is_empty_target(&self) -> bool {
        self.is_empty()
    }
}

impl Target for SiteSet {
    #[inline]
    fn contains_site(&self, p: &Point) -> bool {
        self.contains_point(p)
    }
    fn is_empty_target(&self) -> bool {
        self.is_empty()
    }
}

/// A sup-norm ball, with analytic membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ball {
    pub center: Point,
    pub radius: u32,
}

impl Target for Ball {
    #[inline]
    fn contains_site(&self, p: &Point) -> bool {
        p.sup_dist(&self.center) <= self.radius
    }
    fn is_empty_target(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitVariant {
    /// `T_K = inf{t >= 0 : X(t) in K}`
    Entrance,
    /// `T~_K = inf{t >= 1 : X(t) in K}`
    Hitting,
}

/// First hit of a target; `None` plays the role of `T = infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitResult {
    pub hit_time: Option<usize>,
    pub hit_site: Option<Point>,
}

impl HitResult {
    pub const MISS: HitResult = HitResult { hit_time: None, hit_site: None };

    pub fn is_hit(&self) -> bool {
        self.hit_time.is_some()
    }
}

/// Scans a trajectory for the first visit to `k` at a time `<= t_max`.
pub fn first_hit<K: Target + ?Sized>(traj: &Trajectory, k: &K, t_max: usize, variant: HitVariant) -> HitResult {
    if k.is_empty_target() {
        return HitResult::MISS;
    }
    let first = match variant {
        HitVariant::Entrance => 0,
        HitVariant::Hitting => 1,
    };
    for (t, p) in traj.positions().enumerate().take(t_max.saturating_add(1)).skip(first) {
        if k.contains_site(&p) {
            return HitResult { hit_time: Some(t), hit_site: Some(p) };
        }
    }
    HitResult::MISS
}

/// Runs a fresh walk from `start` until it hits `k`, exceeds `t_max`, or
/// (optionally) leaves the ball of radius `kill_radius` about `kill_center`.
pub fn first_hit_walk<K: Target + ?Sized, R: Rng + ?Sized>(
    dim: usize,
    start: Point,
    k: &K,
    t_max: usize,
    variant: HitVariant,
    kill: Option<Ball>,
    rng: &mut R,
) -> HitResult {
    if k.is_empty_target() {
        return HitResult::MISS;
    }
    if variant == HitVariant::Entrance && k.contains_site(&start) {
        return HitResult { hit_time: Some(0), hit_site: Some(start) };
    }
    let mut pos = start;
    for t in 1..=t_max {
        pos.step(random_dir(rng, dim));
        if k.contains_site(&pos) {
            return HitResult { hit_time: Some(t), hit_site: Some(pos) };
        }
        if let Some(b) = &kill {
            if !b.contains_site(&pos) {
                return HitResult::MISS;
            }
        }
    }
    HitResult::MISS
}

/// The set of sites visited, `{X(0), ..., X(L-1)}`.
pub fn range_of_walk(traj: &Trajectory) -> PointSet {
    PointSet::from_points(traj.dim(), traj.positions())
}

/// The range restricted to a window (sites outside a free window are
/// dropped, torus windows wrap).
pub fn range_in(traj: &Trajectory, geom: &BoxGeometry) -> SiteSet {
    SiteSet::from_indices(geom, traj.positions().filter_map(|p| geom.index(&p)))
}

/// Exact `p_t(o, x)` for all `x`, as a dense array over `[-t, t]^d`, by
/// repeated convolution. Only meant for small `t` and `d`.
pub fn exact_kernel(dim: usize, t: usize) -> (BoxGeometry, Vec<f64>) {
    let h = t as i32;
    let geom = BoxGeometry::new(dim, 2 * t as u32 + 1, crate::lattice::Boundary::Free, Point::new(&vec![-h; dim]))
        .expect("valid kernel geometry");
    let mut cur = vec![0.0; geom.num_sites()];
    cur[geom.index(&Point::ORIGIN).unwrap()] = 1.0;
    let w = 1.0 / (2 * dim) as f64;
    for _ in 0..t {
        let mut next = vec![0.0; geom.num_sites()];
        for (idx, &p) in cur.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for nb in geom.neighbors(idx) {
                next[nb] += p * w;
            }
        }
        cur = next;
    }
    (geom, cur)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Exact return probabilities `u_t = P_o(X(t) = o)` for `t = 0..=t_max`.
///
/// Built dimension by dimension: the number of steps spent along the first
/// axis is binomial, and the walk returns iff each axis returns.
pub fn return_probabilities(dim: usize, t_max: usize) -> Vec<f64> {
    let half = t_max / 2;
    let lf = ln_factorials(2 * half + 1);
    let ln_choose = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];
    // ln P_1(2n) = ln C(2n, n) - 2n ln 2
    let p1: Vec<f64> = (0..=half).map(|n| ln_choose(2 * n, n) - (2 * n) as f64 * std::f64::consts::LN_2).collect();
    let mut pd = p1.clone();
    for d in 2..=dim {
        let a = (1.0 / d as f64).ln();
        let b = ((d - 1) as f64 / d as f64).ln();
        let mut next = vec![f64::NEG_INFINITY; half + 1];
        for n in 0..=half {
            let terms: Vec<f64> = (0..=n)
                .map(|k| {
                    ln_choose(2 * n, 2 * k) + (2 * k) as f64 * a + (2 * n - 2 * k) as f64 * b + p1[k] + pd[n - k]
                })
                .collect();
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            next[n] = m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        }
        pd = next;
    }
    (0..=t_max).map(|t| if t % 2 == 1 { 0.0 } else { pd[t / 2].exp() }).collect()
}

/// First-return probabilities `f_t = P_o(T~_o = t)` from the renewal
/// relation `u_t = sum_{j=1}^{t} f_j u_{t-j}`.
pub fn first_return_probabilities(u: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; u.len()];
    for t in 1..u.len() {
        let conv: f64 = (1..t).map(|j| f[j] * u[t - j]).sum();
        f[t] = u[t] - conv;
    }
    f
}

/// `g(o, o)` from the exact series up to `t_max` plus the local limit tail
/// `(d/2pi)^{d/2} T^{1-d/2} / (d/2 - 1)`. Requires `d >= 3`.
pub fn green_origin_series(dim: usize, t_max: usize) -> f64 {
    assert!(dim >= 3);
    let u = return_probabilities(dim, t_max);
    let head: f64 = u.iter().sum();
    let d = dim as f64;
    let tail = (d / (2.0 * std::f64::consts::PI)).powf(d / 2.0) * (t_max as f64 + 1.0).powf(1.0 - d / 2.0) / (d / 2.0 - 1.0);
    head + tail
}

/// Expected range sizes, `E|{X(0..n-1)}|`, for a fixed dimension.
#[derive(Debug, Clone)]
pub struct RangeTable {
    dim: usize,
    /// `cum[n] = E|range of n sites|`
    cum: Vec<f64>,
    /// asymptotic no-return probability and its correction coefficient
    q_inf: f64,
    u_tail_coef: f64,
}

impl RangeTable {
    /// Exact values for walks of up to `n_exact` sites.
    pub fn new(dim: usize, n_exact: usize) -> RangeTable {
        let n_exact = n_exact.max(2);
        let u = return_probabilities(dim, n_exact);
        let f = first_return_probabilities(&u);
        // q_k = P(no return within k steps)
        let mut cum = Vec::with_capacity(n_exact + 1);
        cum.push(0.0);
        let mut q = 1.0;
        let mut acc = 0.0;
        for k in 0..n_exact {
            if k >= 1 {
                q -= f[k];
            }
            acc += q;
            cum.push(acc);
        }
        let (q_inf, u_tail_coef) = if dim >= 3 {
            let g = green_origin_series(dim, n_exact);
            let d = dim as f64;
            (1.0 / g, (d / (2.0 * std::f64::consts::PI)).powf(d / 2.0))
        } else {
            (0.0, 0.0)
        };
        RangeTable { dim, cum, q_inf, u_tail_coef }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Escape probability `P_o(T~_o = infinity)` (0 for `d <= 2`).
    pub fn escape_probability(&self) -> f64 {
        self.q_inf
    }

    /// `E|range|` of a walk with `n` sites (`n - 1` steps).
    pub fn expected_range(&self, n: u64) -> f64 {
        let n_exact = (self.cum.len() - 1) as u64;
        if n <= n_exact {
            return self.cum[n as usize];
        }
        assert!(self.dim >= 3, "range asymptotics need d >= 3; enlarge the exact table instead");
        // q_k ~ q_inf + q_inf^2 sum_{j>k} u_j with u_j ~ 2 coef j^{-d/2} on even j
        let d = self.dim as f64;
        let q = self.q_inf;
        // sum_{k=n_exact}^{n-1} q_k ~ q (n - n_exact) + the integrated correction
        let a = n_exact as f64;
        let b = n as f64;
        let int_s = if (d - 4.0).abs() < 1e-12 {
            q * q * self.u_tail_coef * (b / a).ln()
        } else {
            q * q * self.u_tail_coef * (a.powf(2.0 - d / 2.0) - b.powf(2.0 - d / 2.0)) / ((d / 2.0 - 1.0) * (d / 2.0 - 2.0))
        };
        self.cum[n_exact as usize] + q * (b - a) + int_s
    }

    /// `m_1 = sum_l m(l) E|R_l|`, the mean animal size under a length law.
    pub fn mean_range_under(&self, dist: &crate::lengths::LengthDistribution) -> f64 {
        self.range_moment_under(dist, 1)
    }

    /// `sum_l m(l) E|R_l|^k`, `k in {1, 2}`, for the sampled (possibly
    /// truncated) law. For `k = 2` this uses `E[|R|^2] >= (E|R|)^2`, so it
    /// is a lower bound; exact second moments need [`range_size_law`].
    pub fn range_moment_under(&self, dist: &crate::lengths::LengthDistribution, k: i32) -> f64 {
        let hi = match (dist.cap(), dist.support_max()) {
            (Some(c), Some(m)) => c.min(m),
            (Some(c), None) => c,
            (None, Some(m)) => m,
            (None, None) => dist.tail_quantile(1e-15),
        };
        let mut acc = crate::stats::KahanSum::new();
        let mut l = dist.support_min();
        while l <= hi {
            let w = dist.sampled_mass(l);
            if w > 0.0 {
                acc.add(w * self.expected_range(l).powi(k));
            }
            l += 1;
        }
        acc.value()
    }
}

/// The exact law of `|range|` for walks with `n` sites, by enumerating all
/// `(2d)^{n-1}` paths. Index `s` holds `P(|range| = s)`.
pub fn range_size_law(dim: usize, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let steps = n - 1;
    let two_d = 2 * dim;
    let total = (two_d as u64).pow(steps as u32);
    assert!(total <= 1 << 26, "enumeration too large");
    let mut counts = vec![0u64; n + 1];
    let mut dirs = vec![0u8; steps];
    for code in 0..total {
        let mut c = code;
        for d in dirs.iter_mut() {
            *d = (c % two_d as u64) as u8;
            c /= two_d as u64;
        }
        let t = Trajectory::from_directions(dim, Point::ORIGIN, &dirs);
        counts[range_of_walk(&t).len()] += 1;
    }
    counts.into_iter().map(|c| c as f64 / total as f64).collect()
}
