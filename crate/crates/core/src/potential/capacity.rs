//! Equilibrium measure and capacity estimators, prefix capacities and
//! trimming.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{require_transient, DisplacementGreenTable, FarField, PotentialError, TargetSet};
use crate::lattice::{Point, PointSet};
use crate::stats::{KahanSum, MeanVar};
use crate::walk::{random_dir, Target};

/// When a walk from `x in K` is declared to have escaped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum EscapeRule {
    /// Exit of `ball(x, rho * (diam K + 1))`.
    Scaled { rho: f64 },
    /// Exit of `ball(c, r_K + margin)` about the center of `K`.
    Margin { margin: u32 },
}

impl Default for EscapeRule {
    fn default() -> Self {
        EscapeRule::Scaled { rho: 64.0 }
    }
}

impl EscapeRule {
    fn ball(&self, x: &Point, center: &Point, r_k: u32, diam: u32) -> (Point, u32) {
        match *self {
            EscapeRule::Scaled { rho } => (*x, (rho * (diam as f64 + 1.0)).ceil().max(1.0) as u32),
            EscapeRule::Margin { margin } => (*center, r_k + margin.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeParams {
    pub rule: EscapeRule,
    /// Walks per exposed site when all exposed sites are enumerated.
    pub walks_per_site: u64,
    /// Above this many exposed sites, sites are sampled uniformly instead.
    pub max_enumerated: u64,
    /// Total (site, walk) samples in sampled mode.
    pub sampled_walks: u64,
}

impl Default for EscapeParams {
    fn default() -> Self {
        EscapeParams { rule: EscapeRule::default(), walks_per_site: 2000, max_enumerated: 200, sampled_walks: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub near_radius: u32,
    pub kill_radius: u32,
    pub walks: u64,
    /// Largest support for which the O(n^2) energy sum is attempted.
    pub max_support: usize,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams { near_radius: 4, kill_radius: 32, walks: 20_000, max_support: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionParams {
    /// Starts are uniform on the sup-sphere of radius `start_factor * (r_K + 1)`.
    pub start_factor: f64,
    /// Walks are killed on leaving the ball of `kill_factor` times the start radius.
    pub kill_factor: f64,
    pub walks: u64,
}

impl Default for InversionParams {
    fn default() -> Self {
        InversionParams { start_factor: 3.0, kill_factor: 4.0, walks: 200_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CapacityParams {
    pub escape: EscapeParams,
    pub energy: EnergyParams,
    pub inversion: InversionParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapacityMethod {
    EquilibriumMass,
    EnergyLowerBound,
    HittingInversion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: CapacityMethod,
    /// Bound on the systematic error of the method (not included in `stderr`).
    pub bias_bound: f64,
    pub samples: u64,
}

impl CapacityEstimate {
    fn zero(method: CapacityMethod) -> CapacityEstimate {
        CapacityEstimate { value: 0.0, stderr: 0.0, method, bias_bound: 0.0, samples: 0 }
    }
}

/// Estimated `e_K` on the sites of `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumMeasure {
    /// Sites with their weights; empty in sampled mode.
    pub sites: Vec<Point>,
    pub weights: Vec<f64>,
    pub stderr: Vec<f64>,
    pub total: f64,
    pub total_stderr: f64,
    /// Sum over escaped walks of the far-field return term, `Phi`.
    pub far_field: f64,
    pub bias_bound: f64,
    pub sampled: bool,
    pub samples: u64,
    pub rule: EscapeRule,
}

impl EquilibriumMeasure {
    pub fn weight(&self, p: &Point) -> Option<f64> {
        self.sites.iter().position(|q| q == p).map(|i| self.weights[i])
    }
}

/// Outcome of one escape walk: `Some(exit point)` if the walk left the
/// escape ball before returning to `K`.
#[inline]
fn escape_walk<K: Target + ?Sized, R: Rng + ?Sized>(
    k: &K,
    dim: usize,
    start: &Point,
    center: &Point,
    radius: u32,
    rng: &mut R,
) -> Option<Point> {
    let mut pos = *start;
    loop {
        pos.step(random_dir(rng, dim));
        if pos.sup_dist(center) > radius {
            return Some(pos);
        }
        if k.contains_site(&pos) {
            return None;
        }
    }
}

/// Per-sample sums of `1{esc}`, `1{esc} g`, `1{esc} g^2` and of the LED
/// bracket width.
#[derive(Debug, Clone, Copy, Default)]
struct EscapeSums {
    n: u64,
    esc: f64,
    g: f64,
    gg: f64,
    width: f64,
}

impl EscapeSums {
    fn push(&mut self, exit: Option<Point>, ff: &FarField, center: &Point, spread: f64, dim: usize) {
        self.n += 1;
        if let Some(z) = exit {
            let rel = z.sub(center);
            let g = ff.at(&rel);
            self.esc += 1.0;
            self.g += g;
            self.gg += g * g;
            self.width += led_width(rel.norm2().sqrt(), spread, dim, ff);
        }
    }

    /// Mean and variance of `1{esc} (1 - cap g)`.
    fn weight_moments(&self, cap: f64) -> (f64, f64) {
        let n = self.n as f64;
        let m = (self.esc - cap * self.g) / n;
        let m2 = (self.esc - 2.0 * cap * self.g + cap * cap * self.gg) / n;
        let var = if self.n > 1 { (m2 - m * m).max(0.0) * n / (n - 1.0) } else { 0.0 };
        (m, var)
    }
}

/// `max_y g_asym(z - y) - min_y g_asym(z - y)` over `y` within Euclidean
/// distance `spread` of the center, `|z - c|_2 = dist`.
fn led_width(dist: f64, spread: f64, dim: usize, ff: &FarField) -> f64 {
    let e = 1.0 - 0.5 * dim as f64;
    let near = dist - spread;
    if near <= 0.0 {
        return f64::INFINITY;
    }
    let a = ff.at(&Point::axis(0, 1));
    a * ((near * near).powf(e) - ((dist + spread) * (dist + spread)).powf(e))
}

/// Estimates `e_K(x) = P_x(T~_K = infinity)` for the exposed sites of `K`.
///
/// Walks stop on the escape sphere; the chance of returning afterwards is
/// replaced by `cap(K) g_asym(z - c)`, which makes the total mass the solution
/// of `cap = P - cap Phi`. The residual error of this replacement is bounded
/// by the width of the LED bracket on the escape sphere and reported as
/// `bias_bound`.
pub fn equilibrium_measure<R: Rng + ?Sized>(
    k: &TargetSet<'_>,
    params: &EscapeParams,
    rng: &mut R,
) -> Result<EquilibriumMeasure, PotentialError> {
    let dim = k.dim();
    require_transient(dim)?;
    let empty = EquilibriumMeasure {
        sites: Vec::new(),
        weights: Vec::new(),
        stderr: Vec::new(),
        total: 0.0,
        total_stderr: 0.0,
        far_field: 0.0,
        bias_bound: 0.0,
        sampled: false,
        samples: 0,
        rule: params.rule,
    };
    if k.is_empty() {
        return Ok(empty);
    }
    let ff = FarField::new(dim);
    let (center, r_k) = k.center_radius();
    let diam = k.diameter();
    let spread = (dim as f64).sqrt() * r_k as f64;
    let n_exposed = k.exposed_count();
    let enumerate = matches!(k, TargetSet::Points { .. }) && n_exposed <= params.max_enumerated;

    if enumerate {
        let TargetSet::Points { set, exposed } = k else { unreachable!() };
        let mut per_site = Vec::with_capacity(exposed.len());
        for x in exposed {
            let (bc, br) = params.rule.ball(x, &center, r_k, diam);
            let mut s = EscapeSums::default();
            for _ in 0..params.walks_per_site {
                let exit = escape_walk(*set, dim, x, &bc, br, rng);
                s.push(exit, &ff, &center, spread, dim);
            }
            per_site.push(s);
        }
        let n = params.walks_per_site as f64;
        let p_tot: f64 = per_site.iter().map(|s| s.esc / n).sum();
        let phi: f64 = per_site.iter().map(|s| s.g / n).sum();
        let width: f64 = per_site.iter().map(|s| s.width / n).sum();
        let cap = p_tot / (1.0 + phi);
        let mut weights = Vec::with_capacity(set.len());
        let mut errs = Vec::with_capacity(set.len());
        let mut var_tot = 0.0;
        let mut exposed_iter = exposed.iter().zip(&per_site).peekable();
        for p in set.points() {
            match exposed_iter.peek() {
                Some((q, s)) if *q == p => {
                    let (m, v) = s.weight_moments(cap);
                    weights.push(m);
                    errs.push((v / n).sqrt());
                    var_tot += v / n;
                    exposed_iter.next();
                }
                _ => {
                    weights.push(0.0);
                    errs.push(0.0);
                }
            }
        }
        let total = {
            let mut acc = KahanSum::new();
            weights.iter().for_each(|w| acc.add(*w));
            acc.value()
        };
        Ok(EquilibriumMeasure {
            sites: set.points().to_vec(),
            weights,
            stderr: errs,
            total,
            total_stderr: var_tot.sqrt() / (1.0 + phi),
            far_field: phi,
            bias_bound: cap * width,
            sampled: false,
            samples: params.walks_per_site * exposed.len() as u64,
            rule: params.rule,
        })
    } else {
        if params.sampled_walks == 0 {
            return Err(PotentialError::Parameters("sampled estimate needs sampled_walks > 0".into()));
        }
        let mut s = EscapeSums::default();
        for _ in 0..params.sampled_walks {
            let x = k.sample_exposed(rng);
            let (bc, br) = params.rule.ball(&x, &center, r_k, diam);
            let exit = escape_walk(k, dim, &x, &bc, br, rng);
            s.push(exit, &ff, &center, spread, dim);
        }
        let scale = n_exposed as f64;
        let n = s.n as f64;
        let p_tot = scale * s.esc / n;
        let phi = scale * s.g / n;
        let cap = p_tot / (1.0 + phi);
        let (m, v) = s.weight_moments(cap);
        Ok(EquilibriumMeasure {
            total: scale * m,
            total_stderr: scale * (v / n).sqrt() / (1.0 + phi),
            far_field: phi,
            bias_bound: cap * scale * s.width / n,
            sampled: true,
            samples: s.n,
            ..empty
        })
    }
}

/// `cap(K)` by the requested method. `EnergyLowerBound` uses the uniform
/// measure on `K`.
pub fn capacity<R: Rng + ?Sized>(
    k: &TargetSet<'_>,
    method: CapacityMethod,
    params: &CapacityParams,
    rng: &mut R,
) -> Result<CapacityEstimate, PotentialError> {
    require_transient(k.dim())?;
    if k.is_empty() {
        return Ok(CapacityEstimate::zero(method));
    }
    match method {
        CapacityMethod::EquilibriumMass => {
            let em = equilibrium_measure(k, &params.escape, rng)?;
            Ok(CapacityEstimate {
                value: em.total,
                stderr: em.total_stderr,
                method,
                bias_bound: em.bias_bound,
                samples: em.samples,
            })
        }
        CapacityMethod::EnergyLowerBound => {
            let pts: Vec<Point> = match k {
                TargetSet::Points { set, .. } => set.points().to_vec(),
                TargetSet::Ball(b) => PointSet::ball(b.dim, &b.center, b.radius).points().to_vec(),
            };
            if pts.len() > params.energy.max_support {
                return Err(PotentialError::Parameters(format!(
                    "energy bound over {} sites exceeds max_support {}",
                    pts.len(),
                    params.energy.max_support
                )));
            }
            let e = &params.energy;
            let table = DisplacementGreenTable::estimate(k.dim(), e.near_radius, e.kill_radius, e.walks, rng)?;
            let mut est = energy_lower_bound(&pts, None, &table)?;
            est.samples = e.walks;
            Ok(est)
        }
        CapacityMethod::HittingInversion => hitting_inversion(k, &params.inversion, rng),
    }
}

/// `1 / E(nu)` for a probability measure `nu` on `pts` (uniform if `None`).
/// The standard error treats the table errors as fully correlated.
pub fn energy_lower_bound(
    pts: &[Point],
    nu: Option<&[f64]>,
    table: &DisplacementGreenTable,
) -> Result<CapacityEstimate, PotentialError> {
    if pts.is_empty() {
        return Ok(CapacityEstimate::zero(CapacityMethod::EnergyLowerBound));
    }
    let uniform = vec![1.0 / pts.len() as f64; pts.len()];
    let nu = nu.unwrap_or(&uniform);
    if nu.len() != pts.len() {
        return Err(PotentialError::Parameters("measure and support differ in length".into()));
    }
    let total: f64 = nu.iter().sum();
    if (total - 1.0).abs() > 1e-9 || nu.iter().any(|w| *w < 0.0) {
        return Err(PotentialError::Parameters(format!("nu must be a probability measure, total {total}")));
    }
    let mut energy = KahanSum::new();
    let mut err = KahanSum::new();
    for (i, x) in pts.iter().enumerate() {
        for (j, y) in pts.iter().enumerate() {
            let z = y.sub(x);
            let w = nu[i] * nu[j];
            energy.add(w * table.at(&z));
            err.add(w * table.stderr_at(&z));
        }
    }
    let e = energy.value();
    Ok(CapacityEstimate {
        value: 1.0 / e,
        stderr: err.value() / (e * e),
        method: CapacityMethod::EnergyLowerBound,
        bias_bound: 0.0,
        samples: 0,
    })
}

/// Inverts `P_z(T_K < inf) ~ cap(K) g(z, c)` from far starts. Walks that
/// leave the kill ball without hitting contribute the far-field term, so
/// `cap = H / (E g(z - c) - Phi')`. `bias_bound` is the spread of the
/// estimate when `g(z - c)` is replaced by its extremes over `y in K`.
pub fn hitting_inversion<R: Rng + ?Sized>(
    k: &TargetSet<'_>,
    params: &InversionParams,
    rng: &mut R,
) -> Result<CapacityEstimate, PotentialError> {
    let dim = k.dim();
    require_transient(dim)?;
    if k.is_empty() {
        return Ok(CapacityEstimate::zero(CapacityMethod::HittingInversion));
    }
    let ff = FarField::new(dim);
    let (center, r_k) = k.center_radius();
    let start_r = (params.start_factor * (r_k as f64 + 1.0)).ceil() as u32;
    let kill_r = (params.kill_factor * start_r as f64).ceil() as u32;
    if start_r <= r_k || kill_r <= start_r {
        return Err(PotentialError::Parameters("need r_K < start radius < kill radius".into()));
    }
    let spread = (dim as f64).sqrt() * r_k as f64;
    let mut h = MeanVar::new();
    let mut q = MeanVar::new();
    let mut hq = KahanSum::new();
    let mut g_lo = KahanSum::new();
    let mut g_hi = KahanSum::new();
    let mut g_mid = KahanSum::new();
    for _ in 0..params.walks {
        let mut z = center;
        let axis = rng.random_range(0..dim);
        for a in 0..dim {
            z.0[a] += if a == axis {
                if rng.random::<bool>() { start_r as i32 } else { -(start_r as i32) }
            } else {
                rng.random_range(-(start_r as i32)..=start_r as i32)
            };
        }
        let rel = z.sub(&center);
        let g0 = ff.at(&rel);
        g_mid.add(g0);
        let d0 = rel.norm2().sqrt();
        let a = ff.at(&Point::axis(0, 1));
        let e = 1.0 - 0.5 * dim as f64;
        g_lo.add(a * ((d0 + spread) * (d0 + spread)).powf(e));
        g_hi.add(a * ((d0 - spread).max(1.0) * (d0 - spread).max(1.0)).powf(e));
        let mut pos = z;
        let (hit, tail) = loop {
            pos.step(random_dir(rng, dim));
            if k.contains_site(&pos) {
                break (1.0, 0.0);
            }
            if pos.sup_dist(&center) > kill_r {
                break (0.0, ff.at(&pos.sub(&center)));
            }
        };
        let qi = g0 - tail;
        h.push(hit);
        q.push(qi);
        hq.add(hit * qi);
    }
    let n = params.walks as f64;
    let cap = h.mean() / q.mean();
    // delta method for a ratio of means
    let cov = (hq.value() / n - h.mean() * q.mean()) * n / (n - 1.0);
    let var = (h.variance() - 2.0 * cap * cov + cap * cap * q.variance()).max(0.0) / n;
    let tail = g_mid.value() / n - q.mean();
    let lo = h.mean() / (g_hi.value() / n - tail);
    let hi = h.mean() / (g_lo.value() / n - tail).max(f64::MIN_POSITIVE);
    Ok(CapacityEstimate {
        value: cap,
        stderr: var.sqrt() / q.mean(),
        method: CapacityMethod::HittingInversion,
        bias_bound: (hi - lo).abs(),
        samples: params.walks,
    })
}

/// Capacities of the BFS prefixes `K_i = {x_0, ..., x_i}` of a connected set,
/// estimated jointly so that increments are coupled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixCapacities {
    pub order: Vec<Point>,
    pub caps: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `cap(K_i) - cap(K_{i-1})` with `cap(K_{-1}) = 0`.
    pub increments: Vec<f64>,
    pub increment_stderr: Vec<f64>,
    pub walks_per_site: u64,
    pub margin: u32,
}

/// One walk from every site `x_j` per replicate, run to the exit of a fixed
/// ball about `K`, recording the smallest BFS index hit at times `t >= 1`.
/// The walk from `x_j` escapes `K_i` (for `i >= j`) iff that index exceeds
/// `i`, so a single set of walks serves every prefix.
pub fn prefix_capacities<R: Rng + ?Sized>(
    k: &PointSet,
    root: &Point,
    margin: u32,
    walks_per_site: u64,
    rng: &mut R,
) -> Result<PrefixCapacities, PotentialError> {
    let dim = k.dim();
    require_transient(dim)?;
    if !k.contains(root) {
        return Err(PotentialError::NotInSet(*root));
    }
    if !k.is_connected() {
        return Err(PotentialError::NotConnected);
    }
    let order = k.bfs_order(root);
    let n_sites = order.len();
    let index: rustc_hash::FxHashMap<Point, u32> = order.iter().enumerate().map(|(i, p)| (*p, i as u32)).collect();
    let (center, r_k) = k.center_and_radius().unwrap();
    let radius = r_k + margin.max(1);
    let ff = FarField::new(dim);
    // records[j][w] = (min index hit, far-field g at exit)
    let mut records: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n_sites);
    for x in &order {
        let mut rec = Vec::with_capacity(walks_per_site as usize);
        for _ in 0..walks_per_site {
            let mut pos = *x;
            let mut min_idx = u32::MAX;
            loop {
                pos.step(random_dir(rng, dim));
                if pos.sup_dist(&center) > radius {
                    break;
                }
                if let Some(&i) = index.get(&pos) {
                    min_idx = min_idx.min(i);
                }
            }
            rec.push((min_idx, ff.at(&pos.sub(&center))));
        }
        records.push(rec);
    }
    let n = walks_per_site as f64;
    let mut caps = Vec::with_capacity(n_sites);
    let mut errs = Vec::with_capacity(n_sites);
    for i in 0..n_sites {
        let (mut p, mut phi) = (0.0, 0.0);
        for rec in &records[..=i] {
            for &(m, g) in rec {
                if m as usize > i {
                    p += 1.0;
                    phi += g;
                }
            }
        }
        p /= n;
        phi /= n;
        let cap = p / (1.0 + phi);
        let mut var = 0.0;
        for rec in &records[..=i] {
            let mut mv = MeanVar::new();
            for &(m, g) in rec {
                mv.push(if m as usize > i { 1.0 - cap * g } else { 0.0 });
            }
            var += mv.variance() / n;
        }
        caps.push(cap);
        errs.push(var.sqrt() / (1.0 + phi));
    }
    let mut increments = Vec::with_capacity(n_sites);
    let mut inc_err = Vec::with_capacity(n_sites);
    for i in 0..n_sites {
        if i == 0 {
            increments.push(caps[0]);
            inc_err.push(errs[0]);
            continue;
        }
        let (ci, cp) = (caps[i], caps[i - 1]);
        let mut var = 0.0;
        for (j, rec) in records[..=i].iter().enumerate() {
            let mut mv = MeanVar::new();
            for &(m, g) in rec {
                let now = if m as usize > i { 1.0 - ci * g } else { 0.0 };
                // x_i is not in K_{i-1}; its term there is zero
                let before = if j == i || (m as usize) < i { 0.0 } else { 1.0 - cp * g };
                mv.push(now - before);
            }
            var += mv.variance() / n;
        }
        increments.push(ci - cp);
        inc_err.push(var.sqrt());
    }
    Ok(PrefixCapacities {
        order,
        caps,
        stderr: errs,
        increments,
        increment_stderr: inc_err,
        walks_per_site,
        margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimResult {
    pub set: Vec<Point>,
    pub capacity: f64,
    pub stderr: f64,
    pub prefixes: PrefixCapacities,
}

/// Connected `K' ⊆ K` containing `x` with `a <= cap(K') <= a + 1`: the first
/// BFS prefix from `x` whose estimated capacity reaches `a`. Since every
/// increment lies in `[0, 1]`, the overshoot is at most one.
pub fn trim_to_capacity<R: Rng + ?Sized>(
    k: &PointSet,
    x: &Point,
    a: f64,
    margin: u32,
    walks_per_site: u64,
    rng: &mut R,
) -> Result<TrimResult, PotentialError> {
    if a < 0.0 || a.is_nan() {
        return Err(PotentialError::Parameters(format!("target capacity {a} must be >= 0")));
    }
    let pre = prefix_capacities(k, x, margin, walks_per_site, rng)?;
    let last = pre.caps.len() - 1;
    let available = pre.caps[last];
    if a > available + 3.0 * pre.stderr[last] {
        return Err(PotentialError::TrimTooLarge { requested: a, available });
    }
    let i = pre.caps.iter().position(|c| *c >= a).unwrap_or(last);
    Ok(TrimResult { set: pre.order[..=i].to_vec(), capacity: pre.caps[i], stderr: pre.stderr[i], prefixes: pre })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::walk::green_origin_series;

    #[test]
    fn empty_set_has_zero_capacity() {
        let empty = PointSet::new(3);
        let k = TargetSet::points(&empty);
        let mut r = rng::stream(0, "cap", 0);
        for m in [CapacityMethod::EquilibriumMass, CapacityMethod::EnergyLowerBound, CapacityMethod::HittingInversion] {
            let c = capacity(&k, m, &CapacityParams::default(), &mut r).unwrap();
            assert_eq!(c.value, 0.0);
        }
    }

    #[test]
    fn singleton_matches_inverse_green() {
        let single = PointSet::from_points(3, [Point::ORIGIN]);
        let k = TargetSet::points(&single);
        let params = EscapeParams { rule: EscapeRule::Scaled { rho: 16.0 }, walks_per_site: 40_000, ..Default::default() };
        let em = equilibrium_measure(&k, &params, &mut rng::stream(1, "cap", 0)).unwrap();
        let oracle = 1.0 / green_origin_series(3, 20_000);
        assert!((em.total - oracle).abs() < 3.0 * em.total_stderr + 2e-3, "{} +- {} vs {oracle}", em.total, em.total_stderr);
        assert_eq!(em.bias_bound, 0.0);
    }

    #[test]
    fn interior_sites_carry_no_mass() {
        let ball = PointSet::ball(3, &Point::ORIGIN, 1);
        let k = TargetSet::points(&ball);
        let params = EscapeParams { rule: EscapeRule::Margin { margin: 6 }, walks_per_site: 200, ..Default::default() };
        let em = equilibrium_measure(&k, &params, &mut rng::stream(2, "cap", 0)).unwrap();
        assert_eq!(em.weight(&Point::ORIGIN), Some(0.0));
        assert!(em.weights.iter().all(|w| (0.0..=1.0).contains(w)));
        let sum: f64 = em.weights.iter().sum();
        assert!((sum - em.total).abs() < 1e-12);
    }

    #[test]
    fn sampled_mode_needs_walks() {
        let k = TargetSet::ball(3, Point::ORIGIN, 2);
        let params = EscapeParams { sampled_walks: 0, ..Default::default() };
        assert!(matches!(equilibrium_measure(&k, &params, &mut rng::stream(2, "cap", 1)), Err(PotentialError::Parameters(_))));
    }

    #[test]
    fn estimators_agree_on_small_ball() {
        let ball = PointSet::ball(3, &Point::ORIGIN, 1);
        let k = TargetSet::points(&ball);
        let params = CapacityParams {
            escape: EscapeParams { rule: EscapeRule::Margin { margin: 8 }, walks_per_site: 4000, ..Default::default() },
            energy: EnergyParams { near_radius: 3, kill_radius: 20, walks: 20_000, max_support: 100 },
            inversion: InversionParams { walks: 100_000, ..Default::default() },
        };
        let mut r = rng::stream(3, "cap", 0);
        let em = capacity(&k, CapacityMethod::EquilibriumMass, &params, &mut r).unwrap();
        let el = capacity(&k, CapacityMethod::EnergyLowerBound, &params, &mut r).unwrap();
        let hi = capacity(&k, CapacityMethod::HittingInversion, &params, &mut r).unwrap();
        assert!(el.value <= em.value + 3.0 * (em.stderr.powi(2) + el.stderr.powi(2)).sqrt());
        let joint = (em.stderr.powi(2) + hi.stderr.powi(2)).sqrt();
        assert!((em.value - hi.value).abs() < 3.0 * joint + 0.05 * em.value, "{em:?} {hi:?}");
        // the sampled estimator sees the same quantity
        let sampled = EscapeParams { max_enumerated: 0, sampled_walks: 80_000, ..params.escape };
        let s = equilibrium_measure(&k, &sampled, &mut r).unwrap();
        assert!(s.sampled);
        let joint = (em.stderr.powi(2) + s.total_stderr.powi(2)).sqrt();
        assert!((em.value - s.total).abs() < 3.0 * joint);
    }

    #[test]
    fn prefix_increments_are_unit_bounded() {
        let line = PointSet::from_points(5, (0..8).map(|i| Point::axis(0, i)));
        let pre = prefix_capacities(&line, &Point::ORIGIN, 8, 400, &mut rng::stream(4, "pre", 0)).unwrap();
        for (inc, se) in pre.increments.iter().zip(&pre.increment_stderr) {
            assert!(*inc >= -3.0 * se && *inc <= 1.0 + 3.0 * se, "{inc} +- {se}");
        }
        let trimmed = trim_to_capacity(&line, &Point::ORIGIN, 2.0, 8, 400, &mut rng::stream(4, "pre", 1)).unwrap();
        assert!(trimmed.capacity >= 2.0 && trimmed.capacity <= 3.0 + 3.0 * trimmed.stderr);
        let zero = trim_to_capacity(&line, &Point::ORIGIN, 0.0, 8, 100, &mut rng::stream(4, "pre", 2)).unwrap();
        assert_eq!(zero.set, vec![Point::ORIGIN]);
        assert!(matches!(
            trim_to_capacity(&line, &Point::ORIGIN, 100.0, 8, 100, &mut rng::stream(4, "pre", 3)),
            Err(PotentialError::TrimTooLarge { .. })
        ));
    }
}
