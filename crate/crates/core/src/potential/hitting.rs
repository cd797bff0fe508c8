//! Hitting probabilities and sums of hitting probabilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{require_transient, FarField, GreenTable, PotentialError, TargetSet};
use crate::lattice::Point;
use crate::stats::MeanVar;
use crate::walk::{random_dir, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingParams {
    /// Kill radius about the center of `K`, as a multiple of `|x - c| + r_K`.
    pub kill_factor: f64,
    pub walks: u64,
    /// Safety horizon; walks still unresolved at this time count as misses.
    pub t_max: usize,
}

impl Default for HittingParams {
    fn default() -> Self {
        HittingParams { kill_factor: 4.0, walks: 100_000, t_max: usize::MAX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Fraction of walks that hit `K` inside the kill ball.
    pub hit_fraction: f64,
    /// Fraction of walks neither hitting nor leaving by `t_max`; an upper
    /// bound on the probability mass they would add.
    pub unresolved: f64,
}

/// `P_x(T_K < infinity)`: hits inside `ball(c, kill)` plus
/// `cap(K) g_asym(X_tau - c)` for walks that leave first.
pub fn hitting_probability<R: Rng + ?Sized>(
    x: &Point,
    k: &TargetSet<'_>,
    cap: f64,
    params: &HittingParams,
    rng: &mut R,
) -> Result<HittingEstimate, PotentialError> {
    let dim = k.dim();
    require_transient(dim)?;
    if k.is_empty() {
        return Ok(HittingEstimate { value: 0.0, stderr: 0.0, hit_fraction: 0.0, unresolved: 0.0 });
    }
    if k.contains_site(x) {
        return Ok(HittingEstimate { value: 1.0, stderr: 0.0, hit_fraction: 1.0, unresolved: 0.0 });
    }
    let ff = FarField::new(dim);
    let (center, r_k) = k.center_radius();
    let kill = (params.kill_factor * (x.sup_dist(&center) + r_k) as f64).ceil() as u32;
    if kill <= x.sup_dist(&center) {
        return Err(PotentialError::KillRadiusTooSmall { kill, dist: x.sup_dist(&center) });
    }
    let mut mv = MeanVar::new();
    let (mut hits, mut open) = (0u64, 0u64);
    for _ in 0..params.walks {
        let mut pos = *x;
        let mut t = 0usize;
        let v = loop {
            if t == params.t_max {
                open += 1;
                break 0.0;
            }
            pos.step(random_dir(rng, dim));
            t += 1;
            if k.contains_site(&pos) {
                hits += 1;
                break 1.0;
            }
            if pos.sup_dist(&center) > kill {
                break cap * ff.at(&pos.sub(&center));
            }
        };
        mv.push(v);
    }
    let n = params.walks as f64;
    Ok(HittingEstimate { value: mv.mean(), stderr: mv.stderr(), hit_fraction: hits as f64 / n, unresolved: open as f64 / n })
}

/// `P_x(T_K <= t)` by plain simulation of `t`-step walks.
pub fn hitting_within_time<K: Target + ?Sized, R: Rng + ?Sized>(
    dim: usize,
    x: &Point,
    k: &K,
    t: usize,
    walks: u64,
    rng: &mut R,
) -> crate::stats::Proportion {
    let mut hits = 0u64;
    for _ in 0..walks {
        let r = crate::walk::first_hit_walk(dim, *x, k, t, crate::walk::HitVariant::Entrance, None, rng);
        hits += r.is_hit() as u64;
    }
    crate::stats::wilson(hits, walks, crate::stats::Z95)
}

/// `[cap min_{y in K} g(x, y), cap max_{y in K} g(x, y)]`.
pub fn led_bracket<G: GreenTable + ?Sized>(x: &Point, k: &[Point], cap: f64, table: &G) -> Result<(f64, f64), PotentialError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for y in k {
        let g = table.green(x, y)?;
        lo = lo.min(g);
        hi = hi.max(g);
    }
    Ok((cap * lo, cap * hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum HittingSumMode {
    /// `sum_{|z| >= 4r} P_z(T_K <= ell)` for `K ⊆ ball(3r)`.
    Upper,
    /// `sum_{z in G} P_z(T_K <= ell/3, T_{ball(3R)^c} > ell)` for
    /// `K ⊆ ball(y, 3r)` with `y` on the `10r` grid.
    Lower { big_r: u32, grid_center: Point, delta_low: f64, delta_up: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingSumEstimate {
    pub value: f64,
    pub stderr: f64,
    pub ell: usize,
    pub samples: u64,
}

/// Is `z` in `G = ball(2R) minus the union of ball(x, 4r), x in 10r Z^d`?
pub fn in_perforated_ball(z: &Point, dim: usize, r: u32, big_r: u32) -> bool {
    if z.sup_norm() > 2 * big_r {
        return false;
    }
    let s = 10 * r as i64;
    z.0[..dim].iter().any(|&c| {
        let c = c as i64;
        let nearest = (c as f64 / s as f64).round() as i64 * s;
        (c - nearest).abs() > 4 * r as i64
    })
}

fn check(ok: bool, what: &str) -> Result<(), PotentialError> {
    if ok {
        Ok(())
    } else {
        Err(PotentialError::Parameters(what.to_string()))
    }
}

/// Sums of hitting probabilities over far start points, by time reversal:
/// a path from `z` first entering `K` at `y` at time `t`, reversed, is a walk
/// from `y` that avoids `K` at times `1..=t` and sits at `z` at time `t`. So
///
/// `sum_z P_z(T_K <= ell) = sum_{y in K} E_y #{1 <= t <= ell : t < T~_K, Y_t in Z}`
///
/// which needs no spatial truncation. In lower mode the walk after the hit is
/// an independent forward walk from `y` that must stay in `ball(3R)` for the
/// remaining `ell - t` steps. Exposed sites of `K` are sampled uniformly;
/// interior ones contribute nothing.
pub fn hitting_sum<R: Rng + ?Sized>(
    k: &TargetSet<'_>,
    ell: usize,
    r: u32,
    mode: &HittingSumMode,
    samples: u64,
    rng: &mut R,
) -> Result<HittingSumEstimate, PotentialError> {
    let dim = k.dim();
    require_transient(dim)?;
    let zero = HittingSumEstimate { value: 0.0, stderr: 0.0, ell, samples: 0 };
    if k.is_empty() {
        return Ok(zero);
    }
    let (c, rk) = k.center_radius();
    let ell_f = ell as f64;
    let r_f = r as f64;
    match mode {
        HittingSumMode::Upper => {
            check(c.sup_norm() + rk <= 3 * r, "K must lie in ball(3r)")?;
            check(ell_f >= 16.0 * r_f * r_f, "ell >= 16 r^2")?;
        }
        HittingSumMode::Lower { big_r, grid_center, delta_low, delta_up } => {
            let big = *big_r as f64;
            check(r >= 2, "r >= 2")?;
            check(*big_r >= r, "r <= R")?;
            check(*delta_low * r_f * r_f <= ell_f, "delta_low r^2 <= ell")?;
            check(ell_f <= *delta_up * big * big, "ell <= delta_up R^2")?;
            check(
                grid_center.0[..dim].iter().all(|v| v.rem_euclid(10 * r as i32) == 0),
                "grid center must lie in 10r Z^d",
            )?;
            check(grid_center.sup_norm() <= 2 * big_r + r, "ball(y, r) must meet ball(2R)")?;
            check(c.sup_dist(grid_center) + rk <= 3 * r, "K must lie in ball(y, 3r)")?;
        }
    }
    let n_exposed = k.exposed_count() as f64;
    let mut mv = MeanVar::new();
    for _ in 0..samples {
        let y = k.sample_exposed(rng);
        let v = match mode {
            HittingSumMode::Upper => {
                let mut pos = y;
                let mut count = 0u64;
                for _ in 0..ell {
                    pos.step(random_dir(rng, dim));
                    if k.contains_site(&pos) {
                        break;
                    }
                    count += (pos.sup_norm() >= 4 * r) as u64;
                }
                count as f64
            }
            HittingSumMode::Lower { big_r, .. } => {
                let outer = 3 * big_r;
                // forward part: exit time of ball(3R) within ell steps
                let mut pos = y;
                let mut tau = usize::MAX;
                for t in 1..=ell {
                    pos.step(random_dir(rng, dim));
                    if pos.sup_norm() > outer {
                        tau = t;
                        break;
                    }
                }
                // reversed part, up to ell/3
                let mut pos = y;
                let mut count = 0u64;
                for t in 1..=ell / 3 {
                    pos.step(random_dir(rng, dim));
                    if k.contains_site(&pos) || pos.sup_norm() > outer {
                        break;
                    }
                    if tau > ell - t && in_perforated_ball(&pos, dim, r, *big_r) {
                        count += 1;
                    }
                }
                count as f64
            }
        };
        mv.push(n_exposed * v);
    }
    Ok(HittingSumEstimate { value: mv.mean(), stderr: mv.stderr(), ell, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PointSet;
    use crate::rng;

    #[test]
    fn inside_is_certain() {
        let k = TargetSet::ball(3, Point::ORIGIN, 2);
        let h = hitting_probability(&Point::axis(1, 2), &k, 1.0, &HittingParams::default(), &mut rng::stream(0, "h", 0)).unwrap();
        assert_eq!(h.value, 1.0);
        assert_eq!(h.stderr, 0.0);
    }

    #[test]
    fn single_site_hitting_is_green_ratio() {
        // P_x(T_o < inf) = g(x, o) / g(o, o) = cap({o}) g(x, o)
        let single = PointSet::from_points(3, [Point::ORIGIN]);
        let k = TargetSet::points(&single);
        let g00 = crate::walk::green_origin_series(3, 20_000);
        let x = Point::axis(0, 6);
        let p = HittingParams { walks: 40_000, ..Default::default() };
        let h = hitting_probability(&x, &k, 1.0 / g00, &p, &mut rng::stream(1, "h", 0)).unwrap();
        let approx = super::super::green_asymptotic(3, &x) / g00;
        assert!((h.value - approx).abs() < 3.0 * h.stderr + 0.01 * approx, "{} vs {approx}", h.value);
    }

    #[test]
    fn empty_sum_is_zero() {
        let empty = PointSet::new(5);
        let s = hitting_sum(&TargetSet::points(&empty), 256, 2, &HittingSumMode::Upper, 10, &mut rng::stream(0, "hs", 0)).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn upper_preconditions_name_the_failure() {
        let k = TargetSet::ball(5, Point::ORIGIN, 2);
        let err = hitting_sum(&k, 10, 2, &HittingSumMode::Upper, 10, &mut rng::stream(0, "hs", 1)).unwrap_err();
        assert_eq!(err, PotentialError::Parameters("ell >= 16 r^2".into()));
    }

    #[test]
    fn time_reversal_matches_forward_count() {
        // d = 3, K = {o}, small ell: compare with forward simulation over a window
        let single = PointSet::from_points(3, [Point::ORIGIN]);
        let k = TargetSet::points(&single);
        let r = 1;
        let ell = 16;
        let rev = hitting_sum(&k, ell, r, &HittingSumMode::Upper, 200_000, &mut rng::stream(2, "hs", 0)).unwrap();
        let mut fwd = 0.0;
        let mut var = 0.0;
        let mut g = rng::stream(2, "hs", 1);
        let h = ell as i32;
        let walks = 400u64;
        for a in -h..=h {
            for b in -h..=h {
                for c in -h..=h {
                    let z = Point::new(&[a, b, c]);
                    if z.sup_norm() < 4 * r || z.l1_norm() > ell as u64 {
                        continue;
                    }
                    let p = hitting_within_time(3, &z, &single, ell, walks, &mut g);
                    fwd += p.p_hat;
                    var += p.p_hat * (1.0 - p.p_hat) / walks as f64;
                }
            }
        }
        let joint = (rev.stderr.powi(2) + var).sqrt();
        assert!((rev.value - fwd).abs() < 3.0 * joint, "{} vs {fwd} +- {joint}", rev.value);
    }

    #[test]
    fn perforation() {
        assert!(!in_perforated_ball(&Point::new(&[0, 0, 0, 0, 0]), 5, 2, 40));
        assert!(in_perforated_ball(&Point::new(&[10, 0, 0, 0, 0]), 5, 2, 40));
        assert!(!in_perforated_ball(&Point::new(&[20, 8, 0, 0, 0]), 5, 2, 40));
        assert!(!in_perforated_ball(&Point::new(&[81, 0, 0, 0, 0]), 5, 2, 40));
    }
}
