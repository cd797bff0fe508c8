//! Sub-boxes of scale `r` visited by a walk in a box of scale `R`.

use rand::Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::PotentialError;
use crate::lattice::Point;
use crate::stats::MeanVar;
use crate::walk::random_dir;

/// `D(r, R) = {y in 10r Z^d : ball(y, r) meets ball(2R)}`, i.e. the grid
/// points with `|y| <= 2R + r`.
pub fn subbox_centers(dim: usize, r: u32, big_r: u32) -> Vec<Point> {
    let s = 10 * r as i64;
    let reach = (2 * big_r + r) as i64;
    let kmax = reach / s;
    let side = (2 * kmax + 1) as usize;
    let mut out = Vec::with_capacity(side.pow(dim as u32));
    for code in 0..side.pow(dim as u32) {
        let mut p = Point::ORIGIN;
        let mut c = code;
        for axis in 0..dim {
            p.0[axis] = ((c % side) as i64 - kmax) as i32 * s as i32;
            c /= side;
        }
        out.push(p);
    }
    out
}

/// The grid point whose `r`-ball contains `x`, if any. Such balls are
/// disjoint since the grid spacing is `10r`.
#[inline]
fn covering_center(x: &Point, dim: usize, r: u32) -> Option<Point> {
    let s = 10 * r as i32;
    let mut y = Point::ORIGIN;
    for a in 0..dim {
        let k = (x.0[a] as f64 / s as f64).round() as i32;
        y.0[a] = k * s;
        if (x.0[a] - y.0[a]).unsigned_abs() > r {
            return None;
        }
    }
    Some(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubboxParams {
    pub walks: u64,
    /// `zeta` is observed until the walk leaves `ball(outer_factor * R)`.
    pub outer_factor: u32,
}

impl Default for SubboxParams {
    fn default() -> Self {
        SubboxParams { walks: 1000, outer_factor: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubboxStats {
    pub d_size: usize,
    /// Per walk `sum_y zeta_y` (ever visited, up to the outer ball).
    pub zeta_counts: Vec<u32>,
    /// Per walk `sum_y chi_y` (visited before leaving `ball(2R)` and before
    /// `R^2 - r^2` steps).
    pub chi_counts: Vec<u32>,
    /// Per walk `sum_{y != y'} zeta_y zeta_y' |y - y'|^{2-d}`.
    pub pair_sums: Vec<f64>,
}

impl SubboxStats {
    pub fn mean_zeta(&self) -> MeanVar {
        let mut m = MeanVar::new();
        self.zeta_counts.iter().for_each(|c| m.push(*c as f64));
        m
    }

    pub fn mean_chi(&self) -> MeanVar {
        let mut m = MeanVar::new();
        self.chi_counts.iter().for_each(|c| m.push(*c as f64));
        m
    }

    pub fn mean_pair_sum(&self) -> MeanVar {
        let mut m = MeanVar::new();
        self.pair_sums.iter().for_each(|c| m.push(*c));
        m
    }

    /// Empirical `q`-quantile of the `chi` counts (lower order statistic).
    pub fn chi_quantile(&self, q: f64) -> u32 {
        let mut v = self.chi_counts.clone();
        v.sort_unstable();
        let i = ((q * v.len() as f64).floor() as usize).min(v.len().saturating_sub(1));
        v.get(i).copied().unwrap_or(0)
    }

    /// Fraction of walks with `chi` count at least `threshold`.
    pub fn chi_at_least(&self, threshold: f64) -> f64 {
        let n = self.chi_counts.len().max(1) as f64;
        self.chi_counts.iter().filter(|c| **c as f64 >= threshold).count() as f64 / n
    }
}

/// Runs `params.walks` walks from `z` and records, per walk, which
/// sub-boxes of `D(r, R)` are visited.
pub fn subbox_visit_stats<R: Rng + ?Sized>(
    r: u32,
    big_r: u32,
    dim: usize,
    z: &Point,
    params: &SubboxParams,
    rng: &mut R,
) -> Result<SubboxStats, PotentialError> {
    if r == 0 || r > big_r {
        return Err(PotentialError::Parameters("need 1 <= r <= R".into()));
    }
    if dim < 3 {
        return Err(PotentialError::LowDimension(dim));
    }
    if z.sup_norm() > big_r {
        return Err(PotentialError::Parameters("start must lie in ball(R)".into()));
    }
    let d_size = subbox_centers(dim, r, big_r).len();
    let reach = 2 * big_r + r;
    let outer = params.outer_factor.max(2) * big_r;
    let horizon = (big_r as u64 * big_r as u64).saturating_sub(r as u64 * r as u64);
    let inner = 2 * big_r;
    let exponent = 2.0 - dim as f64;
    let mut stats = SubboxStats { d_size, zeta_counts: Vec::new(), chi_counts: Vec::new(), pair_sums: Vec::new() };
    let mut seen: FxHashSet<Point> = FxHashSet::default();
    let mut order: Vec<Point> = Vec::new();
    for _ in 0..params.walks {
        seen.clear();
        order.clear();
        let mut pos = *z;
        let mut t = 0u64;
        let mut chi_open = true;
        let mut chi = 0u32;
        loop {
            if let Some(y) = covering_center(&pos, dim, r) {
                if y.sup_norm() <= reach && seen.insert(y) {
                    order.push(y);
                    if chi_open {
                        chi += 1;
                    }
                }
            }
            pos.step(random_dir(rng, dim));
            t += 1;
            if chi_open && (pos.sup_norm() > inner || t >= horizon) {
                chi_open = false;
            }
            if pos.sup_norm() > outer {
                break;
            }
        }
        let mut pair = 0.0;
        for (i, a) in order.iter().enumerate() {
            for b in &order[i + 1..] {
                pair += 2.0 * (a.sup_dist(b) as f64).powf(exponent);
            }
        }
        stats.zeta_counts.push(order.len() as u32);
        stats.chi_counts.push(chi);
        stats.pair_sums.push(pair);
    }
    Ok(stats)
}
