//! Dirichlet energies of site measures and of random-walk local times.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{require_transient, DisplacementGreenTable, GreenTable, PotentialError};
use crate::lattice::Point;
use crate::stats::{neumaier_sum, MeanVar};
use crate::walk::{return_probabilities, walk};

/// A finite measure `scale * sum_i masses[i] delta_{sites[i]}`.
///
/// The scale is kept apart from the base masses so that rescaling never
/// touches the base arithmetic: `E(a mu) = (a a) S` where `S` is the same
/// base double sum as for `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeasure {
    pub sites: Vec<Point>,
    pub masses: Vec<f64>,
    pub scale: f64,
}

impl SiteMeasure {
    pub fn new(sites: Vec<Point>, masses: Vec<f64>) -> SiteMeasure {
        assert_eq!(sites.len(), masses.len(), "one mass per site");
        SiteMeasure { sites, masses, scale: 1.0 }
    }

    pub fn unit(x: Point) -> SiteMeasure {
        SiteMeasure::new(vec![x], vec![1.0])
    }

    pub fn uniform(sites: Vec<Point>) -> SiteMeasure {
        let w = 1.0 / sites.len().max(1) as f64;
        let n = sites.len();
        SiteMeasure::new(sites, vec![w; n])
    }

    /// Local time of a path: mass 1 per visit.
    pub fn local_time(path: impl IntoIterator<Item = Point>) -> SiteMeasure {
        let mut counts: rustc_hash::FxHashMap<Point, f64> = Default::default();
        let mut order = Vec::new();
        for p in path {
            let c = counts.entry(p).or_insert_with(|| {
                order.push(p);
                0.0
            });
            *c += 1.0;
        }
        let masses = order.iter().map(|p| counts[p]).collect();
        SiteMeasure::new(order, masses)
    }

    pub fn scaled(&self, a: f64) -> SiteMeasure {
        SiteMeasure { scale: self.scale * a, ..self.clone() }
    }

    pub fn total_mass(&self) -> f64 {
        self.scale * neumaier_sum(self.masses.iter().copied())
    }
}

/// `E(mu1, mu2) = sum_x sum_y g(x, y) mu1(x) mu2(y)`.
///
/// The base terms are sorted before a compensated sum, so the result does not
/// depend on the order of either support, and swapping the arguments gives
/// bit-identical output when the table is symmetric.
pub fn dirichlet_energy<G: GreenTable + ?Sized>(mu1: &SiteMeasure, mu2: &SiteMeasure, table: &G) -> Result<f64, PotentialError> {
    let mut terms = Vec::with_capacity(mu1.sites.len() * mu2.sites.len());
    for (x, a) in mu1.sites.iter().zip(&mu1.masses) {
        for (y, b) in mu2.sites.iter().zip(&mu2.masses) {
            let g = table.green(x, y)?;
            let ab = a * b;
            terms.push(g * ab);
        }
    }
    terms.sort_unstable_by(|p, q| p.total_cmp(q));
    let base = neumaier_sum(terms);
    let s = mu1.scale * mu2.scale;
    Ok(s * base)
}

/// `E(mu) = E(mu, mu)`.
pub fn energy<G: GreenTable + ?Sized>(mu: &SiteMeasure, table: &G) -> Result<f64, PotentialError> {
    dirichlet_energy(mu, mu, table)
}

/// `sum_{t, t' < n} g(X(t), X(t'))` for a path given as positions.
pub fn path_energy(path: &[Point], table: &DisplacementGreenTable) -> f64 {
    let mut total = 0.0;
    for (i, x) in path.iter().enumerate() {
        let mut row = 0.0;
        for y in &path[i + 1..] {
            row += table.at(&y.sub(x));
        }
        total += 2.0 * row;
    }
    total + path.len() as f64 * table.at(&Point::ORIGIN)
}

/// Exact `E_o[sum_{t, t' < n} g(X(t), X(t'))]`: `E g(X(t), X(t')) = g(o, o) -
/// sum_{s < |t - t'|} p_s(o, o)`, with `g(o, o)` supplied by the caller.
pub fn expected_local_time_energy(dim: usize, n: usize, g00: f64) -> Result<f64, PotentialError> {
    require_transient(dim)?;
    let u = return_probabilities(dim, n);
    // h[k] = g00 - sum_{s<k} u_s
    let mut h = Vec::with_capacity(n);
    let mut partial = 0.0;
    for k in 0..n {
        h.push(g00 - partial);
        partial += u[k];
    }
    let mut total = n as f64 * h[0];
    for (k, hk) in h.iter().enumerate().skip(1) {
        total += 2.0 * (n - k) as f64 * hk;
    }
    Ok(total)
}

/// Monte Carlo mean of the local-time energy of an `n`-site walk from `o`.
pub fn local_time_energy<R: Rng + ?Sized>(
    dim: usize,
    n: usize,
    replicas: u64,
    table: &DisplacementGreenTable,
    rng: &mut R,
) -> Result<MeanVar, PotentialError> {
    require_transient(dim)?;
    if table.dim() != dim {
        return Err(PotentialError::DimensionMismatch { expected: dim, got: table.dim() });
    }
    let mut mv = MeanVar::new();
    for _ in 0..replicas {
        let traj = walk(dim, Point::ORIGIN, n.saturating_sub(1), rng);
        let path: Vec<Point> = traj.positions().collect();
        mv.push(path_energy(&path, table));
    }
    Ok(mv)
}

/// One instance of the mutual energy `sum_{t=n}^{2n} sum_{t'=n'}^{2n'} g(X(t), X'(t'))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutualInstance {
    pub x: Point,
    pub x_prime: Point,
    pub n: usize,
    pub n_prime: usize,
}

impl MutualInstance {
    /// `n n' min{|x - x'|^{2-d}, (n + n')^{1-d/2}}` with the sup norm.
    pub fn envelope_shape(&self, dim: usize) -> f64 {
        let d = dim as f64;
        let sep = self.x.sup_dist(&self.x_prime) as f64;
        let spatial = if sep > 0.0 { sep.powf(2.0 - d) } else { f64::INFINITY };
        let temporal = ((self.n + self.n_prime) as f64).powf(1.0 - 0.5 * d);
        self.n as f64 * self.n_prime as f64 * spatial.min(temporal)
    }
}

/// Monte Carlo mean of the mutual local-time energy of two independent walks.
pub fn mutual_energy<R: Rng + ?Sized>(
    dim: usize,
    inst: &MutualInstance,
    replicas: u64,
    table: &DisplacementGreenTable,
    rng: &mut R,
) -> Result<MeanVar, PotentialError> {
    require_transient(dim)?;
    let mut mv = MeanVar::new();
    for _ in 0..replicas {
        let a: Vec<Point> = walk(dim, inst.x, 2 * inst.n, rng).positions().skip(inst.n).collect();
        let b: Vec<Point> = walk(dim, inst.x_prime, 2 * inst.n_prime, rng).positions().skip(inst.n_prime).collect();
        let mut s = 0.0;
        for p in &a {
            for q in &b {
                s += table.at(&q.sub(p));
            }
        }
        mv.push(s);
    }
    Ok(mv)
}
