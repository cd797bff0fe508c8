//! The experiment kinds and their parameters.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ExperimentConfig, HarnessError, Issue, ModelConfig, Outcome};
use crate::lattice::{Boundary, BoxGeometry, Point, PointSet};
use crate::lengths::LengthDistribution;
use crate::percolation::{
    crossing, explore_cluster_of_origin, label_clusters, target_shooting_estimate, vc_bisection, BisectionParams, CrossingModel,
    ShootingInstance,
};
use crate::potential::{
    capacity, equilibrium_measure, green, green_asymptotic, green_exact_small_box, hitting_probability, hitting_sum, led_bracket,
    subbox_visit_stats, CapacityMethod, CapacityParams, DisplacementGreenTable, EscapeParams, EscapeRule, GreenParams, HittingParams,
    HittingSumMode, SubboxParams, TargetSet,
};
use crate::rng::{self, Rng};
use crate::scales::{check_good_sequence, generate_candidate_sequence, ln_base_scale, scan_ell0, check_scales, Scale, ScaleParams};
use crate::stats::{variance_stderr, wilson, MeanVar, Z95};
use crate::walk::{walk, RangeTable};
use crate::worms::{campbell_bilinear, campbell_linear, enumerate_cloud_moments, generate_cloud, AnimalLaw, GenerationPolicy};

fn run_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Run(e.to_string())
}

fn point(coords: &[i32]) -> Point {
    Point::new(coords)
}

/// Runs `f` on every replica in parallel chunks; results come back in
/// replica order whatever the scheduling. Stops early, flagged, once
/// `budget.max_seconds` has passed.
fn replicas<T: Send>(
    cfg: &ExperimentConfig,
    tag: &str,
    f: impl Fn(u64, &mut Rng) -> Result<T, HarnessError> + Sync,
) -> Result<(Vec<T>, bool), HarnessError> {
    const CHUNK: u64 = 64;
    let n = cfg.budget.replicas;
    let started = Instant::now();
    let mut out = Vec::with_capacity(n as usize);
    let mut next = 0;
    while next < n {
        let end = (next + CHUNK).min(n);
        let chunk: Vec<T> = (next..end).into_par_iter().map(|i| f(i, &mut rng::stream(cfg.seed, tag, i))).collect::<Result<_, _>>()?;
        out.extend(chunk);
        next = end;
        if let Some(limit) = cfg.budget.max_seconds {
            if next < n && started.elapsed().as_secs_f64() > limit {
                return Ok((out, true));
            }
        }
    }
    Ok((out, false))
}

fn seed_of(cfg: &ExperimentConfig, tag: &str, i: u64) -> u64 {
    rng::derived_seed(cfg.seed, tag, i)
}

fn mv_json(m: &MeanVar) -> Value {
    json!({ "mean": m.mean(), "stderr": m.stderr(), "n": m.n })
}

/// `m_1 = E|H|` for worms, from exact expected ranges.
fn mean_animal_size(dim: usize, dist: &LengthDistribution) -> Result<f64, HarnessError> {
    const EXACT: usize = 2048;
    let hi = dist.cap().or(dist.support_max()).unwrap_or_else(|| dist.tail_quantile(1e-15));
    if dim < 3 && hi > EXACT as u64 {
        return Err(HarnessError::Run(format!("mean range in d = {dim} needs lengths <= {EXACT}")));
    }
    Ok(RangeTable::new(dim, EXACT).mean_range_under(dist))
}

fn need_v(cfg: &ExperimentConfig, out: &mut Vec<Issue>) {
    if cfg.model.v.is_none() {
        out.push(Issue { key: "model.v".into(), message: format!("required for kind {}", cfg.kind) });
    }
}

fn need_transient(cfg: &ExperimentConfig, out: &mut Vec<Issue>) {
    if cfg.model.dim < 3 {
        out.push(Issue { key: "model.dim".into(), message: format!("kind {} needs d >= 3", cfg.kind) });
    }
}

fn need_coords(key: &str, c: &Option<Vec<i32>>, dim: usize, out: &mut Vec<Issue>) {
    if let Some(c) = c {
        if c.len() != dim {
            out.push(Issue { key: key.into(), message: format!("needs {dim} coordinates") });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DensityParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubcriticalParams {
    /// Target branching factor `(2d+1) v m_2`, used when `model.v` is unset.
    pub lambda: f64,
    /// Longest worm for the exact size moments.
    pub max_len_exact: u64,
    pub animal_budget: usize,
    pub axis: usize,
}

impl Default for SubcriticalParams {
    fn default() -> Self {
        SubcriticalParams { lambda: 0.5, max_len_exact: 9, animal_budget: 1_000_000, axis: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VcSweepParams {
    pub sides: Vec<u32>,
    pub v_lo: f64,
    pub v_hi: f64,
    pub max_iter: u32,
    pub max_widen: u32,
    pub target: f64,
    pub axis: usize,
}

impl Default for VcSweepParams {
    fn default() -> Self {
        let b = BisectionParams::default();
        VcSweepParams { sides: vec![8, 16], v_lo: b.v_lo, v_hi: b.v_hi, max_iter: b.max_iter, max_widen: b.max_widen, target: b.target, axis: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityKindParams {
    pub radii: Vec<u32>,
    pub method: CapacityMethod,
    pub rule: EscapeRule,
    pub walks_per_site: u64,
    pub max_enumerated: u64,
}

impl Default for CapacityKindParams {
    fn default() -> Self {
        CapacityKindParams {
            radii: vec![2, 4],
            method: CapacityMethod::EquilibriumMass,
            rule: EscapeRule::Margin { margin: 16 },
            walks_per_site: 2000,
            max_enumerated: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreenKindParams {
    /// Points `x` for `g(x, o)`; defaults to `k e_1` for `k = 0..4`.
    pub points: Option<Vec<Vec<i32>>>,
    pub kill_radius: u32,
    /// Use the exact small-box series with this many steps instead of walks.
    pub exact_steps: Option<usize>,
}

impl Default for GreenKindParams {
    fn default() -> Self {
        GreenKindParams { points: None, kill_radius: 64, exact_steps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlnRangeParams {
    /// Walk lengths in sites.
    pub ns: Vec<usize>,
    pub margin: u32,
}

impl Default for LlnRangeParams {
    fn default() -> Self {
        LlnRangeParams { ns: vec![200, 2000], margin: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LedParams {
    pub radius: u32,
    /// Start point; defaults to `20 e_1`.
    pub x: Option<Vec<i32>>,
    pub near_radius: u32,
    pub kill_radius: u32,
    pub table_walks: u64,
    pub cap_walks_per_site: u64,
    pub margin: u32,
}

impl Default for LedParams {
    fn default() -> Self {
        LedParams { radius: 3, x: None, near_radius: 2, kill_radius: 16, table_walks: 20_000, cap_walks_per_site: 2000, margin: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HittingSumsParams {
    pub r: u32,
    pub ell: usize,
    /// `K = ball(center, target_radius)`.
    pub target_radius: u32,
    pub center: Option<Vec<i32>>,
    pub mode: HittingSumMode,
}

impl Default for HittingSumsParams {
    fn default() -> Self {
        HittingSumsParams { r: 2, ell: 256, target_radius: 2, center: None, mode: HittingSumMode::Upper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubboxesParams {
    pub r: u32,
    pub big_r: u32,
    pub outer_factor: u32,
    pub start: Option<Vec<i32>>,
}

impl Default for SubboxesParams {
    fn default() -> Self {
        SubboxesParams { r: 1, big_r: 6, outer_factor: 8, start: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampbellParams {
    pub region_size: u32,
    pub enumeration_tol: f64,
    pub enumeration_budget: u64,
}

impl Default for CampbellParams {
    fn default() -> Self {
        CampbellParams { region_size: 3, enumeration_tol: 1e-6, enumeration_budget: 20_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalesKindParams {
    pub delta: f64,
    pub n_max: u32,
    pub n0_max: u32,
    pub r0_star: f64,
    pub gamma0: f64,
    pub delta_low: f64,
    pub delta_up: f64,
    pub alpha_low: f64,
    pub psi: f64,
    pub s: f64,
    pub lambda: f64,
    /// Check this sequence instead of generating one.
    pub sequence: Option<Vec<u64>>,
    /// Also run the generator at each of these `ell0` (log-log laws only).
    pub ell0_grid: Option<Vec<u64>>,
}

impl Default for ScalesKindParams {
    fn default() -> Self {
        let p = ScaleParams::default();
        ScalesKindParams {
            delta: 0.25,
            n_max: 40,
            n0_max: 10,
            r0_star: p.r0_star,
            gamma0: p.gamma0,
            delta_low: p.delta_low,
            delta_up: p.delta_up,
            alpha_low: p.alpha_low,
            psi: p.psi,
            s: p.s,
            lambda: p.lambda,
            sequence: None,
            ell0_grid: None,
        }
    }
}

impl ScalesKindParams {
    pub fn scale_params(&self, model: &ModelConfig) -> ScaleParams {
        ScaleParams {
            r0_star: self.r0_star,
            gamma0: self.gamma0,
            delta_low: self.delta_low,
            delta_up: self.delta_up,
            alpha_low: self.alpha_low,
            psi: self.psi,
            s: self.s,
            lambda: self.lambda,
            v: model.v.unwrap_or(1.0),
            dim: model.dim as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetShootingParams {
    pub big_r: u32,
    pub beta: f64,
    /// `H = ball(h_center, h_radius)`; the center defaults to `3R e_1`.
    pub h_center: Option<Vec<i32>>,
    pub h_radius: u32,
    /// Walks per exposed site for `cap(H)`; zero skips the s-analogue.
    pub cap_walks_per_site: u64,
}

impl Default for TargetShootingParams {
    fn default() -> Self {
        TargetShootingParams { big_r: 2, beta: 512.0, h_center: None, h_radius: 1, cap_walks_per_site: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreParams {
    pub animal_budget: usize,
}

impl Default for ExploreParams {
    fn default() -> Self {
        ExploreParams { animal_budget: 1_000_000 }
    }
}

/// Parameters of each experiment kind, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub enum KindParams {
    Density(DensityParams),
    Subcritical(SubcriticalParams),
    VcSweep(VcSweepParams),
    Capacity(CapacityKindParams),
    Green(GreenKindParams),
    LlnRange(LlnRangeParams),
    Led(LedParams),
    HittingSums(HittingSumsParams),
    Subboxes(SubboxesParams),
    Campbell(CampbellParams),
    Scales(ScalesKindParams),
    TargetShooting(TargetShootingParams),
    Explore(ExploreParams),
}

impl KindParams {
    pub fn to_value(&self) -> Value {
        let v = match self {
            KindParams::Density(p) => serde_json::to_value(p),
            KindParams::Subcritical(p) => serde_json::to_value(p),
            KindParams::VcSweep(p) => serde_json::to_value(p),
            KindParams::Capacity(p) => serde_json::to_value(p),
            KindParams::Green(p) => serde_json::to_value(p),
            KindParams::LlnRange(p) => serde_json::to_value(p),
            KindParams::Led(p) => serde_json::to_value(p),
            KindParams::HittingSums(p) => serde_json::to_value(p),
            KindParams::Subboxes(p) => serde_json::to_value(p),
            KindParams::Campbell(p) => serde_json::to_value(p),
            KindParams::Scales(p) => serde_json::to_value(p),
            KindParams::TargetShooting(p) => serde_json::to_value(p),
            KindParams::Explore(p) => serde_json::to_value(p),
        };
        v.expect("params serialize")
    }

    pub fn validate(&self, cfg: &ExperimentConfig) -> Vec<Issue> {
        let mut out = Vec::new();
        let dim = cfg.model.dim;
        let free = cfg.model.boundary == Boundary::Free;
        match self {
            KindParams::Density(_) => need_v(cfg, &mut out),
            KindParams::Subcritical(p) => {
                if !free {
                    out.push(Issue { key: "model.boundary".into(), message: "crossing needs a free window".into() });
                }
                if !(p.lambda > 0.0 && p.lambda < 1.0) {
                    out.push(Issue { key: "params.lambda".into(), message: "must lie in (0, 1)".into() });
                }
                if p.axis >= dim {
                    out.push(Issue { key: "params.axis".into(), message: "out of range".into() });
                }
            }
            KindParams::VcSweep(p) => {
                if !free {
                    out.push(Issue { key: "model.boundary".into(), message: "crossing needs a free window".into() });
                }
                if p.sides.is_empty() || p.sides.contains(&0) {
                    out.push(Issue { key: "params.sides".into(), message: "need at least one positive side".into() });
                }
                if !(p.v_lo > 0.0 && p.v_lo < p.v_hi && p.v_hi.is_finite()) {
                    out.push(Issue { key: "params.v_lo".into(), message: "need 0 < v_lo < v_hi".into() });
                }
                if !(p.target > 0.0 && p.target < 1.0) {
                    out.push(Issue { key: "params.target".into(), message: "must lie in (0, 1)".into() });
                }
                if p.axis >= dim {
                    out.push(Issue { key: "params.axis".into(), message: "out of range".into() });
                }
            }
            KindParams::Capacity(p) => {
                need_transient(cfg, &mut out);
                if p.radii.is_empty() {
                    out.push(Issue { key: "params.radii".into(), message: "need at least one radius".into() });
                }
            }
            KindParams::Green(p) => {
                need_transient(cfg, &mut out);
                for (i, c) in p.points.iter().flatten().enumerate() {
                    if c.len() != dim {
                        out.push(Issue { key: format!("params.points[{i}]"), message: format!("needs {dim} coordinates") });
                    } else if point(c).sup_norm() >= p.kill_radius && p.exact_steps.is_none() {
                        out.push(Issue { key: format!("params.points[{i}]"), message: "must lie inside the kill radius".into() });
                    }
                }
            }
            KindParams::LlnRange(p) => {
                need_transient(cfg, &mut out);
                if p.ns.is_empty() || p.ns.contains(&0) {
                    out.push(Issue { key: "params.ns".into(), message: "need positive walk lengths".into() });
                }
            }
            KindParams::Led(p) => {
                need_transient(cfg, &mut out);
                need_coords("params.x", &p.x, dim, &mut out);
                if p.near_radius >= p.kill_radius {
                    out.push(Issue { key: "params.near_radius".into(), message: "must be below kill_radius".into() });
                }
            }
            KindParams::HittingSums(p) => {
                need_transient(cfg, &mut out);
                need_coords("params.center", &p.center, dim, &mut out);
                if p.r == 0 {
                    out.push(Issue { key: "params.r".into(), message: "must be >= 1".into() });
                }
            }
            KindParams::Subboxes(p) => {
                need_transient(cfg, &mut out);
                need_coords("params.start", &p.start, dim, &mut out);
                if p.r == 0 || p.r > p.big_r {
                    out.push(Issue { key: "params.r".into(), message: "need 1 <= r <= big_r".into() });
                }
            }
            KindParams::Campbell(p) => {
                need_v(cfg, &mut out);
                if p.region_size == 0 {
                    out.push(Issue { key: "params.region_size".into(), message: "must be >= 1".into() });
                }
                if let Ok(d) = cfg.model.dist.build() {
                    if d.support_max().or(d.cap()).is_none() {
                        out.push(Issue { key: "model.dist".into(), message: "the enumeration oracle needs bounded lengths".into() });
                    }
                }
            }
            KindParams::Scales(p) => {
                if let Err(e) = p.scale_params(&cfg.model).validate() {
                    out.push(Issue { key: "params".into(), message: e.to_string() });
                }
                if !(p.delta > 0.0) {
                    out.push(Issue { key: "params.delta".into(), message: "must be > 0".into() });
                }
                if p.n_max == 0 {
                    out.push(Issue { key: "params.n_max".into(), message: "must be >= 1".into() });
                }
            }
            KindParams::TargetShooting(p) => {
                need_v(cfg, &mut out);
                need_coords("params.h_center", &p.h_center, dim, &mut out);
                if p.big_r == 0 || !(p.beta > 0.0) {
                    out.push(Issue { key: "params.big_r".into(), message: "need big_r >= 1 and beta > 0".into() });
                }
            }
            KindParams::Explore(_) => need_v(cfg, &mut out),
        }
        out
    }

    pub(crate) fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
        match self {
            KindParams::Density(_) => run_density(cfg),
            KindParams::Subcritical(p) => run_subcritical(cfg, p),
            KindParams::VcSweep(p) => run_vc_sweep(cfg, p),
            KindParams::Capacity(p) => run_capacity(cfg, p),
            KindParams::Green(p) => run_green(cfg, p),
            KindParams::LlnRange(p) => run_lln_range(cfg, p),
            KindParams::Led(p) => run_led(cfg, p),
            KindParams::HittingSums(p) => run_hitting_sums(cfg, p),
            KindParams::Subboxes(p) => run_subboxes(cfg, p),
            KindParams::Campbell(p) => run_campbell(cfg, p),
            KindParams::Scales(p) => run_scales(cfg, p),
            KindParams::TargetShooting(p) => run_target_shooting(cfg, p),
            KindParams::Explore(p) => run_explore(cfg, p),
        }
    }
}

fn run_density(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let m = &cfg.model;
    let geom = m.window()?;
    let dist = m.length_law()?;
    let policy = m.policy(&dist);
    let law = AnimalLaw::Worms(dist.clone());
    let v = m.v.expect("validated");
    let (rows, partial) = replicas(cfg, "density", |i, r| {
        let cloud = generate_cloud(&geom, v, &law, policy, r).map_err(run_err)?;
        let trace = cloud.trace();
        let n = geom.num_sites();
        // nearest-neighbor covariance along the first axis
        let (mut pairs, mut both) = (0u64, 0u64);
        for idx in 0..n {
            if let Some(j) = geom.neighbor(idx, 0) {
                pairs += 1;
                both += (trace.contains(idx) && trace.contains(j)) as u64;
            }
        }
        let rho = trace.len() as f64 / n as f64;
        let nn_cov = both as f64 / pairs.max(1) as f64 - rho * rho;
        Ok(json!({
            "replica": i, "seed": seed_of(cfg, "density", i), "v": v,
            "occupied": trace.len(), "sites": n, "density": rho, "nn_cov": nn_cov,
            "truncation_events": cloud.truncation_events,
        }))
    })?;
    let density: MeanVar = rows.iter().map(|r| r["density"].as_f64().unwrap()).collect();
    let cov: MeanVar = rows.iter().map(|r| r["nn_cov"].as_f64().unwrap()).collect();
    let m1 = mean_animal_size(m.dim, &dist)?;
    let expected = 1.0 - (-v * m1).exp();
    let summary = json!({
        "v": v, "m1": m1, "expected_density": expected,
        "density": mv_json(&density),
        "z_score": (density.mean() - expected) / density.stderr(),
        "nn_cov": mv_json(&cov),
    });
    Ok(Outcome {
        rows,
        columns: vec!["replica", "seed", "v", "occupied", "sites", "density", "nn_cov", "truncation_events"],
        summary,
        partial,
    })
}

fn run_subcritical(cfg: &ExperimentConfig, p: &SubcriticalParams) -> Result<Outcome, HarnessError> {
    let m = &cfg.model;
    let geom = m.window()?;
    let dist = m.length_law()?;
    let policy = m.policy(&dist);
    let law = AnimalLaw::Worms(dist);
    let (m1, m2) = law.exact_size_moments(m.dim, p.max_len_exact).map_err(run_err)?;
    let branching = (2 * m.dim + 1) as f64;
    let v = m.v.unwrap_or(p.lambda / (branching * m2));
    let big_lambda = branching * v * m2;
    let (rows, partial) = replicas(cfg, "subcritical", |i, r| {
        let cloud = generate_cloud(&geom, v, &law, policy, r).map_err(run_err)?;
        let crossed = crossing(&label_clusters(&cloud.trace()), &geom, p.axis).map_err(run_err)?;
        let ex = explore_cluster_of_origin(&cloud, &Point::ORIGIN, p.animal_budget);
        Ok(json!({
            "replica": i, "seed": seed_of(cfg, "subcritical", i), "crossed": crossed as u8,
            "animals": ex.animal_count, "cluster_sites": ex.cluster.len(), "layers": ex.layers.len(), "truncated": ex.truncated as u8,
        }))
    })?;
    let crossings = rows.iter().filter(|r| r["crossed"] == 1).count() as u64;
    let animals: MeanVar = rows.iter().map(|r| r["animals"].as_f64().unwrap()).collect();
    let truncated = rows.iter().any(|r| r["truncated"] == 1);
    let summary = json!({
        "v": v, "m1": m1, "m2": m2, "branching_factor": big_lambda,
        "crossing": wilson(crossings, rows.len() as u64, Z95),
        "animals": mv_json(&animals),
        "bound_series": big_lambda / (1.0 - big_lambda),
        "bound_exploration": v * m1 / (1.0 - big_lambda),
    });
    Ok(Outcome {
        rows,
        columns: vec!["replica", "seed", "crossed", "animals", "cluster_sites", "layers", "truncated"],
        summary,
        partial: partial || truncated,
    })
}

fn run_vc_sweep(cfg: &ExperimentConfig, p: &VcSweepParams) -> Result<Outcome, HarnessError> {
    let dist = cfg.model.length_law()?;
    let law = AnimalLaw::Worms(dist.clone());
    let policy = cfg.model.policy(&dist);
    let models: Vec<CrossingModel> = p
        .sides
        .iter()
        .map(|s| {
            let mc = ModelConfig { side: *s, ..cfg.model.clone() };
            Ok(CrossingModel { geom: mc.window()?, law: law.clone(), policy, axis: p.axis })
        })
        .collect::<Result<_, HarnessError>>()?;
    let bp = BisectionParams {
        v_lo: p.v_lo,
        v_hi: p.v_hi,
        replicas: cfg.budget.replicas,
        max_iter: p.max_iter,
        max_widen: p.max_widen,
        target: p.target,
    };
    let columns = vec!["side", "v", "crossings", "replicas", "p_hat", "ci_lo", "ci_hi", "seed0"];
    match vc_bisection(&models, &bp, cfg.seed) {
        Ok(res) => {
            let rows = res
                .rows
                .iter()
                .map(|e| {
                    json!({ "side": e.side, "v": e.v, "crossings": e.crossings, "replicas": e.replicas,
                            "p_hat": e.p.p_hat, "ci_lo": e.p.ci_lo, "ci_hi": e.p.ci_hi, "seed0": e.seed0 })
                })
                .collect();
            Ok(Outcome { rows, columns, summary: json!({ "brackets": res.brackets }), partial: false })
        }
        Err(crate::percolation::PercolationError::NonBracketing { lo, hi }) => Ok(Outcome {
            rows: Vec::new(),
            columns,
            summary: json!({ "error": "no bracket of the target found", "lo": lo, "hi": hi }),
            partial: true,
        }),
        Err(e) => Err(run_err(e)),
    }
}

fn run_capacity(cfg: &ExperimentConfig, p: &CapacityKindParams) -> Result<Outcome, HarnessError> {
    let dim = cfg.model.dim;
    let mut params = CapacityParams::default();
    params.escape = EscapeParams { rule: p.rule, walks_per_site: p.walks_per_site, max_enumerated: p.max_enumerated, sampled_walks: cfg.budget.walks };
    params.inversion.walks = cfg.budget.walks;
    params.energy.walks = cfg.budget.walks;
    let mut rows = Vec::new();
    let mut caps = Vec::new();
    for (i, r) in p.radii.iter().enumerate() {
        let k = TargetSet::ball(dim, Point::ORIGIN, *r);
        let est = capacity(&k, p.method, &params, &mut rng::stream(cfg.seed, "capacity", i as u64)).map_err(run_err)?;
        caps.push((*r, est));
        rows.push(json!({
            "radius": r, "method": serde_json::to_value(p.method).unwrap(), "value": est.value, "stderr": est.stderr,
            "bias_bound": est.bias_bound, "samples": est.samples, "seed": seed_of(cfg, "capacity", i as u64),
        }));
    }
    let mut ratios = Vec::new();
    for (r, a) in &caps {
        if let Some((_, b)) = caps.iter().find(|(q, _)| *q == 2 * r) {
            let ratio = b.value / a.value;
            let se = ratio * ((a.stderr / a.value).powi(2) + (b.stderr / b.value).powi(2)).sqrt();
            ratios.push(json!({ "radius": r, "ratio": ratio, "stderr": se, "scaling": 2f64.powi(dim as i32 - 2) }));
        }
    }
    Ok(Outcome {
        rows,
        columns: vec!["radius", "method", "value", "stderr", "bias_bound", "samples", "seed"],
        summary: json!({ "doubling_ratios": ratios }),
        partial: false,
    })
}

fn run_green(cfg: &ExperimentConfig, p: &GreenKindParams) -> Result<Outcome, HarnessError> {
    let dim = cfg.model.dim;
    let pts: Vec<Point> = match &p.points {
        Some(list) => list.iter().map(|c| point(c)).collect(),
        None => (0..4).map(|k| Point::axis(0, k)).collect(),
    };
    let params = GreenParams { kill_radius: p.kill_radius, walks: cfg.budget.walks };
    let mut rows = Vec::new();
    for (i, x) in pts.iter().enumerate() {
        let est = match p.exact_steps {
            Some(t) => green_exact_small_box(dim, x, &Point::ORIGIN, t),
            None => green(x, &Point::ORIGIN, dim, &params, &mut rng::stream(cfg.seed, "green", i as u64)),
        }
        .map_err(run_err)?;
        let asym = if *x == Point::ORIGIN { Value::Null } else { json!(green_asymptotic(dim, x)) };
        rows.push(json!({
            "x": x.to_string(), "value": est.value, "stderr": est.stderr,
            "method": serde_json::to_value(est.method).unwrap(), "asymptotic": asym, "seed": seed_of(cfg, "green", i as u64),
        }));
    }
    Ok(Outcome { rows, columns: vec!["x", "value", "stderr", "method", "asymptotic", "seed"], summary: json!({}), partial: false })
}

fn range_capacity(dim: usize, n: usize, margin: u32, walks: u64, r: &mut Rng) -> Result<(usize, f64, f64), HarnessError> {
    let traj = walk(dim, Point::ORIGIN, n.saturating_sub(1), r);
    let range = PointSet::from_points(dim, traj.positions());
    let k = TargetSet::points(&range);
    let ep = EscapeParams { rule: EscapeRule::Margin { margin }, walks_per_site: 1, max_enumerated: 0, sampled_walks: walks };
    let em = equilibrium_measure(&k, &ep, r).map_err(run_err)?;
    Ok((range.len(), em.total, em.total_stderr))
}

fn run_lln_range(cfg: &ExperimentConfig, p: &LlnRangeParams) -> Result<Outcome, HarnessError> {
    let dim = cfg.model.dim;
    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    let mut partial = false;
    for &n in &p.ns {
        let tag = format!("lln-range-{n}");
        let (rs, part) = replicas(cfg, &tag, |i, r| {
            let (size, cap, se) = range_capacity(dim, n, p.margin, cfg.budget.walks, r)?;
            Ok(json!({ "n": n, "replica": i, "seed": seed_of(cfg, &tag, i), "range_size": size, "cap": cap, "stderr": se, "ratio": cap / n as f64 }))
        })?;
        partial |= part;
        let ratio: MeanVar = rs.iter().map(|r| r["ratio"].as_f64().unwrap()).collect();
        per_n.push((n, ratio));
        rows.extend(rs);
    }
    let rel = match (per_n.first(), per_n.last()) {
        (Some(a), Some(b)) if per_n.len() > 1 => json!((b.1.mean() - a.1.mean()).abs() / b.1.mean()),
        _ => Value::Null,
    };
    let summary = json!({
        "ratios": per_n.iter().map(|(n, m)| json!({ "n": n, "ratio": mv_json(m) })).collect::<Vec<_>>(),
        "relative_difference": rel,
    });
    Ok(Outcome { rows, columns: vec!["n", "replica", "seed", "range_size", "cap", "stderr", "ratio"], summary, partial })
}

/// The LED check: the hitting probability from `x` against the bracket
/// `[cap min_y g(x, y), cap max_y g(x, y)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedReport {
    pub cap: f64,
    pub cap_stderr: f64,
    pub cap_bias: f64,
    pub hit: f64,
    pub hit_stderr: f64,
    pub lo: f64,
    pub hi: f64,
    /// Joint standard error of the comparison.
    pub joint_stderr: f64,
    pub inside: bool,
}

pub fn led_check(dim: usize, radius: u32, x: &Point, p: &LedParams, walks: u64, seed: u64) -> Result<LedReport, HarnessError> {
    let k = TargetSet::ball(dim, Point::ORIGIN, radius);
    let sites = PointSet::ball(dim, &Point::ORIGIN, radius);
    let ep = EscapeParams { rule: EscapeRule::Margin { margin: p.margin }, walks_per_site: p.cap_walks_per_site, max_enumerated: u64::MAX, sampled_walks: walks };
    let em = equilibrium_measure(&TargetSet::points(&sites), &ep, &mut rng::stream(seed, "led-cap", 0)).map_err(run_err)?;
    let table = DisplacementGreenTable::estimate(dim, p.near_radius, p.kill_radius, p.table_walks, &mut rng::stream(seed, "led-table", 0))
        .map_err(run_err)?;
    let (lo, hi) = led_bracket(x, sites.points(), em.total, &table).map_err(run_err)?;
    let hp = HittingParams { walks, ..HittingParams::default() };
    let h = hitting_probability(x, &k, em.total, &hp, &mut rng::stream(seed, "led-hit", 0)).map_err(run_err)?;
    // the bracket moves with cap; its relative error carries over
    let rel = em.total_stderr / em.total;
    let joint = (h.stderr.powi(2) + (hi * rel).powi(2)).sqrt();
    let slack = 3.0 * joint + hi * em.bias_bound / em.total;
    let inside = h.value >= lo - slack && h.value <= hi + slack;
    Ok(LedReport { cap: em.total, cap_stderr: em.total_stderr, cap_bias: em.bias_bound, hit: h.value, hit_stderr: h.stderr, lo, hi, joint_stderr: joint, inside })
}

fn run_led(cfg: &ExperimentConfig, p: &LedParams) -> Result<Outcome, HarnessError> {
    let dim = cfg.model.dim;
    let x = p.x.as_ref().map(|c| point(c)).unwrap_or_else(|| Point::axis(0, 20));
    let rep = led_check(dim, p.radius, &x, p, cfg.budget.walks, cfg.seed)?;
    let mut row = serde_json::to_value(rep).unwrap();
    row["x"] = json!(x.to_string());
    Ok(Outcome {
        rows: vec![row.clone()],
        columns: vec!["x", "cap", "cap_stderr", "cap_bias", "hit", "hit_stderr", "lo", "hi", "joint_stderr", "inside"],
        summary: row,
        partial: false,
    })
}

fn run_hitting_sums(cfg: &ExperimentConfig, p: &HittingSumsParams) -> Result<Outcome, HarnessError> {
    let dim = cfg.model.dim;
    let c = p.center.as_ref().map(|c| point(c)).unwrap_or(Point::ORIGIN);
    let k = TargetSet::ball(dim, c, p.target_radius);
    let est = hitting_sum(&k, p.ell, p.r, &p.mode, cfg.budget.walks, &mut rng::stream(cfg.seed, "hitting-sums", 0)).map_err(run_err)?;
    let mode = match p.mode {
        HittingSumMode::Upper => "upper",
        HittingSumMode::Lower { .. } => "lower",
    };
    let scale = p.ell as f64 * (p.r as f64).powi(dim as i32 - 2);
    let row = json!({
        "mode": mode, "ell": est.ell, "r": p.r, "value": est.value, "stderr": est.stderr,
        "samples": est.samples, "per_ell_r_d2": est.value / scale,
    });
    Ok(Outcome { rows: vec![row.clone()], columns: vec!["mode", "ell", "r", "value", "stderr", "samples", "per_ell_r_d2"], summary: row, partial: false })
}

fn run_subboxes(cfg: &ExperimentConfig, p: &SubboxesParams) -> Result<Outcome, HarnessError> {
    let dim = cfg.model.dim;
    let z = p.start.as_ref().map(|c| point(c)).unwrap_or(Point::ORIGIN);
    let sp = SubboxParams { walks: cfg.budget.walks, outer_factor: p.outer_factor };
    let s = subbox_visit_stats(p.r, p.big_r, dim, &z, &sp, &mut rng::stream(cfg.seed, "subboxes", 0)).map_err(run_err)?;
    let (zeta, chi, pair) = (s.mean_zeta(), s.mean_chi(), s.mean_pair_sum());
    let row = json!({
        "r": p.r, "big_r": p.big_r, "d_size": s.d_size,
        "mean_zeta": zeta.mean(), "zeta_stderr": zeta.stderr(),
        "mean_chi": chi.mean(), "chi_stderr": chi.stderr(),
        "mean_pair_sum": pair.mean(), "pair_stderr": pair.stderr(),
        "chi_q10": s.chi_quantile(0.1),
    });
    Ok(Outcome {
        rows: vec![row.clone()],
        columns: vec!["r", "big_r", "d_size", "mean_zeta", "zeta_stderr", "mean_chi", "chi_stderr", "mean_pair_sum", "pair_stderr", "chi_q10"],
        summary: row,
        partial: false,
    })
}

fn run_campbell(cfg: &ExperimentConfig, p: &CampbellParams) -> Result<Outcome, HarnessError> {
    let v = cfg.model.v.expect("validated");
    let dist = cfg.model.length_law()?;
    // starts on a line of `region_size` sites; the functionals only see
    // starts and lengths, so the walk dimension plays no role
    let geom = BoxGeometry::new(1, p.region_size, Boundary::Free, Point::ORIGIN).map_err(run_err)?;
    let region: Vec<Point> = (0..p.region_size as i32).map(|i| Point::axis(0, i)).collect();
    let law = AnimalLaw::Worms(dist.clone());
    let policy = GenerationPolicy::PaddedWindow { margin: 0 };
    let (rows, partial) = replicas(cfg, "campbell", |i, r| {
        let cloud = generate_cloud(&geom, v, &law, policy, r).map_err(run_err)?;
        let linear: f64 = cloud.animals.iter().map(|a| a.length(&law) as f64).sum();
        let mut bilinear = 0u64;
        for a in &cloud.animals {
            bilinear += cloud.animals.iter().filter(|b| b.start == a.start).count() as u64;
        }
        Ok(json!({ "replica": i, "seed": seed_of(cfg, "campbell", i), "worms": cloud.animals.len(), "linear": linear, "bilinear": bilinear }))
    })?;
    let lin: Vec<f64> = rows.iter().map(|r| r["linear"].as_f64().unwrap()).collect();
    let bil: MeanVar = rows.iter().map(|r| r["bilinear"].as_f64().unwrap()).collect();
    let lin_mv: MeanVar = lin.iter().copied().collect();
    let (c_mean, c_var) = campbell_linear(v, &dist, &region, |_, l| l as f64);
    let (diag, off) = campbell_bilinear(v, &dist, &region, |a, b| (a.0 == b.0) as u8 as f64);
    let (e1, e2) =
        enumerate_cloud_moments(v, &dist, &region, |c| c.iter().map(|t| t.1 as f64).sum(), p.enumeration_tol, p.enumeration_budget)
            .map_err(run_err)?;
    let (b1, _) = enumerate_cloud_moments(
        v,
        &dist,
        &region,
        |c| c.iter().map(|a| c.iter().filter(|b| a.0 == b.0).count() as f64).sum(),
        p.enumeration_tol,
        p.enumeration_budget,
    )
    .map_err(run_err)?;
    let summary = json!({
        "linear_mean": mv_json(&lin_mv),
        "linear_var": { "value": lin_mv.variance(), "stderr": variance_stderr(&lin) },
        "bilinear": mv_json(&bil),
        "campbell": { "mean": c_mean, "var": c_var, "bilinear": diag + off },
        "enumeration": { "mean": e1, "var": e2 - e1 * e1, "bilinear": b1 },
    });
    Ok(Outcome { rows, columns: vec!["replica", "seed", "worms", "linear", "bilinear"], summary, partial })
}

fn run_scales(cfg: &ExperimentConfig, p: &ScalesKindParams) -> Result<Outcome, HarnessError> {
    let dist = cfg.model.length_law()?;
    let sp = p.scale_params(&cfg.model);
    let (scales, horizon, n0, cert, candidates, truncated) = match &p.sequence {
        Some(seq) => {
            let c = check_good_sequence(seq, &sp, &dist).map_err(|e| HarnessError::invalid("params.sequence", e.to_string()))?;
            let scales: Vec<Scale> = seq.iter().map(|r| Scale::exact(*r)).collect();
            (scales, seq.len().saturating_sub(2) as u32, None, c, 1, false)
        }
        None => {
            let rep = generate_candidate_sequence(&dist, &sp, p.delta, p.n_max, p.n0_max).map_err(run_err)?;
            match rep.found {
                Some(s) => (s.scales, s.horizon, Some(s.generator.unwrap().n0), s.certificate, rep.candidates, rep.truncated),
                None => {
                    // report the unshifted candidate at the largest horizon
                    let scales: Vec<Scale> = (0..p.n_max + 2).map(|n| Scale::from_ln(ln_base_scale(n, p.delta))).collect();
                    let c = check_scales(&scales, &sp, &dist).map_err(run_err)?;
                    (scales, p.n_max, None, c, rep.candidates, rep.truncated)
                }
            }
        }
    };
    let scan = match &p.ell0_grid {
        Some(grid) => match cfg.model.dist.spec {
            crate::lengths::LengthSpec::LogLogEps { epsilon, .. } => {
                Some(scan_ell0(epsilon, grid, &sp, p.delta, p.n_max, p.n0_max).map_err(run_err)?)
            }
            _ => return Err(HarnessError::invalid("params.ell0_grid", "needs a loglog length law")),
        },
        None => None,
    };
    let rows = cert
        .conditions
        .iter()
        .map(|c| {
            json!({
                "name": serde_json::to_value(c.name).unwrap(), "n": c.n, "lhs": c.lhs, "rhs": c.rhs,
                "ln_lhs": c.ln_lhs, "ln_rhs": c.ln_rhs, "margin": c.margin, "pass": c.pass as u8,
            })
        })
        .collect();
    let summary = json!({
        "sequence": scales,
        "horizon": horizon,
        "n0": n0,
        "all_pass": cert.all_pass,
        "regime": cert.regime,
        "conditions": cert.conditions,
        "params": cert.params,
        "dist": cert.dist,
        "candidates": candidates,
        "truncated": truncated,
        "ell0_scan": scan,
    });
    Ok(Outcome { rows, columns: vec!["name", "n", "lhs", "rhs", "ln_lhs", "ln_rhs", "margin", "pass"], summary, partial: truncated })
}

fn run_target_shooting(cfg: &ExperimentConfig, p: &TargetShootingParams) -> Result<Outcome, HarnessError> {
    let dim = cfg.model.dim;
    let dist = cfg.model.length_law()?;
    let inst = ShootingInstance { dim, y: Point::ORIGIN, big_r: p.big_r, beta: p.beta, v: cfg.model.v.expect("validated") };
    let hc = p.h_center.as_ref().map(|c| point(c)).unwrap_or_else(|| Point::axis(0, 3 * p.big_r as i32));
    let h = TargetSet::ball(dim, hc, p.h_radius);
    let cap = if p.cap_walks_per_site > 0 && dim >= 3 {
        let ep = EscapeParams { rule: EscapeRule::Margin { margin: 16 }, walks_per_site: p.cap_walks_per_site, max_enumerated: u64::MAX, sampled_walks: 0 };
        let sites = PointSet::ball(dim, &hc, p.h_radius);
        let em = equilibrium_measure(&TargetSet::points(&sites), &ep, &mut rng::stream(cfg.seed, "target-shooting-cap", 0));
        Some(em.map_err(run_err)?.total)
    } else {
        None
    };
    let rep = target_shooting_estimate(&inst, &h, &dist, cfg.budget.walks, cfg.budget.replicas, cap, &mut rng::stream(cfg.seed, "target-shooting", 0));
    let row = json!({
        "lambda_hat": rep.lambda_hat, "lambda_stderr": rep.lambda_stderr, "long_tail": rep.long_tail,
        "predicted": rep.predicted, "successes": rep.empirical.successes, "clouds": rep.empirical.trials,
        "p_hat": rep.empirical.p_hat, "ci_lo": rep.empirical.ci_lo, "ci_hi": rep.empirical.ci_hi,
        "cap_h": cap, "s_analogue": rep.s_analogue,
    });
    Ok(Outcome {
        rows: vec![row.clone()],
        columns: vec!["lambda_hat", "lambda_stderr", "long_tail", "predicted", "successes", "clouds", "p_hat", "ci_lo", "ci_hi", "cap_h", "s_analogue"],
        summary: row,
        partial: false,
    })
}

fn run_explore(cfg: &ExperimentConfig, p: &ExploreParams) -> Result<Outcome, HarnessError> {
    let m = &cfg.model;
    let geom = m.window()?;
    let dist = m.length_law()?;
    let policy = m.policy(&dist);
    let law = AnimalLaw::Worms(dist);
    let v = m.v.expect("validated");
    let (rows, partial) = replicas(cfg, "explore", |i, r| {
        let cloud = generate_cloud(&geom, v, &law, policy, r).map_err(run_err)?;
        let ex = explore_cluster_of_origin(&cloud, &Point::ORIGIN, p.animal_budget);
        let sizes: Vec<String> = ex.layers.iter().map(|l| l.len().to_string()).collect();
        Ok(json!({
            "replica": i, "seed": seed_of(cfg, "explore", i), "layers": ex.layers.len(), "animals": ex.animal_count,
            "cluster_sites": ex.cluster.len(), "truncated": ex.truncated as u8, "layer_animals": sizes.join(";"),
        }))
    })?;
    let animals: MeanVar = rows.iter().map(|r| r["animals"].as_f64().unwrap()).collect();
    let truncated = rows.iter().any(|r| r["truncated"] == 1);
    Ok(Outcome {
        rows,
        columns: vec!["replica", "seed", "layers", "animals", "cluster_sites", "truncated", "layer_animals"],
        summary: json!({ "v": v, "animals": mv_json(&animals), "any_truncated": truncated }),
        partial: partial || truncated,
    })
}
