//! Certifier and generator for good sequences of scales.
//!
//! A sequence `R_0 < ... < R_{N+1}` is good for a length law when
//!
//! * `R_0 >= R*_0`,
//! * `v sum_{l = D_low R_n^2}^{D_up R_{n+1}^2} l^2 m(l) >= alpha` for `n <= N`,
//! * `2^n gamma_0 <= psi R_n^{d-4}` for `n <= N`,
//! * `2^{N+1} gamma_0 s v R_{N+1}^4 P(L >= Lambda R_{N+1}^2) >= 2`.
//!
//! Scales up to `2^62` are handled as integers. Past that every condition is
//! evaluated on logarithms, which is the only way to look at the doubly
//! exponential sequences the generator produces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lengths::{LengthDistribution, LengthError, LengthSpec};

/// Largest scale kept as an integer.
pub const EXACT_LIMIT: u64 = 1 << 62;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalesError {
    #[error("scale sequence must be strictly increasing and positive (index {0})")]
    NotIncreasing(usize),
    #[error("scale sequence needs at least two entries")]
    TooShort,
    #[error("parameter {0} must be positive and finite")]
    BadParam(&'static str),
    #[error(transparent)]
    Length(#[from] LengthError),
}

/// The constants of the definition. None of them has a canonical value; the
/// defaults are one workable tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleParams {
    pub r0_star: f64,
    pub gamma0: f64,
    pub delta_low: f64,
    pub delta_up: f64,
    pub alpha_low: f64,
    pub psi: f64,
    pub s: f64,
    pub lambda: f64,
    pub v: f64,
    pub dim: u32,
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams {
            r0_star: 1.0,
            gamma0: 1.35,
            delta_low: 9600.0,
            delta_up: 0.5,
            alpha_low: 2.0,
            psi: 0.5,
            s: 1.0,
            lambda: 1025.0,
            v: 1.0,
            dim: 5,
        }
    }
}

impl ScaleParams {
    pub fn validate(&self) -> Result<(), ScalesError> {
        let named = [
            ("r0_star", self.r0_star),
            ("gamma0", self.gamma0),
            ("delta_low", self.delta_low),
            ("delta_up", self.delta_up),
            ("alpha_low", self.alpha_low),
            ("psi", self.psi),
            ("s", self.s),
            ("lambda", self.lambda),
            ("v", self.v),
        ];
        for (name, x) in named {
            if !(x > 0.0 && x.is_finite()) {
                return Err(ScalesError::BadParam(name));
            }
        }
        if self.dim == 0 {
            return Err(ScalesError::BadParam("dim"));
        }
        Ok(())
    }
}

/// One scale: the integer when it fits, and its logarithm always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub value: Option<u64>,
    pub ln: f64,
}

impl Scale {
    pub fn exact(r: u64) -> Scale {
        Scale { value: Some(r), ln: (r as f64).ln() }
    }

    /// A scale known only through `ln R`; stored exactly when small enough.
    pub fn from_ln(ln: f64) -> Scale {
        if ln <= (EXACT_LIMIT as f64).ln() {
            Scale::exact(ln.exp().round() as u64)
        } else {
            Scale { value: None, ln }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Exact,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionName {
    InitialScale,
    MomentWindow,
    GrowthBound,
    Shooting,
}

/// One checked inequality `lhs >= rhs`. The margin is `ln lhs - ln rhs`, so
/// the condition passes iff the margin is non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: ConditionName,
    pub n: Option<u32>,
    pub lhs: f64,
    pub rhs: f64,
    pub ln_lhs: f64,
    pub ln_rhs: f64,
    pub pass: bool,
    pub margin: f64,
}

impl Condition {
    fn log(name: ConditionName, n: Option<u32>, ln_lhs: f64, ln_rhs: f64) -> Condition {
        let margin = ln_lhs - ln_rhs;
        Condition { name, n, lhs: ln_lhs.exp(), rhs: ln_rhs.exp(), ln_lhs, ln_rhs, pass: margin >= 0.0, margin }
    }

    fn exact(name: ConditionName, n: Option<u32>, lhs: f64, rhs: f64) -> Condition {
        let (ln_lhs, ln_rhs) = (lhs.ln(), rhs.ln());
        Condition { name, n, lhs, rhs, ln_lhs, ln_rhs, pass: lhs >= rhs, margin: ln_lhs - ln_rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub regime: Regime,
    pub conditions: Vec<Condition>,
    pub all_pass: bool,
    pub params: ScaleParams,
    pub dist: LengthSpec,
}

impl Certificate {
    pub fn failing(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.pass)
    }

    pub fn of(&self, name: ConditionName) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(move |c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub delta: f64,
    pub n0: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSequence {
    pub scales: Vec<Scale>,
    /// The horizon `N`; the sequence has `N + 2` entries.
    pub horizon: u32,
    pub certificate: Certificate,
    pub generator: Option<GeneratorMeta>,
}

/// Checks an integer sequence.
pub fn check_good_sequence(seq: &[u64], params: &ScaleParams, dist: &LengthDistribution) -> Result<Certificate, ScalesError> {
    let scales: Vec<Scale> = seq.iter().map(|r| Scale::exact(*r)).collect();
    check_scales(&scales, params, dist)
}

/// Checks a sequence given as [`Scale`]s, some of which may be too large for
/// integers.
pub fn check_scales(scales: &[Scale], params: &ScaleParams, dist: &LengthDistribution) -> Result<Certificate, ScalesError> {
    params.validate()?;
    if scales.len() < 2 {
        return Err(ScalesError::TooShort);
    }
    for (i, w) in scales.windows(2).enumerate() {
        let increasing = match (w[0].value, w[1].value) {
            (Some(a), Some(b)) => a < b,
            _ => w[0].ln < w[1].ln,
        };
        if !increasing || w[0].ln < 0.0 || w[0].value == Some(0) {
            return Err(ScalesError::NotIncreasing(i + 1));
        }
    }
    let exact = scales.iter().all(|s| s.value.is_some());
    let regime = if exact { Regime::Exact } else { Regime::Log };
    let p = params;
    let horizon = scales.len() - 2;
    let mut conditions = Vec::with_capacity(2 * horizon + 4);

    use ConditionName::*;
    if exact {
        let r: Vec<f64> = scales.iter().map(|s| s.value.unwrap() as f64).collect();
        conditions.push(Condition::exact(InitialScale, None, r[0], p.r0_star));
        for n in 0..=horizon {
            let w = p.v * dist.moment_window(2, p.delta_low * r[n] * r[n], p.delta_up * r[n + 1] * r[n + 1]);
            conditions.push(Condition::exact(MomentWindow, Some(n as u32), w, p.alpha_low));
        }
        for (n, rn) in r.iter().enumerate().take(horizon + 1) {
            conditions.push(Condition::exact(GrowthBound, Some(n as u32), p.psi * rn.powi(p.dim as i32 - 4), 2f64.powi(n as i32) * p.gamma0));
        }
        let shoot = shooting_lhs(horizon as u32, scales[horizon + 1].value.unwrap(), p, dist);
        conditions.push(Condition::exact(Shooting, Some(horizon as u32), shoot, 2.0));
    } else {
        conditions.push(Condition::log(InitialScale, None, scales[0].ln, p.r0_star.ln()));
        for n in 0..=horizon {
            let ln_w = p.v.ln()
                + dist.ln_second_moment_window(p.delta_low.ln() + 2.0 * scales[n].ln, p.delta_up.ln() + 2.0 * scales[n + 1].ln);
            conditions.push(Condition::log(MomentWindow, Some(n as u32), ln_w, p.alpha_low.ln()));
        }
        let d4 = p.dim as f64 - 4.0;
        for (n, sc) in scales.iter().enumerate().take(horizon + 1) {
            let rhs = n as f64 * std::f64::consts::LN_2 + p.gamma0.ln();
            conditions.push(Condition::log(GrowthBound, Some(n as u32), p.psi.ln() + d4 * sc.ln, rhs));
        }
        let top = scales[horizon + 1];
        let ln_shoot = (horizon + 1) as f64 * std::f64::consts::LN_2
            + p.gamma0.ln()
            + p.s.ln()
            + p.v.ln()
            + 4.0 * top.ln
            + dist.ln_tail_mass(p.lambda.ln() + 2.0 * top.ln);
        conditions.push(Condition::log(Shooting, Some(horizon as u32), ln_shoot, 2f64.ln()));
    }

    let all_pass = conditions.iter().all(|c| c.pass);
    Ok(Certificate { regime, conditions, all_pass, params: *p, dist: dist.spec().clone() })
}

/// `2^{N+1} gamma_0 s v R^4 P(L >= Lambda R^2)` for an integer scale.
pub fn shooting_lhs(horizon: u32, r: u64, p: &ScaleParams, dist: &LengthDistribution) -> f64 {
    let r = r as f64;
    2f64.powi(horizon as i32 + 1) * p.gamma0 * p.s * p.v * r.powi(4) * dist.tail_mass(p.lambda * r * r)
}

/// `ln R~_n = exp(n^{1/(1+delta)})`.
pub fn ln_base_scale(n: u32, delta: f64) -> f64 {
    (n as f64).powf(1.0 / (1.0 + delta)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub found: Option<ScaleSequence>,
    pub candidates: u64,
    /// Set when some candidate scale overflowed even in log form.
    pub truncated: bool,
}

/// Searches shifts `n0 <= n0_max` and horizons `1 <= N <= n_max` (in
/// lexicographic order) for a shifted sequence `R_n = R~_{n + n0}` that
/// passes every condition.
pub fn generate_candidate_sequence(
    dist: &LengthDistribution,
    params: &ScaleParams,
    delta: f64,
    n_max: u32,
    n0_max: u32,
) -> Result<GenerationReport, ScalesError> {
    params.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ScalesError::BadParam("delta"));
    }
    let mut candidates = 0;
    let mut truncated = false;
    for n0 in 0..=n0_max {
        for horizon in 1..=n_max {
            let scales: Vec<Scale> = (0..horizon + 2).map(|n| Scale::from_ln(ln_base_scale(n + n0, delta))).collect();
            if scales.iter().any(|s| !s.ln.is_finite()) {
                truncated = true;
                break;
            }
            candidates += 1;
            let certificate = match check_scales(&scales, params, dist) {
                Ok(c) => c,
                // rounding can merge the first two tiny scales
                Err(ScalesError::NotIncreasing(_)) => continue,
                Err(e) => return Err(e),
            };
            if certificate.all_pass {
                let found = ScaleSequence { scales, horizon, certificate, generator: Some(GeneratorMeta { delta, n0 }) };
                return Ok(GenerationReport { found: Some(found), candidates, truncated });
            }
        }
    }
    Ok(GenerationReport { found: None, candidates, truncated })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ell0Scan {
    pub epsilon: f64,
    pub rows: Vec<Ell0Row>,
    /// The first scanned `ell0` for which no candidate passes.
    pub first_all_fail: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ell0Row {
    pub ell0: u64,
    pub candidates: u64,
    pub passing: Option<(u32, u32)>,
}

/// Runs the generator for the log-log law at each `ell0` in `grid`.
pub fn scan_ell0(epsilon: f64, grid: &[u64], params: &ScaleParams, delta: f64, n_max: u32, n0_max: u32) -> Result<Ell0Scan, ScalesError> {
    let mut rows = Vec::with_capacity(grid.len());
    for &ell0 in grid {
        let dist = LengthDistribution::new(LengthSpec::LogLogEps { epsilon, ell0 })?;
        let rep = generate_candidate_sequence(&dist, params, delta, n_max, n0_max)?;
        let passing = rep.found.as_ref().map(|s| (s.generator.unwrap().n0, s.horizon));
        rows.push(Ell0Row { ell0, candidates: rep.candidates, passing });
    }
    let first_all_fail = rows.iter().find(|r| r.passing.is_none()).map(|r| r.ell0);
    Ok(Ell0Scan { epsilon, rows, first_all_fail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loglog(eps: f64) -> LengthDistribution {
        LengthDistribution::new(LengthSpec::LogLogEps { epsilon: eps, ell0: 16 }).unwrap()
    }

    #[test]
    fn rejects_bad_sequences() {
        let d = loglog(0.5);
        let p = ScaleParams::default();
        assert_eq!(check_good_sequence(&[5], &p, &d), Err(ScalesError::TooShort));
        assert_eq!(check_good_sequence(&[5, 5, 9], &p, &d), Err(ScalesError::NotIncreasing(1)));
        assert_eq!(check_good_sequence(&[0, 5], &p, &d), Err(ScalesError::NotIncreasing(1)));
        let bad = ScaleParams { psi: -1.0, ..p };
        assert_eq!(check_good_sequence(&[1, 5], &bad, &d), Err(ScalesError::BadParam("psi")));
    }

    #[test]
    fn small_initial_scale_fails_only_its_condition() {
        let d = loglog(0.5);
        let p = ScaleParams { r0_star: 10.0, ..ScaleParams::default() };
        let c = check_good_sequence(&[3, 15, 300], &p, &d).unwrap();
        assert!(!c.of(ConditionName::InitialScale).next().unwrap().pass);
        // everything else is still reported
        assert_eq!(c.conditions.len(), 1 + 2 + 2 + 1);
    }

    #[test]
    fn dirac_window_empty() {
        let d = LengthDistribution::new(LengthSpec::Dirac { t: 100 }).unwrap();
        let p = ScaleParams { delta_low: 2.0, ..ScaleParams::default() };
        let c = check_good_sequence(&[10, 20, 40], &p, &d).unwrap();
        let w = c.of(ConditionName::MomentWindow).next().unwrap();
        assert_eq!(w.lhs, 0.0);
        assert!(!w.pass);
    }

    #[test]
    fn window_matches_direct_summation() {
        let d = loglog(0.5);
        let p = ScaleParams { delta_low: 2.0, delta_up: 0.5, ..ScaleParams::default() };
        let seq = [3u64, 15, 300];
        let c = check_good_sequence(&seq, &p, &d).unwrap();
        for (n, w) in c.of(ConditionName::MomentWindow).enumerate() {
            let a = (2.0 * (seq[n] * seq[n]) as f64).ceil() as u64;
            let b = (0.5 * (seq[n + 1] * seq[n + 1]) as f64).floor() as u64;
            let direct: f64 = crate::stats::neumaier_sum((a..=b).map(|l| (l * l) as f64 * d.mass(l)));
            assert!((w.lhs - direct).abs() <= 1e-12 * direct, "{} vs {direct}", w.lhs);
        }
    }

    #[test]
    fn shooting_lhs_recomputes() {
        let d = loglog(0.5);
        let p = ScaleParams::default();
        let seq = [3u64, 15, 300, 4000];
        let c = check_good_sequence(&seq, &p, &d).unwrap();
        let shoot = c.of(ConditionName::Shooting).next().unwrap();
        let r = 4000f64;
        let direct = 2f64.powi(3) * p.gamma0 * p.s * p.v * r.powi(4) * d.tail_mass(p.lambda * r * r);
        assert_eq!(shoot.lhs, direct);
    }

    #[test]
    fn pure_function() {
        let d = loglog(0.5);
        let p = ScaleParams::default();
        let a = generate_candidate_sequence(&d, &p, 0.25, 40, 8).unwrap();
        let b = generate_candidate_sequence(&d, &p, 0.25, 40, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn finite_second_moment_laws_die_out() {
        // once D_low R_0^2 > T the first window is empty
        let d = LengthDistribution::new(LengthSpec::Dirac { t: 5000 }).unwrap();
        let p = ScaleParams { delta_low: 4.0, ..ScaleParams::default() };
        let bound = ((5000.0f64 / 4.0).sqrt()).floor() as u64 + 1;
        for r0 in bound..bound + 50 {
            let c = check_good_sequence(&[r0, r0 * 3, r0 * 9], &p, &d).unwrap();
            assert!(!c.all_pass);
        }
        let g = LengthDistribution::new(LengthSpec::Geometric { mean_t: 10.0 }).unwrap();
        let rep = generate_candidate_sequence(&g, &ScaleParams::default(), 0.25, 40, 20).unwrap();
        assert!(rep.found.is_none());
    }

    #[test]
    fn margins_shrink_when_delta_exceeds_eps() {
        let d = loglog(0.5);
        let p = ScaleParams::default();
        let scales: Vec<Scale> = (100..400).step_by(20).map(|n| Scale::from_ln(ln_base_scale(n, 2.0))).collect();
        let c = check_scales(&scales, &p, &d).unwrap();
        let m: Vec<f64> = c.of(ConditionName::MomentWindow).map(|x| x.margin).collect();
        assert!(m.windows(2).all(|w| w[1] < w[0]), "{m:?}");
    }

    proptest! {
        #[test]
        fn raising_v_never_hurts(v in 0.01f64..10.0, factor in 1.0f64..50.0) {
            let d = loglog(0.5);
            let seq = [3u64, 15, 300, 67_000];
            let p1 = ScaleParams { v, delta_low: 2.0, ..ScaleParams::default() };
            let p2 = ScaleParams { v: v * factor, ..p1 };
            let c1 = check_good_sequence(&seq, &p1, &d).unwrap();
            let c2 = check_good_sequence(&seq, &p2, &d).unwrap();
            for (a, b) in c1.conditions.iter().zip(&c2.conditions) {
                match a.name {
                    ConditionName::MomentWindow | ConditionName::Shooting => prop_assert!(b.margin >= a.margin),
                    _ => prop_assert_eq!(a.margin, b.margin),
                }
            }
        }
    }
}
