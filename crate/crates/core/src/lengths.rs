//! Length laws for worms.
//!
//! A [`LengthDistribution`] tabulates the mass function on `1..=table_end`
//! with double-double prefix sums of `l^k m(l)` for `k = 0, 1, 2`, and treats
//! everything beyond the table analytically: closed forms where they exist,
//! otherwise an Euler-Maclaurin corrected integral. Windowed sums follow the
//! convention `sum_{l=a}^{b} = sum_{l=ceil(a)}^{floor(b)}`.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::KahanSum;

/// Largest tabulated length for heavy-tailed laws.
pub const TABLE_MAX: u64 = 1 << 18;

/// Default lower cutoff for the log-log law. Must be at least `e^e`.
pub const DEFAULT_ELL0: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LengthError {
    #[error("power law with beta = {0} is not normalizable (need beta > 1)")]
    NotNormalizable(f64),
    #[error("log-log law needs ell0 >= 16 (>= e^e), got {0}")]
    Ell0TooSmall(u64),
    #[error("geometric law needs meanT >= 1, got {0}")]
    BadMean(f64),
    #[error("dirac law needs T >= 1")]
    BadDirac,
    #[error("mass table: {0}")]
    BadTable(String),
    #[error("parameter {name} = {value} is not finite")]
    NotFinite { name: &'static str, value: f64 },
    #[error("truncation cap must be >= 1")]
    BadCap,
}

fn default_ell0() -> u64 {
    DEFAULT_ELL0
}

fn one() -> u64 {
    1
}

/// Serializable description of a length law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LengthSpec {
    /// `m(l) = c (ln ln l)^eps / (l^3 ln l)` for `l >= ell0`.
    #[serde(rename = "loglog")]
    LogLogEps {
        epsilon: f64,
        #[serde(default = "default_ell0")]
        ell0: u64,
    },
    /// `m(l) = c l^{-beta}` for `l >= ell0`.
    #[serde(rename = "powerlaw")]
    PowerLaw {
        beta: f64,
        #[serde(default = "one")]
        ell0: u64,
    },
    /// Geometric on `{1, 2, ...}` with mean `meanT`.
    #[serde(rename = "geometric")]
    Geometric {
        #[serde(rename = "meanT")]
        mean_t: f64,
    },
    #[serde(rename = "dirac")]
    Dirac {
        #[serde(rename = "T")]
        t: u64,
    },
    /// Explicit masses; entry `i` is `m(i + 1)`.
    #[serde(rename = "table")]
    Table { masses: Vec<f64> },
}

/// A length spec together with its optional truncation cap, as it appears in
/// experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistConfig {
    #[serde(flatten)]
    pub spec: LengthSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
}

impl DistConfig {
    pub fn build(&self) -> Result<LengthDistribution, LengthError> {
        LengthDistribution::with_cap(self.spec.clone(), self.cap)
    }
}

/// Heavy-tail shape shared by the analytic code paths.
#[derive(Debug, Clone, Copy)]
enum Shape {
    LogLog { eps: f64 },
    Power { beta: f64 },
    Geometric { q: f64 },
    Finite,
}

#[derive(Debug, Clone)]
pub struct LengthDistribution {
    spec: LengthSpec,
    shape: Shape,
    c: f64,
    support_min: u64,
    support_max: Option<u64>,
    /// `pmf[l]` for `l in 0..=table_end` (index 0 unused).
    pmf: Vec<f64>,
    /// Double-double prefix sums of `l^k m(l)`, index `l` holds the sum over `1..=l`.
    prefix_hi: [Vec<f64>; 3],
    prefix_lo: [Vec<f64>; 3],
    table_end: u64,
    cap: Option<u64>,
    truncated_mass: f64,
    threshold: Option<u64>,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

impl LengthDistribution {
    pub fn new(spec: LengthSpec) -> Result<Self, LengthError> {
        Self::with_cap(spec, None)
    }

    pub fn with_cap(spec: LengthSpec, cap: Option<u64>) -> Result<Self, LengthError> {
        if cap == Some(0) {
            return Err(LengthError::BadCap);
        }
        let (shape, support_min, support_max, table_end) = match &spec {
            LengthSpec::LogLogEps { epsilon, ell0 } => {
                check_finite("epsilon", *epsilon)?;
                if *ell0 < 16 {
                    return Err(LengthError::Ell0TooSmall(*ell0));
                }
                (Shape::LogLog { eps: *epsilon }, *ell0, None, TABLE_MAX.max(*ell0 + 1024))
            }
            LengthSpec::PowerLaw { beta, ell0 } => {
                check_finite("beta", *beta)?;
                if *beta <= 1.0 {
                    return Err(LengthError::NotNormalizable(*beta));
                }
                let ell0 = (*ell0).max(1);
                (Shape::Power { beta: *beta }, ell0, None, TABLE_MAX.max(ell0 + 1024))
            }
            LengthSpec::Geometric { mean_t } => {
                check_finite("meanT", *mean_t)?;
                if *mean_t < 1.0 {
                    return Err(LengthError::BadMean(*mean_t));
                }
                let q = 1.0 - 1.0 / mean_t;
                // tabulate until the tail drops below 1e-18
                let end = if q == 0.0 { 1 } else { ((-18.0 * std::f64::consts::LN_10 / q.ln()).ceil() as u64 + 2).min(TABLE_MAX) };
                (Shape::Geometric { q }, 1, if q == 0.0 { Some(1) } else { None }, end.max(1))
            }
            LengthSpec::Dirac { t } => {
                if *t == 0 {
                    return Err(LengthError::BadDirac);
                }
                (Shape::Finite, *t, Some(*t), *t)
            }
            LengthSpec::Table { masses } => {
                if masses.is_empty() {
                    return Err(LengthError::BadTable("empty".into()));
                }
                if let Some(i) = masses.iter().position(|m| !m.is_finite() || *m < 0.0) {
                    return Err(LengthError::BadTable(format!("entry {} is negative or not finite", i + 1)));
                }
                let total: f64 = masses.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(LengthError::BadTable(format!("masses sum to {total}, not 1")));
                }
                let lo = masses.iter().position(|m| *m > 0.0).unwrap() as u64 + 1;
                let hi = masses.iter().rposition(|m| *m > 0.0).unwrap() as u64 + 1;
                (Shape::Finite, lo, Some(hi), hi)
            }
        };

        let mut dist = LengthDistribution {
            spec,
            shape,
            c: 1.0,
            support_min,
            support_max,
            pmf: Vec::new(),
            prefix_hi: Default::default(),
            prefix_lo: Default::default(),
            table_end,
            cap,
            truncated_mass: 0.0,
            threshold: None,
        };

        // Dirac laws can have huge T; no table needed
        if matches!(dist.spec, LengthSpec::Dirac { .. }) {
            dist.table_end = 0;
            dist.pmf = vec![0.0];
            for k in 0..3 {
                dist.prefix_hi[k] = vec![0.0];
                dist.prefix_lo[k] = vec![0.0];
            }
        } else {
            dist.build_table();
        }
        dist.truncated_mass = match cap {
            Some(cap) => dist.tail_mass(cap as f64 + 1.0),
            None => 0.0,
        };
        dist.threshold = dist.find_threshold();
        Ok(dist)
    }

    fn raw_mass(&self, l: u64) -> f64 {
        if l < self.support_min || self.support_max.is_some_and(|m| l > m) {
            return 0.0;
        }
        match (&self.spec, self.shape) {
            (_, Shape::LogLog { eps }) => {
                let x = l as f64;
                let lx = x.ln();
                lx.ln().powf(eps) / (x * x * x * lx)
            }
            (_, Shape::Power { beta }) => (l as f64).powf(-beta),
            (_, Shape::Geometric { q }) => (1.0 - q) * q.powf((l - 1) as f64),
            (LengthSpec::Dirac { t }, _) => (l == *t) as u8 as f64,
            (LengthSpec::Table { masses }, _) => masses[(l - 1) as usize],
            _ => unreachable!(),
        }
    }

    fn build_table(&mut self) {
        let n = self.table_end as usize;
        let mut raw = vec![0.0; n + 1];
        for (l, slot) in raw.iter_mut().enumerate().skip(1) {
            *slot = self.raw_mass(l as u64);
        }
        // normalization: tabulated sum plus the analytic tail (c = 1 while summing)
        let table_sum: f64 = raw.iter().copied().collect::<KahanSum>().value();
        let tail = self.beyond_window(0, self.table_end as f64 + 1.0, f64::INFINITY);
        // for laws that come normalized this only divides out rounding
        self.c = 1.0 / (table_sum + tail);
        let c = self.c;
        self.pmf = raw.into_iter().map(|m| m * c).collect();
        for k in 0..3 {
            let mut hi = Vec::with_capacity(n + 1);
            let mut lo = Vec::with_capacity(n + 1);
            let mut acc = KahanSum::new();
            hi.push(0.0);
            lo.push(0.0);
            for l in 1..=n {
                let w = (l as f64).powi(k as i32) * self.pmf[l];
                acc.add(w);
                let (sum, comp) = acc.parts();
                hi.push(sum);
                lo.push(comp);
            }
            self.prefix_hi[k] = hi;
            self.prefix_lo[k] = lo;
        }
    }

    // -- analytic pieces (work with the current c; c = 1 during normalization)

    /// `f_k(x) = x^k m(x)` extended to real `x` beyond the table.
    fn f_real(&self, k: u32, x: f64) -> f64 {
        match self.shape {
            Shape::LogLog { eps } => {
                let lx = x.ln();
                self.c * lx.ln().powf(eps) / (x.powi(3 - k as i32) * lx)
            }
            Shape::Power { beta } => self.c * x.powf(k as f64 - beta),
            Shape::Geometric { q } => self.c * x.powi(k as i32) * (1.0 - q) * q.powf(x - 1.0),
            Shape::Finite => 0.0,
        }
    }

    /// Logarithmic derivative of `f_k`.
    fn dlog_f(&self, k: u32, x: f64) -> f64 {
        match self.shape {
            Shape::LogLog { eps } => {
                let lx = x.ln();
                ((k as f64 - 3.0) + eps / (lx * lx.ln()) - 1.0 / lx) / x
            }
            Shape::Power { beta } => (k as f64 - beta) / x,
            Shape::Geometric { q } => k as f64 / x + q.ln(),
            Shape::Finite => 0.0,
        }
    }

    /// Whether `sum_{l >= A} l^k m(l)` diverges.
    fn diverges(&self, k: u32) -> bool {
        match self.shape {
            Shape::LogLog { eps } => k == 2 && eps >= -1.0,
            Shape::Power { beta } => k as f64 - beta >= -1.0,
            _ => false,
        }
    }

    /// `int_a^b x^k m(x) dx` for the heavy-tailed shapes.
    fn integral(&self, k: u32, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self.shape {
            Shape::Power { beta } => {
                let p = k as f64 - beta + 1.0;
                if p.abs() < 1e-12 {
                    self.c * (b.ln() - a.ln())
                } else if b.is_infinite() {
                    if p > 0.0 {
                        f64::INFINITY
                    } else {
                        self.c * (-a.powf(p) / p)
                    }
                } else {
                    // a^p - b^p without cancellation trouble for p < 0
                    self.c * (a.powf(p) * (-((b / a).ln() * p).exp_m1())) / (-p)
                }
            }
            Shape::LogLog { eps } if k == 2 => {
                let la = a.ln().ln();
                let lb = if b.is_infinite() { f64::INFINITY } else { b.ln().ln() };
                if (eps + 1.0).abs() < 1e-12 {
                    self.c * (lb.ln() - la.ln())
                } else if lb.is_infinite() {
                    if eps > -1.0 {
                        f64::INFINITY
                    } else {
                        self.c * la.powf(1.0 + eps) / (-(1.0 + eps))
                    }
                } else {
                    self.c * (lb.powf(1.0 + eps) - la.powf(1.0 + eps)) / (1.0 + eps)
                }
            }
            Shape::LogLog { eps } => {
                // t = ln x: integrand (ln t)^eps e^{(k-2) t} / t, which decays fast
                let decay = 2.0 - k as f64;
                let ta = a.ln();
                let tb = if b.is_infinite() { f64::INFINITY } else { b.ln() };
                let t_end = tb.min(ta + 60.0 / decay);
                let g = |t: f64| t.ln().powf(eps) * ((k as f64 - 2.0) * (t - ta)).exp() / t;
                let scale = ((k as f64 - 2.0) * ta).exp();
                self.c * scale * gauss_legendre_composite(g, ta, t_end, 0.25)
            }
            Shape::Geometric { .. } | Shape::Finite => unreachable!("closed forms are used instead"),
        }
    }

    /// `sum_{l=A}^{B} l^k m(l)` for integer-valued `A <= B` entirely beyond
    /// the table (`B` may be infinite).
    fn beyond_window(&self, k: u32, a: f64, b: f64) -> f64 {
        if b < a {
            return 0.0;
        }
        match self.shape {
            Shape::Finite => 0.0,
            Shape::Geometric { q } => {
                let s = |x: f64| -> f64 {
                    if x.is_infinite() {
                        return 0.0;
                    }
                    let g = 1.0 / (1.0 - q);
                    let base = self.c * (1.0 - q) * q.powf(x - 1.0);
                    base * match k {
                        0 => g,
                        1 => x * g + q * g * g,
                        _ => x * x * g + 2.0 * x * q * g * g + q * (1.0 + q) * g * g * g,
                    }
                };
                (s(a) - s(b + 1.0)).max(0.0)
            }
            Shape::LogLog { .. } | Shape::Power { .. } => {
                if b.is_infinite() && self.diverges(k) {
                    return f64::INFINITY;
                }
                let fa = self.f_real(k, a);
                let dfa = fa * self.dlog_f(k, a);
                let (fb, dfb) = if b.is_infinite() {
                    (0.0, 0.0)
                } else {
                    let fb = self.f_real(k, b);
                    (fb, fb * self.dlog_f(k, b))
                };
                self.integral(k, a, b) + 0.5 * (fa + fb) + (dfb - dfa) / 12.0
            }
        }
    }

    // -- public API

    pub fn spec(&self) -> &LengthSpec {
        &self.spec
    }

    /// Normalization constant (1 for laws that come normalized).
    pub fn normalization(&self) -> f64 {
        self.c
    }

    pub fn cap(&self) -> Option<u64> {
        self.cap
    }

    /// Mass beyond the truncation cap under the untruncated law.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    pub fn support_min(&self) -> u64 {
        self.support_min
    }

    pub fn support_max(&self) -> Option<u64> {
        self.support_max
    }

    /// `m(l)` of the untruncated law.
    pub fn mass(&self, l: u64) -> f64 {
        if let LengthSpec::Dirac { t } = self.spec {
            return (l == t) as u8 as f64;
        }
        if l == 0 {
            return 0.0;
        }
        if l <= self.table_end {
            self.pmf[l as usize]
        } else {
            self.f_real(0, l as f64)
        }
    }

    fn prefix(&self, k: usize, l: u64) -> (f64, f64) {
        let l = l.min(self.table_end) as usize;
        (self.prefix_hi[k][l], self.prefix_lo[k][l])
    }

    /// `sum_{l=ceil(a)}^{floor(b)} l^k m(l)` for the untruncated law, `k <= 2`.
    /// Returns infinity for divergent windows and 0 for empty ones.
    pub fn moment_window(&self, k: u32, a: f64, b: f64) -> f64 {
        assert!(k <= 2, "moments above the second are not supported");
        let lo = a.ceil().max(1.0);
        let hi = b.floor();
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return 0.0;
        }
        if let LengthSpec::Dirac { t } = self.spec {
            let t = t as f64;
            return if lo <= t && t <= hi { t.powi(k as i32) } else { 0.0 };
        }
        let te = self.table_end as f64;
        let mut total = 0.0;
        if lo <= te {
            let top = hi.min(te) as u64;
            let (bh, bl) = self.prefix(k as usize, top);
            let (ah, al) = self.prefix(k as usize, lo as u64 - 1);
            let (d, e) = two_sum(bh, -ah);
            total += d + (e + (bl - al));
        }
        if hi > te {
            total += self.beyond_window(k, lo.max(te + 1.0), hi);
        }
        total.max(0.0)
    }

    /// `sum_{l >= ceil(a)} m(l)`.
    pub fn tail_mass(&self, a: f64) -> f64 {
        if a <= 1.0 {
            return 1.0;
        }
        self.moment_window(0, a, f64::INFINITY).min(1.0)
    }

    /// `sum_l l^k m(l)` over the whole support (may be infinite).
    pub fn moment(&self, k: u32) -> f64 {
        self.moment_window(k, 1.0, f64::INFINITY)
    }

    /// `E[L^k]` under the law actually sampled (conditioned on `L <= cap`).
    pub fn sampled_moment(&self, k: u32) -> f64 {
        match self.cap {
            Some(cap) => self.moment_window(k, 1.0, cap as f64) / (1.0 - self.truncated_mass),
            None => self.moment(k),
        }
    }

    /// Mass of `l` under the sampled (possibly truncated) law.
    pub fn sampled_mass(&self, l: u64) -> f64 {
        match self.cap {
            Some(cap) if l > cap => 0.0,
            Some(_) => self.mass(l) / (1.0 - self.truncated_mass),
            None => self.mass(l),
        }
    }

    /// Smallest `l >= ell0` from which `x -> x^2 m(x)` is decreasing, if any.
    pub fn monotone_threshold(&self) -> Option<u64> {
        self.threshold
    }

    fn find_threshold(&self) -> Option<u64> {
        match self.shape {
            Shape::LogLog { eps } => {
                // d/dx log(x^2 m) < 0  iff  eps < lnln x (ln x + 1), increasing in x
                let ok = |x: f64| eps < x.ln().ln() * (x.ln() + 1.0);
                let mut hi = self.support_min as f64;
                while !ok(hi) {
                    hi *= 2.0;
                    if hi > 1e300 {
                        return None;
                    }
                }
                let mut lo = (hi / 2.0).max(self.support_min as f64);
                if ok(lo) {
                    return Some(lo as u64);
                }
                while hi - lo > 1.0 {
                    let mid = ((lo + hi) / 2.0).floor();
                    if ok(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Some(hi as u64)
            }
            Shape::Power { beta } => (beta > 2.0).then_some(self.support_min),
            Shape::Geometric { q } => {
                if q == 0.0 {
                    Some(1)
                } else {
                    Some(((2.0 / -q.ln()).ceil() as u64).max(1))
                }
            }
            Shape::Finite => self.support_max,
        }
    }

    /// A constant `c' > 0` with `tail_mass(a) >= c' / (a^2 ln a)` for all
    /// integers `a >= monotone_threshold()`. Only the log-log law with
    /// `eps >= 0` has one: `c' = 3c/16`.
    pub fn tail_lower_constant(&self) -> Option<f64> {
        match self.shape {
            Shape::LogLog { eps } if eps >= 0.0 => Some(3.0 * self.c / 16.0),
            _ => None,
        }
    }

    /// The integral lower bound `c/(1+eps) ((lnln b)^{1+eps} - (lnln a)^{1+eps})`
    /// on `moment_window(2, a, b)`, valid for `monotone_threshold() <= a <= b`.
    pub fn second_moment_integral_bound(&self, a: f64, b: f64) -> Option<f64> {
        match self.shape {
            Shape::LogLog { .. } => Some(self.integral(2, a, b)),
            _ => None,
        }
    }

    /// `ln(sum_{l >= a} m(l))` given `ln a`, usable far beyond `f64` range
    /// for `a`. Beyond `e^300` the leading asymptotics are used; the neglected
    /// correction has relative size below `1/a`.
    pub fn ln_tail_mass(&self, ln_a: f64) -> f64 {
        if ln_a < 300.0 {
            return self.tail_mass(ln_a.exp()).ln();
        }
        match self.shape {
            Shape::LogLog { eps } => {
                // c e^{-2T} int_0^inf (ln(T+s))^eps e^{-2s} / (T+s) ds
                let t = ln_a;
                let j = gauss_legendre_composite(|s| (t + s).ln().powf(eps) * (-2.0 * s).exp() / (t + s), 0.0, 30.0, 0.25);
                self.c.ln() - 2.0 * t + j.ln()
            }
            Shape::Power { beta } => self.c.ln() + (1.0 - beta) * ln_a - (beta - 1.0).ln(),
            Shape::Geometric { q } => {
                if q == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    ln_a.exp() * q.ln()
                }
            }
            Shape::Finite => f64::NEG_INFINITY,
        }
    }

    /// `ln(sum_{l=a}^{b} l^2 m(l))` given `ln a <= ln b`, usable far beyond
    /// `f64` range for the endpoints.
    pub fn ln_second_moment_window(&self, ln_a: f64, ln_b: f64) -> f64 {
        if ln_b < ln_a {
            return f64::NEG_INFINITY;
        }
        if ln_b < 300.0 {
            return self.moment_window(2, ln_a.exp(), ln_b.exp()).ln();
        }
        match self.shape {
            Shape::LogLog { eps } => {
                let la = ln_a.max((self.support_min as f64).ln()).ln();
                let lb = ln_b.ln();
                if lb <= la {
                    return f64::NEG_INFINITY;
                }
                let v = if (eps + 1.0).abs() < 1e-12 {
                    self.c * (lb.ln() - la.ln())
                } else {
                    self.c * (lb.powf(1.0 + eps) - la.powf(1.0 + eps)) / (1.0 + eps)
                };
                v.ln()
            }
            Shape::Power { beta } => {
                let ln_a = ln_a.max((self.support_min as f64).ln());
                let p = 3.0 - beta;
                if p.abs() < 1e-12 {
                    (self.c * (ln_b - ln_a)).ln()
                } else if p > 0.0 {
                    self.c.ln() + p * ln_b + (-(-(p * (ln_b - ln_a))).exp_m1()).ln() - p.ln()
                } else {
                    self.c.ln() + p * ln_a + (-(p * (ln_b - ln_a)).exp_m1()).ln() - (-p).ln()
                }
            }
            Shape::Geometric { .. } | Shape::Finite => {
                let w = self.moment_window(2, ln_a.exp(), f64::INFINITY);
                w.ln()
            }
        }
    }

    /// Draws a length from the (truncated) law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sample_counted(rng).0
    }

    /// Draws a length, also returning how many draws beyond the cap were
    /// rejected on the way.
    pub fn sample_counted<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u32) {
        let mut rejected = 0;
        loop {
            let l = self.sample_untruncated(rng);
            match self.cap {
                Some(cap) if l > cap => rejected += 1,
                _ => return (l, rejected),
            }
        }
    }

    fn sample_untruncated<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if let LengthSpec::Dirac { t } = self.spec {
            return t;
        }
        let u: f64 = rng.random();
        let cdf = &self.prefix_hi[0];
        let table_mass = cdf[self.table_end as usize];
        if u < table_mass {
            // first l with F(l) > u
            let idx = cdf.partition_point(|&f| f <= u);
            return (idx as u64).clamp(self.support_min, self.table_end);
        }
        if matches!(self.shape, Shape::Finite) {
            return self.support_max.unwrap();
        }
        if let Shape::Geometric { q } = self.shape {
            // memoryless tail
            let e: f64 = 1.0 - rng.random::<f64>();
            return self.table_end + 1 + (e.ln() / q.ln()).floor() as u64;
        }
        // heavy tail: invert the analytic tail with fresh precision
        let w = (1.0 - rng.random::<f64>()) * self.tail_mass(self.table_end as f64 + 1.0);
        // find the largest l with tail(l) >= w
        let mut lo = self.table_end + 1;
        let mut hi = lo.saturating_mul(2);
        while self.tail_mass(hi as f64) >= w {
            if hi >= u64::MAX / 4 {
                return hi;
            }
            lo = hi;
            hi = hi.saturating_mul(2);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.tail_mass(mid as f64) >= w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// The smallest `l` with `tail_mass(l + 1) <= eps`, i.e. an effective
    /// support bound at tolerance `eps`.
    pub fn tail_quantile(&self, eps: f64) -> u64 {
        if let Some(m) = self.support_max {
            if self.tail_mass(m as f64 + 1.0) <= eps {
                let mut lo = self.support_min.saturating_sub(1);
                let mut hi = m;
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if self.tail_mass(mid as f64 + 1.0) <= eps {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return hi;
            }
        }
        let mut hi = self.support_min.max(1);
        while self.tail_mass(hi as f64 + 1.0) > eps {
            if hi >= u64::MAX / 4 {
                return u64::MAX;
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.tail_mass(mid as f64 + 1.0) <= eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

fn check_finite(name: &'static str, value: f64) -> Result<(), LengthError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(LengthError::NotFinite { name, value })
    }
}

/// Nodes and weights of 16-point Gauss-Legendre on [-1, 1].
fn gl16() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre_nodes(16))
}

/// Newton iteration on the Legendre recurrence.
pub(crate) fn gauss_legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite 16-point Gauss-Legendre on `[a, b]` with panels of width `h`.
pub(crate) fn gauss_legendre_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = ((b - a) / h).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    let mut acc = KahanSum::new();
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * w;
        for &(x, wt) in gl16() {
            acc.add(wt * f(mid + 0.5 * w * x) * 0.5 * w);
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::stats::chi_square_gof;
    use proptest::prelude::*;

    fn loglog(eps: f64) -> LengthDistribution {
        LengthDistribution::new(LengthSpec::LogLogEps { epsilon: eps, ell0: 16 }).unwrap()
    }

    #[test]
    fn dirac_basics() {
        let d = LengthDistribution::new(LengthSpec::Dirac { t: 7 }).unwrap();
        assert_eq!(d.mass(7), 1.0);
        assert_eq!(d.mass(6), 0.0);
        assert_eq!(d.moment_window(2, 1.0, 14.0), 49.0);
        assert_eq!(d.tail_mass(7.0), 1.0);
        assert_eq!(d.tail_mass(7.5), 0.0);
        let mut r = rng::stream(1, "t", 0);
        assert!((0..100).all(|_| d.sample(&mut r) == 7));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            LengthDistribution::new(LengthSpec::PowerLaw { beta: 1.0, ell0: 1 }),
            Err(LengthError::NotNormalizable(_))
        ));
        assert!(matches!(
            LengthDistribution::new(LengthSpec::LogLogEps { epsilon: 0.5, ell0: 15 }),
            Err(LengthError::Ell0TooSmall(15))
        ));
    }

    #[test]
    fn loglog_normalization_against_brute_force() {
        // oracle: plain summation far past the table plus a crude integral tail
        let d = loglog(0.5);
        let f = |l: f64| l.ln().ln().powf(0.5) / (l * l * l * l.ln());
        let n = 6_000_000u64;
        let brute: f64 = (16..=n).map(|l| f(l as f64)).collect::<KahanSum>().value();
        let x = n as f64 + 0.5;
        let tail = x.ln().ln().powf(0.5) / (2.0 * x * x * x.ln());
        let c_oracle = 1.0 / (brute + tail);
        assert!((d.normalization() / c_oracle - 1.0).abs() < 1e-12, "{} vs {}", d.normalization(), c_oracle);
        assert!(d.normalization() > 0.0);
        assert!((d.moment(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_total_mass() {
        for spec in [
            LengthSpec::LogLogEps { epsilon: -1.5, ell0: 16 },
            LengthSpec::LogLogEps { epsilon: 2.0, ell0: 40 },
            LengthSpec::PowerLaw { beta: 2.5, ell0: 1 },
            LengthSpec::PowerLaw { beta: 1.5, ell0: 3 },
            LengthSpec::Geometric { mean_t: 10.0 },
            LengthSpec::Geometric { mean_t: 1e6 },
            LengthSpec::Table { masses: vec![0.25, 0.5, 0.25] },
        ] {
            let d = LengthDistribution::new(spec.clone()).unwrap();
            assert!((d.moment_window(0, 1.0, f64::INFINITY) - 1.0).abs() < 1e-9, "{spec:?}");
            assert_eq!(d.tail_mass(1.0), 1.0);
        }
    }

    #[test]
    fn geometric_moments_closed_form() {
        let t = 10.0;
        let d = LengthDistribution::new(LengthSpec::Geometric { mean_t: t }).unwrap();
        assert!((d.moment(1) - t).abs() < 1e-10);
        // E[L^2] = (2 - p)/p^2 with p = 1/T
        let p = 1.0 / t;
        assert!((d.moment(2) - (2.0 - p) / (p * p)).abs() < 1e-8);
        assert!((d.tail_mass(5.0) - (1.0 - p).powi(4)).abs() < 1e-15);
        let big = LengthDistribution::new(LengthSpec::Geometric { mean_t: 1e6 }).unwrap();
        assert!((big.moment(1) / 1e6 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_beyond_table_matches_summation() {
        let d = LengthDistribution::new(LengthSpec::PowerLaw { beta: 2.5, ell0: 1 }).unwrap();
        let a = TABLE_MAX as f64 - 1000.0;
        let b = TABLE_MAX as f64 + 50_000.0;
        let direct: f64 =
            ((a as u64)..=(b as u64)).map(|l| d.normalization() * (l as f64).powf(-2.5)).collect::<KahanSum>().value();
        let w = d.moment_window(0, a, b);
        assert!((w / direct - 1.0).abs() < 1e-12, "{w} vs {direct}");
        let w1 = d.moment_window(1, a, b);
        let direct1: f64 =
            ((a as u64)..=(b as u64)).map(|l| d.normalization() * (l as f64).powf(-1.5)).collect::<KahanSum>().value();
        assert!((w1 / direct1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loglog_windows_beyond_table_match_summation() {
        let d = loglog(0.5);
        let (a, b) = (TABLE_MAX as f64 + 10.0, TABLE_MAX as f64 + 200_000.0);
        for k in 0..3u32 {
            let direct: f64 = ((a as u64)..=(b as u64))
                .map(|l| (l as f64).powi(k as i32) * d.f_real(0, l as f64))
                .collect::<KahanSum>()
                .value();
            let w = d.moment_window(k, a, b);
            assert!((w / direct - 1.0).abs() < 1e-11, "k={k}: {w} vs {direct}");
        }
    }

    #[test]
    fn negative_eps_has_finite_second_moment() {
        let d = loglog(-1.5);
        assert!(d.moment(2).is_finite());
        let mut prev = d.moment_window(2, 1.0, 1e6);
        let mut b = 1e6;
        for _ in 0..40 {
            b *= 2.0;
            let cur = d.moment_window(2, 1.0, b);
            assert!(cur >= prev);
            prev = cur;
        }
        let diff = d.moment_window(2, 1.0, 2.0 * b) / d.moment_window(2, 1.0, b) - 1.0;
        assert!(diff < 0.01);
        assert!(loglog(0.5).moment(2).is_infinite());
    }

    #[test]
    fn integral_and_tail_bounds_hold() {
        let d = loglog(0.5);
        let t0 = d.monotone_threshold().unwrap() as f64;
        assert_eq!(t0, 16.0);
        let cp = d.tail_lower_constant().unwrap();
        for &(a, b) in &[(16.0, 100.0), (1e3, 1e5), (5e4, 1e9), (1e10, 1e30)] {
            let s = d.moment_window(2, a, b);
            let bound = d.second_moment_integral_bound(a, b).unwrap();
            assert!(s >= bound, "{a}..{b}: {s} < {bound}");
            // the bound as literally stated (without c) is weaker still
            assert!(bound >= (b.ln().ln().powf(1.5) - a.ln().ln().powf(1.5)) / 1.5);
        }
        for &a in &[16.0, 17.0, 1000.0, 262_144.0, 1e7, 1e15] {
            assert!(d.tail_mass(a) >= cp / (a * a * a.ln()), "tail bound at {a}");
        }
    }

    #[test]
    fn large_positive_eps_threshold_is_past_ell0() {
        let d = LengthDistribution::new(LengthSpec::LogLogEps { epsilon: 30.0, ell0: 16 }).unwrap();
        let t = d.monotone_threshold().unwrap();
        assert!(t > 16);
        let g = |x: f64| x * x * d.f_real(0, x);
        assert!(g(t as f64 + 1.0) < g(t as f64));
        assert!(g((t - 2) as f64) < g((t - 1) as f64));
    }

    #[test]
    fn log_space_agrees_with_direct() {
        let d = loglog(0.5);
        let a: f64 = 1e100;
        let direct = d.tail_mass(a).ln();
                let t = a.ln();
        let j = gauss_legendre_composite(|s| (t + s).ln().powf(0.5) * (-2.0 * s).exp() / (t + s), 0.0, 30.0, 0.25);
        let asym = d.normalization().ln() - 2.0 * t + j.ln();
        assert!((direct - asym).abs() < 1e-9, "{direct} vs {asym}");
        let w = d.ln_second_moment_window(700.0, 900.0);
        assert!((d.ln_tail_mass(t) - direct).abs() < 1e-9);
        assert!(d.ln_tail_mass(1e4) < -2e4);
        let expect = (d.normalization() * (900f64.ln().powf(1.5) - 700f64.ln().powf(1.5)) / 1.5).ln();
        assert!((w - expect).abs() < 1e-12);
    }

    #[test]
    fn geometric_sample_mean() {
        let d = LengthDistribution::new(LengthSpec::Geometric { mean_t: 10.0 }).unwrap();
        let mut r = rng::stream(3, "geo", 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut r) as f64).collect();
        let m: crate::stats::MeanVar = xs.iter().copied().collect();
        assert!((m.mean() - 10.0).abs() < 3.0 * m.stderr(), "mean {}", m.mean());
    }

    #[test]
    fn truncated_loglog_chi_square() {
        let cap = 1_000_000;
        let d = LengthDistribution::with_cap(LengthSpec::LogLogEps { epsilon: 0.5, ell0: 16 }, Some(cap)).unwrap();
        assert!(d.truncated_mass() > 0.0 && d.truncated_mass() < 1e-9);
        let mut r = rng::stream(11, "chi", 0);
        let n = 1_000_000;
        // cells: individual lengths up to 200, then geometric bins up to cap
        let mut edges: Vec<u64> = (16..=200).collect();
        let mut e = 200u64;
        while e < cap {
            e = (e as f64 * 1.3) as u64;
            edges.push(e.min(cap));
        }
        let mut counts = vec![0u64; edges.len()];
        for _ in 0..n {
            let l = d.sample(&mut r);
            assert!(l <= cap && l >= 16);
            let idx = edges.partition_point(|&x| x < l);
            counts[idx] += 1;
        }
        let mut expected = Vec::with_capacity(edges.len());
        let mut lo = 16.0;
        for &hi in &edges {
            expected.push(n as f64 * d.moment_window(0, lo, hi as f64) / (1.0 - d.truncated_mass()));
            lo = hi as f64 + 1.0;
        }
        let res = chi_square_gof(&counts, &expected, 5.0);
        assert!(res.p_value > 0.01, "chi-square p = {}", res.p_value);
    }

    #[test]
    fn untruncated_tail_samples_reach_past_the_table() {
        let d = loglog(0.5);
        let mut r = rng::stream(5, "tail", 0);
        let past = (0..3_000_000).filter(|_| d.sample(&mut r) > TABLE_MAX).count();
        let expect = 3e6 * d.tail_mass(TABLE_MAX as f64 + 1.0);
        assert!((past as f64 - expect).abs() < 4.0 * expect.sqrt() + 3.0, "{past} vs {expect}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn windows_are_additive(a in 1u64..400_000, len1 in 0u64..300_000, len2 in 0u64..300_000, k in 0u32..3) {
            let d = loglog(0.5);
            let b = a + len1;
            let c = b + 1 + len2;
            let lhs = d.moment_window(k, a as f64, b as f64) + d.moment_window(k, (b + 1) as f64, c as f64);
            let rhs = d.moment_window(k, a as f64, c as f64);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300), "{} vs {}", lhs, rhs);
        }

        #[test]
        fn tail_is_non_increasing(a in 1.0f64..1e9, step in 0.0f64..1e6) {
            let d = LengthDistribution::new(LengthSpec::PowerLaw { beta: 3.0, ell0: 1 }).unwrap();
            prop_assert!(d.tail_mass(a + step) <= d.tail_mass(a));
        }
    }
}
