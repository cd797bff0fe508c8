//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::time::Instant;

use rand::Rng as _;
use serde_json::{json, Value};
use wormlab::harness::{parse_config, run_experiment, ConfigFormat, ExperimentConfig, LedParams};
use wormlab::lattice::{Boundary, BoxGeometry, Point, PointSet};
use wormlab::lengths::{LengthDistribution, LengthSpec};
use wormlab::percolation::{crossing, label_clusters, target_shooting_estimate, ShootingInstance};
use wormlab::potential::{
    capacity, dirichlet_energy, energy, equilibrium_measure, trim_to_capacity, prefix_capacities, CapacityMethod, CapacityParams,
    DisplacementGreenTable, EscapeParams, EscapeRule, SiteGreenTable, SiteMeasure, TargetSet,
};
use wormlab::rng;
use wormlab::scales::{generate_candidate_sequence, scan_ell0, ConditionName, ScaleParams};
use wormlab::walk::{green_origin_series, walk};
use wormlab::worms::{generate_cloud, AnimalLaw, GenerationPolicy};

fn report(id: u32, what: &str, pass: bool, started: Instant, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {verdict}: {what} ({detail}; {:.1}s)", started.elapsed().as_secs_f64());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn config(v: Value) -> ExperimentConfig {
    parse_config(&v.to_string(), ConfigFormat::Json).expect("valid config")
}

fn f(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

#[test]
fn c01_density_formula() {
    let t = Instant::now();
    let cfg = config(json!({
        "kind": "density", "seed": 11,
        "model": { "dim": 3, "side": 32, "boundary": "torus", "v": 0.1, "dist": { "kind": "geometric", "meanT": 5.0 } },
        "budget": { "replicas": 200 },
    }));
    let s = run_experiment(&cfg).unwrap().summary;
    let (mean, se, want) = (f(&s["density"]["mean"]), f(&s["density"]["stderr"]), f(&s["expected_density"]));
    let pass = (mean - want).abs() <= 3.0 * se;
    report(1, "density matches 1 - exp(-v m1)", pass, t, format!("{mean:.5} +- {se:.5} vs {want:.5}"));
}

#[test]
fn c02_bernoulli_reduction() {
    let t = Instant::now();
    let v = 0.3;
    let cfg = config(json!({
        "kind": "density", "seed": 12,
        "model": { "dim": 2, "side": 64, "boundary": "torus", "v": v, "dist": { "kind": "dirac", "T": 1 } },
        "budget": { "replicas": 200 },
    }));
    let s = run_experiment(&cfg).unwrap().summary;
    let (mean, se) = (f(&s["density"]["mean"]), f(&s["density"]["stderr"]));
    let (cov, cse) = (f(&s["nn_cov"]["mean"]), f(&s["nn_cov"]["stderr"]));
    let want = 1.0 - f64::exp(-v);
    let pass = (mean - want).abs() <= 3.0 * se && cov.abs() <= 3.0 * cse;
    report(2, "singleton worms are Bernoulli site percolation", pass, t, format!("density {mean:.5} +- {se:.5} vs {want:.5}, nn cov {cov:.2e} +- {cse:.2e}"));
}

#[test]
fn c03_subcritical_regime() {
    let t = Instant::now();
    let cfg = config(json!({
        "kind": "subcritical", "seed": 13,
        "model": { "dim": 3, "side": 64, "boundary": "free", "dist": { "kind": "dirac", "T": 4 } },
        "budget": { "replicas": 200 },
        "params": { "lambda": 0.5 },
    }));
    let s = run_experiment(&cfg).unwrap().summary;
    let p = f(&s["crossing"]["p_hat"]);
    let (mean, se, bound) = (f(&s["animals"]["mean"]), f(&s["animals"]["stderr"]), f(&s["bound_series"]));
    let lambda = f(&s["branching_factor"]);
    let pass = (lambda - 0.5).abs() < 1e-12 && p <= 0.05 && mean <= bound + 3.0 * se;
    report(3, "branching factor 1/2 is subcritical", pass, t, format!("crossing {p:.3}, animals {mean:.4} +- {se:.4} vs bound {bound:.3}"));
}

#[test]
fn c04_ball_capacity_scaling() {
    let t = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for dim in [3usize, 5] {
        let scale = 2f64.powi(dim as i32 - 2);
        for r in [4u32, 8] {
            let cap = |radius: u32, tag: u64| {
                let k = TargetSet::ball(dim, Point::ORIGIN, radius);
                let mut p = CapacityParams::default();
                p.escape = EscapeParams { rule: EscapeRule::Margin { margin: radius }, walks_per_site: 1, max_enumerated: 0, sampled_walks: 40_000 };
                capacity(&k, CapacityMethod::EquilibriumMass, &p, &mut rng::stream(14, "ball-cap", tag)).unwrap()
            };
            let a = cap(r, (dim as u64) * 100 + r as u64);
            let b = cap(2 * r, (dim as u64) * 100 + 2 * r as u64 + 50);
            let ratio = b.value / a.value;
            let ok = ratio >= scale / 1.5 && ratio <= 1.5 * scale;
            pass &= ok;
            detail.push(format!("d={dim} R={r}: {ratio:.3} (2^(d-2)={scale})"));
        }
    }
    report(4, "cap(ball(2R)) / cap(ball(R)) near 2^(d-2)", pass, t, detail.join(", "));
}

#[test]
fn c05_singleton_capacity() {
    let t = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for dim in [3usize, 5] {
        let single = PointSet::from_points(dim, [Point::ORIGIN]);
        let k = TargetSet::points(&single);
        let ep = EscapeParams { rule: EscapeRule::Margin { margin: 32 }, walks_per_site: 200_000, max_enumerated: 10, sampled_walks: 0 };
        let em = equilibrium_measure(&k, &ep, &mut rng::stream(15, "singleton", dim as u64)).unwrap();
        let want = 1.0 / green_origin_series(dim, 20_000);
        let ok = (em.total - want).abs() <= 3.0 * em.total_stderr;
        pass &= ok;
        detail.push(format!("d={dim}: {:.5} +- {:.5} vs {want:.5}", em.total, em.total_stderr));
    }
    report(5, "cap({x}) = 1 / g(o, o)", pass, t, detail.join(", "));
}

#[test]
fn c06_led_sandwich() {
    let t = Instant::now();
    let p = LedParams::default();
    let rep = wormlab::harness::led_check(3, 3, &Point::axis(0, 20), &p, 200_000, 16).unwrap();
    report(
        6,
        "hitting probability inside the LED bracket",
        rep.inside,
        t,
        format!("{:.5} +- {:.5} vs [{:.5}, {:.5}] (joint sigma {:.5})", rep.hit, rep.hit_stderr, rep.lo, rep.hi, rep.joint_stderr),
    );
}

fn mean_range_capacity(n: usize, reps: u64, walks: u64) -> (f64, f64) {
    let mut mv = wormlab::stats::MeanVar::new();
    for i in 0..reps {
        let mut r = rng::stream(17, "lln", n as u64 * 1000 + i);
        let traj = walk(5, Point::ORIGIN, n - 1, &mut r);
        let range = PointSet::from_points(5, traj.positions());
        let ep = EscapeParams { rule: EscapeRule::Margin { margin: 16 }, walks_per_site: 1, max_enumerated: 0, sampled_walks: walks };
        let em = equilibrium_measure(&TargetSet::points(&range), &ep, &mut r).unwrap();
        mv.push(em.total / n as f64);
    }
    (mv.mean(), mv.stderr())
}

#[test]
fn c07_lln_range_capacity() {
    let t = Instant::now();
    let (a, ase) = mean_range_capacity(2000, 16, 20_000);
    let (b, bse) = mean_range_capacity(20_000, 4, 40_000);
    let rel = (a - b).abs() / b;
    let pass = a > 0.0 && b > 0.0 && rel < 0.10;
    report(7, "cap(range_n)/n stabilizes in d=5", pass, t, format!("n=2000: {a:.4} +- {ase:.4}, n=20000: {b:.4} +- {bse:.4}, rel diff {rel:.3}"));
}

#[test]
fn c08_energy_algebra() {
    let t = Instant::now();
    let mut r = rng::stream(18, "energy", 0);
    let table = DisplacementGreenTable::estimate(3, 3, 16, 2000, &mut r).unwrap();
    let sites: Vec<Point> = (0..12).map(|i| Point::new(&[i % 4, i / 4, (i * 7) % 3])).collect();
    let green = SiteGreenTable::from_displacements(&sites, &table);
    let mu = SiteMeasure::new(sites.clone(), (0..12).map(|_| r.random_range(0.0..3.0)).collect());
    let mut rev = sites.clone();
    rev.reverse();
    let nu = SiteMeasure::new(rev, (0..12).map(|_| r.random_range(0.0..3.0)).collect());
    let e = energy(&mu, &green).unwrap();
    let mut pass = true;
    for a in [2.0, 1.0 / 3.0] {
        pass &= energy(&mu.scaled(a), &green).unwrap() == (a * a) * e;
    }
    let (ab, ba) = (dirichlet_energy(&mu, &nu, &green).unwrap(), dirichlet_energy(&nu, &mu, &green).unwrap());
    pass &= ab == ba;
    report(8, "E(a mu) = a^2 E(mu) and E(mu, nu) = E(nu, mu) exactly", pass, t, format!("E(mu) = {e:.6}, E(mu, nu) = {ab:.6}"));
}

fn random_connected_set(dim: usize, size: usize, r: &mut impl rand::Rng) -> PointSet {
    let mut set = PointSet::from_points(dim, [Point::ORIGIN]);
    while set.len() < size {
        let base = set.points()[r.random_range(0..set.len())];
        set.insert(base.stepped(r.random_range(0..2 * dim as u8)));
    }
    set
}

#[test]
fn c09_trimming() {
    let t = Instant::now();
    let mut pass = true;
    let mut worst_low = f64::INFINITY;
    let mut worst_high = f64::NEG_INFINITY;
    let mut trims = Vec::new();
    for i in 0..20 {
        let mut r = rng::stream(19, "trim", i);
        let k = random_connected_set(5, 50, &mut r);
        let pre = prefix_capacities(&k, &Point::ORIGIN, 8, 1000, &mut r).unwrap();
        for (inc, se) in pre.increments.iter().zip(&pre.increment_stderr) {
            pass &= *inc >= -3.0 * se && *inc <= 1.0 + 3.0 * se;
            worst_low = worst_low.min(inc / se.max(1e-12));
            worst_high = worst_high.max((inc - 1.0) / se.max(1e-12));
        }
        let a = 0.5 * pre.caps.last().unwrap();
        let tr = trim_to_capacity(&k, &Point::ORIGIN, a, 8, 1000, &mut r).unwrap();
        let ok = tr.capacity >= a - 3.0 * tr.stderr && tr.capacity <= a + 1.0 + 3.0 * tr.stderr;
        pass &= ok;
        trims.push(tr.capacity - a);
    }
    let over = trims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report(9, "prefix increments in [0, 1] and trimming overshoot below 1", pass, t, format!("min z {worst_low:.2}, max (inc-1)/se {worst_high:.2}, max overshoot {over:.3}"));
}

#[test]
fn c10_campbell() {
    let t = Instant::now();
    let cfg = config(json!({
        "kind": "campbell", "seed": 20,
        "model": { "v": 0.2, "dist": { "kind": "table", "masses": [0.5, 0.3, 0.2] } },
        "budget": { "replicas": 500 },
    }));
    let s = run_experiment(&cfg).unwrap().summary;
    let (m, mse) = (f(&s["linear_mean"]["mean"]), f(&s["linear_mean"]["stderr"]));
    let (var, vse) = (f(&s["linear_var"]["value"]), f(&s["linear_var"]["stderr"]));
    let (b, bse) = (f(&s["bilinear"]["mean"]), f(&s["bilinear"]["stderr"]));
    let e = &s["enumeration"];
    let c = &s["campbell"];
    let oracles_agree = (f(&e["mean"]) - f(&c["mean"])).abs() < 1e-4
        && (f(&e["var"]) - f(&c["var"])).abs() < 1e-3
        && (f(&e["bilinear"]) - f(&c["bilinear"])).abs() < 1e-4;
    let pass = oracles_agree
        && (m - f(&e["mean"])).abs() <= 3.0 * mse
        && (var - f(&e["var"])).abs() <= 3.0 * vse
        && (b - f(&e["bilinear"])).abs() <= 3.0 * bse;
    report(
        10,
        "Campbell moments match enumeration",
        pass,
        t,
        format!(
            "mean {m:.4} +- {mse:.4} vs {:.4}, var {var:.4} +- {vse:.4} vs {:.4}, bilinear {b:.4} +- {bse:.4} vs {:.4}",
            f(&e["mean"]),
            f(&e["var"]),
            f(&e["bilinear"])
        ),
    );
}

#[test]
fn c11_scales() {
    let t = Instant::now();
    let p = ScaleParams::default();
    let good = LengthDistribution::new(LengthSpec::LogLogEps { epsilon: 0.5, ell0: 16 }).unwrap();
    let rep = generate_candidate_sequence(&good, &p, 0.25, 40, 10).unwrap();
    let seq = rep.found.expect("a good sequence for eps = 1/2");
    let cert = &seq.certificate;
    // margins from scratch
    let ln2 = std::f64::consts::LN_2;
    let mut exact = true;
    let n_top = seq.horizon as usize;
    for c in &cert.conditions {
        let want = match (c.name, c.n) {
            (ConditionName::InitialScale, _) => seq.scales[0].ln - p.r0_star.ln(),
            (ConditionName::MomentWindow, Some(n)) => {
                let (a, b) = (seq.scales[n as usize].ln, seq.scales[n as usize + 1].ln);
                p.v.ln() + good.ln_second_moment_window(p.delta_low.ln() + 2.0 * a, p.delta_up.ln() + 2.0 * b) - p.alpha_low.ln()
            }
            (ConditionName::GrowthBound, Some(n)) => {
                p.psi.ln() + (p.dim as f64 - 4.0) * seq.scales[n as usize].ln - (n as f64 * ln2 + p.gamma0.ln())
            }
            (ConditionName::Shooting, _) => {
                let top = seq.scales[n_top + 1].ln;
                (n_top + 1) as f64 * ln2 + p.gamma0.ln() + p.s.ln() + p.v.ln() + 4.0 * top + good.ln_tail_mass(p.lambda.ln() + 2.0 * top)
                    - 2f64.ln()
            }
            _ => f64::NAN,
        };
        exact &= c.margin == want;
    }
    let grid: Vec<u64> = (4..=20).map(|k| 1u64 << k).collect();
    let scan = scan_ell0(-0.5, &grid, &p, 0.25, 40, 10).unwrap();
    let first_fail = scan.first_all_fail;
    let pass = cert.all_pass && exact && first_fail.is_some() && t.elapsed().as_secs_f64() < 10.0;
    report(
        11,
        "scales certifier",
        pass,
        t,
        format!("eps=1/2: n0={} N={} all pass; eps=-1/2: first all-fail ell0 {first_fail:?}; margins exact {exact}", seq.generator.unwrap().n0, seq.horizon),
    );
}

#[test]
fn c12_target_shooting() {
    let t = Instant::now();
    let dist = LengthDistribution::new(LengthSpec::Geometric { mean_t: 200.0 }).unwrap();
    let h = TargetSet::ball(3, Point::axis(0, 6), 1);
    let base = ShootingInstance { dim: 3, y: Point::ORIGIN, big_r: 2, beta: 8.0, v: 1.0 };
    // lambda is linear in v: calibrate on one stream, test on another
    let unit = target_shooting_estimate(&base, &h, &dist, 200_000, 0, None, &mut rng::stream(21, "shoot", 0));
    let inst = ShootingInstance { v: 3.0 / unit.lambda_hat, ..base };
    let rep = target_shooting_estimate(&inst, &h, &dist, 200_000, 2000, None, &mut rng::stream(21, "shoot", 1));
    let sigma = rep.empirical.stderr();
    let pass = rep.lambda_hat >= 2.0 && rep.empirical.p_hat >= 0.75 - 3.0 * sigma;
    report(
        12,
        "at least one boomerang worm",
        pass,
        t,
        format!("lambda {:.3} +- {:.3}, P {:.4} +- {sigma:.4}, 1 - e^-lambda {:.4}", rep.lambda_hat, rep.lambda_stderr, rep.empirical.p_hat, rep.predicted),
    );
}

#[test]
fn c13_monotone_coupling() {
    let t = Instant::now();
    let geom = BoxGeometry::cube(2, 16, Boundary::Free).unwrap();
    let law = AnimalLaw::Worms(LengthDistribution::new(LengthSpec::Geometric { mean_t: 3.0 }).unwrap());
    let policy = GenerationPolicy::PaddedWindow { margin: 6 };
    let (v, v2) = (0.15, 0.3);
    let mut pass = true;
    let mut crossings = (0, 0);
    for i in 0..100 {
        let lo = generate_cloud(&geom, v, &law, policy, &mut rng::stream(22, "coupling", i)).unwrap();
        let hi = generate_cloud(&geom, v2, &law, policy, &mut rng::stream(22, "coupling", i)).unwrap();
        let (tl, th) = (lo.trace(), hi.trace());
        pass &= tl.is_subset(&th);
        let cl = crossing(&label_clusters(&tl), &geom, 0).unwrap();
        let ch = crossing(&label_clusters(&th), &geom, 0).unwrap();
        pass &= !cl || ch;
        crossings.0 += cl as u32;
        crossings.1 += ch as u32;
    }
    report(13, "trace and crossing increase with v under shared seeds", pass, t, format!("crossings {} at v={v}, {} at v={v2}", crossings.0, crossings.1));
}

#[test]
fn c14_determinism() {
    let t = Instant::now();
    let configs = [
        json!({ "kind": "density", "model": { "dim": 2, "side": 32, "boundary": "torus", "v": 0.5, "dist": { "kind": "geometric", "meanT": 4.0 } }, "budget": { "replicas": 100 } }),
        json!({ "kind": "subcritical", "model": { "dim": 3, "side": 24, "dist": { "kind": "dirac", "T": 3 } }, "budget": { "replicas": 70 } }),
        json!({ "kind": "explore", "model": { "dim": 3, "side": 16, "boundary": "torus", "v": 0.05, "dist": { "kind": "geometric", "meanT": 3.0 } }, "budget": { "replicas": 70 } }),
        json!({ "kind": "vc-sweep", "model": { "dim": 2, "dist": { "kind": "dirac", "T": 1 } }, "budget": { "replicas": 60 }, "params": { "sides": [8], "max_iter": 4 } }),
        json!({ "kind": "campbell", "model": { "v": 0.3, "dist": { "kind": "table", "masses": [0.6, 0.4] } }, "budget": { "replicas": 100 } }),
        json!({ "kind": "capacity", "model": { "dim": 3 }, "budget": { "walks": 2000 }, "params": { "radii": [1, 2] } }),
        json!({ "kind": "scales", "model": { "dim": 5, "v": 1.0, "dist": { "kind": "loglog", "epsilon": 0.5 } } }),
    ];
    let mut pass = true;
    let mut names = Vec::new();
    for c in configs {
        let cfg = config(c);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_experiment(&cfg)).unwrap();
        let two = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| run_experiment(&cfg)).unwrap();
        let same = one.csv == two.csv && one.json == two.json;
        pass &= same;
        names.push(format!("{}={}", cfg.kind, if same { "same" } else { "DIFFERENT" }));
    }
    report(14, "identical config and seed give byte-identical outputs", pass, t, names.join(", "));
}
