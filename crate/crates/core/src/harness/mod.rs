//! Experiment configs, presets, reproducible runs and output files.
//!
//! A run writes three files into the output directory: `<stem>.csv` with one
//! row per replica or grid point, `<stem>.json` with the summary, and
//! `<stem>.timing.json` with wall-clock figures. The first two embed the
//! schema version and the resolved config and depend only on the config, so
//! reruns reproduce them byte for byte. Timing lives in its own file for
//! that reason.

mod experiments;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lattice::{Boundary, BoxGeometry, Point};
use crate::lengths::{DistConfig, LengthDistribution, LengthSpec};
use crate::worms::{default_margin, AnimalLaw, GenerationPolicy};

pub use experiments::*;

/// Bumped on any change to a CSV column set or to the JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Density,
    Subcritical,
    VcSweep,
    Capacity,
    Green,
    LlnRange,
    Led,
    HittingSums,
    Subboxes,
    Campbell,
    Scales,
    TargetShooting,
    Explore,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 13] = [
        ExperimentKind::Density,
        ExperimentKind::Subcritical,
        ExperimentKind::VcSweep,
        ExperimentKind::Capacity,
        ExperimentKind::Green,
        ExperimentKind::LlnRange,
        ExperimentKind::Led,
        ExperimentKind::HittingSums,
        ExperimentKind::Subboxes,
        ExperimentKind::Campbell,
        ExperimentKind::Scales,
        ExperimentKind::TargetShooting,
        ExperimentKind::Explore,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Density => "density",
            ExperimentKind::Subcritical => "subcritical",
            ExperimentKind::VcSweep => "vc-sweep",
            ExperimentKind::Capacity => "capacity",
            ExperimentKind::Green => "green",
            ExperimentKind::LlnRange => "lln-range",
            ExperimentKind::Led => "led",
            ExperimentKind::HittingSums => "hitting-sums",
            ExperimentKind::Subboxes => "subboxes",
            ExperimentKind::Campbell => "campbell",
            ExperimentKind::Scales => "scales",
            ExperimentKind::TargetShooting => "target-shooting",
            ExperimentKind::Explore => "explore",
        }
    }

    pub fn from_name(s: &str) -> Option<ExperimentKind> {
        ExperimentKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_dim() -> usize {
    3
}
fn default_side() -> u32 {
    32
}
fn default_dist() -> DistConfig {
    DistConfig { spec: LengthSpec::Dirac { t: 1 }, cap: None }
}
fn default_seed() -> u64 {
    1
}
fn default_replicas() -> u64 {
    100
}
fn default_walks() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Window side length.
    #[serde(default = "default_side")]
    pub side: u32,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_grid: Option<Vec<f64>>,
    #[serde(default = "default_dist")]
    pub dist: DistConfig,
    /// Padding for free windows; defaults from the length cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<u32>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { dim: 3, side: 32, boundary: Boundary::Free, v: None, v_grid: None, dist: default_dist(), margin: None }
    }
}

impl ModelConfig {
    /// The window, placed so that the origin sits at its center.
    pub fn window(&self) -> Result<BoxGeometry, HarnessError> {
        let mut origin = Point::ORIGIN;
        for a in 0..self.dim {
            origin.0[a] = -((self.side / 2) as i32);
        }
        BoxGeometry::new(self.dim, self.side, self.boundary, origin).map_err(|e| HarnessError::Run(e.to_string()))
    }

    pub fn length_law(&self) -> Result<LengthDistribution, HarnessError> {
        self.dist.build().map_err(|e| HarnessError::Run(e.to_string()))
    }

    pub fn policy(&self, dist: &LengthDistribution) -> GenerationPolicy {
        match self.boundary {
            Boundary::Torus => GenerationPolicy::TorusWrap,
            Boundary::Free => {
                let reach = dist.cap().or(dist.support_max()).unwrap_or_else(|| dist.tail_quantile(1e-6));
                GenerationPolicy::PaddedWindow { margin: self.margin.unwrap_or_else(|| default_margin(reach)) }
            }
        }
    }

    pub fn animal_law(&self) -> Result<AnimalLaw, HarnessError> {
        Ok(AnimalLaw::Worms(self.length_law()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default = "default_walks")]
    pub walks: u64,
    /// Replica loops stop after the chunk that crosses this and flag the
    /// output as partial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig { replicas: default_replicas(), walks: default_walks(), max_seconds: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// File stem; defaults to the experiment kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

/// A full experiment description as read from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    /// Kind-specific parameters; see [`KindParams`].
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub output: OutputConfig,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn list(issues: &[Issue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {}", list(.0))]
    Validation(Vec<Issue>),
    #[error("unknown preset {name:?}; valid presets: {}", PRESETS.join(", "))]
    UnknownPreset { name: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Run(String),
}

impl HarnessError {
    fn invalid(key: &str, message: impl Into<String>) -> HarnessError {
        HarnessError::Validation(vec![Issue { key: key.to_string(), message: message.into() }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn from_path(p: &Path) -> ConfigFormat {
        match p.extension().and_then(|e| e.to_str()) {
            Some("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

/// Parses and validates a config. Every unknown key and every failed check
/// is collected into a single validation error.
pub fn parse_config(text: &str, format: ConfigFormat) -> Result<ExperimentConfig, HarnessError> {
    let value: Value = match format {
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| HarnessError::invalid("<document>", e.to_string()))?,
        ConfigFormat::Json => serde_json::from_str(text).map_err(|e| HarnessError::invalid("<document>", e.to_string()))?,
    };
    let mut unknown = Vec::new();
    let cfg: ExperimentConfig = serde_ignored::deserialize(value, |path| unknown.push(path.to_string()))
        .map_err(|e| HarnessError::invalid("<document>", e.to_string()))?;
    let mut issues: Vec<Issue> = unknown.into_iter().map(|key| Issue { key, message: "unknown key".into() }).collect();
    match resolve_params(&cfg) {
        Ok(_) => {}
        Err(HarnessError::Validation(more)) => issues.extend(more),
        Err(e) => return Err(e),
    }
    if issues.is_empty() {
        issues.extend(validate(&cfg));
    }
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(HarnessError::Validation(issues))
    }
}

/// Reads a config file, choosing the format by extension.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, ConfigFormat::from_path(path))
}

fn params_as<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, HarnessError> {
    let mut unknown = Vec::new();
    let parsed: Result<T, _> = serde_ignored::deserialize(v.clone(), |path| unknown.push(format!("params.{path}")));
    let mut issues: Vec<Issue> = unknown.into_iter().map(|key| Issue { key, message: "unknown key".into() }).collect();
    match parsed {
        Ok(t) if issues.is_empty() => Ok(t),
        Ok(_) => Err(HarnessError::Validation(issues)),
        Err(e) => {
            issues.push(Issue { key: "params".into(), message: e.to_string() });
            Err(HarnessError::Validation(issues))
        }
    }
}

/// Kind-specific parameters with every default filled in.
pub fn resolve_params(cfg: &ExperimentConfig) -> Result<KindParams, HarnessError> {
    let p = &cfg.params;
    Ok(match cfg.kind {
        ExperimentKind::Density => KindParams::Density(params_as(p)?),
        ExperimentKind::Subcritical => KindParams::Subcritical(params_as(p)?),
        ExperimentKind::VcSweep => KindParams::VcSweep(params_as(p)?),
        ExperimentKind::Capacity => KindParams::Capacity(params_as(p)?),
        ExperimentKind::Green => KindParams::Green(params_as(p)?),
        ExperimentKind::LlnRange => KindParams::LlnRange(params_as(p)?),
        ExperimentKind::Led => KindParams::Led(params_as(p)?),
        ExperimentKind::HittingSums => KindParams::HittingSums(params_as(p)?),
        ExperimentKind::Subboxes => KindParams::Subboxes(params_as(p)?),
        ExperimentKind::Campbell => KindParams::Campbell(params_as(p)?),
        ExperimentKind::Scales => KindParams::Scales(params_as(p)?),
        ExperimentKind::TargetShooting => KindParams::TargetShooting(params_as(p)?),
        ExperimentKind::Explore => KindParams::Explore(params_as(p)?),
    })
}

fn issue(issues: &mut Vec<Issue>, ok: bool, key: &str, message: &str) {
    if !ok {
        issues.push(Issue { key: key.into(), message: message.into() });
    }
}

/// Checks module preconditions up front.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Issue> {
    let mut out = Vec::new();
    let m = &cfg.model;
    issue(&mut out, (1..=crate::lattice::MAX_DIM).contains(&m.dim), "model.dim", "must be in 1..=8");
    issue(&mut out, m.side >= 1, "model.side", "must be >= 1");
    if let Some(v) = m.v {
        issue(&mut out, v >= 0.0 && v.is_finite(), "model.v", "must be finite and >= 0");
    }
    if let Some(g) = &m.v_grid {
        issue(&mut out, g.iter().all(|v| *v >= 0.0 && v.is_finite()), "model.v_grid", "entries must be finite and >= 0");
    }
    if let Err(e) = m.dist.build() {
        out.push(Issue { key: "model.dist".into(), message: e.to_string() });
    }
    issue(&mut out, cfg.budget.replicas >= 1, "budget.replicas", "must be >= 1");
    issue(&mut out, cfg.budget.walks >= 1, "budget.walks", "must be >= 1");
    if let Some(s) = cfg.budget.max_seconds {
        issue(&mut out, s > 0.0, "budget.max_seconds", "must be > 0");
    }
    if let Ok(kp) = resolve_params(cfg) {
        out.extend(kp.validate(cfg));
    }
    out
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 5] = ["fri-d3", "loop-proxy-d3", "loop-proxy-d4", "loglog-d5", "bernoulli-reduction"];

/// A fully specified config for a named model.
pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let model = |dim, side, boundary, v: Option<f64>, spec, cap| ModelConfig {
        dim,
        side,
        boundary,
        v,
        v_grid: None,
        dist: DistConfig { spec, cap },
        margin: None,
    };
    let base = |kind, m: ModelConfig, params: Value| ExperimentConfig {
        kind,
        name: Some(name.to_string()),
        seed: 1,
        model: m,
        budget: BudgetConfig::default(),
        params,
        output: OutputConfig::default(),
    };
    let sweep = |sides: &[u32], lo: f64, hi: f64| serde_json::json!({ "sides": sides, "v_lo": lo, "v_hi": hi });
    let cfg = match name {
        // finitary random interlacements: geometric lengths
        "fri-d3" => base(
            ExperimentKind::Density,
            model(3, 32, Boundary::Torus, Some(0.05), LengthSpec::Geometric { mean_t: 10.0 }, None),
            empty_object(),
        ),
        "loop-proxy-d3" => base(
            ExperimentKind::VcSweep,
            model(3, 16, Boundary::Free, None, LengthSpec::PowerLaw { beta: 2.5, ell0: 1 }, Some(1024)),
            sweep(&[8, 16], 0.005, 0.5),
        ),
        "loop-proxy-d4" => base(
            ExperimentKind::VcSweep,
            model(4, 8, Boundary::Free, None, LengthSpec::PowerLaw { beta: 3.0, ell0: 1 }, Some(1024)),
            sweep(&[6, 8], 0.005, 0.5),
        ),
        "loglog-d5" => base(
            ExperimentKind::Scales,
            model(5, 32, Boundary::Free, Some(1.0), LengthSpec::LogLogEps { epsilon: 0.5, ell0: 16 }, None),
            empty_object(),
        ),
        "bernoulli-reduction" => base(
            ExperimentKind::Density,
            model(2, 64, Boundary::Torus, Some(0.3), LengthSpec::Dirac { t: 1 }, None),
            empty_object(),
        ),
        _ => return Err(HarnessError::UnknownPreset { name: name.to_string() }),
    };
    Ok(cfg)
}

/// Files and in-memory contents of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub csv: String,
    pub json: String,
    pub timing: String,
    /// Set when a budget ran out; the outputs hold what was finished.
    pub partial: bool,
    pub summary: Value,
}

/// What an experiment hands back before serialization.
pub(crate) struct Outcome {
    pub rows: Vec<Value>,
    pub columns: Vec<&'static str>,
    pub summary: Value,
    pub partial: bool,
}

fn csv_text(cfg_echo: &str, columns: &[&str], rows: &[Value]) -> Result<String, HarnessError> {
    let mut out = format!("# schema_version={SCHEMA_VERSION}\n# config={cfg_echo}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns).map_err(|e| HarnessError::Run(e.to_string()))?;
    for r in rows {
        let rec: Vec<String> = columns
            .iter()
            .map(|c| match r.get(*c) {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Null) | None => String::new(),
                Some(v) => v.to_string(),
            })
            .collect();
        w.write_record(&rec).map_err(|e| HarnessError::Run(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Run(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

/// The config as echoed into outputs: kind params with defaults filled in.
pub fn resolved_echo(cfg: &ExperimentConfig) -> Result<Value, HarnessError> {
    let kp = resolve_params(cfg)?;
    let mut c = cfg.clone();
    c.params = kp.to_value();
    Ok(serde_json::to_value(&c).expect("config serializes"))
}

/// Runs an experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let issues = validate(cfg);
    if !issues.is_empty() {
        return Err(HarnessError::Validation(issues));
    }
    let echo = resolved_echo(cfg)?;
    let kp = resolve_params(cfg)?;
    let started = Instant::now();
    let outcome = kp.run(cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    let echo_line = serde_json::to_string(&echo).expect("json");
    let csv = csv_text(&echo_line, &outcome.columns, &outcome.rows)?;
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": cfg.kind.name(),
        "config": echo,
        "partial": outcome.partial,
        "summary": outcome.summary,
    });
    let json = serde_json::to_string_pretty(&report).expect("json") + "\n";
    let timing = serde_json::to_string_pretty(&serde_json::json!({
        "kind": cfg.kind.name(),
        "wall_seconds": elapsed,
        "rows": outcome.rows.len(),
        "threads": rayon::current_num_threads(),
    }))
    .expect("json")
        + "\n";
    Ok(RunOutput { csv, json, timing, partial: outcome.partial, summary: outcome.summary })
}

/// Runs an experiment and writes `<stem>.csv`, `<stem>.json` and
/// `<stem>.timing.json` into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, HarnessError> {
    let out = run_experiment(cfg)?;
    std::fs::create_dir_all(dir)?;
    let stem = cfg.output.stem.clone().unwrap_or_else(|| cfg.kind.name().to_string());
    std::fs::write(dir.join(format!("{stem}.csv")), &out.csv)?;
    std::fs::write(dir.join(format!("{stem}.json")), &out.json)?;
    std::fs::write(dir.join(format!("{stem}.timing.json")), &out.timing)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_all_listed() {
        let text = r#"
            kind = "density"
            colour = "red"
            [model]
            dim = 2
            sidee = 4
            [params]
            nonsense = 1
        "#;
        match parse_config(text, ConfigFormat::Toml) {
            Err(HarnessError::Validation(issues)) => {
                let keys: Vec<&str> = issues.iter().map(|i| i.key.as_str()).collect();
                assert!(keys.contains(&"colour"), "{keys:?}");
                assert!(keys.contains(&"model.sidee"), "{keys:?}");
                assert!(keys.contains(&"params.nonsense"), "{keys:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_checks() {
        let text = r#"{"kind": "density", "model": {"dim": 2, "v": -1.0}, "budget": {"replicas": 0}}"#;
        match parse_config(text, ConfigFormat::Json) {
            Err(HarnessError::Validation(issues)) => {
                let keys: Vec<&str> = issues.iter().map(|i| i.key.as_str()).collect();
                assert_eq!(keys, ["model.v", "budget.replicas"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn presets() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            assert!(validate(&cfg).is_empty(), "{name}: {:?}", validate(&cfg));
            // the preset round-trips through TOML
            let text = toml::to_string(&cfg).unwrap();
            assert_eq!(parse_config(&text, ConfigFormat::Toml).unwrap(), cfg);
        }
        assert_eq!(preset("bernoulli-reduction").unwrap().model.dist.spec, LengthSpec::Dirac { t: 1 });
        assert_eq!(preset("loglog-d5").unwrap().model.dist.spec, LengthSpec::LogLogEps { epsilon: 0.5, ell0: 16 });
        assert_eq!(preset("loop-proxy-d3").unwrap().model.dist.spec, LengthSpec::PowerLaw { beta: 2.5, ell0: 1 });
        assert!(matches!(preset("nope"), Err(HarnessError::UnknownPreset { .. })));
    }
}
