//! Declarative run configuration, loaded from TOML with dotted overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hlevent_core::hl_export::TimestampMode;
use hlevent_core::interplay::{Binning, RankWeights};
use hlevent_core::robustness::{RobustnessPolicy, ThresholdOverrides};
use hlevent_core::simgen::ScenarioConfig;
use hlevent_core::{
    AspectKind, ComponentKind, Direction, Duration, EventLog, ProximityMethod, Schema, ThreadPrune,
    ThresholdPolicy, Timestamp,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub input: InputConfig,
    pub framing: FramingConfig,
    /// Empty selects every aspect the log supports.
    pub aspects: Vec<AspectKind>,
    pub thresholds: ThresholdsConfig,
    pub proximity: ProximityConfig,
    pub threads: ThreadPrune,
    pub interplay: InterplayConfig,
    pub robustness: RobustnessConfig,
    pub export: ExportConfig,
    pub simulate: SimulateConfig,
    /// Worker threads; defaults to the available cores.
    pub parallelism: Option<usize>,
    /// Overrides the scenario seed when simulating.
    pub seed: Option<u64>,
    pub output: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            input: InputConfig::default(),
            framing: FramingConfig::default(),
            aspects: Vec::new(),
            thresholds: ThresholdsConfig::default(),
            proximity: ProximityConfig::default(),
            threads: ThreadPrune::default(),
            interplay: InterplayConfig::default(),
            robustness: RobustnessConfig::default(),
            export: ExportConfig::default(),
            simulate: SimulateConfig::default(),
            parallelism: None,
            seed: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FramingConfig {
    pub width: Duration,
    /// Written in the input's timestamp format; defaults to the first event.
    pub origin: Option<String>,
}

impl Default for FramingConfig {
    fn default() -> Self {
        FramingConfig {
            width: Duration::from_secs(3600),
            origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdOverride {
    pub aspect: AspectKind,
    /// Component label; absent means every component of the aspect.
    pub component: Option<String>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdsConfig {
    pub percentile: f64,
    pub direction: Direction,
    pub min_case_count: usize,
    pub overrides: Vec<ThresholdOverride>,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        let p = ThresholdPolicy::default();
        ThresholdsConfig {
            percentile: p.percentile,
            direction: p.direction,
            min_case_count: p.min_case_count,
            overrides: Vec::new(),
        }
    }
}

impl ThresholdsConfig {
    pub fn policy(&self, log: &EventLog) -> Result<ThresholdPolicy> {
        let mut policy = ThresholdPolicy {
            percentile: self.percentile,
            direction: self.direction,
            min_case_count: self.min_case_count,
            ..ThresholdPolicy::default()
        };
        for o in &self.overrides {
            match &o.component {
                None => {
                    policy.aspect_overrides.insert(o.aspect, o.value);
                }
                Some(label) => {
                    let c = log
                        .parse_component(label)
                        .with_context(|| format!("threshold override for {}", o.aspect))?;
                    policy.overrides.insert((o.aspect, c), o.value);
                }
            }
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProximityConfig {
    pub method: ProximityMethod,
    pub lambda: f64,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        ProximityConfig {
            method: ProximityMethod::Link,
            lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterplayConfig {
    /// Case attributes to test; empty selects every case-level attribute.
    pub attributes: Vec<String>,
    /// `auto`, `categorical`, `quantile` or `quantile:<n>`.
    pub bins: String,
    pub weights: RankWeights,
    /// How many top-ranked variants get independence tests.
    pub test_top: usize,
}

impl Default for InterplayConfig {
    fn default() -> Self {
        InterplayConfig {
            attributes: Vec::new(),
            bins: "auto".into(),
            weights: RankWeights::default(),
            test_top: 20,
        }
    }
}

impl InterplayConfig {
    pub fn binning(&self) -> Result<Binning> {
        Ok(self.bins.parse()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub queue_percentile: f64,
    /// `q`, `p`, `t`, `tr` for every activity.
    pub defaults: ThresholdOverrides,
    /// Per-activity thresholds, keyed by activity name.
    pub activities: BTreeMap<String, ThresholdOverrides>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            queue_percentile: RobustnessPolicy::default().queue_percentile,
            defaults: ThresholdOverrides::default(),
            activities: BTreeMap::new(),
        }
    }
}

impl RobustnessConfig {
    pub fn policy(&self, log: &EventLog) -> Result<RobustnessPolicy> {
        let mut per_activity = BTreeMap::new();
        for (name, o) in &self.activities {
            let a = log
                .activity_id(name)
                .with_context(|| format!("robustness thresholds for unknown activity {name:?}"))?;
            per_activity.insert(a, *o);
        }
        Ok(RobustnessPolicy {
            queue_percentile: self.queue_percentile,
            defaults: self.defaults,
            per_activity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub timestamp_mode: TimestampMode,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Built-in scenario name.
    pub preset: Option<String>,
    /// Scenario TOML file; exclusive with `preset`.
    pub scenario: Option<PathBuf>,
}

impl SimulateConfig {
    pub fn scenario(&self, seed: Option<u64>) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.preset, &self.scenario) {
            (Some(_), Some(_)) => bail!("simulate.preset and simulate.scenario are exclusive"),
            (_, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading scenario {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing scenario {}", path.display()))?
            }
            (Some(name), None) => ScenarioConfig::preset(name)?,
            (None, None) => ScenarioConfig::preset("citizenship")?,
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Config {
    /// Reads `path` (if any), applies `key=value` overrides and validates.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Config> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let table: toml::Table = toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for s in sets {
            apply_override(&mut table, s)?;
        }
        let mut cfg: Config = toml::Value::Table(table)
            .try_into()
            .context("invalid config")?;
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes relative paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.input.path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.simulate.scenario.as_mut() {
            fix(p);
        }
        fix(&mut self.output);
    }

    /// Every problem at once, one per line.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if self.framing.width.millis() <= 0 {
            errs.push("framing.width must be positive".into());
        }
        if let Some(o) = &self.framing.origin {
            if self.input.schema.timestamp_format.parse(o).is_err() {
                errs.push(format!(
                    "framing.origin {o:?} does not match input.schema.timestamp_format"
                ));
            }
        }
        let t = &self.thresholds;
        if !(t.percentile > 0.0 && t.percentile <= 100.0) {
            errs.push(format!(
                "thresholds.percentile must lie in (0, 100], got {}",
                t.percentile
            ));
        }
        if t.overrides.iter().any(|o| !o.value.is_finite()) {
            errs.push("thresholds.overrides values must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.proximity.lambda) {
            errs.push(format!(
                "proximity.lambda must lie in [0, 1], got {}",
                self.proximity.lambda
            ));
        }
        if self.proximity.method == ProximityMethod::SegmentOverlap {
            let bad: Vec<&str> = self
                .aspects
                .iter()
                .filter(|k| k.level() != ComponentKind::Segment)
                .map(|k| k.name())
                .collect();
            if !bad.is_empty() {
                errs.push(format!(
                    "segment_overlap needs segment aspects; not segment-based: {}",
                    bad.join(", ")
                ));
            }
        }
        let th = &self.threads;
        if !(0.0..=1.0).contains(&th.min_first_last_case_share) {
            errs.push("threads.min_first_last_case_share must lie in [0, 1]".into());
        }
        if th.max_length == 0 || th.max_count == 0 {
            errs.push("threads.max_length and threads.max_count must be positive".into());
        }
        if let Err(e) = self.interplay.binning() {
            errs.push(format!("interplay.bins: {e}"));
        }
        let w = self.interplay.weights;
        let ws = [w.size, w.frequency, w.reach];
        if ws.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || ws.iter().sum::<f64>() <= 0.0 {
            errs.push("interplay.weights must be non-negative with a positive sum".into());
        }
        let r = &self.robustness;
        if !(r.queue_percentile > 0.0 && r.queue_percentile <= 100.0) {
            errs.push("robustness.queue_percentile must lie in (0, 100]".into());
        }
        for (name, o) in std::iter::once(("defaults", &r.defaults))
            .chain(r.activities.iter().map(|(k, v)| (k.as_str(), v)))
        {
            for (key, v) in [
                ("enqueue_ratio", o.enqueue_ratio),
                ("takeover_ratio", o.takeover_ratio),
            ] {
                if v.is_some_and(|v| !(0.0..=1.0).contains(&v)) {
                    errs.push(format!("robustness {name}.{key} must lie in [0, 1]"));
                }
            }
            if o.queue.is_some_and(|q| !(q.is_finite() && q >= 0.0)) {
                errs.push(format!("robustness {name}.queue must be non-negative"));
            }
        }
        if self.parallelism == Some(0) {
            errs.push("parallelism must be at least 1".into());
        }
        if self.simulate.preset.is_some() && self.simulate.scenario.is_some() {
            errs.push("simulate.preset and simulate.scenario are exclusive".into());
        }
        if let Some(p) = &self.simulate.preset {
            if !ScenarioConfig::PRESETS.contains(&p.as_str()) {
                errs.push(format!(
                    "unknown simulate.preset {p:?} (known: {})",
                    ScenarioConfig::PRESETS.join(", ")
                ));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            bail!("invalid config:\n  {}", errs.join("\n  "))
        }
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn origin(&self) -> Result<Option<Timestamp>> {
        self.framing
            .origin
            .as_deref()
            .map(|o| self.input.schema.timestamp_format.parse(o))
            .transpose()
            .context("framing.origin")
    }

    /// Configured aspects, or every aspect the log and proximity method support.
    pub fn aspects(&self, log: &EventLog) -> Vec<AspectKind> {
        if !self.aspects.is_empty() {
            return self.aspects.clone();
        }
        AspectKind::ALL
            .into_iter()
            .filter(|k| log.has_resources() || !k.needs_resources())
            .filter(|k| {
                self.proximity.method != ProximityMethod::SegmentOverlap
                    || k.level() == ComponentKind::Segment
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Applies `a.b.c=value`; the value is read as TOML, falling back to a string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override {spec:?} is not of the form key=value");
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} is malformed");
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override {key:?}: {p:?} is not a table"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
