//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cluster::{KMeansConfig, ThresholdMode, DEFAULT_EPSILON, DEFAULT_K_RANGE, DEFAULT_SEED, SILHOUETTE_SAMPLE};
use crate::features::{BurstParams, FeatureConfig};
use crate::segment::{Granularity, GranularityKind};
use crate::vocab::{DedupeMode, SeverityWeights};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetRule {
    /// Most malicious members, then size, then lowest id.
    #[default]
    MostMalicious,
    /// Largest cluster holding any malicious member, then lowest id.
    Largest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub granularities: Vec<Granularity>,
    pub feature_configs: Vec<FeatureConfig>,
    pub epsilon: f64,
    pub threshold_mode: ThresholdMode,
    /// Mode for the whole-history granularity.
    pub threshold_mode_all: ThresholdMode,
    pub bursts: BurstParams,
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans: KMeansConfig,
    pub seed: u64,
    pub silhouette_sample: usize,
    pub target_rule: TargetRule,
    /// Run the agglomerative comparison on segments up to this many points; 0 disables it.
    pub agglomerative_max_points: usize,
    pub excluded: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub severity_weights: SeverityWeights,
    pub dedupe: DedupeMode,
    pub max_block: Option<u64>,
}

pub const KEYS: &[&str] = &[
    "dataset",
    "out",
    "granularities",
    "feature_configs",
    "epsilon",
    "threshold_mode",
    "threshold_mode_all",
    "burst.temporal_gap_max",
    "burst.degree_threshold",
    "burst.value_run_min",
    "k_min",
    "k_max",
    "kmeans.max_iter",
    "kmeans.tol",
    "seed",
    "silhouette_sample",
    "target_rule",
    "agglomerative_max_points",
    "excluded",
    "vocabulary",
    "aliases",
    "severity.high",
    "severity.medium",
    "severity.low",
    "severity.dedupe",
    "max_block",
    "span.1day",
    "span.3day",
    "span.1month",
];

impl PipelineConfig {
    pub fn new(dataset: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            dataset: dataset.into(),
            out: out.into(),
            granularities: GranularityKind::ALL.iter().map(|k| Granularity::new(*k)).collect(),
            feature_configs: FeatureConfig::BOTH.to_vec(),
            epsilon: DEFAULT_EPSILON,
            threshold_mode: ThresholdMode::Absolute,
            threshold_mode_all: ThresholdMode::RelativeToMax,
            bursts: BurstParams::default(),
            k_min: DEFAULT_K_RANGE.0,
            k_max: DEFAULT_K_RANGE.1,
            kmeans: KMeansConfig::default(),
            seed: DEFAULT_SEED,
            silhouette_sample: SILHOUETTE_SAMPLE,
            target_rule: TargetRule::MostMalicious,
            agglomerative_max_points: 2000,
            excluded: None,
            vocabulary: None,
            aliases: None,
            severity_weights: SeverityWeights::default(),
            dedupe: DedupeMode::Distinct,
            max_block: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let k = k.trim().to_string();
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey { line: i + 1, key: k });
            }
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::DuplicateKey { line: i + 1, key: k });
            }
        }
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let dataset = kv.get("dataset").map(|v| path(v)).ok_or(ConfigError::Missing("dataset"))?;
        let out = kv.get("out").map(|v| path(v)).unwrap_or_else(|| base.join("out"));
        let mut c = PipelineConfig::new(dataset, out);

        fn num<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError> {
            kv.get(key)
                .map(|v| v.parse::<T>().map_err(|_| invalid(key, format!("cannot parse {v:?}"))))
                .transpose()
        }

        let mut spans: BTreeMap<GranularityKind, u64> = BTreeMap::new();
        for (key, kind) in [
            ("span.1day", GranularityKind::Day1),
            ("span.3day", GranularityKind::Day3),
            ("span.1month", GranularityKind::Month1),
        ] {
            if let Some(s) = num::<u64>(&kv, key)? {
                if s == 0 {
                    return Err(invalid(key, "must be positive"));
                }
                spans.insert(kind, s);
            }
        }
        if let Some(v) = kv.get("granularities") {
            c.granularities = v
                .split(',')
                .map(|g| g.parse::<GranularityKind>().map_err(|e| invalid("granularities", e)))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .map(Granularity::new)
                .collect();
        }
        for g in &mut c.granularities {
            if let Some(s) = spans.get(&g.kind) {
                *g = Granularity::with_span(g.kind, *s);
            }
        }
        if let Some(v) = kv.get("feature_configs") {
            c.feature_configs = v
                .split(',')
                .map(|f| f.parse::<FeatureConfig>().map_err(|e| invalid("feature_configs", e)))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = num(&kv, "epsilon")? {
            c.epsilon = v;
        }
        if let Some(v) = kv.get("threshold_mode") {
            c.threshold_mode = v.parse().map_err(|e: String| invalid("threshold_mode", e))?;
        }
        if let Some(v) = kv.get("threshold_mode_all") {
            c.threshold_mode_all = v.parse().map_err(|e: String| invalid("threshold_mode_all", e))?;
        }
        if let Some(v) = num(&kv, "burst.temporal_gap_max")? {
            c.bursts.temporal_gap_max = v;
        }
        if let Some(v) = num(&kv, "burst.degree_threshold")? {
            c.bursts.degree_threshold = v;
        }
        if let Some(v) = num(&kv, "burst.value_run_min")? {
            c.bursts.value_run_min = v;
        }
        if let Some(v) = num(&kv, "k_min")? {
            c.k_min = v;
        }
        if let Some(v) = num(&kv, "k_max")? {
            c.k_max = v;
        }
        if let Some(v) = num(&kv, "kmeans.max_iter")? {
            c.kmeans.max_iter = v;
        }
        if let Some(v) = num(&kv, "kmeans.tol")? {
            c.kmeans.tol = v;
        }
        if let Some(v) = num(&kv, "seed")? {
            c.seed = v;
        }
        if let Some(v) = num(&kv, "silhouette_sample")? {
            c.silhouette_sample = v;
        }
        if let Some(v) = kv.get("target_rule") {
            c.target_rule = match v.as_str() {
                "most_malicious" => TargetRule::MostMalicious,
                "largest" => TargetRule::Largest,
                _ => return Err(invalid("target_rule", format!("unknown rule {v:?}"))),
            };
        }
        if let Some(v) = num(&kv, "agglomerative_max_points")? {
            c.agglomerative_max_points = v;
        }
        c.excluded = kv.get("excluded").map(|v| path(v));
        c.vocabulary = kv.get("vocabulary").map(|v| path(v));
        c.aliases = kv.get("aliases").map(|v| path(v));
        if let Some(v) = num(&kv, "severity.high")? {
            c.severity_weights.high = v;
        }
        if let Some(v) = num(&kv, "severity.medium")? {
            c.severity_weights.medium = v;
        }
        if let Some(v) = num(&kv, "severity.low")? {
            c.severity_weights.low = v;
        }
        if let Some(v) = kv.get("severity.dedupe") {
            c.dedupe = match v.as_str() {
                "distinct" => DedupeMode::Distinct,
                "multiset" => DedupeMode::Multiset,
                _ => return Err(invalid("severity.dedupe", format!("unknown mode {v:?}"))),
            };
        }
        c.max_block = num(&kv, "max_block")?;
        c.validate()
    }

    pub fn validate(self) -> Result<Self, ConfigError> {
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon", "must lie in [0, 1)"));
        }
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(invalid("k_min", format!("need 2 <= k_min <= k_max, got {}..{}", self.k_min, self.k_max)));
        }
        if self.kmeans.max_iter == 0 {
            return Err(invalid("kmeans.max_iter", "must be positive"));
        }
        if self.kmeans.tol.is_nan() || self.kmeans.tol < 0.0 {
            return Err(invalid("kmeans.tol", "must be non-negative"));
        }
        if self.silhouette_sample < 2 {
            return Err(invalid("silhouette_sample", "must be at least 2"));
        }
        if self.granularities.is_empty() {
            return Err(invalid("granularities", "empty list"));
        }
        if self.feature_configs.is_empty() {
            return Err(invalid("feature_configs", "empty list"));
        }
        if self.max_block == Some(0) {
            return Err(invalid("max_block", "must be positive"));
        }
        self.bursts.validate().map_err(|e| invalid("burst", e))?;
        self.severity_weights.validate().map_err(|e| invalid("severity", e.to_string()))?;
        Ok(self)
    }

    pub fn mode_for(&self, kind: GranularityKind) -> ThresholdMode {
        if kind == GranularityKind::All {
            self.threshold_mode_all
        } else {
            self.threshold_mode
        }
    }
}
