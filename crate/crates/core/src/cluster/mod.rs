//! Scaling, clustering, cluster selection and suspect flagging.

mod kmeans;
mod silhouette;
mod ward;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::Address;
use crate::segment::{ActivityIndex, GranularityKind};

pub use kmeans::{kmeans, kmeans_stream, ClusterModel, KMeansConfig};
pub use silhouette::{silhouette, silhouette_sampled};
pub use ward::{agglomerative, ward_hierarchy, WardHierarchy};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_EPSILON: f64 = 1e-7;
pub const DEFAULT_K_RANGE: (usize, usize) = (3, 26);
pub const SILHOUETTE_SAMPLE: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
    #[error("no malicious points to anchor a target cluster")]
    NoMaliciousPoints,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty k range {0}..={1}")]
    EmptyRange(usize, usize),
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Per-feature `(min, max)` used by [`minmax_scale`].
pub type Bounds = Vec<(f64, f64)>;

/// Maps every column onto `[0, 1]`; constant columns become 0.
pub fn minmax_scale(vectors: &[Vec<f64>]) -> (Vec<Vec<f64>>, Bounds) {
    let Some(first) = vectors.first() else {
        return (Vec::new(), Vec::new());
    };
    let mut bounds: Bounds = first.iter().map(|x| (*x, *x)).collect();
    for v in &vectors[1..] {
        for (b, x) in bounds.iter_mut().zip(v) {
            b.0 = b.0.min(*x);
            b.1 = b.1.max(*x);
        }
    }
    let scaled = vectors
        .iter()
        .map(|v| {
            v.iter()
                .zip(&bounds)
                .map(|(x, (lo, hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
                .collect()
        })
        .collect();
    (scaled, bounds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best: ClusterModel,
    pub best_silhouette: f64,
    /// `(k, silhouette)` in ascending k.
    pub table: Vec<(usize, f64)>,
}

/// Runs k-means for every k in `k_min..=k_max` (capped at `n - 1`) and keeps
/// the highest silhouette, smallest k on ties. Each k draws its own RNG stream.
pub fn sweep_k(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<SweepResult, ClusterError> {
    let hi = k_max.min(points.len().saturating_sub(1));
    let lo = k_min.max(2);
    if lo > hi {
        return Err(ClusterError::TooFewPoints { needed: lo + 1, got: points.len() });
    }
    let runs: Vec<(usize, ClusterModel, f64)> = (lo..=hi)
        .into_par_iter()
        .map(|k| {
            let m = kmeans_stream(points, k, seed, k as u64, cfg)?;
            let s = match silhouette_sampled(points, &m.assignments, SILHOUETTE_SAMPLE, seed) {
                Ok(s) => s,
                // every point landed in one cluster (all duplicates)
                Err(ClusterError::SingleCluster) => 0.0,
                Err(e) => return Err(e),
            };
            Ok((k, m, s))
        })
        .collect::<Result<_, _>>()?;
    let table: Vec<(usize, f64)> = runs.iter().map(|(k, _, s)| (*k, *s)).collect();
    let mut best = 0;
    for (i, (_, _, s)) in runs.iter().enumerate() {
        if *s > runs[best].2 {
            best = i;
        }
    }
    let (_, model, s) = runs.into_iter().nth(best).expect("non-empty range");
    Ok(SweepResult { best: model, best_silhouette: s, table })
}

/// Cluster with the most malicious members; ties go to the larger cluster,
/// then the lowest id.
pub fn target_cluster(assignments: &[usize], malicious: &[bool]) -> Result<usize, ClusterError> {
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut bad = vec![0usize; k];
    let mut size = vec![0usize; k];
    for (a, m) in assignments.iter().zip(malicious) {
        size[*a] += 1;
        bad[*a] += usize::from(*m);
    }
    (0..k)
        .filter(|c| bad[*c] > 0)
        .min_by(|a, b| bad[*b].cmp(&bad[*a]).then(size[*b].cmp(&size[*a])).then(a.cmp(b)))
        .ok_or(ClusterError::NoMaliciousPoints)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, ClusterError> {
    if u.len() != v.len() {
        return Err(ClusterError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// Flag at or above `1 - eps`.
    #[default]
    Absolute,
    /// Flag within `eps` of the highest benign similarity.
    RelativeToMax,
}

impl FromStr for ThresholdMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "absolute" => Ok(ThresholdMode::Absolute),
            "relative" | "relativetomax" | "relative-to-max" => Ok(ThresholdMode::RelativeToMax),
            _ => Err(format!("unknown threshold mode {s:?}")),
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::Absolute => "absolute",
            ThresholdMode::RelativeToMax => "relative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuspectFlag {
    pub address: Address,
    pub segment: usize,
    pub max_similarity: f64,
    pub flagged: bool,
}

/// A target-cluster member as seen by [`flag_suspects`].
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub address: Address,
    pub vector: &'a [f64],
    pub malicious: bool,
}

/// Scores every benign member by its best cosine match among malicious
/// members and flags those passing the threshold.
pub fn flag_suspects(
    members: &[Member<'_>],
    segment: usize,
    eps: f64,
    mode: ThresholdMode,
) -> Result<Vec<SuspectFlag>, ClusterError> {
    let bad: Vec<&Member> = members.iter().filter(|m| m.malicious).collect();
    if bad.is_empty() {
        return Err(ClusterError::NoMaliciousPoints);
    }
    let mut flags = members
        .iter()
        .filter(|m| !m.malicious)
        .map(|j| {
            let mut best = f64::NEG_INFINITY;
            for m in &bad {
                best = best.max(cosine_similarity(j.vector, m.vector)?);
            }
            Ok(SuspectFlag { address: j.address, segment, max_similarity: best, flagged: false })
        })
        .collect::<Result<Vec<_>, ClusterError>>()?;
    let threshold = match mode {
        ThresholdMode::Absolute => 1.0 - eps,
        ThresholdMode::RelativeToMax => {
            flags.iter().map(|f| f.max_similarity).fold(f64::NEG_INFINITY, f64::max) - eps
        }
    };
    for f in &mut flags {
        f.flagged = f.max_similarity >= threshold;
    }
    Ok(flags)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuspectProbability {
    pub address: Address,
    pub granularity: GranularityKind,
    pub flagged_segments: usize,
    pub active_segments: usize,
    pub p: f64,
}

/// `p = flagged / active` for every subject with at least one active segment.
pub fn suspect_probability(
    flags: &[SuspectFlag],
    activity: &ActivityIndex,
    subjects: &BTreeSet<Address>,
    granularity: GranularityKind,
) -> Vec<SuspectProbability> {
    let mut flagged: BTreeMap<Address, BTreeSet<usize>> = BTreeMap::new();
    for f in flags.iter().filter(|f| f.flagged) {
        flagged.entry(f.address).or_default().insert(f.segment);
    }
    subjects
        .iter()
        .filter_map(|a| {
            let active = activity.active_segments(a).len();
            if active == 0 {
                return None;
            }
            let fl = flagged.get(a).map_or(0, |s| s.len()).min(active);
            Some(SuspectProbability {
                address: *a,
                granularity,
                flagged_segments: fl,
                active_segments: active,
                p: fl as f64 / active as f64,
            })
        })
        .collect()
}
