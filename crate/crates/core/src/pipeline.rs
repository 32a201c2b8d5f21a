//! End-to-end orchestration: every stage writes its CSV artifacts into the
//! output directory, and later stages recompute earlier ones from the dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use thiserror::Error;

use crate::cluster::{
    flag_suspects, minmax_scale, silhouette_sampled, suspect_probability, sweep_k, target_cluster, ward_hierarchy,
    Member, SuspectFlag, SuspectProbability,
};
use crate::config::{PipelineConfig, TargetRule};
use crate::data::{ingest, AccountKind, Activity, Address, IngestConfig};
use crate::dedup::{group_by_hash, propagate_findings, Grouping};
use crate::features::{extract_segment, FeatureConfig, SegmentGraph};
use crate::graph::{build_create_graph, component_stats, expand_suspects};
use crate::report::{probability_histogram, vuln_activity_matrix, vuln_frequency_report, HISTOGRAM_BINS};
use crate::segment::{assign_activity, segment_bounds, GranularityKind};
use crate::vocab::{
    class_severity_stats, normalize_finding, read_findings, severity_score, Severity, SeverityScore, Vocabulary,
    VulnFinding,
};

/// Optional tool-findings file in the dataset directory.
pub const FINDINGS_FILE: &str = "findings.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Graph,
    Dedup,
    Score,
    Features,
    Cluster,
    Suspects,
    Report,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Dedup => "dedup",
            Stage::Score => "score",
            Stage::Features => "features",
            Stage::Cluster => "cluster",
            Stage::Suspects => "suspects",
            Stage::Report => "report",
        }
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ingest" => Stage::Ingest,
            "graph" => Stage::Graph,
            "dedup" => Stage::Dedup,
            "score" => Stage::Score,
            "features" => Stage::Features,
            "cluster" => Stage::Cluster,
            "suspects" => Stage::Suspects,
            "report" | "run" => Stage::Report,
            _ => return Err(format!("unknown stage {s:?}")),
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

fn fail<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError { stage, message: e.to_string() }
}

/// Suspect counts (accounts with `p = 1`) per granularity and configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub population: usize,
    pub malicious: usize,
    pub suspects: BTreeMap<(GranularityKind, FeatureConfig), usize>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "population={} malicious={}", self.population, self.malicious)?;
        for ((g, c), n) in &self.suspects {
            write!(f, " suspects[{g},{c}]={n}")?;
        }
        Ok(())
    }
}

struct Csv {
    path: PathBuf,
    w: BufWriter<fs::File>,
    stage: Stage,
}

impl Csv {
    fn create(dir: &Path, name: &str, stage: Stage, header: &[&str]) -> Result<Self, PipelineError> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| PipelineError {
            stage,
            message: format!("{}: {e}", path.display()),
        })?;
        let mut c = Csv { path, w: BufWriter::new(file), stage };
        c.row(header.iter().map(|h| h.to_string()))?;
        Ok(c)
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), PipelineError> {
        let line = fields
            .into_iter()
            .map(|f| if f.contains([',', '"', '\n']) { format!("\"{}\"", f.replace('"', "\"\"")) } else { f })
            .collect::<Vec<_>>()
            .join(",");
        writeln!(self.w, "{line}").map_err(|e| PipelineError {
            stage: self.stage,
            message: format!("{}: {e}", self.path.display()),
        })
    }

    fn finish(mut self) -> Result<(), PipelineError> {
        self.w.flush().map_err(|e| PipelineError { stage: self.stage, message: format!("{}: {e}", self.path.display()) })
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn read_address_list(path: &Path) -> Result<BTreeSet<Address>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| l.parse::<Address>().map_err(|e| format!("{} line {}: {e}", path.display(), i + 1)))
        .collect()
}

struct Scored {
    findings: BTreeMap<Address, Vec<VulnFinding>>,
    scores: BTreeMap<Address, SeverityScore>,
}

/// Runs every stage up to and including `until`.
pub fn run_pipeline(cfg: &PipelineConfig, until: Stage) -> Result<RunSummary, PipelineError> {
    let started = Instant::now();
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| PipelineError {
        stage: Stage::Ingest,
        message: format!("{}: {e}", out.display()),
    })?;

    // ingest
    let st = Stage::Ingest;
    let (store, ingest_report) = ingest(&cfg.dataset, &IngestConfig { max_block: cfg.max_block }).map_err(fail(st))?;
    let mut w = Csv::create(out, "ingest.csv", st, &["key", "value"])?;
    for (k, v) in [
        ("externalRows", ingest_report.external_rows),
        ("internalRows", ingest_report.internal_rows),
        ("labels", ingest_report.labels),
        ("sources", ingest_report.sources),
        ("rejected", ingest_report.rejected.len()),
        ("accounts", store.accounts().len()),
        ("maxBlock", store.max_block() as usize),
    ] {
        w.row([k.to_string(), v.to_string()])?;
    }
    w.finish()?;
    let mut w = Csv::create(out, "rejects.csv", st, &["file", "line", "reason"])?;
    for r in &ingest_report.rejected {
        w.row([r.file.clone(), r.line.to_string(), r.reason.clone()])?;
    }
    w.finish()?;
    let mut w = Csv::create(out, "accounts.csv", st, &["address", "kind", "activity", "sourceAvailable"])?;
    for (a, rec) in store.accounts() {
        let src = store.sources().get(a).is_some_and(|s| s.available);
        w.row([
            a.to_string(),
            rec.kind.as_str().to_string(),
            rec.label.as_ref().map_or(String::new(), |l| l.activity.to_string()),
            u8::from(src).to_string(),
        ])?;
    }
    w.finish()?;
    info!("ingest: {} accounts, max block {}", store.accounts().len(), store.max_block());
    if until == Stage::Ingest {
        return Ok(RunSummary::default());
    }

    // graph expansion
    let st = Stage::Graph;
    let graph = build_create_graph(&store).map_err(fail(st))?;
    let excluded = match &cfg.excluded {
        Some(p) => read_address_list(p).map_err(fail(st))?,
        None => BTreeSet::new(),
    };
    let labels = store.labels();
    let seeds: BTreeSet<Address> = labels.keys().copied().collect();
    let kind_of = |a: &Address| store.kind_of(a).unwrap_or(AccountKind::Eoa);
    let expansion = expand_suspects(&graph, &seeds, &excluded, kind_of);
    let mut malicious_activity: BTreeMap<Address, Activity> = BTreeMap::new();
    for (seed, members) in &expansion.per_seed_component {
        let act = labels[seed].activity;
        for m in members {
            malicious_activity.entry(*m).or_insert(act);
        }
    }
    for (a, l) in &labels {
        // seeds keep their own label even inside another seed's component
        if expansion.expanded.contains(a) {
            malicious_activity.insert(*a, l.activity);
        }
    }
    let mut w = Csv::create(out, "expansion.csv", st, &["address", "role", "activity"])?;
    for (a, act) in &malicious_activity {
        let role = if seeds.contains(a) { "seed" } else { "derived" };
        w.row([a.to_string(), role.to_string(), act.to_string()])?;
    }
    w.finish()?;
    let comp = component_stats(&graph, &expansion, kind_of);
    let mut w = Csv::create(
        out,
        "graph_seeds.csv",
        st,
        &["seed", "creator", "creatorKind", "children", "descendants", "componentSize"],
    )?;
    for s in &comp.per_seed {
        w.row([
            s.seed.to_string(),
            s.creator.map_or(String::new(), |c| c.to_string()),
            s.creator_kind.map_or(String::new(), |k| k.as_str().to_string()),
            s.children.to_string(),
            s.descendants.to_string(),
            s.component_size.to_string(),
        ])?;
    }
    w.finish()?;
    let agg = &comp.aggregate;
    let mut w = Csv::create(out, "graph_summary.csv", st, &["key", "value"])?;
    for (k, v) in [
        ("createEdges", graph.edge_count()),
        ("seeds", agg.seeds),
        ("seedsCreatedByEoa", agg.seeds_created_by_eoa),
        ("seedsCreatedByContract", agg.seeds_created_by_contract),
        ("seedsWithUnknownCreator", agg.seeds_with_unknown_creator),
        ("seedsWithChildren", agg.seeds_with_children),
        ("childrenCreated", agg.children_created),
        ("distinctContractParents", agg.distinct_contract_parents),
        ("expandedSize", agg.expanded_size),
        ("eoaCreators", expansion.eoa_creators.len()),
    ] {
        w.row([k.to_string(), v.to_string()])?;
    }
    w.finish()?;
    if until == Stage::Graph {
        return Ok(RunSummary::default());
    }

    // source dedup
    let st = Stage::Dedup;
    let grouping: Grouping = group_by_hash(store.sources().values());
    let mut w = Csv::create(out, "hashes.csv", st, &["address", "digest", "representative", "groupSize"])?;
    let mut rows: Vec<(Address, String, Address, usize)> = Vec::new();
    for g in &grouping.groups {
        for m in &g.members {
            rows.push((*m, g.digest.to_string(), g.representative, g.members.len()));
        }
    }
    rows.sort();
    for (a, d, r, n) in rows {
        w.row([a.to_string(), d, r.to_string(), n.to_string()])?;
    }
    w.finish()?;
    // analysed population: contracts with available source
    let population: BTreeSet<Address> = grouping.groups.iter().flat_map(|g| g.members.iter().copied()).collect();
    let malicious: BTreeSet<Address> =
        population.iter().filter(|a| malicious_activity.contains_key(a)).copied().collect();
    if until == Stage::Dedup {
        return Ok(RunSummary { population: population.len(), malicious: malicious.len(), ..Default::default() });
    }

    // findings and severity
    let scored = score_stage(cfg, &grouping, out)?;
    let mut w = Csv::create(
        out,
        "scores.csv",
        Stage::Score,
        &["address", "class", "activity", "score", "vulnCount", "high", "medium", "low"],
    )?;
    for a in &population {
        let s = scored.scores[a];
        let act = malicious_activity.get(a);
        w.row([
            a.to_string(),
            if act.is_some() { "malicious" } else { "benign" }.to_string(),
            act.map_or(String::new(), |x| x.to_string()),
            num(s.score),
            s.vuln_count.to_string(),
            s.counts.high.to_string(),
            s.counts.medium.to_string(),
            s.counts.low.to_string(),
        ])?;
    }
    w.finish()?;
    if until == Stage::Score {
        return Ok(RunSummary { population: population.len(), malicious: malicious.len(), ..Default::default() });
    }

    let severities: BTreeMap<Address, f64> = scored.scores.iter().map(|(a, s)| (*a, s.score)).collect();
    let mut summary = RunSummary { population: population.len(), malicious: malicious.len(), ..Default::default() };
    let benign: BTreeSet<Address> = population.difference(&malicious).copied().collect();

    let mut seg_w = Csv::create(out, "segments.csv", Stage::Features, &["granularity", "index", "startBlock", "endBlock"])?;
    let mut feat_header = vec!["granularity", "segment", "config", "address"];
    let widest = cfg.feature_configs.iter().max_by_key(|c| c.dimension()).copied().unwrap_or(FeatureConfig::TxOnly);
    feat_header.extend(widest.names());
    let mut feat_w = Csv::create(out, "features.csv", Stage::Features, &feat_header)?;
    let mut clus_w = if until >= Stage::Cluster {
        Some(Csv::create(
            out,
            "clusters.csv",
            Stage::Cluster,
            &["granularity", "segment", "config", "algorithm", "k", "silhouette", "selected", "points", "targetCluster"],
        )?)
    } else {
        None
    };
    let mut flag_w = if until >= Stage::Suspects {
        Some(Csv::create(
            out,
            "flags.csv",
            Stage::Suspects,
            &["address", "granularity", "segment", "config", "maxSimilarity", "flagged"],
        )?)
    } else {
        None
    };
    let mut prob_w = if until >= Stage::Suspects {
        Some(Csv::create(
            out,
            "probabilities.csv",
            Stage::Suspects,
            &["address", "granularity", "config", "p", "flaggedSegments", "activeSegments"],
        )?)
    } else {
        None
    };
    let mut all_probs: BTreeMap<(GranularityKind, FeatureConfig), Vec<SuspectProbability>> = BTreeMap::new();

    let max_block = store.max_block().max(1);
    for gran in &cfg.granularities {
        let segments = segment_bounds(*gran, max_block);
        for s in &segments {
            seg_w.row([
                gran.kind.to_string(),
                s.index.to_string(),
                s.range.start.to_string(),
                s.range.end.to_string(),
            ])?;
        }
        let activity = assign_activity(&store, *gran);
        let graphs = SegmentGraph::build_all(&store, *gran);
        let mode = cfg.mode_for(gran.kind);
        for fc in &cfg.feature_configs {
            let mut flags: Vec<SuspectFlag> = Vec::new();
            for (pos, seg) in segments.iter().enumerate() {
                let members: BTreeSet<Address> =
                    activity.per_segment[pos].intersection(&population).copied().collect();
                if members.is_empty() {
                    continue;
                }
                let vectors =
                    extract_segment(&store, seg, &graphs[pos], &members, &cfg.bursts, *fc, &severities);
                for v in &vectors {
                    let mut row = vec![gran.kind.to_string(), seg.index.to_string(), fc.to_string(), v.subject.to_string()];
                    row.extend(v.values.iter().map(|x| num(*x)));
                    feat_w.row(row)?;
                }
                let Some(cw) = clus_w.as_mut() else { continue };
                let bad: Vec<bool> = vectors.iter().map(|v| malicious.contains(&v.subject)).collect();
                // clustering only matters where a malicious contract can anchor a target
                if !bad.iter().any(|b| *b) || bad.iter().all(|b| *b) {
                    continue;
                }
                let raw: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
                let (scaled, _) = minmax_scale(&raw);
                let n = scaled.len();
                let gs = gran.kind.to_string();
                let (assignments, k_best) = match sweep_k(&scaled, cfg.k_min, cfg.k_max, cfg.seed, &cfg.kmeans) {
                    Ok(sw) => {
                        for (k, sil) in &sw.table {
                            cw.row([
                                gs.clone(),
                                seg.index.to_string(),
                                fc.to_string(),
                                "kmeans".into(),
                                k.to_string(),
                                num(*sil),
                                u8::from(*k == sw.best.k).to_string(),
                                n.to_string(),
                                String::new(),
                            ])?;
                        }
                        (sw.best.assignments, sw.best.k)
                    }
                    // too few points for the k range: one cluster
                    Err(_) => (vec![0; n], 1),
                };
                if cfg.agglomerative_max_points > 0 && n <= cfg.agglomerative_max_points {
                    let hi = cfg.k_max.min(n.saturating_sub(1));
                    if cfg.k_min <= hi {
                        let h = ward_hierarchy(&scaled, cfg.k_min);
                        for k in cfg.k_min..=hi {
                            let labels = h.labels(k).map_err(fail(Stage::Cluster))?;
                            let sil = silhouette_sampled(&scaled, &labels, cfg.silhouette_sample, cfg.seed)
                                .unwrap_or(0.0);
                            cw.row([
                                gs.clone(),
                                seg.index.to_string(),
                                fc.to_string(),
                                "agglomerative".into(),
                                k.to_string(),
                                num(sil),
                                "0".into(),
                                n.to_string(),
                                String::new(),
                            ])?;
                        }
                    }
                }
                let target = match cfg.target_rule {
                    TargetRule::MostMalicious => target_cluster(&assignments, &bad).map_err(fail(Stage::Cluster))?,
                    TargetRule::Largest => {
                        let mut size = vec![0usize; assignments.iter().max().map_or(0, |m| m + 1)];
                        for a in &assignments {
                            size[*a] += 1;
                        }
                        assignments
                            .iter()
                            .zip(&bad)
                            .filter(|(_, b)| **b)
                            .map(|(a, _)| *a)
                            .max_by(|x, y| size[*x].cmp(&size[*y]).then(y.cmp(x)))
                            .expect("at least one malicious member")
                    }
                };
                cw.row([
                    gs.clone(),
                    seg.index.to_string(),
                    fc.to_string(),
                    "selected".into(),
                    k_best.to_string(),
                    String::new(),
                    "1".into(),
                    n.to_string(),
                    target.to_string(),
                ])?;
                if flag_w.is_none() {
                    continue;
                }
                let members: Vec<Member> = (0..n)
                    .filter(|i| assignments[*i] == target)
                    .map(|i| Member { address: vectors[i].subject, vector: &scaled[i], malicious: bad[i] })
                    .collect();
                flags.extend(flag_suspects(&members, seg.index, cfg.epsilon, mode).map_err(fail(Stage::Suspects))?);
            }
            if let (Some(fw), Some(pw)) = (flag_w.as_mut(), prob_w.as_mut()) {
                for f in &flags {
                    fw.row([
                        f.address.to_string(),
                        gran.kind.to_string(),
                        f.segment.to_string(),
                        fc.to_string(),
                        num(f.max_similarity),
                        u8::from(f.flagged).to_string(),
                    ])?;
                }
                let probs = suspect_probability(&flags, &activity, &benign, gran.kind);
                for p in &probs {
                    pw.row([
                        p.address.to_string(),
                        gran.kind.to_string(),
                        fc.to_string(),
                        num(p.p),
                        p.flagged_segments.to_string(),
                        p.active_segments.to_string(),
                    ])?;
                }
                let suspects = probs.iter().filter(|p| p.p == 1.0).count();
                info!("{} {}: {} suspects with p = 1", gran.kind, fc, suspects);
                summary.suspects.insert((gran.kind, *fc), suspects);
                all_probs.insert((gran.kind, *fc), probs);
            }
        }
    }
    seg_w.finish()?;
    feat_w.finish()?;
    for w in [clus_w, flag_w, prob_w].into_iter().flatten() {
        w.finish()?;
    }
    if until < Stage::Report {
        return Ok(summary);
    }

    // reports
    let st = Stage::Report;
    let pop_activity: BTreeMap<Address, Activity> =
        malicious.iter().map(|a| (*a, malicious_activity[a])).collect();
    let matrix = vuln_activity_matrix(&scored.findings, &pop_activity);
    let mut w = Csv::create(out, "activity_cwe.csv", st, &["activity", "contracts", "cwe", "count", "normalized"])?;
    for (act, row) in &matrix.rows {
        for (cwe, count) in &row.counts {
            w.row([
                act.to_string(),
                row.contracts.to_string(),
                format!("CWE-{cwe}"),
                count.to_string(),
                num(row.normalized(*cwe)),
            ])?;
        }
    }
    w.finish()?;

    let pop_scores: BTreeMap<Address, SeverityScore> =
        population.iter().map(|a| (*a, scored.scores[a])).collect();
    let class_map: BTreeMap<Address, Option<Activity>> =
        malicious.iter().map(|a| (*a, Some(malicious_activity[a]))).collect();
    let stats = class_severity_stats(&pop_scores, &class_map);
    let mut w = Csv::create(
        out,
        "severity_fractions.csv",
        st,
        &["class", "contracts", "scoredContracts", "meanScore", "high", "medium", "low", "findings"],
    )?;
    for (class, s) in &stats {
        w.row([
            class.to_string(),
            s.contracts.to_string(),
            s.scored_contracts.to_string(),
            num(s.mean_score),
            num(s.fraction(Severity::High)),
            num(s.fraction(Severity::Medium)),
            num(s.fraction(Severity::Low)),
            s.counts.total().to_string(),
        ])?;
    }
    w.finish()?;

    let pop_findings: BTreeMap<Address, Vec<VulnFinding>> = scored
        .findings
        .iter()
        .filter(|(a, _)| population.contains(a))
        .map(|(a, f)| (*a, f.clone()))
        .collect();
    let mut w = Csv::create(out, "cwe_frequency.csv", st, &["cwe", "contracts"])?;
    for (cwe, n) in vuln_frequency_report(&pop_findings) {
        w.row([format!("CWE-{cwe}"), n.to_string()])?;
    }
    w.finish()?;

    let mut w = Csv::create(out, "histogram.csv", st, &["granularity", "config", "binStart", "binEnd", "count"])?;
    for ((g, c), probs) in &all_probs {
        let h = probability_histogram(probs);
        for (i, count) in h.iter().enumerate() {
            w.row([
                g.to_string(),
                c.to_string(),
                num(i as f64 / HISTOGRAM_BINS as f64),
                num((i + 1) as f64 / HISTOGRAM_BINS as f64),
                count.to_string(),
            ])?;
        }
    }
    w.finish()?;

    let mut w = Csv::create(out, "summary.csv", st, &["granularity", "config", "suspects", "benignContracts"])?;
    for ((g, c), n) in &summary.suspects {
        w.row([g.to_string(), c.to_string(), n.to_string(), benign.len().to_string()])?;
    }
    w.finish()?;
    info!("pipeline finished in {:.2?}", started.elapsed());
    Ok(summary)
}

fn score_stage(cfg: &PipelineConfig, grouping: &Grouping, out: &Path) -> Result<Scored, PipelineError> {
    let st = Stage::Score;
    let vocab = match &cfg.vocabulary {
        Some(p) => Vocabulary::load(p, cfg.aliases.as_deref()).map_err(fail(st))?,
        None => Vocabulary::builtin(),
    };
    let path = cfg.dataset.join(FINDINGS_FILE);
    let raw = if path.exists() { read_findings(&path).map_err(fail(st))? } else { Vec::new() };
    let mut normalized = Vec::new();
    let mut rej = Csv::create(out, "finding_rejects.csv", st, &["subject", "tool", "rawName", "reason"])?;
    for r in &raw {
        match normalize_finding(r, &vocab) {
            Ok(f) => normalized.push((f.subject, f)),
            Err(e) => rej.row([r.subject.clone(), r.tool.clone(), r.raw_name.clone(), e.to_string()])?,
        }
    }
    rej.finish()?;
    let findings = propagate_findings(grouping, &normalized).map_err(fail(st))?;
    let mut w = Csv::create(out, "findings_normalized.csv", st, &["address", "tool", "vocabName", "severity", "cwe"])?;
    for (a, fs) in &findings {
        for f in fs {
            w.row([
                a.to_string(),
                f.tool.to_string(),
                f.vocab_name.clone(),
                f.severity.letter().to_string(),
                f.cwe.map_or(String::new(), |c| format!("CWE-{c}")),
            ])?;
        }
    }
    w.finish()?;
    let scores = findings
        .iter()
        .map(|(a, fs)| (*a, severity_score(*a, fs, cfg.dedupe, &cfg.severity_weights)))
        .collect();
    Ok(Scored { findings, scores })
}
