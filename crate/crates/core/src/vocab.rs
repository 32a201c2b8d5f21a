//! Vulnerability vocabulary (DASP / SWC / CWE cross-map with severities),
//! tool-finding normalization, and the per-contract severity score.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{Activity, Address};
use crate::dedup::Subject;

pub const BUILTIN_VOCABULARY: &str = include_str!("../data/vocabulary.csv");
pub const BUILTIN_ALIASES: &str = include_str!("../data/aliases.csv");

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary line {line}: duplicate name {name:?}")]
    DuplicateName { line: u64, name: String },
    #[error("vocabulary line {line}: unknown severity letter {letter:?}")]
    UnknownSeverityLetter { line: u64, letter: String },
    #[error("{file} line {line}: {reason}")]
    BadRow { file: &'static str, line: u64, reason: String },
    #[error("alias line {line}: target {target:?} is not in the vocabulary")]
    UnknownAliasTarget { line: u64, target: String },
    #[error("no severity candidates")]
    EmptyCandidates,
    #[error("{tool}: {raw:?} maps to no vocabulary entry")]
    UnmappedVulnerability { tool: String, raw: String },
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("invalid finding subject {0:?}")]
    BadSubject(String),
    #[error("severity weights must satisfy high > medium > low >= 0, got {0:?}")]
    BadWeights(SeverityWeights),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::High, Severity::Medium, Severity::Low];

    pub fn letter(&self) -> char {
        match self {
            Severity::High => 'H',
            Severity::Medium => 'M',
            Severity::Low => 'L',
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "H" | "HIGH" => Some(Severity::High),
            "M" | "MEDIUM" => Some(Severity::Medium),
            "L" | "LOW" => Some(Severity::Low),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Severity::High => "high",
            Severity::Medium => "medium",
            Severity::Low => "low",
        }
    }
}

/// Numeric value of each severity level in the score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityWeights {
    pub high: f64,
    pub medium: f64,
    pub low: f64,
}

impl Default for SeverityWeights {
    fn default() -> Self {
        SeverityWeights { high: 3.0, medium: 2.0, low: 1.0 }
    }
}

impl SeverityWeights {
    pub fn validate(self) -> Result<Self, VocabError> {
        let ok = self.high > self.medium && self.medium > self.low && self.low >= 0.0;
        if ok && [self.high, self.medium, self.low].iter().all(|w| w.is_finite()) {
            Ok(self)
        } else {
            Err(VocabError::BadWeights(self))
        }
    }

    pub fn weight(&self, s: Severity) -> f64 {
        match s {
            Severity::High => self.high,
            Severity::Medium => self.medium,
            Severity::Low => self.low,
        }
    }
}

/// Conflicting interpretations resolve to the highest severity.
pub fn resolve_severity(candidates: &[Severity]) -> Result<Severity, VocabError> {
    candidates.iter().copied().max().ok_or(VocabError::EmptyCandidates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dasp {
    Reentrancy,
    AccessControl,
    Arithmetic,
    UncheckedLowLevelCalls,
    DenialOfService,
    BadRandomness,
    FrontRunning,
    TimeManipulation,
    ShortAddress,
    Unknown,
}

impl FromStr for Dasp {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match k.as_str() {
            "reentrancy" => Dasp::Reentrancy,
            "accesscontrol" => Dasp::AccessControl,
            "arithmetic" => Dasp::Arithmetic,
            "uncheckedlowlevelcalls" | "ulc" => Dasp::UncheckedLowLevelCalls,
            "denialofservice" | "dos" => Dasp::DenialOfService,
            "badrandomness" => Dasp::BadRandomness,
            "frontrunning" => Dasp::FrontRunning,
            "timemanipulation" => Dasp::TimeManipulation,
            "shortaddress" => Dasp::ShortAddress,
            "unknown" | "unknownunknowns" => Dasp::Unknown,
            _ => return Err(format!("unknown DASP class {s:?}")),
        })
    }
}

impl fmt::Display for Dasp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tool {
    Slither,
    Mythril,
    SmartCheck,
    Oyente,
    Osiris,
}

impl Tool {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tool::Slither => "slither",
            Tool::Mythril => "mythril",
            Tool::SmartCheck => "smartcheck",
            Tool::Oyente => "oyente",
            Tool::Osiris => "osiris",
        }
    }
}

impl FromStr for Tool {
    type Err = VocabError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slither" => Ok(Tool::Slither),
            "mythril" => Ok(Tool::Mythril),
            "smartcheck" => Ok(Tool::SmartCheck),
            "oyente" => Ok(Tool::Oyente),
            "osiris" => Ok(Tool::Osiris),
            _ => Err(VocabError::UnknownTool(s.to_string())),
        }
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub name: String,
    pub dasp: Dasp,
    /// `None` encodes an id absent from that vocabulary.
    pub swc: Option<u32>,
    pub cwe: Option<u32>,
    pub severity: Severity,
    pub tools: BTreeSet<Tool>,
    pub swc_inferred: bool,
    pub cwe_inferred: bool,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    by_name: HashMap<String, usize>,
    by_swc: BTreeMap<u32, Vec<usize>>,
    by_cwe: BTreeMap<u32, Vec<usize>>,
    aliases: HashMap<(Tool, String), usize>,
}

fn key(s: &str) -> String {
    s.trim().to_lowercase()
}

fn parse_id(s: &str) -> Result<Option<u32>, String> {
    match s.trim() {
        "" | "-" => Ok(None),
        t => t.parse().map(Some).map_err(|_| format!("bad id {t:?}")),
    }
}

impl Vocabulary {
    /// The shipped vocabulary and alias table.
    pub fn builtin() -> Self {
        Self::from_csv(BUILTIN_VOCABULARY, BUILTIN_ALIASES).expect("builtin vocabulary is valid")
    }

    pub fn load(vocabulary: &Path, aliases: Option<&Path>) -> Result<Self, VocabError> {
        let v = std::fs::read_to_string(vocabulary)?;
        let a = match aliases {
            Some(p) => std::fs::read_to_string(p)?,
            None => BUILTIN_ALIASES.to_string(),
        };
        Self::from_csv(&v, &a)
    }

    /// Parses `name,dasp,swc,cwe,severity,tools,inferredFlags` rows plus a
    /// `tool,rawName,vocabName` alias table. The severity cell may carry
    /// several `|`-separated tool ratings, resolved to the highest.
    pub fn from_csv(vocabulary: &str, aliases: &str) -> Result<Self, VocabError> {
        let mut v = Vocabulary {
            entries: Vec::new(),
            by_name: HashMap::new(),
            by_swc: BTreeMap::new(),
            by_cwe: BTreeMap::new(),
            aliases: HashMap::new(),
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(vocabulary.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |reason: String| VocabError::BadRow { file: "vocabulary", line, reason };
            if rec.len() != 7 {
                return Err(bad(format!("expected 7 fields, got {}", rec.len())));
            }
            let name = rec[0].to_string();
            let dasp: Dasp = rec[1].parse().map_err(bad)?;
            let swc = parse_id(&rec[2]).map_err(bad)?;
            let cwe = parse_id(&rec[3]).map_err(bad)?;
            let letters: Vec<Severity> = rec[4]
                .split('|')
                .map(|l| {
                    Severity::from_letter(l)
                        .ok_or_else(|| VocabError::UnknownSeverityLetter { line, letter: l.to_string() })
                })
                .collect::<Result<_, _>>()?;
            let severity = resolve_severity(&letters)?;
            let tools = rec[5]
                .split(';')
                .filter(|t| !t.trim().is_empty())
                .map(str::parse)
                .collect::<Result<BTreeSet<Tool>, _>>()?;
            let flags: BTreeSet<String> =
                rec[6].split(';').map(key).filter(|f| !f.is_empty()).collect();
            let entry = VocabEntry {
                name: name.clone(),
                dasp,
                swc,
                cwe,
                severity,
                tools,
                swc_inferred: flags.contains("swc"),
                cwe_inferred: flags.contains("cwe"),
            };
            let idx = v.entries.len();
            if v.by_name.insert(key(&name), idx).is_some() {
                return Err(VocabError::DuplicateName { line, name });
            }
            if let Some(s) = swc {
                v.by_swc.entry(s).or_default().push(idx);
            }
            if let Some(c) = cwe {
                v.by_cwe.entry(c).or_default().push(idx);
            }
            v.entries.push(entry);
        }

        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(aliases.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 3 {
                return Err(VocabError::BadRow {
                    file: "aliases",
                    line,
                    reason: format!("expected 3 fields, got {}", rec.len()),
                });
            }
            let tool: Tool = rec[0].parse()?;
            let idx = *v
                .by_name
                .get(&key(&rec[2]))
                .ok_or_else(|| VocabError::UnknownAliasTarget { line, target: rec[2].to_string() })?;
            v.aliases.insert((tool, key(&rec[1])), idx);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn by_name(&self, name: &str) -> Option<&VocabEntry> {
        self.by_name.get(&key(name)).map(|&i| &self.entries[i])
    }

    pub fn by_swc(&self, swc: u32) -> Vec<&VocabEntry> {
        self.by_swc.get(&swc).into_iter().flatten().map(|&i| &self.entries[i]).collect()
    }

    pub fn by_cwe(&self, cwe: u32) -> Vec<&VocabEntry> {
        self.by_cwe.get(&cwe).into_iter().flatten().map(|&i| &self.entries[i]).collect()
    }

    fn resolve(&self, tool: Tool, raw: &str) -> Option<&VocabEntry> {
        self.aliases
            .get(&(tool, key(raw)))
            .or_else(|| self.by_name.get(&key(raw)))
            .map(|&i| &self.entries[i])
    }
}

/// One row of `findings.csv` as emitted by an analysis tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFinding {
    pub subject: String,
    pub tool: String,
    pub raw_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VulnFinding {
    pub subject: Subject,
    pub vocab_name: String,
    pub tool: Tool,
    pub severity: Severity,
    pub cwe: Option<u32>,
}

/// Binds a tool finding to a vocabulary entry by alias or exact name.
pub fn normalize_finding(raw: &RawFinding, vocab: &Vocabulary) -> Result<VulnFinding, VocabError> {
    let tool: Tool = raw.tool.parse()?;
    let subject = Subject::parse(&raw.subject).ok_or_else(|| VocabError::BadSubject(raw.subject.clone()))?;
    let entry = vocab.resolve(tool, &raw.raw_name).ok_or_else(|| VocabError::UnmappedVulnerability {
        tool: raw.tool.clone(),
        raw: raw.raw_name.clone(),
    })?;
    Ok(VulnFinding {
        subject,
        vocab_name: entry.name.clone(),
        tool,
        severity: entry.severity,
        cwe: entry.cwe,
    })
}

pub fn read_findings(path: &Path) -> Result<Vec<RawFinding>, VocabError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(VocabError::BadRow { file: "findings", line, reason: "expected subject,tool,rawName".into() });
        }
        out.push(RawFinding { subject: rec[0].to_string(), tool: rec[1].to_string(), raw_name: rec[2].to_string() });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DedupeMode {
    /// Each vocabulary name counts once per contract.
    #[default]
    Distinct,
    /// Every finding counts.
    Multiset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeverityCounts {
    pub high: usize,
    pub medium: usize,
    pub low: usize,
}

impl SeverityCounts {
    pub fn total(&self) -> usize {
        self.high + self.medium + self.low
    }

    pub fn get(&self, s: Severity) -> usize {
        match s {
            Severity::High => self.high,
            Severity::Medium => self.medium,
            Severity::Low => self.low,
        }
    }

    fn add(&mut self, s: Severity) {
        match s {
            Severity::High => self.high += 1,
            Severity::Medium => self.medium += 1,
            Severity::Low => self.low += 1,
        }
    }

    fn merge(&mut self, o: &SeverityCounts) {
        self.high += o.high;
        self.medium += o.medium;
        self.low += o.low;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityScore {
    pub subject: Address,
    /// Mean weight over the contract's vulnerability set; 0 when empty.
    pub score: f64,
    pub vuln_count: usize,
    pub counts: SeverityCounts,
}

/// Mean severity weight over the contract's vulnerability set.
pub fn severity_score(
    subject: Address,
    findings: &[VulnFinding],
    mode: DedupeMode,
    weights: &SeverityWeights,
) -> SeverityScore {
    let mut counts = SeverityCounts::default();
    match mode {
        DedupeMode::Distinct => {
            let distinct: BTreeMap<&str, Severity> =
                findings.iter().map(|f| (f.vocab_name.as_str(), f.severity)).collect();
            distinct.values().for_each(|s| counts.add(*s));
        }
        DedupeMode::Multiset => findings.iter().for_each(|f| counts.add(f.severity)),
    }
    let n = counts.total();
    let score = if n == 0 {
        0.0
    } else {
        let sum: f64 = Severity::ALL.iter().map(|s| weights.weight(*s) * counts.get(*s) as f64).sum();
        sum / n as f64
    };
    SeverityScore { subject, score, vuln_count: n, counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeverityClass {
    Benign,
    Malicious,
    Activity(Activity),
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeverityClass::Benign => f.write_str("benign"),
            SeverityClass::Malicious => f.write_str("malicious"),
            SeverityClass::Activity(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub contracts: usize,
    /// Contracts with at least one finding; the mean is taken over these.
    pub scored_contracts: usize,
    pub mean_score: f64,
    pub counts: SeverityCounts,
}

impl ClassStats {
    pub fn fraction(&self, s: Severity) -> f64 {
        let t = self.counts.total();
        if t == 0 {
            0.0
        } else {
            self.counts.get(s) as f64 / t as f64
        }
    }
}

/// Per-class mean score and severity fractions. `malicious` maps each
/// malicious contract to its activity when known; all other scored contracts
/// are benign. Classes with no contracts are omitted.
pub fn class_severity_stats(
    scores: &BTreeMap<Address, SeverityScore>,
    malicious: &BTreeMap<Address, Option<Activity>>,
) -> BTreeMap<SeverityClass, ClassStats> {
    let mut acc: BTreeMap<SeverityClass, (usize, usize, f64, SeverityCounts)> = BTreeMap::new();
    for (addr, s) in scores {
        let mut classes = vec![];
        match malicious.get(addr) {
            None => classes.push(SeverityClass::Benign),
            Some(act) => {
                classes.push(SeverityClass::Malicious);
                if let Some(a) = act {
                    classes.push(SeverityClass::Activity(*a));
                }
            }
        }
        for c in classes {
            let e = acc.entry(c).or_insert((0, 0, 0.0, SeverityCounts::default()));
            e.0 += 1;
            if s.vuln_count > 0 {
                e.1 += 1;
                e.2 += s.score;
            }
            e.3.merge(&s.counts);
        }
    }
    acc.into_iter()
        .map(|(c, (contracts, scored, sum, counts))| {
            let mean_score = if scored == 0 { 0.0 } else { sum / scored as f64 };
            (c, ClassStats { contracts, scored_contracts: scored, mean_score, counts })
        })
        .collect()
}
