//! Source hashing and grouping of contracts that share identical source bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{Address, SourceRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DedupError {
    #[error("{0} has no available source")]
    NoSource(Address),
    #[error("finding subject {0} belongs to no source group")]
    OrphanFinding(String),
}

/// SHA-256 of the exact source bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceHash(pub [u8; 32]);

impl SourceHash {
    pub fn of(bytes: &[u8]) -> Self {
        SourceHash(Sha256::digest(bytes).into())
    }

    pub fn parse(s: &str) -> Option<Self> {
        let body = s.trim();
        let body = body.strip_prefix("sha256:").unwrap_or(body);
        let body = body.strip_prefix("0x").unwrap_or(body);
        let mut out = [0u8; 32];
        hex::decode_to_slice(body, &mut out).ok()?;
        Some(SourceHash(out))
    }
}

impl fmt::Display for SourceHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for SourceHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SourceHash({self})")
    }
}

pub fn hash_source(record: &SourceRecord) -> Result<SourceHash, DedupError> {
    if !record.available {
        return Err(DedupError::NoSource(record.address));
    }
    Ok(SourceHash::of(&record.text))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashGroup {
    pub digest: SourceHash,
    pub members: BTreeSet<Address>,
    /// Lexicographically smallest member.
    pub representative: Address,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Grouping {
    /// Sorted by digest.
    pub groups: Vec<HashGroup>,
    /// Contracts without available source.
    pub missing: BTreeSet<Address>,
}

impl Grouping {
    pub fn group_of(&self, address: &Address) -> Option<&HashGroup> {
        self.groups.iter().find(|g| g.members.contains(address))
    }

    /// Map from every member to its group index.
    pub fn member_index(&self) -> BTreeMap<Address, usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.members.iter().map(move |m| (*m, i)))
            .collect()
    }

    pub fn covered(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }
}

pub fn group_by_hash<'a>(records: impl IntoIterator<Item = &'a SourceRecord>) -> Grouping {
    let mut by_digest: BTreeMap<SourceHash, BTreeSet<Address>> = BTreeMap::new();
    let mut missing = BTreeSet::new();
    for r in records {
        match hash_source(r) {
            Ok(d) => {
                by_digest.entry(d).or_default().insert(r.address);
            }
            Err(_) => {
                missing.insert(r.address);
            }
        }
    }
    let groups = by_digest
        .into_iter()
        .map(|(digest, members)| {
            let representative = *members.iter().next().expect("non-empty group");
            HashGroup { digest, members, representative }
        })
        .collect();
    Grouping { groups, missing }
}

/// What a finding is attached to before propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subject {
    Address(Address),
    Source(SourceHash),
}

impl Subject {
    pub fn parse(s: &str) -> Option<Self> {
        if let Ok(a) = s.parse::<Address>() {
            return Some(Subject::Address(a));
        }
        SourceHash::parse(s).map(Subject::Source)
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Address(a) => write!(f, "{a}"),
            Subject::Source(h) => write!(f, "sha256:{h}"),
        }
    }
}

/// Copies each group's findings to every member of the group. A subject may
/// name a group by representative, by any member, or by digest.
pub fn propagate_findings<T: Clone>(
    grouping: &Grouping,
    findings: &[(Subject, T)],
) -> Result<BTreeMap<Address, Vec<T>>, DedupError> {
    let members = grouping.member_index();
    let by_digest: BTreeMap<SourceHash, usize> =
        grouping.groups.iter().enumerate().map(|(i, g)| (g.digest, i)).collect();
    let mut per_group: Vec<Vec<T>> = vec![Vec::new(); grouping.groups.len()];
    for (subject, f) in findings {
        let idx = match subject {
            Subject::Address(a) => members.get(a),
            Subject::Source(h) => by_digest.get(h),
        }
        .ok_or_else(|| DedupError::OrphanFinding(subject.to_string()))?;
        per_group[*idx].push(f.clone());
    }
    let mut out = BTreeMap::new();
    for (g, fs) in grouping.groups.iter().zip(per_group) {
        for m in &g.members {
            out.insert(*m, fs.clone());
        }
    }
    Ok(out)
}
