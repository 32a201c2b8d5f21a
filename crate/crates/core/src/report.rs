//! Correlation tables and plot data derived from scored findings and
//! suspect probabilities.

use std::collections::{BTreeMap, BTreeSet};

use crate::cluster::SuspectProbability;
use crate::data::{Activity, Address};
use crate::vocab::VulnFinding;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivityRow {
    /// Contracts of this activity in the analysed population.
    pub contracts: usize,
    /// Contracts per CWE id.
    pub counts: BTreeMap<u32, usize>,
}

impl ActivityRow {
    pub fn normalized(&self, cwe: u32) -> f64 {
        if self.contracts == 0 {
            0.0
        } else {
            self.counts.get(&cwe).copied().unwrap_or(0) as f64 / self.contracts as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivityVulnMatrix {
    pub rows: BTreeMap<Activity, ActivityRow>,
}

impl ActivityVulnMatrix {
    pub fn cwes(&self) -> BTreeSet<u32> {
        self.rows.values().flat_map(|r| r.counts.keys().copied()).collect()
    }
}

/// Contract counts per (activity, CWE); a contract counts once per cell.
pub fn vuln_activity_matrix(
    findings: &BTreeMap<Address, Vec<VulnFinding>>,
    activity: &BTreeMap<Address, Activity>,
) -> ActivityVulnMatrix {
    let mut m = ActivityVulnMatrix::default();
    for (addr, act) in activity {
        let row = m.rows.entry(*act).or_default();
        row.contracts += 1;
        let cwes: BTreeSet<u32> =
            findings.get(addr).into_iter().flatten().filter_map(|f| f.cwe).collect();
        for c in cwes {
            *row.counts.entry(c).or_default() += 1;
        }
    }
    m
}

/// Contracts per CWE, most frequent first, ties by ascending id.
pub fn vuln_frequency_report(findings: &BTreeMap<Address, Vec<VulnFinding>>) -> Vec<(u32, usize)> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for fs in findings.values() {
        let cwes: BTreeSet<u32> = fs.iter().filter_map(|f| f.cwe).collect();
        for c in cwes {
            *counts.entry(c).or_default() += 1;
        }
    }
    let mut v: Vec<(u32, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Bin of `p` among `HISTOGRAM_BINS` equal bins over `[0, 1]`; 1.0 falls in the top bin.
pub fn histogram_bin(p: f64) -> usize {
    ((p * HISTOGRAM_BINS as f64 + 1e-9).floor() as usize).min(HISTOGRAM_BINS - 1)
}

pub fn probability_histogram(probabilities: &[SuspectProbability]) -> [usize; HISTOGRAM_BINS] {
    let mut h = [0; HISTOGRAM_BINS];
    for p in probabilities {
        h[histogram_bin(p.p)] += 1;
    }
    h
}
