//! Per-account, per-segment behavioural feature vectors.

pub mod bursts;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Address, BlockRange, DataStore, TxView};
use crate::segment::{Granularity, Segment};

pub use bursts::{degree_bursts, temporal_bursts, value_bursts, BurstParams};

pub const TX_FEATURES: usize = 59;
pub const SEVERITY_FEATURE: &str = "severityScore";

/// Column names in canonical order.
pub const FEATURE_NAMES: [&str; TX_FEATURES] = [
    "indegreeTimeInv",
    "outdegreeTimeInv",
    "degreeTimeInv",
    "numberOfburstTemporalInOut",
    "longestBurstTemporalInOut",
    "numberOfburstTemporalIn",
    "longestBurstTemporalIn",
    "numberOfburstTemporalOut",
    "longestBurstTemporalOut",
    "numberOfburstDegreeInOut",
    "longestBurstDegreeInOutAtTime",
    "numberOfburstDegreeIn",
    "longestBurstDegreeInAtTime",
    "numberOfburstDegreeOut",
    "longestBurstDegreeOutAtTime",
    "zeroTransactions",
    "totalBal",
    "transactedFirst",
    "transactedLast",
    "activeDuration",
    "averagePerInBal",
    "uniqueIn",
    "lastActiveSince",
    "indegree__index_mass_quantile__q_0.1",
    "indegree__energy_ratio_by_chunks__num_segments_10__segment_focus_0",
    "indegree__linear_trend__attr_pvalue",
    "ittime__quantile__q_0.7",
    "ittime__fft_coefficient__coeff_0__attr_real",
    "ittime__median",
    "outdegree__energy_ratio_by_chunks__num_segments_10__segment_focus_0",
    "outdegree__energy_ratio_by_chunks__num_segments_10__segment_focus_1",
    "outdegree__fft_coefficient__coeff_0__attr_real",
    "gasPrice__quantile__q_0.2",
    "gasPrice__quantile__q_0.1",
    "gasPrice__cwt_coefficients__coeff_0__w_20",
    "attractiveness__median",
    "attractiveness__quantile__q_0.4",
    "attractiveness__mean",
    "balanceOut__quantile__q_0.1",
    "balanceOut__quantile__q_0.3",
    "balanceOut__cwt_coefficients__coeff_0__w_2",
    "balanceIn__quantile__q_0.4",
    "balanceIn__cwt_coefficients__coeff_0__w_20",
    "balanceIn__quantile__q_0.3",
    "maxInPayment__quantile__q_0.3",
    "maxInPayment__quantile__q_0.2",
    "maxInPayment__cwt_coefficients__coeff_0__w_5",
    "maxOutPayment__quantile__q_0.6",
    "maxOutPayment__quantile__q_0.1",
    "maxOutPayment__cwt_coefficients__coeff_0__w_2",
    "clusteringCoeff",
    "burstCount_gasPrice",
    "burstCount_balanceIn",
    "burstCount_balanceOut",
    "burstInstance_indegree",
    "burstInstance_outdegree",
    "burstInstance_maxInPayment",
    "burstInstance_maxOutPayment",
    "burstInstance_gasPrice",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureConfig {
    TxOnly,
    TxSev,
}

impl FeatureConfig {
    pub const BOTH: [FeatureConfig; 2] = [FeatureConfig::TxOnly, FeatureConfig::TxSev];

    pub fn dimension(&self) -> usize {
        match self {
            FeatureConfig::TxOnly => TX_FEATURES,
            FeatureConfig::TxSev => TX_FEATURES + 1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureConfig::TxOnly => "tx",
            FeatureConfig::TxSev => "tx+sev",
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = FEATURE_NAMES.to_vec();
        if *self == FeatureConfig::TxSev {
            v.push(SEVERITY_FEATURE);
        }
        v
    }
}

impl FromStr for FeatureConfig {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "tx" | "tx-only" => Ok(FeatureConfig::TxOnly),
            "tx+sev" | "tx-sev" => Ok(FeatureConfig::TxSev),
            _ => Err(format!("unknown feature config {s:?}")),
        }
    }
}

impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("{address} has no transactions in segment {segment}")]
    InactiveAccount { address: Address, segment: usize },
}

/// Per-active-block series plus inter-transaction times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaseSeries {
    pub blocks: Vec<u64>,
    pub indegree: Vec<f64>,
    pub outdegree: Vec<f64>,
    pub gas_price: Vec<f64>,
    pub balance_in: Vec<f64>,
    pub balance_out: Vec<f64>,
    pub max_in_payment: Vec<f64>,
    pub max_out_payment: Vec<f64>,
    pub attractiveness: Vec<f64>,
    /// Block gaps between consecutive transactions.
    pub ittime: Vec<f64>,
}

/// Builds the series of `address` from its slice, which must be sorted by block.
pub fn build_base_series(address: &Address, slice: &[TxView<'_>]) -> BaseSeries {
    let mut s = BaseSeries::default();
    s.ittime = slice.windows(2).map(|w| (w[1].block() - w[0].block()) as f64).collect();
    let mut seen: BTreeSet<Address> = BTreeSet::new();
    let mut i = 0;
    while i < slice.len() {
        let block = slice[i].block();
        let mut j = i;
        let (mut ind, mut outd) = (0u64, 0u64);
        let (mut bin, mut bout, mut min, mut mout) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let (mut gas_sum, mut gas_n) = (0.0, 0u64);
        let mut senders: BTreeSet<Address> = BTreeSet::new();
        while j < slice.len() && slice[j].block() == block {
            let t = &slice[j];
            let v = t.value().to_f64();
            if t.receiver() == Some(*address) {
                ind += 1;
                bin += v;
                min = min.max(v);
                senders.insert(t.sender());
            }
            if t.sender() == *address {
                outd += 1;
                bout += v;
                mout = mout.max(v);
            }
            if let Some(g) = t.gas_price() {
                gas_sum += g.to_f64();
                gas_n += 1;
            }
            j += 1;
        }
        let fresh = senders.iter().filter(|a| !seen.contains(a)).count();
        let attractiveness = if senders.is_empty() { 0.0 } else { fresh as f64 / senders.len() as f64 };
        seen.extend(senders);
        s.blocks.push(block);
        s.indegree.push(ind as f64);
        s.outdegree.push(outd as f64);
        s.gas_price.push(if gas_n == 0 { 0.0 } else { gas_sum / gas_n as f64 });
        s.balance_in.push(bin);
        s.balance_out.push(bout);
        s.max_in_payment.push(min);
        s.max_out_payment.push(mout);
        s.attractiveness.push(attractiveness);
        i = j;
    }
    s
}

/// Undirected transaction graph of one segment, without self loops.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentGraph {
    adjacency: HashMap<Address, BTreeSet<Address>>,
}

impl SegmentGraph {
    pub fn from_edges(edges: impl IntoIterator<Item = (Address, Address)>) -> Self {
        let mut g = SegmentGraph::default();
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    fn add_edge(&mut self, a: Address, b: Address) {
        if a == b {
            return;
        }
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn build(store: &DataStore, range: BlockRange) -> Self {
        Self::from_edges(
            store
                .all_transactions()
                .filter(|t| range.contains(t.block()))
                .filter_map(|t| t.receiver().map(|r| (t.sender(), r))),
        )
    }

    /// One graph per segment of `granularity`, in a single pass.
    pub fn build_all(store: &DataStore, granularity: Granularity) -> Vec<Self> {
        let max_block = store.max_block().max(1);
        let mut out = vec![SegmentGraph::default(); granularity.segment_count(max_block)];
        for t in store.all_transactions() {
            if let (Some(s), Some(r)) = (granularity.locate(t.block(), max_block), t.receiver()) {
                out[s].add_edge(t.sender(), r);
            }
        }
        out
    }

    pub fn neighbors(&self, a: &Address) -> Option<&BTreeSet<Address>> {
        self.adjacency.get(a)
    }

    /// Local clustering coefficient; 0 below two neighbours.
    pub fn clustering_coefficient(&self, a: &Address) -> f64 {
        let Some(n) = self.adjacency.get(a) else {
            return 0.0;
        };
        let d = n.len();
        if d < 2 {
            return 0.0;
        }
        let links: usize = n
            .iter()
            .map(|u| self.adjacency.get(u).map_or(0, |nu| nu.intersection(n).count()))
            .sum();
        // each neighbour-neighbour edge was counted from both ends
        links as f64 / (d * (d - 1)) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub subject: Address,
    /// 1-based segment index.
    pub segment: usize,
    pub values: Vec<f64>,
}

/// Computes the vector of `address` in `segment`. `severity`, when given,
/// fills the extra slot of the tx+sev configuration.
pub fn build_feature_vector(
    store: &DataStore,
    address: &Address,
    segment: &Segment,
    graph: &SegmentGraph,
    params: &BurstParams,
    severity: Option<f64>,
) -> Result<FeatureVector, FeatureError> {
    let slice = store.activity_slice(address, segment.range);
    if slice.is_empty() {
        return Err(FeatureError::InactiveAccount { address: *address, segment: segment.index });
    }
    let s = build_base_series(address, &slice);
    let mut v = Vec::with_capacity(TX_FEATURES + 1);

    let all_blocks: Vec<u64> = slice.iter().map(|t| t.block()).collect();
    let in_blocks: Vec<u64> =
        slice.iter().filter(|t| t.receiver() == Some(*address)).map(|t| t.block()).collect();
    let out_blocks: Vec<u64> = slice.iter().filter(|t| t.sender() == *address).map(|t| t.block()).collect();
    let first = all_blocks[0];
    let last = *all_blocks.last().expect("non-empty slice");
    let duration = (last - first) as f64;
    let n_in = in_blocks.len() as f64;
    let n_out = out_blocks.len() as f64;
    let sum_in: f64 = s.balance_in.iter().sum();
    let sum_out: f64 = s.balance_out.iter().sum();

    v.push(n_in / (duration + 1.0));
    v.push(n_out / (duration + 1.0));
    v.push((n_in + n_out) / (duration + 1.0));

    for blocks in [&all_blocks, &in_blocks, &out_blocks] {
        let (c, l) = temporal_bursts(blocks, params.temporal_gap_max);
        v.push(c as f64);
        v.push(l as f64);
    }

    let per_block = |series: &[f64]| -> Vec<(u64, u64)> {
        s.blocks.iter().zip(series).map(|(b, c)| (*b, *c as u64)).collect()
    };
    let inout: Vec<f64> = s.indegree.iter().zip(&s.outdegree).map(|(a, b)| a + b).collect();
    for series in [&inout, &s.indegree, &s.outdegree] {
        let (c, at) = degree_bursts(&per_block(series), params.degree_threshold);
        v.push(c as f64);
        v.push(at as f64);
    }

    v.push(slice.iter().filter(|t| t.value().is_zero()).count() as f64);
    v.push(sum_in - sum_out);
    v.push((first - segment.range.start) as f64);
    v.push((last - segment.range.start) as f64);
    v.push(duration);
    v.push(if n_in == 0.0 { 0.0 } else { sum_in / n_in });
    let unique_in: BTreeSet<Address> =
        slice.iter().filter(|t| t.receiver() == Some(*address)).map(|t| t.sender()).collect();
    v.push(unique_in.len() as f64);
    v.push((segment.range.end - last) as f64);

    use stats::*;
    v.push(index_mass_quantile(&s.indegree, 0.1));
    v.push(energy_ratio_by_chunks(&s.indegree, 10, 0));
    v.push(linear_trend_pvalue(&s.indegree));
    v.push(quantile(&s.ittime, 0.7));
    v.push(fft0_real(&s.ittime));
    v.push(median(&s.ittime));
    v.push(energy_ratio_by_chunks(&s.outdegree, 10, 0));
    v.push(energy_ratio_by_chunks(&s.outdegree, 10, 1));
    v.push(fft0_real(&s.outdegree));
    v.push(quantile(&s.gas_price, 0.2));
    v.push(quantile(&s.gas_price, 0.1));
    v.push(cwt_coeff0(&s.gas_price, 20.0));
    v.push(median(&s.attractiveness));
    v.push(quantile(&s.attractiveness, 0.4));
    v.push(mean(&s.attractiveness));
    v.push(quantile(&s.balance_out, 0.1));
    v.push(quantile(&s.balance_out, 0.3));
    v.push(cwt_coeff0(&s.balance_out, 2.0));
    v.push(quantile(&s.balance_in, 0.4));
    v.push(cwt_coeff0(&s.balance_in, 20.0));
    v.push(quantile(&s.balance_in, 0.3));
    v.push(quantile(&s.max_in_payment, 0.3));
    v.push(quantile(&s.max_in_payment, 0.2));
    v.push(cwt_coeff0(&s.max_in_payment, 5.0));
    v.push(quantile(&s.max_out_payment, 0.6));
    v.push(quantile(&s.max_out_payment, 0.1));
    v.push(cwt_coeff0(&s.max_out_payment, 2.0));

    v.push(graph.clustering_coefficient(address));

    let run = params.value_run_min;
    v.push(value_bursts(&s.gas_price, run).0 as f64);
    v.push(value_bursts(&s.balance_in, run).0 as f64);
    v.push(value_bursts(&s.balance_out, run).0 as f64);
    for series in [&s.indegree, &s.outdegree, &s.max_in_payment, &s.max_out_payment, &s.gas_price] {
        v.push(value_bursts(series, run).1 as f64);
    }
    debug_assert_eq!(v.len(), TX_FEATURES);

    if let Some(sev) = severity {
        v.push(sev);
    }
    for x in &mut v {
        if !x.is_finite() {
            *x = 0.0;
        }
    }
    Ok(FeatureVector { subject: *address, segment: segment.index, values: v })
}

/// Vectors for every account in `accounts` active in `segment`, ordered by
/// address. Under `TxSev`, accounts missing from `severities` score 0.
pub fn extract_segment(
    store: &DataStore,
    segment: &Segment,
    graph: &SegmentGraph,
    accounts: &BTreeSet<Address>,
    params: &BurstParams,
    config: FeatureConfig,
    severities: &BTreeMap<Address, f64>,
) -> Vec<FeatureVector> {
    let list: Vec<&Address> = accounts.iter().collect();
    list.par_iter()
        .filter_map(|a| {
            let sev = match config {
                FeatureConfig::TxOnly => None,
                FeatureConfig::TxSev => Some(severities.get(*a).copied().unwrap_or(0.0)),
            };
            build_feature_vector(store, a, segment, graph, params, sev).ok()
        })
        .collect()
}
