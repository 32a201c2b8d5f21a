//! Block-range segmentation per temporal granularity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::data::{Address, BlockRange, DataStore};

pub const BLOCKS_PER_DAY: u64 = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GranularityKind {
    Day1,
    Day3,
    Month1,
    All,
}

impl GranularityKind {
    pub const ALL: [GranularityKind; 4] =
        [GranularityKind::Day1, GranularityKind::Day3, GranularityKind::Month1, GranularityKind::All];

    pub fn as_str(&self) -> &'static str {
        match self {
            GranularityKind::Day1 => "1day",
            GranularityKind::Day3 => "3day",
            GranularityKind::Month1 => "1month",
            GranularityKind::All => "all",
        }
    }
}

impl FromStr for GranularityKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "1day" | "day1" | "day" => Ok(GranularityKind::Day1),
            "3day" | "day3" => Ok(GranularityKind::Day3),
            "1month" | "month1" | "month" => Ok(GranularityKind::Month1),
            "all" => Ok(GranularityKind::All),
            _ => Err(format!("unknown granularity {s:?}")),
        }
    }
}

impl fmt::Display for GranularityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Granularity {
    pub kind: GranularityKind,
    /// `None` spans the whole history.
    pub blocks_per_segment: Option<u64>,
}

impl Granularity {
    pub fn new(kind: GranularityKind) -> Self {
        let blocks_per_segment = match kind {
            GranularityKind::Day1 => Some(BLOCKS_PER_DAY),
            GranularityKind::Day3 => Some(3 * BLOCKS_PER_DAY),
            GranularityKind::Month1 => Some(30 * BLOCKS_PER_DAY),
            GranularityKind::All => None,
        };
        Granularity { kind, blocks_per_segment }
    }

    /// Same kind with a different span; `All` ignores it.
    pub fn with_span(kind: GranularityKind, span: u64) -> Self {
        assert!(span >= 1, "segment span must be positive");
        let mut g = Self::new(kind);
        if g.blocks_per_segment.is_some() {
            g.blocks_per_segment = Some(span);
        }
        g
    }

    pub fn segment_count(&self, max_block: u64) -> usize {
        match self.blocks_per_segment {
            None => 1,
            Some(span) => max_block.div_ceil(span) as usize,
        }
    }

    /// Index (0-based) of the segment containing `block`, if in `[1, max_block]`.
    pub fn locate(&self, block: u64, max_block: u64) -> Option<usize> {
        if block == 0 || block > max_block {
            return None;
        }
        Some(match self.blocks_per_segment {
            None => 0,
            Some(span) => ((block - 1) / span) as usize,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub granularity: GranularityKind,
    /// 1-based.
    pub index: usize,
    pub range: BlockRange,
}

/// Tiles `[1, max_block]`; the trailing partial segment is kept.
pub fn segment_bounds(granularity: Granularity, max_block: u64) -> Vec<Segment> {
    assert!(max_block >= 1, "max_block must be at least 1");
    let span = granularity.blocks_per_segment.unwrap_or(max_block);
    (0..granularity.segment_count(max_block))
        .map(|i| {
            let start = i as u64 * span + 1;
            let end = ((i as u64 + 1) * span).min(max_block);
            Segment { granularity: granularity.kind, index: i + 1, range: BlockRange::new(start, end) }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivityIndex {
    /// Active accounts per segment, by 0-based segment position.
    pub per_segment: Vec<BTreeSet<Address>>,
    /// 0-based segment positions per account, ascending.
    pub per_account: BTreeMap<Address, Vec<usize>>,
}

impl ActivityIndex {
    pub fn active_segments(&self, address: &Address) -> &[usize] {
        self.per_account.get(address).map_or(&[], Vec::as_slice)
    }
}

pub fn assign_activity(store: &DataStore, granularity: Granularity) -> ActivityIndex {
    let max_block = store.max_block().max(1);
    let mut idx = ActivityIndex {
        per_segment: vec![BTreeSet::new(); granularity.segment_count(max_block)],
        per_account: BTreeMap::new(),
    };
    for address in store.accounts().keys() {
        let mut segs: Vec<usize> = store
            .activity_blocks(address)
            .filter_map(|b| granularity.locate(b, max_block))
            .collect();
        segs.dedup();
        if segs.is_empty() {
            continue;
        }
        for s in &segs {
            idx.per_segment[*s].insert(*address);
        }
        idx.per_account.insert(*address, segs);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ExternalTx, TxHash, Wei};
    use proptest::prelude::*;

    const MAINNET_MAX: u64 = 10_747_845;

    #[test]
    fn mainnet_segment_counts() {
        let n = |k| segment_bounds(Granularity::new(k), MAINNET_MAX).len();
        assert_eq!(n(GranularityKind::Day3), 598);
        assert_eq!(n(GranularityKind::Month1), 60);
        assert_eq!(n(GranularityKind::Day1), 1792);
        assert_eq!(n(GranularityKind::All), 1);
    }

    #[test]
    fn first_and_last_bounds() {
        let s = segment_bounds(Granularity::new(GranularityKind::Day1), MAINNET_MAX);
        assert_eq!(s[0].range, BlockRange::new(1, 6000));
        assert_eq!(s[1].range.start, 6001);
        assert_eq!(s.last().unwrap().range.end, MAINNET_MAX);
        assert_eq!(s.last().unwrap().index, 1792);
    }

    #[test]
    fn locate_boundaries() {
        let g = Granularity::new(GranularityKind::Day1);
        assert_eq!(g.locate(6000, MAINNET_MAX), Some(0));
        assert_eq!(g.locate(6001, MAINNET_MAX), Some(1));
        assert_eq!(g.locate(0, MAINNET_MAX), None);
    }

    fn tx(i: u64, block: u64, from: Address, to: Address) -> ExternalTx {
        let mut h = [0u8; 32];
        h[24..].copy_from_slice(&i.to_be_bytes());
        ExternalTx {
            hash: TxHash(h),
            block,
            sender: from,
            receiver: Some(to),
            value: Wei::ZERO,
            gas_price: Wei::ZERO,
            success: true,
        }
    }

    #[test]
    fn activity_counts_distinct_segments() {
        let a = Address::from_index(1, 1);
        let b = Address::from_index(1, 2);
        let txs = vec![tx(1, 10, a, b), tx(2, 20, a, b), tx(3, 24_005, b, a), tx(4, 24_010, b, a)];
        let store = DataStore::new(txs, vec![], BTreeMap::new(), vec![]);
        let idx = assign_activity(&store, Granularity::new(GranularityKind::Day1));
        assert_eq!(idx.active_segments(&a), &[0, 4]);
        assert!(idx.per_segment[4].contains(&b));
        assert!(idx.per_segment[1].is_empty());
    }

    proptest! {
        #[test]
        fn segments_tile(max_block in 1u64..2_000_000, span in 1u64..300_000) {
            let segs = segment_bounds(Granularity::with_span(GranularityKind::Day1, span), max_block);
            prop_assert_eq!(segs.iter().map(|s| s.range.len()).sum::<u64>(), max_block);
            prop_assert_eq!(segs[0].range.start, 1);
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].range.end + 1, w[1].range.start);
            }
        }

        #[test]
        fn finer_granularity_refines(blocks in prop::collection::vec(1u64..2_000_000, 1..50)) {
            let max = 2_000_000;
            let d1 = Granularity::new(GranularityKind::Day1);
            let d3 = Granularity::new(GranularityKind::Day3);
            let m1 = Granularity::new(GranularityKind::Month1);
            for b in blocks {
                let x = d1.locate(b, max).unwrap();
                let y = d3.locate(b, max).unwrap();
                let z = m1.locate(b, max).unwrap();
                prop_assert_eq!(x / 3, y);
                prop_assert_eq!(y / 10, z);
                let s = &segment_bounds(d1, max)[x];
                prop_assert!(s.range.contains(b));
            }
        }
    }
}
