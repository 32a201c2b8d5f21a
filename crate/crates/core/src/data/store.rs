use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use super::{
    AccountKind, AccountRecord, Address, ExternalTx, InternalTx, MaliciousLabel, Opcode,
    SourceRecord, TxHash, Wei,
};

/// Inclusive block interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockRange {
    pub start: u64,
    pub end: u64,
}

impl BlockRange {
    pub fn new(start: u64, end: u64) -> Self {
        assert!(start <= end, "block range start {start} > end {end}");
        BlockRange { start, end }
    }

    pub fn contains(&self, block: u64) -> bool {
        self.start <= block && block <= self.end
    }

    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Position of a transaction in one of the two tables.
///
/// Orders by table first only as a tie-break: per-account lists are sorted by
/// `(block, TxRef)`, so within a block external rows precede internal ones and
/// each table keeps its ingest order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TxRef {
    External(u32),
    Internal(u32),
}

/// Borrowed view of either transaction kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxView<'a> {
    External(&'a ExternalTx),
    Internal(&'a InternalTx),
}

impl<'a> TxView<'a> {
    pub fn block(&self) -> u64 {
        match self {
            TxView::External(t) => t.block,
            TxView::Internal(t) => t.block,
        }
    }

    pub fn sender(&self) -> Address {
        match self {
            TxView::External(t) => t.sender,
            TxView::Internal(t) => t.sender,
        }
    }

    pub fn receiver(&self) -> Option<Address> {
        match self {
            TxView::External(t) => t.receiver,
            TxView::Internal(t) => Some(t.receiver),
        }
    }

    pub fn value(&self) -> Wei {
        match self {
            TxView::External(t) => t.value,
            TxView::Internal(t) => t.value,
        }
    }

    /// Gas price; internal messages carry none.
    pub fn gas_price(&self) -> Option<Wei> {
        match self {
            TxView::External(t) => Some(t.gas_price),
            TxView::Internal(_) => None,
        }
    }

    pub fn opcode(&self) -> Option<Opcode> {
        match self {
            TxView::External(_) => None,
            TxView::Internal(t) => Some(t.opcode),
        }
    }

    pub fn touches(&self, address: &Address) -> bool {
        self.sender() == *address || self.receiver() == Some(*address)
    }
}

/// Immutable, fully indexed transaction dataset.
#[derive(Debug, Clone)]
pub struct DataStore {
    external: Vec<ExternalTx>,
    internal: Vec<InternalTx>,
    accounts: BTreeMap<Address, AccountRecord>,
    /// Per-account transactions sorted by `(block, TxRef)`, with the block cached.
    account_txs: HashMap<Address, Vec<(u64, TxRef)>>,
    sources: BTreeMap<Address, SourceRecord>,
    max_block: u64,
}

impl DataStore {
    /// Sorts, resolves contract-creation receivers, infers account kinds, and
    /// builds the per-account index. Row order within a block is preserved.
    pub fn new(
        mut external: Vec<ExternalTx>,
        mut internal: Vec<InternalTx>,
        labels: BTreeMap<Address, MaliciousLabel>,
        sources: Vec<SourceRecord>,
    ) -> Self {
        external.sort_by_key(|t| t.block);
        internal.sort_by_key(|t| t.block);

        let mut created_by_parent: HashMap<TxHash, Address> = HashMap::new();
        for t in internal.iter().filter(|t| t.opcode == Opcode::Create) {
            created_by_parent.entry(t.parent_hash).or_insert(t.receiver);
        }
        for t in external.iter_mut().filter(|t| t.receiver.is_none()) {
            t.receiver = created_by_parent.get(&t.hash).copied();
        }

        let sources: BTreeMap<Address, SourceRecord> =
            sources.into_iter().map(|s| (s.address, s)).collect();

        // Contract evidence: created, has source, or labeled. Otherwise anything
        // that signs an external tx is an EOA, and internal-message senders are
        // contracts.
        let mut contract: BTreeSet<Address> = BTreeSet::new();
        let mut signer: BTreeSet<Address> = BTreeSet::new();
        let mut internal_sender: BTreeSet<Address> = BTreeSet::new();
        contract.extend(sources.keys().copied());
        contract.extend(labels.keys().copied());
        for t in &internal {
            if t.opcode == Opcode::Create {
                contract.insert(t.receiver);
            }
            internal_sender.insert(t.sender);
        }
        for t in &external {
            signer.insert(t.sender);
        }

        let mut account_txs: HashMap<Address, Vec<(u64, TxRef)>> = HashMap::new();
        let mut push = |addr: Address, block: u64, r: TxRef| {
            account_txs.entry(addr).or_default().push((block, r));
        };
        for (i, t) in external.iter().enumerate() {
            let r = TxRef::External(i as u32);
            push(t.sender, t.block, r);
            if let Some(to) = t.receiver {
                if to != t.sender {
                    push(to, t.block, r);
                }
            }
        }
        for (i, t) in internal.iter().enumerate() {
            let r = TxRef::Internal(i as u32);
            push(t.sender, t.block, r);
            if t.receiver != t.sender {
                push(t.receiver, t.block, r);
            }
        }
        for list in account_txs.values_mut() {
            list.sort_unstable();
        }

        let mut all: BTreeSet<Address> = account_txs.keys().copied().collect();
        all.extend(labels.keys().copied());
        all.extend(sources.keys().copied());
        let accounts = all
            .into_iter()
            .map(|address| {
                let kind = if contract.contains(&address) {
                    AccountKind::Contract
                } else if signer.contains(&address) {
                    AccountKind::Eoa
                } else if internal_sender.contains(&address) {
                    AccountKind::Contract
                } else {
                    AccountKind::Eoa
                };
                let label = labels.get(&address).cloned();
                (address, AccountRecord { address, kind, label })
            })
            .collect();

        let max_block = external
            .iter()
            .map(|t| t.block)
            .chain(internal.iter().map(|t| t.block))
            .max()
            .unwrap_or(0);

        DataStore { external, internal, accounts, account_txs, sources, max_block }
    }

    pub fn max_block(&self) -> u64 {
        self.max_block
    }

    pub fn external(&self) -> &[ExternalTx] {
        &self.external
    }

    pub fn internal(&self) -> &[InternalTx] {
        &self.internal
    }

    pub fn accounts(&self) -> &BTreeMap<Address, AccountRecord> {
        &self.accounts
    }

    pub fn account(&self, address: &Address) -> Option<&AccountRecord> {
        self.accounts.get(address)
    }

    pub fn kind_of(&self, address: &Address) -> Option<AccountKind> {
        self.accounts.get(address).map(|a| a.kind)
    }

    pub fn sources(&self) -> &BTreeMap<Address, SourceRecord> {
        &self.sources
    }

    pub fn labels(&self) -> BTreeMap<Address, MaliciousLabel> {
        self.accounts
            .values()
            .filter_map(|a| a.label.clone().map(|l| (a.address, l)))
            .collect()
    }

    pub fn view(&self, r: TxRef) -> TxView<'_> {
        match r {
            TxRef::External(i) => TxView::External(&self.external[i as usize]),
            TxRef::Internal(i) => TxView::Internal(&self.internal[i as usize]),
        }
    }

    /// Every transaction in global `(block, TxRef)` order.
    pub fn all_transactions(&self) -> impl Iterator<Item = TxView<'_>> {
        let mut refs: Vec<(u64, TxRef)> = self
            .external
            .iter()
            .enumerate()
            .map(|(i, t)| (t.block, TxRef::External(i as u32)))
            .chain(
                self.internal
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (t.block, TxRef::Internal(i as u32))),
            )
            .collect();
        refs.sort_unstable();
        refs.into_iter().map(move |(_, r)| self.view(r))
    }

    /// Number of transactions touching the account across the whole dataset.
    pub fn tx_count(&self, address: &Address) -> usize {
        self.account_txs.get(address).map_or(0, Vec::len)
    }

    /// Blocks of the account's transactions, one entry per transaction, ascending.
    pub fn activity_blocks(&self, address: &Address) -> impl Iterator<Item = u64> + '_ {
        self.account_txs
            .get(address)
            .into_iter()
            .flat_map(|l| l.iter().map(|(b, _)| *b))
    }

    /// All and only the transactions touching `address` with a block in `range`,
    /// ordered by block then ingest order. Unknown addresses yield an empty list.
    pub fn activity_slice(&self, address: &Address, range: BlockRange) -> Vec<TxView<'_>> {
        let Some(list) = self.account_txs.get(address) else {
            return Vec::new();
        };
        let lo = list.partition_point(|(b, _)| *b < range.start);
        let hi = list.partition_point(|(b, _)| *b <= range.end);
        list[lo..hi].iter().map(|(_, r)| self.view(*r)).collect()
    }

    /// Canonical text serialization; equal stores produce identical bytes.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut s = String::new();
        let _ = writeln!(s, "maxBlock,{}", self.max_block);
        for t in &self.external {
            let _ = writeln!(
                s,
                "E,{},{},{},{},{},{},{}",
                t.hash,
                t.block,
                t.sender,
                t.receiver.map(|a| a.to_string()).unwrap_or_default(),
                t.value,
                t.gas_price,
                t.success
            );
        }
        for t in &self.internal {
            let _ = writeln!(
                s,
                "I,{},{},{},{},{},{}",
                t.parent_hash, t.block, t.sender, t.receiver, t.value, t.opcode
            );
        }
        for a in self.accounts.values() {
            let _ = writeln!(
                s,
                "A,{},{},{},{}",
                a.address,
                a.kind,
                a.label.as_ref().map(|l| l.activity.as_str()).unwrap_or(""),
                self.tx_count(&a.address)
            );
        }
        for src in self.sources.values() {
            let _ = writeln!(
                s,
                "S,{},{},{}",
                src.address,
                src.available,
                hex::encode(&src.text)
            );
        }
        s.into_bytes()
    }
}
