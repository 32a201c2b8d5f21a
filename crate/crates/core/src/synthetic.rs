//! Deterministic synthetic dataset with planted ground truth.
//!
//! One labelled contract `M` is created by an EOA and itself deploys a child
//! `K` without source. A benign contract `C` repeats `M`'s per-block
//! behaviour exactly, with its own isolated counterparties, different source
//! text and findings of the same severity profile. A control `O` behaves
//! unlike `M`. A second labelled contract without source hangs off a factory
//! that the shipped exclusion list turns into a barrier. Background contracts
//! fill every segment in which `M` is active.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use base64::Engine as _;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Activity, Address, ExternalTx, InternalTx, Opcode, TxHash, Wei};

pub const MAX_BLOCK: u64 = 360_000;
pub const DAY: u64 = 6000;
pub const BACKGROUND: u64 = 44;

const CONTRACT: u8 = 0xc0;
const EOA: u8 = 0xe0;
const VICTIM_M: u8 = 0xe1;
const VICTIM_C: u8 = 0xe2;
const PAYEE_O: u8 = 0xe3;
const BG_PEER: u8 = 0xe4;

/// Addresses with known roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Planted {
    pub malicious: Address,
    pub child: Address,
    pub clone: Address,
    pub control: Address,
    pub factory: Address,
    pub factory_child: Address,
    pub second_seed: Address,
}

impl Planted {
    pub fn new() -> Self {
        Planted {
            malicious: Address::from_index(CONTRACT, 1),
            child: Address::from_index(CONTRACT, 2),
            clone: Address::from_index(CONTRACT, 3),
            control: Address::from_index(CONTRACT, 4),
            factory: Address::from_index(CONTRACT, 5),
            factory_child: Address::from_index(CONTRACT, 6),
            second_seed: Address::from_index(CONTRACT, 7),
        }
    }
}

impl Default for Planted {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticDataset {
    pub external: Vec<ExternalTx>,
    pub internal: Vec<InternalTx>,
    pub labels: Vec<(Address, Activity)>,
    /// `None` marks a contract whose source is unavailable.
    pub sources: Vec<(Address, Option<String>)>,
    /// `(subject, tool, rawName)`.
    pub findings: Vec<(String, String, String)>,
    pub excluded: Vec<Address>,
}

struct Builder {
    ds: SyntheticDataset,
    next_hash: u64,
}

impl Builder {
    fn hash(&mut self) -> TxHash {
        self.next_hash += 1;
        let mut h = [0u8; 32];
        h[0] = 0x5a;
        h[24..].copy_from_slice(&self.next_hash.to_be_bytes());
        TxHash(h)
    }

    fn ext(&mut self, block: u64, from: Address, to: Option<Address>, value: u128, gas: u128) -> TxHash {
        let hash = self.hash();
        self.ds.external.push(ExternalTx {
            hash,
            block,
            sender: from,
            receiver: to,
            value: Wei::from_u128(value),
            gas_price: Wei::from_u128(gas),
            success: true,
        });
        hash
    }

    fn int(&mut self, parent: TxHash, block: u64, from: Address, to: Address, value: u128, op: Opcode) {
        self.ds.internal.push(InternalTx {
            parent_hash: parent,
            block,
            sender: from,
            receiver: to,
            value: Wei::from_u128(value),
            opcode: op,
        });
    }
}

/// One block of the behaviour shared by `M` and `C`.
struct PatternBlock {
    block: u64,
    /// `(victim index, value, gas price)` deposits.
    deposits: Vec<(u64, u128, u128)>,
    /// Payout to an earlier victim.
    payout: Option<(u64, u128)>,
    /// `M` deploys its child here; `C` makes a zero-value call instead.
    spawn: bool,
}

const GWEI: u128 = 1_000_000_000;
const ETHER: u128 = 1_000_000_000_000_000_000;

fn pattern(rng: &mut ChaCha8Rng, days: &[u64]) -> Vec<PatternBlock> {
    let mut out = Vec::new();
    let mut victims = 0u64;
    for &d in days {
        let start = d * DAY + 1;
        let mut blocks: BTreeSet<u64> = BTreeSet::new();
        let n = rng.random_range(2..=5);
        let base = start + rng.random_range(0..DAY - 200);
        for _ in 0..n {
            blocks.insert(base + rng.random_range(0..150));
        }
        for b in blocks {
            let k = rng.random_range(1..=3);
            let mut deposits = Vec::new();
            for _ in 0..k {
                let who = if victims > 0 && rng.random_bool(0.3) {
                    rng.random_range(0..victims)
                } else {
                    victims += 1;
                    victims - 1
                };
                let value = rng.random_range(1..50) as u128 * ETHER / 10;
                deposits.push((who, value, rng.random_range(20..60) as u128 * GWEI));
            }
            let payout = (victims > 2 && rng.random_bool(0.4))
                .then(|| (rng.random_range(0..victims), rng.random_range(1..30) as u128 * ETHER / 10));
            out.push(PatternBlock { block: b, deposits, payout, spawn: false });
        }
    }
    if let Some(p) = out.get_mut(3) {
        p.spawn = true;
    }
    out
}

fn play(b: &mut Builder, me: Address, victim_tag: u8, pattern: &[PatternBlock], spawn_to: Address, spawn_op: Opcode) {
    for p in pattern {
        let mut parent = None;
        for &(who, value, gas) in &p.deposits {
            parent = Some(b.ext(p.block, Address::from_index(victim_tag, who), Some(me), value, gas));
        }
        let parent = parent.expect("at least one deposit");
        if let Some((who, value)) = p.payout {
            b.int(parent, p.block, me, Address::from_index(victim_tag, who), value, Opcode::Call);
        }
        if p.spawn {
            b.int(parent, p.block, me, spawn_to, 0, spawn_op);
        }
    }
}

/// Generates the dataset for `seed`.
pub fn generate(seed: u64) -> (SyntheticDataset, Planted) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pl = Planted::new();
    let mut b = Builder { ds: SyntheticDataset::default(), next_hash: 0 };
    let days_total = MAX_BLOCK / DAY;

    // creation of M and C by distinct EOAs, identical in shape
    let creator_m = Address::from_index(EOA, 1);
    let creator_c = Address::from_index(EOA, 2);
    for (creator, target) in [(creator_m, pl.malicious), (creator_c, pl.clone)] {
        let h = b.ext(1500, creator, None, 0, 40 * GWEI);
        b.int(h, 1500, creator, target, 0, Opcode::Create);
    }

    let mut days: Vec<u64> = (0..days_total).collect();
    days.retain(|_| rng.random_bool(0.5));
    let pat = pattern(&mut rng, &days);
    play(&mut b, pl.malicious, VICTIM_M, &pat, pl.child, Opcode::Create);
    play(&mut b, pl.clone, VICTIM_C, &pat, Address::from_index(EOA, 3), Opcode::Call);

    // the child keeps receiving a trickle
    for (i, d) in days.iter().enumerate().take(6) {
        b.ext(d * DAY + 5000, Address::from_index(EOA, 10 + i as u64), Some(pl.child), ETHER / 100, 30 * GWEI);
    }

    // control: an operator bursts zero-value calls, the contract pays many fresh payees
    let operator = Address::from_index(EOA, 4);
    let mut payee = 0u64;
    for d in 0..days_total {
        let start = d * DAY + 1 + 2000;
        for j in 0..4 {
            let h = b.ext(start + j, operator, Some(pl.control), 0, 300 * GWEI);
            for _ in 0..2 {
                payee += 1;
                b.int(h, start + j, pl.control, Address::from_index(PAYEE_O, payee), 7 * ETHER, Opcode::Call);
            }
        }
    }

    // factory barrier and the second labelled contract
    let factory_owner = Address::from_index(EOA, 5);
    let h = b.ext(800, factory_owner, None, 0, 25 * GWEI);
    b.int(h, 800, factory_owner, pl.factory, 0, Opcode::Create);
    for (blk, child) in [(900, pl.second_seed), (950, pl.factory_child)] {
        let h = b.ext(blk, factory_owner, Some(pl.factory), 0, 25 * GWEI);
        b.int(h, blk, pl.factory, child, 0, Opcode::Create);
    }
    for d in (0..days_total).step_by(4) {
        let blk = d * DAY + 3100;
        b.ext(blk, Address::from_index(EOA, 100 + d), Some(pl.second_seed), ETHER, 45 * GWEI);
        b.ext(blk + 7, factory_owner, Some(pl.factory_child), 0, 21 * GWEI);
        b.ext(blk + 9, factory_owner, Some(pl.factory), ETHER / 2, 22 * GWEI);
    }

    // background contracts
    let mut peer = 0u64;
    for i in 0..BACKGROUND {
        let me = Address::from_index(CONTRACT, 100 + i);
        let steady = i < 4;
        let rate = rng.random_range(1..=4);
        let scale = rng.random_range(1..200) as u128 * ETHER / 100;
        let gas = rng.random_range(5..120) as u128;
        let repeat = rng.random_range(0.0..0.8);
        let mut own_peers: Vec<u64> = Vec::new();
        for d in 0..days_total {
            if !steady && !rng.random_bool(0.35) {
                continue;
            }
            let start = d * DAY + 1;
            for _ in 0..rate {
                let blk = start + rng.random_range(0..DAY);
                let from = match own_peers.choose(&mut rng) {
                    Some(p) if rng.random_bool(repeat) => *p,
                    _ => {
                        peer += 1;
                        own_peers.push(peer);
                        peer
                    }
                };
                let value = if rng.random_bool(0.2) { 0 } else { scale * rng.random_range(1..10) as u128 };
                let h = b.ext(blk, Address::from_index(BG_PEER, from), Some(me), value, gas * GWEI);
                if rng.random_bool(0.3) {
                    let to = *own_peers.choose(&mut rng).expect("non-empty");
                    b.int(h, blk, me, Address::from_index(BG_PEER, to), value / 2, Opcode::Call);
                }
            }
        }
    }
    // pin the dataset end
    b.ext(MAX_BLOCK, Address::from_index(EOA, 6), Some(Address::from_index(CONTRACT, 100)), 0, 10 * GWEI);

    let ds = &mut b.ds;
    ds.labels = vec![(pl.malicious, Activity::Ponzi), (pl.second_seed, Activity::Gambling)];
    ds.excluded = vec![pl.factory];

    ds.sources.push((pl.malicious, Some("contract Pyramid {\n  mapping(address => uint) shares;\n}\n".into())));
    ds.sources.push((pl.clone, Some("contract Savings {\n  mapping(address => uint) balances;\n}\n".into())));
    ds.sources.push((pl.control, Some("contract Payroll {\n  address[] staff;\n}\n".into())));
    ds.sources.push((pl.factory, Some("contract Factory {\n  function make() public {}\n}\n".into())));
    ds.sources.push((pl.factory_child, Some("contract Made {}\n".into())));
    ds.sources.push((pl.child, None));
    ds.sources.push((pl.second_seed, None));
    for i in 0..BACKGROUND {
        let me = Address::from_index(CONTRACT, 100 + i);
        // a few contracts are unverified; the rest share twelve code bodies
        let src = (i % 15 != 14).then(|| format!("contract Template{} {{\n  uint x;\n}}\n", i % 12));
        ds.sources.push((me, src));
    }

    let f = |a: &Address, t: &str, r: &str| (a.to_string(), t.to_string(), r.to_string());
    // M: H, M, L, L
    ds.findings.push(f(&pl.malicious, "slither", "reentrancy-eth"));
    ds.findings.push(f(&pl.malicious, "slither", "timestamp"));
    ds.findings.push(f(&pl.malicious, "smartcheck", "SOLIDITY_PRAGMAS_VERSION"));
    ds.findings.push(f(&pl.malicious, "mythril", "Exception State"));
    // C: same severity profile under other names
    ds.findings.push(f(&pl.clone, "mythril", "Integer Overflow"));
    ds.findings.push(f(&pl.clone, "oyente", "Transaction-Ordering Dependence (TOD)"));
    ds.findings.push(f(&pl.clone, "smartcheck", "SOLIDITY_VISIBILITY"));
    ds.findings.push(f(&pl.clone, "smartcheck", "SOLIDITY_PRAGMAS_VERSION"));
    ds.findings.push(f(&pl.control, "slither", "locked-ether"));
    ds.findings.push(f(&pl.factory, "smartcheck", "SOLIDITY_PRAGMAS_VERSION"));
    let pool = [
        ("smartcheck", "SOLIDITY_PRAGMAS_VERSION"),
        ("smartcheck", "SOLIDITY_VISIBILITY"),
        ("slither", "tx-origin"),
        ("mythril", "Integer Underflow"),
        ("slither", "calls-loop"),
        ("smartcheck", "SOLIDITY_SEND"),
        ("mythril", "Exception State"),
        ("slither", "unused-return"),
    ];
    for t in 0..12u64 {
        // findings on a shared body are reported once, by digest
        let body = format!("contract Template{t} {{\n  uint x;\n}}\n");
        let digest = format!("sha256:{}", crate::dedup::SourceHash::of(body.as_bytes()));
        for (tool, raw) in pool.choose_multiple(&mut rng, (t % 4 + 1) as usize) {
            ds.findings.push((digest.clone(), tool.to_string(), raw.to_string()));
        }
    }
    ds.findings.push(f(&Address::from_index(CONTRACT, 100), "securify", "DAO"));
    ds.findings.push(f(&Address::from_index(CONTRACT, 101), "slither", "not-a-detector"));
    (b.ds, pl)
}

/// Config text for running the pipeline on a written fixture directory.
pub fn config_text() -> String {
    "# synthetic fixture\ndataset = .\nout = out\nexcluded = excluded.txt\nseed = 42\n".to_string()
}

/// Writes the dataset in ingest format plus `findings.csv`, `excluded.txt`
/// and `pipeline.conf`.
pub fn write_dataset(ds: &SyntheticDataset, dir: &Path) -> io::Result<()> {
    use crate::data::{EXTERNAL_FILE, INTERNAL_FILE, LABELS_FILE, SOURCES_FILE};
    fs::create_dir_all(dir)?;
    let mut s = String::from("txHash,blockNumber,from,to,value,gasPrice,success\n");
    for t in &ds.external {
        let to = t.receiver.map_or(String::new(), |a| a.to_string());
        let _ = writeln!(s, "{},{},{},{},{},{},{}", t.hash, t.block, t.sender, to, t.value, t.gas_price, t.success);
    }
    fs::write(dir.join(EXTERNAL_FILE), s)?;
    let mut s = String::from("parentTxHash,blockNumber,from,to,value,opcode\n");
    for t in &ds.internal {
        let _ = writeln!(s, "{},{},{},{},{},{}", t.parent_hash, t.block, t.sender, t.receiver, t.value, t.opcode.as_str());
    }
    fs::write(dir.join(INTERNAL_FILE), s)?;
    let mut s = String::from("address,activity,source\n");
    for (a, act) in &ds.labels {
        let _ = writeln!(s, "{a},{act},synthetic");
    }
    fs::write(dir.join(LABELS_FILE), s)?;
    let mut s = String::from("address,source\n");
    for (a, src) in &ds.sources {
        let cell = src
            .as_ref()
            .map_or(String::new(), |t| format!("base64:{}", base64::engine::general_purpose::STANDARD.encode(t)));
        let _ = writeln!(s, "{a},{cell}");
    }
    fs::write(dir.join(SOURCES_FILE), s)?;
    let mut s = String::from("subject,tool,rawName\n");
    for (subj, tool, raw) in &ds.findings {
        let _ = writeln!(s, "{subj},{tool},\"{raw}\"");
    }
    fs::write(dir.join(crate::pipeline::FINDINGS_FILE), s)?;
    let mut s = String::from("# organisations whose deployments are not attributed to their children\n");
    for a in &ds.excluded {
        let _ = writeln!(s, "{a}");
    }
    fs::write(dir.join("excluded.txt"), s)?;
    fs::write(dir.join("pipeline.conf"), config_text())
}
