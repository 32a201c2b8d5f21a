//! Transaction, account, and source records plus the indexed [`DataStore`].

mod explorer;
mod ingest;
mod store;

pub use explorer::{
    ExplorerClient, ExplorerConfig, ExplorerError, FetchSummary, HttpResponse, HttpTransport,
    UreqTransport, API_KEY_ENV,
};
pub use ingest::{
    ingest, IngestConfig, IngestError, IngestReport, RejectedRow, EXTERNAL_FILE, INTERNAL_FILE, LABELS_FILE,
    SOURCES_FILE,
};
pub use store::{BlockRange, DataStore, TxRef, TxView};

use std::fmt;
use std::str::FromStr;

use primitive_types::U256;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("expected 0x-prefixed hex of {expected} bytes, got {got:?}")]
    BadHex { expected: usize, got: String },
    #[error("invalid unsigned integer {0:?}")]
    BadInteger(String),
    #[error("unknown opcode {0:?}")]
    UnknownOpcode(String),
    #[error("unknown malicious activity {0:?}")]
    UnknownActivity(String),
    #[error("invalid boolean {0:?}")]
    BadBool(String),
}

fn parse_hex_bytes<const N: usize>(s: &str) -> Result<[u8; N], ParseError> {
    let bad = || ParseError::BadHex { expected: N, got: s.to_string() };
    let body = s
        .trim()
        .strip_prefix("0x")
        .or_else(|| s.trim().strip_prefix("0X"))
        .ok_or_else(bad)?;
    if body.len() != 2 * N {
        return Err(bad());
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(body, &mut out).map_err(|_| bad())?;
    Ok(out)
}

/// 20-byte account identifier. Displays as lowercase `0x`-prefixed hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    /// Builds a deterministic address from an integer, handy for fixtures.
    pub fn from_index(tag: u8, index: u64) -> Self {
        let mut bytes = [0u8; 20];
        bytes[0] = tag;
        bytes[12..].copy_from_slice(&index.to_be_bytes());
        Address(bytes)
    }
}

impl FromStr for Address {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex_bytes::<20>(s).map(Address)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// 32-byte transaction hash.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TxHash(pub [u8; 32]);

impl FromStr for TxHash {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex_bytes::<32>(s).map(TxHash)
    }
}

impl fmt::Display for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Unsigned 256-bit amount in wei.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Wei(pub U256);

impl Wei {
    pub const ZERO: Wei = Wei(U256::zero());

    pub fn from_u128(v: u128) -> Self {
        Wei(U256::from(v))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Nearest-ish `f64`; exact for values below 2^53.
    pub fn to_f64(&self) -> f64 {
        const LIMB: f64 = 18_446_744_073_709_551_616.0; // 2^64
        self.0
             .0
            .iter()
            .rev()
            .fold(0.0, |acc, &limb| acc * LIMB + limb as f64)
    }
}

impl FromStr for Wei {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::BadInteger(s.to_string()));
        }
        U256::from_dec_str(t)
            .map(Wei)
            .map_err(|_| ParseError::BadInteger(s.to_string()))
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Wei({})", self.0)
    }
}

/// The five internal-transaction kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    Call,
    CallCode,
    DelegateCall,
    Create,
    Suicide,
}

impl Opcode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Opcode::Call => "CALL",
            Opcode::CallCode => "CALLCODE",
            Opcode::DelegateCall => "DELEGATECALL",
            Opcode::Create => "CREATE",
            Opcode::Suicide => "SUICIDE",
        }
    }
}

impl FromStr for Opcode {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CALL" => Ok(Opcode::Call),
            "CALLCODE" => Ok(Opcode::CallCode),
            "DELEGATECALL" => Ok(Opcode::DelegateCall),
            "CREATE" => Ok(Opcode::Create),
            "SUICIDE" | "SELFDESTRUCT" => Ok(Opcode::Suicide),
            _ => Err(ParseError::UnknownOpcode(s.to_string())),
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalTx {
    pub hash: TxHash,
    pub block: u64,
    pub sender: Address,
    /// `None` for contract creation that could not be resolved to the created address.
    pub receiver: Option<Address>,
    pub value: Wei,
    pub gas_price: Wei,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InternalTx {
    pub parent_hash: TxHash,
    pub block: u64,
    pub sender: Address,
    pub receiver: Address,
    pub value: Wei,
    pub opcode: Opcode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccountKind {
    Eoa,
    Contract,
}

impl AccountKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AccountKind::Eoa => "EOA",
            AccountKind::Contract => "SC",
        }
    }
}

impl fmt::Display for AccountKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Malicious activity categories observed on labeled contracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Activity {
    Phishing,
    Gambling,
    HighRisk,
    Ponzi,
}

impl Activity {
    pub const ALL: [Activity; 4] =
        [Activity::Phishing, Activity::Gambling, Activity::HighRisk, Activity::Ponzi];

    pub fn as_str(&self) -> &'static str {
        match self {
            Activity::Phishing => "Phishing",
            Activity::Gambling => "Gambling",
            Activity::HighRisk => "High-Risk",
            Activity::Ponzi => "Ponzi",
        }
    }
}

impl FromStr for Activity {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "phishing" => Ok(Activity::Phishing),
            "gambling" => Ok(Activity::Gambling),
            "highrisk" => Ok(Activity::HighRisk),
            "ponzi" | "ponzischeme" => Ok(Activity::Ponzi),
            _ => Err(ParseError::UnknownActivity(s.to_string())),
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaliciousLabel {
    pub activity: Activity,
    /// Provenance tag, e.g. the label service the row came from.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountRecord {
    pub address: Address,
    pub kind: AccountKind,
    pub label: Option<MaliciousLabel>,
}

/// Verbatim contract source. `available == false` implies empty `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRecord {
    pub address: Address,
    pub text: Vec<u8>,
    pub available: bool,
}

impl SourceRecord {
    pub fn available(address: Address, text: impl Into<Vec<u8>>) -> Self {
        SourceRecord { address, text: text.into(), available: true }
    }

    pub fn missing(address: Address) -> Self {
        SourceRecord { address, text: Vec::new(), available: false }
    }
}

pub(crate) fn parse_bool(s: &str) -> Result<bool, ParseError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ParseError::BadBool(s.to_string())),
    }
}
