use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use base64::Engine as _;
use log::{info, warn};
use thiserror::Error;

use super::{
    parse_bool, Activity, Address, DataStore, ExternalTx, InternalTx, MaliciousLabel, Opcode,
    ParseError, SourceRecord, TxHash, Wei,
};

pub const EXTERNAL_FILE: &str = "external.csv";
pub const INTERNAL_FILE: &str = "internal.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SOURCES_FILE: &str = "sources.csv";

pub const EXTERNAL_HEADER: [&str; 7] =
    ["txHash", "blockNumber", "from", "to", "value", "gasPrice", "success"];
pub const INTERNAL_HEADER: [&str; 6] =
    ["parentTxHash", "blockNumber", "from", "to", "value", "opcode"];
pub const LABELS_HEADER: [&str; 3] = ["address", "activity", "source"];
pub const SOURCES_HEADER: [&str; 2] = ["address", "source"];

/// Prefix marking an inline base64 source body in `sources.csv`.
pub const INLINE_SOURCE_PREFIX: &str = "base64:";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{file}: expected header {expected:?}, found {found:?}")]
    BadHeader { file: String, expected: Vec<String>, found: Vec<String> },
    #[error("{file} line {line}: account {address} labeled more than once")]
    DuplicateAccount { file: String, line: u64, address: Address },
    #[error("dataset contains no valid transactions")]
    EmptyDataset,
}

#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    /// Rows above this block are rejected. `None` accepts any block.
    pub max_block: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub external_rows: usize,
    pub internal_rows: usize,
    pub labels: usize,
    pub sources: usize,
    pub rejected: Vec<RejectedRow>,
}

impl IngestReport {
    fn reject(&mut self, file: &str, line: u64, reason: impl Into<String>) {
        let reason = reason.into();
        warn!("{file} line {line}: skipped malformed row: {reason}");
        self.rejected.push(RejectedRow { file: file.to_string(), line, reason });
    }
}

struct Rows {
    path: PathBuf,
    reader: csv::Reader<File>,
}

impl Rows {
    fn open(dir: &Path, file: &str, header: &[&str]) -> Result<Self, IngestError> {
        let path = dir.join(file);
        let f = File::open(&path).map_err(|source| IngestError::Io { path: path.clone(), source })?;
        let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(f);
        let found: Vec<String> = reader
            .headers()
            .map_err(|source| IngestError::Csv { path: path.clone(), source })?
            .iter()
            .map(str::to_string)
            .collect();
        let matches = found.len() == header.len()
            && found.iter().zip(header).all(|(a, b)| a.eq_ignore_ascii_case(b));
        if !matches {
            return Err(IngestError::BadHeader {
                file: file.to_string(),
                expected: header.iter().map(|s| s.to_string()).collect(),
                found,
            });
        }
        Ok(Rows { path, reader })
    }

    /// Yields `(line, fields)` and reports rows with the wrong field count.
    fn for_each(
        mut self,
        file: &str,
        width: usize,
        report: &mut IngestReport,
        mut f: impl FnMut(u64, &csv::StringRecord, &mut IngestReport),
    ) -> Result<(), IngestError> {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = record.position().map_or(0, |p| p.line());
                    if record.len() != width {
                        report.reject(file, line, format!("expected {width} fields, got {}", record.len()));
                        continue;
                    }
                    f(line, &record, report);
                }
                Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => {
                    let line = e.position().map_or(0, |p| p.line());
                    report.reject(file, line, "invalid UTF-8");
                }
                Err(source) => return Err(IngestError::Csv { path: self.path, source }),
            }
        }
    }
}

fn parse_block(s: &str, max: Option<u64>) -> Result<u64, String> {
    let b: u64 = s.trim().parse().map_err(|_| ParseError::BadInteger(s.to_string()).to_string())?;
    if b == 0 {
        return Err("block 0 (genesis) carries no transactions".into());
    }
    if let Some(m) = max {
        if b > m {
            return Err(format!("block {b} exceeds dataset max block {m}"));
        }
    }
    Ok(b)
}

fn parse_external(r: &csv::StringRecord, max: Option<u64>) -> Result<ExternalTx, String> {
    let e = |e: ParseError| e.to_string();
    let receiver = match r[3].trim() {
        "" => None,
        s => Some(s.parse::<Address>().map_err(e)?),
    };
    Ok(ExternalTx {
        hash: r[0].parse::<TxHash>().map_err(e)?,
        block: parse_block(&r[1], max)?,
        sender: r[2].parse().map_err(e)?,
        receiver,
        value: r[4].parse::<Wei>().map_err(e)?,
        gas_price: r[5].parse::<Wei>().map_err(e)?,
        success: parse_bool(&r[6]).map_err(e)?,
    })
}

fn parse_internal(r: &csv::StringRecord, max: Option<u64>) -> Result<InternalTx, String> {
    let e = |e: ParseError| e.to_string();
    Ok(InternalTx {
        parent_hash: r[0].parse::<TxHash>().map_err(e)?,
        block: parse_block(&r[1], max)?,
        sender: r[2].parse().map_err(e)?,
        receiver: r[3].parse().map_err(e)?,
        value: r[4].parse::<Wei>().map_err(e)?,
        opcode: r[5].parse::<Opcode>().map_err(e)?,
    })
}

fn load_source(dir: &Path, address: Address, field: &str) -> Result<SourceRecord, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(SourceRecord::missing(address));
    }
    if let Some(b64) = field.strip_prefix(INLINE_SOURCE_PREFIX) {
        let text = base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|err| format!("bad inline base64: {err}"))?;
        return Ok(SourceRecord::available(address, text));
    }
    let path = dir.join(field);
    let mut text = Vec::new();
    File::open(&path)
        .and_then(|mut f| f.read_to_end(&mut text))
        .map_err(|err| format!("cannot read source file {}: {err}", path.display()))?;
    Ok(SourceRecord::available(address, text))
}

/// Loads `external.csv`, `internal.csv`, `labels.csv`, and `sources.csv` from
/// `dir`. Malformed rows are skipped and reported; a repeated label address or
/// a dataset without any transaction is fatal.
pub fn ingest(dir: &Path, config: &IngestConfig) -> Result<(DataStore, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let max = config.max_block;

    let mut external = Vec::new();
    Rows::open(dir, EXTERNAL_FILE, &EXTERNAL_HEADER)?.for_each(EXTERNAL_FILE, 7, &mut report, |line, r, rep| {
        match parse_external(r, max) {
            Ok(t) => external.push(t),
            Err(msg) => rep.reject(EXTERNAL_FILE, line, msg),
        }
    })?;

    let mut internal = Vec::new();
    Rows::open(dir, INTERNAL_FILE, &INTERNAL_HEADER)?.for_each(INTERNAL_FILE, 6, &mut report, |line, r, rep| {
        match parse_internal(r, max) {
            Ok(t) => internal.push(t),
            Err(msg) => rep.reject(INTERNAL_FILE, line, msg),
        }
    })?;

    let mut labels = BTreeMap::new();
    let mut duplicate = None;
    Rows::open(dir, LABELS_FILE, &LABELS_HEADER)?.for_each(LABELS_FILE, 3, &mut report, |line, r, rep| {
        let parsed = r[0]
            .parse::<Address>()
            .and_then(|a| r[1].parse::<Activity>().map(|act| (a, act)));
        match parsed {
            Ok((address, activity)) => {
                let label = MaliciousLabel { activity, source: r[2].to_string() };
                if labels.insert(address, label).is_some() && duplicate.is_none() {
                    duplicate = Some((line, address));
                }
            }
            Err(err) => rep.reject(LABELS_FILE, line, err.to_string()),
        }
    })?;
    if let Some((line, address)) = duplicate {
        return Err(IngestError::DuplicateAccount { file: LABELS_FILE.into(), line, address });
    }

    let mut sources = Vec::new();
    let mut seen = HashSet::new();
    Rows::open(dir, SOURCES_FILE, &SOURCES_HEADER)?.for_each(SOURCES_FILE, 2, &mut report, |line, r, rep| {
        let address = match r[0].parse::<Address>() {
            Ok(a) => a,
            Err(err) => return rep.reject(SOURCES_FILE, line, err.to_string()),
        };
        if !seen.insert(address) {
            return rep.reject(SOURCES_FILE, line, format!("duplicate source row for {address}"));
        }
        match load_source(dir, address, &r[1]) {
            Ok(s) => sources.push(s),
            Err(msg) => rep.reject(SOURCES_FILE, line, msg),
        }
    })?;

    if external.is_empty() && internal.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    report.external_rows = external.len();
    report.internal_rows = internal.len();
    report.labels = labels.len();
    report.sources = sources.len();
    info!(
        "ingested {} external, {} internal, {} labels, {} sources ({} rows rejected)",
        report.external_rows,
        report.internal_rows,
        report.labels,
        report.sources,
        report.rejected.len()
    );
    Ok((DataStore::new(external, internal, labels, sources), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const A: &str = "0x00000000000000000000000000000000000000a1";
    const B: &str = "0x00000000000000000000000000000000000000b2";
    const C: &str = "0x00000000000000000000000000000000000000c3";
    const D: &str = "0x00000000000000000000000000000000000000d4";

    fn h(i: u8) -> String {
        format!("0x{}", hex::encode([i; 32]))
    }

    fn write_dataset(dir: &Path, internal_extra: &str, labels_extra: &str) {
        fs::write(
            dir.join(EXTERNAL_FILE),
            format!(
                "txHash,blockNumber,from,to,value,gasPrice,success\n\
                 {},10,{A},{B},5,1,true\n{},12,{B},{C},0,2,false\n{},7,{D},{A},1,3,true\n",
                h(1),
                h(2),
                h(3)
            ),
        )
        .unwrap();
        fs::write(
            dir.join(INTERNAL_FILE),
            format!(
                "parentTxHash,blockNumber,from,to,value,opcode\n\
                 {},10,{B},{C},0,CALL\n{},15,{C},{D},1,DELEGATECALL\n{internal_extra}",
                h(1),
                h(2)
            ),
        )
        .unwrap();
        fs::write(
            dir.join(LABELS_FILE),
            format!("address,activity,source\n{B},Phishing,etherscan\n{labels_extra}"),
        )
        .unwrap();
        fs::write(dir.join(SOURCES_FILE), format!("address,source\n{B},base64:Y29udHJhY3Q=\n{C},\n"))
            .unwrap();
    }

    #[test]
    fn ingests_fixture_and_reports_max_block() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "", "");
        let (store, report) = ingest(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(store.max_block(), 15);
        assert_eq!(store.accounts().len(), 4);
        assert!(report.rejected.is_empty());
        let b: Address = B.parse().unwrap();
        assert_eq!(store.sources()[&b].text, b"contract");
        assert!(!store.sources()[&C.parse::<Address>().unwrap()].available);
        assert!(store.account(&b).unwrap().label.is_some());
    }

    #[test]
    fn unknown_opcode_is_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &format!("{},16,{C},{D},0,CREATE2\n", h(9)), "");
        let (store, report) = ingest(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(store.internal().len(), 2);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].file, INTERNAL_FILE);
        assert_eq!(report.rejected[0].line, 4);
        assert!(report.rejected[0].reason.contains("CREATE2"));
    }

    #[test]
    fn negative_values_and_bad_hex_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(
            dir.path(),
            &format!("{},16,{C},{D},-4,CALL\n{},16,0xnothex,{D},1,CALL\n", h(9), h(8)),
            "",
        );
        let (_, report) = ingest(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(report.rejected.len(), 2);
    }

    #[test]
    fn duplicate_label_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "", &format!("{},Ponzi,other\n", B.to_uppercase().replace("0X", "0x")));
        match ingest(dir.path(), &IngestConfig::default()) {
            Err(IngestError::DuplicateAccount { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected DuplicateAccount, got {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(EXTERNAL_FILE), "txHash,blockNumber,from,to,value,gasPrice,success\n").unwrap();
        fs::write(dir.path().join(INTERNAL_FILE), "parentTxHash,blockNumber,from,to,value,opcode\n").unwrap();
        fs::write(dir.path().join(LABELS_FILE), "address,activity,source\n").unwrap();
        fs::write(dir.path().join(SOURCES_FILE), "address,source\n").unwrap();
        assert!(matches!(ingest(dir.path(), &IngestConfig::default()), Err(IngestError::EmptyDataset)));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ingest(dir.path(), &IngestConfig::default()), Err(IngestError::Io { .. })));
    }

    #[test]
    fn ingest_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "", "");
        let (a, _) = ingest(dir.path(), &IngestConfig::default()).unwrap();
        let (b, _) = ingest(dir.path(), &IngestConfig::default()).unwrap();
        assert_eq!(a.snapshot(), b.snapshot());
    }

    #[test]
    fn max_block_cap_rejects_later_rows() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "", "");
        let (store, report) = ingest(dir.path(), &IngestConfig { max_block: Some(12) }).unwrap();
        assert_eq!(store.max_block(), 12);
        assert_eq!(report.rejected.len(), 1);
    }
}
