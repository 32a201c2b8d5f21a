//! Paged block-explorer client writing `external.csv` / `internal.csv`.
//!
//! Speaks the Etherscan-style account API (`module=account`,
//! `action=txlist|txlistinternal`). The HTTP layer sits behind
//! [`HttpTransport`] so tests can script responses.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::Deserialize;
use thiserror::Error;

use super::ingest::{EXTERNAL_FILE, EXTERNAL_HEADER, INTERNAL_FILE, INTERNAL_HEADER};
use super::Address;

pub const API_KEY_ENV: &str = "CHAINSCOPE_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.etherscan.io/api";

#[derive(Debug, Error)]
pub enum ExplorerError {
    #[error("API key is empty (set {API_KEY_ENV})")]
    MissingApiKey,
    #[error("HTTP status {status} after {attempts} attempts")]
    Http { status: u16, attempts: u32 },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response body: {0}")]
    BadBody(String),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

pub trait HttpTransport {
    fn get(&mut self, url: &str, query: &[(&str, String)]) -> Result<HttpResponse, String>;
}

/// Blocking transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl HttpTransport for UreqTransport {
    fn get(&mut self, url: &str, query: &[(&str, String)]) -> Result<HttpResponse, String> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let mut resp = req.call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body, retry_after })
    }
}

#[derive(Debug, Clone)]
pub struct ExplorerConfig {
    pub base_url: String,
    pub api_key: String,
    /// Requests per second.
    pub rate_limit: f64,
    pub page_size: usize,
    pub max_retries: u32,
    pub base_backoff: Duration,
}

impl ExplorerConfig {
    pub fn new(api_key: impl Into<String>) -> Self {
        ExplorerConfig {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: api_key.into(),
            rate_limit: 5.0,
            page_size: 100,
            max_retries: 5,
            base_backoff: Duration::from_millis(500),
        }
    }

    /// Reads the key from `CHAINSCOPE_API_KEY`.
    pub fn from_env() -> Result<Self, ExplorerError> {
        let key = std::env::var(API_KEY_ENV).unwrap_or_default();
        if key.trim().is_empty() {
            return Err(ExplorerError::MissingApiKey);
        }
        Ok(Self::new(key))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchSummary {
    /// Successful page requests.
    pub requests: u32,
    /// Every HTTP attempt including retries.
    pub attempts: u32,
    pub external_rows: usize,
    pub internal_rows: usize,
    /// Rows dropped for an unsupported internal call type.
    pub skipped: usize,
}

#[derive(Deserialize)]
struct Envelope {
    status: String,
    message: String,
    result: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ExternalRow {
    hash: String,
    block_number: String,
    from: String,
    #[serde(default)]
    to: String,
    value: String,
    #[serde(default)]
    gas_price: String,
    #[serde(default)]
    is_error: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct InternalRow {
    hash: String,
    block_number: String,
    from: String,
    #[serde(default)]
    to: String,
    #[serde(default)]
    contract_address: String,
    value: String,
    #[serde(rename = "type", default)]
    kind: String,
}

#[derive(Clone, Copy)]
enum Action {
    TxList,
    TxListInternal,
}

impl Action {
    fn as_str(self) -> &'static str {
        match self {
            Action::TxList => "txlist",
            Action::TxListInternal => "txlistinternal",
        }
    }
}

pub struct ExplorerClient<T> {
    transport: T,
    config: ExplorerConfig,
    sleep: Box<dyn FnMut(Duration)>,
    last_request: Option<Instant>,
}

impl<T: HttpTransport> ExplorerClient<T> {
    pub fn new(transport: T, config: ExplorerConfig) -> Result<Self, ExplorerError> {
        if config.api_key.trim().is_empty() {
            return Err(ExplorerError::MissingApiKey);
        }
        Ok(ExplorerClient { transport, config, sleep: Box::new(std::thread::sleep), last_request: None })
    }

    /// Replaces `thread::sleep`, e.g. to record waits in tests.
    pub fn with_sleeper(mut self, sleep: impl FnMut(Duration) + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    fn pace(&mut self) {
        if self.config.rate_limit > 0.0 {
            let interval = Duration::from_secs_f64(1.0 / self.config.rate_limit);
            if let Some(last) = self.last_request {
                let elapsed = last.elapsed();
                if elapsed < interval {
                    (self.sleep)(interval - elapsed);
                }
            }
        }
        self.last_request = Some(Instant::now());
    }

    fn request_page(
        &mut self,
        action: Action,
        address: &Address,
        page: usize,
        summary: &mut FetchSummary,
    ) -> Result<Vec<serde_json::Value>, ExplorerError> {
        let query = [
            ("module", "account".to_string()),
            ("action", action.as_str().to_string()),
            ("address", address.to_string()),
            ("startblock", "0".to_string()),
            ("endblock", "99999999".to_string()),
            ("page", page.to_string()),
            ("offset", self.config.page_size.to_string()),
            ("sort", "asc".to_string()),
            ("apikey", self.config.api_key.clone()),
        ];
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            summary.attempts += 1;
            self.pace();
            let url = self.config.base_url.clone();
            let resp = self.transport.get(&url, &query).map_err(ExplorerError::Transport)?;
            let backoff = self.config.base_backoff * 2u32.saturating_pow(attempt - 1);
            let rate_limited = resp.status == 429 || (resp.status == 200 && is_rate_limit_body(&resp.body));
            if rate_limited {
                if attempt > self.config.max_retries {
                    return Err(ExplorerError::RateLimited { attempts: attempt });
                }
                let wait = resp.retry_after.unwrap_or(backoff).max(backoff);
                warn!("{} page {page}: rate limited (attempt {attempt}), backing off {wait:?}", action.as_str());
                (self.sleep)(wait);
                continue;
            }
            if resp.status != 200 {
                if attempt > self.config.max_retries {
                    return Err(ExplorerError::Http { status: resp.status, attempts: attempt });
                }
                let wait = resp.retry_after.unwrap_or(backoff);
                warn!("{} page {page}: HTTP {} (attempt {attempt}), retrying in {wait:?}", action.as_str(), resp.status);
                (self.sleep)(wait);
                continue;
            }
            summary.requests += 1;
            info!("{} page {page}: ok after {attempt} attempt(s)", action.as_str());
            let env: Envelope =
                serde_json::from_str(&resp.body).map_err(|e| ExplorerError::BadBody(e.to_string()))?;
            return match env.result {
                serde_json::Value::Array(rows) => Ok(rows),
                _ if env.status == "0" && env.message.to_ascii_lowercase().contains("no transactions") => {
                    Ok(Vec::new())
                }
                other => Err(ExplorerError::BadBody(format!("{}: {other}", env.message))),
            };
        }
    }

    fn fetch_all(
        &mut self,
        action: Action,
        address: &Address,
        summary: &mut FetchSummary,
    ) -> Result<Vec<serde_json::Value>, ExplorerError> {
        let mut out = Vec::new();
        let mut page = 1;
        loop {
            let rows = self.request_page(action, address, page, summary)?;
            let n = rows.len();
            debug!("{} page {page}: {n} rows", action.as_str());
            out.extend(rows);
            if n < self.config.page_size {
                return Ok(out);
            }
            page += 1;
        }
    }

    /// Retrieves every external and internal transaction of `address` and writes
    /// them to `out_dir/external.csv` and `out_dir/internal.csv`.
    pub fn fetch_into(&mut self, address: &Address, out_dir: &Path) -> Result<FetchSummary, ExplorerError> {
        let mut summary = FetchSummary::default();
        let ext = self.fetch_all(Action::TxList, address, &mut summary)?;
        let int = self.fetch_all(Action::TxListInternal, address, &mut summary)?;

        let io = |path: &Path| {
            let p = path.display().to_string();
            move |source| ExplorerError::Io { path: p.clone(), source }
        };

        let ext_path = out_dir.join(EXTERNAL_FILE);
        let mut w = BufWriter::new(File::create(&ext_path).map_err(io(&ext_path))?);
        writeln!(w, "{}", EXTERNAL_HEADER.join(",")).map_err(io(&ext_path))?;
        let mut seen = HashSet::new();
        for v in ext {
            let row: ExternalRow =
                serde_json::from_value(v).map_err(|e| ExplorerError::BadBody(e.to_string()))?;
            if !seen.insert(row.hash.to_ascii_lowercase()) {
                continue;
            }
            let success = row.is_error.trim() != "1";
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.hash.to_ascii_lowercase(),
                row.block_number,
                row.from.to_ascii_lowercase(),
                row.to.to_ascii_lowercase(),
                row.value,
                if row.gas_price.is_empty() { "0" } else { &row.gas_price },
                success
            )
            .map_err(io(&ext_path))?;
            summary.external_rows += 1;
        }
        w.flush().map_err(io(&ext_path))?;

        let int_path = out_dir.join(INTERNAL_FILE);
        let mut w = BufWriter::new(File::create(&int_path).map_err(io(&int_path))?);
        writeln!(w, "{}", INTERNAL_HEADER.join(",")).map_err(io(&int_path))?;
        let mut seen = HashSet::new();
        for v in int {
            let row: InternalRow =
                serde_json::from_value(v).map_err(|e| ExplorerError::BadBody(e.to_string()))?;
            let opcode = match row.kind.to_ascii_lowercase().as_str() {
                "call" | "" => "CALL",
                "callcode" => "CALLCODE",
                "delegatecall" => "DELEGATECALL",
                "create" => "CREATE",
                "suicide" | "selfdestruct" => "SUICIDE",
                other => {
                    debug!("skipping internal row of type {other}");
                    summary.skipped += 1;
                    continue;
                }
            };
            let to = if row.to.is_empty() { &row.contract_address } else { &row.to };
            let line = format!(
                "{},{},{},{},{},{}",
                row.hash.to_ascii_lowercase(),
                row.block_number,
                row.from.to_ascii_lowercase(),
                to.to_ascii_lowercase(),
                row.value,
                opcode
            );
            if !seen.insert(line.clone()) {
                continue;
            }
            writeln!(w, "{line}").map_err(io(&int_path))?;
            summary.internal_rows += 1;
        }
        w.flush().map_err(io(&int_path))?;
        Ok(summary)
    }
}

fn is_rate_limit_body(body: &str) -> bool {
    serde_json::from_str::<Envelope>(body)
        .map(|e| e.status == "0" && e.result.as_str().is_some_and(|r| r.to_ascii_lowercase().contains("rate limit")))
        .unwrap_or(false)
}
