//! C ABI over the chainscope pipeline.
//!
//! Every fallible call returns a [`CsStatus`]; on failure the message is
//! available from [`cs_last_error`] on the same thread until the next call.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use chainscope::cluster::cosine_similarity;
use chainscope::config::PipelineConfig;
use chainscope::data::{ingest, Address, DataStore, IngestConfig};
use chainscope::dedup::Subject;
use chainscope::pipeline::{run_pipeline, Stage};
use chainscope::segment::{Granularity, GranularityKind};
use chainscope::vocab::{severity_score, DedupeMode, Severity, SeverityWeights, Tool, VulnFinding};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Config = 5,
    Pipeline = 6,
    Panic = 7,
}

/// Loaded dataset.
pub struct CsStore {
    store: DataStore,
}

/// Pipeline configuration.
pub struct CsConfig {
    config: PipelineConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsRunSummary {
    pub population: u64,
    pub malicious: u64,
    /// Sum over every (granularity, feature config) pair.
    pub suspects: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

type FfiResult = Result<(), (CsStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult) -> CsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside chainscope");
            CsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CsStatus, String)> {
    if p.is_null() {
        return Err((CsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (CsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (CsStatus, String)> {
    // SAFETY: the caller passes either null or a valid, writable pointer
    unsafe { p.as_mut() }.ok_or((CsStatus::NullPointer, format!("{what} is null")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next chainscope call on the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset directory. `max_block` 0 accepts any block.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_store_open(dir: *const c_char, max_block: u64, out: *mut *mut CsStore) -> CsStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let out = out_arg(out, "out")?;
        let cfg = IngestConfig { max_block: (max_block > 0).then_some(max_block) };
        let (store, _) = ingest(&PathBuf::from(dir), &cfg).map_err(|e| (CsStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(CsStore { store }));
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`cs_store_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_store_free(store: *mut CsStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_store_max_block(store: *const CsStore, out: *mut u64) -> CsStatus {
    guard(|| {
        let s = store.as_ref().ok_or((CsStatus::NullPointer, "store is null".to_string()))?;
        *out_arg(out, "out")? = s.store.max_block();
        Ok(())
    })
}

/// Number of known accounts, contracts and EOAs.
///
/// # Safety
/// `store` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_store_account_count(store: *const CsStore, out: *mut u64) -> CsStatus {
    guard(|| {
        let s = store.as_ref().ok_or((CsStatus::NullPointer, "store is null".to_string()))?;
        *out_arg(out, "out")? = s.store.accounts().len() as u64;
        Ok(())
    })
}

/// Whether `address` (0x-hex) is a contract: writes 1, 0 for an EOA.
///
/// # Safety
/// `store` must be a live handle, `address` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_store_is_contract(store: *const CsStore, address: *const c_char, out: *mut u8) -> CsStatus {
    guard(|| {
        let s = store.as_ref().ok_or((CsStatus::NullPointer, "store is null".to_string()))?;
        let a: Address = str_arg(address, "address")?.parse().map_err(|e| (CsStatus::InvalidArgument, format!("{e}")))?;
        let kind = s.store.kind_of(&a).ok_or((CsStatus::InvalidArgument, format!("unknown account {a}")))?;
        *out_arg(out, "out")? = u8::from(kind == chainscope::data::AccountKind::Contract);
        Ok(())
    })
}

/// Segments of granularity `name` ("1day", "3day", "1month", "all") over
/// blocks `1..=max_block`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_segment_count(name: *const c_char, max_block: u64, out: *mut u64) -> CsStatus {
    guard(|| {
        let kind: GranularityKind = str_arg(name, "name")?.parse().map_err(|e| (CsStatus::InvalidArgument, e))?;
        if max_block == 0 {
            return Err((CsStatus::InvalidArgument, "max_block must be positive".into()));
        }
        *out_arg(out, "out")? = Granularity::new(kind).segment_count(max_block) as u64;
        Ok(())
    })
}

/// Severity score of a set of distinct vulnerabilities given as letters,
/// one per vulnerability ("HMMLL"). Empty input scores 0.
///
/// # Safety
/// `letters` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_severity_score(letters: *const c_char, out: *mut f64) -> CsStatus {
    guard(|| {
        let letters = str_arg(letters, "letters")?;
        let subject = Address::from_index(0, 0);
        let findings = letters
            .chars()
            .enumerate()
            .map(|(i, c)| {
                let severity = Severity::from_letter(&c.to_string())
                    .ok_or_else(|| (CsStatus::InvalidArgument, format!("unknown severity letter {c:?}")))?;
                Ok(VulnFinding {
                    subject: Subject::Address(subject),
                    vocab_name: format!("v{i}"),
                    tool: Tool::Slither,
                    severity,
                    cwe: None,
                })
            })
            .collect::<Result<Vec<_>, (CsStatus, String)>>()?;
        *out_arg(out, "out")? =
            severity_score(subject, &findings, DedupeMode::Distinct, &SeverityWeights::default()).score;
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `len`; 0 when either is zero.
///
/// # Safety
/// `u` and `v` must point to `len` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_cosine_similarity(u: *const f64, v: *const f64, len: usize, out: *mut f64) -> CsStatus {
    guard(|| {
        if len > 0 && (u.is_null() || v.is_null()) {
            return Err((CsStatus::NullPointer, "vector is null".into()));
        }
        let (a, b) = if len == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(u, len), std::slice::from_raw_parts(v, len))
        };
        *out_arg(out, "out")? = cosine_similarity(a, b).map_err(|e| (CsStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Loads a key=value config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_load(path: *const c_char, out: *mut *mut CsConfig) -> CsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let config = PipelineConfig::load(&PathBuf::from(path)).map_err(|e| (CsStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(CsConfig { config }));
        Ok(())
    })
}

/// Config with defaults for `dataset`, writing to `out_dir`.
///
/// # Safety
/// Both strings must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_config_new(dataset: *const c_char, out_dir: *const c_char, out: *mut *mut CsConfig) -> CsStatus {
    guard(|| {
        let dataset = str_arg(dataset, "dataset")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(CsConfig { config: PipelineConfig::new(dataset, dir) }));
        Ok(())
    })
}

/// Redirects the output directory.
///
/// # Safety
/// `config` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cs_config_set_out(config: *mut CsConfig, out_dir: *const c_char) -> CsStatus {
    guard(|| {
        let c = config.as_mut().ok_or((CsStatus::NullPointer, "config is null".to_string()))?;
        c.config.out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        Ok(())
    })
}

/// # Safety
/// `config` must come from a `cs_config_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_config_free(config: *mut CsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs stages up to `stage` ("ingest" ... "report", or "run").
///
/// # Safety
/// `config` must be a live handle, `stage` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cs_run_pipeline(
    config: *const CsConfig,
    stage: *const c_char,
    out: *mut CsRunSummary,
) -> CsStatus {
    guard(|| {
        let c = config.as_ref().ok_or((CsStatus::NullPointer, "config is null".to_string()))?;
        let stage: Stage = str_arg(stage, "stage")?.parse().map_err(|e: String| (CsStatus::InvalidArgument, e))?;
        let out = out_arg(out, "out")?;
        let cfg = c.config.clone().validate().map_err(|e| (CsStatus::Config, e.to_string()))?;
        let s = run_pipeline(&cfg, stage).map_err(|e| (CsStatus::Pipeline, e.to_string()))?;
        *out = CsRunSummary {
            population: s.population as u64,
            malicious: s.malicious as u64,
            suspects: s.suspects.values().sum::<usize>() as u64,
        };
        Ok(())
    })
}
