//! C ABI over the `bnsl` library.
//!
//! Datasets and networks are opaque handles created and released through
//! this interface. Every function returns a [`BnslStatus`]; on failure
//! `bnsl_last_error_message` describes the most recent error on the calling
//! thread. Panics never cross the boundary; they surface as
//! `BNSL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use bnsl::bounds::GreedyConfig;
use bnsl::dataset::{load_csv, preprocess};
use bnsl::oracle::{dp_optimal, DEFAULT_DP_CAP};
use bnsl::{network_score, Dataset, Error, LearnConfig, Network, VarSet};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnslStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Range = 5,
    Corrupt = 6,
    Cyclic = 7,
    Inconsistent = 8,
    Unreachable = 9,
    Refused = 10,
    Panic = 99,
}

impl From<&Error> for BnslStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => BnslStatus::Io,
            Error::Parse(_) => BnslStatus::Parse,
            Error::InvalidArgument(_) => BnslStatus::InvalidArgument,
            Error::Range(_) => BnslStatus::Range,
            Error::Corrupt { .. } => BnslStatus::Corrupt,
            Error::Cyclic => BnslStatus::Cyclic,
            Error::Inconsistent { .. } => BnslStatus::Inconsistent,
            Error::Unreachable(_) => BnslStatus::Unreachable,
            Error::Refused(_) => BnslStatus::Refused,
        }
    }
}

/// Opaque dataset handle.
pub struct BnslDataset(Dataset);

/// Opaque network handle.
pub struct BnslNetwork(Network);

/// Search settings for `bnsl_learn`. Fill with `bnsl_learn_options_default`
/// before changing individual fields.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct BnslLearnOptions {
    /// Working directory (UTF-8, NUL-terminated). Required.
    pub workdir: *const c_char,
    /// In-RAM node budget per duplicate-detection table; at least 1.
    pub max_ram_nodes: u64,
    /// Use `upper` instead of the greedy bound when true.
    pub has_upper: bool,
    pub upper: f64,
    /// Restrict parent graphs to sets surviving in the order graph.
    pub parent_pruning: bool,
    pub beam: u32,
    pub max_iters: u32,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: BnslStatus, msg: impl AsRef<str>) -> BnslStatus {
    set_error(msg.as_ref());
    status
}

fn from_error(e: Error) -> BnslStatus {
    fail(BnslStatus::from(&e), e.to_string())
}

fn guard(f: impl FnOnce() -> BnslStatus) -> BnslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(BnslStatus::Ok) => {
            set_error("");
            BnslStatus::Ok
        }
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(BnslStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, BnslStatus> {
    if p.is_null() {
        return Err(fail(BnslStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(BnslStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

macro_rules! check_out {
    ($p:expr) => {
        if $p.is_null() {
            return fail(BnslStatus::NullPointer, concat!(stringify!($p), " is null"));
        }
    };
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bnsl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bnsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_learn_options_default(out: *mut BnslLearnOptions) -> BnslStatus {
    guard(|| {
        check_out!(out);
        let g = GreedyConfig::default();
        out.write(BnslLearnOptions {
            workdir: ptr::null(),
            max_ram_nodes: 1_000_000,
            has_upper: false,
            upper: f64::INFINITY,
            parent_pruning: true,
            beam: g.beam as u32,
            max_iters: g.max_iters as u32,
            seed: g.seed,
        });
        BnslStatus::Ok
    })
}

/// Loads and preprocesses a delimited file. Records containing `missing`
/// are dropped; columns with more than `max_states` states are binarized.
///
/// # Safety
/// `path` and `missing` must be NUL-terminated strings; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_dataset_load_csv(
    path: *const c_char,
    delimiter: u8,
    missing: *const c_char,
    has_header: bool,
    max_states: u32,
    out: *mut *mut BnslDataset,
) -> BnslStatus {
    guard(|| {
        check_out!(out);
        let path = match utf8(path, "path") {
            Ok(p) => PathBuf::from(p),
            Err(s) => return s,
        };
        let missing = match utf8(missing, "missing") {
            Ok(m) => m,
            Err(s) => return s,
        };
        let d = load_csv(&path, delimiter, missing, has_header)
            .and_then(|raw| preprocess(&raw, max_states as usize));
        match d {
            Ok((d, _)) => {
                out.write(Box::into_raw(Box::new(BnslDataset(d))));
                BnslStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Builds a dataset from row-major coded values; arity of each column is
/// its largest value plus one.
///
/// # Safety
/// `values` must point to `records * vars` readable values; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_dataset_from_values(
    values: *const u32,
    records: usize,
    vars: usize,
    out: *mut *mut BnslDataset,
) -> BnslStatus {
    guard(|| {
        check_out!(out);
        if values.is_null() {
            return fail(BnslStatus::NullPointer, "values is null");
        }
        let Some(total) = records.checked_mul(vars) else {
            return fail(BnslStatus::InvalidArgument, "records * vars overflows");
        };
        let flat = std::slice::from_raw_parts(values, total);
        let rows: Vec<Vec<u32>> = if vars == 0 {
            Vec::new()
        } else {
            flat.chunks(vars).map(<[u32]>::to_vec).collect()
        };
        match Dataset::from_rows(&rows) {
            Ok(d) => {
                out.write(Box::into_raw(Box::new(BnslDataset(d))));
                BnslStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `d` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bnsl_dataset_free(d: *mut BnslDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live dataset handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_dataset_shape(
    d: *const BnslDataset,
    vars: *mut usize,
    records: *mut usize,
) -> BnslStatus {
    guard(|| {
        check_out!(d);
        check_out!(vars);
        check_out!(records);
        vars.write((*d).0.num_vars());
        records.write((*d).0.num_records());
        BnslStatus::Ok
    })
}

/// Learns an optimal network.
///
/// # Safety
/// `d` must be a live dataset handle, `opts` a valid options struct and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_learn(
    d: *const BnslDataset,
    opts: *const BnslLearnOptions,
    out: *mut *mut BnslNetwork,
) -> BnslStatus {
    guard(|| {
        check_out!(d);
        check_out!(opts);
        check_out!(out);
        let o = *opts;
        let workdir = match utf8(o.workdir, "workdir") {
            Ok(w) => w,
            Err(s) => return s,
        };
        if o.max_ram_nodes == 0 {
            return fail(BnslStatus::InvalidArgument, "max_ram_nodes must be at least 1");
        }
        if o.has_upper && o.upper.is_nan() {
            return fail(BnslStatus::InvalidArgument, "upper bound is NaN");
        }
        let cfg = LearnConfig {
            max_size: usize::try_from(o.max_ram_nodes).unwrap_or(usize::MAX),
            upper: o.has_upper.then_some(o.upper),
            parent_pruning: o.parent_pruning,
            greedy: GreedyConfig {
                beam: o.beam as usize,
                max_iters: o.max_iters as usize,
                seed: o.seed,
            },
            ..LearnConfig::new(workdir)
        };
        match bnsl::learn(&(*d).0, &cfg) {
            Ok(res) => {
                out.write(Box::into_raw(Box::new(BnslNetwork(res.network))));
                BnslStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Reference solver by dynamic programming over subsets (at most 15
/// variables).
///
/// # Safety
/// `d` must be a live dataset handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_dp_optimal(
    d: *const BnslDataset,
    out: *mut *mut BnslNetwork,
) -> BnslStatus {
    guard(|| {
        check_out!(d);
        check_out!(out);
        match dp_optimal(&(*d).0, DEFAULT_DP_CAP) {
            Ok(r) => {
                out.write(Box::into_raw(Box::new(BnslNetwork(r.network))));
                BnslStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `net` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bnsl_network_free(net: *mut BnslNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live network handle; `vars` and `score` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_network_summary(
    net: *const BnslNetwork,
    vars: *mut usize,
    score: *mut f64,
) -> BnslStatus {
    guard(|| {
        check_out!(net);
        check_out!(vars);
        check_out!(score);
        vars.write((*net).0.num_vars());
        score.write((*net).0.score);
        BnslStatus::Ok
    })
}

/// Parent set of `var` as a bit mask (bit i set = variable i is a parent).
///
/// # Safety
/// `net` must be a live network handle; `mask` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_network_parents(
    net: *const BnslNetwork,
    var: usize,
    mask: *mut u64,
) -> BnslStatus {
    guard(|| {
        check_out!(net);
        check_out!(mask);
        let net = &*net;
        match net.0.parents.get(var) {
            Some(p) => {
                mask.write(p.bits());
                BnslStatus::Ok
            }
            None => fail(BnslStatus::Range, format!("variable {var} out of range")),
        }
    })
}

/// MDL score of the structure given as one parent mask per variable.
///
/// # Safety
/// `d` must be a live dataset handle, `masks` must point to `len` values and
/// `score` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bnsl_score_network(
    d: *const BnslDataset,
    masks: *const u64,
    len: usize,
    score: *mut f64,
) -> BnslStatus {
    guard(|| {
        check_out!(d);
        check_out!(masks);
        check_out!(score);
        let parents: Vec<VarSet> = std::slice::from_raw_parts(masks, len)
            .iter()
            .map(|&m| VarSet::from_bits(m))
            .collect();
        match network_score(&parents, &(*d).0) {
            Ok(s) => {
                score.write(s);
                BnslStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
