//! C ABI over the `fbnet` library.
//!
//! Networks, analyses and simulations live behind opaque handles created by
//! `fbnet_*` constructors and released with the matching `*_free`. Every
//! fallible call returns an [`FbnetStatus`]; on failure a description is
//! available from [`fbnet_last_error`] on the same thread.

use fbnet::cli::{self, Analysis};
use fbnet::fixed_point::{FixedPointError, IterationConfig, MaxIters, UpdateOrder};
use fbnet::model::{self, NetworkSpec, NodeId};
use fbnet::sim::{self, OracleError, Replicated, SimConfig};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed or invalid network, or an invalid option.
    Config = 3,
    /// A stationary solve failed to converge.
    NoConvergence = 4,
    /// The exact oracle was asked for a network beyond its state cap.
    StateSpaceTooLarge = 5,
    /// Node or edge lookup failed, or an output buffer is too short.
    NotFound = 6,
    /// The library panicked; the handle arguments should be considered unusable.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbnetMode {
    Analyze = 0,
    Simulate = 1,
    Compare = 2,
    Oracle = 3,
}

/// Fixed-point options. `max_iters == 0` iterates until converged.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FbnetIterationConfig {
    pub max_iters: u64,
    pub tol: f64,
    pub damping: f64,
    pub gauss_seidel: bool,
}

/// Simulator options; `epochs` includes the warmup.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FbnetSimConfig {
    pub epochs: u64,
    pub warmup: u64,
    pub seed: u64,
    pub replications: u64,
}

pub struct FbnetNetwork(NetworkSpec);
pub struct FbnetAnalysis(Analysis);
pub struct FbnetSimulation(Replicated);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(FbnetStatus, String);

impl From<fbnet::Error> for Failure {
    fn from(e: fbnet::Error) -> Self {
        use fbnet::chain::ChainError;
        let status = match &e {
            fbnet::Error::FixedPoint(FixedPointError::Chain {
                source: ChainError::NoConvergence { .. },
                ..
            })
            | fbnet::Error::Oracle(OracleError::NoConvergence(_)) => FbnetStatus::NoConvergence,
            fbnet::Error::Oracle(_) => FbnetStatus::StateSpaceTooLarge,
            _ => FbnetStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

impl From<model::ModelError> for Failure {
    fn from(e: model::ModelError) -> Self {
        Failure::from(fbnet::Error::from(e))
    }
}

fn null(what: &str) -> Failure {
    Failure(FbnetStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, mapping errors and panics to a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> FbnetStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FbnetStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FbnetStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(value) };
    Ok(())
}

fn iteration_config(cfg: Option<&FbnetIterationConfig>) -> IterationConfig {
    match cfg {
        None => IterationConfig::default(),
        Some(c) => IterationConfig {
            max_iters: if c.max_iters == 0 {
                MaxIters::UntilConverged
            } else {
                MaxIters::Limit(c.max_iters as usize)
            },
            tol: c.tol,
            damping: c.damping,
            order: if c.gauss_seidel {
                UpdateOrder::GaussSeidel
            } else {
                UpdateOrder::Jacobi
            },
        },
    }
}

fn sim_config(cfg: Option<&FbnetSimConfig>) -> SimConfig {
    match cfg {
        None => SimConfig::default(),
        Some(c) => SimConfig {
            epochs: c.epochs,
            warmup: c.warmup,
            seed: c.seed,
            replications: c.replications as usize,
        },
    }
}

fn node_by_label(spec: &NetworkSpec, label: i64) -> Result<NodeId, Failure> {
    spec.node_ids()
        .find(|&v| spec.label(v) == label)
        .ok_or_else(|| Failure(FbnetStatus::NotFound, format!("no node {label}")))
}

/// Description of the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fbnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn fbnet_iteration_config_default() -> FbnetIterationConfig {
    let d = IterationConfig::default();
    FbnetIterationConfig {
        max_iters: 0,
        tol: d.tol,
        damping: d.damping,
        gauss_seidel: false,
    }
}

#[no_mangle]
pub extern "C" fn fbnet_sim_config_default() -> FbnetSimConfig {
    let d = SimConfig::default();
    FbnetSimConfig {
        epochs: d.epochs,
        warmup: d.warmup,
        seed: d.seed,
        replications: d.replications as u64,
    }
}

/// Parse and validate a network from a JSON config string.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fbnet_network_from_json(json: *const c_char, out: *mut *mut FbnetNetwork) -> FbnetStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| Failure(FbnetStatus::InvalidUtf8, e.to_string()))?;
        let spec = model::parse_network(text)?;
        unsafe { put(out, Box::into_raw(Box::new(FbnetNetwork(spec))), "out") }
    })
}

/// # Safety
/// `net` must come from [`fbnet_network_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fbnet_network_free(net: *mut FbnetNetwork) {
    if !net.is_null() {
        drop(unsafe { Box::from_raw(net) });
    }
}

/// # Safety
/// `net` must be a live network handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn fbnet_network_node_count(net: *const FbnetNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.0.node_count())
}

/// # Safety
/// `net` must be a live network handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn fbnet_network_edge_count(net: *const FbnetNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.0.edges().len())
}

/// Solve the fixed point. A null `cfg` uses the defaults. Hitting the
/// iteration limit is not an error; check [`fbnet_analysis_converged`].
///
/// # Safety
/// `net` must be live, `cfg` valid or null, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fbnet_analyze(
    net: *const FbnetNetwork,
    cfg: *const FbnetIterationConfig,
    out: *mut *mut FbnetAnalysis,
) -> FbnetStatus {
    guard(|| {
        let spec = &unsafe { deref(net, "net") }?.0;
        let cfg = iteration_config(unsafe { cfg.as_ref() });
        let analysis = Analysis::run(spec, &cfg)?;
        unsafe { put(out, Box::into_raw(Box::new(FbnetAnalysis(analysis))), "out") }
    })
}

/// # Safety
/// `a` must come from [`fbnet_analyze`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fbnet_analysis_free(a: *mut FbnetAnalysis) {
    if !a.is_null() {
        drop(unsafe { Box::from_raw(a) });
    }
}

/// Packets per epoch reaching the destination; NaN for a null handle.
///
/// # Safety
/// `a` must be a live analysis handle or null.
#[no_mangle]
pub unsafe extern "C" fn fbnet_analysis_throughput(a: *const FbnetAnalysis) -> f64 {
    unsafe { a.as_ref() }.map_or(f64::NAN, |a| a.0.throughput.value)
}

/// Mean end-to-end delay in epochs; `+inf` when no path carries traffic.
///
/// # Safety
/// `a` must be a live analysis handle or null.
#[no_mangle]
pub unsafe extern "C" fn fbnet_analysis_mean_delay(a: *const FbnetAnalysis) -> f64 {
    unsafe { a.as_ref() }.map_or(f64::NAN, |a| a.0.mean_delay())
}

/// # Safety
/// `a` must be a live analysis handle or null.
#[no_mangle]
pub unsafe extern "C" fn fbnet_analysis_converged(a: *const FbnetAnalysis) -> bool {
    unsafe { a.as_ref() }.is_some_and(|a| a.0.fixed_point.converged)
}

/// # Safety
/// `a` must be a live analysis handle or null.
#[no_mangle]
pub unsafe extern "C" fn fbnet_analysis_iterations(a: *const FbnetAnalysis) -> usize {
    unsafe { a.as_ref() }.map_or(0, |a| a.0.fixed_point.iterations_used)
}

/// Copy the occupancy distribution of intermediate node `label` into `buf`
/// (post-arrival, or post-departure when `post_departure` is set). `written`
/// receives the number of states, `m + 1`, even when `len` is too small.
///
/// # Safety
/// `net` and `a` must be live and belong together; `buf` must hold `len`
/// doubles; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fbnet_analysis_occupancy(
    net: *const FbnetNetwork,
    a: *const FbnetAnalysis,
    label: i64,
    post_departure: bool,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> FbnetStatus {
    guard(|| {
        let spec = &unsafe { deref(net, "net") }?.0;
        let a = &unsafe { deref(a, "analysis") }?.0;
        let v = node_by_label(spec, label)?;
        let dist = a
            .fixed_point
            .dist(v)
            .ok_or_else(|| Failure(FbnetStatus::NotFound, format!("node {label} has no buffer")))?;
        let probs = if post_departure { dist.theta_dagger.probs() } else { dist.theta.probs() };
        unsafe { put(written, probs.len(), "written") }?;
        if probs.len() > len {
            return Err(Failure(FbnetStatus::NotFound, format!("buffer holds {len}, need {}", probs.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        unsafe { ptr::copy_nonoverlapping(probs.as_ptr(), buf, probs.len()) };
        Ok(())
    })
}

/// Offered rate `varrho` and blocking probability `q` of edge `from → to`.
///
/// # Safety
/// `net` and `a` must be live and belong together; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn fbnet_analysis_edge(
    net: *const FbnetNetwork,
    a: *const FbnetAnalysis,
    from: i64,
    to: i64,
    varrho: *mut f64,
    q: *mut f64,
) -> FbnetStatus {
    guard(|| {
        let spec = &unsafe { deref(net, "net") }?.0;
        let a = &unsafe { deref(a, "analysis") }?.0;
        let (u, v) = (node_by_label(spec, from)?, node_by_label(spec, to)?);
        let e = spec
            .find_edge(u, v)
            .ok_or_else(|| Failure(FbnetStatus::NotFound, format!("no edge {from} -> {to}")))?;
        let st = a.fixed_point.edge(e);
        unsafe { put(varrho, st.varrho, "varrho") }?;
        unsafe { put(q, st.q, "q") }
    })
}

/// Run the packet-level simulator. A null `cfg` uses the defaults.
///
/// # Safety
/// `net` must be live, `cfg` valid or null, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fbnet_simulate(
    net: *const FbnetNetwork,
    cfg: *const FbnetSimConfig,
    out: *mut *mut FbnetSimulation,
) -> FbnetStatus {
    guard(|| {
        let spec = &unsafe { deref(net, "net") }?.0;
        let cfg = sim_config(unsafe { cfg.as_ref() });
        let rep = sim::replicate(spec, &cfg).map_err(fbnet::Error::from)?;
        unsafe { put(out, Box::into_raw(Box::new(FbnetSimulation(rep))), "out") }
    })
}

/// # Safety
/// `s` must come from [`fbnet_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fbnet_simulation_free(s: *mut FbnetSimulation) {
    if !s.is_null() {
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Empirical throughput and its standard error.
///
/// # Safety
/// `s` must be live; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn fbnet_simulation_throughput(s: *const FbnetSimulation, mean: *mut f64, se: *mut f64) -> FbnetStatus {
    guard(|| {
        let s = &unsafe { deref(s, "simulation") }?.0;
        unsafe { put(mean, s.throughput.mean, "mean") }?;
        unsafe { put(se, s.throughput.se, "se") }
    })
}

/// Empirical mean delay and its standard error; `NotFound` when nothing
/// was delivered.
///
/// # Safety
/// `s` must be live; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn fbnet_simulation_mean_delay(s: *const FbnetSimulation, mean: *mut f64, se: *mut f64) -> FbnetStatus {
    guard(|| {
        let s = &unsafe { deref(s, "simulation") }?.0;
        let d = s
            .delay
            .ok_or_else(|| Failure(FbnetStatus::NotFound, "no packet was delivered".into()))?;
        unsafe { put(mean, d.mean, "mean") }?;
        unsafe { put(se, d.se, "se") }
    })
}

/// Exact throughput from the joint chain of a tiny network.
///
/// # Safety
/// `net` must be live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fbnet_exact_throughput(net: *const FbnetNetwork, out: *mut f64) -> FbnetStatus {
    guard(|| {
        let spec = &unsafe { deref(net, "net") }?.0;
        let exact = sim::exact_oracle(spec).map_err(fbnet::Error::from)?;
        unsafe { put(out, exact.throughput, "out") }
    })
}

/// Render the JSON report the CLI would print for `mode`. Null configs use
/// the defaults; compare uses the default thresholds. Release the string
/// with [`fbnet_string_free`].
///
/// # Safety
/// `net` must be live, configs valid or null, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fbnet_report_json(
    net: *const FbnetNetwork,
    mode: FbnetMode,
    iter: *const FbnetIterationConfig,
    sim: *const FbnetSimConfig,
    out: *mut *mut c_char,
) -> FbnetStatus {
    guard(|| {
        let spec = &unsafe { deref(net, "net") }?.0;
        let iter = iteration_config(unsafe { iter.as_ref() });
        let sim = sim_config(unsafe { sim.as_ref() });
        let report = match mode {
            FbnetMode::Analyze => cli::analyze(spec, &iter)?,
            FbnetMode::Simulate => cli::simulate(spec, &sim)?,
            FbnetMode::Compare => cli::compare(
                spec,
                &cli::CompareOptions {
                    iteration: iter,
                    sim,
                    ..Default::default()
                },
            )?,
            FbnetMode::Oracle => cli::oracle(spec, &iter, &sim)?,
        };
        let text = CString::new(report.to_json()).expect("JSON has no nul");
        unsafe { put(out, text.into_raw(), "out") }
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fbnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
