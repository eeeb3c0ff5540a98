//! C ABI for landscape-lab.
//!
//! Every fallible call returns an [`LlStatus`]; on failure the message is
//! available from [`ll_last_error_message`] on the same thread. Handles are
//! opaque, created by `*_new` functions and released by the matching
//! `*_free`. Output buffers are caller-owned, with their capacity passed
//! alongside. Panics never cross the boundary; they surface as
//! `LL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use landscape_lab::abstraction::{smoothness_report, AbstractionHierarchy, DecoderFamily};
use landscape_lab::census::{run_census, BasinRule, CensusConfig};
use landscape_lab::dynamics::{flow, FlowConfig};
use landscape_lab::gridsim::amplification_curve;
use landscape_lab::knn::soft_knn_predict;
use landscape_lab::oddsmodel::{initial_odds, simulate_merge, smoothed_odds, MergeScenario};
use landscape_lab::{Energy, EnergyLandscape, Error, MemorySet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlStatus {
    Ok = 0,
    /// A required pointer was null.
    Null = 1,
    /// Invalid argument, dimension mismatch or undersized buffer.
    Input = 2,
    /// Non-finite values during integration.
    Numerical = 3,
    /// Internal panic caught at the boundary.
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlDecoderFamily {
    Diagonal = 0,
    Tanh = 1,
}

/// Opaque energy landscape.
pub struct LlLandscape(EnergyLandscape);

/// Opaque abstraction hierarchy.
pub struct LlHierarchy(AbstractionHierarchy);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlFlowConfig {
    pub step_size: f64,
    pub grad_tol: f64,
    pub max_steps: usize,
    pub tau_rate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlFlowResult {
    pub energy: f64,
    pub grad_norm: f64,
    pub steps_taken: usize,
    pub converged: bool,
    /// Nearest memory to the terminal.
    pub basin_memory_index: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlSmoothnessRow {
    pub level: usize,
    pub hessian_norm_est: f64,
    pub lipschitz_est: f64,
    pub jacobian_norm_est: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlCensusRow {
    pub level: usize,
    pub p_gen_majority: f64,
    pub amplification: f64,
    pub amplification_stderr: f64,
    pub diversity: f64,
    pub privacy_k1: f64,
    pub failures: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LlMergeCounts {
    pub pure_a: u64,
    pub pure_b: u64,
    pub mixed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Fail {
    Null(&'static str),
    Lib(Error),
    Input(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            LlStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            LlStatus::Null
        }
        Ok(Err(Fail::Input(msg))) => {
            set_last_error(&msg);
            LlStatus::Input
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(&e.to_string());
            if e.is_input_error() {
                LlStatus::Input
            } else {
                LlStatus::Numerical
            }
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            LlStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(v);
    Ok(())
}

fn check_capacity(need: usize, cap: usize) -> Result<(), Fail> {
    if cap < need {
        return Err(Fail::Input(format!("output buffer holds {cap} entries, {need} needed")));
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ll_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn ll_flow_config_default() -> LlFlowConfig {
    let d = FlowConfig::default();
    LlFlowConfig {
        step_size: d.step_size,
        grad_tol: d.grad_tol,
        max_steps: d.max_steps,
        tau_rate: d.tau_rate,
    }
}

/// Builds a landscape from `n` row-major points of dimension `dim`.
///
/// # Safety
/// `points` must hold `n * dim` values and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn ll_landscape_new(
    points: *const f64,
    labels: *const u32,
    n: usize,
    dim: usize,
    beta: f64,
    out: *mut *mut LlLandscape,
) -> LlStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let total = n
            .checked_mul(dim)
            .ok_or_else(|| Fail::Input("n * dim overflows".into()))?;
        let flat = input(points, total, "points")?;
        let labels = input(labels, n, "labels")?.to_vec();
        let pts = if dim == 0 {
            vec![Vec::new(); n]
        } else {
            flat.chunks(dim).map(<[f64]>::to_vec).collect()
        };
        let l = EnergyLandscape::new(MemorySet::new(pts, labels)?, beta)?;
        *out = Box::into_raw(Box::new(LlLandscape(l)));
        Ok(())
    })
}

/// # Safety
/// `l` must come from [`ll_landscape_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ll_landscape_free(l: *mut LlLandscape) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// # Safety
/// `l` must be a live landscape handle.
#[no_mangle]
pub unsafe extern "C" fn ll_landscape_dim(l: *const LlLandscape) -> usize {
    l.as_ref().map_or(0, |l| l.0.dim())
}

/// # Safety
/// `l` must be a live landscape handle.
#[no_mangle]
pub unsafe extern "C" fn ll_landscape_len(l: *const LlLandscape) -> usize {
    l.as_ref().map_or(0, |l| l.0.memories().len())
}

/// # Safety
/// `x` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn ll_energy(l: *const LlLandscape, x: *const f64, dim: usize, out: *mut f64) -> LlStatus {
    guard(|| {
        let l = handle(l, "landscape")?;
        let e = l.0.energy(input(x, dim, "x")?)?;
        write(out, e, "out")
    })
}

/// # Safety
/// `x` and `grad` must each hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn ll_grad(l: *const LlLandscape, x: *const f64, dim: usize, grad: *mut f64) -> LlStatus {
    guard(|| {
        let l = handle(l, "landscape")?;
        let g = l.0.grad_energy(input(x, dim, "x")?)?;
        output(grad, dim, "grad")?.copy_from_slice(&g);
        Ok(())
    })
}

/// Flows `query` to an attractor; `terminal` receives `dim` values.
///
/// # Safety
/// `query` and `terminal` must hold `dim` values; `config` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn ll_flow(
    l: *const LlLandscape,
    query: *const f64,
    dim: usize,
    config: *const LlFlowConfig,
    terminal: *mut f64,
    result: *mut LlFlowResult,
) -> LlStatus {
    guard(|| {
        let l = handle(l, "landscape")?;
        let c = config.as_ref().copied().unwrap_or_else(|| ll_flow_config_default());
        let cfg = FlowConfig::new(c.step_size, c.grad_tol, c.max_steps, c.tau_rate)?;
        let r = flow(&l.0, input(query, dim, "query")?, &cfg)?;
        output(terminal, dim, "terminal")?.copy_from_slice(&r.terminal);
        write(
            result,
            LlFlowResult {
                energy: r.energy,
                grad_norm: r.grad_norm,
                steps_taken: r.steps_taken,
                converged: r.converged,
                basin_memory_index: l.0.memories().nearest(&r.terminal),
            },
            "result",
        )
    })
}

/// Soft k-NN weights (`n` values) and mean label at `query`.
///
/// # Safety
/// `query` must hold `dim` values and `weights` `n_memories` values.
#[no_mangle]
pub unsafe extern "C" fn ll_soft_knn(
    l: *const LlLandscape,
    query: *const f64,
    dim: usize,
    tau: f64,
    weights: *mut f64,
    n_memories: usize,
    mean_label: *mut f64,
) -> LlStatus {
    guard(|| {
        let l = handle(l, "landscape")?;
        check_capacity(l.0.memories().len(), n_memories)?;
        let (pred, w) = soft_knn_predict(l.0.memories(), input(query, dim, "query")?, tau)?;
        output(weights, w.weights.len(), "weights")?.copy_from_slice(&w.weights);
        write(mean_label, pred.mean_label, "mean_label")
    })
}

/// Hierarchy with `c_a = ratio^a` for `a = 0..=top_level` and
/// `beta_a = beta * c_a^temperature_exponent`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ll_hierarchy_geometric(
    family: LlDecoderFamily,
    ratio: f64,
    top_level: usize,
    dim: usize,
    temperature_exponent: f64,
    out: *mut *mut LlHierarchy,
) -> LlStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let family = match family {
            LlDecoderFamily::Diagonal => DecoderFamily::Diagonal,
            LlDecoderFamily::Tanh => DecoderFamily::Tanh,
        };
        let h = AbstractionHierarchy::geometric(family, ratio, top_level, dim)?
            .with_temperature_exponent(temperature_exponent)?;
        *out = Box::into_raw(Box::new(LlHierarchy(h)));
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`ll_hierarchy_geometric`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ll_hierarchy_free(h: *mut LlHierarchy) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of levels, `top_level + 1`.
///
/// # Safety
/// `h` must be a live hierarchy handle.
#[no_mangle]
pub unsafe extern "C" fn ll_hierarchy_levels(h: *const LlHierarchy) -> usize {
    h.as_ref().map_or(0, |h| h.0.top_level() + 1)
}

/// `E_a(z)` on level `a`.
///
/// # Safety
/// `z` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn ll_level_energy(
    h: *const LlHierarchy,
    l: *const LlLandscape,
    level: usize,
    z: *const f64,
    dim: usize,
    out: *mut f64,
) -> LlStatus {
    guard(|| {
        let (h, l) = (handle(h, "hierarchy")?, handle(l, "landscape")?);
        let e = h.0.level(&l.0, level)?.value(input(z, dim, "z")?)?;
        write(out, e, "out")
    })
}

/// One row per level into `rows`, which must hold [`ll_hierarchy_levels`] entries.
///
/// # Safety
/// `rows` must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn ll_smoothness(
    h: *const LlHierarchy,
    l: *const LlLandscape,
    probes: usize,
    probe_radius: f64,
    seed: u64,
    rows: *mut LlSmoothnessRow,
    capacity: usize,
) -> LlStatus {
    guard(|| {
        let (h, l) = (handle(h, "hierarchy")?, handle(l, "landscape")?);
        check_capacity(h.0.top_level() + 1, capacity)?;
        let reports = smoothness_report(&h.0, &l.0, probes, probe_radius, seed)?;
        let out = output(rows, reports.len(), "rows")?;
        for (slot, r) in out.iter_mut().zip(reports) {
            *slot = LlSmoothnessRow {
                level: r.level,
                hessian_norm_est: r.hessian_norm_est,
                lipschitz_est: r.lipschitz_est,
                jacobian_norm_est: r.jacobian_norm_est,
            };
        }
        Ok(())
    })
}

/// Basin census at every level (weighted-vote classification, default flow).
///
/// # Safety
/// `rows` must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn ll_census(
    h: *const LlHierarchy,
    l: *const LlLandscape,
    n_queries: usize,
    seed: u64,
    rows: *mut LlCensusRow,
    capacity: usize,
) -> LlStatus {
    guard(|| {
        let (h, l) = (handle(h, "hierarchy")?, handle(l, "landscape")?);
        let levels: Vec<usize> = (0..=h.0.top_level()).collect();
        check_capacity(levels.len(), capacity)?;
        let cfg = CensusConfig {
            n_queries,
            seed,
            levels,
            basin_rule: BasinRule::WeightedVote,
            ..Default::default()
        };
        let reports = run_census(&l.0, &h.0, &cfg)?;
        let out = output(rows, reports.len(), "rows")?;
        for (slot, r) in out.iter_mut().zip(reports) {
            let maj = r.classes.iter().position(|&c| c == r.majority_class).unwrap_or(0);
            *slot = LlCensusRow {
                level: r.level,
                p_gen_majority: r.p_gen[maj],
                amplification: r.amplification,
                amplification_stderr: r.amplification_stderr,
                diversity: r.diversity_mean_pairwise,
                privacy_k1: r.privacy_knn_distance[&1],
                failures: r.failures,
            };
        }
        Ok(())
    })
}

/// Red share at levels `0..=levels` of a coarsened random grid.
///
/// # Safety
/// `shares` must hold `capacity` values, at least `levels + 1`.
#[no_mangle]
pub unsafe extern "C" fn ll_grid_curve(
    side: usize,
    p_red: f64,
    levels: usize,
    seed: u64,
    shares: *mut f64,
    capacity: usize,
) -> LlStatus {
    guard(|| {
        check_capacity(levels + 1, capacity)?;
        let curve = amplification_curve(side, p_red, levels, seed)?;
        let out = output(shares, curve.len(), "shares")?;
        for (slot, pt) in out.iter_mut().zip(curve) {
            *slot = pt.red_share;
        }
        Ok(())
    })
}

/// `p/q` and `(p/q)^S` (infinite once above 1e300).
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ll_odds(
    p: u64,
    q: u64,
    s: u32,
    lambda_init: *mut f64,
    lambda_smooth: *mut f64,
) -> LlStatus {
    guard(|| {
        let sc = MergeScenario::new(p, q, s)?;
        write(lambda_init, initial_odds(&sc), "lambda_init")?;
        write(lambda_smooth, smoothed_odds(&sc), "lambda_smooth")
    })
}

/// Monte Carlo pure/mixed counts for a merged minimum.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ll_simulate_merge(
    p: u64,
    q: u64,
    s: u32,
    trials: u64,
    seed: u64,
    out: *mut LlMergeCounts,
) -> LlStatus {
    guard(|| {
        let sc = MergeScenario::new(p, q, s)?;
        let c = simulate_merge(&sc, trials, seed)?;
        write(
            out,
            LlMergeCounts {
                pure_a: c.pure_a,
                pure_b: c.pure_b,
                mixed: c.mixed,
            },
            "out",
        )
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ll_version() -> *const c_char {
    static V: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    V.as_ptr().cast()
}
