//! C ABI over `chirp-core`.
//!
//! Every fallible function returns a [`ChirpStatus`]; results travel through
//! out-pointers that are written only on success. On failure a message is
//! kept per thread and can be copied out with [`chirp_last_error_message`].
//! MDPs are opaque [`ChirpMdp`] handles owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use chirp_core::chirp::{chirp_exact, estimate_chirp, DistanceMatrix, SamplingConfig};
use chirp_core::clustering::k_medoids;
use chirp_core::gridworld::{Cell, GridMdp, GridOptions, RewardScale};
use chirp_core::sopr::sopr;
use chirp_core::transport::{w1_exact, PointCloud};
use chirp_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChirpStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Numerical = 3,
    Calculability = 4,
    Degenerate = 5,
    Shape = 6,
    TooLarge = 7,
    Config = 8,
    Validation = 9,
    InsufficientSamples = 10,
    UndefinedCorrelation = 11,
    ExactnessUnavailable = 12,
    Io = 13,
    Parse = 14,
    Panic = 15,
}

impl ChirpStatus {
    fn from_kind(kind: &str) -> Self {
        match kind {
            "domain" => ChirpStatus::Domain,
            "numerical" => ChirpStatus::Numerical,
            "calculability" => ChirpStatus::Calculability,
            "degenerate" => ChirpStatus::Degenerate,
            "shape" => ChirpStatus::Shape,
            "too_large" => ChirpStatus::TooLarge,
            "config" => ChirpStatus::Config,
            "validation" => ChirpStatus::Validation,
            "insufficient_samples" => ChirpStatus::InsufficientSamples,
            "undefined_correlation" => ChirpStatus::UndefinedCorrelation,
            "exactness_unavailable" => ChirpStatus::ExactnessUnavailable,
            "io" => ChirpStatus::Io,
            _ => ChirpStatus::Parse,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChirpScheme {
    Random = 0,
    RewardShaped = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChirpRewardScale {
    GoalEccentricity = 0,
    StartDistance = 1,
}

/// Grid construction options; see [`chirp_grid_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpGridOptions {
    pub grid_size: i32,
    pub reward_scale: ChirpRewardScale,
    pub discount: f64,
    pub horizon: usize,
}

/// Transfer-performance ratio with its three policy returns on the target.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChirpSopr {
    pub value: f64,
    pub target_optimal: f64,
    pub transferred: f64,
    pub target_pessimal: f64,
}

/// Opaque MDP handle. Create with [`chirp_mdp_new`], release with [`chirp_mdp_free`].
pub struct ChirpMdp {
    inner: GridMdp,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(err: Error) -> ChirpStatus {
    let status = ChirpStatus::from_kind(err.kind());
    set_error(err.to_string());
    status
}

fn null(what: &str) -> ChirpStatus {
    set_error(format!("null pointer: {what}"));
    ChirpStatus::NullPointer
}

/// Runs `f` with the error slot cleared, turning panics into `Panic`.
fn guard(f: impl FnOnce() -> ChirpStatus) -> ChirpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            ChirpStatus::Panic
        }
    }
}

macro_rules! deref {
    ($p:expr, $name:literal) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return null($name),
        }
    };
}

macro_rules! try_core {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return fail(err),
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chirp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or NULL when the last
/// call succeeded. Free the result with [`chirp_string_free`].
#[no_mangle]
pub extern "C" fn chirp_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_deref() {
        Some(msg) => CString::new(msg.replace('\0', " ")).map_or(std::ptr::null_mut(), CString::into_raw),
        None => std::ptr::null_mut(),
    })
}

/// # Safety
/// `s` must be NULL or a pointer returned by this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn chirp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn chirp_grid_options_default() -> ChirpGridOptions {
    let d = GridOptions::default();
    ChirpGridOptions {
        grid_size: d.grid_size,
        reward_scale: ChirpRewardScale::GoalEccentricity,
        discount: d.discount,
        horizon: d.horizon,
    }
}

/// Builds a default-size grid MDP.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn chirp_mdp_new(
    goal_x: i32,
    goal_y: i32,
    start_x: i32,
    start_y: i32,
    slip_prob: f64,
    out: *mut *mut ChirpMdp,
) -> ChirpStatus {
    let opts = chirp_grid_options_default();
    chirp_mdp_new_with_options(goal_x, goal_y, start_x, start_y, slip_prob, &opts, out)
}

/// # Safety
/// `options` must point to a valid [`ChirpGridOptions`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chirp_mdp_new_with_options(
    goal_x: i32,
    goal_y: i32,
    start_x: i32,
    start_y: i32,
    slip_prob: f64,
    options: *const ChirpGridOptions,
    out: *mut *mut ChirpMdp,
) -> ChirpStatus {
    guard(|| {
        let o = deref!(options, "options");
        if out.is_null() {
            return null("out");
        }
        let opts = GridOptions {
            grid_size: o.grid_size,
            reward_scale: match o.reward_scale {
                ChirpRewardScale::GoalEccentricity => RewardScale::GoalEccentricity,
                ChirpRewardScale::StartDistance => RewardScale::StartDistance,
            },
            discount: o.discount,
            horizon: o.horizon,
        };
        let mdp = try_core!(GridMdp::with_options(Cell::new(goal_x, goal_y), Cell::new(start_x, start_y), slip_prob, &opts));
        *out = Box::into_raw(Box::new(ChirpMdp { inner: mdp }));
        ChirpStatus::Ok
    })
}

/// # Safety
/// `mdp` must be NULL or a handle from [`chirp_mdp_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chirp_mdp_free(mdp: *mut ChirpMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Reward scaling constant of the MDP.
///
/// # Safety
/// `mdp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chirp_mdp_reward_scale(mdp: *const ChirpMdp, out: *mut f64) -> ChirpStatus {
    guard(|| {
        let m = deref!(mdp, "mdp");
        if out.is_null() {
            return null("out");
        }
        *out = m.inner.c_scale;
        ChirpStatus::Ok
    })
}

/// Transfer performance of the source's optimal policy on the target.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chirp_sopr(source: *const ChirpMdp, target: *const ChirpMdp, out: *mut ChirpSopr) -> ChirpStatus {
    guard(|| {
        let (s, t) = (deref!(source, "source"), deref!(target, "target"));
        if out.is_null() {
            return null("out");
        }
        let r = try_core!(sopr(&s.inner, &t.inner));
        *out = ChirpSopr {
            value: r.value,
            target_optimal: r.target_optimal,
            transferred: r.transferred,
            target_pessimal: r.target_pessimal,
        };
        ChirpStatus::Ok
    })
}

/// Exact distance over all state-action pairs; slip-free MDPs only.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chirp_distance_exact(a: *const ChirpMdp, b: *const ChirpMdp, out: *mut f64) -> ChirpStatus {
    guard(|| {
        let (a, b) = (deref!(a, "a"), deref!(b, "b"));
        if out.is_null() {
            return null("out");
        }
        *out = try_core!(chirp_exact(&a.inner, &b.inner));
        ChirpStatus::Ok
    })
}

/// Sampled distance estimate with `n_s` state-action pairs and `n_t`
/// transitions each. Deterministic in `seed`.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chirp_distance_estimate(
    a: *const ChirpMdp,
    b: *const ChirpMdp,
    scheme: ChirpScheme,
    n_s: usize,
    n_t: usize,
    seed: u64,
    out: *mut f64,
) -> ChirpStatus {
    guard(|| {
        let (a, b) = (deref!(a, "a"), deref!(b, "b"));
        if out.is_null() {
            return null("out");
        }
        let cfg = match scheme {
            ChirpScheme::Random => SamplingConfig::random(n_s, n_t, seed),
            ChirpScheme::RewardShaped => SamplingConfig::reward_shaped(n_s, n_t, seed),
        };
        *out = try_core!(estimate_chirp(&a.inner, &b.inner, &cfg));
        ChirpStatus::Ok
    })
}

/// Exact 1-Wasserstein distance between two equal-size uniform point clouds
/// given row-major as `n * dim` doubles. `assignment` may be NULL; otherwise
/// it receives `n` target indices.
///
/// # Safety
/// `x` and `y` must hold `n * dim` doubles; `assignment`, if non-NULL, `n` slots.
#[no_mangle]
pub unsafe extern "C" fn chirp_w1(
    x: *const f64,
    y: *const f64,
    n: usize,
    dim: usize,
    out_cost: *mut f64,
    assignment: *mut usize,
) -> ChirpStatus {
    guard(|| {
        if x.is_null() || y.is_null() {
            return null("points");
        }
        if out_cost.is_null() {
            return null("out_cost");
        }
        let Some(len) = n.checked_mul(dim) else {
            return fail(Error::TooLarge(format!("{n} x {dim} points")));
        };
        let xs = try_core!(PointCloud::from_flat(dim, std::slice::from_raw_parts(x, len).to_vec()));
        let ys = try_core!(PointCloud::from_flat(dim, std::slice::from_raw_parts(y, len).to_vec()));
        let plan = try_core!(w1_exact(&xs, &ys));
        if !assignment.is_null() {
            std::slice::from_raw_parts_mut(assignment, n).copy_from_slice(&plan.assignment);
        }
        *out_cost = plan.cost;
        ChirpStatus::Ok
    })
}

/// k-medoids over a row-major `n * n` distance matrix. Writes the sorted
/// medoid indices (`k` slots), a dense cluster id per point (`n` slots,
/// ids index into `medoids`) and the total within-cluster cost. Any output
/// may be NULL.
///
/// # Safety
/// `matrix` must hold `n * n` doubles; non-NULL outputs must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn chirp_k_medoids(
    matrix: *const f64,
    n: usize,
    k: usize,
    seed: u64,
    medoids: *mut usize,
    labels: *mut usize,
    cost: *mut f64,
) -> ChirpStatus {
    guard(|| {
        if matrix.is_null() {
            return null("matrix");
        }
        let Some(len) = n.checked_mul(n) else {
            return fail(Error::TooLarge(format!("{n} points")));
        };
        let entries = std::slice::from_raw_parts(matrix, len).to_vec();
        let ids = (0..n).map(|i| i.to_string()).collect();
        let d = try_core!(DistanceMatrix::new(ids, entries, 1));
        let a = try_core!(k_medoids(&d, k, seed));
        if !medoids.is_null() {
            std::slice::from_raw_parts_mut(medoids, k).copy_from_slice(&a.medoids);
        }
        if !labels.is_null() {
            std::slice::from_raw_parts_mut(labels, n).copy_from_slice(&a.cluster_ids());
        }
        if !cost.is_null() {
            *cost = a.cost;
        }
        ChirpStatus::Ok
    })
}
