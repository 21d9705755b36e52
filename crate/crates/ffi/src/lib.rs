//! C ABI over `nash_mtl`.
//!
//! Matrices are column-major `double` arrays with one column per task. Every
//! function returns an [`NmtlStatus`]; on failure the message is available
//! from [`nmtl_last_error`] on the same thread. Output buffers are only
//! written on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nash_mtl::baselines::{self, AggregatorKind, AggregatorState};
use nash_mtl::linalg::{Matrix, Vector};
use nash_mtl::metrics::{self, MetricTable, TaskSpec};
use nash_mtl::nash::{self, NashConfig, SolveStatus};
use nash_mtl::problems::{Problem, ToyProblem};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmtlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailed = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmtlSolveStatus {
    Exact = 0,
    Approximate = 1,
    /// Linearly dependent gradients: the direction is the minimum-norm point
    /// and the weights are zero.
    Degenerate = 2,
}

impl From<SolveStatus> for NmtlSolveStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Exact => NmtlSolveStatus::Exact,
            SolveStatus::Approximate => NmtlSolveStatus::Approximate,
            SolveStatus::Degenerate => NmtlSolveStatus::Degenerate,
        }
    }
}

/// Bargaining solver with its settings and the last weights (used as a warm
/// start when `warm_start` is enabled).
pub struct NmtlSolver {
    config: NashConfig,
    warm_start: bool,
    last_alpha: Option<Vector>,
}

/// Stateful aggregator of any supported kind.
pub struct NmtlAggregator {
    kind: AggregatorKind,
    state: AggregatorState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Fail(NmtlStatus, String);

fn fail<T>(status: NmtlStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NmtlStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (NmtlStatus::Ok, String::new()),
        Ok(Err(Fail(s, m))) => (s, m),
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            (NmtlStatus::Panic, m)
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

fn nonnull<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return fail(NmtlStatus::NullPointer, format!("{what} is null"));
    }
    Ok(())
}

/// # Safety
/// `data` must point to `d * k` readable doubles.
unsafe fn read_matrix(data: *const f64, d: usize, k: usize) -> Result<Matrix, Fail> {
    nonnull(data, "gradient matrix")?;
    if d == 0 || k == 0 {
        return fail(NmtlStatus::InvalidArgument, "matrix dimensions must be positive");
    }
    let n = d.checked_mul(k).ok_or(Fail(NmtlStatus::InvalidArgument, "dimension overflow".into()))?;
    let g = Matrix::from_col_major(d, k, slice::from_raw_parts(data, n).to_vec())
        .map_err(|e| Fail(NmtlStatus::InvalidArgument, e.to_string()))?;
    if !g.is_finite() {
        return fail(NmtlStatus::InvalidArgument, "gradient matrix has non-finite entries");
    }
    Ok(g)
}

/// # Safety
/// `out` must point to `src.len()` writable doubles.
unsafe fn write(out: *mut f64, src: &[f64], what: &str) -> Result<(), Fail> {
    nonnull(out, what)?;
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nmtl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a solver with default settings.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn nmtl_solver_new(out: *mut *mut NmtlSolver) -> NmtlStatus {
    guard(|| {
        nonnull(out, "out")?;
        *out = Box::into_raw(Box::new(NmtlSolver {
            config: NashConfig::default(),
            warm_start: false,
            last_alpha: None,
        }));
        Ok(())
    })
}

/// Sets the accepted fixed-point residual and the refinement budget.
///
/// # Safety
/// `solver` must come from [`nmtl_solver_new`].
#[no_mangle]
pub unsafe extern "C" fn nmtl_solver_configure(
    solver: *mut NmtlSolver,
    residual_tol: f64,
    ccp_max_iters: u32,
    warm_start: bool,
) -> NmtlStatus {
    guard(|| {
        nonnull(solver, "solver")?;
        let s = &mut *solver;
        let cfg = NashConfig {
            residual_tol,
            ccp_max_iters: ccp_max_iters as usize,
            ..s.config.clone()
        };
        cfg.validate().map_err(|e| Fail(NmtlStatus::InvalidArgument, e.to_string()))?;
        s.config = cfg;
        s.warm_start = warm_start;
        Ok(())
    })
}

/// # Safety
/// `solver` must be null or come from [`nmtl_solver_new`], and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nmtl_solver_free(solver: *mut NmtlSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Solves the bargaining problem for the `d x k` gradient matrix `g`.
///
/// Writes `k` weights to `alpha_out` and `d` entries to `direction_out`.
/// `status_out` and `residual_out` may be null.
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn nmtl_solve(
    solver: *mut NmtlSolver,
    g: *const f64,
    d: usize,
    k: usize,
    alpha_out: *mut f64,
    direction_out: *mut f64,
    status_out: *mut NmtlSolveStatus,
    residual_out: *mut f64,
) -> NmtlStatus {
    guard(|| {
        nonnull(solver, "solver")?;
        let s = &mut *solver;
        let g = read_matrix(g, d, k)?;
        nonnull(alpha_out, "alpha_out")?;
        nonnull(direction_out, "direction_out")?;
        let warm = s.last_alpha.as_ref().filter(|a| s.warm_start && a.len() == k);
        let sol = nash::solve_warm(&g, &s.config, warm).map_err(|e| Fail(NmtlStatus::SolverFailed, e.to_string()))?;
        write(alpha_out, sol.alpha.as_slice(), "alpha_out")?;
        write(direction_out, sol.direction.as_slice(), "direction_out")?;
        if !status_out.is_null() {
            *status_out = sol.status.into();
        }
        if !residual_out.is_null() {
            *residual_out = sol.residual_inf;
        }
        s.last_alpha = (sol.status != SolveStatus::Degenerate).then_some(sol.alpha);
        Ok(())
    })
}

/// Creates an aggregator by name (`ls`, `si`, `rlw`, `dwa`, `mgda`, `pcgrad`,
/// `cagrad`, `imtlg`, `nash`). `seed` drives the randomized ones.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nmtl_aggregator_new(name: *const c_char, seed: u64, out: *mut *mut NmtlAggregator) -> NmtlStatus {
    guard(|| {
        nonnull(name, "name")?;
        nonnull(out, "out")?;
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Fail(NmtlStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let kind: AggregatorKind = name.parse().map_err(|e: baselines::AggregateError| Fail(NmtlStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(NmtlAggregator {
            kind,
            state: AggregatorState::new(seed),
        }));
        Ok(())
    })
}

/// Aggregates one step: `g` is `d x k`, `losses` has `k` entries, and the
/// joint direction (to be subtracted from the parameters) goes to
/// `direction_out` (`d` entries).
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn nmtl_aggregator_step(
    agg: *mut NmtlAggregator,
    g: *const f64,
    d: usize,
    k: usize,
    losses: *const f64,
    direction_out: *mut f64,
) -> NmtlStatus {
    guard(|| {
        nonnull(agg, "aggregator")?;
        let a = &mut *agg;
        let g = read_matrix(g, d, k)?;
        nonnull(losses, "losses")?;
        let losses = Vector::from(slice::from_raw_parts(losses, k));
        let out = baselines::aggregate(&a.kind, &g, &losses, &mut a.state)
            .map_err(|e| Fail(NmtlStatus::SolverFailed, e.to_string()))?;
        write(direction_out, out.direction.as_slice(), "direction_out")
    })
}

/// Number of bargaining solves performed by `agg` so far (0 for null).
///
/// # Safety
/// `agg` must be null or come from [`nmtl_aggregator_new`].
#[no_mangle]
pub unsafe extern "C" fn nmtl_aggregator_solver_calls(agg: *const NmtlAggregator) -> u64 {
    agg.as_ref().map_or(0, |a| a.state.solver_calls)
}

/// # Safety
/// `agg` must be null or come from [`nmtl_aggregator_new`], and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nmtl_aggregator_free(agg: *mut NmtlAggregator) {
    if !agg.is_null() {
        drop(Box::from_raw(agg));
    }
}

/// Minimum-norm convex combination of the columns of `g`: `k` simplex weights
/// and the `d`-vector direction.
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn nmtl_mgda(g: *const f64, d: usize, k: usize, weights_out: *mut f64, direction_out: *mut f64) -> NmtlStatus {
    guard(|| {
        let g = read_matrix(g, d, k)?;
        nonnull(weights_out, "weights_out")?;
        let m = baselines::mgda(&g);
        write(weights_out, m.weights.as_slice(), "weights_out")?;
        write(direction_out, m.direction.as_slice(), "direction_out")
    })
}

/// Two-task toy benchmark losses at `theta` (2 entries) into `out` (2 entries).
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn nmtl_toy_losses(theta: *const f64, out: *mut f64) -> NmtlStatus {
    guard(|| {
        nonnull(theta, "theta")?;
        let l = ToyProblem::new().losses(&Vector::from(slice::from_raw_parts(theta, 2)));
        write(out, l.as_slice(), "out")
    })
}

/// Toy gradients at `theta` as a column-major `2 x 2` matrix (4 entries).
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn nmtl_toy_gradients(theta: *const f64, out: *mut f64) -> NmtlStatus {
    guard(|| {
        nonnull(theta, "theta")?;
        let g = ToyProblem::new().gradients(&Vector::from(slice::from_raw_parts(theta, 2)));
        write(out, g.as_col_major(), "out")
    })
}

/// Average relative degradation in percent of `values` against `baseline`
/// over `k` metrics; `higher_is_better[i]` flips the sign of metric `i`.
///
/// # Safety
/// Pointers must reference `k` elements each; `out` one double.
#[no_mangle]
pub unsafe extern "C" fn nmtl_delta_m(
    values: *const f64,
    baseline: *const f64,
    higher_is_better: *const bool,
    k: usize,
    out: *mut f64,
) -> NmtlStatus {
    guard(|| {
        nonnull(values, "values")?;
        nonnull(baseline, "baseline")?;
        nonnull(higher_is_better, "higher_is_better")?;
        nonnull(out, "out")?;
        let hib = slice::from_raw_parts(higher_is_better, k);
        let tasks = hib.iter().enumerate().map(|(i, &h)| TaskSpec::new(format!("metric_{i}"), h)).collect();
        let invalid = |e: metrics::MetricError| Fail(NmtlStatus::InvalidArgument, e.to_string());
        let mut t = MetricTable::new(tasks, slice::from_raw_parts(baseline, k).to_vec()).map_err(invalid)?;
        t.push("method", slice::from_raw_parts(values, k).to_vec()).map_err(invalid)?;
        *out = metrics::delta_m(&t, "method").map_err(invalid)?;
        Ok(())
    })
}
