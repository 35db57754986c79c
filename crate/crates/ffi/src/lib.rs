//! C interface to `perishable-core`.
//!
//! Every fallible function returns a `PerishableStatus`; on failure the
//! message is available from `perishable_last_error` on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use perishable_core::config::ExperimentConfig;
use perishable_core::experiment::Experiment;
use perishable_core::sim::{Evaluation, RolloutConfig};
use perishable_core::vi::Policy;
use perishable_core::Error;

/// Status codes. Values 2 to 7 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerishableStatus {
    Ok = 0,
    /// Invalid configuration or parameter.
    Config = 2,
    /// State space too large to enumerate.
    Capacity = 3,
    Divergence = 4,
    Io = 5,
    /// Malformed file or fingerprint mismatch.
    Format = 6,
    /// Index out of range or broken call contract.
    Index = 7,
    NullArgument = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

impl From<&Error> for PerishableStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => PerishableStatus::Config,
            3 => PerishableStatus::Capacity,
            4 => PerishableStatus::Divergence,
            5 => PerishableStatus::Io,
            6 => PerishableStatus::Format,
            _ => PerishableStatus::Index,
        }
    }
}

/// A configured scenario.
pub struct PerishableExperiment {
    config: ExperimentConfig,
    inner: Experiment,
}

/// Result of value iteration: the greedy policy and run statistics.
pub struct PerishableSolution {
    policy: Policy,
    iterations: u64,
    converged: bool,
}

/// Simulated return and KPIs. Per-product arrays use index 0 only for
/// single-product scenarios; percentages lie in [0, 100].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PerishableEvaluation {
    pub n_rollouts: usize,
    pub n_products: usize,
    pub return_mean: f64,
    pub return_sd: f64,
    pub service_level_mean: [f64; 2],
    pub service_level_sd: [f64; 2],
    pub wastage_mean: [f64; 2],
    pub wastage_sd: [f64; 2],
    pub holding_mean: [f64; 2],
    pub holding_sd: [f64; 2],
}

impl From<&Evaluation> for PerishableEvaluation {
    fn from(e: &Evaluation) -> Self {
        let mut out = PerishableEvaluation {
            n_rollouts: e.ret.n,
            n_products: e.products.len(),
            return_mean: e.ret.mean,
            return_sd: e.ret.sd,
            ..Default::default()
        };
        for k in 0..e.products.len().min(2) {
            out.service_level_mean[k] = e.service_level[k].mean;
            out.service_level_sd[k] = e.service_level[k].sd;
            out.wastage_mean[k] = e.wastage[k].mean;
            out.wastage_sd[k] = e.wastage[k].sd;
            out.holding_mean[k] = e.holding[k].mean;
            out.holding_sd[k] = e.holding[k].sd;
        }
        out
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PerishableStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PerishableStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for `perishable_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PerishableStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PerishableStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PerishableStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PerishableStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn rollouts(exp: &PerishableExperiment, n_rollouts: usize, seed: u64) -> RolloutConfig {
    let mut cfg = exp.config.evaluation.clone();
    if n_rollouts > 0 {
        cfg.n_rollouts = n_rollouts;
    }
    cfg.base_seed = seed;
    cfg
}

unsafe fn write_evaluation(out: *mut PerishableEvaluation, e: &Evaluation) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = e.into();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn perishable_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn perishable_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Sets the worker thread count. Only the first successful call has effect
/// and it must precede any solve or evaluation.
#[no_mangle]
pub extern "C" fn perishable_set_threads(threads: usize) -> PerishableStatus {
    guard(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure(PerishableStatus::Config, e.to_string()))
    })
}

fn new_experiment(config: ExperimentConfig, out: *mut *mut PerishableExperiment) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let inner = Experiment::new(&config)?;
    let boxed = Box::new(PerishableExperiment { config, inner });
    // SAFETY: checked non-null above.
    unsafe { *out = Box::into_raw(boxed) };
    Ok(())
}

/// Creates an experiment from a bundled preset such as "a/m2/exp1".
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perishable_experiment_from_preset(
    name: *const c_char,
    out: *mut *mut PerishableExperiment,
) -> PerishableStatus {
    guard(|| new_experiment(ExperimentConfig::preset(str_arg(name, "name")?)?, out))
}

/// Creates an experiment from the text of a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perishable_experiment_from_toml(
    toml: *const c_char,
    out: *mut *mut PerishableExperiment,
) -> PerishableStatus {
    guard(|| new_experiment(ExperimentConfig::from_toml(str_arg(toml, "toml")?)?, out))
}

/// # Safety
/// `exp` must come from a constructor above and not be used afterwards.
/// NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn perishable_experiment_free(exp: *mut PerishableExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Number of MDP states, saturating at UINT64_MAX.
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perishable_experiment_num_states(
    exp: *const PerishableExperiment,
    out: *mut u64,
) -> PerishableStatus {
    guard(|| {
        let exp = handle(exp, "exp")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = u64::try_from(exp.inner.cardinality().states).unwrap_or(u64::MAX);
        Ok(())
    })
}

/// Number of heuristic parameters, or 0 for a NULL handle.
///
/// # Safety
/// `exp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn perishable_experiment_heuristic_dim(exp: *const PerishableExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.inner.heuristic_space().dim())
}

/// Solves the MDP with the experiment's value-iteration settings.
/// `checkpoint_dir` may be NULL; `resume` continues from its newest
/// checkpoint.
///
/// # Safety
/// `exp` must be a live handle, `checkpoint_dir` NULL or a NUL-terminated
/// string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perishable_solve(
    exp: *const PerishableExperiment,
    checkpoint_dir: *const c_char,
    resume: bool,
    out: *mut *mut PerishableSolution,
) -> PerishableStatus {
    guard(|| {
        let exp = handle(exp, "exp")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = if checkpoint_dir.is_null() {
            None
        } else {
            let d = PathBuf::from(str_arg(checkpoint_dir, "checkpoint_dir")?);
            std::fs::create_dir_all(&d).map_err(|e| Failure(PerishableStatus::Io, format!("{}: {e}", d.display())))?;
            Some(d)
        };
        let res = exp.inner.solve(&exp.config.vi, dir.as_deref(), resume)?;
        let converged = res.converged();
        *out = Box::into_raw(Box::new(PerishableSolution {
            policy: res.policy,
            iterations: res.iterations,
            converged,
        }));
        Ok(())
    })
}

/// # Safety
/// `sol` must come from `perishable_solve` and not be used afterwards.
/// NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn perishable_solution_free(sol: *mut PerishableSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Policy length (one action per state), or 0 for NULL.
///
/// # Safety
/// `sol` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn perishable_solution_len(sol: *const PerishableSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.policy.actions.len())
}

/// Sweeps performed, or 0 for NULL.
///
/// # Safety
/// `sol` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn perishable_solution_iterations(sol: *const PerishableSolution) -> u64 {
    sol.as_ref().map_or(0, |s| s.iterations)
}

/// Whether the stopping rule was met.
///
/// # Safety
/// `sol` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn perishable_solution_converged(sol: *const PerishableSolution) -> bool {
    sol.as_ref().is_some_and(|s| s.converged)
}

/// Copies the action index of every state into `buf`, which must hold
/// exactly `perishable_solution_len` entries.
///
/// # Safety
/// `sol` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn perishable_solution_actions(
    sol: *const PerishableSolution,
    buf: *mut u32,
    len: usize,
) -> PerishableStatus {
    guard(|| {
        let sol = handle(sol, "sol")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let actions = &sol.policy.actions;
        if len != actions.len() {
            return Err(Failure(
                PerishableStatus::Index,
                format!("buffer holds {len} entries, policy has {}", actions.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(actions);
        Ok(())
    })
}

/// Writes the policy as CSV, readable by the command line's `evaluate`.
///
/// # Safety
/// Handles must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn perishable_solution_write_csv(
    exp: *const PerishableExperiment,
    sol: *const PerishableSolution,
    path: *const c_char,
) -> PerishableStatus {
    guard(|| {
        let exp = handle(exp, "exp")?;
        let sol = handle(sol, "sol")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        exp.inner.write_policy(&path, &sol.policy)?;
        Ok(())
    })
}

/// Simulates a solved policy. `n_rollouts` 0 uses the configured count.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perishable_evaluate_solution(
    exp: *const PerishableExperiment,
    sol: *const PerishableSolution,
    n_rollouts: usize,
    seed: u64,
    out: *mut PerishableEvaluation,
) -> PerishableStatus {
    guard(|| {
        let exp = handle(exp, "exp")?;
        let sol = handle(sol, "sol")?;
        let e = exp.inner.evaluate_solved(&sol.policy, &rollouts(exp, n_rollouts, seed))?;
        write_evaluation(out, &e)
    })
}

/// Simulates a policy CSV written for this experiment.
///
/// # Safety
/// `exp` must be live, `path` a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn perishable_evaluate_policy_file(
    exp: *const PerishableExperiment,
    path: *const c_char,
    n_rollouts: usize,
    seed: u64,
    out: *mut PerishableEvaluation,
) -> PerishableStatus {
    guard(|| {
        let exp = handle(exp, "exp")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let e = exp.inner.evaluate_policy_file(&path, &rollouts(exp, n_rollouts, seed))?;
        write_evaluation(out, &e)
    })
}

/// Simulates the scenario's heuristic with `len` parameters, in the order
/// reported by the command line's `simopt`.
///
/// # Safety
/// `exp` must be live, `params` valid for `len` reads and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn perishable_evaluate_heuristic(
    exp: *const PerishableExperiment,
    params: *const usize,
    len: usize,
    n_rollouts: usize,
    seed: u64,
    out: *mut PerishableEvaluation,
) -> PerishableStatus {
    guard(|| {
        let exp = handle(exp, "exp")?;
        if params.is_null() && len > 0 {
            return Err(null("params"));
        }
        let p = if len == 0 { &[][..] } else { std::slice::from_raw_parts(params, len) };
        let e = exp.inner.evaluate_heuristic(p, &rollouts(exp, n_rollouts, seed))?;
        write_evaluation(out, &e)
    })
}
