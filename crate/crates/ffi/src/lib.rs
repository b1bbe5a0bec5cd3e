//! C interface to `ltde-core`: build a model from a TOML config, enumerate
//! its exact oracle, read team Q tables and decay gaps, and simulate.
//!
//! Every fallible call returns an [`LtdeStatus`]; on failure the message is
//! available from [`ltde_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ltde_core::config::ExperimentConfig;
use ltde_core::env::MeanFieldEnv;
use ltde_core::oracle::Oracle;
use ltde_core::rng::{stream, tag};
use ltde_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtdeStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    CapExceeded = 3,
    InvalidArgument = 4,
    BufferTooSmall = 5,
    Internal = 6,
    Panic = 7,
}

/// Validated model and its configuration.
pub struct LtdeModel {
    cfg: ExperimentConfig,
    env: MeanFieldEnv,
}

/// Enumerated oracle with the team Q tables of the configured policy.
pub struct LtdeOracle {
    oracle: Oracle,
    q_team: Vec<Vec<f64>>,
    j: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> LtdeStatus {
    match err {
        Error::Config(_) | Error::InvalidModel(_) | Error::InvalidKernel { .. } | Error::RewardOutOfBounds { .. } => {
            LtdeStatus::Config
        }
        Error::CapExceeded { .. } => LtdeStatus::CapExceeded,
        _ => LtdeStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (LtdeStatus, String)>) -> LtdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LtdeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside ltde".into());
            LtdeStatus::Panic
        }
    }
}

fn core(err: Error) -> (LtdeStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (LtdeStatus, String) {
    (LtdeStatus::NullPointer, format!("{what} is null"))
}

/// Message for the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ltde_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ltde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML experiment config (empty string for the line3 defaults) and
/// validates the model.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ltde_model_new(toml: *const c_char, out: *mut *mut LtdeModel) -> LtdeStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (LtdeStatus::InvalidArgument, format!("config is not UTF-8: {e}")))?;
        let cfg = ExperimentConfig::from_toml_str(text, &[]).map_err(core)?;
        let env = cfg.env().map_err(core)?;
        *out = Box::into_raw(Box::new(LtdeModel { cfg, env }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`ltde_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ltde_model_free(model: *mut LtdeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of states and agents.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ltde_model_sizes(
    model: *const LtdeModel,
    n_states: *mut usize,
    n_agents: *mut u32,
) -> LtdeStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if n_states.is_null() || n_agents.is_null() {
            return Err(null("output"));
        }
        *n_states = model.env.n_states();
        *n_agents = model.env.n_agents();
        Ok(())
    })
}

/// Enumerates the joint space and solves the team Q tables of the configured policy.
///
/// # Safety
/// `model` must be valid and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ltde_oracle_new(model: *const LtdeModel, out: *mut *mut LtdeOracle) -> LtdeStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = &model.cfg;
        let oracle = Oracle::new(model.env.clone(), &cfg.initial, cfg.oracle.xi_cap).map_err(core)?;
        let table = cfg
            .policy
            .table(&model.env, oracle.xi().candidates(), cfg.seed)
            .map_err(core)?;
        let weights = oracle.policy_weights(&table);
        let q_team = oracle.team_q_all(&weights, cfg.oracle.tol).map_err(core)?;
        let j = oracle.j(&weights, cfg.oracle.tol).map_err(core)?;
        *out = Box::into_raw(Box::new(LtdeOracle { oracle, q_team, j }));
        Ok(())
    })
}

/// # Safety
/// `oracle` must come from [`ltde_oracle_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ltde_oracle_free(oracle: *mut LtdeOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Size of the joint `(mu, h)` space.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ltde_oracle_xi_size(oracle: *const LtdeOracle, out: *mut usize) -> LtdeStatus {
    guard(|| {
        let oracle = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = oracle.oracle.xi().len();
        Ok(())
    })
}

/// Exact `J` of the configured policy.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ltde_oracle_j(oracle: *const LtdeOracle, out: *mut f64) -> LtdeStatus {
    guard(|| {
        let oracle = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = oracle.j;
        Ok(())
    })
}

/// Copies `Q_state` (one value per joint index) into `buf`. Fails with
/// `BufferTooSmall` when `len` is below the joint space size.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ltde_oracle_team_q(
    oracle: *const LtdeOracle,
    state: usize,
    buf: *mut f64,
    len: usize,
) -> LtdeStatus {
    guard(|| {
        let oracle = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let q = oracle
            .q_team
            .get(state)
            .ok_or_else(|| (LtdeStatus::InvalidArgument, format!("no state {state}")))?;
        if len < q.len() {
            return Err((LtdeStatus::BufferTooSmall, format!("need {} values, got {len}", q.len())));
        }
        ptr::copy_nonoverlapping(q.as_ptr(), buf, q.len());
        Ok(())
    })
}

/// Largest change of `Q_state` between inputs that agree on the `k`-hop window.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ltde_oracle_decay_gap(
    oracle: *const LtdeOracle,
    state: usize,
    k: usize,
    out: *mut f64,
) -> LtdeStatus {
    guard(|| {
        let oracle = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let q = oracle
            .q_team
            .get(state)
            .ok_or_else(|| (LtdeStatus::InvalidArgument, format!("no state {state}")))?;
        *out = oracle.oracle.decay_gap(q, state, k).map_err(core)?;
        Ok(())
    })
}

/// Team-level trajectory under the configured policy: `steps` rows of
/// per-state counts written row-major into `counts`.
///
/// # Safety
/// `counts` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn ltde_simulate(
    model: *const LtdeModel,
    steps: usize,
    seed: u64,
    counts: *mut u32,
    len: usize,
) -> LtdeStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if counts.is_null() {
            return Err(null("counts"));
        }
        let n_states = model.env.n_states();
        let need = steps
            .checked_mul(n_states)
            .ok_or_else(|| (LtdeStatus::InvalidArgument, "steps overflow".to_string()))?;
        if len < need {
            return Err((LtdeStatus::BufferTooSmall, format!("need {need} values, got {len}")));
        }
        let cands = model.cfg.candidates(&model.env).map_err(core)?;
        let table = model.cfg.policy.table(&model.env, &cands, seed).map_err(core)?;
        let mut rng = stream(seed, &[tag::SIMULATE]);
        let mut mu = model.cfg.initial.sample(&mut rng);
        let out = std::slice::from_raw_parts_mut(counts, need);
        for row in out.chunks_mut(n_states) {
            row.copy_from_slice(mu.counts());
            let h = table.sample(&mu, &cands, &mut rng);
            mu = model.env.team_sample_step(&mu, &h, &mut rng).map_err(core)?;
        }
        Ok(())
    })
}
