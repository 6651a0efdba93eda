//! C ABI over `isb-lab`.
//!
//! Every fallible function returns an [`IsbStatus`]. On failure the message
//! is kept per thread and can be copied out with [`isb_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use isb_lab::error::Error;
use isb_lab::harness::{run_experiment, ExperimentConfig};
use isb_lab::isb::{read_records, StateRecord, Strategy};
use isb_lab::nn::{load_checkpoint, Mlp};
use isb_lab::ppo::{compute_gae, GaeConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Shape = 3,
    Numeric = 4,
    Config = 5,
    Io = 6,
    Schema = 7,
    Checkpoint = 8,
    OutOfRange = 9,
    Internal = 10,
    Panic = 11,
}

impl From<&Error> for IsbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape(_) => IsbStatus::Shape,
            Error::Numeric(_) | Error::Degenerate(_) => IsbStatus::Numeric,
            Error::Config(_) | Error::Toml(_) | Error::Json(_) | Error::TaskMismatch { .. } => IsbStatus::Config,
            Error::Io { .. } => IsbStatus::Io,
            Error::Schema(_) => IsbStatus::Schema,
            Error::Checkpoint(_) => IsbStatus::Checkpoint,
            _ => IsbStatus::Internal,
        }
    }
}

/// Experiment configuration.
pub struct IsbConfig(ExperimentConfig);

/// Records of a buffer dump.
pub struct IsbBuffer(Vec<StateRecord>);

/// A feed-forward network loaded from a checkpoint.
pub struct IsbMlp(Mlp);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: IsbStatus, message: impl Into<String>) -> IsbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), IsbStatus>) -> IsbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            IsbStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(IsbStatus::Panic, "panic inside isb-lab"),
    }
}

fn lib_err(e: Error) -> IsbStatus {
    fail(IsbStatus::from(&e), e.to_string())
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, IsbStatus> {
    if p.is_null() {
        return Err(fail(IsbStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(IsbStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], IsbStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(IsbStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], IsbStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(IsbStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, IsbStatus> {
    p.as_ref()
        .ok_or_else(|| fail(IsbStatus::NullPointer, format!("{name} is null")))
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn isb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Generalized advantage estimation over one trajectory. `dones[i]` is
/// nonzero when step `i` ended its episode. Writes `len` values to each of
/// `advantages_out` and `returns_out`.
///
/// # Safety
/// Every pointer must be valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn isb_compute_gae(
    rewards: *const f64,
    values: *const f64,
    dones: *const u8,
    len: usize,
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
    advantages_out: *mut f64,
    returns_out: *mut f64,
) -> IsbStatus {
    guard(|| {
        let rewards = slice(rewards, len, "rewards")?;
        let values = slice(values, len, "values")?;
        let dones: Vec<bool> = slice(dones, len, "dones")?.iter().map(|&d| d != 0).collect();
        let adv_out = slice_mut(advantages_out, len, "advantages_out")?;
        let ret_out = slice_mut(returns_out, len, "returns_out")?;
        let (adv, ret) = compute_gae(
            rewards,
            values,
            &dones,
            bootstrap_value,
            GaeConfig {
                gamma,
                lam: lambda,
                bootstrap_timeouts: false,
            },
        )
        .map_err(lib_err)?;
        adv_out.copy_from_slice(&adv);
        ret_out.copy_from_slice(&ret);
        Ok(())
    })
}

/// Loads and validates a TOML or JSON experiment config.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn isb_config_load(path: *const c_char, out: *mut *mut IsbConfig) -> IsbStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(IsbStatus::NullPointer, "out is null"));
        }
        let cfg = ExperimentConfig::from_path(path_arg(path, "path")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(IsbConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`isb_config_load`].
#[no_mangle]
pub unsafe extern "C" fn isb_config_free(cfg: *mut IsbConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn isb_config_set_seed(cfg: *mut IsbConfig, seed: u64) -> IsbStatus {
    guard(|| {
        let cfg = cfg
            .as_mut()
            .ok_or_else(|| fail(IsbStatus::NullPointer, "cfg is null"))?;
        cfg.0.seed = seed;
        Ok(())
    })
}

/// Sets the strategy by name: vanilla, random, obs, cl, terminal or value.
///
/// # Safety
/// `cfg` must be a live config handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn isb_config_set_strategy(cfg: *mut IsbConfig, name: *const c_char) -> IsbStatus {
    guard(|| {
        let cfg = cfg
            .as_mut()
            .ok_or_else(|| fail(IsbStatus::NullPointer, "cfg is null"))?;
        let name = path_arg(name, "name")?;
        let strategy: Strategy = name.to_string_lossy().parse().map_err(lib_err)?;
        cfg.0.isb.strategy = strategy;
        Ok(())
    })
}

/// Runs an experiment into `out_dir`. On success `final_validation_out`, if
/// non-null, receives the last validation return (NaN when none was taken).
///
/// # Safety
/// `cfg` must be a live config handle, `out_dir` a NUL-terminated string,
/// and `final_validation_out` null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn isb_run_experiment(
    cfg: *const IsbConfig,
    out_dir: *const c_char,
    final_validation_out: *mut f64,
) -> IsbStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let dir = path_arg(out_dir, "out_dir")?;
        let outcome = run_experiment(&cfg.0, dir).map_err(lib_err)?;
        if !final_validation_out.is_null() {
            *final_validation_out = outcome
                .rows
                .iter()
                .rev()
                .find_map(|r| r.validation_return)
                .unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Loads a JSON-lines buffer dump.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn isb_buffer_load(path: *const c_char, out: *mut *mut IsbBuffer) -> IsbStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(IsbStatus::NullPointer, "out is null"));
        }
        let records = read_records(path_arg(path, "path")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(IsbBuffer(records)));
        Ok(())
    })
}

/// # Safety
/// `buf` must be null or a handle from [`isb_buffer_load`].
#[no_mangle]
pub unsafe extern "C" fn isb_buffer_free(buf: *mut IsbBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}

/// Number of records; 0 for a null handle.
///
/// # Safety
/// `buf` must be null or a live buffer handle.
#[no_mangle]
pub unsafe extern "C" fn isb_buffer_len(buf: *const IsbBuffer) -> usize {
    buf.as_ref().map_or(0, |b| b.0.len())
}

/// Copies the observation of record `index` into `out`, which holds `len`
/// doubles. `dim_out`, if non-null, receives the observation width.
///
/// # Safety
/// `buf` must be a live buffer handle, `out` valid for `len` doubles, and
/// `dim_out` null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn isb_buffer_observation(
    buf: *const IsbBuffer,
    index: usize,
    out: *mut f64,
    len: usize,
    dim_out: *mut usize,
) -> IsbStatus {
    guard(|| {
        let buf = handle(buf, "buf")?;
        let rec = buf
            .0
            .get(index)
            .ok_or_else(|| fail(IsbStatus::OutOfRange, format!("index {index} of {}", buf.0.len())))?;
        let obs = &rec.observation;
        if !dim_out.is_null() {
            *dim_out = obs.len();
        }
        if len != obs.len() {
            return Err(fail(
                IsbStatus::Shape,
                format!("observation has {} entries, buffer holds {len}", obs.len()),
            ));
        }
        slice_mut(out, len, "out")?.copy_from_slice(obs);
        Ok(())
    })
}

/// Episode step at which record `index` was visited.
///
/// # Safety
/// `buf` must be a live buffer handle and `step_out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn isb_buffer_episode_step(buf: *const IsbBuffer, index: usize, step_out: *mut u32) -> IsbStatus {
    guard(|| {
        let buf = handle(buf, "buf")?;
        let rec = buf
            .0
            .get(index)
            .ok_or_else(|| fail(IsbStatus::OutOfRange, format!("index {index} of {}", buf.0.len())))?;
        if step_out.is_null() {
            return Err(fail(IsbStatus::NullPointer, "step_out is null"));
        }
        *step_out = rec.episode_step;
        Ok(())
    })
}

/// Loads a network checkpoint written by a run.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn isb_mlp_load(path: *const c_char, out: *mut *mut IsbMlp) -> IsbStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(IsbStatus::NullPointer, "out is null"));
        }
        let mlp = load_checkpoint(path_arg(path, "path")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(IsbMlp(mlp)));
        Ok(())
    })
}

/// # Safety
/// `mlp` must be null or a handle from [`isb_mlp_load`].
#[no_mangle]
pub unsafe extern "C" fn isb_mlp_free(mlp: *mut IsbMlp) {
    if !mlp.is_null() {
        drop(Box::from_raw(mlp));
    }
}

/// Input and output widths of the network.
///
/// # Safety
/// `mlp` must be a live handle; the out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn isb_mlp_dims(mlp: *const IsbMlp, input_out: *mut usize, output_out: *mut usize) -> IsbStatus {
    guard(|| {
        let mlp = handle(mlp, "mlp")?;
        if input_out.is_null() || output_out.is_null() {
            return Err(fail(IsbStatus::NullPointer, "dimension output is null"));
        }
        *input_out = mlp.0.input_dim();
        *output_out = mlp.0.output_dim();
        Ok(())
    })
}

/// Forward pass. `input` holds `input_len` doubles, `output` `output_len`.
///
/// # Safety
/// Pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn isb_mlp_forward(
    mlp: *const IsbMlp,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> IsbStatus {
    guard(|| {
        let mlp = handle(mlp, "mlp")?;
        if output_len != mlp.0.output_dim() {
            return Err(fail(
                IsbStatus::Shape,
                format!("output holds {output_len}, network emits {}", mlp.0.output_dim()),
            ));
        }
        let y = mlp.0.forward(slice(input, input_len, "input")?).map_err(lib_err)?;
        slice_mut(output, output_len, "output")?.copy_from_slice(&y);
        Ok(())
    })
}
