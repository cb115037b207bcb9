//! C ABI over `negcov`.
//!
//! Every fallible function returns a [`NegcovStatus`] and writes results
//! through out-pointers. On failure the message is kept per thread and can be
//! read with [`negcov_last_error`]. Handles are opaque and must be released
//! with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use negcov::example::{self, ExampleWorld};
use negcov::losses::{self, LossReport};
use negcov::theory::{self, Coefficient};
use negcov::{Error, LatentModel, LossKind, Representation};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegcovStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidValue = 3,
    Parse = 4,
    NotFound = 5,
    DegenerateInput = 6,
    BudgetExceeded = 7,
    AllBatchesSkipped = 8,
    Io = 9,
    InvalidUtf8 = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegcovLossKind {
    Hinge = 0,
    Logistic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegcovCoefficient {
    /// `max(1, ·)` inside the coefficient.
    Max = 0,
    /// `⌈·⌉` inside the coefficient.
    Ceiled = 1,
}

/// Loss values for one `k`. `stderr` fields are NaN for exact results.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegcovLoss {
    pub k: usize,
    pub nce_loss: f64,
    pub collision_free_loss: f64,
    pub stderr: f64,
    pub collision_free_stderr: f64,
}

/// Opaque latent class model.
pub struct NegcovModel(LatentModel);

/// Opaque representation table.
pub struct NegcovRepresentation(Representation);

/// Opaque paired-class example world.
pub struct NegcovExampleWorld(ExampleWorld);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> NegcovStatus {
    match err {
        Error::NotFound(_) => NegcovStatus::NotFound,
        Error::DegenerateInput(_) => NegcovStatus::DegenerateInput,
        Error::InvalidValue(_) => NegcovStatus::InvalidValue,
        Error::InvalidArgument(_) => NegcovStatus::InvalidArgument,
        Error::BudgetExceeded { .. } => NegcovStatus::BudgetExceeded,
        Error::AllBatchesSkipped { .. } => NegcovStatus::AllBatchesSkipped,
        Error::Io { .. } => NegcovStatus::Io,
        Error::Parse { .. } => NegcovStatus::Parse,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NegcovStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NegcovStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(name))) => {
            set_last_error(format!("null pointer: {name}"));
            NegcovStatus::NullPointer
        }
        Ok(Err(Fail::Utf8(name))) => {
            set_last_error(format!("{name} is not valid UTF-8"));
            NegcovStatus::InvalidUtf8
        }
        Err(_) => {
            set_last_error("internal panic".into());
            NegcovStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(name))
}

fn kind(k: NegcovLossKind) -> LossKind {
    match k {
        NegcovLossKind::Hinge => LossKind::Hinge,
        NegcovLossKind::Logistic => LossKind::Logistic,
    }
}

fn to_c(r: &LossReport) -> NegcovLoss {
    NegcovLoss {
        k: r.k,
        nce_loss: r.nce_loss,
        collision_free_loss: r.collision_free_loss,
        stderr: r.stderr.unwrap_or(f64::NAN),
        collision_free_stderr: r.collision_free_stderr.unwrap_or(f64::NAN),
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn negcov_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn negcov_status_name(status: NegcovStatus) -> *const c_char {
    let s: &'static CStr = match status {
        NegcovStatus::Ok => c"ok",
        NegcovStatus::NullPointer => c"null pointer",
        NegcovStatus::InvalidArgument => c"invalid argument",
        NegcovStatus::InvalidValue => c"invalid value",
        NegcovStatus::Parse => c"parse error",
        NegcovStatus::NotFound => c"not found",
        NegcovStatus::DegenerateInput => c"degenerate input",
        NegcovStatus::BudgetExceeded => c"budget exceeded",
        NegcovStatus::AllBatchesSkipped => c"all batches skipped",
        NegcovStatus::Io => c"i/o error",
        NegcovStatus::InvalidUtf8 => c"invalid utf-8",
        NegcovStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Collision probability for `num_classes` prior weights and `k` negatives.
///
/// # Safety
/// `prior` must point to `num_classes` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_tau(prior: *const f64, num_classes: usize, k: usize, out_tau: *mut f64) -> NegcovStatus {
    guard(|| {
        let p = slice(prior, num_classes, "prior")?;
        let o = out(out_tau, "out_tau")?;
        if p.is_empty() {
            return Err(Error::InvalidArgument("prior is empty".into()).into());
        }
        *o = theory::tau(p, k);
        Ok(())
    })
}

/// Harmonic number `H_t` for `t ≥ 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_harmonic(t: usize, out_value: *mut f64) -> NegcovStatus {
    guard(|| {
        let o = out(out_value, "out_value")?;
        *o = theory::harmonic(t)?;
        Ok(())
    })
}

/// Transfer coefficient for a uniform prior over `num_classes` classes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_alpha_uniform(num_classes: usize, k: usize, out_alpha: *mut f64) -> NegcovStatus {
    guard(|| {
        let o = out(out_alpha, "out_alpha")?;
        *o = theory::alpha_uniform(num_classes, k)?;
        Ok(())
    })
}

/// Transfer coefficient for an arbitrary prior.
///
/// # Safety
/// `prior` must point to `num_classes` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_alpha_general(
    prior: *const f64,
    num_classes: usize,
    k: usize,
    variant: NegcovCoefficient,
    out_alpha: *mut f64,
) -> NegcovStatus {
    guard(|| {
        let p = slice(prior, num_classes, "prior")?;
        let o = out(out_alpha, "out_alpha")?;
        let v = match variant {
            NegcovCoefficient::Max => Coefficient::Max,
            NegcovCoefficient::Ceiled => Coefficient::Ceiled,
        };
        *o = theory::alpha_general(p, k, v)?;
        Ok(())
    })
}

/// Predicted minimiser of the uniform transfer coefficient.
#[no_mangle]
pub extern "C" fn negcov_optimal_k_transfer(num_classes: usize) -> f64 {
    theory::optimal_k_transfer(num_classes)
}

/// Predicted minimiser of the refined coefficient.
#[no_mangle]
pub extern "C" fn negcov_optimal_k_refined(num_classes: usize) -> f64 {
    theory::optimal_k_refined(num_classes)
}

/// Closed-form hinge NCE loss of the collapsed representation in the paired
/// example.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_example_f1_loss(num_classes: usize, k: usize, out_loss: *mut f64) -> NegcovStatus {
    guard(|| {
        let o = out(out_loss, "out_loss")?;
        if num_classes < 2 || !num_classes.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("N must be even and ≥ 2 (got {num_classes})")).into());
        }
        *o = example::f1_nce_closed_form(num_classes, k);
        Ok(())
    })
}

/// Lower and upper bounds on the hinge NCE loss of the scaled representation
/// in the paired example.
///
/// # Safety
/// Both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_example_f2_bounds(
    num_classes: usize,
    k: usize,
    epsilon: f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> NegcovStatus {
    guard(|| {
        let lo = out(out_lower, "out_lower")?;
        let hi = out(out_upper, "out_upper")?;
        (*lo, *hi) = example::f2_nce_bounds(num_classes, k, epsilon)?;
        Ok(())
    })
}

/// Parses a model from its text format.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_model_from_text(text_ptr: *const c_char, out_model: *mut *mut NegcovModel) -> NegcovStatus {
    guard(|| {
        let s = text(text_ptr, "text")?;
        let o = out(out_model, "out_model")?;
        let m = LatentModel::from_text(s, "<ffi>")?;
        *o = Box::into_raw(Box::new(NegcovModel(m)));
        Ok(())
    })
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_model_load(path: *const c_char, out_model: *mut *mut NegcovModel) -> NegcovStatus {
    guard(|| {
        let s = text(path, "path")?;
        let o = out(out_model, "out_model")?;
        let m = LatentModel::load(Path::new(s))?;
        *o = Box::into_raw(Box::new(NegcovModel(m)));
        Ok(())
    })
}

/// Number of latent classes, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn negcov_model_num_classes(model: *const NegcovModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_classes())
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn negcov_model_free(model: *mut NegcovModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds a table representation: row `i` of `vectors` (row-major, `count × dim`)
/// belongs to point `ids[i]`.
///
/// # Safety
/// `ids` must point to `count` ids, `vectors` to `count * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn negcov_representation_table(
    dim: usize,
    ids: *const u64,
    vectors: *const f64,
    count: usize,
    out_rep: *mut *mut NegcovRepresentation,
) -> NegcovStatus {
    guard(|| {
        let id = slice(ids, count, "ids")?;
        let total = count
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidArgument("count * dim overflows".into()))?;
        let v = slice(vectors, total, "vectors")?;
        let o = out(out_rep, "out_rep")?;
        let rows = id.iter().enumerate().map(|(i, &p)| (p, v[i * dim..(i + 1) * dim].to_vec()));
        let rep = Representation::table(dim, rows)?;
        *o = Box::into_raw(Box::new(NegcovRepresentation(rep)));
        Ok(())
    })
}

/// # Safety
/// `rep` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn negcov_representation_free(rep: *mut NegcovRepresentation) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}

/// Exact NCE loss by enumeration; `budget` 0 selects the library default.
///
/// # Safety
/// Handles must be live; `out_loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_nce_loss_exact(
    model: *const NegcovModel,
    rep: *const NegcovRepresentation,
    k: usize,
    loss_kind: NegcovLossKind,
    budget: u64,
    out_loss: *mut NegcovLoss,
) -> NegcovStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let r = borrow(rep, "rep")?;
        let o = out(out_loss, "out_loss")?;
        let budget = if budget == 0 { losses::DEFAULT_BUDGET } else { budget };
        *o = to_c(&losses::nce_loss_exact(&m.0, &r.0, k, kind(loss_kind), budget)?);
        Ok(())
    })
}

/// Monte-Carlo NCE loss; deterministic for a given seed.
///
/// # Safety
/// Handles must be live; `out_loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_nce_loss_mc(
    model: *const NegcovModel,
    rep: *const NegcovRepresentation,
    k: usize,
    loss_kind: NegcovLossKind,
    num_samples: u64,
    seed: u64,
    out_loss: *mut NegcovLoss,
) -> NegcovStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let r = borrow(rep, "rep")?;
        let o = out(out_loss, "out_loss")?;
        *o = to_c(&losses::nce_loss_mc(&m.0, &r.0, k, kind(loss_kind), num_samples, seed)?);
        Ok(())
    })
}

/// Paired-class world with `num_classes` (even) classes and scale `epsilon`.
///
/// # Safety
/// `out_world` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_example_world_new(
    num_classes: usize,
    epsilon: f64,
    out_world: *mut *mut NegcovExampleWorld,
) -> NegcovStatus {
    guard(|| {
        let o = out(out_world, "out_world")?;
        *o = Box::into_raw(Box::new(NegcovExampleWorld(ExampleWorld::new(num_classes, epsilon)?)));
        Ok(())
    })
}

/// Copies the world's model into a new handle owned by the caller.
///
/// # Safety
/// `world` must be live; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_example_world_model(
    world: *const NegcovExampleWorld,
    out_model: *mut *mut NegcovModel,
) -> NegcovStatus {
    guard(|| {
        let w = borrow(world, "world")?;
        let o = out(out_model, "out_model")?;
        *o = Box::into_raw(Box::new(NegcovModel(w.0.model().clone())));
        Ok(())
    })
}

/// Copies representation 1 (collapsed) or 2 (scaled) into a new handle.
///
/// # Safety
/// `world` must be live; `out_rep` must be writable.
#[no_mangle]
pub unsafe extern "C" fn negcov_example_world_representation(
    world: *const NegcovExampleWorld,
    which: u32,
    out_rep: *mut *mut NegcovRepresentation,
) -> NegcovStatus {
    guard(|| {
        let w = borrow(world, "world")?;
        let o = out(out_rep, "out_rep")?;
        let rep = match which {
            1 => w.0.f1().clone(),
            2 => w.0.f2().clone(),
            _ => return Err(Error::InvalidArgument(format!("representation must be 1 or 2 (got {which})")).into()),
        };
        *o = Box::into_raw(Box::new(NegcovRepresentation(rep)));
        Ok(())
    })
}

/// # Safety
/// `world` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn negcov_example_world_free(world: *mut NegcovExampleWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}
