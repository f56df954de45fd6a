//! C ABI over the salvkit core.
//!
//! Every call returns a [`SalvStatus`]; on failure the message is available
//! from [`salv_last_error`] on the calling thread. Handles are opaque and must
//! be released with their matching `_free` function.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use salvkit::dpomath as dm;
use salvkit::frontend::{parse_module, ModuleAst, SourceText};
use salvkit::siggraph::{build_graph, extract_slice, SignalSlice};
use salvkit::verifier::verify_prompt;
use salvkit::SignalId;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SalvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    SliceError = 4,
    DpoError = 5,
    DomainError = 6,
    VerifyError = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// A parsed module together with its source text.
pub struct SalvModule {
    src: SourceText,
    ast: ModuleAst,
}

/// A slice of a module for a set of target signals.
pub struct SalvSlice {
    slice: SignalSlice,
    text: CString,
}

/// Borrowed view of a preference pair's log-probabilities.
/// Masks hold one byte per position, nonzero meaning selected.
#[repr(C)]
pub struct SalvDpoBatch {
    pub w_policy_logps: *const f64,
    pub w_ref_logps: *const f64,
    pub w_mask: *const u8,
    pub w_len: usize,
    pub l_policy_logps: *const f64,
    pub l_ref_logps: *const f64,
    pub l_mask: *const u8,
    pub l_len: usize,
    pub beta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

type Res<T> = Result<T, (SalvStatus, String)>;

fn guarded(f: impl FnOnce() -> Res<()>) -> SalvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SalvStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SalvStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err((SalvStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (SalvStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Res<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err((SalvStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Res<()> {
    if p.is_null() {
        Err((SalvStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn dpo_err(e: dm::DpoError) -> (SalvStatus, String) {
    let status = match e {
        dm::DpoError::DomainError(_) => SalvStatus::DomainError,
        _ => SalvStatus::DpoError,
    };
    (status, e.to_string())
}

/// Parse Verilog `text`; `origin` names it in diagnostics and may be null.
///
/// # Safety
/// `text` and `origin` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salv_module_parse(
    text: *const c_char,
    origin: *const c_char,
    out: *mut *mut SalvModule,
) -> SalvStatus {
    guarded(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let origin = if origin.is_null() { "<ffi>" } else { str_arg(origin, "origin")? };
        let src = SourceText::new(text, origin);
        let ast = parse_module(&src).map_err(|e| (SalvStatus::ParseError, e.render(&src)))?;
        *out = Box::into_raw(Box::new(SalvModule { src, ast }));
        Ok(())
    })
}

/// # Safety
/// `module` must be null or come from [`salv_module_parse`], freed once.
#[no_mangle]
pub unsafe extern "C" fn salv_module_free(module: *mut SalvModule) {
    if !module.is_null() {
        drop(Box::from_raw(module));
    }
}

/// Slice `module` down to the `n_targets` signal names in `targets`.
///
/// # Safety
/// `module` must be a live handle; `targets` must hold `n_targets` C strings.
#[no_mangle]
pub unsafe extern "C" fn salv_slice_extract(
    module: *const SalvModule,
    targets: *const *const c_char,
    n_targets: usize,
    out: *mut *mut SalvSlice,
) -> SalvStatus {
    guarded(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let m = module.as_ref().ok_or((SalvStatus::NullPointer, "module is null".to_string()))?;
        let mut set = BTreeSet::new();
        for &t in slice_arg(targets, n_targets, "targets")? {
            set.insert(SignalId::from(str_arg(t, "target")?));
        }
        let slice = extract_slice(&m.src, &m.ast, &build_graph(&m.ast), &set)
            .map_err(|e| (SalvStatus::SliceError, e.to_string()))?;
        let text = CString::new(slice.text.clone()).map_err(|e| (SalvStatus::SliceError, e.to_string()))?;
        *out = Box::into_raw(Box::new(SalvSlice { slice, text }));
        Ok(())
    })
}

/// Slice text, owned by the handle. Null if `slice` is null.
///
/// # Safety
/// `slice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn salv_slice_text(slice: *const SalvSlice) -> *const c_char {
    slice.as_ref().map_or(ptr::null(), |s| s.text.as_ptr())
}

/// Number of retained source spans, header and `endmodule` included.
///
/// # Safety
/// `slice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn salv_slice_span_count(slice: *const SalvSlice) -> usize {
    slice.as_ref().map_or(0, |s| s.slice.spans.len())
}

/// Byte range `[start, end)` of span `index` in the original source.
///
/// # Safety
/// `slice` must be a live handle; `start` and `end` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salv_slice_span(
    slice: *const SalvSlice,
    index: usize,
    start: *mut usize,
    end: *mut usize,
) -> SalvStatus {
    guarded(|| {
        out_ptr(start, "start")?;
        out_ptr(end, "end")?;
        let s = slice.as_ref().ok_or((SalvStatus::NullPointer, "slice is null".to_string()))?;
        let span = s
            .slice
            .spans
            .get(index)
            .ok_or((SalvStatus::OutOfRange, format!("span {index} of {}", s.slice.spans.len())))?;
        *start = span.start;
        *end = span.end;
        Ok(())
    })
}

/// # Safety
/// `slice` must be null or come from [`salv_slice_extract`], freed once.
#[no_mangle]
pub unsafe extern "C" fn salv_slice_free(slice: *mut SalvSlice) {
    if !slice.is_null() {
        drop(Box::from_raw(slice));
    }
}

/// Masked sum of `policy[t] - reference[t]`.
///
/// # Safety
/// The three arrays must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salv_masked_logratio(
    policy: *const f64,
    reference: *const f64,
    mask: *const u8,
    len: usize,
    out: *mut f64,
) -> SalvStatus {
    guarded(|| {
        out_ptr(out, "out")?;
        let p = slice_arg(policy, len, "policy")?;
        let r = slice_arg(reference, len, "reference")?;
        let m: Vec<bool> = slice_arg(mask, len, "mask")?.iter().map(|&b| b != 0).collect();
        *out = dm::masked_logratio(p, r, &m).map_err(dpo_err)?;
        Ok(())
    })
}

unsafe fn batch_arg(b: *const SalvDpoBatch) -> Res<dm::DpoBatch> {
    let b = b.as_ref().ok_or((SalvStatus::NullPointer, "batch is null".to_string()))?;
    let mask = |p, n, what| -> Res<Vec<bool>> { Ok(slice_arg(p, n, what)?.iter().map(|&x: &u8| x != 0).collect()) };
    Ok(dm::DpoBatch {
        w_policy_logps: slice_arg(b.w_policy_logps, b.w_len, "w_policy_logps")?.to_vec(),
        w_ref_logps: slice_arg(b.w_ref_logps, b.w_len, "w_ref_logps")?.to_vec(),
        l_policy_logps: slice_arg(b.l_policy_logps, b.l_len, "l_policy_logps")?.to_vec(),
        l_ref_logps: slice_arg(b.l_ref_logps, b.l_len, "l_ref_logps")?.to_vec(),
        w_mask: mask(b.w_mask, b.w_len, "w_mask")?,
        l_mask: mask(b.l_mask, b.l_len, "l_mask")?,
        beta: b.beta,
    })
}

/// Loss and margin of one pair. `margin` may be null.
///
/// # Safety
/// `batch` must describe valid arrays; `loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salv_dpo_loss(batch: *const SalvDpoBatch, loss: *mut f64, margin: *mut f64) -> SalvStatus {
    guarded(|| {
        out_ptr(loss, "loss")?;
        let (l, m) = dm::salv_dpo_loss(&batch_arg(batch)?).map_err(dpo_err)?;
        *loss = l;
        if !margin.is_null() {
            *margin = m;
        }
        Ok(())
    })
}

/// Gradient of the loss with respect to the policy log-probabilities, written
/// to `d_w` (`w_len` entries) and `d_l` (`l_len` entries).
///
/// # Safety
/// `batch` must describe valid arrays; the outputs must hold their lengths.
#[no_mangle]
pub unsafe extern "C" fn salv_dpo_grad(batch: *const SalvDpoBatch, d_w: *mut f64, d_l: *mut f64) -> SalvStatus {
    guarded(|| {
        out_ptr(d_w, "d_w")?;
        out_ptr(d_l, "d_l")?;
        let (gw, gl) = dm::salv_dpo_grad(&batch_arg(batch)?).map_err(dpo_err)?;
        ptr::copy_nonoverlapping(gw.as_ptr(), d_w, gw.len());
        ptr::copy_nonoverlapping(gl.as_ptr(), d_l, gl.len());
        Ok(())
    })
}

/// Unbiased pass@k from `n` samples with `c` correct.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salv_pass_at_k(n: u64, c: u64, k: u64, out: *mut f64) -> SalvStatus {
    guarded(|| {
        out_ptr(out, "out")?;
        *out = dm::pass_at_k(dm::PassAtKInput { n, c, k }).map_err(dpo_err)?;
        Ok(())
    })
}

/// Verify candidates against a reference with `n_stimuli` random cycles.
/// On success `*json_out` holds a JSON array of reports, released with
/// [`salv_string_free`].
///
/// # Safety
/// `reference` and each of the `n_candidates` entries must be C strings;
/// `json_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn salv_verify_prompt(
    reference: *const c_char,
    candidates: *const *const c_char,
    n_candidates: usize,
    n_stimuli: usize,
    seed: u64,
    json_out: *mut *mut c_char,
) -> SalvStatus {
    guarded(|| {
        out_ptr(json_out, "json_out")?;
        *json_out = ptr::null_mut();
        let reference = SourceText::new(str_arg(reference, "reference")?, "ref.v");
        let mut cands = Vec::with_capacity(n_candidates);
        for (i, &c) in slice_arg(candidates, n_candidates, "candidates")?.iter().enumerate() {
            cands.push(SourceText::new(str_arg(c, "candidate")?, format!("cand_{i}.v")));
        }
        let reports = verify_prompt(&reference, &cands, n_stimuli, seed)
            .map_err(|e| (SalvStatus::VerifyError, e.to_string()))?;
        let json = serde_json::to_string(&reports).map_err(|e| (SalvStatus::VerifyError, e.to_string()))?;
        *json_out = CString::new(json).map_err(|e| (SalvStatus::VerifyError, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn salv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn salv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn salv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
