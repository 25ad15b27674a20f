//! C ABI over the medqa-eval scoring kernel.
//!
//! Conventions:
//! - every fallible function returns a [`MedqaStatus`] and writes its result
//!   through an out-pointer;
//! - on failure, [`medqa_last_error`] returns a description for the calling
//!   thread;
//! - strings returned by the library are owned by the caller and must be
//!   released with [`medqa_string_free`];
//! - datasets are opaque handles released with [`medqa_dataset_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use medqa_eval::corpus::{parse_dataset, Dataset, QuestionRef};
use medqa_eval::gestalt::{self, Normalization, SimilarityMode, SimilarityVariant};
use medqa_eval::instructgen::parse_pairs;
use medqa_eval::metrics::{eval_question, ScoringOptions, ShotSetting};
use medqa_eval::prompt::{Exemplar, Language, PromptTemplate};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedqaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    OutOfRange = 4,
    InvalidArgument = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedqaVariant {
    Gestalt = 0,
    LcsRatio = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedqaLanguage {
    Ja = 0,
    En = 1,
}

/// Scoring settings. Zero-initialised means gestalt, trim only, no label
/// matching.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MedqaScoringOptions {
    pub variant: MedqaVariant,
    pub nfkc: bool,
    pub accept_label_match: bool,
}

/// Per-question scores.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MedqaEvalResult {
    /// ASCII label of the closest choice, e.g. 'a'.
    pub mapped_choice: c_char,
    pub accuracy_hit: bool,
    pub exact_match_hit: bool,
    pub gestalt_value: f64,
}

/// A parsed dataset.
pub struct MedqaDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(MedqaStatus, String);

type FfiResult<T> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> MedqaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MedqaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            MedqaStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Fail(MedqaStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MedqaStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| Fail(MedqaStatus::NullPointer, format!("{name} is NULL")))
}

unsafe fn dataset_arg<'a>(p: *const MedqaDataset) -> FfiResult<&'a Dataset> {
    p.as_ref()
        .map(|d| &d.inner)
        .ok_or_else(|| Fail(MedqaStatus::NullPointer, "dataset is NULL".into()))
}

fn question_at(d: &Dataset, index: usize) -> FfiResult<&medqa_eval::corpus::Question> {
    d.questions.get(index).ok_or_else(|| {
        Fail(
            MedqaStatus::OutOfRange,
            format!("question index {index} out of range (dataset has {})", d.len()),
        )
    })
}

fn mode(variant: MedqaVariant, nfkc: bool) -> SimilarityMode {
    SimilarityMode::new(
        match variant {
            MedqaVariant::Gestalt => SimilarityVariant::Gestalt,
            MedqaVariant::LcsRatio => SimilarityVariant::LcsRatio,
        },
        if nfkc {
            Normalization::NfkcTrim
        } else {
            Normalization::TrimOnly
        },
    )
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(MedqaStatus::InvalidArgument, "result contains a NUL byte".into()))
}

/// Library version, statically allocated; do not free.
#[no_mangle]
pub extern "C" fn medqa_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Description of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn medqa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn medqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Similarity of two NUL-terminated UTF-8 strings, in [0, 1].
///
/// # Safety
/// `a` and `b` must be valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medqa_similarity(
    a: *const c_char,
    b: *const c_char,
    variant: MedqaVariant,
    nfkc: bool,
    out: *mut f64,
) -> MedqaStatus {
    guard(|| {
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        *out_arg(out, "out")? = gestalt::similarity(a, b, mode(variant, nfkc));
        Ok(())
    })
}

/// Parses a dataset (JSON array or JSON Lines). On success `*out` receives a
/// handle to release with `medqa_dataset_free`.
///
/// # Safety
/// `data` must point to `len` readable bytes; `name` must be a valid C
/// string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medqa_dataset_parse(
    data: *const u8,
    len: usize,
    name: *const c_char,
    out: *mut *mut MedqaDataset,
) -> MedqaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if data.is_null() && len > 0 {
            return Err(Fail(MedqaStatus::NullPointer, "data is NULL".into()));
        }
        let name = str_arg(name, "name")?;
        let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        let inner = parse_dataset(bytes, name).map_err(|e| {
            let detail = match e.record_errors() {
                [] => e.to_string(),
                errs => errs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("; "),
            };
            Fail(MedqaStatus::ParseError, detail)
        })?;
        *out = Box::into_raw(Box::new(MedqaDataset { inner }));
        Ok(())
    })
}

/// Releases a dataset handle. NULL is ignored.
///
/// # Safety
/// `ds` must come from `medqa_dataset_parse` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn medqa_dataset_free(ds: *mut MedqaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of questions; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn medqa_dataset_len(ds: *const MedqaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Label of the choice closest to `response` for question `index`.
///
/// # Safety
/// `ds` must be a live handle, `response` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medqa_closest_choice(
    ds: *const MedqaDataset,
    index: usize,
    response: *const c_char,
    variant: MedqaVariant,
    nfkc: bool,
    out: *mut c_char,
) -> MedqaStatus {
    guard(|| {
        let q = question_at(dataset_arg(ds)?, index)?;
        let response = str_arg(response, "response")?;
        *out_arg(out, "out")? = gestalt::closest_choice(response, q, mode(variant, nfkc)).as_char() as c_char;
        Ok(())
    })
}

/// Scores one response against question `index`. `options` may be NULL for
/// defaults.
///
/// # Safety
/// `ds` must be a live handle, `response` a valid C string, `options` NULL
/// or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medqa_evaluate(
    ds: *const MedqaDataset,
    index: usize,
    response: *const c_char,
    options: *const MedqaScoringOptions,
    out: *mut MedqaEvalResult,
) -> MedqaStatus {
    guard(|| {
        let d = dataset_arg(ds)?;
        let q = question_at(d, index)?;
        let response = str_arg(response, "response")?;
        let opts = match options.as_ref() {
            Some(o) => ScoringOptions {
                mode: mode(o.variant, o.nfkc),
                accept_label_match: o.accept_label_match,
            },
            None => ScoringOptions::default(),
        };
        let r = eval_question(q, d.question_ref(index), response, opts);
        *out_arg(out, "out")? = MedqaEvalResult {
            mapped_choice: r.mapped_choice.as_char() as c_char,
            accuracy_hit: r.accuracy_hit,
            exact_match_hit: r.exact_match_hit,
            gestalt_value: r.gestalt_value,
        };
        Ok(())
    })
}

/// Renders the built-in prompt for question `index`. A negative
/// `exemplar_index` gives a 0-shot prompt; otherwise that question of the
/// same dataset is used as the 1-shot example. `*out` must be freed with
/// `medqa_string_free`.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medqa_render_prompt(
    ds: *const MedqaDataset,
    index: usize,
    language: MedqaLanguage,
    exemplar_index: isize,
    out: *mut *mut c_char,
) -> MedqaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = dataset_arg(ds)?;
        let q = question_at(d, index)?;
        let lang = match language {
            MedqaLanguage::Ja => Language::Ja,
            MedqaLanguage::En => Language::En,
        };
        let mut template = PromptTemplate::builtin(lang);
        let shot = if exemplar_index < 0 {
            ShotSetting::ZeroShot
        } else {
            let e = exemplar_index as usize;
            if e == index {
                return Err(Fail(
                    MedqaStatus::InvalidArgument,
                    "a question cannot be its own exemplar".into(),
                ));
            }
            template = template.with_exemplar(Exemplar::from_question(question_at(d, e)?.clone()));
            ShotSetting::OneShot
        };
        let prompt = template
            .render(q, shot)
            .map_err(|e| Fail(MedqaStatus::InvalidArgument, e.to_string()))?;
        *out = to_c_string(prompt)?;
        Ok(())
    })
}

/// Parses a generation reply into instruction pairs. `*out` receives a JSON
/// object `{"pairs": [...], "rejections": [...], "counts": {...}}` to be
/// freed with `medqa_string_free`.
///
/// # Safety
/// `reply` and `source_ref` must be valid C strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medqa_parse_pairs(
    reply: *const c_char,
    source_ref: *const c_char,
    out: *mut *mut c_char,
) -> MedqaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let parsed = parse_pairs(str_arg(reply, "reply")?, str_arg(source_ref, "source_ref")?);
        let json = serde_json::json!({
            "pairs": parsed.pairs,
            "rejections": parsed.rejections,
            "counts": parsed.counts,
        });
        *out = to_c_string(json.to_string())?;
        Ok(())
    })
}

/// Position of the question with `problem_id`, or -1.
///
/// # Safety
/// `ds` must be NULL or a live handle; `problem_id` NULL or a valid C
/// string.
#[no_mangle]
pub unsafe extern "C" fn medqa_dataset_find(ds: *const MedqaDataset, problem_id: *const c_char) -> isize {
    let (Some(d), Ok(id)) = (ds.as_ref(), str_arg(problem_id, "problem_id")) else {
        return -1;
    };
    d.inner
        .position(&QuestionRef::Id(id.to_owned()))
        .map_or(-1, |i| i as isize)
}
