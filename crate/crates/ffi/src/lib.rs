//! C ABI over the pure parts of `methodscan`: agreement metrics, voting,
//! response parsing, prompt rendering, chunking, bibliography parsing and
//! footprint arithmetic.
//!
//! Every fallible function returns an [`MsStatus`]; on failure the message
//! is available from [`ms_last_error_message`] on the same thread. Strings
//! handed out by this library are owned by the caller and released with
//! [`ms_string_free`]. Handles are released with their `_free` function.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::Path;
use std::ptr;

use methodscan::categorize::{self, Decision, TieRule, Verdict};
use methodscan::corpus::{self, CitationRecord};
use methodscan::extraction;
use methodscan::footprint::{self, HardwareProfile};
use methodscan::metrics::{self, LabelSeries};
use methodscan::prompts::{PromptRegistry, TemplateId};
use methodscan::retrieve::{self, Chunk, ChunkingConfig, TokenUnit};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Io = 5,
    Panic = 99,
}

/// Verdict codes shared by voting and response parsing.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsVerdict {
    No = 0,
    Yes = 1,
    Unparseable = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsTokenUnit {
    Word = 0,
    Character = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MsVoteTally {
    pub yes_count: u32,
    pub no_count: u32,
    /// `MS_VERDICT_YES` or `MS_VERDICT_NO`.
    pub decision: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsHardwareProfile {
    pub cores: u32,
    /// Watts per core.
    pub power_per_core: f64,
    /// Fraction in [0, 1].
    pub usage: f64,
    /// GB.
    pub memory: f64,
    /// Watts per GB.
    pub memory_power: f64,
    pub pue: f64,
}

pub struct MsPromptRegistry(PromptRegistry);

pub struct MsChunker(ChunkingConfig);

pub struct MsChunks(Vec<Chunk>);

pub struct MsBibliography {
    records: Vec<CitationRecord>,
    issues: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MsStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: MsStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()> + UnwindSafe) -> MsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(f) {
        Ok(Ok(())) => MsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside methodscan");
            MsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(MsStatus::NullPointer, format!("{name} is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(MsStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .map_or_else(|| fail(MsStatus::NullPointer, format!("{name} is NULL")), Ok)
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .map_or_else(|| fail(MsStatus::NullPointer, format!("{name} is NULL")), Ok)
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(MsStatus::NullPointer, format!("{name} is NULL"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

fn invalid(e: methodscan::Error) -> Failure {
    Failure(MsStatus::InvalidArgument, e.to_string())
}

fn decision(code: i32, name: &str) -> FfiResult<Decision> {
    match code {
        0 => Ok(Decision::No),
        1 => Ok(Decision::Yes),
        other => fail(
            MsStatus::InvalidArgument,
            format!("{name}: label {other} is neither 0 nor 1"),
        ),
    }
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::No => MsVerdict::No as i32,
        Verdict::Yes => MsVerdict::Yes as i32,
        Verdict::Unparseable => MsVerdict::Unparseable as i32,
    }
}

/// Message of the last failed call on this thread, or NULL. Free with
/// `ms_string_free`.
#[no_mangle]
pub extern "C" fn ms_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Cohen's kappa of two label series (0 = No, 1 = Yes) of length `len`.
///
/// # Safety
/// `a` and `b` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_cohen_kappa(a: *const i32, b: *const i32, len: usize, out: *mut f64) -> MsStatus {
    guard(|| {
        let a = slice_arg(a, len, "a")?;
        let b = slice_arg(b, len, "b")?;
        let out = out_arg(out, "out")?;
        let sa = LabelSeries::from_labels(a.iter().map(|&x| decision(x, "a")).collect::<FfiResult<_>>()?);
        let sb = LabelSeries::from_labels(b.iter().map(|&x| decision(x, "b")).collect::<FfiResult<_>>()?);
        *out = metrics::cohen_kappa(&sa, &sb).map_err(invalid)?;
        Ok(())
    })
}

/// Hard majority over `len` verdict codes; ties go to Yes when `tie_yes` is
/// non-zero.
///
/// # Safety
/// `verdicts` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_majority_vote(
    verdicts: *const i32,
    len: usize,
    tie_yes: i32,
    out: *mut MsVoteTally,
) -> MsStatus {
    guard(|| {
        let codes = slice_arg(verdicts, len, "verdicts")?;
        let out = out_arg(out, "out")?;
        let vs: Vec<Verdict> = codes
            .iter()
            .map(|&c| match c {
                0 => Ok(Verdict::No),
                1 => Ok(Verdict::Yes),
                2 => Ok(Verdict::Unparseable),
                other => fail(MsStatus::InvalidArgument, format!("unknown verdict code {other}")),
            })
            .collect::<FfiResult<_>>()?;
        let rule = if tie_yes != 0 { TieRule::Yes } else { TieRule::No };
        let t = categorize::majority_vote(&vs, rule).map_err(invalid)?;
        *out = MsVoteTally {
            yes_count: t.yes_count,
            no_count: t.no_count,
            decision: match t.decision {
                Decision::Yes => MsVerdict::Yes as i32,
                Decision::No => MsVerdict::No as i32,
            },
        };
        Ok(())
    })
}

/// Answer text with leading answer markers removed.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_strip_answer_markers(text: *const c_char, out: *mut *mut c_char) -> MsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = c_string(extraction::strip_answer_markers(text));
        Ok(())
    })
}

/// Verdict code of a categorical-conversion reply.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_parse_categorical_response(text: *const c_char, out: *mut i32) -> MsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = verdict_code(categorize::parse_categorical_response(text));
        Ok(())
    })
}

// ---------------------------------------------------------------- prompts

/// The bundled templates.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_prompt_registry_builtin(out: *mut *mut MsPromptRegistry) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(MsPromptRegistry(PromptRegistry::builtin())));
        Ok(())
    })
}

/// Bundled templates overridden by `<name>.txt` files in `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_prompt_registry_from_dir(dir: *const c_char, out: *mut *mut MsPromptRegistry) -> MsStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let out = out_arg(out, "out")?;
        let reg = PromptRegistry::with_overrides(Path::new(dir)).map_err(|e| Failure(MsStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(MsPromptRegistry(reg)));
        Ok(())
    })
}

/// Render template `name` (e.g. "keyword-extraction") with `n` key/value
/// bindings.
///
/// # Safety
/// `keys` and `values` must each hold `n` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ms_prompt_registry_render(
    registry: *const MsPromptRegistry,
    name: *const c_char,
    keys: *const *const c_char,
    values: *const *const c_char,
    n: usize,
    out: *mut *mut c_char,
) -> MsStatus {
    guard(|| {
        let reg = handle(registry, "registry")?;
        let name = str_arg(name, "name")?;
        let keys = slice_arg(keys, n, "keys")?;
        let values = slice_arg(values, n, "values")?;
        let out = out_arg(out, "out")?;
        let id: TemplateId = name
            .parse()
            .or_else(|_| fail(MsStatus::NotFound, format!("unknown template `{name}`")))?;
        let mut bindings = HashMap::new();
        for (k, v) in keys.iter().zip(values) {
            bindings.insert(str_arg(*k, "key")?, str_arg(*v, "value")?);
        }
        *out = c_string(&reg.0.render(id, &bindings).map_err(invalid)?);
        Ok(())
    })
}

/// # Safety
/// `registry` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ms_prompt_registry_free(registry: *mut MsPromptRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

// ---------------------------------------------------------------- chunker

/// Windows of `chunk_size` tokens sharing `overlap` tokens; `unit` is an
/// `MsTokenUnit`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_chunker_new(
    chunk_size: usize,
    overlap: usize,
    unit: i32,
    out: *mut *mut MsChunker,
) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let unit = match unit {
            u if u == MsTokenUnit::Word as i32 => TokenUnit::WhitespaceWord,
            u if u == MsTokenUnit::Character as i32 => TokenUnit::Character,
            other => return fail(MsStatus::InvalidArgument, format!("unknown token unit {other}")),
        };
        let cfg = ChunkingConfig::new(chunk_size, overlap, unit).map_err(invalid)?;
        *out = Box::into_raw(Box::new(MsChunker(cfg)));
        Ok(())
    })
}

/// Split `text` into overlapping windows.
///
/// # Safety
/// `chunker` must be a live handle, `text` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ms_chunker_split(
    chunker: *const MsChunker,
    text: *const c_char,
    out: *mut *mut MsChunks,
) -> MsStatus {
    guard(|| {
        let ch = handle(chunker, "chunker")?;
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let chunks = retrieve::chunk_document("", text, &ch.0).map_err(invalid)?;
        *out = Box::into_raw(Box::new(MsChunks(chunks)));
        Ok(())
    })
}

/// # Safety
/// `chunker` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ms_chunker_free(chunker: *mut MsChunker) {
    if !chunker.is_null() {
        drop(Box::from_raw(chunker));
    }
}

/// Number of chunks, 0 for NULL.
///
/// # Safety
/// `chunks` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_chunks_len(chunks: *const MsChunks) -> usize {
    chunks.as_ref().map_or(0, |c| c.0.len())
}

/// Token offset, token count and text of chunk `index`. Any output pointer
/// may be NULL.
///
/// # Safety
/// `chunks` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_chunks_get(
    chunks: *const MsChunks,
    index: usize,
    start: *mut usize,
    length: *mut usize,
    text: *mut *mut c_char,
) -> MsStatus {
    guard(|| {
        let chunks = handle(chunks, "chunks")?;
        let Some(c) = chunks.0.get(index) else {
            return fail(MsStatus::NotFound, format!("chunk {index} of {}", chunks.0.len()));
        };
        if let Some(s) = start.as_mut() {
            *s = c.start;
        }
        if let Some(l) = length.as_mut() {
            *l = c.length;
        }
        if let Some(t) = text.as_mut() {
            *t = c_string(&c.text);
        }
        Ok(())
    })
}

/// # Safety
/// `chunks` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ms_chunks_free(chunks: *mut MsChunks) {
    if !chunks.is_null() {
        drop(Box::from_raw(chunks));
    }
}

// ----------------------------------------------------------- bibliography

/// Parse BibTeX text. Entries without a DOI are counted as issues.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_bibliography_parse(text: *const c_char, out: *mut *mut MsBibliography) -> MsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let bib = corpus::parse_bibliography(text);
        *out = Box::into_raw(Box::new(MsBibliography {
            records: bib.records,
            issues: bib.issues.len(),
        }));
        Ok(())
    })
}

/// Append the records of `other` to `bib`.
///
/// # Safety
/// Both handles must be live and distinct.
#[no_mangle]
pub unsafe extern "C" fn ms_bibliography_extend(bib: *mut MsBibliography, other: *const MsBibliography) -> MsStatus {
    guard(|| {
        let other = handle(other, "other")?;
        let bib = out_arg(bib, "bib")?;
        bib.records.extend(other.records.iter().cloned());
        bib.issues += other.issues;
        Ok(())
    })
}

/// Keep the first record per DOI; returns how many were removed.
///
/// # Safety
/// `bib` must be a live handle; `removed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ms_bibliography_dedupe(bib: *mut MsBibliography, removed: *mut usize) -> MsStatus {
    guard(|| {
        let bib = out_arg(bib, "bib")?;
        let before = bib.records.len();
        bib.records = corpus::dedupe_by_doi(std::mem::take(&mut bib.records));
        if let Some(r) = removed.as_mut() {
            *r = before - bib.records.len();
        }
        Ok(())
    })
}

/// # Safety
/// `bib` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_bibliography_len(bib: *const MsBibliography) -> usize {
    bib.as_ref().map_or(0, |b| b.records.len())
}

/// # Safety
/// `bib` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_bibliography_issue_count(bib: *const MsBibliography) -> usize {
    bib.as_ref().map_or(0, |b| b.issues)
}

/// Normalized DOI of record `index`.
///
/// # Safety
/// `bib` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_bibliography_doi(
    bib: *const MsBibliography,
    index: usize,
    out: *mut *mut c_char,
) -> MsStatus {
    guard(|| {
        let bib = handle(bib, "bib")?;
        let out = out_arg(out, "out")?;
        let Some(r) = bib.records.get(index) else {
            return fail(MsStatus::NotFound, format!("record {index} of {}", bib.records.len()));
        };
        *out = c_string(&r.doi);
        Ok(())
    })
}

/// # Safety
/// `bib` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ms_bibliography_free(bib: *mut MsBibliography) {
    if !bib.is_null() {
        drop(Box::from_raw(bib));
    }
}

// -------------------------------------------------------------- footprint

/// 48-core Xeon Platinum 9242 defaults.
#[no_mangle]
pub extern "C" fn ms_hardware_xeon_platinum_9242() -> MsHardwareProfile {
    let p = HardwareProfile::xeon_platinum_9242();
    MsHardwareProfile {
        cores: p.cores,
        power_per_core: p.power_per_core,
        usage: p.usage,
        memory: p.memory,
        memory_power: p.memory_power,
        pue: p.pue,
    }
}

/// kWh for `runtime_h` hours on `profile`.
///
/// # Safety
/// `profile` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ms_estimate_energy(
    runtime_h: f64,
    profile: *const MsHardwareProfile,
    out: *mut f64,
) -> MsStatus {
    guard(|| {
        let p = handle(profile, "profile")?;
        let out = out_arg(out, "out")?;
        if !(runtime_h >= 0.0) {
            return fail(MsStatus::InvalidArgument, "runtime must be non-negative");
        }
        let profile = HardwareProfile {
            name: "ffi".into(),
            cores: p.cores,
            power_per_core: p.power_per_core,
            usage: p.usage,
            memory: p.memory,
            memory_power: p.memory_power,
            pue: p.pue,
        };
        profile.validate().map_err(invalid)?;
        *out = footprint::estimate_energy(runtime_h, &profile);
        Ok(())
    })
}

/// kg CO2e for `energy_kwh` at `intensity` kg/kWh.
#[no_mangle]
pub extern "C" fn ms_estimate_carbon(energy_kwh: f64, intensity: f64) -> f64 {
    footprint::estimate_carbon(energy_kwh, intensity)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_to_tree_months(carbon_kg: f64, tree_month_constant: f64, out: *mut f64) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = footprint::to_tree_months(carbon_kg, tree_month_constant).map_err(invalid)?;
        Ok(())
    })
}

/// Default carbon intensity, kg CO2e per kWh.
#[no_mangle]
pub extern "C" fn ms_default_location_intensity() -> f64 {
    footprint::DEFAULT_LOCATION_INTENSITY
}

/// Default monthly sequestration of one tree, kg CO2e.
#[no_mangle]
pub extern "C" fn ms_default_tree_month_constant() -> f64 {
    footprint::DEFAULT_TREE_MONTH_CONSTANT
}
