//! C ABI over the syncdialog codec, n-gram predictor and generation loop.
//!
//! Every function returns an [`SdStatus`]. On failure a message is kept per
//! thread and can be read with [`sd_last_error_message`]. Objects are opaque
//! handles created by `*_new`/`*_load`/`*_parse` functions and released with
//! the matching `*_free`. Output arrays use the caller-buffer convention: the
//! required length is always written to `out_len`, and
//! [`SdStatus::BufferTooSmall`] is returned when `cap` is not enough.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use syncdialog::interaction::{continue_dialogue, GenerationConfig, OverflowPolicy};
use syncdialog::predictor::{perplexity, NgramModel, Predictor, SamplerConfig};
use syncdialog::tokens::{chunk_streams, deduplicate, flatten, interpolate, parse, DedupDialogue, Padding, Speaker, TokenStream, Vocab};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Codec = 3,
    Model = 4,
    Generation = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Token vocabulary: unit count, frame length and silence units.
pub struct SdVocab(Vocab);

/// Deduplicated chunked dialogue.
pub struct SdDialogue(DedupDialogue);

/// Add-alpha n-gram model.
pub struct SdModel(NgramModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SdStatus, String);

impl Failure {
    fn new(status: SdStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SdStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(SdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(SdStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(SdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize, out_len: *mut usize) -> FfiResult {
    *out_ptr(out_len, "out_len")? = src.len();
    if src.len() > cap {
        return Err(Failure::new(
            SdStatus::BufferTooSmall,
            format!("need {} elements, buffer holds {cap}", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(Failure::new(SdStatus::NullPointer, "buffer is null"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length without the NUL, or 0
/// when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sd_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// # Safety
/// `silence` must point to `n_silence` tokens; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_vocab_new(
    size: u32,
    frame_ms: u32,
    silence: *const u32,
    n_silence: usize,
    out: *mut *mut SdVocab,
) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let silence = slice_in(silence, n_silence, "silence")?.to_vec();
        let v = Vocab::new(size, frame_ms, silence).map_err(|e| Failure::new(SdStatus::InvalidArgument, e))?;
        *out = boxed(SdVocab(v));
        Ok(())
    })
}

/// The default vocabulary: 501 units, 40 ms frames, silence unit 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_vocab_default(out: *mut *mut SdVocab) -> SdStatus {
    guard(|| {
        *out_ptr(out, "out")? = boxed(SdVocab(Vocab::default()));
        Ok(())
    })
}

/// # Safety
/// `v` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_vocab_free(v: *mut SdVocab) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Writes the ids of the two speaker tags and the extended vocabulary size.
///
/// # Safety
/// `v` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_vocab_tags(
    v: *const SdVocab,
    tag_s0: *mut u32,
    tag_s1: *mut u32,
    extended_size: *mut usize,
) -> SdStatus {
    guard(|| {
        let v = &obj(v, "vocab")?.0;
        *out_ptr(tag_s0, "tag_s0")? = v.tag_s0();
        *out_ptr(tag_s1, "tag_s1")? = v.tag_s1();
        *out_ptr(extended_size, "extended_size")? = v.extended_size();
        Ok(())
    })
}

/// Frames per chunk, or `InvalidArgument` if `chunk_ms` is not a positive
/// multiple of the frame length.
///
/// # Safety
/// `v` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_vocab_frames_per_chunk(v: *const SdVocab, chunk_ms: u32, out: *mut usize) -> SdStatus {
    guard(|| {
        let v = &obj(v, "vocab")?.0;
        *out_ptr(out, "out")? = v
            .frames_per_chunk(chunk_ms)
            .map_err(|e| Failure::new(SdStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Chunks and deduplicates two full-rate streams of `n_frames` tokens each.
/// With `pad` non-zero a partial last chunk is filled with silence,
/// otherwise it is an error.
///
/// # Safety
/// `s0` and `s1` must point to `n_frames` tokens; `v` must be live; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_dialogue_from_streams(
    v: *const SdVocab,
    s0: *const u32,
    s1: *const u32,
    n_frames: usize,
    chunk_ms: u32,
    pad: bool,
    out: *mut *mut SdDialogue,
) -> SdStatus {
    guard(|| {
        let v = &obj(v, "vocab")?.0;
        let out = out_ptr(out, "out")?;
        let codec = |e: syncdialog::tokens::CodecError| Failure::new(SdStatus::Codec, e);
        let a = TokenStream::new(Speaker::S0, slice_in(s0, n_frames, "s0")?.to_vec(), v).map_err(codec)?;
        let b = TokenStream::new(Speaker::S1, slice_in(s1, n_frames, "s1")?.to_vec(), v).map_err(codec)?;
        let padding = if pad { Padding::Pad } else { Padding::Reject };
        let c = chunk_streams(&a, &b, v, chunk_ms, padding).map_err(codec)?;
        *out = boxed(SdDialogue(deduplicate(&c)));
        Ok(())
    })
}

/// Parses a wire-format token sequence.
///
/// # Safety
/// `wire` must point to `len` tokens; `v` must be live; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sd_dialogue_parse(
    v: *const SdVocab,
    wire: *const u32,
    len: usize,
    chunk_ms: u32,
    out: *mut *mut SdDialogue,
) -> SdStatus {
    guard(|| {
        let v = &obj(v, "vocab")?.0;
        let out = out_ptr(out, "out")?;
        let d = parse(slice_in(wire, len, "wire")?, v, chunk_ms).map_err(|e| Failure::new(SdStatus::Codec, e))?;
        *out = boxed(SdDialogue(d));
        Ok(())
    })
}

/// # Safety
/// `d` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_dialogue_free(d: *mut SdDialogue) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_dialogue_num_chunks(d: *const SdDialogue, out: *mut usize) -> SdStatus {
    guard(|| {
        *out_ptr(out, "out")? = obj(d, "dialogue")?.0.len();
        Ok(())
    })
}

/// Writes the wire-format token sequence.
///
/// # Safety
/// `d` must be live; `buf` must hold `cap` tokens; `out_len` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sd_dialogue_flatten(
    d: *const SdDialogue,
    buf: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> SdStatus {
    guard(|| copy_out(&flatten(&obj(d, "dialogue")?.0), buf, cap, out_len))
}

/// Rebuilds full-rate streams. Both buffers hold `cap` tokens; the frame
/// count goes to `out_frames`.
///
/// # Safety
/// `d` must be live; `s0` and `s1` must hold `cap` tokens; `out_frames` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_dialogue_interpolate(
    d: *const SdDialogue,
    s0: *mut u32,
    s1: *mut u32,
    cap: usize,
    out_frames: *mut usize,
) -> SdStatus {
    guard(|| {
        let full = interpolate(&obj(d, "dialogue")?.0)
            .map_err(|e| Failure::new(SdStatus::Codec, e))?
            .dialogue;
        copy_out(full.channel(Speaker::S0), s0, cap, out_frames)?;
        copy_out(full.channel(Speaker::S1), s1, cap, out_frames)
    })
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_model_load(path: *const c_char, out: *mut *mut SdModel) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if path.is_null() {
            return Err(Failure::new(SdStatus::NullPointer, "path is null"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::new(SdStatus::InvalidArgument, "path is not UTF-8"))?;
        let m = NgramModel::load(Path::new(path)).map_err(|e| Failure::new(SdStatus::Model, e))?;
        *out = boxed(SdModel(m));
        Ok(())
    })
}

/// Trains a model on the wire sequences of `dialogues`.
///
/// # Safety
/// `dialogues` must point to `n` live dialogue handles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sd_model_train(
    dialogues: *const *const SdDialogue,
    n: usize,
    order: usize,
    alpha: f64,
    backoff: bool,
    out: *mut *mut SdModel,
) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let handles = slice_in(dialogues, n, "dialogues")?;
        let first = handles.first().ok_or_else(|| Failure::new(SdStatus::InvalidArgument, "no dialogues"))?;
        let vocab_ext = obj(*first, "dialogue")?.0.vocab.extended_size();
        let mut seqs = Vec::with_capacity(n);
        for &h in handles {
            seqs.push(flatten(&obj(h, "dialogue")?.0));
        }
        let m = if backoff {
            NgramModel::train_backoff(&seqs, vocab_ext, order, alpha)
        } else {
            NgramModel::train(&seqs, vocab_ext, order, alpha)
        }
        .map_err(|e| Failure::new(SdStatus::Model, e))?;
        *out = boxed(SdModel(m));
        Ok(())
    })
}

/// Saves a model file.
///
/// # Safety
/// `m` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sd_model_save(m: *const SdModel, path: *const c_char) -> SdStatus {
    guard(|| {
        let m = &obj(m, "model")?.0;
        if path.is_null() {
            return Err(Failure::new(SdStatus::NullPointer, "path is null"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::new(SdStatus::InvalidArgument, "path is not UTF-8"))?;
        std::fs::write(path, m.to_json_string()).map_err(|e| Failure::new(SdStatus::Model, format!("{path}: {e}")))
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_model_free(m: *mut SdModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Next-token distribution after `context`; `buf` receives
/// extended-vocabulary-size probabilities.
///
/// # Safety
/// `m` must be live; `context` must hold `len` tokens; `buf` must hold `cap`
/// doubles; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_model_next_dist(
    m: *const SdModel,
    context: *const u32,
    len: usize,
    buf: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> SdStatus {
    guard(|| {
        let m = &obj(m, "model")?.0;
        let ctx = slice_in(context, len, "context")?;
        copy_out(&m.next_dist(ctx), buf, cap, out_len)
    })
}

/// Perplexity of a token sequence.
///
/// # Safety
/// `m` must be live; `seq` must hold `len` tokens; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_model_perplexity(m: *const SdModel, seq: *const u32, len: usize, out: *mut f64) -> SdStatus {
    guard(|| {
        let m = &obj(m, "model")?.0;
        let out = out_ptr(out, "out")?;
        *out = perplexity(m, slice_in(seq, len, "seq")?).map_err(|e| Failure::new(SdStatus::Model, e))?;
        Ok(())
    })
}

/// Sampling parameters. `top_k` 0 means no cut-off.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SdSamplerConfig {
    pub temperature: f64,
    pub top_k: usize,
    pub seed: u64,
    pub greedy: bool,
}

/// Appends `n_chunks` generated chunks to `prompt`. With `error_on_overflow`
/// an over-long chunk fails instead of being cut short.
///
/// # Safety
/// `m` and `prompt` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_continue(
    m: *const SdModel,
    prompt: *const SdDialogue,
    n_chunks: usize,
    sampler: SdSamplerConfig,
    error_on_overflow: bool,
    out: *mut *mut SdDialogue,
) -> SdStatus {
    guard(|| {
        let m = &obj(m, "model")?.0;
        let prompt = &obj(prompt, "prompt")?.0;
        let out = out_ptr(out, "out")?;
        let cfg = GenerationConfig {
            sampler: if sampler.greedy {
                SamplerConfig::greedy(sampler.seed)
            } else {
                SamplerConfig {
                    temperature: sampler.temperature,
                    top_k: (sampler.top_k > 0).then_some(sampler.top_k),
                    seed: sampler.seed,
                }
            },
            overflow_policy: if error_on_overflow {
                OverflowPolicy::Error
            } else {
                OverflowPolicy::Truncate
            },
        };
        let g = continue_dialogue(m, prompt, n_chunks, &cfg).map_err(|e| Failure::new(SdStatus::Generation, e))?;
        *out = boxed(SdDialogue(g.dialogue));
        Ok(())
    })
}
