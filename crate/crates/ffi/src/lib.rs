//! C ABI for tubekit.
//!
//! Every function returns a [`TkStatus`]; results come back through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`tk_last_error`]. Corpora, model sets and tube sets are opaque handles
//! that the caller frees with the matching `*_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tubekit::classifier::{score_region, ActionModel};
use tubekit::corpus::{self, Corpus};
use tubekit::geometry::{self, Bbox};
use tubekit::linker::{self, ActionTube, LinkConfig, ScoredRegion};
use tubekit::metrics;
use tubekit::saliency::{self, FlowMagnitudeMap};
use tubekit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Parse = 4,
    NoFeasiblePath = 5,
    Training = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TkBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// One candidate region; its frame is implied by its position in the input.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TkScoredRegion {
    pub region_id: u32,
    pub bbox: TkBox,
    pub unary: f64,
}

pub struct TkCorpus {
    corpus: Corpus,
    video_ids: Vec<CString>,
    actions: Vec<CString>,
}

pub struct TkModels {
    models: Vec<ActionModel>,
    actions: Vec<CString>,
}

pub struct TkTubeSet {
    tubes: Vec<ActionTube>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(TkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) => TkStatus::InvalidInput,
            Error::NoFeasiblePath(_) => TkStatus::NoFeasiblePath,
            Error::Training { .. } => TkStatus::Training,
            Error::Parse { .. } | Error::Load { .. } => TkStatus::Parse,
            Error::Io { .. } => TkStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TkStatus::NullPointer, format!("{what} is null"))
}

fn out_of_range(what: &str, idx: usize, len: usize) -> Failure {
    Failure(TkStatus::OutOfRange, format!("{what} index {idx} out of range ({len})"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            TkStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside tubekit");
            TkStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TkStatus::InvalidInput, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn to_bbox(b: &TkBox) -> Result<Bbox, Failure> {
    Ok(Bbox::new(b.x1, b.y1, b.x2, b.y2)?)
}

fn from_bbox(b: &Bbox) -> TkBox {
    let [x1, y1, x2, y2] = b.to_array();
    TkBox { x1, y1, x2, y2 }
}

fn c_strings<'a>(items: impl Iterator<Item = &'a str>) -> Vec<CString> {
    items
        .map(|s| CString::new(s.replace('\0', " ")).unwrap_or_default())
        .collect()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next tubekit call on the same thread.
#[no_mangle]
pub extern "C" fn tk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Geometry and saliency

#[no_mangle]
pub unsafe extern "C" fn tk_iou(a: *const TkBox, b: *const TkBox, out: *mut f64) -> TkStatus {
    guard(|| {
        let a = to_bbox(deref(a, "a")?)?;
        let b = to_bbox(deref(b, "b")?)?;
        write_out(out, geometry::iou(&a, &b), "out")
    })
}

/// Mean per-frame IoU of two tracks given as parallel frame/box arrays.
#[no_mangle]
pub unsafe extern "C" fn tk_mean_frame_iou(
    frames_a: *const u32,
    boxes_a: *const TkBox,
    len_a: usize,
    frames_b: *const u32,
    boxes_b: *const TkBox,
    len_b: usize,
    out: *mut f64,
) -> TkStatus {
    guard(|| {
        let track = |frames: *const u32, boxes: *const TkBox, len: usize| -> Result<Vec<(u32, Bbox)>, Failure> {
            let frames = slice(frames, len, "frames")?;
            let boxes = slice(boxes, len, "boxes")?;
            frames
                .iter()
                .zip(boxes)
                .map(|(f, b)| Ok((*f, to_bbox(b)?)))
                .collect()
        };
        let a = track(frames_a, boxes_a, len_a)?;
        let b = track(frames_b, boxes_b, len_b)?;
        write_out(out, geometry::mean_frame_iou(&a, &b)?, "out")
    })
}

/// Motion score of `region` over a raw row-major magnitude grid. The grid is
/// max-normalized first.
#[no_mangle]
pub unsafe extern "C" fn tk_region_motion_score(
    values: *const f32,
    width: u32,
    height: u32,
    region: *const TkBox,
    out: *mut f64,
) -> TkStatus {
    guard(|| {
        let n = width as usize * height as usize;
        let values = slice(values, n, "values")?.to_vec();
        let map = FlowMagnitudeMap::new(width, height, values)?;
        let region = to_bbox(deref(region, "region")?)?;
        let score = saliency::region_motion_score(&saliency::normalize(&map), &region)?;
        write_out(out, score, "out")
    })
}

// ---------------------------------------------------------------------------
// Corpus

#[no_mangle]
pub unsafe extern "C" fn tk_corpus_load(root: *const c_char, out: *mut *mut TkCorpus) -> TkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let corpus = corpus::load_corpus(&path_arg(root)?)?;
        let handle = TkCorpus {
            video_ids: c_strings(corpus.videos.iter().map(|v| v.id.as_str())),
            actions: c_strings(corpus.actions.iter().map(String::as_str)),
            corpus,
        };
        out.write(Box::into_raw(Box::new(handle)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tk_corpus_free(corpus: *mut TkCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tk_corpus_num_videos(corpus: *const TkCorpus, out: *mut usize) -> TkStatus {
    guard(|| write_out(out, deref(corpus, "corpus")?.corpus.videos.len(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn tk_corpus_num_actions(corpus: *const TkCorpus, out: *mut usize) -> TkStatus {
    guard(|| write_out(out, deref(corpus, "corpus")?.corpus.actions.len(), "out"))
}

/// Borrowed video id, valid while the corpus handle lives.
#[no_mangle]
pub unsafe extern "C" fn tk_corpus_video_id(corpus: *const TkCorpus, index: usize, out: *mut *const c_char) -> TkStatus {
    guard(|| {
        let c = deref(corpus, "corpus")?;
        let id = c
            .video_ids
            .get(index)
            .ok_or_else(|| out_of_range("video", index, c.video_ids.len()))?;
        write_out(out, id.as_ptr(), "out")
    })
}

/// Borrowed action label, valid while the corpus handle lives.
#[no_mangle]
pub unsafe extern "C" fn tk_corpus_action(corpus: *const TkCorpus, index: usize, out: *mut *const c_char) -> TkStatus {
    guard(|| {
        let c = deref(corpus, "corpus")?;
        let a = c
            .actions
            .get(index)
            .ok_or_else(|| out_of_range("action", index, c.actions.len()))?;
        write_out(out, a.as_ptr(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn tk_corpus_num_frames(corpus: *const TkCorpus, video: usize, out: *mut usize) -> TkStatus {
    guard(|| {
        let c = &deref(corpus, "corpus")?.corpus;
        let v = c
            .videos
            .get(video)
            .ok_or_else(|| out_of_range("video", video, c.videos.len()))?;
        write_out(out, v.num_frames(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn tk_corpus_num_proposals(
    corpus: *const TkCorpus,
    video: usize,
    frame: usize,
    out: *mut usize,
) -> TkStatus {
    guard(|| {
        let c = &deref(corpus, "corpus")?.corpus;
        let v = c
            .videos
            .get(video)
            .ok_or_else(|| out_of_range("video", video, c.videos.len()))?;
        let f = v
            .frames
            .get(frame)
            .ok_or_else(|| out_of_range("frame", frame, v.frames.len()))?;
        write_out(out, f.proposals.len(), "out")
    })
}

// ---------------------------------------------------------------------------
// Models

#[no_mangle]
pub unsafe extern "C" fn tk_models_read(path: *const c_char, out: *mut *mut TkModels) -> TkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let models = corpus::read_models(&path_arg(path)?)?;
        let handle = TkModels {
            actions: c_strings(models.iter().map(|m| m.action.as_str())),
            models,
        };
        out.write(Box::into_raw(Box::new(handle)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tk_models_free(models: *mut TkModels) {
    if !models.is_null() {
        drop(Box::from_raw(models));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tk_models_count(models: *const TkModels, out: *mut usize) -> TkStatus {
    guard(|| write_out(out, deref(models, "models")?.models.len(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn tk_models_dim(models: *const TkModels, index: usize, out: *mut usize) -> TkStatus {
    guard(|| {
        let m = &deref(models, "models")?.models;
        let model = m.get(index).ok_or_else(|| out_of_range("model", index, m.len()))?;
        write_out(out, model.dim(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn tk_models_action(models: *const TkModels, index: usize, out: *mut *const c_char) -> TkStatus {
    guard(|| {
        let m = deref(models, "models")?;
        let a = m
            .actions
            .get(index)
            .ok_or_else(|| out_of_range("model", index, m.actions.len()))?;
        write_out(out, a.as_ptr(), "out")
    })
}

/// `w . phi + b` for model `index`.
#[no_mangle]
pub unsafe extern "C" fn tk_models_score(
    models: *const TkModels,
    index: usize,
    phi: *const f64,
    len: usize,
    out: *mut f64,
) -> TkStatus {
    guard(|| {
        let m = &deref(models, "models")?.models;
        let model = m.get(index).ok_or_else(|| out_of_range("model", index, m.len()))?;
        let phi = slice(phi, len, "phi")?;
        write_out(out, score_region(model, phi)?, "out")
    })
}

// ---------------------------------------------------------------------------
// Linking

unsafe fn frames_arg(
    regions: *const TkScoredRegion,
    frame_counts: *const usize,
    num_frames: usize,
) -> Result<Vec<Vec<ScoredRegion>>, Failure> {
    let counts = slice(frame_counts, num_frames, "frame_counts")?;
    let total = counts
        .iter()
        .try_fold(0usize, |acc, c| acc.checked_add(*c))
        .ok_or_else(|| Failure(TkStatus::InvalidInput, "frame counts overflow".into()))?;
    let all = slice(regions, total, "regions")?;
    let mut frames = Vec::with_capacity(num_frames);
    let mut offset = 0;
    for (t, &n) in counts.iter().enumerate() {
        let frame = all[offset..offset + n]
            .iter()
            .map(|r| {
                if !r.unary.is_finite() {
                    return Err(Failure(TkStatus::InvalidInput, format!("non-finite unary in frame {t}")));
                }
                Ok(ScoredRegion {
                    region_id: r.region_id,
                    frame: t as u32,
                    bbox: to_bbox(&r.bbox)?,
                    unary: r.unary,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        frames.push(frame);
        offset += n;
    }
    Ok(frames)
}

/// Best path over `num_frames` frames. `regions` holds every frame's regions
/// back to back, `frame_counts[t]` of them for frame `t`. On success
/// `out_indices[t]` is the chosen position within frame `t`.
#[no_mangle]
pub unsafe extern "C" fn tk_best_path(
    regions: *const TkScoredRegion,
    frame_counts: *const usize,
    num_frames: usize,
    lambda: f64,
    out_indices: *mut usize,
    out_score: *mut f64,
) -> TkStatus {
    guard(|| {
        let frames = frames_arg(regions, frame_counts, num_frames)?;
        let path = linker::best_path(&frames, lambda)?;
        if out_indices.is_null() {
            return Err(null("out_indices"));
        }
        ptr::copy_nonoverlapping(path.indices.as_ptr(), out_indices, path.indices.len());
        write_out(out_score, path.raw_score, "out_score")
    })
}

#[no_mangle]
pub unsafe extern "C" fn tk_extract_tubes(
    regions: *const TkScoredRegion,
    frame_counts: *const usize,
    num_frames: usize,
    lambda: f64,
    max_tubes: usize,
    out: *mut *mut TkTubeSet,
) -> TkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let frames = frames_arg(regions, frame_counts, num_frames)?;
        let config = LinkConfig { lambda, max_tubes };
        let tubes = linker::extract_tubes(&frames, "", "", &config)?;
        out.write(Box::into_raw(Box::new(TkTubeSet { tubes })));
        Ok(())
    })
}

/// Read a `tubes.tsv` file into a tube set.
#[no_mangle]
pub unsafe extern "C" fn tk_tubes_read(path: *const c_char, out: *mut *mut TkTubeSet) -> TkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let tubes = corpus::read_tubes(&path_arg(path)?)?;
        out.write(Box::into_raw(Box::new(TkTubeSet { tubes })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tk_tubes_free(tubes: *mut TkTubeSet) {
    if !tubes.is_null() {
        drop(Box::from_raw(tubes));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tk_tubes_count(tubes: *const TkTubeSet, out: *mut usize) -> TkStatus {
    guard(|| write_out(out, deref(tubes, "tubes")?.tubes.len(), "out"))
}

fn tube_at(set: &TkTubeSet, index: usize) -> Result<&ActionTube, Failure> {
    set.tubes
        .get(index)
        .ok_or_else(|| out_of_range("tube", index, set.tubes.len()))
}

#[no_mangle]
pub unsafe extern "C" fn tk_tubes_score(tubes: *const TkTubeSet, index: usize, out: *mut f64) -> TkStatus {
    guard(|| write_out(out, tube_at(deref(tubes, "tubes")?, index)?.score, "out"))
}

#[no_mangle]
pub unsafe extern "C" fn tk_tubes_len(tubes: *const TkTubeSet, index: usize, out: *mut usize) -> TkStatus {
    guard(|| write_out(out, tube_at(deref(tubes, "tubes")?, index)?.regions.len(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn tk_tubes_box(tubes: *const TkTubeSet, index: usize, frame: usize, out: *mut TkBox) -> TkStatus {
    guard(|| {
        let tube = tube_at(deref(tubes, "tubes")?, index)?;
        let (_, b) = tube
            .regions
            .get(frame)
            .ok_or_else(|| out_of_range("frame", frame, tube.regions.len()))?;
        write_out(out, from_bbox(b), "out")
    })
}

// ---------------------------------------------------------------------------
// Metrics and the pipeline

/// All-points average precision of a PR curve ordered by descending threshold.
#[no_mangle]
pub unsafe extern "C" fn tk_average_precision(
    precision: *const f64,
    recall: *const f64,
    len: usize,
    out: *mut f64,
) -> TkStatus {
    guard(|| {
        let p = slice(precision, len, "precision")?;
        let r = slice(recall, len, "recall")?;
        write_out(out, metrics::average_precision(p, r), "out")
    })
}

/// Run a `tubekit` command line in-process, e.g.
/// `{"tubekit", "link", "--corpus", "dir"}`. Returns the CLI exit code
/// (0 success, 1 usage, 2 data, 3 internal), or -1 if `argv` is unusable.
#[no_mangle]
pub unsafe extern "C" fn tk_run_cli(argc: c_int, argv: *const *const c_char) -> c_int {
    if argc < 0 || argv.is_null() {
        set_last_error("argv is null or argc negative");
        return -1;
    }
    let mut args = Vec::with_capacity(argc as usize);
    for i in 0..argc as usize {
        let p = *argv.add(i);
        if p.is_null() {
            set_last_error("argv entry is null");
            return -1;
        }
        match CStr::from_ptr(p).to_str() {
            Ok(s) => args.push(s.to_string()),
            Err(_) => {
                set_last_error("argv entry is not valid UTF-8");
                return -1;
            }
        }
    }
    tubekit::cli::run(args)
}
