//! C interface to the clipforge engine, frame scoring and detection math.
//!
//! Every function returns a [`CfStatus`]. On failure the message is kept
//! per thread and can be copied out with [`cf_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use clipforge::config::RunConfig;
use clipforge::detection::{ciou_loss, fbeta, iou, map50, merge_detections, read_detections, BoundingBox, DetectionSet};
use clipforge::engine::{Engine, EpisodeMode};
use clipforge::numerics::Tensor;
use clipforge::selection::{score_video, ScoreVariant, Scorer};
use clipforge::training::derive_rng;
use clipforge::video::io::load_frames;
use clipforge::video::{Frame, VideoSample};
use clipforge::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    NonFinite = 4,
    Format = 5,
    Io = 6,
    Config = 7,
    Diverged = 8,
    Panic = 9,
}

/// Loaded engine.
pub struct CfEngine(Engine);

/// Loaded video.
pub struct CfVideo(VideoSample);

/// Outcome of one episode.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CfEpisodeSummary {
    pub steps: usize,
    pub frames: usize,
    /// Feature extraction FLOPs.
    pub flops: u64,
    /// Station points and policy FLOPs.
    pub overhead_flops: u64,
    /// Probability of the positive class.
    pub positive_probability: f64,
    pub predicted_positive: bool,
}

/// Episode mode for [`cf_run_episode`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfMode {
    /// Most probable action each step.
    Policy = 0,
    /// Every frame at full resolution.
    Baseline = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CfStatus {
    match e {
        Error::Shape { .. } => CfStatus::Shape,
        Error::InvalidArgument(_) => CfStatus::InvalidArgument,
        Error::NonFinite(_) => CfStatus::NonFinite,
        Error::Format(_) | Error::Truncated(_) | Error::Csv(_) => CfStatus::Format,
        Error::Config(_) => CfStatus::Config,
        Error::Diverged { .. } => CfStatus::Diverged,
        Error::Io(_) => CfStatus::Io,
    }
}

struct Failure(CfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CfStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CfStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CfStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn cf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an engine from a run configuration file (null for defaults) and
/// loads parameters from a checkpoint (null for a seeded random init).
///
/// # Safety
/// Path arguments must be null or NUL-terminated strings; `out` must be
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_engine_load(
    config_path: *const c_char,
    checkpoint_path: *const c_char,
    seed: u64,
    out: *mut *mut CfEngine,
) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = if config_path.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_file(&path_arg(config_path, "config_path")?)?
        };
        let mut engine = Engine::new(cfg.engine)?;
        if checkpoint_path.is_null() {
            engine = engine.init(&mut derive_rng(seed, 0, 0, 0));
        } else {
            engine.load(&path_arg(checkpoint_path, "checkpoint_path")?)?;
        }
        *out = Box::into_raw(Box::new(CfEngine(engine)));
        Ok(())
    })
}

/// # Safety
/// `engine` must be null or a handle from [`cf_engine_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cf_engine_free(engine: *mut CfEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Number of actions of the engine's action space.
///
/// # Safety
/// `engine` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_engine_num_actions(engine: *const CfEngine, out: *mut usize) -> CfStatus {
    guard(|| {
        let e = engine.as_ref().ok_or_else(|| null("engine"))?;
        *out_arg(out, "out")? = e.0.actions().len();
        Ok(())
    })
}

/// Loads a `.clpv` file, a `.pgm`/`.ppm` image or a directory of images.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_video_load(path: *const c_char, out: *mut *mut CfVideo) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let video = load_frames(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CfVideo(video)));
        Ok(())
    })
}

/// Builds a video from `frames * channels * height * width` pixels in
/// `[0, 1]`, frame-major then `[C, H, W]`.
///
/// # Safety
/// `pixels` must be valid for that many reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_video_from_pixels(
    pixels: *const f64,
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    label: bool,
    out: *mut *mut CfVideo,
) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let per = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .filter(|&v| v > 0)
            .ok_or_else(|| Failure(CfStatus::InvalidArgument, "empty or oversized frame".into()))?;
        let total = per
            .checked_mul(frames)
            .ok_or_else(|| Failure(CfStatus::InvalidArgument, "too many pixels".into()))?;
        let data = std::slice::from_raw_parts(pixels, total);
        let frames = data
            .chunks(per)
            .map(|c| Frame::new(Tensor::new(vec![channels, height, width], c.to_vec())?, None))
            .collect::<clipforge::Result<Vec<_>>>()?;
        *out = Box::into_raw(Box::new(CfVideo(VideoSample::new(frames, label, "ffi")?)));
        Ok(())
    })
}

/// # Safety
/// `video` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_video_free(video: *mut CfVideo) {
    if !video.is_null() {
        drop(Box::from_raw(video));
    }
}

/// # Safety
/// `video` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_video_len(video: *const CfVideo, out: *mut usize) -> CfStatus {
    guard(|| {
        let v = video.as_ref().ok_or_else(|| null("video"))?;
        *out_arg(out, "out")? = v.0.len();
        Ok(())
    })
}

/// Runs one deterministic episode and reports its cost and prediction.
/// `mode` is a [`CfMode`] value.
///
/// # Safety
/// Handles must be live; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_run_episode(
    engine: *const CfEngine,
    video: *const CfVideo,
    mode: u32,
    seed: u64,
    out: *mut CfEpisodeSummary,
) -> CfStatus {
    guard(|| {
        let e = &engine.as_ref().ok_or_else(|| null("engine"))?.0;
        let v = &video.as_ref().ok_or_else(|| null("video"))?.0;
        let out = out_arg(out, "out")?;
        let mode = match mode {
            m if m == CfMode::Policy as u32 => EpisodeMode::Argmax,
            m if m == CfMode::Baseline as u32 => EpisodeMode::Fixed(0),
            other => return Err(Failure(CfStatus::InvalidArgument, format!("no episode mode {other}"))),
        };
        let ep = e.run_episode(v, &mode, &mut derive_rng(seed, 9, 0, 0))?;
        let probs = e.classify(&ep.h_final)?;
        *out = CfEpisodeSummary {
            steps: ep.steps(),
            frames: v.len(),
            flops: ep.ledger.total(),
            overhead_flops: ep.overhead,
            positive_probability: probs[1],
            predicted_positive: probs[1] > probs[0],
        };
        Ok(())
    })
}

/// Per-frame importance scores. `variant` is 1, 2 or 3; `scores` must hold
/// the video's frame count.
///
/// # Safety
/// Handles must be live; `scores` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cf_score_frames(
    engine: *const CfEngine,
    video: *const CfVideo,
    variant: u32,
    seed: u64,
    scores: *mut f64,
    len: usize,
) -> CfStatus {
    guard(|| {
        let e = &engine.as_ref().ok_or_else(|| null("engine"))?.0;
        let v = &video.as_ref().ok_or_else(|| null("video"))?.0;
        if scores.is_null() {
            return Err(null("scores"));
        }
        if len != v.len() {
            return Err(Failure(
                CfStatus::InvalidArgument,
                format!("scores holds {len} values, video has {} frames", v.len()),
            ));
        }
        let variant = match variant {
            1 => ScoreVariant::S1,
            2 => ScoreVariant::S2,
            3 => ScoreVariant::S3,
            other => return Err(Failure(CfStatus::InvalidArgument, format!("no score variant {other}"))),
        };
        let scorer = Scorer {
            seed,
            ..Scorer::new(variant)
        };
        let scored = score_video(e, v, &scorer)?;
        std::slice::from_raw_parts_mut(scores, len).copy_from_slice(&scored.scores);
        Ok(())
    })
}

unsafe fn box_arg(p: *const f64, what: &str) -> Result<BoundingBox, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let c = std::slice::from_raw_parts(p, 4);
    Ok(BoundingBox::new(c[0], c[1], c[2], c[3], 0)?)
}

/// IoU of two `[x_min, y_min, x_max, y_max]` boxes.
///
/// # Safety
/// `a` and `b` must each point to 4 doubles; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_iou(a: *const f64, b: *const f64, out: *mut f64) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = iou(&box_arg(a, "a")?, &box_arg(b, "b")?)?;
        Ok(())
    })
}

/// CIoU loss of `pred` against `gt`, both `[x_min, y_min, x_max, y_max]`.
///
/// # Safety
/// `pred` and `gt` must each point to 4 doubles; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_ciou_loss(pred: *const f64, gt: *const f64, out: *mut f64) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ciou_loss(&box_arg(pred, "pred")?, &box_arg(gt, "gt")?)?;
        Ok(())
    })
}

/// F-beta from match counts.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_fbeta(tp: u64, fp: u64, fn_: u64, beta: f64, out: *mut f64) -> CfStatus {
    guard(|| {
        *out_arg(out, "out")? = fbeta(tp, fp, fn_, beta)?;
        Ok(())
    })
}

/// mAP at IoU 0.5 from ground-truth and prediction interchange CSV files.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cf_map50_files(gt_path: *const c_char, pred_path: *const c_char, out: *mut f64) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let read = |p: PathBuf| -> Result<Vec<DetectionSet>, Failure> {
            let f = std::fs::File::open(&p).map_err(|e| Failure(CfStatus::Io, format!("{}: {e}", p.display())))?;
            Ok(read_detections(f)?)
        };
        let sets = merge_detections(read(path_arg(gt_path, "gt_path")?)?, read(path_arg(pred_path, "pred_path")?)?);
        *out = map50(&sets)?.map;
        Ok(())
    })
}
