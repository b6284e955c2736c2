//! C ABI over the `geosay` pipeline.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`GeosayStatus`]; on failure the message is kept per thread and read
//! with [`geosay_last_error_message`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use geosay::gbi::{threshold_at, BuildingMask};
use geosay::image_io::RasterImage;
use geosay::{Error, GbiMap, Junction, Pipeline, PipelineConfig, PriorModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeosayStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Decode = 4,
    Parameter = 5,
    Parse = 6,
    Validation = 7,
    Dimension = 8,
    Undefined = 9,
    Config = 10,
    Fit = 11,
    OutOfRange = 12,
    Panic = 13,
}

/// Building prior model.
pub struct GeosayPrior(PriorModel);

/// Detected junctions.
pub struct GeosayJunctions(Vec<Junction>);

/// Index map together with its thresholded mask.
pub struct GeosayMap {
    map: GbiMap,
    mask: BuildingMask,
    threshold: f64,
}

/// Detector and pipeline settings. Obtain defaults from
/// [`geosay_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GeosayOptions {
    pub p: f64,
    pub gradient_threshold: f64,
    pub orientation_bins: usize,
    pub max_branch_length: f64,
    pub min_branch_length: f64,
    pub nfa_test_base: f64,
    pub max_branches: usize,
    /// Degrees.
    pub min_angle_sep_deg: f64,
    /// Nonzero selects the mean over nonzero pixels as threshold.
    pub mean_over_nonzero: i32,
}

/// One junction's scalar fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GeosayJunctionInfo {
    pub x: f64,
    pub y: f64,
    pub rho: f64,
    pub branch_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> GeosayStatus {
    match e {
        Error::Decode { .. } => GeosayStatus::Decode,
        Error::Parameter { .. } => GeosayStatus::Parameter,
        Error::Parse { .. } => GeosayStatus::Parse,
        Error::Validation(_) => GeosayStatus::Validation,
        Error::Fit(_) => GeosayStatus::Fit,
        Error::Dimension(_) => GeosayStatus::Dimension,
        Error::Undefined(_) => GeosayStatus::Undefined,
        Error::Config { .. } => GeosayStatus::Config,
        Error::Stage { source, .. } => status_of(source),
        Error::Io { .. } => GeosayStatus::Io,
    }
}

struct Failure(GeosayStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GeosayStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GeosayStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GeosayStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(GeosayStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GeosayStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn config_of(opts: Option<&GeosayOptions>) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::default();
    if let Some(o) = opts {
        cfg.p = o.p;
        let d = &mut cfg.detector;
        d.gradient_threshold = o.gradient_threshold;
        d.orientation_bins = o.orientation_bins;
        d.max_branch_length = o.max_branch_length;
        d.min_branch_length = o.min_branch_length;
        d.nfa_test_base = o.nfa_test_base;
        d.max_branches = o.max_branches;
        d.min_angle_sep = o.min_angle_sep_deg.to_radians();
        cfg.mean_over_nonzero = o.mean_over_nonzero != 0;
    }
    cfg.detector.validate()?;
    Ok(cfg)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn geosay_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`). Returns the full message length
/// excluding the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn geosay_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Fills `out` with the default settings.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_options_default(out: *mut GeosayOptions) -> GeosayStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let cfg = PipelineConfig::default();
        let d = &cfg.detector;
        *out = GeosayOptions {
            p: cfg.p,
            gradient_threshold: d.gradient_threshold,
            orientation_bins: d.orientation_bins,
            max_branch_length: d.max_branch_length,
            min_branch_length: d.min_branch_length,
            nfa_test_base: d.nfa_test_base,
            max_branches: d.max_branches,
            min_angle_sep_deg: d.min_angle_sep.to_degrees(),
            mean_over_nonzero: cfg.mean_over_nonzero as i32,
        };
        Ok(())
    })
}

/// Loads a prior model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_prior_load(path: *const c_char, out: *mut *mut GeosayPrior) -> GeosayStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        put(out, GeosayPrior(PriorModel::load(&path)?));
        Ok(())
    })
}

/// Posterior building probability of an L-shape with the given opening
/// angle (radians), branch lengths and significance.
///
/// # Safety
/// `prior` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_prior_posterior(
    prior: *const GeosayPrior,
    opening_angle: f64,
    len1: f64,
    len2: f64,
    rho: f64,
    out: *mut f64,
) -> GeosayStatus {
    guard(|| {
        let prior = handle(prior, "prior")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let f = geosay::saliency::JunctionFeatures {
            opening_angle,
            log_min_length: len1.min(len2).ln(),
            log_max_length: len1.max(len2).ln(),
            rho,
        };
        *out = prior.0.posterior(&f);
        Ok(())
    })
}

/// # Safety
/// `prior` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn geosay_prior_free(prior: *mut GeosayPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// Detects junctions in a row-major image with `channels` interleaved
/// 8-bit samples per pixel. `options` may be null for defaults.
///
/// # Safety
/// `pixels` must point to `width * height * channels` bytes; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_detect(
    pixels: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    options: *const GeosayOptions,
    out: *mut *mut GeosayJunctions,
) -> GeosayStatus {
    guard(|| {
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Failure(GeosayStatus::Parameter, "image size overflows".into()))?;
        let samples = std::slice::from_raw_parts(pixels, n).to_vec();
        let image = RasterImage::new(width, height, channels, samples)?;
        let cfg = config_of(options.as_ref())?;
        let lum = geosay::p_energy(&image, cfg.p)?;
        put(out, GeosayJunctions(geosay::detect_junctions(&lum, &cfg.detector)?));
        Ok(())
    })
}

/// Detects junctions in an image file. `options` may be null.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_detect_file(
    path: *const c_char,
    options: *const GeosayOptions,
    out: *mut *mut GeosayJunctions,
) -> GeosayStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let cfg = config_of(options.as_ref())?;
        let image = geosay::load_image(&path)?;
        let lum = geosay::p_energy(&image, cfg.p)?;
        put(out, GeosayJunctions(geosay::detect_junctions(&lum, &cfg.detector)?));
        Ok(())
    })
}

/// Reads a junction file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_junctions_read(path: *const c_char, out: *mut *mut GeosayJunctions) -> GeosayStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        put(out, GeosayJunctions(geosay::read_junctions(&path)?));
        Ok(())
    })
}

/// Writes junctions in the text format.
///
/// # Safety
/// `junctions` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn geosay_junctions_write(
    junctions: *const GeosayJunctions,
    path: *const c_char,
) -> GeosayStatus {
    guard(|| {
        let js = handle(junctions, "junctions")?;
        let path = path_arg(path, "path")?;
        geosay::write_junctions(&js.0, &path)?;
        Ok(())
    })
}

/// Number of junctions; 0 for a null handle.
///
/// # Safety
/// `junctions` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn geosay_junctions_len(junctions: *const GeosayJunctions) -> usize {
    junctions.as_ref().map_or(0, |j| j.0.len())
}

/// # Safety
/// `junctions` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_junctions_get(
    junctions: *const GeosayJunctions,
    index: usize,
    out: *mut GeosayJunctionInfo,
) -> GeosayStatus {
    guard(|| {
        let js = handle(junctions, "junctions")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let j =
            js.0.get(index)
                .ok_or_else(|| Failure(GeosayStatus::OutOfRange, format!("index {index} of {}", js.0.len())))?;
        *out = GeosayJunctionInfo {
            x: j.x,
            y: j.y,
            rho: j.rho,
            branch_count: j.branches.len(),
        };
        Ok(())
    })
}

/// Orientation (radians) and length of one branch.
///
/// # Safety
/// `junctions` must be a live handle; `theta` and `length` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_junctions_branch(
    junctions: *const GeosayJunctions,
    index: usize,
    branch: usize,
    theta: *mut f64,
    length: *mut f64,
) -> GeosayStatus {
    guard(|| {
        let js = handle(junctions, "junctions")?;
        if theta.is_null() || length.is_null() {
            return Err(null("theta/length"));
        }
        let b =
            js.0.get(index)
                .and_then(|j| j.branches.get(branch))
                .ok_or_else(|| Failure(GeosayStatus::OutOfRange, format!("junction {index} branch {branch}")))?;
        *theta = b.theta;
        *length = b.length;
        Ok(())
    })
}

/// # Safety
/// `junctions` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn geosay_junctions_free(junctions: *mut GeosayJunctions) {
    if !junctions.is_null() {
        drop(Box::from_raw(junctions));
    }
}

/// Builds the index map and mask over a `width` x `height` grid.
/// `options` may be null.
///
/// # Safety
/// `junctions` and `prior` must be live handles; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_gbi(
    junctions: *const GeosayJunctions,
    prior: *const GeosayPrior,
    width: usize,
    height: usize,
    options: *const GeosayOptions,
    out: *mut *mut GeosayMap,
) -> GeosayStatus {
    guard(|| {
        let js = handle(junctions, "junctions")?;
        let prior = handle(prior, "prior")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config_of(options.as_ref())?;
        let pipeline = Pipeline::with_prior(cfg, prior.0.clone())?;
        let o = pipeline.from_junctions(js.0.clone(), width, height)?;
        put(
            out,
            GeosayMap {
                map: o.map,
                mask: o.mask,
                threshold: o.threshold,
            },
        );
        Ok(())
    })
}

/// Width and height of the map.
///
/// # Safety
/// `map` must be a live handle; `width` and `height` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn geosay_map_size(map: *const GeosayMap, width: *mut usize, height: *mut usize) -> GeosayStatus {
    guard(|| {
        let m = handle(map, "map")?;
        if width.is_null() || height.is_null() {
            return Err(null("width/height"));
        }
        *width = m.map.width();
        *height = m.map.height();
        Ok(())
    })
}

/// Row-major index values, valid until the map is freed.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn geosay_map_values(map: *const GeosayMap) -> *const f64 {
    map.as_ref().map_or(ptr::null(), |m| m.map.values().as_ptr())
}

/// Threshold used for the stored mask.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn geosay_map_threshold(map: *const GeosayMap) -> f64 {
    map.as_ref().map_or(f64::NAN, |m| m.threshold)
}

/// Writes the mask as 0/1 bytes into `buf`, which must hold
/// `width * height` bytes.
///
/// # Safety
/// `map` must be a live handle; `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn geosay_map_mask(map: *const GeosayMap, buf: *mut u8, len: usize) -> GeosayStatus {
    guard(|| {
        let m = handle(map, "map")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let data = m.mask.data();
        if len < data.len() {
            return Err(Failure(
                GeosayStatus::OutOfRange,
                format!("buffer holds {len} bytes, mask needs {}", data.len()),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(buf, data.len());
        for (d, &b) in dst.iter_mut().zip(data) {
            *d = b as u8;
        }
        Ok(())
    })
}

/// Re-thresholds the map at `threshold` (strictly greater is building).
///
/// # Safety
/// `map` must be a live mutable handle.
#[no_mangle]
pub unsafe extern "C" fn geosay_map_set_threshold(map: *mut GeosayMap, threshold: f64) -> GeosayStatus {
    guard(|| {
        let m = map.as_mut().ok_or_else(|| null("map"))?;
        m.mask = threshold_at(&m.map, threshold);
        m.threshold = threshold;
        Ok(())
    })
}

/// Writes the binary map, the mask PNG or the preview PNG. Any path may be
/// null to skip that artifact.
///
/// # Safety
/// `map` must be a live handle; non-null paths NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn geosay_map_write(
    map: *const GeosayMap,
    gbif_path: *const c_char,
    mask_path: *const c_char,
    preview_path: *const c_char,
) -> GeosayStatus {
    guard(|| {
        let m = handle(map, "map")?;
        if !gbif_path.is_null() {
            m.map.write_gbif(&path_arg(gbif_path, "gbif_path")?)?;
        }
        if !mask_path.is_null() {
            m.mask.write_png(&path_arg(mask_path, "mask_path")?)?;
        }
        if !preview_path.is_null() {
            m.map.write_preview(&path_arg(preview_path, "preview_path")?)?;
        }
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn geosay_map_free(map: *mut GeosayMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}
