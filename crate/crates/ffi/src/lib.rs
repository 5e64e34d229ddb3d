//! C ABI over the degenfuse front-end.
//!
//! Objects are opaque handles created by `df_*_new` / `df_*_read` /
//! `df_*_load` and released by the matching `df_*_free`. Every fallible call
//! returns a [`DfStatus`]; on failure [`df_last_error`] describes the cause
//! for the calling thread. No function panics across the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use degenfuse::cloud::{read_lidar_cloud, read_radar_cloud, LidarCloud, Point3, RadarCloud, RadarPoint};
use degenfuse::config::PipelineConfig;
use degenfuse::radar::estimate_ego_velocity;
use degenfuse::select::{select, SelectionResult, Source};
use degenfuse::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    ConfigError = 5,
    IoError = 6,
    InsufficientData = 7,
    RuntimeError = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Cloud chosen for odometry in one frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfSource {
    Lidar = 0,
    Radar = 1,
    Skip = 2,
}

/// Opaque LiDAR point cloud.
pub struct DfLidarCloud(LidarCloud);

/// Opaque radar point cloud with Doppler.
pub struct DfRadarCloud(RadarCloud);

/// Opaque pipeline parameters.
pub struct DfParams(PipelineConfig);

/// Opaque per-frame selection result.
pub struct DfSelection(SelectionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DfStatus {
    match e {
        Error::Parse { .. } => DfStatus::ParseError,
        Error::Validation(_) | Error::Contract(_) => DfStatus::ValidationError,
        Error::Config { .. } => DfStatus::ConfigError,
        Error::Io { .. } => DfStatus::IoError,
        Error::InsufficientData(_) => DfStatus::InsufficientData,
        _ => DfStatus::RuntimeError,
    }
}

fn fail(e: Error) -> DfStatus {
    set_error(e.to_string());
    status_of(&e)
}

/// Runs `f`, converting a panic into `DfStatus::Panic`.
fn guarded(f: impl FnOnce() -> DfStatus) -> DfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            DfStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("argument '", stringify!($p), "' is null"));
            return DfStatus::NullPointer;
        })+
    };
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, DfStatus> {
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(DfStatus::InvalidArgument)
        }
    }
}

unsafe fn slice_arg<'a, T>(data: *const T, len: usize) -> &'a [T] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(data, len)
    }
}

fn boxed<T>(value: T, out: *mut *mut T) -> DfStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    DfStatus::Ok
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a LiDAR cloud from `n` interleaved `x, y, z` triples.
#[no_mangle]
pub unsafe extern "C" fn df_lidar_cloud_new(
    timestamp: f64,
    xyz: *const f64,
    n: usize,
    out: *mut *mut DfLidarCloud,
) -> DfStatus {
    guarded(|| {
        non_null!(out);
        if n > 0 {
            non_null!(xyz);
        }
        let Some(len) = n.checked_mul(3) else {
            set_error("point count overflows");
            return DfStatus::InvalidArgument;
        };
        let points = slice_arg(xyz, len)
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        match LidarCloud::new(timestamp, "lidar", points) {
            Ok(c) => boxed(DfLidarCloud(c), out),
            Err(e) => fail(e),
        }
    })
}

/// Reads a `t,x,y,z` CSV frame.
#[no_mangle]
pub unsafe extern "C" fn df_lidar_cloud_read(path: *const c_char, out: *mut *mut DfLidarCloud) -> DfStatus {
    guarded(|| {
        non_null!(path, out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_lidar_cloud(&path) {
            Ok(c) => boxed(DfLidarCloud(c), out),
            Err(e) => fail(e),
        }
    })
}

/// Number of points; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn df_lidar_cloud_len(cloud: *const DfLidarCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn df_lidar_cloud_free(cloud: *mut DfLidarCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Builds a radar cloud from `n` interleaved `x, y, z` triples and `n`
/// Doppler values (m/s, positive = receding).
#[no_mangle]
pub unsafe extern "C" fn df_radar_cloud_new(
    timestamp: f64,
    xyz: *const f64,
    doppler: *const f64,
    n: usize,
    out: *mut *mut DfRadarCloud,
) -> DfStatus {
    guarded(|| {
        non_null!(out);
        if n > 0 {
            non_null!(xyz, doppler);
        }
        let Some(len) = n.checked_mul(3) else {
            set_error("point count overflows");
            return DfStatus::InvalidArgument;
        };
        let points = slice_arg(xyz, len)
            .chunks_exact(3)
            .zip(slice_arg(doppler, n))
            .map(|(c, d)| RadarPoint::new(Point3::new(c[0], c[1], c[2]), *d))
            .collect();
        match RadarCloud::new(timestamp, "radar", points) {
            Ok(c) => boxed(DfRadarCloud(c), out),
            Err(e) => fail(e),
        }
    })
}

/// Reads a `t,x,y,z,doppler[,power]` CSV frame.
#[no_mangle]
pub unsafe extern "C" fn df_radar_cloud_read(path: *const c_char, out: *mut *mut DfRadarCloud) -> DfStatus {
    guarded(|| {
        non_null!(path, out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_radar_cloud(&path) {
            Ok(c) => boxed(DfRadarCloud(c), out),
            Err(e) => fail(e),
        }
    })
}

/// Number of points; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn df_radar_cloud_len(cloud: *const DfRadarCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn df_radar_cloud_free(cloud: *mut DfRadarCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Default parameters.
#[no_mangle]
pub unsafe extern "C" fn df_params_default(out: *mut *mut DfParams) -> DfStatus {
    guarded(|| {
        non_null!(out);
        boxed(DfParams(PipelineConfig::default()), out)
    })
}

/// Parameters from an INI pipeline config; unknown keys are rejected.
#[no_mangle]
pub unsafe extern "C" fn df_params_load(path: *const c_char, out: *mut *mut DfParams) -> DfStatus {
    guarded(|| {
        non_null!(path, out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match PipelineConfig::load(&path) {
            Ok(c) => boxed(DfParams(c), out),
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn df_params_free(params: *mut DfParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Radar ego-velocity in the sensor frame, written to `velocity[0..3]`.
/// `n_inliers` may be NULL. Fails with `INSUFFICIENT_DATA` when the frame
/// cannot support an estimate.
#[no_mangle]
pub unsafe extern "C" fn df_estimate_ego_velocity(
    radar: *const DfRadarCloud,
    params: *const DfParams,
    velocity: *mut f64,
    n_inliers: *mut usize,
) -> DfStatus {
    guarded(|| {
        non_null!(radar, params, velocity);
        let (radar, params) = (&(*radar).0, &(*params).0);
        match estimate_ego_velocity(radar, &params.front_end.ransac) {
            Ok(est) if est.converged => {
                let v = std::slice::from_raw_parts_mut(velocity, 3);
                v.copy_from_slice(est.velocity.as_slice());
                if !n_inliers.is_null() {
                    *n_inliers = est.inlier_ids.len();
                }
                DfStatus::Ok
            }
            Ok(est) => {
                set_error(format!("only {} inliers; estimate did not converge", est.inlier_ids.len()));
                DfStatus::InsufficientData
            }
            Err(e) => fail(e),
        }
    })
}

/// Full per-frame selection. `lidar` may be NULL for a missing scan.
#[no_mangle]
pub unsafe extern "C" fn df_select(
    lidar: *const DfLidarCloud,
    radar: *const DfRadarCloud,
    params: *const DfParams,
    out: *mut *mut DfSelection,
) -> DfStatus {
    guarded(|| {
        non_null!(radar, params, out);
        let lidar = lidar.as_ref().map(|l| &l.0);
        match select(lidar, &(*radar).0, &(*params).0.front_end) {
            Ok(s) => boxed(DfSelection(s), out),
            Err(e) => fail(e),
        }
    })
}

/// Source picked for the frame; `SKIP` for NULL.
#[no_mangle]
pub unsafe extern "C" fn df_selection_source(sel: *const DfSelection) -> DfSource {
    match sel.as_ref().map(|s| s.0.source) {
        Some(Source::Lidar) => DfSource::Lidar,
        Some(Source::Radar) => DfSource::Radar,
        _ => DfSource::Skip,
    }
}

/// Match ratio of radar static points against the LiDAR scan.
#[no_mangle]
pub unsafe extern "C" fn df_selection_ratio(sel: *const DfSelection) -> f64 {
    sel.as_ref().map_or(f64::NAN, |s| s.0.degeneracy.ratio)
}

#[no_mangle]
pub unsafe extern "C" fn df_selection_use_lidar(sel: *const DfSelection) -> bool {
    sel.as_ref().is_some_and(|s| s.0.degeneracy.use_lidar)
}

/// LiDAR points removed as dynamic.
#[no_mangle]
pub unsafe extern "C" fn df_selection_removed_count(sel: *const DfSelection) -> usize {
    sel.as_ref().map_or(0, |s| s.0.n_removed())
}

/// Points in the selected cloud.
#[no_mangle]
pub unsafe extern "C" fn df_selection_cloud_len(sel: *const DfSelection) -> usize {
    sel.as_ref().map_or(0, |s| s.0.cloud.len())
}

/// Copies the selected cloud as `x, y, z` triples into `xyz`, which holds
/// `capacity` doubles. Fails with `BUFFER_TOO_SMALL` if it cannot hold
/// `3 * df_selection_cloud_len(sel)` values.
#[no_mangle]
pub unsafe extern "C" fn df_selection_cloud_points(sel: *const DfSelection, xyz: *mut f64, capacity: usize) -> DfStatus {
    guarded(|| {
        non_null!(sel);
        let cloud = &(*sel).0.cloud;
        let needed = cloud.len() * 3;
        if needed == 0 {
            return DfStatus::Ok;
        }
        non_null!(xyz);
        if capacity < needed {
            set_error(format!("buffer holds {capacity} values, need {needed}"));
            return DfStatus::BufferTooSmall;
        }
        let buf = std::slice::from_raw_parts_mut(xyz, needed);
        for (chunk, p) in buf.chunks_exact_mut(3).zip(cloud.points()) {
            chunk.copy_from_slice(p.coords.as_slice());
        }
        DfStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn df_selection_free(sel: *mut DfSelection) {
    if !sel.is_null() {
        drop(Box::from_raw(sel));
    }
}
