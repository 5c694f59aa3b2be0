//! C ABI over latentcarve: latent handles, rendering, pose estimation and a
//! few geometry and metric helpers.
//!
//! Every function returns an [`LcStatus`]; on failure the message is kept per
//! thread and read with [`lc_last_error`]. Handles are opaque and owned by the
//! caller, who releases them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use latentcarve::cli::{load_latent, load_scene, render_frame, RunConfig};
use latentcarve::evalkit::{metric_add, ModelPoints};
use latentcarve::geometry::{quat_exp, CameraIntrinsics, CameraParams, LogQuaternion, RigidTransform, Viewport};
use latentcarve::modeling::{build_latent, LatentObject, ModelingConfig, ObservedView, OccupancyEncoder};
use latentcarve::pose::{estimate, EstimateConfig};
use latentcarve::raster::Raster;
use latentcarve::Error;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    /// Null pointer, bad length or malformed value.
    InvalidArgument = 1,
    /// Malformed or missing input data.
    InputError = 2,
    /// The numerics failed (non-finite values, degenerate search).
    NumericalError = 3,
    /// A Rust panic was caught at the boundary.
    Panic = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct LcIntrinsics {
    pub fu: f64,
    pub fv: f64,
    pub u0: f64,
    pub v0: f64,
    pub width: u32,
    pub height: u32,
}

/// Object-to-camera pose.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct LcPose {
    pub quaternion_wxyz: [f64; 4],
    pub translation: [f64; 3],
}

/// Opaque latent object.
pub struct LcLatent {
    inner: LatentObject,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(LcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = if e.is_numerical() {
            LcStatus::NumericalError
        } else {
            LcStatus::InputError
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(LcStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside latentcarve");
            LcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    // SAFETY: non-null, and the caller guarantees a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

fn intrinsics(k: &LcIntrinsics) -> Result<CameraIntrinsics, Fail> {
    Ok(CameraIntrinsics::new(k.fu, k.fv, k.u0, k.v0, k.width as usize, k.height as usize)?)
}

fn transform(p: &LcPose) -> Result<RigidTransform, Fail> {
    let [w, x, y, z] = p.quaternion_wxyz;
    let q = Quaternion::new(w, x, y, z);
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(invalid(&format!("quaternion norm {n} is not unit")));
    }
    let t = Vector3::from(p.translation);
    if !t.iter().all(|v| v.is_finite()) {
        return Err(invalid("translation is not finite"));
    }
    Ok(RigidTransform::new(UnitQuaternion::from_quaternion(q), t))
}

fn pose_of(t: &RigidTransform) -> LcPose {
    let q = t.rotation.quaternion();
    LcPose {
        quaternion_wxyz: [q.w, q.i, q.j, q.k],
        translation: [t.translation.x, t.translation.y, t.translation.z],
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads the output directory of `latentcarve reconstruct`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lc_latent_load(dir: *const c_char, out: *mut *mut LcLatent) -> LcStatus {
    guard(|| {
        let dir = unsafe { path_arg(dir, "dir") }?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let (inner, _) = load_latent(dir)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(LcLatent { inner })) };
        Ok(())
    })
}

/// Builds a latent from every view of a scene directory by carving at `resolution`.
///
/// # Safety
/// `scene_dir` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lc_latent_from_scene(
    scene_dir: *const c_char,
    resolution: u32,
    out: *mut *mut LcLatent,
) -> LcStatus {
    guard(|| {
        let dir = unsafe { path_arg(scene_dir, "scene_dir") }?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        if resolution == 0 {
            return Err(invalid("resolution is zero"));
        }
        let scene = load_scene(dir)?;
        let inner = build_latent(
            &scene.views,
            &OccupancyEncoder::default(),
            &latentcarve::modeling::FusionStrategy::Carve,
            &ModelingConfig::new(resolution as usize),
            0.5 * scene.manifest.object.diameter_m,
        )?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(LcLatent { inner })) };
        Ok(())
    })
}

/// Releases a latent; null is ignored.
///
/// # Safety
/// `latent` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_latent_free(latent: *mut LcLatent) {
    if !latent.is_null() {
        // SAFETY: produced by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(latent) });
    }
}

/// Radius of the latent's bounding cube in meters.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lc_latent_radius(latent: *const LcLatent, out: *mut f64) -> LcStatus {
    guard(|| {
        let l = unsafe { deref(latent, "latent") }?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        // SAFETY: checked non-null above.
        unsafe { *out = l.inner.radius() };
        Ok(())
    })
}

/// Renders depth (meters, 0 where empty) and soft mask for `pose` into
/// row-major buffers of `len = width * height` values each.
///
/// # Safety
/// Pointers must be valid; the buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_render(
    latent: *const LcLatent,
    k: *const LcIntrinsics,
    pose: *const LcPose,
    depth_out: *mut f64,
    mask_out: *mut f64,
    len: usize,
) -> LcStatus {
    guard(|| {
        let l = unsafe { deref(latent, "latent") }?;
        let k = intrinsics(unsafe { deref(k, "intrinsics") }?)?;
        let e = transform(unsafe { deref(pose, "pose") }?)?;
        if depth_out.is_null() || mask_out.is_null() {
            return Err(invalid("output buffer is null"));
        }
        if len != k.width * k.height {
            return Err(invalid(&format!("len {len} is not {}x{}", k.width, k.height)));
        }
        let cfg = RunConfig::default();
        let view = render_frame(&l.inner, &CameraParams::new(k, e, Viewport::full(&k)), &cfg)?;
        // SAFETY: both buffers hold `len` doubles per the contract.
        let (d, m) = unsafe {
            (
                std::slice::from_raw_parts_mut(depth_out, len),
                std::slice::from_raw_parts_mut(mask_out, len),
            )
        };
        d.copy_from_slice(view.depth.data());
        m.copy_from_slice(view.mask.data());
        Ok(())
    })
}

/// Estimates the pose of an observed depth map and mask (`width * height`,
/// row-major, depth in meters, mask nonzero inside) with the default
/// configuration and the given search seed. `loss_out` may be null.
///
/// # Safety
/// Pointers must be valid; `depth` and `mask` must hold `width * height` values.
#[no_mangle]
pub unsafe extern "C" fn lc_estimate(
    latent: *const LcLatent,
    k: *const LcIntrinsics,
    depth: *const f64,
    mask: *const u8,
    seed: u64,
    pose_out: *mut LcPose,
    loss_out: *mut f64,
) -> LcStatus {
    guard(|| {
        let l = unsafe { deref(latent, "latent") }?;
        let k = intrinsics(unsafe { deref(k, "intrinsics") }?)?;
        if depth.is_null() || mask.is_null() || pose_out.is_null() {
            return Err(invalid("null buffer"));
        }
        let n = k.width * k.height;
        // SAFETY: both inputs hold `n` values per the contract.
        let (d, m) = unsafe { (std::slice::from_raw_parts(depth, n), std::slice::from_raw_parts(mask, n)) };
        let view = ObservedView::new(
            Raster::filled(k.width, k.height, [0.0; 3]),
            Raster::from_vec(k.width, k.height, m.iter().map(|&v| if v != 0 { 1.0 } else { 0.0 }).collect()),
            Raster::from_vec(k.width, k.height, d.to_vec()),
            CameraParams::new(k, RigidTransform::identity(), Viewport::full(&k)),
        )?;
        let mut cfg = EstimateConfig::default();
        cfg.coarse.seed = seed;
        let est = estimate(&view, &l.inner, &cfg)?;
        // SAFETY: checked non-null above; `loss_out` optional.
        unsafe {
            *pose_out = pose_of(&est.transform());
            if !loss_out.is_null() {
                *loss_out = est.loss.total;
            }
        }
        Ok(())
    })
}

/// Unit quaternion `w, x, y, z` of a log quaternion (rotation angle `2 |omega|`).
///
/// # Safety
/// `omega` must hold 3 doubles and `q_out` 4.
#[no_mangle]
pub unsafe extern "C" fn lc_quat_exp(omega: *const f64, q_out: *mut f64) -> LcStatus {
    guard(|| {
        if omega.is_null() || q_out.is_null() {
            return Err(invalid("null buffer"));
        }
        // SAFETY: sizes per the contract.
        let (w, out) = unsafe { (std::slice::from_raw_parts(omega, 3), std::slice::from_raw_parts_mut(q_out, 4)) };
        if !w.iter().all(|v| v.is_finite()) {
            return Err(invalid("omega is not finite"));
        }
        let q = quat_exp(&LogQuaternion::new(w[0], w[1], w[2]));
        out.copy_from_slice(&[q.w, q.i, q.j, q.k]);
        Ok(())
    })
}

/// Mean distance between `n` object points (`3n` doubles) under the two poses.
///
/// # Safety
/// `points` must hold `3 * n` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lc_metric_add(
    points: *const f64,
    n: usize,
    gt: *const LcPose,
    pred: *const LcPose,
    out: *mut f64,
) -> LcStatus {
    guard(|| {
        if points.is_null() || out.is_null() {
            return Err(invalid("null buffer"));
        }
        let gt = transform(unsafe { deref(gt, "gt") }?)?;
        let pred = transform(unsafe { deref(pred, "pred") }?)?;
        // SAFETY: size per the contract.
        let flat = unsafe { std::slice::from_raw_parts(points, 3 * n) };
        let pts = ModelPoints::new(flat.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect())?;
        // SAFETY: checked non-null above.
        unsafe { *out = metric_add(&pts, &gt, &pred) };
        Ok(())
    })
}
