//! C ABI over the lift3d toolkit: box-token parsing and serialization,
//! pixel/camera projection, axis-aligned 3D IoU, clock bearings, and answer
//! grading. Box tokens are opaque handles; every fallible call returns a
//! status code and records a message retrievable with [`l3d_last_error`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};

use libc::{c_char, size_t};

use lift3d::boxlang::{parse_box, serialize_box, BoxToken};
use lift3d::eval::{grade_direction, grade_numeric};
use lift3d::geom::{iou3d_aabb, uvz_to_xyz, xyz_to_uvz, Box3D, CameraIntrinsics, Point3, Rect2D};
use lift3d::lift::ObjectRecord;
use lift3d::spatial::{clock_direction, ClockHour};

/// Status codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L3dStatus {
    Ok = 0,
    InvalidArgument = 1,
    ParseError = 2,
    BehindCamera = 3,
    BufferTooSmall = 4,
}

/// Pinhole intrinsics. `width`/`height` are the image size in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct L3dIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// Opaque parsed box token. Create with `l3d_box_token_parse`, release with
/// `l3d_box_token_free`.
pub struct L3dBoxToken {
    token: BoxToken,
    category: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: impl std::fmt::Display) {
    let text = CString::new(message.to_string().replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

fn fail(status: L3dStatus, message: impl std::fmt::Display) -> L3dStatus {
    set_error(message);
    status
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn l3d_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn l3d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn intrinsics_from(raw: &L3dIntrinsics) -> Result<CameraIntrinsics, String> {
    CameraIntrinsics::new(raw.fx, raw.fy, raw.cx, raw.cy, raw.width, raw.height)
        .map_err(|e| e.to_string())
}

/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
/// On success `*out` owns a token that must be released with
/// `l3d_box_token_free`.
#[no_mangle]
pub unsafe extern "C" fn l3d_box_token_parse(
    text: *const c_char,
    out: *mut *mut L3dBoxToken,
) -> L3dStatus {
    if text.is_null() || out.is_null() {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(s) => s,
        Err(e) => return fail(L3dStatus::InvalidArgument, format!("invalid UTF-8: {e}")),
    };
    match parse_box(text) {
        Ok(token) => {
            let category = CString::new(token.category.clone())
                .unwrap_or_else(|_| CString::new("invalid").unwrap());
            *out = Box::into_raw(Box::new(L3dBoxToken { token, category }));
            L3dStatus::Ok
        }
        Err(e) => fail(L3dStatus::ParseError, e),
    }
}

/// # Safety
/// `token` must come from `l3d_box_token_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn l3d_box_token_free(token: *mut L3dBoxToken) {
    if !token.is_null() {
        drop(Box::from_raw(token));
    }
}

/// # Safety
/// `token` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn l3d_box_token_id(token: *const L3dBoxToken) -> u32 {
    token.as_ref().map(|t| t.token.id).unwrap_or(u32::MAX)
}

/// Category string of the token; valid until the token is freed.
///
/// # Safety
/// `token` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn l3d_box_token_category(token: *const L3dBoxToken) -> *const c_char {
    match token.as_ref() {
        Some(t) => t.category.as_ptr(),
        None => std::ptr::null(),
    }
}

/// Writes (u, v, z) into `out[0..3]`.
///
/// # Safety
/// `token` must be a live handle and `out` must point at 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn l3d_box_token_uvz(token: *const L3dBoxToken, out: *mut f64) -> L3dStatus {
    let (Some(t), false) = (token.as_ref(), out.is_null()) else {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    };
    std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[t.token.u, t.token.v, t.token.z]);
    L3dStatus::Ok
}

/// Writes (sx, sy, sz) into `out[0..3]`.
///
/// # Safety
/// `token` must be a live handle and `out` must point at 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn l3d_box_token_size(token: *const L3dBoxToken, out: *mut f64) -> L3dStatus {
    let (Some(t), false) = (token.as_ref(), out.is_null()) else {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    };
    std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[t.token.sx, t.token.sy, t.token.sz]);
    L3dStatus::Ok
}

unsafe fn write_str(text: &str, buf: *mut c_char, cap: size_t) -> L3dStatus {
    if buf.is_null() {
        return fail(L3dStatus::InvalidArgument, "null buffer");
    }
    let bytes = text.as_bytes();
    if bytes.len() + 1 > cap {
        return fail(
            L3dStatus::BufferTooSmall,
            format!("need {} bytes, have {cap}", bytes.len() + 1),
        );
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    L3dStatus::Ok
}

/// Renders the canonical wire form of a token into `buf`.
///
/// # Safety
/// `token` must be a live handle and `buf` must hold at least `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn l3d_box_token_render(
    token: *const L3dBoxToken,
    buf: *mut c_char,
    cap: size_t,
) -> L3dStatus {
    let Some(t) = token.as_ref() else {
        return fail(L3dStatus::InvalidArgument, "null token");
    };
    write_str(&t.token.render(), buf, cap)
}

/// Serializes a metric box to its wire token: center/size are camera-frame
/// meters, the center is projected through the intrinsics.
///
/// # Safety
/// `category` must be a valid NUL-terminated string, `center` and `size`
/// must point at 3 doubles each, and `buf` must hold at least `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn l3d_serialize_box(
    id: u32,
    category: *const c_char,
    center: *const f64,
    size: *const f64,
    intr: *const L3dIntrinsics,
    buf: *mut c_char,
    cap: size_t,
) -> L3dStatus {
    if category.is_null() || center.is_null() || size.is_null() || intr.is_null() {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    }
    let category = match CStr::from_ptr(category).to_str() {
        Ok(s) => s.to_string(),
        Err(e) => return fail(L3dStatus::InvalidArgument, format!("invalid UTF-8: {e}")),
    };
    let intr = match intrinsics_from(&*intr) {
        Ok(i) => i,
        Err(e) => return fail(L3dStatus::InvalidArgument, e),
    };
    let c = std::slice::from_raw_parts(center, 3);
    let s = std::slice::from_raw_parts(size, 3);
    let record = ObjectRecord {
        id,
        category,
        box3d: Box3D::new(Point3::new(c[0], c[1], c[2]), Point3::new(s[0], s[1], s[2])),
        source_rect: Rect2D::new(0.0, 0.0, 1.0, 1.0).unwrap(),
        point_count: 0,
    };
    match serialize_box(&record, &intr) {
        Ok(text) => write_str(&text, buf, cap),
        Err(e) => {
            let status = match &e {
                lift3d::boxlang::BoxLangError::Geom(_) => L3dStatus::BehindCamera,
                _ => L3dStatus::InvalidArgument,
            };
            fail(status, e)
        }
    }
}

/// Back-projects pixel (u, v) at depth z to camera-frame meters in `out[0..3]`.
///
/// # Safety
/// `intr` must be valid and `out` must point at 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn l3d_uvz_to_xyz(
    intr: *const L3dIntrinsics,
    u: f64,
    v: f64,
    z: f64,
    out: *mut f64,
) -> L3dStatus {
    if intr.is_null() || out.is_null() {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    }
    let intr = match intrinsics_from(&*intr) {
        Ok(i) => i,
        Err(e) => return fail(L3dStatus::InvalidArgument, e),
    };
    match uvz_to_xyz(u, v, z, &intr) {
        Ok(p) => {
            std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[p.x, p.y, p.z]);
            L3dStatus::Ok
        }
        Err(e) => fail(L3dStatus::BehindCamera, e),
    }
}

/// Projects a camera-frame point to (u, v, z) in `out[0..3]`.
///
/// # Safety
/// `intr` must be valid, `xyz` and `out` must point at 3 doubles each.
#[no_mangle]
pub unsafe extern "C" fn l3d_xyz_to_uvz(
    intr: *const L3dIntrinsics,
    xyz: *const f64,
    out: *mut f64,
) -> L3dStatus {
    if intr.is_null() || xyz.is_null() || out.is_null() {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    }
    let intr = match intrinsics_from(&*intr) {
        Ok(i) => i,
        Err(e) => return fail(L3dStatus::InvalidArgument, e),
    };
    let p = std::slice::from_raw_parts(xyz, 3);
    match xyz_to_uvz(Point3::new(p[0], p[1], p[2]), &intr) {
        Ok((u, v, z)) => {
            std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[u, v, z]);
            L3dStatus::Ok
        }
        Err(e) => fail(L3dStatus::BehindCamera, e),
    }
}

/// IoU of two axis-aligned camera-frame boxes given as center/size triples.
///
/// # Safety
/// All four pointers must reference 3 doubles each.
#[no_mangle]
pub unsafe extern "C" fn l3d_iou3d(
    center_a: *const f64,
    size_a: *const f64,
    center_b: *const f64,
    size_b: *const f64,
) -> f64 {
    if center_a.is_null() || size_a.is_null() || center_b.is_null() || size_b.is_null() {
        set_error("null pointer argument");
        return -1.0;
    }
    let read = |p: *const f64| {
        let s = std::slice::from_raw_parts(p, 3);
        Point3::new(s[0], s[1], s[2])
    };
    iou3d_aabb(
        &Box3D::new(read(center_a), read(size_a)),
        &Box3D::new(read(center_b), read(size_b)),
    )
}

/// Clock-hour bearing (1..=12) of `target` from `reference` on the xz-plane.
///
/// # Safety
/// `reference` and `target` must point at 3 doubles each; `out_hour` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn l3d_clock_direction(
    reference: *const f64,
    target: *const f64,
    out_hour: *mut u8,
) -> L3dStatus {
    if reference.is_null() || target.is_null() || out_hour.is_null() {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    }
    let read = |p: *const f64| {
        let s = std::slice::from_raw_parts(p, 3);
        Box3D::new(Point3::new(s[0], s[1], s[2]), Point3::new(1.0, 1.0, 1.0))
    };
    match clock_direction(&read(reference), &read(target)) {
        Ok(c) => {
            *out_hour = c.hour.get();
            L3dStatus::Ok
        }
        Err(e) => fail(L3dStatus::InvalidArgument, e),
    }
}

/// Grades a free-text numeric prediction against a metric reference with a
/// relative tolerance (boundary inclusive).
///
/// # Safety
/// `prediction` must be a valid NUL-terminated string and `out_correct` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn l3d_grade_numeric(
    prediction: *const c_char,
    reference_m: f64,
    tolerance: f64,
    out_correct: *mut bool,
) -> L3dStatus {
    if prediction.is_null() || out_correct.is_null() {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    }
    let text = match CStr::from_ptr(prediction).to_str() {
        Ok(s) => s,
        Err(e) => return fail(L3dStatus::InvalidArgument, format!("invalid UTF-8: {e}")),
    };
    *out_correct = grade_numeric(text, reference_m, tolerance).correct;
    L3dStatus::Ok
}

/// Grades a free-text clock-direction prediction against a reference hour.
///
/// # Safety
/// `prediction` must be a valid NUL-terminated string and `out_correct` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn l3d_grade_direction(
    prediction: *const c_char,
    reference_hour: u8,
    out_correct: *mut bool,
) -> L3dStatus {
    if prediction.is_null() || out_correct.is_null() {
        return fail(L3dStatus::InvalidArgument, "null pointer argument");
    }
    let Some(hour) = ClockHour::new(reference_hour) else {
        return fail(
            L3dStatus::InvalidArgument,
            format!("reference hour {reference_hour} not in 1..=12"),
        );
    };
    let text = match CStr::from_ptr(prediction).to_str() {
        Ok(s) => s,
        Err(e) => return fail(L3dStatus::InvalidArgument, format!("invalid UTF-8: {e}")),
    };
    *out_correct = grade_direction(text, hour).correct;
    L3dStatus::Ok
}
