//! Pinhole camera geometry, depth/point rasters, axis-aligned 3D boxes, and the
//! IoU/projection primitives the rest of the toolkit consumes.
//!
//! Camera frame convention: x right, y down, z forward. All positions are
//! meters in the camera frame; pixel coordinates follow image convention with
//! u along columns and v along rows.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("point behind camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("invalid rectangle: ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidRect {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
}

/// 3D point or axis-aligned extent in the camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(self, other: Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn axis(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }
}

/// Pinhole camera parameters. Skew is assumed zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeomError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeomError::InvalidIntrinsics(format!(
                "image size must be nonzero, got {width}x{height}"
            )));
        }
        if !(0.0..(width as f64)).contains(&cx) || !(0.0..(height as f64)).contains(&cy) {
            return Err(GeomError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside image {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Fallback intrinsics for inputs that carry none: 60° horizontal field of
    /// view, square pixels, principal point at the image center.
    pub fn from_60deg_hfov(width: u32, height: u32) -> Result<Self, GeomError> {
        let f = (width as f64 / 2.0) / (30.0_f64).to_radians().tan();
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    /// Length of the image diagonal in pixels.
    pub fn diagonal(&self) -> f64 {
        ((self.width as f64).powi(2) + (self.height as f64).powi(2)).sqrt()
    }
}

/// H×W raster of metric depth with per-pixel validity.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a depth map, marking nonpositive and non-finite entries invalid.
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, GeomError> {
        let n = width as usize * height as usize;
        if values.len() != n {
            return Err(GeomError::DimensionMismatch(format!(
                "depth raster has {} values, expected {}x{}={}",
                values.len(),
                width,
                height,
                n
            )));
        }
        let valid = values.iter().map(|&z| z.is_finite() && z > 0.0).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, row: u32, col: u32) -> Option<f64> {
        let i = row as usize * self.width as usize + col as usize;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// H×W raster of back-projected camera-frame points with per-pixel validity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    width: u32,
    height: u32,
    points: Vec<Point3>,
    valid: Vec<bool>,
}

impl PointMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, row: u32, col: u32) -> Option<Point3> {
        let i = row as usize * self.width as usize + col as usize;
        self.valid[i].then(|| self.points[i])
    }

    /// Iterates (row, col, point) over valid cells in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (u32, u32, Point3)> + '_ {
        let w = self.width as usize;
        self.points
            .iter()
            .zip(self.valid.iter())
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .map(move |(i, (&p, _))| ((i / w) as u32, (i % w) as u32, p))
    }
}

/// Metric axis-aligned 3D box in the camera frame: center plus extents along
/// the camera axes. Degenerate (zero) extents are representable; lifting
/// rejects them at plausibility time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Point3,
    /// Extents (sx, sy, sz) along the camera axes, stored in the x/y/z fields.
    pub size: Point3,
}

impl Box3D {
    pub const fn new(center: Point3, size: Point3) -> Self {
        Self { center, size }
    }

    pub fn min_corner(&self) -> Point3 {
        Point3::new(
            self.center.x - self.size.x / 2.0,
            self.center.y - self.size.y / 2.0,
            self.center.z - self.size.z / 2.0,
        )
    }

    pub fn max_corner(&self) -> Point3 {
        Point3::new(
            self.center.x + self.size.x / 2.0,
            self.center.y + self.size.y / 2.0,
            self.center.z + self.size.z / 2.0,
        )
    }

    pub fn corners(&self) -> [Point3; 8] {
        let lo = self.min_corner();
        let hi = self.max_corner();
        [
            Point3::new(lo.x, lo.y, lo.z),
            Point3::new(hi.x, lo.y, lo.z),
            Point3::new(lo.x, hi.y, lo.z),
            Point3::new(hi.x, hi.y, lo.z),
            Point3::new(lo.x, lo.y, hi.z),
            Point3::new(hi.x, lo.y, hi.z),
            Point3::new(lo.x, hi.y, hi.z),
            Point3::new(hi.x, hi.y, hi.z),
        ]
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    pub fn contains(&self, p: Point3) -> bool {
        let lo = self.min_corner();
        let hi = self.max_corner();
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z
    }
}

/// 2D pixel-space rectangle, x_min < x_max and y_min < y_max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeomError> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(GeomError::InvalidRect {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Back-projects every valid depth pixel to a camera-frame 3D point:
/// x = (u − cx)·z/fx, y = (v − cy)·z/fy, z = depth.
pub fn back_project(depth: &DepthMap, intr: &CameraIntrinsics) -> Result<PointMap, GeomError> {
    if depth.width != intr.width || depth.height != intr.height {
        return Err(GeomError::DimensionMismatch(format!(
            "depth raster {}x{} does not match intrinsics {}x{}",
            depth.width, depth.height, intr.width, intr.height
        )));
    }
    let w = depth.width as usize;
    let n = w * depth.height as usize;
    let mut points = vec![Point3::new(0.0, 0.0, 0.0); n];
    for (i, slot) in points.iter_mut().enumerate() {
        if depth.valid[i] {
            let u = (i % w) as f64;
            let v = (i / w) as f64;
            let z = depth.values[i];
            *slot = Point3::new((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z);
        }
    }
    Ok(PointMap {
        width: depth.width,
        height: depth.height,
        points,
        valid: depth.valid.clone(),
    })
}

/// Projects a camera-frame point to pixel coordinates (u, v).
pub fn project_point(p: Point3, intr: &CameraIntrinsics) -> Result<(f64, f64), GeomError> {
    if p.z <= 0.0 {
        return Err(GeomError::BehindCamera { z: p.z });
    }
    Ok((intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy))
}

/// Recovers a camera-frame point from pixel coordinates plus depth.
pub fn uvz_to_xyz(u: f64, v: f64, z: f64, intr: &CameraIntrinsics) -> Result<Point3, GeomError> {
    if z <= 0.0 {
        return Err(GeomError::BehindCamera { z });
    }
    Ok(Point3::new(
        (u - intr.cx) * z / intr.fx,
        (v - intr.cy) * z / intr.fy,
        z,
    ))
}

/// Projects a camera-frame point to (u, v, z). Inverse of [`uvz_to_xyz`].
pub fn xyz_to_uvz(p: Point3, intr: &CameraIntrinsics) -> Result<(f64, f64, f64), GeomError> {
    let (u, v) = project_point(p, intr)?;
    Ok((u, v, p.z))
}

/// IoU of two axis-aligned boxes. Degenerate or empty overlap yields 0.
/// Volumes are derived from the same corner coordinates as the intersection
/// so that identical boxes score exactly 1.
pub fn iou3d_aabb(a: &Box3D, b: &Box3D) -> f64 {
    let a_lo = a.min_corner();
    let a_hi = a.max_corner();
    let b_lo = b.min_corner();
    let b_hi = b.max_corner();
    let corner_volume = |lo: Point3, hi: Point3| (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
    let ix = (a_hi.x.min(b_hi.x) - a_lo.x.max(b_lo.x)).max(0.0);
    let iy = (a_hi.y.min(b_hi.y) - a_lo.y.max(b_lo.y)).max(0.0);
    let iz = (a_hi.z.min(b_hi.z) - a_lo.z.max(b_lo.z)).max(0.0);
    let inter = ix * iy * iz;
    let union = corner_volume(a_lo, a_hi) + corner_volume(b_lo, b_hi) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Axis-aligned 2D hull of a box's 8 projected corners. Fails if any corner
/// lies behind the camera.
pub fn project_box(b: &Box3D, intr: &CameraIntrinsics) -> Result<Rect2D, GeomError> {
    let mut x_min = f64::INFINITY;
    let mut y_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for corner in b.corners() {
        let (u, v) = project_point(corner, intr)?;
        x_min = x_min.min(u);
        y_min = y_min.min(v);
        x_max = x_max.max(u);
        y_max = y_max.max(v);
    }
    Rect2D::new(x_min, y_min, x_max, y_max)
}

/// Standard 2D IoU.
pub fn rect_iou(a: &Rect2D, b: &Rect2D) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Euclidean distance of rectangle centers divided by the image diagonal.
pub fn rect_center_offset(a: &Rect2D, b: &Rect2D, image_diagonal: f64) -> f64 {
    assert!(image_diagonal > 0.0, "image diagonal must be positive");
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() / image_diagonal
}
