//! Lifts a masked depth region into a filtered, plausibility-checked metric
//! 3D box, and batches that over whole scenes.
//!
//! The per-object pipeline is back-project → extract masked points → depth-MAD
//! gate → per-axis percentile trim → axis-aligned fit → plausibility check.
//! Objects that fail plausibility are dropped; survivors get dense ids in
//! input order.

use serde::{Deserialize, Serialize};

use crate::boxlang::sanitize_category;
use crate::geom::{
    back_project, Box3D, CameraIntrinsics, DepthMap, GeomError, Point3, PointMap, Rect2D,
};

#[derive(Debug, thiserror::Error)]
pub enum LiftError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot fit a box to an empty point set")]
    NoPoints,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// H×W boolean raster marking an object's pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self, LiftError> {
        let n = width as usize * height as usize;
        if data.len() != n {
            return Err(LiftError::DimensionMismatch(format!(
                "mask raster has {} entries, expected {}x{}={}",
                data.len(),
                width,
                height,
                n
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Box-interior fallback mask: marks every pixel whose integer coordinate
    /// lies inside the rectangle (cols [floor(x_min), ceil(x_max)) and rows
    /// [floor(y_min), ceil(y_max)), clamped to the image).
    pub fn from_rect(rect: &Rect2D, width: u32, height: u32) -> Self {
        let col_lo = rect.x_min.floor().max(0.0) as u32;
        let col_hi = (rect.x_max.ceil().max(0.0) as u32).min(width);
        let row_lo = rect.y_min.floor().max(0.0) as u32;
        let row_hi = (rect.y_max.ceil().max(0.0) as u32).min(height);
        let mut data = vec![false; width as usize * height as usize];
        for row in row_lo..row_hi {
            for col in col_lo..col_hi {
                data[row as usize * width as usize + col as usize] = true;
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn true_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Knobs for the outlier filters and the plausibility rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftParams {
    /// MAD multiplier for the depth gate.
    pub mad_k: f64,
    /// Absolute depth tolerance floor in meters.
    pub mad_floor_m: f64,
    /// Lower percentile of the per-axis trim, in percent.
    pub trim_lo: f64,
    /// Upper percentile of the per-axis trim, in percent.
    pub trim_hi: f64,
    /// Minimum surviving points for a plausible box.
    pub min_points: usize,
    /// Minimum box extent along any axis, meters.
    pub min_extent_m: f64,
    /// Maximum box extent along any axis, meters.
    pub max_extent_m: f64,
    /// Maximum box volume, cubic meters.
    pub max_volume_m3: f64,
}

impl Default for LiftParams {
    fn default() -> Self {
        Self {
            mad_k: 3.0,
            mad_floor_m: 0.05,
            trim_lo: 1.0,
            trim_hi: 99.0,
            min_points: 50,
            min_extent_m: 0.01,
            max_extent_m: 50.0,
            max_volume_m3: 1e4,
        }
    }
}

impl LiftParams {
    pub fn validate(&self) -> Result<(), LiftError> {
        if !(0.0 <= self.trim_lo && self.trim_lo < self.trim_hi && self.trim_hi <= 100.0) {
            return Err(LiftError::DimensionMismatch(format!(
                "trim percentiles must satisfy 0 <= lo < hi <= 100, got {} / {}",
                self.trim_lo, self.trim_hi
            )));
        }
        let thresholds = [
            self.mad_k,
            self.mad_floor_m,
            self.min_extent_m,
            self.max_extent_m,
            self.max_volume_m3,
        ];
        if thresholds.iter().any(|&t| !t.is_finite() || t <= 0.0) || self.min_points == 0 {
            return Err(LiftError::DimensionMismatch(
                "all lift thresholds must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stable hex digest of the parameter values, recorded in provenance so a
    /// repository line can be traced back to the exact filter settings.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_value(self).expect("params serialize");
        let bytes = serde_json::to_string(&canonical).expect("params to string");
        let hash = Sha256::digest(bytes.as_bytes());
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One lifted object: identifier, category, metric box, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub category: String,
    pub box3d: Box3D,
    pub source_rect: Rect2D,
    pub point_count: usize,
}

/// Image metadata plus the object records that survived lifting. One line of
/// the 3D annotation repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub scene_id: String,
    pub intrinsics: CameraIntrinsics,
    pub depth_source: String,
    pub objects: Vec<ObjectRecord>,
}

/// A 2D annotation to lift: category, source rectangle, and pixel mask.
#[derive(Debug, Clone)]
pub struct ObjectInput {
    pub category: String,
    pub rect: Rect2D,
    pub mask: Mask,
}

/// Why a candidate box was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MinExtent,
    MaxExtent,
    MaxVolume,
    MinPoints,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::MinExtent => "min_extent",
            RejectReason::MaxExtent => "max_extent",
            RejectReason::MaxVolume => "max_volume",
            RejectReason::MinPoints => "min_points",
        };
        f.write_str(s)
    }
}

/// Collects the valid back-projected points whose pixel lies in the mask.
pub fn extract_object_points(pm: &PointMap, mask: &Mask) -> Result<Vec<Point3>, LiftError> {
    if pm.width() != mask.width || pm.height() != mask.height {
        return Err(LiftError::DimensionMismatch(format!(
            "point map {}x{} does not match mask {}x{}",
            pm.width(),
            pm.height(),
            mask.width,
            mask.height
        )));
    }
    Ok(pm
        .iter_valid()
        .filter(|&(row, col, _)| mask.get(row, col))
        .map(|(_, _, p)| p)
        .collect())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Linear-interpolation percentile on sorted values, p in [0, 100].
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let q = p / 100.0 * (n - 1) as f64;
    let i = q.floor() as usize;
    let frac = q - i as f64;
    if i + 1 < n {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[n - 1]
    }
}

/// Depth gate: keep points with |z − median(z)| ≤ max(k·1.4826·MAD(z), floor).
fn mad_depth_gate(points: &[Point3], params: &LiftParams) -> Vec<Point3> {
    let mut zs: Vec<f64> = points.iter().map(|p| p.z).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = median(&zs);
    let mut devs: Vec<f64> = zs.iter().map(|z| (z - med).abs()).collect();
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mad = median(&devs);
    let band = (params.mad_k * 1.4826 * mad).max(params.mad_floor_m);
    points
        .iter()
        .copied()
        .filter(|p| (p.z - med).abs() <= band)
        .collect()
}

/// Keeps points inside the [trim_lo, trim_hi] percentile band on every axis.
fn percentile_trim(points: &[Point3], params: &LiftParams) -> Vec<Point3> {
    let mut bounds = [(f64::NEG_INFINITY, f64::INFINITY); 3];
    for (axis, bound) in bounds.iter_mut().enumerate() {
        let mut vals: Vec<f64> = points.iter().map(|p| p.axis(axis)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        *bound = (
            percentile(&vals, params.trim_lo),
            percentile(&vals, params.trim_hi),
        );
    }
    points
        .iter()
        .copied()
        .filter(|p| {
            (0..3).all(|axis| {
                let v = p.axis(axis);
                v >= bounds[axis].0 && v <= bounds[axis].1
            })
        })
        .collect()
}

/// Two-stage outlier filter: depth-MAD gate then per-axis percentile trim.
/// May return an empty set; plausibility catches that downstream.
pub fn filter_outliers(points: &[Point3], params: &LiftParams) -> Vec<Point3> {
    if points.is_empty() {
        return Vec::new();
    }
    let gated = mad_depth_gate(points, params);
    if gated.is_empty() {
        return gated;
    }
    percentile_trim(&gated, params)
}

/// Tight axis-aligned box over a nonempty point set.
pub fn fit_aabb(points: &[Point3]) -> Result<Box3D, LiftError> {
    if points.is_empty() {
        return Err(LiftError::NoPoints);
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        lo.z = lo.z.min(p.z);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
        hi.z = hi.z.max(p.z);
    }
    Ok(Box3D::new(
        Point3::new(
            (lo.x + hi.x) / 2.0,
            (lo.y + hi.y) / 2.0,
            (lo.z + hi.z) / 2.0,
        ),
        Point3::new(hi.x - lo.x, hi.y - lo.y, hi.z - lo.z),
    ))
}

/// Applies the plausibility rules in order and names the first one that fails.
pub fn plausibility_check(
    box3d: &Box3D,
    point_count: usize,
    params: &LiftParams,
) -> Result<(), RejectReason> {
    let extents = [box3d.size.x, box3d.size.y, box3d.size.z];
    if extents.iter().any(|&s| s < params.min_extent_m) {
        return Err(RejectReason::MinExtent);
    }
    if extents.iter().any(|&s| s > params.max_extent_m) {
        return Err(RejectReason::MaxExtent);
    }
    if box3d.volume() > params.max_volume_m3 {
        return Err(RejectReason::MaxVolume);
    }
    if point_count < params.min_points {
        return Err(RejectReason::MinPoints);
    }
    Ok(())
}

/// Per-scene lift summary: survivors plus reject counts by reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LiftStats {
    pub accepted: usize,
    pub rejects: Vec<(RejectReason, usize)>,
}

impl LiftStats {
    fn record_reject(&mut self, reason: RejectReason) {
        if let Some(slot) = self.rejects.iter_mut().find(|(r, _)| *r == reason) {
            slot.1 += 1;
        } else {
            self.rejects.push((reason, 1));
        }
    }
}

/// Lifts every annotated object of one scene. Rejected objects are omitted;
/// survivor ids are dense 0..n−1 in input order.
pub fn lift_scene(
    scene_id: &str,
    intr: &CameraIntrinsics,
    depth: &DepthMap,
    objects: &[ObjectInput],
    params: &LiftParams,
    depth_source: &str,
) -> Result<(SceneAnnotation, LiftStats), LiftError> {
    params.validate()?;
    let pm = back_project(depth, intr)?;
    let mut records = Vec::new();
    let mut stats = LiftStats::default();
    for obj in objects {
        let raw = extract_object_points(&pm, &obj.mask)?;
        if raw.is_empty() {
            stats.record_reject(RejectReason::MinPoints);
            continue;
        }
        let kept = filter_outliers(&raw, params);
        let box3d = match fit_aabb(&kept) {
            Ok(b) => b,
            Err(LiftError::NoPoints) => {
                stats.record_reject(RejectReason::MinPoints);
                continue;
            }
            Err(e) => return Err(e),
        };
        match plausibility_check(&box3d, kept.len(), params) {
            Ok(()) => {
                records.push(ObjectRecord {
                    id: records.len() as u32,
                    category: sanitize_category(&obj.category),
                    box3d,
                    source_rect: obj.rect,
                    point_count: kept.len(),
                });
                stats.accepted += 1;
            }
            Err(reason) => stats.record_reject(reason),
        }
    }
    Ok((
        SceneAnnotation {
            scene_id: scene_id.to_string(),
            intrinsics: *intr,
            depth_source: depth_source.to_string(),
            objects: records,
        },
        stats,
    ))
}
