//! JSONL persistence: one record per line, UTF-8, lexicographically stable
//! key order, trailing newline. Readers validate every line and report line
//! numbers; strict mode aborts on the first bad line, lenient mode skips it
//! with a diagnostic.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::boxlang::{quantize2, ParseMode};
use crate::geom::{xyz_to_uvz, Box3D, CameraIntrinsics, Point3, Rect2D};
use crate::lift::{ObjectRecord, SceneAnnotation};
use crate::qa::QAItem;

use super::PipelineError;

/// Version stamped into every JSONL line this toolkit writes.
pub const SCHEMA_VERSION: u32 = 1;

/// One scene of the 3D annotation repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoRecord {
    pub schema_version: u32,
    pub scene_id: String,
    pub intrinsics: CameraIntrinsics,
    pub objects: Vec<RepoObject>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoObject {
    pub id: u32,
    pub category: String,
    pub center_xyz: [f64; 3],
    pub size_xyz: [f64; 3],
    /// Pixel projection plus depth of the center, quantized to 2 decimals
    /// like the box-language wire format.
    pub uvz: [f64; 3],
    pub source_rect: [f64; 4],
    pub point_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub depth_source: String,
    pub dataset: String,
    pub lift_params_digest: String,
    /// How many objects used the box-interior mask fallback.
    #[serde(default)]
    pub mask_fallbacks: usize,
}

/// One generated QA line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    pub schema_version: u32,
    pub item: QAItem,
}

/// One model prediction, joined to references by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub schema_version: u32,
    pub id: String,
    pub prediction: String,
}

impl RepoRecord {
    pub fn from_scene(
        scene: &SceneAnnotation,
        dataset: &str,
        lift_params_digest: &str,
        mask_fallbacks: usize,
    ) -> Result<Self, PipelineError> {
        let mut objects = Vec::with_capacity(scene.objects.len());
        for rec in &scene.objects {
            let (u, v, z) = xyz_to_uvz(rec.box3d.center, &scene.intrinsics)
                .map_err(|e| PipelineError::Input(format!("scene {}: {e}", scene.scene_id)))?;
            objects.push(RepoObject {
                id: rec.id,
                category: rec.category.clone(),
                center_xyz: [rec.box3d.center.x, rec.box3d.center.y, rec.box3d.center.z],
                size_xyz: [rec.box3d.size.x, rec.box3d.size.y, rec.box3d.size.z],
                uvz: [quantize2(u), quantize2(v), quantize2(z)],
                source_rect: [
                    rec.source_rect.x_min,
                    rec.source_rect.y_min,
                    rec.source_rect.x_max,
                    rec.source_rect.y_max,
                ],
                point_count: rec.point_count,
            });
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            scene_id: scene.scene_id.clone(),
            intrinsics: scene.intrinsics,
            objects,
            provenance: Provenance {
                depth_source: scene.depth_source.clone(),
                dataset: dataset.to_string(),
                lift_params_digest: lift_params_digest.to_string(),
                mask_fallbacks,
            },
        })
    }

    /// Rebuilds the in-memory scene, checking that stored uvz and center_xyz
    /// agree through the intrinsics within the 2-decimal quantization bound.
    pub fn to_scene(&self) -> Result<SceneAnnotation, PipelineError> {
        let intr = CameraIntrinsics::new(
            self.intrinsics.fx,
            self.intrinsics.fy,
            self.intrinsics.cx,
            self.intrinsics.cy,
            self.intrinsics.width,
            self.intrinsics.height,
        )
        .map_err(|e| PipelineError::Input(format!("scene {}: {e}", self.scene_id)))?;
        let mut objects = Vec::with_capacity(self.objects.len());
        for o in &self.objects {
            let center = Point3::new(o.center_xyz[0], o.center_xyz[1], o.center_xyz[2]);
            let (u, v, z) = xyz_to_uvz(center, &intr)
                .map_err(|e| PipelineError::Input(format!("scene {}: {e}", self.scene_id)))?;
            let tol = 0.005 + 1e-9;
            if (quantize2(u) - o.uvz[0]).abs() > tol
                || (quantize2(v) - o.uvz[1]).abs() > tol
                || (quantize2(z) - o.uvz[2]).abs() > tol
            {
                return Err(PipelineError::Input(format!(
                    "scene {} object {}: uvz {:?} inconsistent with center {:?}",
                    self.scene_id, o.id, o.uvz, o.center_xyz
                )));
            }
            let rect = Rect2D::new(
                o.source_rect[0],
                o.source_rect[1],
                o.source_rect[2],
                o.source_rect[3],
            )
            .map_err(|e| PipelineError::Input(format!("scene {}: {e}", self.scene_id)))?;
            objects.push(ObjectRecord {
                id: o.id,
                category: o.category.clone(),
                box3d: Box3D::new(
                    center,
                    Point3::new(o.size_xyz[0], o.size_xyz[1], o.size_xyz[2]),
                ),
                source_rect: rect,
                point_count: o.point_count,
            });
        }
        Ok(SceneAnnotation {
            scene_id: self.scene_id.clone(),
            intrinsics: intr,
            depth_source: self.provenance.depth_source.clone(),
            objects,
        })
    }

    /// The (category, box) pairs detection evaluation matches against.
    pub fn detection_gts(&self) -> Vec<(String, Box3D)> {
        self.objects
            .iter()
            .map(|o| {
                (
                    o.category.clone(),
                    Box3D::new(
                        Point3::new(o.center_xyz[0], o.center_xyz[1], o.center_xyz[2]),
                        Point3::new(o.size_xyz[0], o.size_xyz[1], o.size_xyz[2]),
                    ),
                )
            })
            .collect()
    }
}

/// Serializes one record per line with lexicographic key order and a
/// trailing newline.
pub fn emit_jsonl<T: Serialize, W: Write>(
    writer: &mut W,
    records: impl IntoIterator<Item = T>,
) -> Result<(), PipelineError> {
    for record in records {
        // Round-tripping through Value sorts object keys (BTreeMap-backed).
        let value = serde_json::to_value(&record)
            .map_err(|e| PipelineError::Internal(format!("serialize: {e}")))?;
        let line = serde_json::to_string(&value)
            .map_err(|e| PipelineError::Internal(format!("serialize: {e}")))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|()| writer.write_all(b"\n"))
            .map_err(|e| PipelineError::Input(format!("write: {e}")))?;
    }
    Ok(())
}

/// Diagnostic for one skipped line under lenient reading.
#[derive(Debug, Clone)]
pub struct JsonlIssue {
    pub line: usize,
    pub message: String,
}

/// Reads and validates JSONL. Blank lines (including a trailing one) are
/// accepted and skipped.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(
    reader: R,
    mode: ParseMode,
) -> Result<(Vec<T>, Vec<JsonlIssue>), PipelineError> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| PipelineError::Input(format!("line {lineno}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(record) => records.push(record),
            Err(e) => match mode {
                ParseMode::Strict => {
                    return Err(PipelineError::Input(format!("line {lineno}: {e}")))
                }
                ParseMode::Lenient => issues.push(JsonlIssue {
                    line: lineno,
                    message: e.to_string(),
                }),
            },
        }
    }
    Ok((records, issues))
}

/// Convenience: read a whole JSONL file.
pub fn read_jsonl_file<T: DeserializeOwned>(
    path: &std::path::Path,
    mode: ParseMode,
) -> Result<(Vec<T>, Vec<JsonlIssue>), PipelineError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PipelineError::Input(format!("cannot open {}: {e}", path.display())))?;
    read_jsonl(std::io::BufReader::new(file), mode)
}

/// Checks that stored uvz equals the quantized projection of the stored
/// center, i.e. the two box representations agree on the wire.
pub fn uvz_center_consistent(record: &RepoRecord) -> bool {
    record.objects.iter().all(|o| {
        let center = Point3::new(o.center_xyz[0], o.center_xyz[1], o.center_xyz[2]);
        match xyz_to_uvz(center, &record.intrinsics) {
            Ok((u, v, z)) => {
                let tol = 0.005 + 1e-9;
                (quantize2(u) - o.uvz[0]).abs() <= tol
                    && (quantize2(v) - o.uvz[1]).abs() <= tol
                    && (quantize2(z) - o.uvz[2]).abs() <= tol
            }
            Err(_) => false,
        }
    })
}
