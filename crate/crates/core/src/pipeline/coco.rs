//! COCO-style annotation ingestion: images, annotations, categories, with
//! RLE mask decoding (compressed and uncompressed). Polygon segmentations
//! are not rasterized here; those objects fall back to box-interior masks.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::geom::Rect2D;
use crate::lift::Mask;

use super::PipelineError;

#[derive(Debug, Clone, Deserialize)]
struct CocoFile {
    #[serde(default)]
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub file_name: String,
}

#[derive(Debug, Clone, Deserialize)]
struct CocoAnnotation {
    #[serde(default)]
    id: u64,
    image_id: u64,
    category_id: u64,
    /// COCO convention: [x, y, width, height].
    bbox: [f64; 4],
    #[serde(default)]
    segmentation: Option<Segmentation>,
    #[serde(default)]
    area: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    /// Polygons: list of flat [x, y, x, y, ...] rings.
    Polygon(Vec<Vec<f64>>),
    /// RLE with counts either compressed (string) or uncompressed (list).
    Rle { size: [u32; 2], counts: RleCounts },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Compressed(String),
    Raw(Vec<u32>),
}

#[derive(Debug, Clone, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

/// One annotated object before lifting.
#[derive(Debug, Clone)]
pub struct IngestObject {
    pub annotation_id: u64,
    pub category: String,
    pub rect: Rect2D,
    pub segmentation: Option<Segmentation>,
    pub stored_area: Option<f64>,
}

/// One image's worth of 2D annotations.
#[derive(Debug, Clone)]
pub struct SceneDescriptor {
    pub scene_id: String,
    pub image: CocoImage,
    pub objects: Vec<IngestObject>,
}

/// Parses a COCO-style JSON file into per-image scene descriptors, ordered
/// by image id. Images without annotations are retained as empty scenes.
pub fn ingest_coco(path: &std::path::Path) -> Result<Vec<SceneDescriptor>, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Input(format!("cannot read {}: {e}", path.display())))?;
    let file: CocoFile = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Input(format!("bad COCO JSON {}: {e}", path.display())))?;

    let categories: BTreeMap<u64, &str> = file
        .categories
        .iter()
        .map(|c| (c.id, c.name.as_str()))
        .collect();
    let mut scenes: BTreeMap<u64, SceneDescriptor> = file
        .images
        .iter()
        .map(|img| {
            (
                img.id,
                SceneDescriptor {
                    scene_id: img.id.to_string(),
                    image: img.clone(),
                    objects: Vec::new(),
                },
            )
        })
        .collect();
    for (index, ann) in file.annotations.iter().enumerate() {
        let scene = scenes.get_mut(&ann.image_id).ok_or_else(|| {
            PipelineError::Input(format!(
                "annotation #{index} (id {}) references unknown image_id {}",
                ann.id, ann.image_id
            ))
        })?;
        let category = categories.get(&ann.category_id).ok_or_else(|| {
            PipelineError::Input(format!(
                "annotation #{index} (id {}) references unknown category_id {}",
                ann.id, ann.category_id
            ))
        })?;
        let [x, y, w, h] = ann.bbox;
        if !(w > 0.0 && h > 0.0) {
            return Err(PipelineError::Input(format!(
                "annotation #{index} (id {}) has empty bbox {:?}",
                ann.id, ann.bbox
            )));
        }
        let rect = Rect2D::new(x, y, x + w, y + h)
            .map_err(|e| PipelineError::Input(format!("annotation #{index}: {e}")))?;
        scene.objects.push(IngestObject {
            annotation_id: ann.id,
            category: category.to_string(),
            rect,
            segmentation: ann.segmentation.clone(),
            stored_area: ann.area,
        });
    }
    let mut out: Vec<SceneDescriptor> = scenes.into_values().collect();
    for scene in &mut out {
        scene.objects.sort_by_key(|o| o.annotation_id);
    }
    Ok(out)
}

/// Decodes the COCO compressed RLE string into run counts.
pub fn decode_compressed_rle(encoded: &str) -> Result<Vec<u32>, PipelineError> {
    let bytes = encoded.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0u32;
        loop {
            if pos >= bytes.len() {
                return Err(PipelineError::Input(
                    "truncated compressed RLE string".into(),
                ));
            }
            let c = bytes[pos] as i64 - 48;
            if !(0..64).contains(&c) {
                return Err(PipelineError::Input(format!(
                    "invalid RLE byte {:?} at offset {pos}",
                    bytes[pos] as char
                )));
            }
            x |= (c & 0x1f) << (5 * k);
            pos += 1;
            let more = c & 0x20 != 0;
            k += 1;
            if !more {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| {
            u32::try_from(c).map_err(|_| {
                PipelineError::Input(format!("negative run length {c} in compressed RLE"))
            })
        })
        .collect()
}

/// Expands run counts (column-major, starting with background) into a
/// row-major boolean mask.
pub fn rle_counts_to_mask(counts: &[u32], height: u32, width: u32) -> Result<Mask, PipelineError> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    let expected = height as u64 * width as u64;
    if total != expected {
        return Err(PipelineError::Input(format!(
            "RLE counts cover {total} pixels, raster has {expected}"
        )));
    }
    let mut column_major = Vec::with_capacity(expected as usize);
    let mut value = false;
    for &run in counts {
        column_major.resize(column_major.len() + run as usize, value);
        value = !value;
    }
    let mut data = vec![false; expected as usize];
    for col in 0..width as usize {
        for row in 0..height as usize {
            data[row * width as usize + col] = column_major[col * height as usize + row];
        }
    }
    Mask::new(width, height, data).map_err(|e| PipelineError::Input(e.to_string()))
}

/// Decodes any supported segmentation payload to a mask; polygons return
/// None so the caller can apply the box-interior fallback.
pub fn segmentation_to_mask(
    segmentation: &Segmentation,
    height: u32,
    width: u32,
) -> Result<Option<Mask>, PipelineError> {
    match segmentation {
        Segmentation::Polygon(_) => Ok(None),
        Segmentation::Rle { size, counts } => {
            if size[0] != height || size[1] != width {
                return Err(PipelineError::Input(format!(
                    "RLE size {:?} does not match image {height}x{width}",
                    size
                )));
            }
            let counts = match counts {
                RleCounts::Raw(c) => c.clone(),
                RleCounts::Compressed(s) => decode_compressed_rle(s)?,
            };
            rle_counts_to_mask(&counts, height, width).map(Some)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_json(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let path = dir.path().join("annotations.json");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn minimal_file_yields_one_scene_one_object() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_json(
            &dir,
            r#"{
              "images": [{"id": 1, "width": 64, "height": 48, "file_name": "a.jpg"}],
              "annotations": [{"id": 10, "image_id": 1, "category_id": 3, "bbox": [4, 6, 10, 12]}],
              "categories": [{"id": 3, "name": "chair"}]
            }"#,
        );
        let scenes = ingest_coco(&path).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].scene_id, "1");
        assert_eq!(scenes[0].objects.len(), 1);
        let obj = &scenes[0].objects[0];
        assert_eq!(obj.category, "chair");
        assert_eq!(obj.rect.x_max, 14.0);
    }

    #[test]
    fn image_without_annotations_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_json(
            &dir,
            r#"{
              "images": [
                {"id": 1, "width": 64, "height": 48, "file_name": "a.jpg"},
                {"id": 2, "width": 64, "height": 48, "file_name": "b.jpg"}
              ],
              "annotations": [{"id": 10, "image_id": 1, "category_id": 3, "bbox": [4, 6, 10, 12]}],
              "categories": [{"id": 3, "name": "chair"}]
            }"#,
        );
        let scenes = ingest_coco(&path).unwrap();
        assert_eq!(scenes.len(), 2);
        assert!(scenes[1].objects.is_empty());
    }

    #[test]
    fn unknown_image_or_category_errors_with_index() {
        let dir = tempfile::tempdir().unwrap();
        let missing_image = write_json(
            &dir,
            r#"{
              "images": [{"id": 1, "width": 64, "height": 48, "file_name": "a.jpg"}],
              "annotations": [{"id": 10, "image_id": 99, "category_id": 3, "bbox": [4, 6, 10, 12]}],
              "categories": [{"id": 3, "name": "chair"}]
            }"#,
        );
        match ingest_coco(&missing_image) {
            Err(PipelineError::Input(msg)) => {
                assert!(msg.contains("annotation #0"));
                assert!(msg.contains("image_id 99"));
            }
            other => panic!("expected error, got {other:?}"),
        }

        let missing_cat = write_json(
            &dir,
            r#"{
              "images": [{"id": 1, "width": 64, "height": 48, "file_name": "a.jpg"}],
              "annotations": [{"id": 10, "image_id": 1, "category_id": 7, "bbox": [4, 6, 10, 12]}],
              "categories": [{"id": 3, "name": "chair"}]
            }"#,
        );
        match ingest_coco(&missing_cat) {
            Err(PipelineError::Input(msg)) => assert!(msg.contains("category_id 7")),
            other => panic!("expected error, got {other:?}"),
        }
    }

    #[test]
    fn uncompressed_rle_round_trips_area() {
        // 4x3 (h x w) column-major: 2 background, 3 foreground, 7 background.
        let mask = rle_counts_to_mask(&[2, 3, 7], 4, 3).unwrap();
        assert_eq!(mask.true_count(), 3);
        // Column 0 rows 2..4 and column 1 row 0.
        assert!(mask.get(2, 0) && mask.get(3, 0) && mask.get(0, 1));
        assert!(!mask.get(0, 0) && !mask.get(1, 0));
    }

    #[test]
    fn rle_counts_must_cover_raster() {
        assert!(rle_counts_to_mask(&[2, 3], 4, 3).is_err());
    }

    /// Compress counts with the COCO char scheme to test the decoder against
    /// an independently written encoder.
    fn encode_compressed_rle(counts: &[u32]) -> String {
        let mut out = Vec::new();
        for (i, &count) in counts.iter().enumerate() {
            let mut x = count as i64;
            if i > 2 {
                x -= counts[i - 2] as i64;
            }
            let mut more = true;
            while more {
                let mut c = (x & 0x1f) as u8;
                x >>= 5;
                more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
                if more {
                    c |= 0x20;
                }
                out.push(c + 48);
            }
        }
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn compressed_rle_decodes_to_original_counts() {
        let cases: Vec<Vec<u32>> = vec![
            vec![2, 3, 7],
            vec![0, 5, 7],
            vec![100, 2, 300, 4, 1000, 594],
            vec![6, 1, 40, 4, 5, 4, 5, 4, 131],
        ];
        for counts in cases {
            let encoded = encode_compressed_rle(&counts);
            assert_eq!(decode_compressed_rle(&encoded).unwrap(), counts);
        }
    }

    #[test]
    fn compressed_rle_mask_matches_stored_area() {
        // Counts sum to 196 = 14*14; area is the sum of foreground runs.
        let counts = vec![6u32, 1, 40, 4, 5, 4, 5, 4, 127];
        assert_eq!(counts.iter().sum::<u32>(), 196);
        let area: u32 = counts.iter().skip(1).step_by(2).sum();
        let encoded = encode_compressed_rle(&counts);
        let seg = Segmentation::Rle {
            size: [14, 14],
            counts: RleCounts::Compressed(encoded),
        };
        let mask = segmentation_to_mask(&seg, 14, 14).unwrap().unwrap();
        assert_eq!(mask.true_count() as u32, area);
    }

    #[test]
    fn polygon_segmentation_falls_back() {
        let seg = Segmentation::Polygon(vec![vec![0.0, 0.0, 4.0, 0.0, 4.0, 4.0]]);
        assert!(segmentation_to_mask(&seg, 8, 8).unwrap().is_none());
    }
}
