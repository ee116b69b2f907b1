//! Shared synthetic-corpus builder for integration tests: analytic cuboid
//! scenes written as COCO JSON + PFM depth + exact RLE masks, with the
//! expected 3D boxes computed independently from the same analytic surface.
//!
//! Each test binary uses a different slice of this module.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use lift3d::geom::{uvz_to_xyz, CameraIntrinsics, Point3};

pub const IMG_W: u32 = 96;
pub const IMG_H: u32 = 72;
pub const BACKGROUND_DEPTH: f64 = 30.0;

/// One analytic cuboid region: a rectangular pixel patch whose depth slopes
/// linearly across columns, giving the lifted box full 3D extent.
#[derive(Debug, Clone)]
pub struct Cuboid {
    pub category: &'static str,
    pub col0: u32,
    pub row0: u32,
    pub cols: u32,
    pub rows: u32,
    pub z0: f64,
    pub z1: f64,
}

impl Cuboid {
    pub fn depth_at(&self, col: u32) -> f64 {
        let t = (col - self.col0) as f64 / (self.cols - 1) as f64;
        self.z0 + t * (self.z1 - self.z0)
    }

    /// Depth as stored on disk: PFM carries f32 samples.
    pub fn stored_depth_at(&self, col: u32) -> f64 {
        self.depth_at(col) as f32 as f64
    }

    /// Expected box: tight bounds of the back-projected stored surface.
    pub fn expected_box(&self, intr: &CameraIntrinsics) -> (Point3, Point3) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for row in self.row0..self.row0 + self.rows {
            for col in self.col0..self.col0 + self.cols {
                let p =
                    uvz_to_xyz(col as f64, row as f64, self.stored_depth_at(col), intr).unwrap();
                lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
                hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
            }
        }
        (
            Point3::new(
                (lo.x + hi.x) / 2.0,
                (lo.y + hi.y) / 2.0,
                (lo.z + hi.z) / 2.0,
            ),
            Point3::new(hi.x - lo.x, hi.y - lo.y, hi.z - lo.z),
        )
    }
}

/// Distinct non-overlapping patches; supports up to 6 cuboids per scene.
const SLOTS: [(u32, u32); 6] = [(6, 6), (52, 6), (6, 40), (52, 40), (30, 24), (74, 40)];
const CATEGORIES: [&str; 6] = ["chair", "table", "lamp", "sofa", "cup", "plant"];

pub fn make_cuboids(rng: &mut StdRng, count: usize) -> Vec<Cuboid> {
    assert!(count <= SLOTS.len());
    (0..count)
        .map(|i| {
            let (col0, row0) = SLOTS[i];
            let z0 = rng.gen_range(1.5..6.0);
            Cuboid {
                category: CATEGORIES[i],
                col0,
                row0,
                cols: rng.gen_range(12..18),
                rows: rng.gen_range(12..18),
                z0,
                z1: z0 + rng.gen_range(0.3..1.2),
            }
        })
        .collect()
}

/// Column-major run-length counts (starting with background) for a
/// rectangular patch, the COCO uncompressed RLE form.
fn rect_rle_counts(c: &Cuboid, width: u32, height: u32) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut run = 0u32;
    let mut value = false;
    for col in 0..width {
        for row in 0..height {
            let inside =
                col >= c.col0 && col < c.col0 + c.cols && row >= c.row0 && row < c.row0 + c.rows;
            if inside == value {
                run += 1;
            } else {
                counts.push(run);
                value = inside;
                run = 1;
            }
        }
    }
    counts.push(run);
    counts
}

pub struct Corpus {
    pub dir: PathBuf,
    pub annotations: PathBuf,
    pub depth_dir: PathBuf,
    pub config: PathBuf,
    pub scenes: Vec<(String, Vec<Cuboid>)>,
    pub intrinsics: CameraIntrinsics,
}

/// Writes a corpus of `n_scenes` synthetic scenes under `dir`: COCO
/// annotations, per-scene PFM depth, and a pipeline config with the per-axis
/// trim disabled (exact synthetic depth has no outlier tails to cut).
pub fn build_corpus(dir: &Path, n_scenes: usize, seed: u64) -> Corpus {
    let depth_dir = dir.join("depth");
    std::fs::create_dir_all(&depth_dir).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    let intrinsics = CameraIntrinsics::from_60deg_hfov(IMG_W, IMG_H).unwrap();

    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut scenes = Vec::new();
    let mut annotation_id = 1u64;
    for i in 0..n_scenes {
        let image_id = i as u64 + 1;
        let stem = format!("scene{i:04}");
        let count = rng.gen_range(2..=5);
        let cuboids = make_cuboids(&mut rng, count);

        let mut depth = vec![BACKGROUND_DEPTH; (IMG_W * IMG_H) as usize];
        for c in &cuboids {
            for row in c.row0..c.row0 + c.rows {
                for col in c.col0..c.col0 + c.cols {
                    depth[(row * IMG_W + col) as usize] = c.depth_at(col);
                }
            }
        }
        lift3d::pipeline::write_pfm(&depth_dir.join(format!("{stem}.pfm")), IMG_W, IMG_H, &depth)
            .unwrap();

        images.push(serde_json::json!({
            "id": image_id,
            "width": IMG_W,
            "height": IMG_H,
            "file_name": format!("{stem}.png"),
        }));
        for (k, c) in cuboids.iter().enumerate() {
            annotations.push(serde_json::json!({
                "id": annotation_id,
                "image_id": image_id,
                "category_id": k + 1,
                "bbox": [c.col0, c.row0, c.cols, c.rows],
                "segmentation": {
                    "size": [IMG_H, IMG_W],
                    "counts": rect_rle_counts(c, IMG_W, IMG_H),
                },
            }));
            annotation_id += 1;
        }
        scenes.push((image_id.to_string(), cuboids));
    }
    let categories: Vec<_> = CATEGORIES
        .iter()
        .enumerate()
        .map(|(k, name)| serde_json::json!({"id": k + 1, "name": name}))
        .collect();
    let coco = serde_json::json!({
        "images": images,
        "annotations": annotations,
        "categories": categories,
    });
    let annotations_path = dir.join("annotations.json");
    std::fs::write(&annotations_path, serde_json::to_string(&coco).unwrap()).unwrap();

    let config_path = dir.join("config.toml");
    std::fs::write(
        &config_path,
        format!(
            "seed = 7\n\
             [lift]\n\
             trim_lo = 0.0\n\
             trim_hi = 100.0\n\
             [inputs]\n\
             annotations = {:?}\n\
             depth_dir = {:?}\n\
             dataset = \"synthetic\"\n",
            annotations_path.to_str().unwrap(),
            depth_dir.to_str().unwrap(),
        ),
    )
    .unwrap();

    Corpus {
        dir: dir.to_path_buf(),
        annotations: annotations_path,
        depth_dir,
        config: config_path,
        scenes,
        intrinsics,
    }
}
