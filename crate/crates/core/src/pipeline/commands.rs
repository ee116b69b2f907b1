//! The four CLI commands. Scene work is sharded over a rayon pool with an
//! order-preserving collect, so output bytes are identical at any worker
//! count.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxlang::{parse_scene, ParseMode};
use crate::eval::{
    aggregate_report, detection_scores, grade_item, grounding_metrics, match_detections,
    render_report_table, AnswerGroup, GradedItem, HttpJudge, Judge, Report, Verdict,
    DETECTION_IOU_THRESHOLD,
};
use crate::geom::{back_project, project_point, Box3D, CameraIntrinsics, DepthMap, Point3};
use crate::lift::{lift_scene, LiftStats, Mask, ObjectInput, SceneAnnotation};
use crate::qa::{
    answer_group, gen_detection_qa, gen_grounding_qa, gen_reasoning_qa, rephrase, scene_seed,
    HttpRephraser, QAItem, Rephraser, TemplateCatalog,
};

use super::coco::{ingest_coco, segmentation_to_mask, SceneDescriptor};
use super::config::{Config, EvalTask};
use super::depth_io::{load_depth, read_mask_png};
use super::jsonl::{
    emit_jsonl, read_jsonl_file, PredictionRecord, QaRecord, RepoRecord, SCHEMA_VERSION,
};
use super::PipelineError;

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Internal(format!("thread pool: {e}")))
}

fn write_out<T: Serialize>(
    out: &Path,
    records: impl IntoIterator<Item = T>,
) -> Result<(), PipelineError> {
    let file = std::fs::File::create(out)
        .map_err(|e| PipelineError::Input(format!("cannot create {}: {e}", out.display())))?;
    let mut writer = BufWriter::new(file);
    emit_jsonl(&mut writer, records)?;
    writer
        .flush()
        .map_err(|e| PipelineError::Input(format!("write {}: {e}", out.display())))
}

// ---------------------------------------------------------------------------
// lift
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsSidecar {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct LiftSummary {
    pub scenes: usize,
    pub objects_in: usize,
    pub accepted: usize,
    pub rejects: BTreeMap<String, usize>,
    pub mask_fallbacks: usize,
}

impl LiftSummary {
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("scenes: {}", self.scenes),
            format!("objects in: {}", self.objects_in),
            format!("objects lifted: {}", self.accepted),
        ];
        for (reason, count) in &self.rejects {
            out.push(format!("rejected ({reason}): {count}"));
        }
        out.push(format!(
            "box-interior mask fallbacks: {}",
            self.mask_fallbacks
        ));
        out
    }
}

fn depth_path_for(
    depth_dir: &Path,
    descriptor: &SceneDescriptor,
) -> Result<PathBuf, PipelineError> {
    let stem = Path::new(&descriptor.image.file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| descriptor.scene_id.clone());
    for ext in ["pfm", "png"] {
        let candidate = depth_dir.join(format!("{stem}.{ext}"));
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(PipelineError::Input(format!(
        "no depth raster {stem}.pfm or {stem}.png under {} for scene {}",
        depth_dir.display(),
        descriptor.scene_id
    )))
}

fn intrinsics_for(
    depth_path: &Path,
    width: u32,
    height: u32,
) -> Result<CameraIntrinsics, PipelineError> {
    let sidecar = depth_path.with_extension("intr.json");
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar)
            .map_err(|e| PipelineError::Input(format!("{}: {e}", sidecar.display())))?;
        let intr: IntrinsicsSidecar = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Input(format!("{}: {e}", sidecar.display())))?;
        return CameraIntrinsics::new(intr.fx, intr.fy, intr.cx, intr.cy, width, height)
            .map_err(|e| PipelineError::Input(format!("{}: {e}", sidecar.display())));
    }
    CameraIntrinsics::from_60deg_hfov(width, height).map_err(PipelineError::from)
}

fn lift_one_scene(
    descriptor: &SceneDescriptor,
    config: &Config,
    depth_dir: &Path,
    digest: &str,
) -> Result<(RepoRecord, LiftStats, usize), PipelineError> {
    let depth_path = depth_path_for(depth_dir, descriptor)?;
    let depth = load_depth(&depth_path)?;
    let (w, h) = (descriptor.image.width, descriptor.image.height);
    if depth.width() != w || depth.height() != h {
        return Err(PipelineError::Input(format!(
            "scene {}: depth raster {}x{} does not match image {w}x{h}",
            descriptor.scene_id,
            depth.width(),
            depth.height()
        )));
    }
    let intr = intrinsics_for(&depth_path, w, h)?;
    let mut mask_fallbacks = 0usize;
    let mut objects = Vec::with_capacity(descriptor.objects.len());
    for obj in &descriptor.objects {
        let mut mask = match &obj.segmentation {
            Some(seg) => segmentation_to_mask(seg, h, w)?,
            None => None,
        };
        if mask.is_none() {
            if let Some(mask_dir) = &config.inputs.mask_dir {
                let candidate = mask_dir.join(format!("{}.png", obj.annotation_id));
                if candidate.exists() {
                    mask = Some(read_mask_png(&candidate)?);
                }
            }
        }
        let mask = match mask {
            Some(m) => m,
            None => {
                mask_fallbacks += 1;
                Mask::from_rect(&obj.rect, w, h)
            }
        };
        objects.push(ObjectInput {
            category: obj.category.clone(),
            rect: obj.rect,
            mask,
        });
    }
    let depth_source = depth_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (scene, stats) = lift_scene(
        &descriptor.scene_id,
        &intr,
        &depth,
        &objects,
        &config.lift,
        &depth_source,
    )?;
    let record = RepoRecord::from_scene(&scene, &config.inputs.dataset, digest, mask_fallbacks)?;
    Ok((record, stats, mask_fallbacks))
}

/// Lifts a COCO-annotated dataset into repository JSONL.
pub fn run_lift(config: &Config, out: &Path) -> Result<LiftSummary, PipelineError> {
    let annotations = config.annotations_for_lift()?;
    let depth_dir = config.depth_dir_for_lift()?;
    let scenes = ingest_coco(&annotations)?;
    let digest = config.lift.digest();
    let pool = thread_pool(config.workers)?;
    let results: Result<Vec<_>, PipelineError> = pool.install(|| {
        scenes
            .par_iter()
            .map(|descriptor| lift_one_scene(descriptor, config, &depth_dir, &digest))
            .collect()
    });
    let results = results?;
    let mut summary = LiftSummary {
        scenes: scenes.len(),
        objects_in: scenes.iter().map(|s| s.objects.len()).sum(),
        ..LiftSummary::default()
    };
    let mut records = Vec::with_capacity(results.len());
    for (record, stats, fallbacks) in results {
        summary.accepted += stats.accepted;
        summary.mask_fallbacks += fallbacks;
        for (reason, count) in &stats.rejects {
            *summary.rejects.entry(reason.to_string()).or_default() += count;
        }
        records.push(record);
    }
    write_out(out, records)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// qagen
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, PartialEq)]
pub struct QagenSummary {
    pub scenes: usize,
    pub items: usize,
    pub by_qtype: BTreeMap<String, usize>,
    pub skipped_templates: usize,
}

impl QagenSummary {
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("scenes: {}", self.scenes),
            format!("items: {}", self.items),
        ];
        for (qtype, count) in &self.by_qtype {
            out.push(format!("items ({qtype}): {count}"));
        }
        out.push(format!("templates skipped: {}", self.skipped_templates));
        out
    }
}

fn qa_for_scene(
    scene: &SceneAnnotation,
    catalog: &TemplateCatalog,
    global_seed: u64,
    rephraser: Option<&dyn Rephraser>,
) -> Result<(Vec<QAItem>, usize), PipelineError> {
    let sseed = scene_seed(global_seed, &scene.scene_id);
    let mut items = Vec::new();
    let mut skipped = 0usize;
    if let Some(item) = gen_detection_qa(scene)? {
        items.push(item);
    }
    items.extend(gen_grounding_qa(scene, sseed)?);
    for template in catalog.iter() {
        match gen_reasoning_qa(scene, template, sseed)? {
            Some(item) => items.push(item),
            None => skipped += 1,
        }
    }
    let items = items.iter().map(|item| rephrase(item, rephraser)).collect();
    Ok((items, skipped))
}

/// Generates detection, grounding, and reasoning QA from repository JSONL.
pub fn run_qagen(config: &Config, out: &Path) -> Result<QagenSummary, PipelineError> {
    let repo = config.repo_for_qagen()?;
    let (records, issues) = read_jsonl_file::<RepoRecord>(&repo, config.parse_mode)?;
    for issue in &issues {
        log::warn!(
            "{}: line {} skipped: {}",
            repo.display(),
            issue.line,
            issue.message
        );
    }
    let catalog = match &config.template_catalog {
        Some(path) => TemplateCatalog::with_overrides_from(path)?,
        None => TemplateCatalog::builtin(),
    };
    let rephraser: Option<HttpRephraser> = config
        .rephrase
        .as_ref()
        .map(|cfg| HttpRephraser::new(cfg.clone()));
    let pool = thread_pool(config.workers)?;
    let results: Result<Vec<_>, PipelineError> = pool.install(|| {
        records
            .par_iter()
            .map(|record| {
                let scene = record.to_scene()?;
                qa_for_scene(
                    &scene,
                    &catalog,
                    config.seed,
                    rephraser.as_ref().map(|r| r as &dyn Rephraser),
                )
            })
            .collect()
    });
    let results = results?;
    let mut summary = QagenSummary {
        scenes: records.len(),
        ..QagenSummary::default()
    };
    let mut lines = Vec::new();
    for (items, skipped) in results {
        summary.skipped_templates += skipped;
        for item in items {
            *summary.by_qtype.entry(item.qtype.clone()).or_default() += 1;
            summary.items += 1;
            lines.push(QaRecord {
                schema_version: SCHEMA_VERSION,
                item,
            });
        }
    }
    write_out(out, lines)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionReport {
    pub scenes: usize,
    pub matched: usize,
    pub preds: usize,
    pub gts: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub unparsed_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingReport {
    pub evaluated: usize,
    pub unparsed: usize,
    pub skipped_multi_object: usize,
    pub mean_proj_iou: f64,
    pub mean_proj_offset: f64,
    pub mean_iou3d: Option<f64>,
    pub mean_offset3d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum EvalReport {
    Detection {
        schema_version: u32,
        #[serde(flatten)]
        report: DetectionReport,
    },
    Grounding {
        schema_version: u32,
        #[serde(flatten)]
        report: GroundingReport,
    },
    Qa {
        schema_version: u32,
        missing_predictions: usize,
        #[serde(flatten)]
        report: Report,
    },
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub table: String,
    pub lines: Vec<String>,
}

fn prediction_map(path: &Path, mode: ParseMode) -> Result<BTreeMap<String, String>, PipelineError> {
    let (records, issues) = read_jsonl_file::<PredictionRecord>(path, mode)?;
    for issue in &issues {
        log::warn!(
            "{}: line {} skipped: {}",
            path.display(),
            issue.line,
            issue.message
        );
    }
    let mut map = BTreeMap::new();
    for r in records {
        map.entry(r.id).or_insert(r.prediction);
    }
    Ok(map)
}

fn eval_qa(config: &Config, out: &Path) -> Result<EvalOutcome, PipelineError> {
    let refs_path = config.eval.references.as_ref().ok_or_else(|| {
        PipelineError::Input("`eval` with task=qa requires eval.references".into())
    })?;
    let preds_path = config.eval.predictions.as_ref().ok_or_else(|| {
        PipelineError::Input("`eval` with task=qa requires eval.predictions".into())
    })?;
    let (refs, ref_issues) = read_jsonl_file::<QaRecord>(refs_path, config.parse_mode)?;
    for issue in &ref_issues {
        log::warn!(
            "{}: line {} skipped: {}",
            refs_path.display(),
            issue.line,
            issue.message
        );
    }
    let preds = prediction_map(preds_path, config.parse_mode)?;
    let judge: Option<HttpJudge> = config.judge.as_ref().map(|cfg| HttpJudge::new(cfg.clone()));
    let judge_ref: Option<&dyn Judge> = judge.as_ref().map(|j| j as &dyn Judge);

    let gradable: Vec<(&QAItem, AnswerGroup)> = refs
        .iter()
        .filter_map(|r| answer_group(&r.item).map(|g| (&r.item, g)))
        .collect();
    let mut missing = 0usize;
    let pool = thread_pool(config.workers)?;
    let graded: Vec<GradedItem> = pool.install(|| {
        gradable
            .par_iter()
            .map(|(item, group)| {
                let verdict = match preds.get(&item.id) {
                    Some(text) => grade_item(item, text, judge_ref),
                    None => Verdict {
                        correct: false,
                        detail: "no prediction for this item".into(),
                        degraded: false,
                    },
                };
                GradedItem {
                    qtype: item.qtype.clone(),
                    group: *group,
                    verdict,
                }
            })
            .collect()
    });
    missing += gradable
        .iter()
        .filter(|(item, _)| !preds.contains_key(&item.id))
        .count();
    let report = aggregate_report(&graded);
    let table = render_report_table(&report);
    let lines = vec![
        format!("items graded: {}", graded.len()),
        format!("missing predictions: {missing}"),
        format!("overall accuracy: {:.2}", report.overall.accuracy),
    ];
    let wrapped = EvalReport::Qa {
        schema_version: SCHEMA_VERSION,
        missing_predictions: missing,
        report,
    };
    write_report(out, &wrapped)?;
    Ok(EvalOutcome { table, lines })
}

fn eval_grounding(config: &Config, out: &Path) -> Result<EvalOutcome, PipelineError> {
    let refs_path = config.eval.references.as_ref().ok_or_else(|| {
        PipelineError::Input("`eval` with task=grounding requires eval.references".into())
    })?;
    let preds_path = config.eval.predictions.as_ref().ok_or_else(|| {
        PipelineError::Input("`eval` with task=grounding requires eval.predictions".into())
    })?;
    let repo_path = config.inputs.repo.as_ref().ok_or_else(|| {
        PipelineError::Input("`eval` with task=grounding requires inputs.repo".into())
    })?;
    let (refs, _) = read_jsonl_file::<QaRecord>(refs_path, config.parse_mode)?;
    let (repo, _) = read_jsonl_file::<RepoRecord>(repo_path, config.parse_mode)?;
    let preds = prediction_map(preds_path, config.parse_mode)?;
    let scenes: BTreeMap<&str, &RepoRecord> =
        repo.iter().map(|r| (r.scene_id.as_str(), r)).collect();

    let mut evaluated = 0usize;
    let mut unparsed = 0usize;
    let mut skipped_multi = 0usize;
    let mut sum_iou = 0.0;
    let mut sum_offset = 0.0;
    let mut sum_iou3d = (0.0, 0usize);
    let mut sum_off3d = (0.0, 0usize);
    for r in &refs {
        let item = &r.item;
        if !item.qtype.starts_with("grounding") {
            continue;
        }
        if item.object_ids.len() != 1 {
            skipped_multi += 1;
            continue;
        }
        let Some(record) = scenes.get(item.scene_id.as_str()) else {
            return Err(PipelineError::Input(format!(
                "grounding item {} references scene {} absent from {}",
                item.id,
                item.scene_id,
                repo_path.display()
            )));
        };
        let Some(object) = record.objects.iter().find(|o| o.id == item.object_ids[0]) else {
            return Err(PipelineError::Input(format!(
                "grounding item {} references object {} absent from scene {}",
                item.id, item.object_ids[0], item.scene_id
            )));
        };
        let gt_rect = crate::geom::Rect2D::new(
            object.source_rect[0],
            object.source_rect[1],
            object.source_rect[2],
            object.source_rect[3],
        )
        .map_err(|e| PipelineError::Input(e.to_string()))?;
        let gt_box = Box3D::new(
            Point3::new(
                object.center_xyz[0],
                object.center_xyz[1],
                object.center_xyz[2],
            ),
            Point3::new(object.size_xyz[0], object.size_xyz[1], object.size_xyz[2]),
        );
        let pred_box = preds.get(&item.id).and_then(|text| {
            parse_scene(text, &record.intrinsics, ParseMode::Lenient)
                .ok()
                .and_then(|(boxes, _)| boxes.into_iter().next())
                .map(|d| d.box3d)
        });
        evaluated += 1;
        let metrics = match pred_box {
            Some(pred) => grounding_metrics(&pred, &gt_rect, Some(&gt_box), &record.intrinsics),
            None => {
                unparsed += 1;
                crate::eval::GroundingMetrics {
                    proj_iou: 0.0,
                    proj_offset: 1.0,
                    iou3d: Some(0.0),
                    offset3d: None,
                    note: Some("no parseable prediction".into()),
                }
            }
        };
        sum_iou += metrics.proj_iou;
        sum_offset += metrics.proj_offset;
        if let Some(v) = metrics.iou3d {
            sum_iou3d.0 += v;
            sum_iou3d.1 += 1;
        }
        if let Some(v) = metrics.offset3d {
            sum_off3d.0 += v;
            sum_off3d.1 += 1;
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    let report = GroundingReport {
        evaluated,
        unparsed,
        skipped_multi_object: skipped_multi,
        mean_proj_iou: mean(sum_iou, evaluated),
        mean_proj_offset: mean(sum_offset, evaluated),
        mean_iou3d: (sum_iou3d.1 > 0).then(|| sum_iou3d.0 / sum_iou3d.1 as f64),
        mean_offset3d: (sum_off3d.1 > 0).then(|| sum_off3d.0 / sum_off3d.1 as f64),
    };
    let lines = vec![
        format!("grounding items evaluated: {}", report.evaluated),
        format!("unparseable predictions: {}", report.unparsed),
        format!("mean projected IoU: {:.4}", report.mean_proj_iou),
        format!("mean projected offset: {:.4}", report.mean_proj_offset),
    ];
    let table = lines.join("\n") + "\n";
    let wrapped = EvalReport::Grounding {
        schema_version: SCHEMA_VERSION,
        report,
    };
    write_report(out, &wrapped)?;
    Ok(EvalOutcome { table, lines })
}

fn eval_detection(config: &Config, out: &Path) -> Result<EvalOutcome, PipelineError> {
    let refs_path = config.eval.references.as_ref().ok_or_else(|| {
        PipelineError::Input("`eval` with task=detection requires eval.references".into())
    })?;
    let preds_path = config.eval.predictions.as_ref().ok_or_else(|| {
        PipelineError::Input("`eval` with task=detection requires eval.predictions".into())
    })?;
    let (repo, _) = read_jsonl_file::<RepoRecord>(refs_path, config.parse_mode)?;
    let preds = prediction_map(preds_path, config.parse_mode)?;
    let mut matched = 0usize;
    let mut pred_count = 0usize;
    let mut gt_count = 0usize;
    let mut unparsed_lines = 0usize;
    for record in &repo {
        let gts = record.detection_gts();
        let pred_boxes: Vec<(String, Box3D)> = match preds.get(&record.scene_id) {
            Some(text) => {
                let (boxes, issues) = parse_scene(text, &record.intrinsics, ParseMode::Lenient)?;
                unparsed_lines += issues.len();
                boxes.into_iter().map(|d| (d.category, d.box3d)).collect()
            }
            None => Vec::new(),
        };
        let (result, _) = match_detections(&pred_boxes, &gts, DETECTION_IOU_THRESHOLD);
        matched += result.pairs.len();
        pred_count += pred_boxes.len();
        gt_count += gts.len();
    }
    let scores = detection_scores(matched, pred_count, gt_count);
    let report = DetectionReport {
        scenes: repo.len(),
        matched,
        preds: pred_count,
        gts: gt_count,
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
        threshold: DETECTION_IOU_THRESHOLD,
        unparsed_lines,
    };
    let lines = vec![
        format!("scenes: {}", report.scenes),
        format!(
            "matched/preds/gts: {}/{}/{}",
            report.matched, report.preds, report.gts
        ),
        format!(
            "P@{th} {:.4}  R@{th} {:.4}  F1@{th} {:.4}",
            report.precision,
            report.recall,
            report.f1,
            th = report.threshold
        ),
    ];
    let table = lines.join("\n") + "\n";
    let wrapped = EvalReport::Detection {
        schema_version: SCHEMA_VERSION,
        report,
    };
    write_report(out, &wrapped)?;
    Ok(EvalOutcome { table, lines })
}

fn write_report(out: &Path, report: &EvalReport) -> Result<(), PipelineError> {
    let value = serde_json::to_value(report)
        .map_err(|e| PipelineError::Internal(format!("report serialize: {e}")))?;
    let text = serde_json::to_string_pretty(&value)
        .map_err(|e| PipelineError::Internal(format!("report serialize: {e}")))?;
    std::fs::write(out, text + "\n")
        .map_err(|e| PipelineError::Input(format!("write {}: {e}", out.display())))
}

/// Evaluates predictions against references for the configured task.
pub fn run_eval(config: &Config, out: &Path) -> Result<EvalOutcome, PipelineError> {
    match config.eval.task {
        Some(EvalTask::Qa) => eval_qa(config, out),
        Some(EvalTask::Grounding) => eval_grounding(config, out),
        Some(EvalTask::Detection) => eval_detection(config, out),
        None => Err(PipelineError::Input(
            "`eval` requires eval.task = \"detection\" | \"grounding\" | \"qa\"".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

fn check(name: &str, ok: bool, detail: String) -> Result<String, PipelineError> {
    if ok {
        Ok(format!("ok {name}"))
    } else {
        Err(PipelineError::Internal(format!(
            "selfcheck {name} failed: {detail}"
        )))
    }
}

/// Runs the coordinate-encoding and spatial-oracle property suites without
/// touching any input files. Fails with exit code 2 on any violation.
pub fn run_selfcheck() -> Result<Vec<String>, PipelineError> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut lines = Vec::new();
    let mut rng = StdRng::seed_from_u64(2024);

    // Embedding additivity and bounds.
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let p = Point3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(0.0..20.0),
        );
        let e = crate::encoding::coord_embedding(Some(p), 16, 1.0)
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
        let parts = [
            crate::encoding::sinusoidal_pe(p.x, 16).unwrap(),
            crate::encoding::sinusoidal_pe(p.y, 16).unwrap(),
            crate::encoding::sinusoidal_pe(p.z, 16).unwrap(),
        ];
        for k in 0..16 {
            let sum = parts[0][k] + parts[1][k] + parts[2][k];
            worst = worst.max((e[k] - sum).abs());
            if !(-3.0..=3.0).contains(&e[k]) {
                return Err(PipelineError::Internal(format!(
                    "embedding entry {k} out of bounds: {}",
                    e[k]
                )));
            }
        }
    }
    lines.push(check(
        "embedding additivity (1e-12)",
        worst <= 1e-12,
        format!("{worst}"),
    )?);

    // Jacobian against central differences.
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = Point3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(0.1..10.0),
        );
        let err = crate::encoding::gradient_check(p, 16, 1.0, 1e-5)
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
        worst = worst.max(err);
    }
    lines.push(check(
        "embedding gradient (1e-4)",
        worst < 1e-4,
        format!("{worst}"),
    )?);

    // Fuse linearity on a random fixture.
    {
        let pm = {
            let intr = CameraIntrinsics::new(50.0, 50.0, 8.0, 6.0, 16, 12).unwrap();
            let values: Vec<f64> = (0..16 * 12).map(|_| rng.gen_range(0.5..6.0)).collect();
            let depth = DepthMap::new(16, 12, values).unwrap();
            let full = back_project(&depth, &intr).unwrap();
            crate::encoding::downsample_pointmap(&full, 3, 4).unwrap()
        };
        let data: Vec<f64> = (0..3 * 4 * 8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let features = crate::encoding::FeatureMap::from_vec(3, 4, 8, data).unwrap();
        let zeros = crate::encoding::FeatureMap::zeros(3, 4, 8).unwrap();
        let fused = crate::encoding::fuse(&features, &pm, 1.0).unwrap();
        let base = crate::encoding::fuse(&zeros, &pm, 1.0).unwrap();
        let worst = fused
            .as_slice()
            .iter()
            .zip(base.as_slice())
            .zip(features.as_slice())
            .map(|((f, b), x)| (f - b - x).abs())
            .fold(0.0f64, f64::max);
        lines.push(check(
            "fuse linearity (1e-12)",
            worst <= 1e-12,
            format!("{worst}"),
        )?);
    }

    // Clock binning against the interval reference, 0.1 degree sweep.
    {
        let origin = Box3D::new(Point3::new(0.0, 0.0, 5.0), Point3::new(1.0, 1.0, 1.0));
        let mut bad = None;
        for k in 0..3600u32 {
            let theta = k as f64 / 10.0;
            let rad = theta.to_radians();
            let target = Box3D::new(
                Point3::new(2.0 * rad.cos(), 0.0, 5.0 + 2.0 * rad.sin()),
                Point3::new(1.0, 1.0, 1.0),
            );
            let got = crate::spatial::clock_direction(&origin, &target)
                .map_err(|e| PipelineError::Internal(e.to_string()))?
                .hour
                .get();
            let want = reference_hour(theta);
            if got != want {
                bad = Some(format!("theta {theta}: got {got}, want {want}"));
                break;
            }
        }
        lines.push(check(
            "clock sweep (0.1 degree)",
            bad.is_none(),
            bad.unwrap_or_default(),
        )?);
    }

    // Opposite-view flip invariant.
    {
        use crate::spatial::{relation, RelationKind, ViewPoint};
        let mut bad = None;
        for _ in 0..1000 {
            let mk = |rng: &mut StdRng| {
                Box3D::new(
                    Point3::new(
                        rng.gen_range(-4.0..4.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(1.0..9.0),
                    ),
                    Point3::new(1.0, 1.0, 1.0),
                )
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            for kind in [RelationKind::LeftRight, RelationKind::FrontBehind] {
                let cam = relation(&a, &b, kind, ViewPoint::Camera);
                let opp = relation(&a, &b, kind, ViewPoint::Opposite);
                if opp != cam.flipped() {
                    bad = Some(format!("{kind:?}: {cam:?} vs {opp:?}"));
                }
            }
            let cam = relation(&a, &b, RelationKind::AboveBelow, ViewPoint::Camera);
            let opp = relation(&a, &b, RelationKind::AboveBelow, ViewPoint::Opposite);
            if cam != opp {
                bad = Some("above/below changed under opposite view".into());
            }
        }
        lines.push(check(
            "opposite-view flip",
            bad.is_none(),
            bad.unwrap_or_default(),
        )?);
    }

    // Projection round trip on a random depth raster.
    {
        let intr = CameraIntrinsics::new(500.0, 500.0, 64.0, 48.0, 128, 96).unwrap();
        let values: Vec<f64> = (0..128 * 96).map(|_| rng.gen_range(0.5..20.0)).collect();
        let depth = DepthMap::new(128, 96, values).unwrap();
        let pm = back_project(&depth, &intr).unwrap();
        let mut worst = 0.0f64;
        for (row, col, p) in pm.iter_valid() {
            let (u, v) = project_point(p, &intr).unwrap();
            worst = worst.max((u - col as f64).abs() / (col as f64).max(1.0));
            worst = worst.max((v - row as f64).abs() / (row as f64).max(1.0));
        }
        lines.push(check(
            "projection round trip (1e-9)",
            worst < 1e-9,
            format!("{worst}"),
        )?);
    }

    // Box token fuzz round trip.
    {
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let mut bad = None;
        for i in 0..1000u32 {
            let rec = crate::lift::ObjectRecord {
                id: i,
                category: "thing".into(),
                box3d: Box3D::new(
                    Point3::new(
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(0.5..40.0),
                    ),
                    Point3::new(
                        rng.gen_range(0.02..5.0),
                        rng.gen_range(0.02..5.0),
                        rng.gen_range(0.02..5.0),
                    ),
                ),
                source_rect: crate::geom::Rect2D::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                point_count: 100,
            };
            let text = crate::boxlang::serialize_box(&rec, &intr)
                .map_err(|e| PipelineError::Internal(e.to_string()))?;
            let token = crate::boxlang::parse_box(&text)
                .map_err(|e| PipelineError::Internal(e.to_string()))?;
            if token.render() != text {
                bad = Some(format!("token {text:?} did not round-trip"));
                break;
            }
        }
        lines.push(check(
            "box token fuzz round trip",
            bad.is_none(),
            bad.unwrap_or_default(),
        )?);
    }

    Ok(lines)
}

/// Interval reference for the clock binning: hour h owns
/// (mark_h − 15°, mark_h + 15°] with mark_h = 90° − 30°·h.
fn reference_hour(theta_deg: f64) -> u8 {
    for h in 0..12u32 {
        let mark = (90.0 - 30.0 * h as f64).rem_euclid(360.0);
        let delta = (mark + 15.0 - theta_deg).rem_euclid(360.0);
        if delta < 30.0 {
            return if h == 0 { 12 } else { h as u8 };
        }
    }
    unreachable!()
}

// Re-exported for the acceptance suite, which needs the same stats type.
pub use crate::lift::RejectReason as LiftRejectReason;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selfcheck_passes() {
        let lines = run_selfcheck().unwrap();
        assert!(lines.len() >= 6);
        assert!(lines.iter().all(|l| l.starts_with("ok ")));
    }

    #[test]
    fn eval_requires_task() {
        let config = Config::default();
        let dir = tempfile::tempdir().unwrap();
        match run_eval(&config, &dir.path().join("r.json")) {
            Err(PipelineError::Input(msg)) => assert!(msg.contains("eval.task")),
            other => panic!("expected task error, got {other:?}"),
        }
    }
}
