//! Evaluation protocols: detection precision/recall/F1 at a 3D-IoU
//! threshold, grounding metrics on projected boxes with depth alignment, and
//! spatial-QA grading (numerical tolerance, exact-hour directions, and
//! judge-backed open-ended answers with a deterministic offline fallback).

pub mod client;
pub mod judge;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::{
    iou3d_aabb, project_box, rect_center_offset, rect_iou, Box3D, CameraIntrinsics, Point3, Rect2D,
};
use crate::qa::{AnswerValue, QAItem};
use crate::spatial::ClockHour;
pub use client::{EndpointConfig, HttpTextService, TextServiceError};
pub use judge::{HttpJudge, Judge, JudgeReply, JudgeRequest};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("input error: {0}")]
    Input(String),
}

/// Default 3D-IoU threshold for detection matching.
pub const DETECTION_IOU_THRESHOLD: f64 = 0.25;
/// Default relative tolerance for numeric grading.
pub const NUMERIC_TOLERANCE: f64 = 0.25;

// ---------------------------------------------------------------------------
// Detection matching
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

/// Outcome of matching one prediction set against one ground-truth set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub preds: usize,
    pub gts: usize,
}

/// Precision/recall/F1 from match counts. Empty-vs-empty is vacuously
/// perfect; otherwise an empty denominator scores 0.
pub fn detection_scores(matched: usize, preds: usize, gts: usize) -> DetectionScores {
    let (precision, recall) = if preds == 0 && gts == 0 {
        (1.0, 1.0)
    } else {
        (
            if preds == 0 {
                0.0
            } else {
                matched as f64 / preds as f64
            },
            if gts == 0 {
                0.0
            } else {
                matched as f64 / gts as f64
            },
        )
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionScores {
        precision,
        recall,
        f1,
        matched,
        preds,
        gts,
    }
}

/// Greedy same-category matching by descending IoU among pairs at or above
/// the threshold. Ties break on (pred index, gt index) so results are
/// deterministic.
pub fn match_detections(
    preds: &[(String, Box3D)],
    gts: &[(String, Box3D)],
    threshold: f64,
) -> (MatchResult, DetectionScores) {
    let mut candidates: Vec<MatchedPair> = Vec::new();
    for (pi, (pcat, pbox)) in preds.iter().enumerate() {
        for (gi, (gcat, gbox)) in gts.iter().enumerate() {
            if pcat != gcat {
                continue;
            }
            let iou = iou3d_aabb(pbox, gbox);
            if iou >= threshold {
                candidates.push(MatchedPair {
                    pred: pi,
                    gt: gi,
                    iou,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .partial_cmp(&a.iou)
            .unwrap()
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for cand in candidates {
        if !pred_used[cand.pred] && !gt_used[cand.gt] {
            pred_used[cand.pred] = true;
            gt_used[cand.gt] = true;
            pairs.push(cand);
        }
    }
    let unmatched_preds = (0..preds.len()).filter(|&i| !pred_used[i]).collect();
    let unmatched_gts = (0..gts.len()).filter(|&i| !gt_used[i]).collect();
    let scores = detection_scores(pairs.len(), preds.len(), gts.len());
    (
        MatchResult {
            pairs,
            unmatched_preds,
            unmatched_gts,
        },
        scores,
    )
}

// ---------------------------------------------------------------------------
// Grounding metrics
// ---------------------------------------------------------------------------

/// Similarity rescale about the camera origin so the prediction's center
/// depth matches ground truth. The image-plane projection is invariant under
/// this map, so projected metrics are unaffected while 3D metrics become
/// comparable across depth scales.
pub fn align_depth(pred: &Box3D, gt: &Box3D) -> Result<Box3D, EvalError> {
    if pred.center.z <= 0.0 || gt.center.z <= 0.0 {
        return Err(EvalError::Input(format!(
            "align_depth needs positive depths, got pred z={} and gt z={}",
            pred.center.z, gt.center.z
        )));
    }
    let s = gt.center.z / pred.center.z;
    Ok(Box3D::new(
        Point3::new(pred.center.x * s, pred.center.y * s, pred.center.z * s),
        Point3::new(pred.size.x * s, pred.size.y * s, pred.size.z * s),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingMetrics {
    pub proj_iou: f64,
    pub proj_offset: f64,
    pub iou3d: Option<f64>,
    pub offset3d: Option<f64>,
    /// Diagnostic, set when the prediction could not be scored normally.
    pub note: Option<String>,
}

/// Projected IoU/offset of a predicted 3D box against a ground-truth 2D
/// rectangle, plus depth-aligned 3D IoU/offset when a ground-truth box
/// exists. A prediction behind the camera scores 0 with a diagnostic.
pub fn grounding_metrics(
    pred: &Box3D,
    gt_rect: &Rect2D,
    gt_box: Option<&Box3D>,
    intr: &CameraIntrinsics,
) -> GroundingMetrics {
    let projected = match project_box(pred, intr) {
        Ok(rect) => rect,
        Err(e) => {
            return GroundingMetrics {
                proj_iou: 0.0,
                proj_offset: 1.0,
                iou3d: gt_box.map(|_| 0.0),
                offset3d: None,
                note: Some(format!("prediction not scorable: {e}")),
            }
        }
    };
    let proj_iou = rect_iou(&projected, gt_rect);
    let proj_offset = rect_center_offset(&projected, gt_rect, intr.diagonal());
    let (iou3d, offset3d) = match gt_box {
        Some(gt) => match align_depth(pred, gt) {
            Ok(aligned) => (
                Some(iou3d_aabb(&aligned, gt)),
                Some(aligned.center.distance(gt.center)),
            ),
            Err(_) => (Some(0.0), None),
        },
        None => (None, None),
    };
    GroundingMetrics {
        proj_iou,
        proj_offset,
        iou3d,
        offset3d,
        note: None,
    }
}

// ---------------------------------------------------------------------------
// Answer grading
// ---------------------------------------------------------------------------

/// Result of grading one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    /// Extracted value, tolerance band, or judge rationale. Never empty for
    /// an incorrect verdict.
    pub detail: String,
    /// True when the judge was configured but unreachable and the offline
    /// fallback produced this verdict.
    #[serde(default)]
    pub degraded: bool,
}

impl Verdict {
    fn correct(detail: String) -> Self {
        Self {
            correct: true,
            detail,
            degraded: false,
        }
    }

    fn incorrect(detail: String) -> Self {
        debug_assert!(!detail.is_empty());
        Self {
            correct: false,
            detail,
            degraded: false,
        }
    }
}

fn unit_to_meters(token: &str) -> Option<f64> {
    match token.to_ascii_lowercase().as_str() {
        "mm" | "millimeter" | "millimeters" => Some(1e-3),
        "cm" | "centimeter" | "centimeters" => Some(1e-2),
        "m" | "meter" | "meters" | "metre" | "metres" => Some(1.0),
        _ => None,
    }
}

/// Pulls the first number (plus an adjacent unit token, if recognized) out
/// of free text and converts it to meters. Unitless numbers are meters.
pub fn extract_meters(text: &str) -> Option<f64> {
    let re = regex::Regex::new(r"([-+]?(?:\d+\.?\d*|\.\d+))\s*([a-zA-Z]+)?").unwrap();
    let caps = re.captures(text)?;
    let value: f64 = caps.get(1)?.as_str().parse().ok()?;
    let scale = caps
        .get(2)
        .and_then(|m| unit_to_meters(m.as_str()))
        .unwrap_or(1.0);
    Some(value * scale)
}

/// Numeric grading: first extracted number within ±tolerance of the ground
/// truth, boundary inclusive.
pub fn grade_numeric(pred_text: &str, gt_value: f64, tolerance: f64) -> Verdict {
    let Some(pred) = extract_meters(pred_text) else {
        return Verdict::incorrect("no numeric found".into());
    };
    let band = tolerance * gt_value.abs();
    let err = (pred - gt_value).abs();
    let detail = format!("extracted {pred} m vs reference {gt_value} m (band ±{band} m)");
    if err <= band {
        Verdict::correct(detail)
    } else {
        Verdict::incorrect(detail)
    }
}

fn clock_word(token: &str) -> Option<u8> {
    let words = [
        "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
        "twelve",
    ];
    let lower = token.to_ascii_lowercase();
    if let Some(i) = words.iter().position(|&w| w == lower) {
        return Some(i as u8 + 1);
    }
    lower.parse::<u8>().ok().filter(|h| (1..=12).contains(h))
}

/// Extracts an "N o'clock" phrase, N as digits or a number word.
pub fn extract_clock_hour(text: &str) -> Option<u8> {
    let re = regex::Regex::new(r"(?i)\b([a-zA-Z]+|\d{1,2})[-\s]*o'?\s*clock").unwrap();
    let hours: Vec<u8> = re
        .captures_iter(text)
        .filter_map(|caps| clock_word(caps.get(1)?.as_str()))
        .collect();
    hours.first().copied()
}

/// Direction grading: exact hour match, no tolerance.
pub fn grade_direction(pred_text: &str, gt: ClockHour) -> Verdict {
    let Some(hour) = extract_clock_hour(pred_text) else {
        return Verdict::incorrect("no clock phrase found".into());
    };
    let detail = format!("extracted {hour} o'clock vs reference {gt}");
    if hour == gt.get() {
        Verdict::correct(detail)
    } else {
        Verdict::incorrect(detail)
    }
}

/// Opposing keyword families for the offline verdict matcher.
fn opposites(expected: &str) -> &'static [&'static str] {
    match expected {
        "left" => &["right"],
        "right" => &["left"],
        "above" => &["below", "under"],
        "below" => &["above"],
        "in front" | "front" => &["behind"],
        "behind" => &["in front", "front"],
        "wider" => &["thinner", "narrower"],
        "thinner" | "narrower" => &["wider"],
        "taller" => &["shorter"],
        "shorter" => &["taller"],
        "bigger" | "larger" => &["smaller"],
        "smaller" => &["bigger", "larger"],
        "closer" | "closest" => &["farther", "further", "farthest", "furthest"],
        "farther" | "farthest" => &["closer", "closest", "nearer", "nearest"],
        _ => &[],
    }
}

/// Deterministic keyword proxy for open-ended grading: the prediction must
/// mention the expected verdict and not its opposite. Documented as a weaker
/// stand-in for the judge.
pub fn keyword_verdict(expected: &str, pred_text: &str) -> Verdict {
    let pred = pred_text.to_lowercase();
    let want = expected.to_lowercase();
    let has_expected = pred.contains(&want);
    let has_opposite = opposites(want.as_str())
        .iter()
        .any(|opp| pred.contains(opp));
    let detail = format!(
        "keyword match: expected {want:?}, found={has_expected}, opposite-found={has_opposite}"
    );
    if has_expected && !has_opposite {
        Verdict::correct(detail)
    } else {
        Verdict::incorrect(detail)
    }
}

/// Open-ended grading. With a judge configured, its verdict wins; if the
/// judge stays unreachable after its retries, fall back to the offline
/// keyword proxy and flag the verdict as degraded.
pub fn grade_open_ended(item: &QAItem, pred_text: &str, judge: Option<&dyn Judge>) -> Verdict {
    if let Some(judge) = judge {
        match judge.judge(&JudgeRequest {
            question: &item.question,
            reference: &item.answer,
            prediction: pred_text,
        }) {
            Ok(reply) => {
                let detail = if reply.rationale.is_empty() {
                    format!("judge verdict: {}", reply.verdict)
                } else {
                    format!("judge verdict: {} ({})", reply.verdict, reply.rationale)
                };
                return if reply.is_correct() {
                    Verdict::correct(detail)
                } else {
                    Verdict::incorrect(detail)
                };
            }
            Err(e) => {
                log::warn!("judge unreachable, falling back to keyword grading: {e}");
                let mut verdict = offline_open_ended(item, pred_text);
                verdict.degraded = true;
                verdict.detail = format!("degraded (judge unreachable): {}", verdict.detail);
                return verdict;
            }
        }
    }
    offline_open_ended(item, pred_text)
}

fn offline_open_ended(item: &QAItem, pred_text: &str) -> Verdict {
    match &item.answer_value {
        Some(AnswerValue::Verdict { text }) => keyword_verdict(text, pred_text),
        Some(AnswerValue::Number { value, .. }) => {
            grade_numeric(pred_text, *value, NUMERIC_TOLERANCE)
        }
        Some(AnswerValue::Clock { hour }) => match ClockHour::new(*hour) {
            Some(h) => grade_direction(pred_text, h),
            None => Verdict::incorrect(format!("reference hour {hour} out of range")),
        },
        None => {
            let ok = pred_text
                .to_lowercase()
                .contains(&item.answer.trim().to_lowercase());
            let detail = format!("substring match against reference {:?}", item.answer);
            if ok {
                Verdict::correct(detail)
            } else {
                Verdict::incorrect(detail)
            }
        }
    }
}

/// Routes a prediction to the grader matching the item's answer kind.
pub fn grade_item(item: &QAItem, pred_text: &str, judge: Option<&dyn Judge>) -> Verdict {
    match &item.answer_value {
        Some(AnswerValue::Number { value, .. }) => {
            grade_numeric(pred_text, *value, NUMERIC_TOLERANCE)
        }
        Some(AnswerValue::Clock { hour }) => match ClockHour::new(*hour) {
            Some(h) => grade_direction(pred_text, h),
            None => Verdict::incorrect(format!("reference hour {hour} out of range")),
        },
        _ => grade_open_ended(item, pred_text, judge),
    }
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

/// Supergroup of a question type, mirroring the open-ended/numerical split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerGroup {
    OpenEnded,
    Numerical,
}

#[derive(Debug, Clone)]
pub struct GradedItem {
    pub qtype: String,
    pub group: AnswerGroup,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub qtype: String,
    pub group: AnswerGroup,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Per-qtype and per-supergroup accuracy table. Group and overall accuracies
/// are micro-averaged over questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub open_ended: GroupSummary,
    pub numerical: GroupSummary,
    pub overall: GroupSummary,
    pub degraded_count: usize,
}

fn accuracy(correct: usize, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        100.0 * correct as f64 / count as f64
    }
}

pub fn aggregate_report(items: &[GradedItem]) -> Report {
    let mut per_type: BTreeMap<(String, AnswerGroup), (usize, usize)> = BTreeMap::new();
    let mut degraded_count = 0;
    for item in items {
        let slot = per_type
            .entry((item.qtype.clone(), item.group))
            .or_insert((0, 0));
        slot.0 += 1;
        if item.verdict.correct {
            slot.1 += 1;
        }
        if item.verdict.degraded {
            degraded_count += 1;
        }
    }
    let rows: Vec<ReportRow> = per_type
        .into_iter()
        .map(|((qtype, group), (count, correct))| ReportRow {
            qtype,
            group,
            count,
            correct,
            accuracy: accuracy(correct, count),
        })
        .collect();
    let summarize = |filter: Option<AnswerGroup>| {
        let (mut count, mut correct) = (0, 0);
        for row in &rows {
            if filter.is_none() || filter == Some(row.group) {
                count += row.count;
                correct += row.correct;
            }
        }
        GroupSummary {
            count,
            correct,
            accuracy: accuracy(correct, count),
        }
    };
    Report {
        open_ended: summarize(Some(AnswerGroup::OpenEnded)),
        numerical: summarize(Some(AnswerGroup::Numerical)),
        overall: summarize(None),
        rows,
        degraded_count,
    }
}

/// Human-readable aligned table of a report.
pub fn render_report_table(report: &Report) -> String {
    let mut out = String::new();
    let width = report
        .rows
        .iter()
        .map(|r| r.qtype.len())
        .chain(["question type".len()])
        .max()
        .unwrap_or(13);
    out.push_str(&format!(
        "{:<width$}  {:>10}  {:>7}  {:>8}  {:>9}\n",
        "question type", "group", "count", "correct", "accuracy"
    ));
    for row in &report.rows {
        let group = match row.group {
            AnswerGroup::OpenEnded => "open",
            AnswerGroup::Numerical => "numerical",
        };
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>7}  {:>8}  {:>8.2}%\n",
            row.qtype, group, row.count, row.correct, row.accuracy
        ));
    }
    for (name, s) in [
        ("open-ended", &report.open_ended),
        ("numerical", &report.numerical),
        ("overall", &report.overall),
    ] {
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>7}  {:>8}  {:>8.2}%\n",
            name, "", s.count, s.correct, s.accuracy
        ));
    }
    if report.degraded_count > 0 {
        out.push_str(&format!(
            "note: {} verdict(s) graded in degraded offline mode\n",
            report.degraded_count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn bx(x: f64, y: f64, z: f64, s: f64) -> Box3D {
        Box3D::new(Point3::new(x, y, z), Point3::new(s, s, s))
    }

    #[test]
    fn self_match_is_perfect() {
        let gts = vec![
            ("chair".to_string(), bx(0.0, 0.0, 2.0, 1.0)),
            ("cup".to_string(), bx(1.0, 0.0, 3.0, 0.2)),
        ];
        let (result, scores) = match_detections(&gts, &gts, DETECTION_IOU_THRESHOLD);
        assert_eq!(result.pairs.len(), 2);
        assert_eq!(scores.precision, 1.0);
        assert_eq!(scores.recall, 1.0);
        assert_eq!(scores.f1, 1.0);
    }

    #[test]
    fn empty_preds_scores_zero() {
        let gts = vec![("chair".to_string(), bx(0.0, 0.0, 2.0, 1.0))];
        let (_, scores) = match_detections(&[], &gts, 0.25);
        assert_eq!(scores.precision, 0.0);
        assert_eq!(scores.recall, 0.0);
        assert_eq!(scores.f1, 0.0);
    }

    #[test]
    fn category_mismatch_never_pairs() {
        let preds = vec![("cup".to_string(), bx(0.0, 0.0, 2.0, 1.0))];
        let gts = vec![("chair".to_string(), bx(0.0, 0.0, 2.0, 1.0))];
        let (result, scores) = match_detections(&preds, &gts, 0.25);
        assert!(result.pairs.is_empty());
        assert_eq!(scores.f1, 0.0);
        assert_eq!(result.unmatched_preds, vec![0]);
        assert_eq!(result.unmatched_gts, vec![0]);
    }

    /// Exhaustive optimal assignment over all injective pred→gt mappings.
    fn optimal_f1(preds: &[(String, Box3D)], gts: &[(String, Box3D)], threshold: f64) -> f64 {
        fn recurse(
            preds: &[(String, Box3D)],
            gts: &[(String, Box3D)],
            threshold: f64,
            pi: usize,
            used: &mut Vec<bool>,
        ) -> usize {
            if pi == preds.len() {
                return 0;
            }
            // Option: leave this prediction unmatched.
            let mut best = recurse(preds, gts, threshold, pi + 1, used);
            for gi in 0..gts.len() {
                if used[gi] || preds[pi].0 != gts[gi].0 {
                    continue;
                }
                if iou3d_aabb(&preds[pi].1, &gts[gi].1) >= threshold {
                    used[gi] = true;
                    best = best.max(1 + recurse(preds, gts, threshold, pi + 1, used));
                    used[gi] = false;
                }
            }
            best
        }
        let mut used = vec![false; gts.len()];
        let matched = recurse(preds, gts, threshold, 0, &mut used);
        detection_scores(matched, preds.len(), gts.len()).f1
    }

    #[test]
    fn greedy_equals_optimal_on_small_fixtures() {
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..200 {
            let n_pred = rng.gen_range(0..=4);
            let n_gt = rng.gen_range(0..=4);
            let cat = |rng: &mut StdRng| ["a", "b"][rng.gen_range(0..2)].to_string();
            let mk = |rng: &mut StdRng| {
                bx(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(1.0..3.0),
                    rng.gen_range(0.5..2.0),
                )
            };
            let preds: Vec<_> = (0..n_pred).map(|_| (cat(&mut rng), mk(&mut rng))).collect();
            let gts: Vec<_> = (0..n_gt).map(|_| (cat(&mut rng), mk(&mut rng))).collect();
            let (_, scores) = match_detections(&preds, &gts, 0.25);
            let best = optimal_f1(&preds, &gts, 0.25);
            assert!(
                (scores.f1 - best).abs() < 1e-12,
                "greedy {} vs optimal {} on preds={preds:?} gts={gts:?}",
                scores.f1,
                best
            );
        }
    }

    #[test]
    fn align_depth_examples() {
        let pred = Box3D::new(Point3::new(1.0, 0.0, 2.0), Point3::new(1.0, 1.0, 1.0));
        let gt = Box3D::new(Point3::new(2.0, 0.0, 4.0), Point3::new(2.0, 2.0, 2.0));
        let aligned = align_depth(&pred, &gt).unwrap();
        assert_eq!(aligned.center, Point3::new(2.0, 0.0, 4.0));
        assert_eq!(aligned.size, Point3::new(2.0, 2.0, 2.0));

        let same = align_depth(&pred, &pred).unwrap();
        assert_eq!(same, pred);

        let bad = Box3D::new(Point3::new(0.0, 0.0, -1.0), Point3::new(1.0, 1.0, 1.0));
        assert!(align_depth(&bad, &gt).is_err());
    }

    #[test]
    fn align_depth_preserves_projection() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let mut rng = StdRng::seed_from_u64(81);
        for _ in 0..100 {
            let pred = bx(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(2.0..6.0),
                rng.gen_range(0.2..1.5),
            );
            let gt = bx(0.0, 0.0, rng.gen_range(2.0..10.0), 1.0);
            let aligned = align_depth(&pred, &gt).unwrap();
            let before = project_box(&pred, &intr).unwrap();
            let after = project_box(&aligned, &intr).unwrap();
            for (a, b) in [
                (before.x_min, after.x_min),
                (before.y_min, after.y_min),
                (before.x_max, after.x_max),
                (before.y_max, after.y_max),
            ] {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn grounding_self_evaluation_is_perfect() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let gt = bx(0.2, -0.1, 3.0, 0.8);
        let gt_rect = project_box(&gt, &intr).unwrap();
        let m = grounding_metrics(&gt, &gt_rect, Some(&gt), &intr);
        assert_eq!(m.proj_iou, 1.0);
        assert_eq!(m.proj_offset, 0.0);
        assert_eq!(m.iou3d, Some(1.0));
        assert_eq!(m.offset3d, Some(0.0));
        assert!(m.note.is_none());
    }

    #[test]
    fn grounding_rescaled_prediction_aligns_perfectly() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let gt = bx(0.2, -0.1, 3.0, 0.8);
        let pred = Box3D::new(Point3::new(0.4, -0.2, 6.0), Point3::new(1.6, 1.6, 1.6));
        let gt_rect = project_box(&gt, &intr).unwrap();
        let m = grounding_metrics(&pred, &gt_rect, Some(&gt), &intr);
        assert!((m.proj_iou - 1.0).abs() < 1e-9);
        assert!(m.proj_offset < 1e-9);
        assert!((m.iou3d.unwrap() - 1.0).abs() < 1e-9);
        assert!(m.offset3d.unwrap() < 1e-9);
    }

    #[test]
    fn grounding_behind_camera_scored_zero_with_note() {
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let gt = bx(0.0, 0.0, 3.0, 0.8);
        let gt_rect = project_box(&gt, &intr).unwrap();
        let behind = bx(0.0, 0.0, -2.0, 0.5);
        let m = grounding_metrics(&behind, &gt_rect, Some(&gt), &intr);
        assert_eq!(m.proj_iou, 0.0);
        assert_eq!(m.iou3d, Some(0.0));
        assert!(m.note.is_some());
    }

    #[test]
    fn numeric_boundary_is_inclusive() {
        assert!(grade_numeric("about 5 meters", 4.0, 0.25).correct);
        assert!(!grade_numeric("5.01 m", 4.0, 0.25).correct);
        assert!(grade_numeric("3 m", 4.0, 0.25).correct);
        assert!(!grade_numeric("2.99", 4.0, 0.25).correct);
    }

    #[test]
    fn numeric_unit_conversion() {
        assert!(grade_numeric("200 cm", 2.0, 0.25).correct);
        assert!(grade_numeric("2000 millimeters", 2.0, 0.25).correct);
        assert!(!grade_numeric("200 m", 2.0, 0.25).correct);
        assert!(grade_numeric("2", 2.0, 0.25).correct);
    }

    #[test]
    fn numeric_without_number_is_incorrect() {
        let v = grade_numeric("quite far away", 2.0, 0.25);
        assert!(!v.correct);
        assert_eq!(v.detail, "no numeric found");
    }

    #[test]
    fn numeric_grading_is_scale_consistent() {
        let mut rng = StdRng::seed_from_u64(83);
        for _ in 0..200 {
            let gt = rng.gen_range(0.5..20.0);
            let pred = rng.gen_range(0.1..30.0);
            let k = rng.gen_range(0.1..10.0);
            let a = grade_numeric(&format!("{pred} m"), gt, 0.25).correct;
            let b = grade_numeric(&format!("{} m", pred * k), gt * k, 0.25).correct;
            // Skip knife-edge cases where scaling noise crosses the boundary.
            let err = (pred - gt).abs() / (0.25 * gt);
            if (err - 1.0).abs() > 1e-9 {
                assert_eq!(a, b, "gt={gt} pred={pred} k={k}");
            }
        }
    }

    #[test]
    fn direction_grading_examples() {
        let three = ClockHour::new(3).unwrap();
        assert!(grade_direction("roughly 3 o'clock", three).correct);
        assert!(!grade_direction("2 o'clock", three).correct);
        let twelve = ClockHour::new(12).unwrap();
        assert!(grade_direction("twelve o'clock", twelve).correct);
        assert!(grade_direction("It is at 12 o'clock.", twelve).correct);
        assert!(!grade_direction("somewhere ahead", twelve).correct);
        assert!(
            grade_direction(
                "ten o’clock".replace('\u{2019}', "'").as_str(),
                ClockHour::new(10).unwrap()
            )
            .correct
        );
    }

    #[test]
    fn keyword_verdicts() {
        assert!(keyword_verdict("left", "the chair is to the left of the table").correct);
        assert!(!keyword_verdict("left", "it is on the right").correct);
        assert!(!keyword_verdict("left", "hard to say").correct);
        assert!(keyword_verdict("taller", "A is clearly taller than B").correct);
        assert!(!keyword_verdict("taller", "A is shorter").correct);
    }

    struct FixedJudge(JudgeReply);

    impl Judge for FixedJudge {
        fn judge(&self, _request: &JudgeRequest<'_>) -> Result<JudgeReply, TextServiceError> {
            Ok(self.0.clone())
        }
    }

    struct DownJudge;

    impl Judge for DownJudge {
        fn judge(&self, _request: &JudgeRequest<'_>) -> Result<JudgeReply, TextServiceError> {
            Err(TextServiceError::Exhausted {
                attempts: 3,
                last: "connection refused".into(),
            })
        }
    }

    fn verdict_item(answer: &str, value: &str) -> QAItem {
        QAItem {
            id: "scene#left_right#0".into(),
            scene_id: "scene".into(),
            qtype: "left_right".into(),
            question: "Is the chair left of the table?".into(),
            answer: answer.into(),
            reasoning: String::new(),
            object_ids: vec![0, 1],
            answer_value: Some(AnswerValue::Verdict { text: value.into() }),
            rng_seed: 0,
        }
    }

    #[test]
    fn judge_verdict_overrides_keyword_agreement() {
        let item = verdict_item("the chair is left of the table", "left");
        let judge = FixedJudge(JudgeReply {
            verdict: "incorrect".into(),
            rationale: "wrong object".into(),
        });
        // The prediction agrees by keyword, but the judge says no.
        let v = grade_open_ended(&item, "it is to the left", Some(&judge));
        assert!(!v.correct);
        assert!(v.detail.contains("wrong object"));
    }

    #[test]
    fn unreachable_judge_falls_back_degraded() {
        let item = verdict_item("the chair is left of the table", "left");
        let v = grade_open_ended(&item, "it is to the left", Some(&DownJudge));
        assert!(v.correct);
        assert!(v.degraded);
        assert!(v.detail.contains("degraded"));
    }

    #[test]
    fn offline_keyword_grading_without_judge() {
        let item = verdict_item("the chair is left of the table", "left");
        assert!(grade_open_ended(&item, "chair is on the left side", None).correct);
        assert!(!grade_open_ended(&item, "it is on the right", None).correct);
    }

    #[test]
    fn report_aggregation() {
        let g = |qtype: &str, group, correct| GradedItem {
            qtype: qtype.into(),
            group,
            verdict: if correct {
                Verdict::correct("ok".into())
            } else {
                Verdict::incorrect("no".into())
            },
        };
        let items = vec![
            g("left_right", AnswerGroup::OpenEnded, true),
            g("left_right", AnswerGroup::OpenEnded, false),
            g("distance", AnswerGroup::Numerical, true),
            g("distance", AnswerGroup::Numerical, true),
            g("direction", AnswerGroup::Numerical, false),
        ];
        let report = aggregate_report(&items);
        let lr = report
            .rows
            .iter()
            .find(|r| r.qtype == "left_right")
            .unwrap();
        assert_eq!(lr.accuracy, 50.0);
        assert_eq!(report.open_ended.accuracy, 50.0);
        // Numerical micro average: 2 of 3.
        assert!((report.numerical.accuracy - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(report.overall.count, 5);
        assert_eq!(report.overall.correct, 3);
        let table = render_report_table(&report);
        assert!(table.contains("left_right"));
        assert!(table.contains("50.00%"));
    }

    #[test]
    fn report_all_correct_is_100_everywhere() {
        let items = vec![
            GradedItem {
                qtype: "distance".into(),
                group: AnswerGroup::Numerical,
                verdict: Verdict::correct("ok".into()),
            },
            GradedItem {
                qtype: "left_right".into(),
                group: AnswerGroup::OpenEnded,
                verdict: Verdict::correct("ok".into()),
            },
        ];
        let report = aggregate_report(&items);
        assert!(report.rows.iter().all(|r| r.accuracy == 100.0));
        assert_eq!(report.overall.accuracy, 100.0);
        assert_eq!(report.open_ended.accuracy, 100.0);
        assert_eq!(report.numerical.accuracy, 100.0);
    }
}
