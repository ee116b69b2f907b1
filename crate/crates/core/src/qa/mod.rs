//! Generation of 3D detection QA, grounding QA, and spatial-reasoning QA
//! with deterministic chain-of-thought text.
//!
//! All randomness is seeded and splittable: the per-scene seed is a hash of
//! the global seed and the scene id, and each template derives its own
//! stream from that, so generation order never affects output.

pub mod cot;
pub mod templates;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boxlang::{serialize_box, serialize_scene, BoxLangError};
use crate::eval::{AnswerGroup, TextServiceError};
use crate::lift::{ObjectRecord, SceneAnnotation};
use crate::spatial::{
    axis_distance, clock_direction, euclidean_distance, relation, size_compare, AxisDistance,
    RelationKind, SizeKind, Verdict, ViewPoint, TIE_EPSILON_M,
};
pub use cot::{render_cot, Computed};
pub use templates::{TemplateCatalog, TemplateSpec};

#[derive(Debug, thiserror::Error)]
pub enum QaError {
    #[error("template catalog error: {0}")]
    Catalog(String),
    #[error("reasoning chain inconsistency: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    BoxLang(#[from] BoxLangError),
}

/// The question text used for every detection item.
pub const DETECTION_QUESTION: &str = "Detect every annotated object in the image and report each one as a bbox(id, category, u, v, z, sx, sy, sz) token, one per line.";

/// Machine-gradable answer payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerValue {
    Number { value: f64, unit: String },
    Clock { hour: u8 },
    Verdict { text: String },
}

/// One generated question/answer pair with its reasoning chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub scene_id: String,
    pub qtype: String,
    pub question: String,
    pub answer: String,
    /// Deterministic derivation text; empty for detection and grounding QA.
    pub reasoning: String,
    pub object_ids: Vec<u32>,
    pub answer_value: Option<AnswerValue>,
    pub rng_seed: u64,
}

/// Supergroup for accuracy reporting, derived from the answer payload.
pub fn answer_group(item: &QAItem) -> Option<AnswerGroup> {
    match item.answer_value {
        Some(AnswerValue::Number { .. }) | Some(AnswerValue::Clock { .. }) => {
            Some(AnswerGroup::Numerical)
        }
        Some(AnswerValue::Verdict { .. }) => Some(AnswerGroup::OpenEnded),
        None => None,
    }
}

/// Stable 64-bit seed derived from a base seed and a label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Per-scene seed: hash of the global seed and the scene id.
pub fn scene_seed(global_seed: u64, scene_id: &str) -> u64 {
    derive_seed(global_seed, scene_id)
}

/// Detection QA: one item asking for every object, answered with the scene's
/// box tokens. Empty scenes yield no item.
pub fn gen_detection_qa(scene: &SceneAnnotation) -> Result<Option<QAItem>, QaError> {
    if scene.objects.is_empty() {
        return Ok(None);
    }
    let answer = serialize_scene(scene)?;
    Ok(Some(QAItem {
        id: format!("{}#detection#0", scene.scene_id),
        scene_id: scene.scene_id.clone(),
        qtype: "detection".into(),
        question: DETECTION_QUESTION.into(),
        answer,
        reasoning: String::new(),
        object_ids: scene.objects.iter().map(|o| o.id).collect(),
        answer_value: None,
        rng_seed: 0,
    }))
}

fn grounding_item(
    scene: &SceneAnnotation,
    qtype: &str,
    ordinal: usize,
    question: String,
    answer: String,
    object_ids: Vec<u32>,
    seed: u64,
) -> QAItem {
    QAItem {
        id: format!("{}#{qtype}#{ordinal}", scene.scene_id),
        scene_id: scene.scene_id.clone(),
        qtype: qtype.into(),
        question,
        answer,
        reasoning: String::new(),
        object_ids,
        answer_value: None,
        rng_seed: seed,
    }
}

/// Grounding QA: one item per uniquely-named category, one locate-all item
/// per repeated category, and one region-referenced item per repeated
/// category for a sampled member. Categories are visited in lexicographic
/// order so output is deterministic.
pub fn gen_grounding_qa(scene: &SceneAnnotation, scene_seed: u64) -> Result<Vec<QAItem>, QaError> {
    let mut by_category: std::collections::BTreeMap<&str, Vec<&ObjectRecord>> =
        std::collections::BTreeMap::new();
    for record in &scene.objects {
        by_category
            .entry(&record.category)
            .or_default()
            .push(record);
    }
    let seed = derive_seed(scene_seed, "grounding");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut unique_ordinal = 0;
    let mut all_ordinal = 0;
    let mut region_ordinal = 0;
    for (category, records) in &by_category {
        if records.len() == 1 {
            let record = records[0];
            items.push(grounding_item(
                scene,
                "grounding_unique",
                unique_ordinal,
                format!("Locate the {category} in the image."),
                serialize_box(record, &scene.intrinsics)?,
                vec![record.id],
                seed,
            ));
            unique_ordinal += 1;
        } else {
            let tokens: Vec<String> = records
                .iter()
                .map(|r| serialize_box(r, &scene.intrinsics))
                .collect::<Result<_, _>>()?;
            items.push(grounding_item(
                scene,
                "grounding_all",
                all_ordinal,
                format!("Locate all the {category}s in the image."),
                tokens.join("\n"),
                records.iter().map(|r| r.id).collect(),
                seed,
            ));
            all_ordinal += 1;
            // Region reference for one sampled member of the repeated
            // category, so non-unique objects stay individually addressable.
            let pick = records[rng.gen_range(0..records.len())];
            let r = pick.source_rect;
            items.push(grounding_item(
                scene,
                "grounding_region",
                region_ordinal,
                format!(
                    "Locate the {category} in the region [{:.2}, {:.2}, {:.2}, {:.2}] of the image.",
                    r.x_min, r.y_min, r.x_max, r.y_max
                ),
                serialize_box(pick, &scene.intrinsics)?,
                vec![pick.id],
                seed,
            ));
            region_ordinal += 1;
        }
    }
    Ok(items)
}

/// Records whose category appears exactly once in the scene, in id order.
fn unique_category_records(scene: &SceneAnnotation) -> Vec<&ObjectRecord> {
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for r in &scene.objects {
        *counts.entry(r.category.as_str()).or_default() += 1;
    }
    scene
        .objects
        .iter()
        .filter(|r| counts[r.category.as_str()] == 1)
        .collect()
}

/// Draws k distinct indices from 0..n by partial Fisher-Yates.
fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

struct Outcome {
    question: String,
    answer: String,
    answer_value: AnswerValue,
    computed: Computed,
}

fn fill_question(template: &TemplateSpec, cats: &[&str], dim: Option<&str>) -> String {
    let mut q = template.question_skeleton.clone();
    for (placeholder, value) in [
        ("{a}", cats.first()),
        ("{b}", cats.get(1)),
        ("{c}", cats.get(2)),
    ] {
        if let Some(v) = value {
            q = q.replace(placeholder, v);
        }
    }
    if let Some(d) = dim {
        q = q.replace("{dim}", d);
    }
    q
}

/// One attempt at computing a template's answer from sampled records.
/// Returns None on a tie or a degenerate configuration, signalling resample.
fn compute_for_template(
    template: &TemplateSpec,
    records: &[&ObjectRecord],
    rng: &mut ChaCha8Rng,
) -> Option<Outcome> {
    let cats: Vec<&str> = records.iter().map(|r| r.category.as_str()).collect();
    match template.id.as_str() {
        "left_right" | "left_right_opposite" => {
            let verdict = relation(
                &records[0].box3d,
                &records[1].box3d,
                RelationKind::LeftRight,
                template.view,
            );
            if verdict == Verdict::Tie {
                return None;
            }
            let word = if verdict == Verdict::First {
                "left"
            } else {
                "right"
            };
            let answer = if template.view == ViewPoint::Opposite {
                format!(
                    "Viewed from the opposite direction, the {} is to the {word} of the {}.",
                    cats[0], cats[1]
                )
            } else {
                format!("The {} is to the {word} of the {}.", cats[0], cats[1])
            };
            Some(Outcome {
                question: fill_question(template, &cats, None),
                answer,
                answer_value: AnswerValue::Verdict { text: word.into() },
                computed: Computed::Relation {
                    kind: RelationKind::LeftRight,
                    view: template.view,
                    verdict,
                },
            })
        }
        "front_behind" => {
            let verdict = relation(
                &records[0].box3d,
                &records[1].box3d,
                RelationKind::FrontBehind,
                ViewPoint::Camera,
            );
            if verdict == Verdict::Tie {
                return None;
            }
            let word = if verdict == Verdict::First {
                "in front"
            } else {
                "behind"
            };
            let answer = if verdict == Verdict::First {
                format!("The {} is in front of the {}.", cats[0], cats[1])
            } else {
                format!("The {} is behind the {}.", cats[0], cats[1])
            };
            Some(Outcome {
                question: fill_question(template, &cats, None),
                answer,
                answer_value: AnswerValue::Verdict { text: word.into() },
                computed: Computed::Relation {
                    kind: RelationKind::FrontBehind,
                    view: ViewPoint::Camera,
                    verdict,
                },
            })
        }
        "wide_thin" | "tall_short" | "big_small" => {
            let (kind, first_word, second_word) = match template.id.as_str() {
                "wide_thin" => (SizeKind::Wide, "wider", "thinner"),
                "tall_short" => (SizeKind::Tall, "taller", "shorter"),
                _ => (SizeKind::Big, "bigger", "smaller"),
            };
            let verdict = size_compare(&records[0].box3d, &records[1].box3d, kind);
            if verdict == Verdict::Tie {
                return None;
            }
            let word = if verdict == Verdict::First {
                first_word
            } else {
                second_word
            };
            Some(Outcome {
                question: fill_question(template, &cats, None),
                answer: format!("The {} is {word} than the {}.", cats[0], cats[1]),
                answer_value: AnswerValue::Verdict { text: word.into() },
                computed: Computed::Size { kind, verdict },
            })
        }
        "relative_distance" => {
            let d1 = euclidean_distance(&records[0].box3d, &records[1].box3d);
            let d2 = euclidean_distance(&records[0].box3d, &records[2].box3d);
            if (d1 - d2).abs() < TIE_EPSILON_M {
                return None;
            }
            let winner_is_first = d1 < d2;
            let winner = if winner_is_first { cats[1] } else { cats[2] };
            Some(Outcome {
                question: fill_question(template, &cats, None),
                answer: format!("The {winner} is closer to the {}.", cats[0]),
                answer_value: AnswerValue::Verdict {
                    text: winner.into(),
                },
                computed: Computed::CloserOf {
                    first_m: d1,
                    second_m: d2,
                    winner_is_first,
                },
            })
        }
        "depth_comparison" => {
            let depths = [
                records[0].box3d.center.z,
                records[1].box3d.center.z,
                records[2].box3d.center.z,
            ];
            let mut sorted = depths;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if sorted[1] - sorted[0] < TIE_EPSILON_M {
                return None;
            }
            let winner = (0..3)
                .min_by(|&i, &j| depths[i].partial_cmp(&depths[j]).unwrap())
                .unwrap();
            Some(Outcome {
                question: fill_question(template, &cats, None),
                answer: format!("The {} is closest to the camera.", cats[winner]),
                answer_value: AnswerValue::Verdict {
                    text: cats[winner].into(),
                },
                computed: Computed::NearestDepth { depths, winner },
            })
        }
        "width_height" => {
            let height = rng.gen_bool(0.5);
            let meters = if height {
                records[0].box3d.size.y
            } else {
                records[0].box3d.size.x
            };
            if meters < TIE_EPSILON_M {
                return None;
            }
            let dim = if height { "height" } else { "width" };
            let word = if height { "tall" } else { "wide" };
            Some(Outcome {
                question: fill_question(template, &cats, Some(dim)),
                answer: format!("The {} is {meters:.2} meters {word}.", cats[0]),
                answer_value: AnswerValue::Number {
                    value: meters,
                    unit: "m".into(),
                },
                computed: Computed::Dimension { height, meters },
            })
        }
        "distance" => {
            let meters = euclidean_distance(&records[0].box3d, &records[1].box3d);
            if meters < TIE_EPSILON_M {
                return None;
            }
            Some(Outcome {
                question: fill_question(template, &cats, None),
                answer: format!(
                    "The {} and the {} are {meters:.2} meters apart.",
                    cats[0], cats[1]
                ),
                answer_value: AnswerValue::Number {
                    value: meters,
                    unit: "m".into(),
                },
                computed: Computed::Distance { meters },
            })
        }
        "ver_hor_distance" => {
            let vertical = rng.gen_bool(0.5);
            let axis = if vertical {
                AxisDistance::Vertical
            } else {
                AxisDistance::Horizontal
            };
            let meters = axis_distance(&records[0].box3d, &records[1].box3d, axis);
            if meters < TIE_EPSILON_M {
                return None;
            }
            let dim = if vertical { "vertical" } else { "horizontal" };
            Some(Outcome {
                question: fill_question(template, &cats, Some(dim)),
                answer: format!(
                    "The {dim} distance between the {} and the {} is {meters:.2} meters.",
                    cats[0], cats[1]
                ),
                answer_value: AnswerValue::Number {
                    value: meters,
                    unit: "m".into(),
                },
                computed: Computed::AxisGap { axis, meters },
            })
        }
        "direction" => {
            let clock = clock_direction(&records[0].box3d, &records[1].box3d).ok()?;
            Some(Outcome {
                question: fill_question(template, &cats, None),
                answer: format!(
                    "From the {}, the {} is at {}.",
                    cats[0], cats[1], clock.hour
                ),
                answer_value: AnswerValue::Clock {
                    hour: clock.hour.get(),
                },
                computed: Computed::Clock(clock),
            })
        }
        _ => None,
    }
}

/// Generates one reasoning item for a template, or nothing when the scene
/// cannot support it. Objects are sampled (seeded) among uniquely-named
/// records; ties resample up to 8 times before giving up.
pub fn gen_reasoning_qa(
    scene: &SceneAnnotation,
    template: &TemplateSpec,
    scene_seed: u64,
) -> Result<Option<QAItem>, QaError> {
    let pool = unique_category_records(scene);
    if pool.len() < template.required_objects {
        return Ok(None);
    }
    let seed = derive_seed(scene_seed, &template.id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..8 {
        let picks = sample_distinct(&mut rng, pool.len(), template.required_objects);
        let records: Vec<&ObjectRecord> = picks.iter().map(|&i| pool[i]).collect();
        let Some(outcome) = compute_for_template(template, &records, &mut rng) else {
            continue;
        };
        let reasoning = render_cot(template, &records, &outcome.computed)?;
        return Ok(Some(QAItem {
            id: format!("{}#{}#0", scene.scene_id, template.id),
            scene_id: scene.scene_id.clone(),
            qtype: template.id.clone(),
            question: outcome.question,
            answer: outcome.answer,
            reasoning,
            object_ids: records.iter().map(|r| r.id).collect(),
            answer_value: Some(outcome.answer_value),
            rng_seed: seed,
        }));
    }
    Ok(None)
}

/// Rewrites an item's surface text for naturalness.
pub trait Rephraser: Send + Sync {
    fn rephrase(&self, item: &QAItem) -> Result<QAItem, TextServiceError>;
}

/// HTTP rephrase client on the shared text-service contract: POST
/// {question, answer, reasoning} and read the same fields back.
pub struct HttpRephraser {
    service: crate::eval::HttpTextService,
}

impl HttpRephraser {
    pub fn new(config: crate::eval::EndpointConfig) -> Self {
        Self {
            service: crate::eval::HttpTextService::new(config),
        }
    }
}

impl Rephraser for HttpRephraser {
    fn rephrase(&self, item: &QAItem) -> Result<QAItem, TextServiceError> {
        let mut body = serde_json::json!({
            "question": item.question,
            "answer": item.answer,
            "reasoning": item.reasoning,
        });
        if let Some(model) = &self.service.config().model {
            body["model"] = serde_json::Value::String(model.clone());
        }
        let reply = self.service.post_json(&body)?;
        let text = |key: &str, fallback: &str| {
            reply
                .get(key)
                .and_then(|v| v.as_str())
                .unwrap_or(fallback)
                .to_string()
        };
        Ok(QAItem {
            question: text("question", &item.question),
            answer: text("answer", &item.answer),
            reasoning: text("reasoning", &item.reasoning),
            ..item.clone()
        })
    }
}

/// Rephrases an item when a client is configured. Surface text may change;
/// the structured fields must survive unchanged or the rewrite is rejected.
/// Client failures fall back to the original item with a warning.
pub fn rephrase(item: &QAItem, client: Option<&dyn Rephraser>) -> QAItem {
    let Some(client) = client else {
        return item.clone();
    };
    match client.rephrase(item) {
        Ok(rewritten) => {
            let guarded = rewritten.answer_value == item.answer_value
                && rewritten.object_ids == item.object_ids
                && rewritten.qtype == item.qtype
                && rewritten.id == item.id
                && rewritten.scene_id == item.scene_id;
            if guarded {
                rewritten
            } else {
                log::warn!(
                    "rephrase of {} altered protected fields; keeping the original",
                    item.id
                );
                item.clone()
            }
        }
        Err(e) => {
            log::warn!("rephrase of {} failed ({e}); keeping the original", item.id);
            item.clone()
        }
    }
}
