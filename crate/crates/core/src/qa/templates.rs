//! The reasoning-question template catalog: one entry per question type,
//! spanning the eleven benchmark categories plus an opposite-view variant.

use serde::Deserialize;

use crate::eval::AnswerGroup;
use crate::spatial::ViewPoint;

use super::QaError;

/// One question template. Question skeletons use `{a}`, `{b}`, `{c}` for the
/// sampled object categories and `{dim}` for a template-internal variant
/// word; the reasoning skeleton summarizes the derivation the renderer emits.
#[derive(Debug, Clone)]
pub struct TemplateSpec {
    pub id: String,
    /// Taxonomy category this template exercises.
    pub category: &'static str,
    pub group: AnswerGroup,
    pub required_objects: usize,
    pub question_skeleton: String,
    pub reasoning_skeleton: &'static str,
    pub view: ViewPoint,
}

#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    templates: Vec<TemplateSpec>,
}

impl TemplateCatalog {
    /// The built-in catalog.
    pub fn builtin() -> Self {
        let t = |id: &str,
                 category: &'static str,
                 group,
                 required_objects,
                 question: &str,
                 reasoning: &'static str,
                 view| TemplateSpec {
            id: id.to_string(),
            category,
            group,
            required_objects,
            question_skeleton: question.to_string(),
            reasoning_skeleton: reasoning,
            view,
        };
        use AnswerGroup::{Numerical, OpenEnded};
        let templates = vec![
            t(
                "left_right",
                "left/right",
                OpenEnded,
                2,
                "From the camera's point of view, is the {a} to the left or to the right of the {b}?",
                "compare center x-coordinates; smaller x is further left",
                ViewPoint::Camera,
            ),
            t(
                "left_right_opposite",
                "left/right",
                OpenEnded,
                2,
                "Viewed from the opposite direction of the camera, is the {a} to the left or to the right of the {b}?",
                "compare center x-coordinates, then swap left and right for the opposite view",
                ViewPoint::Opposite,
            ),
            t(
                "front_behind",
                "front/behind",
                OpenEnded,
                2,
                "Is the {a} in front of or behind the {b}?",
                "compare center depths; smaller z is closer to the camera",
                ViewPoint::Camera,
            ),
            t(
                "wide_thin",
                "wide/thin",
                OpenEnded,
                2,
                "Which is wider, the {a} or the {b}?",
                "compare horizontal extents sx",
                ViewPoint::Camera,
            ),
            t(
                "tall_short",
                "tall/short",
                OpenEnded,
                2,
                "Is the {a} taller or shorter than the {b}?",
                "compare vertical extents sy",
                ViewPoint::Camera,
            ),
            t(
                "big_small",
                "big/small",
                OpenEnded,
                2,
                "Which is bigger, the {a} or the {b}?",
                "compare box volumes sx*sy*sz",
                ViewPoint::Camera,
            ),
            t(
                "relative_distance",
                "relative distance comparison",
                OpenEnded,
                3,
                "Which is closer to the {a}: the {b} or the {c}?",
                "compare center-to-center distances from the anchor",
                ViewPoint::Camera,
            ),
            t(
                "depth_comparison",
                "depth comparison",
                OpenEnded,
                3,
                "Among the {a}, the {b}, and the {c}, which is closest to the camera?",
                "order center depths ascending",
                ViewPoint::Camera,
            ),
            t(
                "width_height",
                "width/height",
                Numerical,
                1,
                "What is the {dim} of the {a} in meters?",
                "read the requested box extent",
                ViewPoint::Camera,
            ),
            t(
                "distance",
                "distance",
                Numerical,
                2,
                "What is the distance between the {a} and the {b} in meters?",
                "Euclidean distance between box centers",
                ViewPoint::Camera,
            ),
            t(
                "ver_hor_distance",
                "vertical/horizontal distance",
                Numerical,
                2,
                "What is the {dim} distance between the {a} and the {b} in meters?",
                "absolute single-axis difference of box centers",
                ViewPoint::Camera,
            ),
            t(
                "direction",
                "direction",
                Numerical,
                2,
                "Standing at the {a} and facing where the camera points, at what clock position is the {b}?",
                "xz-plane displacement, angle to the +x axis, angle to clock position",
                ViewPoint::Camera,
            ),
        ];
        Self { templates }
    }

    /// Builtin catalog with per-template question overrides loaded from a
    /// TOML file of `[[templates]] id/question` entries. The derivation logic
    /// is keyed by template id and stays fixed; only surface text can change.
    pub fn with_overrides_from(path: &std::path::Path) -> Result<Self, QaError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct FileCatalog {
            templates: Vec<Override>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Override {
            id: String,
            question: String,
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| QaError::Catalog(format!("cannot read {}: {e}", path.display())))?;
        let parsed: FileCatalog = toml::from_str(&text)
            .map_err(|e| QaError::Catalog(format!("bad catalog {}: {e}", path.display())))?;
        let mut catalog = Self::builtin();
        for ov in parsed.templates {
            let slot = catalog
                .templates
                .iter_mut()
                .find(|t| t.id == ov.id)
                .ok_or_else(|| QaError::Catalog(format!("unknown template id {:?}", ov.id)))?;
            slot.question_skeleton = ov.question;
        }
        Ok(catalog)
    }

    pub fn get(&self, id: &str) -> Option<&TemplateSpec> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TemplateSpec> {
        self.templates.iter()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}
