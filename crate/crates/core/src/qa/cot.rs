//! Deterministic chain-of-thought rendering. Every numeric quantity placed
//! in the text is re-derived from the object records first; a mismatch with
//! the caller-supplied values is an internal error, never silently accepted.

use crate::lift::ObjectRecord;
use crate::spatial::{
    axis_distance, clock_direction, euclidean_distance, relation, size_compare, AxisDistance,
    ClockComputation, RelationKind, SizeKind, Verdict, ViewPoint,
};

use super::templates::TemplateSpec;
use super::QaError;

/// Values computed for one reasoning question, fed to the renderer and kept
/// for machine grading.
#[derive(Debug, Clone, PartialEq)]
pub enum Computed {
    Relation {
        kind: RelationKind,
        view: ViewPoint,
        verdict: Verdict,
    },
    Size {
        kind: SizeKind,
        verdict: Verdict,
    },
    Distance {
        meters: f64,
    },
    AxisGap {
        axis: AxisDistance,
        meters: f64,
    },
    Clock(ClockComputation),
    Dimension {
        height: bool,
        meters: f64,
    },
    /// Anchor is records[0]; candidates are records[1] and records[2].
    CloserOf {
        first_m: f64,
        second_m: f64,
        winner_is_first: bool,
    },
    /// Depths of records[0..3]; winner indexes the nearest.
    NearestDepth {
        depths: [f64; 3],
        winner: usize,
    },
}

fn n2(x: f64) -> String {
    format!("{x:.2}")
}

fn center_str(r: &ObjectRecord) -> String {
    let c = r.box3d.center;
    format!("({}, {}, {})", n2(c.x), n2(c.y), n2(c.z))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn inconsistent(what: &str) -> QaError {
    QaError::Inconsistent(format!("supplied {what} does not match re-derivation"))
}

/// Fills the reasoning chain for one template from its records and computed
/// values, re-deriving every quantity to guard against drift.
pub fn render_cot(
    template: &TemplateSpec,
    records: &[&ObjectRecord],
    computed: &Computed,
) -> Result<String, QaError> {
    if records.len() < template.required_objects {
        return Err(QaError::Inconsistent(format!(
            "template {} needs {} objects, got {}",
            template.id,
            template.required_objects,
            records.len()
        )));
    }
    match computed {
        Computed::Relation {
            kind,
            view,
            verdict,
        } => {
            let (a, b) = (records[0], records[1]);
            if relation(&a.box3d, &b.box3d, *kind, *view) != *verdict {
                return Err(inconsistent("relation verdict"));
            }
            let opener = format!(
                "In the camera frame, the {} is centered at {} meters and the {} at {} meters.",
                a.category,
                center_str(a),
                b.category,
                center_str(b)
            );
            Ok(match (kind, view) {
                (RelationKind::LeftRight, ViewPoint::Camera) => {
                    let word = if *verdict == Verdict::First {
                        "left"
                    } else {
                        "right"
                    };
                    format!(
                        "{opener} Comparing x-coordinates, {} versus {}: the smaller x lies further left, so the {} is to the {word} of the {}.",
                        n2(a.box3d.center.x),
                        n2(b.box3d.center.x),
                        a.category,
                        b.category
                    )
                }
                (RelationKind::LeftRight, ViewPoint::Opposite) => {
                    let word = if *verdict == Verdict::First {
                        "left"
                    } else {
                        "right"
                    };
                    format!(
                        "{opener} Comparing x-coordinates, {} versus {}: the smaller x lies further left for the camera, and turning to the opposite view swaps left and right, so from there the {} is to the {word} of the {}.",
                        n2(a.box3d.center.x),
                        n2(b.box3d.center.x),
                        a.category,
                        b.category
                    )
                }
                (RelationKind::FrontBehind, _) => {
                    let word = if *verdict == Verdict::First {
                        "in front of"
                    } else {
                        "behind"
                    };
                    format!(
                        "{opener} Comparing depths, {} versus {} meters: the smaller depth is nearer the camera, so the {} is {word} the {}.",
                        n2(a.box3d.center.z),
                        n2(b.box3d.center.z),
                        a.category,
                        b.category
                    )
                }
                (RelationKind::AboveBelow, _) => {
                    let word = if *verdict == Verdict::First {
                        "above"
                    } else {
                        "below"
                    };
                    format!(
                        "{opener} Comparing y-coordinates (y points down), {} versus {}: the smaller y is higher, so the {} is {word} the {}.",
                        n2(a.box3d.center.y),
                        n2(b.box3d.center.y),
                        a.category,
                        b.category
                    )
                }
            })
        }
        Computed::Size { kind, verdict } => {
            let (a, b) = (records[0], records[1]);
            if size_compare(&a.box3d, &b.box3d, *kind) != *verdict {
                return Err(inconsistent("size verdict"));
            }
            let first = *verdict == Verdict::First;
            Ok(match kind {
                SizeKind::Wide => format!(
                    "The {} is {} meters wide and the {} is {} meters wide, so the {} is {} than the {}.",
                    a.category,
                    n2(a.box3d.size.x),
                    b.category,
                    n2(b.box3d.size.x),
                    a.category,
                    if first { "wider" } else { "thinner" },
                    b.category
                ),
                SizeKind::Tall => format!(
                    "The {} is {} meters tall and the {} is {} meters tall, so the {} is {} than the {}.",
                    a.category,
                    n2(a.box3d.size.y),
                    b.category,
                    n2(b.box3d.size.y),
                    a.category,
                    if first { "taller" } else { "shorter" },
                    b.category
                ),
                SizeKind::Big => format!(
                    "The {} spans {} by {} by {} meters, a volume of {} cubic meters, while the {} spans {} by {} by {} meters, a volume of {} cubic meters. So the {} is {} than the {}.",
                    a.category,
                    n2(a.box3d.size.x),
                    n2(a.box3d.size.y),
                    n2(a.box3d.size.z),
                    n2(a.box3d.volume()),
                    b.category,
                    n2(b.box3d.size.x),
                    n2(b.box3d.size.y),
                    n2(b.box3d.size.z),
                    n2(b.box3d.volume()),
                    a.category,
                    if first { "bigger" } else { "smaller" },
                    b.category
                ),
            })
        }
        Computed::Distance { meters } => {
            let (a, b) = (records[0], records[1]);
            let derived = euclidean_distance(&a.box3d, &b.box3d);
            if !close(derived, *meters) {
                return Err(inconsistent("distance"));
            }
            let dx = b.box3d.center.x - a.box3d.center.x;
            let dy = b.box3d.center.y - a.box3d.center.y;
            let dz = b.box3d.center.z - a.box3d.center.z;
            Ok(format!(
                "The {} is centered at {} meters and the {} at {} meters. The center displacement is ({}, {}, {}) meters, giving a straight-line distance of {} meters.",
                a.category,
                center_str(a),
                b.category,
                center_str(b),
                n2(dx),
                n2(dy),
                n2(dz),
                n2(*meters)
            ))
        }
        Computed::AxisGap { axis, meters } => {
            let (a, b) = (records[0], records[1]);
            let derived = axis_distance(&a.box3d, &b.box3d, *axis);
            if !close(derived, *meters) {
                return Err(inconsistent("axis distance"));
            }
            let axis_word = match axis {
                AxisDistance::Horizontal => "horizontal x-axis",
                AxisDistance::Vertical => "vertical y-axis",
            };
            Ok(format!(
                "The {} is centered at {} meters and the {} at {} meters. Along the {axis_word}, the centers are {} meters apart.",
                a.category,
                center_str(a),
                b.category,
                center_str(b),
                n2(*meters)
            ))
        }
        Computed::Clock(clock) => {
            let (a, b) = (records[0], records[1]);
            let derived = clock_direction(&a.box3d, &b.box3d)
                .map_err(|e| QaError::Inconsistent(e.to_string()))?;
            if derived.hour != clock.hour
                || !close(derived.dx, clock.dx)
                || !close(derived.dz, clock.dz)
                || !close(derived.angle_deg, clock.angle_deg)
            {
                return Err(inconsistent("clock computation"));
            }
            Ok(format!(
                "The {} is centered at {} meters and the {} at {} meters. On the xz-plane, the vector from the {} to the {} is ({}, {}). Its angle with respect to the positive x-axis is {} degrees, and converting that angle into a clock position gives {}.",
                a.category,
                center_str(a),
                b.category,
                center_str(b),
                a.category,
                b.category,
                n2(clock.dx),
                n2(clock.dz),
                n2(clock.angle_deg),
                clock.hour
            ))
        }
        Computed::Dimension { height, meters } => {
            let a = records[0];
            let derived = if *height {
                a.box3d.size.y
            } else {
                a.box3d.size.x
            };
            if !close(derived, *meters) {
                return Err(inconsistent("dimension"));
            }
            let s = a.box3d.size;
            Ok(format!(
                "The {}'s box extends {} meters along x, {} meters along y, and {} meters along z, so its {} is {} meters.",
                a.category,
                n2(s.x),
                n2(s.y),
                n2(s.z),
                if *height { "height" } else { "width" },
                n2(*meters)
            ))
        }
        Computed::CloserOf {
            first_m,
            second_m,
            winner_is_first,
        } => {
            let (anchor, b, c) = (records[0], records[1], records[2]);
            let d1 = euclidean_distance(&anchor.box3d, &b.box3d);
            let d2 = euclidean_distance(&anchor.box3d, &c.box3d);
            if !close(d1, *first_m) || !close(d2, *second_m) || (*winner_is_first != (d1 < d2)) {
                return Err(inconsistent("relative distance"));
            }
            let winner = if *winner_is_first { b } else { c };
            Ok(format!(
                "The distance from the {} to the {} is {} meters, and from the {} to the {} is {} meters. The smaller of {} and {} belongs to the {}, so the {} is closer to the {}.",
                anchor.category,
                b.category,
                n2(d1),
                anchor.category,
                c.category,
                n2(d2),
                n2(d1),
                n2(d2),
                winner.category,
                winner.category,
                anchor.category
            ))
        }
        Computed::NearestDepth { depths, winner } => {
            let derived = [
                records[0].box3d.center.z,
                records[1].box3d.center.z,
                records[2].box3d.center.z,
            ];
            let derived_winner = (0..3)
                .min_by(|&i, &j| derived[i].partial_cmp(&derived[j]).unwrap())
                .unwrap();
            if derived_winner != *winner || !(0..3).all(|i| close(derived[i], depths[i])) {
                return Err(inconsistent("depth ordering"));
            }
            Ok(format!(
                "Center depths: the {} at {} meters, the {} at {} meters, and the {} at {} meters. The smallest depth is {} meters, so the {} is closest to the camera.",
                records[0].category,
                n2(depths[0]),
                records[1].category,
                n2(depths[1]),
                records[2].category,
                n2(depths[2]),
                n2(depths[*winner]),
                records[*winner].category
            ))
        }
    }
}
