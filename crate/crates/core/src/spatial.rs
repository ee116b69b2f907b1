//! Deterministic geometric ground truth: the spatial predicates and
//! quantities the QA generator asserts and the evaluator grades.
//!
//! All verdicts compare box centers under the camera-frame convention
//! (x right, y down, z forward). Ties are explicit: 1 mm for positional
//! comparisons, 1% relative for size comparisons.

use serde::{Deserialize, Serialize};

use crate::geom::Box3D;

/// Positional tie threshold, meters.
pub const TIE_EPSILON_M: f64 = 1e-3;
/// Size tie threshold, relative.
pub const SIZE_TIE_REL: f64 = 0.01;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpatialError {
    #[error("objects are coincident on the xz-plane (displacement {displacement_m} m)")]
    CoincidentObjects { displacement_m: f64 },
    #[error("need at least 2 candidates, got {0}")]
    NotEnoughCandidates(usize),
}

/// Where the question is asked from. `Opposite` is a 180° rotation about the
/// vertical axis, negating x and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewPoint {
    Camera,
    Opposite,
}

/// Hour-hand bearing, 1..=12, with 12 straight ahead of the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockHour(u8);

impl ClockHour {
    pub fn new(hour: u8) -> Option<Self> {
        (1..=12).contains(&hour).then_some(Self(hour))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl std::fmt::Display for ClockHour {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} o'clock", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    LeftRight,
    AboveBelow,
    FrontBehind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeKind {
    Wide,
    Tall,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisDistance {
    Horizontal,
    Vertical,
}

/// Ordered verdict of a pairwise comparison. `First` means the first operand
/// holds the leading pole of the kind (left / above / in front / wider /
/// taller / bigger).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    First,
    Second,
    Tie,
}

impl Verdict {
    pub fn flipped(self) -> Verdict {
        match self {
            Verdict::First => Verdict::Second,
            Verdict::Second => Verdict::First,
            Verdict::Tie => Verdict::Tie,
        }
    }
}

fn viewed_center(b: &Box3D, view: ViewPoint) -> (f64, f64, f64) {
    let c = b.center;
    match view {
        ViewPoint::Camera => (c.x, c.y, c.z),
        ViewPoint::Opposite => (-c.x, c.y, -c.z),
    }
}

/// Pairwise spatial relation on box centers. Left = smaller x, above =
/// smaller y (y points down), front = smaller z, all in the viewed frame;
/// differences under 1 mm are ties.
pub fn relation(a: &Box3D, b: &Box3D, kind: RelationKind, view: ViewPoint) -> Verdict {
    let av = viewed_center(a, view);
    let bv = viewed_center(b, view);
    let (xa, xb) = match kind {
        RelationKind::LeftRight => (av.0, bv.0),
        RelationKind::AboveBelow => (av.1, bv.1),
        RelationKind::FrontBehind => (av.2, bv.2),
    };
    if (xa - xb).abs() < TIE_EPSILON_M {
        Verdict::Tie
    } else if xa < xb {
        Verdict::First
    } else {
        Verdict::Second
    }
}

/// Size comparison: wide compares sx, tall compares sy, big compares volume.
/// Relative differences under 1% are ties.
pub fn size_compare(a: &Box3D, b: &Box3D, kind: SizeKind) -> Verdict {
    let (va, vb) = match kind {
        SizeKind::Wide => (a.size.x, b.size.x),
        SizeKind::Tall => (a.size.y, b.size.y),
        SizeKind::Big => (a.volume(), b.volume()),
    };
    if (va - vb).abs() < SIZE_TIE_REL * va.max(vb) {
        Verdict::Tie
    } else if va > vb {
        Verdict::First
    } else {
        Verdict::Second
    }
}

/// Euclidean distance between box centers, meters.
pub fn euclidean_distance(a: &Box3D, b: &Box3D) -> f64 {
    a.center.distance(b.center)
}

/// Single-axis center distance: horizontal = |Δx|, vertical = |Δy|.
pub fn axis_distance(a: &Box3D, b: &Box3D, axis: AxisDistance) -> f64 {
    match axis {
        AxisDistance::Horizontal => (a.center.x - b.center.x).abs(),
        AxisDistance::Vertical => (a.center.y - b.center.y).abs(),
    }
}

/// Intermediate quantities of the clock computation, used verbatim by the
/// reasoning-chain renderer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockComputation {
    pub dx: f64,
    pub dz: f64,
    pub angle_deg: f64,
    pub hour: ClockHour,
}

/// Hour-hand bearing of `target` from `reference` on the xz-plane.
///
/// The displacement angle θ is measured from the +x axis; +z (straight
/// ahead) is 12 o'clock and hours advance clockwise (3 o'clock = +x).
/// Half-bin angles round clockwise. Displacements under 1 mm error out.
pub fn clock_direction(
    reference: &Box3D,
    target: &Box3D,
) -> Result<ClockComputation, SpatialError> {
    let dx = target.center.x - reference.center.x;
    let dz = target.center.z - reference.center.z;
    let mag = (dx * dx + dz * dz).sqrt();
    if mag < TIE_EPSILON_M {
        return Err(SpatialError::CoincidentObjects {
            displacement_m: mag,
        });
    }
    let angle_deg = dz.atan2(dx).to_degrees().rem_euclid(360.0);
    let q = (90.0 - angle_deg).rem_euclid(360.0) / 30.0;
    // Snap to a 1e-9 grid so float noise cannot move an exact half-bin angle
    // off its boundary before the clockwise tie rule applies.
    let q = (q * 1e9).round() / 1e9;
    let idx = (q + 0.5).floor() as u32 % 12;
    let hour = if idx == 0 { 12 } else { idx as u8 };
    Ok(ClockComputation {
        dx,
        dz,
        angle_deg,
        hour: ClockHour(hour),
    })
}

/// Stable ascending ordering of candidate indices plus a tie flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub order: Vec<usize>,
    pub has_tie: bool,
}

fn rank_by_key(keys: &[f64]) -> Ranking {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&i, &j| keys[i].partial_cmp(&keys[j]).unwrap().then(i.cmp(&j)));
    let has_tie = order
        .windows(2)
        .any(|w| (keys[w[0]] - keys[w[1]]).abs() < TIE_EPSILON_M);
    Ranking { order, has_tie }
}

/// Candidates ordered by distance to the anchor, nearest first. Ties under
/// 1 mm keep input order and set the tie flag.
pub fn rank_by_distance(anchor: &Box3D, candidates: &[Box3D]) -> Result<Ranking, SpatialError> {
    if candidates.len() < 2 {
        return Err(SpatialError::NotEnoughCandidates(candidates.len()));
    }
    let keys: Vec<f64> = candidates
        .iter()
        .map(|c| euclidean_distance(anchor, c))
        .collect();
    Ok(rank_by_key(&keys))
}

/// Candidates ordered by center depth, nearest first. Same tie rules as
/// [`rank_by_distance`].
pub fn depth_order(candidates: &[Box3D]) -> Result<Ranking, SpatialError> {
    if candidates.len() < 2 {
        return Err(SpatialError::NotEnoughCandidates(candidates.len()));
    }
    let keys: Vec<f64> = candidates.iter().map(|c| c.center.z).collect();
    Ok(rank_by_key(&keys))
}
