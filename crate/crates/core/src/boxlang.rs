//! Serializer/parser for the structured box language, the textual contract
//! between annotations, generated QA, and model outputs.
//!
//! One box is one token:
//!
//! ```text
//! bbox(id, category, u, v, z, sx, sy, sz)
//! ```
//!
//! where (u, v) is the pixel projection of the 3D center, z its metric depth,
//! and (sx, sy, sz) the metric extents. All numerics carry exactly two
//! decimals, rounded half away from zero. The grammar is documented as ABNF
//! in `docs/boxlang.md`; it is a versioned wire format, so changes here must
//! stay bit-compatible.

use crate::geom::{uvz_to_xyz, xyz_to_uvz, Box3D, CameraIntrinsics, GeomError};
use crate::lift::{ObjectRecord, SceneAnnotation};

#[derive(Debug, thiserror::Error)]
pub enum BoxLangError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid box token: {0}")]
    Validation(String),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<BoxLangError>,
    },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// How to treat malformed input: `Strict` aborts on the first bad line,
/// `Lenient` skips it and reports a diagnostic. Evaluation reads model output
/// leniently; repository I/O is strict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Strict,
    Lenient,
}

/// The parsed fields of one box token. Numerics are quantized to 2 decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxToken {
    pub id: u32,
    pub category: String,
    pub u: f64,
    pub v: f64,
    pub z: f64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

/// A token decoded back to a metric box via intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedBox {
    pub id: u32,
    pub category: String,
    pub box3d: Box3D,
}

/// Diagnostic for one unparseable line under lenient parsing.
#[derive(Debug, Clone)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

/// Rounds half away from zero to 2 decimals, returning whole cents.
fn quantize_cents(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

/// The value a numeric field holds after wire quantization.
pub fn quantize2(x: f64) -> f64 {
    quantize_cents(x) as f64 / 100.0
}

/// Exact fixed-point rendering of a quantized value, e.g. `2.50`, `-0.05`.
fn format_2dec(x: f64) -> String {
    let cents = quantize_cents(x);
    let sign = if cents < 0 { "-" } else { "" };
    let a = cents.unsigned_abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

/// Makes a raw category label safe for the wire: commas and parentheses
/// become `-`, surrounding whitespace is trimmed. Logged when changed.
pub fn sanitize_category(raw: &str) -> String {
    let cleaned: String = raw
        .trim()
        .chars()
        .map(|c| if matches!(c, ',' | '(' | ')') { '-' } else { c })
        .collect();
    if cleaned != raw.trim() {
        log::warn!("category {raw:?} rewritten to {cleaned:?} for box-language compatibility");
    }
    if cleaned.is_empty() {
        return "unlabeled".to_string();
    }
    cleaned
}

/// Encodes one object record as a box token. The 3D center is converted to
/// (u, v, z) through the intrinsics; all numerics are quantized to 2 decimals.
pub fn serialize_box(
    record: &ObjectRecord,
    intr: &CameraIntrinsics,
) -> Result<String, BoxLangError> {
    let (u, v, z) = xyz_to_uvz(record.box3d.center, intr)?;
    let s = record.box3d.size;
    for (name, value) in [
        ("u", u),
        ("v", v),
        ("z", z),
        ("sx", s.x),
        ("sy", s.y),
        ("sz", s.z),
    ] {
        if !value.is_finite() {
            return Err(BoxLangError::Validation(format!(
                "field {name} is not finite: {value}"
            )));
        }
    }
    if quantize2(z) <= 0.0 {
        return Err(BoxLangError::Validation(format!(
            "depth {z} quantizes to a nonpositive value"
        )));
    }
    if [s.x, s.y, s.z].iter().any(|&e| quantize2(e) <= 0.0) {
        return Err(BoxLangError::Validation(format!(
            "extents ({}, {}, {}) must quantize to positive values",
            s.x, s.y, s.z
        )));
    }
    if record.category.contains(['(', ')', ',']) {
        return Err(BoxLangError::Validation(format!(
            "category {:?} contains reserved punctuation",
            record.category
        )));
    }
    Ok(format!(
        "bbox({}, {}, {}, {}, {}, {}, {}, {})",
        record.id,
        record.category,
        format_2dec(u),
        format_2dec(v),
        format_2dec(z),
        format_2dec(s.x),
        format_2dec(s.y),
        format_2dec(s.z),
    ))
}

fn parse_number(field: &str, offset: usize, name: &str) -> Result<f64, BoxLangError> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(BoxLangError::Parse {
            offset,
            message: format!("empty {name} field"),
        });
    }
    let ok_shape = {
        let body = trimmed.strip_prefix(['+', '-']).unwrap_or(trimmed);
        !body.is_empty()
            && body.chars().all(|c| c.is_ascii_digit() || c == '.')
            && body.chars().filter(|&c| c == '.').count() <= 1
            && body.chars().any(|c| c.is_ascii_digit())
    };
    if !ok_shape {
        return Err(BoxLangError::Parse {
            offset,
            message: format!("{name} field {trimmed:?} is not a plain decimal number"),
        });
    }
    trimmed.parse::<f64>().map_err(|e| BoxLangError::Parse {
        offset,
        message: format!("{name} field {trimmed:?}: {e}"),
    })
}

/// Parses one box token. Accepts the canonical grammar plus tolerant
/// whitespace and integer-valued numerics; rejects wrong arity, non-numeric
/// fields, and nonpositive z or extents.
pub fn parse_box(token: &str) -> Result<BoxToken, BoxLangError> {
    let trimmed_start = token.len() - token.trim_start().len();
    let body = token.trim();
    let rest = body.strip_prefix("bbox").ok_or(BoxLangError::Parse {
        offset: trimmed_start,
        message: "token must start with `bbox`".into(),
    })?;
    let after_kw = trimmed_start + 4;
    let inner = rest.trim_start();
    let paren_off = after_kw + (rest.len() - inner.len());
    let inner = inner.strip_prefix('(').ok_or(BoxLangError::Parse {
        offset: paren_off,
        message: "expected `(` after `bbox`".into(),
    })?;
    let close = inner.rfind(')').ok_or(BoxLangError::Parse {
        offset: trimmed_start + body.len(),
        message: "missing closing `)`".into(),
    })?;
    let args_start = paren_off + 1;
    let tail = inner[close + 1..].trim();
    if !tail.is_empty() {
        return Err(BoxLangError::Parse {
            offset: args_start + close + 1,
            message: format!("unexpected trailing content {tail:?}"),
        });
    }
    let args = &inner[..close];

    // Track byte offsets of each comma-separated field for diagnostics.
    let mut fields: Vec<(usize, &str)> = Vec::new();
    let mut start = 0usize;
    for (i, ch) in args.char_indices() {
        if ch == ',' {
            fields.push((args_start + start, &args[start..i]));
            start = i + 1;
        }
    }
    fields.push((args_start + start, &args[start..]));
    if fields.len() != 8 {
        return Err(BoxLangError::Parse {
            offset: args_start,
            message: format!("expected 8 fields, found {}", fields.len()),
        });
    }

    let (id_off, id_raw) = fields[0];
    let id_str = id_raw.trim();
    let id: u32 = id_str.parse().map_err(|_| BoxLangError::Parse {
        offset: id_off,
        message: format!("id field {id_str:?} is not a nonnegative integer"),
    })?;
    let category = fields[1].1.trim().to_string();
    if category.is_empty() {
        return Err(BoxLangError::Parse {
            offset: fields[1].0,
            message: "category field is empty".into(),
        });
    }
    let names = ["u", "v", "z", "sx", "sy", "sz"];
    let mut nums = [0.0f64; 6];
    for (i, name) in names.iter().enumerate() {
        let (off, raw) = fields[i + 2];
        nums[i] = parse_number(raw, off, name)?;
    }
    let [u, v, z, sx, sy, sz] = nums;
    if z <= 0.0 {
        return Err(BoxLangError::Validation(format!(
            "depth must be positive, got {z}"
        )));
    }
    if sx <= 0.0 || sy <= 0.0 || sz <= 0.0 {
        return Err(BoxLangError::Validation(format!(
            "extents must be positive, got ({sx}, {sy}, {sz})"
        )));
    }
    Ok(BoxToken {
        id,
        category,
        u: quantize2(u),
        v: quantize2(v),
        z: quantize2(z),
        sx: quantize2(sx),
        sy: quantize2(sy),
        sz: quantize2(sz),
    })
}

impl BoxToken {
    /// Recovers the metric box this token encodes.
    pub fn decode(&self, intr: &CameraIntrinsics) -> Result<DecodedBox, BoxLangError> {
        let center = uvz_to_xyz(self.u, self.v, self.z, intr)?;
        Ok(DecodedBox {
            id: self.id,
            category: self.category.clone(),
            box3d: Box3D::new(center, crate::geom::Point3::new(self.sx, self.sy, self.sz)),
        })
    }

    /// The canonical wire form of this token.
    pub fn render(&self) -> String {
        format!(
            "bbox({}, {}, {}, {}, {}, {}, {}, {})",
            self.id,
            self.category,
            format_2dec(self.u),
            format_2dec(self.v),
            format_2dec(self.z),
            format_2dec(self.sx),
            format_2dec(self.sy),
            format_2dec(self.sz),
        )
    }
}

/// Newline-delimited tokens for a whole scene, one per record, in record
/// order, with a trailing newline. An empty scene serializes to empty text.
pub fn serialize_scene(scene: &SceneAnnotation) -> Result<String, BoxLangError> {
    let mut out = String::new();
    for record in &scene.objects {
        out.push_str(&serialize_box(record, &scene.intrinsics)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses newline-delimited tokens back to metric boxes. Blank lines are
/// ignored. Under `Lenient`, bad lines are skipped and reported; under
/// `Strict`, the first bad line aborts with its line number.
pub fn parse_scene(
    text: &str,
    intr: &CameraIntrinsics,
    mode: ParseMode,
) -> Result<(Vec<DecodedBox>, Vec<LineIssue>), BoxLangError> {
    let mut boxes = Vec::new();
    let mut issues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        match parse_box(line).and_then(|t| t.decode(intr)) {
            Ok(decoded) => boxes.push(decoded),
            Err(e) => match mode {
                ParseMode::Strict => {
                    return Err(BoxLangError::Line {
                        line: lineno,
                        source: Box::new(e),
                    })
                }
                ParseMode::Lenient => issues.push(LineIssue {
                    line: lineno,
                    message: e.to_string(),
                }),
            },
        }
    }
    Ok((boxes, issues))
}
