//! Depth raster containers: single-channel PFM and 16-bit grayscale PNG with
//! a sidecar unit scale. Both are simple enough to write from any
//! depth-estimation stack; writers are provided for fixtures and tooling.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::DepthMap;

use super::PipelineError;

const SUPPORTED: &str = "supported depth containers: .pfm (grayscale 'Pf') and 16-bit grayscale .png with optional '<file>.meta.json' sidecar";

/// Sidecar metadata for PNG16 depth: meters per raw unit. Without a sidecar,
/// raw units are millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthMeta {
    pub meters_per_unit: f64,
}

impl Default for DepthMeta {
    fn default() -> Self {
        Self {
            meters_per_unit: 1e-3,
        }
    }
}

fn input_err(path: &Path, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Input(format!("{}: {msg}", path.display()))
}

/// Reads a grayscale PFM. Scanlines are stored bottom-up; the scale line's
/// sign selects endianness and its magnitude is ignored, as depth tooling
/// conventionally does.
pub fn read_pfm(path: &Path) -> Result<DepthMap, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| input_err(path, e))?;
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<String, PipelineError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(input_err(path, format!("truncated PFM header ({what})")));
        }
        // Consume exactly one whitespace byte after the token.
        pos += 1;
        Ok(String::from_utf8_lossy(&bytes[start..pos - 1]).into_owned())
    };
    let magic = token("magic")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => {
            return Err(input_err(
                path,
                format!("color PFM not supported; {SUPPORTED}"),
            ))
        }
        other => return Err(input_err(path, format!("bad magic {other:?}; {SUPPORTED}"))),
    }
    let width: u32 = token("width")?
        .parse()
        .map_err(|e| input_err(path, format!("bad width: {e}")))?;
    let height: u32 = token("height")?
        .parse()
        .map_err(|e| input_err(path, format!("bad height: {e}")))?;
    let scale: f64 = token("scale")?
        .parse()
        .map_err(|e| input_err(path, format!("bad scale: {e}")))?;
    let little_endian = scale < 0.0;
    let n = width as usize * height as usize;
    let data = &bytes[pos..];
    if data.len() < n * 4 {
        return Err(input_err(
            path,
            format!("pixel data truncated: {} bytes for {n} samples", data.len()),
        ));
    }
    let mut values = vec![0.0f64; n];
    for row in 0..height as usize {
        // PFM stores the bottom image row first.
        let image_row = height as usize - 1 - row;
        for col in 0..width as usize {
            let off = (row * width as usize + col) * 4;
            let raw: [u8; 4] = data[off..off + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            values[image_row * width as usize + col] = v as f64;
        }
    }
    DepthMap::new(width, height, values).map_err(|e| input_err(path, e))
}

/// Writes a little-endian grayscale PFM from row-major top-down values.
/// Invalid pixels should be passed as NaN or nonpositive values.
pub fn write_pfm(
    path: &Path,
    width: u32,
    height: u32,
    values: &[f64],
) -> Result<(), PipelineError> {
    let n = width as usize * height as usize;
    if values.len() != n {
        return Err(PipelineError::Input(format!(
            "pfm buffer has {} values, expected {n}",
            values.len()
        )));
    }
    let mut out = std::fs::File::create(path).map_err(|e| input_err(path, e))?;
    write!(out, "Pf\n{width} {height}\n-1.0\n").map_err(|e| input_err(path, e))?;
    for row in (0..height as usize).rev() {
        for col in 0..width as usize {
            let v = values[row * width as usize + col] as f32;
            out.write_all(&v.to_le_bytes())
                .map_err(|e| input_err(path, e))?;
        }
    }
    Ok(())
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    std::path::PathBuf::from(s)
}

/// Reads a 16-bit grayscale PNG as metric depth. Raw value 0 marks missing
/// depth; the unit scale comes from the sidecar, defaulting to millimeters.
pub fn read_png16(path: &Path) -> Result<DepthMap, PipelineError> {
    let image = image::open(path).map_err(|e| input_err(path, e))?;
    let gray = match image {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(input_err(
                path,
                format!(
                    "expected 16-bit grayscale PNG, got {:?}; {SUPPORTED}",
                    other.color()
                ),
            ))
        }
    };
    let meta = match std::fs::read_to_string(meta_path(path)) {
        Ok(text) => serde_json::from_str::<DepthMeta>(&text)
            .map_err(|e| input_err(&meta_path(path), format!("bad sidecar: {e}")))?,
        Err(_) => DepthMeta::default(),
    };
    let (width, height) = gray.dimensions();
    let values: Vec<f64> = gray
        .pixels()
        .map(|p| p.0[0] as f64 * meta.meters_per_unit)
        .collect();
    DepthMap::new(width, height, values).map_err(|e| input_err(path, e))
}

/// Writes a 16-bit grayscale PNG plus its sidecar scale.
pub fn write_png16(
    path: &Path,
    width: u32,
    height: u32,
    raw: &[u16],
    meta: DepthMeta,
) -> Result<(), PipelineError> {
    let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_vec(width, height, raw.to_vec())
            .ok_or_else(|| PipelineError::Input("png16 buffer size mismatch".into()))?;
    buf.save(path).map_err(|e| input_err(path, e))?;
    let text = serde_json::to_string(&meta)
        .map_err(|e| PipelineError::Internal(format!("sidecar serialize: {e}")))?;
    std::fs::write(meta_path(path), text).map_err(|e| input_err(path, e))?;
    Ok(())
}

/// Loads a depth raster, dispatching on the file extension.
pub fn load_depth(path: &Path) -> Result<DepthMap, PipelineError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pfm") => read_pfm(path),
        Some("png") => read_png16(path),
        _ => Err(input_err(path, format!("unknown container; {SUPPORTED}"))),
    }
}

/// Reads a binary PNG mask: any pixel with a nonzero luma is foreground.
pub fn read_mask_png(path: &Path) -> Result<crate::lift::Mask, PipelineError> {
    let image = image::open(path).map_err(|e| input_err(path, e))?;
    let gray = image.to_luma8();
    let (width, height) = gray.dimensions();
    let data: Vec<bool> = gray.pixels().map(|p| p.0[0] > 0).collect();
    crate::lift::Mask::new(width, height, data).map_err(|e| input_err(path, e))
}
