//! Numeric implementation of the 3D-aware coordinate encoding: point-map
//! downsampling, per-axis sinusoidal encoding, summation into a coordinate
//! embedding, additive fusion with a feature map, and a finite-difference
//! check of the embedding Jacobian.
//!
//! Coordinates are taken in raw meters scaled by an optional factor
//! (default 1). Invalid cells encode as the zero vector.

use crate::geom::{Point3, PointMap};

#[derive(Debug, thiserror::Error)]
pub enum EncodingError {
    #[error("channel count must be even and >= 2, got {0}")]
    OddChannels(usize),
    #[error("invalid grid size {h}x{w}")]
    BadGrid { h: usize, w: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// h×w×c raster of real-valued features, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(h: usize, w: usize, c: usize) -> Result<Self, EncodingError> {
        if c < 2 || c % 2 != 0 {
            return Err(EncodingError::OddChannels(c));
        }
        Ok(Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        })
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self, EncodingError> {
        if c < 2 || c % 2 != 0 {
            return Err(EncodingError::OddChannels(c));
        }
        if data.len() != h * w * c {
            return Err(EncodingError::ShapeMismatch(format!(
                "feature buffer has {} entries, expected {}x{}x{}",
                data.len(),
                h,
                w,
                c
            )));
        }
        Ok(Self { h, w, c, data })
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let base = (row * self.w + col) * self.c;
        &self.data[base..base + self.c]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let base = (row * self.w + col) * self.c;
        &mut self.data[base..base + self.c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Downsampled point grid: mean valid point per cell, invalid where a cell
/// holds no valid points.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallPointMap {
    pub h: usize,
    pub w: usize,
    pub points: Vec<Point3>,
    pub valid: Vec<bool>,
}

impl SmallPointMap {
    pub fn get(&self, row: usize, col: usize) -> Option<Point3> {
        let i = row * self.w + col;
        self.valid[i].then(|| self.points[i])
    }
}

/// Partitions the pixel grid into h×w near-equal cells and averages the valid
/// points in each. Cell (i, j) covers rows [i·H/h, (i+1)·H/h) and the
/// analogous column span, bounds taken by integer floor.
pub fn downsample_pointmap(
    pm: &PointMap,
    h: usize,
    w: usize,
) -> Result<SmallPointMap, EncodingError> {
    let big_h = pm.height() as usize;
    let big_w = pm.width() as usize;
    if h == 0 || w == 0 || h > big_h || w > big_w {
        return Err(EncodingError::BadGrid { h, w });
    }
    let mut sums = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); h * w];
    for (row, col, p) in pm.iter_valid() {
        let i = (row as usize * h) / big_h;
        let j = (col as usize * w) / big_w;
        let slot = &mut sums[i * w + j];
        slot.0 += p.x;
        slot.1 += p.y;
        slot.2 += p.z;
        slot.3 += 1;
    }
    let mut points = vec![Point3::new(0.0, 0.0, 0.0); h * w];
    let mut valid = vec![false; h * w];
    for (i, &(sx, sy, sz, n)) in sums.iter().enumerate() {
        if n > 0 {
            let n = n as f64;
            points[i] = Point3::new(sx / n, sy / n, sz / n);
            valid[i] = true;
        }
    }
    Ok(SmallPointMap {
        h,
        w,
        points,
        valid,
    })
}

/// Wavelength of encoding pair i for channel count c: 10000^(2i/c).
fn wavelength(i: usize, c: usize) -> f64 {
    10000.0_f64.powf(2.0 * i as f64 / c as f64)
}

/// Sinusoidal encoding of one scalar: entry 2i = sin(α/10000^(2i/c)),
/// entry 2i+1 = cos(α/10000^(2i/c)).
pub fn sinusoidal_pe(alpha: f64, c: usize) -> Result<Vec<f64>, EncodingError> {
    if c < 2 || c % 2 != 0 {
        return Err(EncodingError::OddChannels(c));
    }
    let mut out = vec![0.0; c];
    for i in 0..c / 2 {
        let arg = alpha / wavelength(i, c);
        out[2 * i] = arg.sin();
        out[2 * i + 1] = arg.cos();
    }
    Ok(out)
}

/// Per-cell coordinate embedding: PE(x) + PE(y) + PE(z), entry-wise. Entries
/// lie in [−3, 3]. Returns the zero vector (flagged) for an invalid cell.
pub fn coord_embedding(
    point: Option<Point3>,
    c: usize,
    scale: f64,
) -> Result<Vec<f64>, EncodingError> {
    if c < 2 || c % 2 != 0 {
        return Err(EncodingError::OddChannels(c));
    }
    let Some(p) = point else {
        return Ok(vec![0.0; c]);
    };
    let mut out = sinusoidal_pe(p.x * scale, c)?;
    for (o, v) in out.iter_mut().zip(sinusoidal_pe(p.y * scale, c)?) {
        *o += v;
    }
    for (o, v) in out.iter_mut().zip(sinusoidal_pe(p.z * scale, c)?) {
        *o += v;
    }
    Ok(out)
}

/// Adds the coordinate embedding to the feature map cell-wise. Invalid cells
/// contribute the zero embedding, leaving those features untouched.
pub fn fuse(
    features: &FeatureMap,
    pm_small: &SmallPointMap,
    scale: f64,
) -> Result<FeatureMap, EncodingError> {
    if features.h != pm_small.h || features.w != pm_small.w {
        return Err(EncodingError::ShapeMismatch(format!(
            "feature grid {}x{} vs point grid {}x{}",
            features.h, features.w, pm_small.h, pm_small.w
        )));
    }
    let mut fused = features.clone();
    for row in 0..features.h {
        for col in 0..features.w {
            let emb = coord_embedding(pm_small.get(row, col), features.c, scale)?;
            for (f, e) in fused.cell_mut(row, col).iter_mut().zip(&emb) {
                *f += e;
            }
        }
    }
    Ok(fused)
}

/// Analytic Jacobian of [`coord_embedding`] at `point`: entry (k, axis) is
/// the derivative of embedding entry k w.r.t. that coordinate. For pair i,
/// d/dα sin(α/λ) = cos(α/λ)/λ and d/dα cos(α/λ) = −sin(α/λ)/λ.
pub fn coord_embedding_jacobian(
    point: Point3,
    c: usize,
    scale: f64,
) -> Result<Vec<[f64; 3]>, EncodingError> {
    if c < 2 || c % 2 != 0 {
        return Err(EncodingError::OddChannels(c));
    }
    let mut jac = vec![[0.0; 3]; c];
    for (axis, alpha) in [point.x, point.y, point.z].into_iter().enumerate() {
        let a = alpha * scale;
        for (i, pair) in jac.chunks_exact_mut(2).enumerate() {
            let lam = wavelength(i, c);
            let arg = a / lam;
            // Chain rule: d(arg)/d(coordinate) = scale/λ.
            pair[0][axis] = arg.cos() * scale / lam;
            pair[1][axis] = -arg.sin() * scale / lam;
        }
    }
    Ok(jac)
}

/// Compares the analytic Jacobian with central finite differences and
/// returns the largest per-entry error, each normalized by
/// max(|analytic entry|, entry amplitude scale/λ) so near-zero derivatives
/// do not blow up the ratio.
pub fn gradient_check(
    point: Point3,
    c: usize,
    scale: f64,
    step: f64,
) -> Result<f64, EncodingError> {
    let analytic = coord_embedding_jacobian(point, c, scale)?;
    let mut max_rel = 0.0f64;
    for axis in 0..3 {
        let mut lo = point;
        let mut hi = point;
        match axis {
            0 => {
                lo.x -= step;
                hi.x += step;
            }
            1 => {
                lo.y -= step;
                hi.y += step;
            }
            _ => {
                lo.z -= step;
                hi.z += step;
            }
        }
        let e_lo = coord_embedding(Some(lo), c, scale)?;
        let e_hi = coord_embedding(Some(hi), c, scale)?;
        for k in 0..c {
            let numeric = (e_hi[k] - e_lo[k]) / (2.0 * step);
            let amplitude = scale / wavelength(k / 2, c);
            let denom = analytic[k][axis].abs().max(amplitude);
            let rel = (analytic[k][axis] - numeric).abs() / denom;
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
