//! Fixed-length texture embedding and its inner-product comparator.

use std::f64::consts::PI;

use crate::error::Result;
use crate::extract::{block_periods, estimate_orientation_field, normalize_image, ExtractParams, OrientationField};
use crate::types::{check_unit_embedding, GrayImage, EMBEDDING_DIM};

const ORIENTATION_BINS: usize = 48;
const PERIOD_BINS: usize = 16;
const GRID: usize = 4;
const GRID_BINS: usize = 8;

/// Inner product of two unit embeddings, in `[-1, 1]`.
pub fn texture_match(e: &[f32], p: &[f32]) -> Result<f64> {
    check_unit_embedding(e)?;
    check_unit_embedding(p)?;
    let s: f64 = e.iter().zip(p).map(|(a, b)| *a as f64 * *b as f64).sum();
    Ok(s.clamp(-1.0, 1.0))
}

/// Hand-crafted 192-d embedding: a coherence-weighted global orientation
/// histogram (48 bins), a ridge-period histogram (16 bins) and a 4x4 grid
/// of 8-bin orientation histograms. Flat images map to the uniform vector.
pub fn fallback_embedding(img: &GrayImage) -> Vec<f32> {
    let params = ExtractParams::default();
    let normalized = normalize_image(img);
    let field = estimate_orientation_field(&normalized, params.block_px(img.ppi()));
    embedding_from_field(&normalized, &field)
}

/// [`fallback_embedding`] reusing an orientation field computed on the
/// normalized image.
pub fn embedding_from_field(normalized: &GrayImage, field: &OrientationField) -> Vec<f32> {
    let mut v = vec![0.0f64; EMBEDDING_DIM];
    let (orient, rest) = v.split_at_mut(ORIENTATION_BINS);
    let (period, grid) = rest.split_at_mut(PERIOD_BINS);

    let (lo, hi) = ExtractParams::period_range(normalized.ppi());
    let periods = block_periods(normalized, field, lo, hi);
    let (w, h) = (normalized.width().max(1) as f64, normalized.height().max(1) as f64);
    let b = field.block_size as f64;

    for by in 0..field.rows {
        for bx in 0..field.cols {
            let c = field.coherence_at(bx, by);
            if c <= 0.0 {
                continue;
            }
            let a = field.angle(bx, by) / PI;
            soft_bin(orient, a * ORIENTATION_BINS as f64, c, true);
            let gx = (((bx as f64 + 0.5) * b / w) * GRID as f64).min(GRID as f64 - 1.0) as usize;
            let gy = (((by as f64 + 0.5) * b / h) * GRID as f64).min(GRID as f64 - 1.0) as usize;
            let cell = &mut grid[(gy * GRID + gx) * GRID_BINS..][..GRID_BINS];
            soft_bin(cell, a * GRID_BINS as f64, c, true);
            if let Some(p) = periods[by * field.cols + bx] {
                let f = (p - lo) / (hi - lo) * (PERIOD_BINS - 1) as f64;
                soft_bin(period, f, c, false);
            }
        }
    }
    normalize(v)
}

/// Linear split of `weight` between the two bins around position `f`
/// (bin centers at integers).
fn soft_bin(bins: &mut [f64], f: f64, weight: f64, circular: bool) {
    let n = bins.len();
    let f = if circular { f.rem_euclid(n as f64) } else { f.clamp(0.0, (n - 1) as f64) };
    let i = f.floor() as usize % n;
    let r = f - f.floor();
    let j = if circular { (i + 1) % n } else { (i + 1).min(n - 1) };
    bins[i] += weight * (1.0 - r);
    bins[j] += weight * r;
}

fn normalize(v: Vec<f64>) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return vec![(1.0 / (EMBEDDING_DIM as f64).sqrt()) as f32; EMBEDDING_DIM];
    }
    let mut out: Vec<f32> = v.iter().map(|x| (x / norm) as f32).collect();
    // f32 rounding can leave the norm a few ulps off; renormalize once more
    let n32 = out.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    for x in &mut out {
        *x = (*x as f64 / n32) as f32;
    }
    out
}

/// Validates a caller-supplied embedding.
pub fn validate_embedding(e: &[f32]) -> Result<()> {
    check_unit_embedding(e)
}
