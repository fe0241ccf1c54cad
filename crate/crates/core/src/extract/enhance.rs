use std::f64::consts::{PI, TAU};

use super::orientation::OrientationField;
use crate::types::GrayImage;

/// Standard deviation targeted by [`normalize_image`].
pub const TARGET_STD: f64 = 0.2;

/// Shifts the image to mean 0.5 and scales it towards [`TARGET_STD`]. The gain
/// is capped so no pixel leaves `[0, 1]`, which keeps the mean exact.
pub fn normalize_image(img: &GrayImage) -> GrayImage {
    let n = img.pixels().len();
    if n == 0 {
        return img.clone();
    }
    let mean = img.mean();
    let var = img
        .pixels()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let max_dev = img
        .pixels()
        .iter()
        .map(|&v| (v as f64 - mean).abs())
        .fold(0.0, f64::max);
    if var <= 1e-18 || max_dev <= 1e-12 {
        return GrayImage::filled(img.width(), img.height(), img.ppi(), 0.5);
    }
    let gain = (TARGET_STD / var.sqrt()).min(0.5 / max_dev);
    if (gain - 1.0).abs() < 1e-9 && (mean - 0.5).abs() < 1e-9 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, img.ppi(), |x, y| {
        (0.5 + gain * (img.get(x, y) as f64 - mean)) as f32
    })
}

/// Median ridge period (pixels) over coherent blocks, read from the
/// autocorrelation of intensity profiles taken across the ridges.
pub fn estimate_ridge_period(
    img: &GrayImage,
    field: &OrientationField,
    min_period: f64,
    max_period: f64,
) -> Option<f64> {
    let mut periods: Vec<f64> = block_periods(img, field, min_period, max_period)
        .into_iter()
        .flatten()
        .collect();
    if periods.is_empty() {
        return None;
    }
    periods.sort_by(f64::total_cmp);
    Some(periods[periods.len() / 2])
}

/// Per-block ridge period in block raster order; `None` where the block is
/// incoherent, too close to the border or has no clear autocorrelation peak.
pub fn block_periods(
    img: &GrayImage,
    field: &OrientationField,
    min_period: f64,
    max_period: f64,
) -> Vec<Option<f64>> {
    let block = field.block_size as f64;
    let half_len = (block.max(2.5 * max_period)).round() as i64;
    let half_wid = (block / 2.0).round().max(2.0) as i64;
    let max_lag = (max_period.ceil() as usize + 1).min(2 * half_len as usize - 2);
    let mut periods = vec![None; field.rows * field.cols];

    for by in 0..field.rows {
        for bx in 0..field.cols {
            if field.coherence_at(bx, by) < 0.5 {
                continue;
            }
            let cx = (bx as f64 + 0.5) * block;
            let cy = (by as f64 + 0.5) * block;
            let theta = field.angle(bx, by);
            // along-ridge and across-ridge pixel steps
            let (ax, ay) = (theta.cos(), -theta.sin());
            let (nx, ny) = (-ay, ax);
            let mut profile = Vec::with_capacity(2 * half_len as usize + 1);
            let mut inside = true;
            'scan: for s in -half_len..=half_len {
                let mut acc = 0.0;
                for t in -half_wid..=half_wid {
                    let px = cx + s as f64 * nx + t as f64 * ax;
                    let py = cy + s as f64 * ny + t as f64 * ay;
                    if px < 0.0 || py < 0.0 {
                        inside = false;
                        break 'scan;
                    }
                    let (ix, iy) = (px.round() as usize, py.round() as usize);
                    if ix >= img.width() || iy >= img.height() {
                        inside = false;
                        break 'scan;
                    }
                    acc += img.get(ix, iy) as f64;
                }
                profile.push(acc);
            }
            if !inside {
                continue;
            }
            let mean = profile.iter().sum::<f64>() / profile.len() as f64;
            for v in &mut profile {
                *v -= mean;
            }
            let ac = |lag: usize| -> f64 {
                let n = profile.len() - lag;
                profile[..n].iter().zip(&profile[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
            };
            let zero = ac(0);
            if zero <= 1e-12 {
                continue;
            }
            let acs: Vec<f64> = (0..=max_lag + 1).map(ac).collect();
            let lo = min_period.floor().max(2.0) as usize;
            let best = (lo..=max_lag)
                .filter(|&l| acs[l] > acs[l - 1] && acs[l] >= acs[l + 1] && acs[l] > 0.2 * zero)
                .max_by(|&a, &b| acs[a].total_cmp(&acs[b]));
            if let Some(l) = best {
                let (a, b, c) = (acs[l - 1], acs[l], acs[l + 1]);
                let denom = a - 2.0 * b + c;
                let off = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
                let p = l as f64 + off;
                if p >= min_period && p <= max_period {
                    periods[by * field.cols + bx] = Some(p);
                }
            }
        }
    }
    periods
}

/// Number of orientations in the Gabor bank.
const BANK: usize = 24;

struct Kernel {
    radius: i64,
    taps: Vec<(i64, i64, f32)>,
}

fn gabor_kernel(theta: f64, period: f64) -> Kernel {
    let sigma_along = 0.55 * period;
    let sigma_across = 0.45 * period;
    let radius = (2.0 * sigma_along).ceil() as i64;
    let (ax, ay) = (theta.cos(), -theta.sin());
    let (nx, ny) = (-ay, ax);
    let mut taps = Vec::new();
    let mut raw = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let along = dx as f64 * ax + dy as f64 * ay;
            let across = dx as f64 * nx + dy as f64 * ny;
            let env = (-(along * along) / (2.0 * sigma_along * sigma_along)
                - (across * across) / (2.0 * sigma_across * sigma_across))
                .exp();
            if env < 1e-3 {
                continue;
            }
            raw.push((dx, dy, env, env * (TAU * across / period).cos()));
        }
    }
    // remove the DC response, then scale to unit gain on a matched cosine
    let env_sum: f64 = raw.iter().map(|r| r.2).sum();
    let dc: f64 = raw.iter().map(|r| r.3).sum::<f64>() / env_sum;
    let mut gain = 0.0;
    let mut vals = Vec::with_capacity(raw.len());
    for &(dx, dy, env, v) in &raw {
        let k = v - dc * env;
        let across = dx as f64 * nx + dy as f64 * ny;
        gain += k * (TAU * across / period).cos();
        vals.push((dx, dy, k));
    }
    for (dx, dy, k) in vals {
        taps.push((dx, dy, (k / gain) as f32));
    }
    Kernel { radius, taps }
}

/// Oriented Gabor filtering tuned to the local ridge flow and a single ridge
/// period. Output keeps ridges dark around a neutral 0.5.
pub fn enhance(img: &GrayImage, field: &OrientationField, period: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return img.clone();
    }
    let bank: Vec<Kernel> = (0..BANK)
        .map(|i| gabor_kernel(PI * i as f64 / BANK as f64, period))
        .collect();
    // dense square kernels for the interior, one slice per kernel row
    let dense: Vec<Vec<f32>> = bank
        .iter()
        .map(|k| {
            let side = (2 * k.radius + 1) as usize;
            let mut d = vec![0f32; side * side];
            for &(dx, dy, v) in &k.taps {
                d[((dy + k.radius) as usize) * side + (dx + k.radius) as usize] = v;
            }
            d
        })
        .collect();
    let px = img.pixels();
    let mut out = vec![0.5f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let theta = field.angle_at_pixel(x as f64 + 0.5, y as f64 + 0.5);
            let idx = ((theta / PI * BANK as f64).round() as usize) % BANK;
            let k = &bank[idx];
            let (xi, yi) = (x as i64, y as i64);
            let interior = xi >= k.radius
                && yi >= k.radius
                && xi + k.radius < w as i64
                && yi + k.radius < h as i64;
            let mut acc = 0.0f32;
            if interior {
                let r = k.radius as usize;
                let side = 2 * r + 1;
                for (row, krow) in dense[idx].chunks_exact(side).enumerate() {
                    let start = (y + row - r) * w + x - r;
                    acc += dot(&px[start..start + side], krow);
                }
            } else {
                for &(dx, dy, v) in &k.taps {
                    let sx = (xi + dx).clamp(0, w as i64 - 1) as usize;
                    let sy = (yi + dy).clamp(0, h as i64 - 1) as usize;
                    acc += v * px[sy * w + sx];
                }
            }
            out[y * w + x] = (0.5 + acc).clamp(0.0, 1.0);
        }
    }
    GrayImage::new(w, h, img.ppi(), out).expect("clamped output")
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    let mut acc: f32 = lanes.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        acc += x * y;
    }
    acc
}
