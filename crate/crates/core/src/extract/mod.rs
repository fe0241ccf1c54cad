//! Classical minutiae extraction: normalization, block orientation field,
//! oriented Gabor enhancement, binarization, thinning and crossing-number
//! detection.
//!
//! Spatial parameters are given at 500 ppi and scaled linearly with the
//! image resolution, so 500 ppi and 1,900 ppi captures share one code path.

mod enhance;
mod minutiae;
mod orientation;
mod thin;

use serde::{Deserialize, Serialize};

pub use enhance::{block_periods, enhance, estimate_ridge_period, normalize_image, TARGET_STD};
pub use minutiae::{
    candidates, classify, crossing_number, detect, DetectParams, Detection, MinutiaKind,
};
pub use orientation::{estimate_orientation_field, OrientationField};
pub use thin::{binarize, remove_small_components, thin, BinarizeMethod, Mask};

use crate::error::{Error, Result};
use crate::types::{GrayImage, MinutiaeSet};

const REFERENCE_PPI: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractParams {
    /// Orientation block size in pixels at 500 ppi.
    pub block_size: f64,
    /// Gabor wavelength in pixels at 500 ppi; estimated per image when absent.
    pub gabor_wavelength: Option<f64>,
    pub binarize: BinarizeMethod,
    pub min_quality_coherence: f64,
    /// Minutiae closer than this to the image edge are discarded (pixels at 500 ppi).
    pub border_margin: f64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            block_size: 16.0,
            gabor_wavelength: None,
            binarize: BinarizeMethod::default(),
            min_quality_coherence: 0.25,
            border_margin: 8.0,
        }
    }
}

impl ExtractParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.block_size) || !positive(self.border_margin) {
            return Err(Error::invalid(
                "extract params",
                "block size and border margin must be positive",
            ));
        }
        if let Some(wl) = self.gabor_wavelength {
            if !positive(wl) {
                return Err(Error::invalid("extract params", "wavelength must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.min_quality_coherence) {
            return Err(Error::invalid(
                "extract params",
                "min_quality_coherence must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    fn scale(ppi: u32) -> f64 {
        ppi as f64 / REFERENCE_PPI
    }

    pub fn block_px(&self, ppi: u32) -> usize {
        (self.block_size * Self::scale(ppi)).round().max(4.0) as usize
    }

    pub fn border_px(&self, ppi: u32) -> f64 {
        self.border_margin * Self::scale(ppi)
    }

    /// Plausible ridge periods at this resolution (3 to 15 px at 500 ppi).
    pub fn period_range(ppi: u32) -> (f64, f64) {
        (3.0 * Self::scale(ppi), 15.0 * Self::scale(ppi))
    }
}

/// Everything the pipeline produced for one image.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub normalized: GrayImage,
    pub field: OrientationField,
    pub period: f64,
    pub enhanced: GrayImage,
    pub skeleton: Mask,
    pub detections: Vec<Detection>,
}

impl Extraction {
    pub fn minutiae(&self) -> MinutiaeSet {
        MinutiaeSet {
            minutiae: self.detections.iter().map(|d| d.minutia).collect(),
            source_ppi: self.normalized.ppi(),
        }
    }
}

/// Binarizes, removes specks and pores smaller than a fraction of a ridge
/// cell, and thins to a one-pixel skeleton.
pub fn binarize_and_thin(img: &GrayImage, params: &ExtractParams, period: f64) -> Mask {
    let block = params.block_px(img.ppi());
    let mut mask = binarize(img, params.binarize, block);
    let cell = (period * period).max(4.0);
    remove_small_components(&mut mask, true, (0.5 * cell) as usize);
    remove_small_components(&mut mask, false, (0.25 * cell) as usize);
    thin(&mask)
}

pub fn extract(img: &GrayImage, params: &ExtractParams) -> Result<Extraction> {
    params.validate()?;
    let ppi = img.ppi();
    let normalized = normalize_image(img);
    let block = params.block_px(ppi);
    let field = estimate_orientation_field(&normalized, block);
    let (lo, hi) = ExtractParams::period_range(ppi);
    let period = match params.gabor_wavelength {
        Some(wl) => wl * ExtractParams::scale(ppi),
        None => estimate_ridge_period(&normalized, &field, lo, hi).unwrap_or(0.5 * (lo + hi)),
    };
    let enhanced = enhance(&normalized, &field, period);
    let skeleton = binarize_and_thin(&enhanced, params, period);
    let detections = detect(
        &skeleton,
        &field,
        &DetectParams {
            period,
            border_margin: params.border_px(ppi),
            min_quality_coherence: params.min_quality_coherence,
        },
    );
    Ok(Extraction {
        normalized,
        field,
        period,
        enhanced,
        skeleton,
        detections,
    })
}

/// Convenience wrapper returning only the minutiae.
pub fn extract_minutiae(img: &GrayImage, params: &ExtractParams) -> Result<MinutiaeSet> {
    Ok(extract(img, params)?.minutiae())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minmap::angle_diff;
    use std::f64::consts::{PI, TAU};

    /// Straight ridges at visual angle `theta` with the given period.
    fn stripes(size: usize, theta: f64, period: f64, noise: f64) -> GrayImage {
        let (nx, ny) = (theta.sin(), theta.cos());
        let mut state = 0x9E37_79B9u32;
        GrayImage::from_fn(size, size, 500, |x, y| {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            let n = noise * ((state as f64 / u32::MAX as f64) - 0.5);
            let across = x as f64 * nx + y as f64 * ny;
            (0.5 - 0.3 * (TAU * across / period).cos() + n) as f32
        })
    }

    fn axial_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(PI);
        d.min(PI - d)
    }

    fn interior_angles(f: &OrientationField) -> Vec<f64> {
        let mut out = Vec::new();
        for by in 1..f.rows - 1 {
            for bx in 1..f.cols - 1 {
                out.push(f.angle(bx, by));
            }
        }
        out
    }

    #[test]
    fn stripe_orientation_recovered() {
        for deg in [0.0f64, 30.0, 75.0, 120.0] {
            let t = deg.to_radians();
            let f = estimate_orientation_field(&stripes(128, t, 9.0, 0.0), 16);
            for a in interior_angles(&f) {
                assert!(axial_diff(a, t) < 2f64.to_radians(), "{deg}: {}", a.to_degrees());
            }
        }
    }

    #[test]
    fn perpendicular_stripes_differ_by_quarter_turn() {
        let a = estimate_orientation_field(&stripes(128, 0.4, 9.0, 0.0), 16);
        let b = estimate_orientation_field(&stripes(128, 0.4 + PI / 2.0, 9.0, 0.0), 16);
        let (ai, bi) = (interior_angles(&a), interior_angles(&b));
        for (x, y) in ai.iter().zip(&bi) {
            assert!((axial_diff(*x, *y) - PI / 2.0).abs() < 2f64.to_radians());
        }
    }

    #[test]
    fn period_estimate_matches_stripes() {
        let img = stripes(160, 0.7, 10.0, 0.0);
        let f = estimate_orientation_field(&img, 16);
        let p = estimate_ridge_period(&img, &f, 3.0, 15.0).unwrap();
        assert!((p - 10.0).abs() < 0.5, "{p}");
    }

    #[test]
    fn enhancement_restores_noisy_ridges() {
        let period = 9.0;
        let clean = stripes(128, 0.5, period, 0.0);
        let noisy = stripes(128, 0.5, period, 0.9);
        let f = estimate_orientation_field(&normalize_image(&clean), 16);
        let enhanced = enhance(&normalize_image(&noisy), &f, period);
        let agree = |img: &GrayImage| {
            let mut hits = 0;
            let mut total = 0;
            for y in 16..112 {
                for x in 16..112 {
                    let truth = clean.get(x, y) < 0.5;
                    hits += ((img.get(x, y) < 0.5) == truth) as usize;
                    total += 1;
                }
            }
            hits as f64 / total as f64
        };
        let before = agree(&normalize_image(&noisy));
        let after = agree(&enhanced);
        assert!(after > before && after > 0.9, "{before} -> {after}");
    }

    #[test]
    fn flat_image_enhances_to_flat() {
        let img = GrayImage::filled(48, 48, 500, 0.5);
        let f = estimate_orientation_field(&img, 16);
        let e = enhance(&img, &f, 9.0);
        assert!(e.pixels().iter().all(|&v| (v - 0.5).abs() < 1e-5));
    }

    #[test]
    fn straight_stripes_have_no_interior_minutiae() {
        let img = stripes(128, 0.3, 9.0, 0.0);
        let ex = extract(&img, &ExtractParams { border_margin: 24.0, ..Default::default() })
            .unwrap();
        assert!(ex.detections.is_empty(), "{:?}", ex.detections);
    }

    #[test]
    fn phase_singularity_yields_one_minutia() {
        // horizontal ridges with one extra ridge starting at (64, 60)
        let img = GrayImage::from_fn(128, 128, 500, |x, y| {
            let (dx, dy) = (x as f64 - 64.0, y as f64 - 60.0);
            let phase = TAU * y as f64 / 10.0 + dy.atan2(dx);
            (0.5 - 0.35 * phase.cos()) as f32
        });
        let ex = extract(&img, &ExtractParams { border_margin: 20.0, ..Default::default() })
            .unwrap();
        let near: Vec<_> = ex
            .detections
            .iter()
            .filter(|d| (d.minutia.x - 64.0).hypot(d.minutia.y - 60.0) < 8.0)
            .collect();
        assert_eq!(near.len(), 1, "{:?}", ex.detections);
        assert_eq!(ex.detections.len(), 1, "{:?}", ex.detections);
        // the extra ridge opens towards one horizontal side
        let t = near[0].minutia.theta;
        assert!(angle_diff(t, 0.0).min(angle_diff(t, PI)) < 0.4, "{t}");
    }

    #[test]
    fn params_reject_bad_values() {
        let bad = ExtractParams { block_size: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ExtractParams { min_quality_coherence: 2.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!(ExtractParams::default().block_px(1000), 32);
    }
}
