//! Growth compensation for young enrollees.
//!
//! Enrollment minutiae (and, for image matchers, enrollment images) of infants
//! captured before the age cutoff are scaled isotropically about the origin.

use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{from_buffer, to_buffer};
use crate::types::{GrayImage, Minutia, MinutiaeSet, Template};

/// Scale applied to every image before it is handed to an external matcher.
pub const EXTERNAL_DOWNSCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgingPolicy {
    pub lambda: f64,
    /// Captures strictly younger than this are scaled.
    pub age_cutoff_weeks: u32,
}

impl Default for AgingPolicy {
    fn default() -> Self {
        Self {
            lambda: 1.1,
            age_cutoff_weeks: 13,
        }
    }
}

impl AgingPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 1.0) {
            return Err(Error::invalid("aging policy", "lambda must be >= 1"));
        }
        if self.age_cutoff_weeks == 0 {
            return Err(Error::invalid("aging policy", "age cutoff must be positive"));
        }
        Ok(())
    }
}

pub fn select_scale_factor(age_weeks_at_capture: u32, policy: &AgingPolicy) -> f64 {
    if age_weeks_at_capture < policy.age_cutoff_weeks {
        policy.lambda
    } else {
        1.0
    }
}

pub fn age_minutiae_set(set: &MinutiaeSet, lambda: f64) -> Result<MinutiaeSet> {
    check_lambda(lambda)?;
    Ok(MinutiaeSet {
        minutiae: set
            .iter()
            .map(|m| Minutia {
                x: lambda * m.x,
                y: lambda * m.y,
                theta: m.theta,
            })
            .collect(),
        source_ppi: set.source_ppi,
    })
}

/// Applies the policy to an enrollment template. Templates already aged, or
/// captured at or after the cutoff, are returned unchanged.
pub fn age_template(t: &Template, policy: &AgingPolicy) -> Result<Template> {
    let lambda = select_scale_factor(t.age_weeks_at_capture, policy);
    if t.aged || lambda == 1.0 {
        return Ok(t.clone());
    }
    Ok(Template {
        minutiae: age_minutiae_set(&t.minutiae, lambda)?,
        aged: true,
        ..t.clone()
    })
}

/// Catmull-Rom resize to `round(lambda * size)`, with ppi scaled by `lambda`.
pub fn age_image(img: &GrayImage, lambda: f64) -> Result<GrayImage> {
    check_lambda(lambda)?;
    let w = ((img.width() as f64 * lambda).round() as u32).max(1);
    let h = ((img.height() as f64 * lambda).round() as u32).max(1);
    let resized = imageops::resize(&to_buffer(img), w, h, FilterType::CatmullRom);
    let ppi = ((img.ppi() as f64 * lambda).round() as u32).max(1);
    Ok(from_buffer(resized, ppi))
}

/// Halves an (already enhanced and aged) image for an external matcher.
pub fn downscale_for_external(img: &GrayImage) -> GrayImage {
    age_image(img, EXTERNAL_DOWNSCALE).expect("constant factor is valid")
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("scale factor", format!("{lambda}")))
    }
}
