//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates follow image convention: `x` is the column, `y` the row, origin
//! at the top-left pixel. Angles are measured counter-clockwise (as seen on
//! screen) from the +x axis, so a direction `theta` corresponds to the pixel
//! step `(cos theta, -sin theta)`.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension of texture embeddings.
pub const EMBEDDING_DIM: usize = 192;

/// Largest enrollment age (in weeks) a template may carry.
pub const MAX_AGE_WEEKS: u32 = 1040;

/// Reduces an angle to `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Direction angle of the pixel step `(dx, dy)` where `dy` grows downward.
pub fn direction_of(dx: f64, dy: f64) -> f64 {
    normalize_angle((-dy).atan2(dx))
}

/// Unit pixel step `(dx, dy)` pointing along `theta`.
pub fn step_of(theta: f64) -> (f64, f64) {
    (theta.cos(), -theta.sin())
}

/// Single-channel image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    ppi: u32,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, ppi: u32, pixels: Vec<f32>) -> Result<Self> {
        if ppi == 0 {
            return Err(Error::invalid("image", "ppi must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(
                "image",
                format!(
                    "{} pixels for a {width}x{height} image",
                    pixels.len()
                ),
            ));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(
                "image",
                format!("intensity {bad} outside [0, 1]"),
            ));
        }
        Ok(Self {
            width,
            height,
            ppi,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, ppi: u32, value: f32) -> Self {
        Self {
            width,
            height,
            ppi: ppi.max(1),
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel; results are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        ppi: u32,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                pixels.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            ppi: ppi.max(1),
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ppi(&self) -> u32 {
        self.ppi
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn with_ppi(mut self, ppi: u32) -> Self {
        self.ppi = ppi.max(1);
        self
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

/// A ridge ending or bifurcation: position in pixels and direction in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minutia {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Minutia {
    /// Validates coordinates and reduces `theta` to `[0, 2π)`.
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
            return Err(Error::invalid("minutia", "non-finite component"));
        }
        if x < 0.0 || y < 0.0 {
            return Err(Error::invalid(
                "minutia",
                format!("negative coordinate ({x}, {y})"),
            ));
        }
        Ok(Self {
            x,
            y,
            theta: normalize_angle(theta),
        })
    }

    pub fn distance(&self, other: &Minutia) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub(crate) fn check(&self) -> Result<()> {
        let ok = self.x.is_finite()
            && self.y.is_finite()
            && self.x >= 0.0
            && self.y >= 0.0
            && (0.0..TAU).contains(&self.theta);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("minutia", format!("{self:?}")))
        }
    }
}

/// Ordered minutiae of one impression.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MinutiaeSet {
    pub minutiae: Vec<Minutia>,
    pub source_ppi: u32,
}

impl MinutiaeSet {
    pub fn new(minutiae: Vec<Minutia>, source_ppi: u32) -> Result<Self> {
        let set = Self {
            minutiae,
            source_ppi,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn empty(source_ppi: u32) -> Self {
        Self {
            minutiae: Vec::new(),
            source_ppi,
        }
    }

    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Minutia> {
        self.minutiae.iter()
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_ppi == 0 {
            return Err(Error::invalid("minutiae set", "ppi must be positive"));
        }
        self.minutiae.iter().try_for_each(Minutia::check)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Thumb {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Thumb {
    pub fn code(self) -> u8 {
        match self {
            Thumb::Left => 0,
            Thumb::Right => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Thumb::Left),
            1 => Some(Thumb::Right),
            _ => None,
        }
    }
}

impl Gender {
    pub fn code(self) -> u8 {
        match self {
            Gender::Unknown => 0,
            Gender::Male => 1,
            Gender::Female => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Gender::Unknown),
            1 => Some(Gender::Male),
            2 => Some(Gender::Female),
            _ => None,
        }
    }
}

impl fmt::Display for Thumb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Thumb::Left => "left",
            Thumb::Right => "right",
        })
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        })
    }
}

impl FromStr for Thumb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Thumb::Left),
            "right" | "r" => Ok(Thumb::Right),
            other => Err(Error::invalid("thumb", format!("`{other}`"))),
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            "unknown" | "u" | "" => Ok(Gender::Unknown),
            other => Err(Error::invalid("gender", format!("`{other}`"))),
        }
    }
}

/// Enrollment record persisted as an IPTF file.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub subject_id: String,
    pub thumb: Thumb,
    pub session_id: String,
    pub age_weeks_at_capture: u32,
    pub gender: Gender,
    pub minutiae: MinutiaeSet,
    pub embedding: Option<Vec<f32>>,
    /// Set once growth compensation has been applied to `minutiae`.
    pub aged: bool,
}

impl Template {
    pub fn validate(&self) -> Result<()> {
        if self.age_weeks_at_capture >= MAX_AGE_WEEKS {
            return Err(Error::invalid(
                "template",
                format!("age {} weeks out of range", self.age_weeks_at_capture),
            ));
        }
        self.minutiae.validate()?;
        if let Some(e) = &self.embedding {
            check_unit_embedding(e)?;
        }
        Ok(())
    }
}

pub(crate) fn check_unit_embedding(e: &[f32]) -> Result<()> {
    if e.len() != EMBEDDING_DIM {
        return Err(Error::invalid(
            "embedding",
            format!("dimension {} != {EMBEDDING_DIM}", e.len()),
        ));
    }
    let norm = e.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(
            "embedding",
            format!("norm {norm} is not 1"),
        ));
    }
    Ok(())
}

/// Per-matcher scores; any slot may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBundle {
    pub minutiae: Option<f64>,
    pub texture: Option<f64>,
    pub external: Option<f64>,
}

impl ScoreBundle {
    pub fn new(minutiae: Option<f64>, texture: Option<f64>, external: Option<f64>) -> Self {
        Self {
            minutiae,
            texture,
            external,
        }
    }

    pub fn slots(&self) -> [Option<f64>; 3] {
        [self.minutiae, self.texture, self.external]
    }
}

/// Non-negative fusion weights summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionWeights {
    pub minutiae: f64,
    pub texture: f64,
    pub external: f64,
}

impl FusionWeights {
    pub fn new(minutiae: f64, texture: f64, external: f64) -> Result<Self> {
        let w = Self {
            minutiae,
            texture,
            external,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("fusion weights", format!("{self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "fusion weights",
                format!("weights sum to {sum}"),
            ));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.minutiae, self.texture, self.external]
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            minutiae: 0.6,
            texture: 0.1,
            external: 0.3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_normalization_stays_half_open() {
        assert_eq!(normalize_angle(-1e-18), 0.0);
        assert!((normalize_angle(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(normalize_angle(TAU), 0.0);
    }

    #[test]
    fn direction_is_counter_clockwise_on_screen() {
        // one row up is +90 degrees
        let up = direction_of(0.0, -1.0);
        assert!((up - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let (dx, dy) = step_of(up);
        assert!(dx.abs() < 1e-12 && (dy + 1.0).abs() < 1e-12);
    }

    #[test]
    fn image_rejects_out_of_range_pixels() {
        assert!(GrayImage::new(2, 1, 500, vec![0.0, 1.5]).is_err());
        assert!(GrayImage::new(2, 1, 0, vec![0.0, 0.5]).is_err());
        assert!(GrayImage::new(2, 2, 500, vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(FusionWeights::new(0.6, 0.1, 0.3).is_ok());
        assert!(FusionWeights::new(0.6, 0.1, 0.2).is_err());
        assert!(FusionWeights::new(1.1, -0.1, 0.0).is_err());
    }

    #[test]
    fn minutia_rejects_negative_and_nan() {
        assert!(Minutia::new(-1.0, 0.0, 0.0).is_err());
        assert!(Minutia::new(0.0, f64::NAN, 0.0).is_err());
        let m = Minutia::new(1.0, 2.0, -std::f64::consts::FRAC_PI_2).unwrap();
        assert!((m.theta - 1.5 * std::f64::consts::PI).abs() < 1e-12);
    }
}
