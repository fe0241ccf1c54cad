//! Synthetic longitudinal fingerprints with known minutiae.
//!
//! A master finger is a phase field `φ(p)`; the rendered intensity is
//! `0.5 - a·(cos φ + moisture bias)`, so ridges are dark where `cos φ > 0`.
//! The phase is the sum of
//!
//! * a pattern term `2π/P · d(p)`: a humped line for arches, the distance to
//!   a half-line (loops) or to a short segment (whorls);
//! * a few long-wavelength sinusoidal warps;
//! * one `±atan2` spiral per minutia. Each spiral adds exactly one ridge on
//!   one side of its center, which is the minutia location. Its direction
//!   points towards the side with the extra ridge.
//!
//! For loops and whorls the warp and spiral terms are cancelled along the
//! half-line or segment, which keeps the fold free of extra ridge events.
//!
//! Impressions apply growth, rotation and translation to the master and
//! degrade the render with blur, noise and moisture. Every random draw comes
//! from a ChaCha stream keyed by seed, subject, session, thumb and
//! impression, so outputs do not depend on thread scheduling.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::manifest::{write_manifest, Manifest, ManifestEntry};
use crate::extract::MinutiaKind;
use crate::imageio::{from_buffer, to_buffer, write_pgm};
use crate::iptf::write_template;
use crate::types::{direction_of, normalize_angle, Gender, GrayImage, Minutia, MinutiaeSet, Template, Thumb};

/// Minutiae keep at least this distance from the master canvas edge.
pub const BORDER_MARGIN: f64 = 24.0;
const CONTRAST: f64 = 0.35;
const TABLE_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternClass {
    Arch,
    Loop,
    Whorl,
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternClass::Arch => "arch",
            PatternClass::Loop => "loop",
            PatternClass::Whorl => "whorl",
        })
    }
}

impl FromStr for PatternClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arch" => Ok(PatternClass::Arch),
            "loop" => Ok(PatternClass::Loop),
            "whorl" => Ok(PatternClass::Whorl),
            other => Err(Error::invalid("pattern class", format!("`{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Wave {
    amp: f64,
    kx: f64,
    ky: f64,
    phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Spiral {
    x: f64,
    y: f64,
    sign: f64,
    /// atan2 angle at which the spiral's branch jump is placed.
    cut: f64,
}

impl Spiral {
    #[inline]
    fn value(&self, x: f64, y: f64) -> f64 {
        self.sign * wrap((y - self.y).atan2(x - self.x) - self.cut - PI)
    }
}

/// Wraps into `[-π, π)`.
#[inline]
fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterFinger {
    pub id: u64,
    pub class: PatternClass,
    pub width: usize,
    pub height: usize,
    pub ppi: u32,
    /// Core position `(x, y)`.
    pub core: (f64, f64),
    /// Visual angle of the loop axis, whorl segment or arch baseline.
    pub axis: f64,
    /// Ridge period in pixels.
    pub period: f64,
    pub minutiae: MinutiaeSet,
    pub kinds: Vec<MinutiaKind>,
    arch_height: f64,
    arch_width: f64,
    half_length: f64,
    waves: Vec<Wave>,
    spirals: Vec<Spiral>,
    offset: f64,
    /// Warp and spiral phase sampled along the fold, `TABLE_STEP` apart.
    fold: Vec<f64>,
    fold_start: f64,
    /// `Π exp(-i·s·(cut + π))` over the spirals.
    spiral_constant: (f64, f64),
}

impl MasterFinger {
    fn along(&self) -> (f64, f64) {
        let (ax, ay) = (self.axis.cos(), -self.axis.sin());
        (ax, ay)
    }

    /// Pattern distance and position along the fold (`None` for arches).
    #[inline]
    fn pattern(&self, x: f64, y: f64) -> (f64, Option<f64>) {
        let (ax, ay) = self.along();
        let (dx, dy) = (x - self.core.0, y - self.core.1);
        let t = dx * ax + dy * ay;
        match self.class {
            PatternClass::Arch => {
                let v = -dx * ay + dy * ax;
                let hump = self.arch_height
                    * (-(t * t) / (2.0 * self.arch_width * self.arch_width)).exp();
                (v + hump, None)
            }
            PatternClass::Loop | PatternClass::Whorl => {
                let (lo, hi) = match self.class {
                    PatternClass::Loop => (0.0, f64::INFINITY),
                    _ => (-self.half_length, self.half_length),
                };
                let tc = t.clamp(lo, hi);
                let (px, py) = (dx - tc * ax, dy - tc * ay);
                (px.hypot(py), Some(tc))
            }
        }
    }

    fn fold_point(&self, t: f64) -> (f64, f64) {
        let (ax, ay) = self.along();
        (self.core.0 + t * ax, self.core.1 + t * ay)
    }

    /// Warp and spiral terms, optionally skipping one spiral.
    #[inline]
    fn texture(&self, x: f64, y: f64, skip: Option<usize>) -> f64 {
        let mut h = 0.0;
        for w in &self.waves {
            h += w.amp * (w.kx * x + w.ky * y + w.phase).sin();
        }
        for (i, s) in self.spirals.iter().enumerate() {
            if Some(i) != skip {
                h += s.value(x, y);
            }
        }
        h
    }

    #[inline]
    fn fold_texture(&self, t: f64) -> f64 {
        if self.fold.is_empty() {
            return 0.0;
        }
        let f = ((t - self.fold_start) / TABLE_STEP).max(0.0);
        let i = f.floor() as usize;
        if i + 1 >= self.fold.len() {
            return *self.fold.last().expect("non-empty");
        }
        let r = f - i as f64;
        self.fold[i] * (1.0 - r) + self.fold[i + 1] * r
    }

    fn phase_with(&self, x: f64, y: f64, skip: Option<usize>) -> f64 {
        let (d, t) = self.pattern(x, y);
        let mut phi = TAU / self.period * d + self.texture(x, y, skip) + self.offset;
        if let Some(t) = t {
            phi -= self.fold_texture(t);
        }
        phi
    }

    /// Ridge phase at a master-canvas point.
    pub fn phase(&self, x: f64, y: f64) -> f64 {
        self.phase_with(x, y, None)
    }

    /// Rendered intensity before degradation; `bias` thickens ridges when
    /// positive.
    pub fn intensity(&self, x: f64, y: f64, bias: f64) -> f64 {
        (0.5 - CONTRAST * (self.cos_phase(x, y) + bias)).clamp(0.0, 1.0)
    }

    /// `cos φ` with the spiral terms multiplied as unit complex numbers
    /// instead of summed as angles; equal to `phase().cos()` up to rounding.
    pub fn cos_phase(&self, x: f64, y: f64) -> f64 {
        let (d, t) = self.pattern(x, y);
        let mut rest = TAU / self.period * d + self.offset;
        for w in &self.waves {
            rest += w.amp * (w.kx * x + w.ky * y + w.phase).sin();
        }
        if let Some(t) = t {
            rest -= self.fold_texture(t);
        }
        let (mut re, mut im) = self.spiral_constant;
        for s in &self.spirals {
            let (dx, dy) = (x - s.x, y - s.y);
            let dy = if s.sign > 0.0 { dy } else { -dy };
            (re, im) = (re * dx - im * dy, re * dy + im * dx);
        }
        let norm = re.hypot(im);
        if !(norm > 0.0) || !norm.is_finite() {
            return self.phase(x, y).cos();
        }
        let (c, sn) = (rest.cos(), rest.sin());
        (re * c - im * sn) / norm
    }

    fn build_fold(&mut self) {
        self.fold.clear();
        let (start, end) = match self.class {
            PatternClass::Arch => return,
            PatternClass::Loop => (0.0, 2.0 * (self.width + self.height) as f64),
            PatternClass::Whorl => (-self.half_length, self.half_length),
        };
        self.fold_start = start;
        let n = ((end - start) / TABLE_STEP).ceil() as usize + 1;
        let mut prev: Option<f64> = None;
        for i in 0..n {
            let (x, y) = self.fold_point(start + i as f64 * TABLE_STEP);
            let mut v = self.texture(x, y, None);
            // unwrap: the fold stays clear of branch jumps, this is a guard
            if let Some(p) = prev {
                v = p + wrap(v - p);
            }
            self.fold.push(v);
            prev = Some(v);
        }
    }

    fn fold_distance(&self, x: f64, y: f64) -> f64 {
        match self.class {
            PatternClass::Arch => f64::INFINITY,
            _ => self.pattern(x, y).0,
        }
    }

    /// Direction pointing away from the fold (or core), used to place branch
    /// jumps where they cannot reach the fold.
    fn outward(&self, x: f64, y: f64) -> f64 {
        let (_, t) = self.pattern(x, y);
        let (fx, fy) = match t {
            Some(t) => self.fold_point(t),
            None => self.core,
        };
        (y - fy).atan2(x - fx)
    }

    fn finish_minutiae(&mut self) -> Result<()> {
        let eps = 0.25;
        let mut minutiae = Vec::with_capacity(self.spirals.len());
        let mut kinds = Vec::with_capacity(self.spirals.len());
        for (i, s) in self.spirals.iter().enumerate() {
            let f = |x: f64, y: f64| self.phase_with(x, y, Some(i));
            let gx = wrap(f(s.x + eps, s.y) - f(s.x - eps, s.y)) / (2.0 * eps);
            let gy = wrap(f(s.x, s.y + eps) - f(s.x, s.y - eps)) / (2.0 * eps);
            let norm = gx.hypot(gy).max(1e-12);
            let (kx, ky) = (gx / norm, gy / norm);
            let (dx, dy) = if s.sign > 0.0 { (ky, -kx) } else { (-ky, kx) };
            let r = 0.4 * self.period;
            let kind = if self.phase(s.x + r * dx, s.y + r * dy).cos() > 0.0 {
                MinutiaKind::Ending
            } else {
                MinutiaKind::Bifurcation
            };
            minutiae.push(Minutia::new(s.x, s.y, direction_of(dx, dy))?);
            kinds.push(kind);
        }
        self.minutiae = MinutiaeSet::new(minutiae, self.ppi)?;
        self.kinds = kinds;
        Ok(())
    }
}

/// ChaCha stream for one artifact; `tag` separates masters, subject
/// attributes and impressions.
fn stream(seed: u64, tag: u64, subject: u64, session: u64, thumb: u64, impression: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag << 56 | subject << 24 | (session & 0xff) << 16 | (thumb & 0xff) << 8 | (impression & 0xff));
    rng
}

/// Generates a master finger on a `canvas = (width, height)` grid at
/// 1000 ppi with a ridge period of 9 to 11 pixels.
pub fn generate_master(seed: u64, class: PatternClass, canvas: (usize, usize)) -> Result<MasterFinger> {
    generate_master_with(&mut ChaCha8Rng::seed_from_u64(seed), seed, class, canvas)
}

fn generate_master_with(
    rng: &mut ChaCha8Rng,
    id: u64,
    class: PatternClass,
    canvas: (usize, usize),
) -> Result<MasterFinger> {
    let (width, height) = canvas;
    let min_side = 4.0 * BORDER_MARGIN + 64.0;
    if (width as f64) < min_side || (height as f64) < min_side {
        return Err(Error::invalid("canvas", format!("sides must be at least {min_side} px")));
    }
    let period = rng.random_range(9.0..11.0);
    let (w, h) = (width as f64, height as f64);
    let core = (
        w / 2.0 + rng.random_range(-0.08..0.08) * w,
        0.45 * h + rng.random_range(-0.08..0.08) * h,
    );
    let axis = match class {
        PatternClass::Arch => rng.random_range(-0.2..0.2),
        PatternClass::Loop => -PI / 2.0 + rng.random_range(-0.4..0.4),
        PatternClass::Whorl => rng.random_range(0.0..PI),
    };
    let n_waves = rng.random_range(2..=3);
    let waves = (0..n_waves)
        .map(|_| {
            let len = rng.random_range(300.0..500.0);
            let dir: f64 = rng.random_range(0.0..TAU);
            Wave {
                amp: rng.random_range(0.4..1.2),
                kx: TAU / len * dir.cos(),
                ky: TAU / len * dir.sin(),
                phase: rng.random_range(0.0..TAU),
            }
        })
        .collect();
    let mut m = MasterFinger {
        id,
        class,
        width,
        height,
        ppi: 1000,
        core,
        axis,
        period,
        minutiae: MinutiaeSet::empty(1000),
        kinds: Vec::new(),
        arch_height: rng.random_range(1.5..3.0) * period,
        arch_width: rng.random_range(50.0..90.0),
        half_length: rng.random_range(0.5..1.5) * period,
        waves,
        spirals: Vec::new(),
        offset: 0.0,
        fold: Vec::new(),
        fold_start: 0.0,
        spiral_constant: (1.0, 0.0),
    };

    let target = rng.random_range(25..=45);
    let mut attempts = 0;
    while m.spirals.len() < target && attempts < 20_000 {
        attempts += 1;
        let x = rng.random_range(BORDER_MARGIN..w - BORDER_MARGIN);
        let y = rng.random_range(BORDER_MARGIN..h - BORDER_MARGIN);
        if (x - core.0).hypot(y - core.1) < 2.5 * period || m.fold_distance(x, y) < 1.5 * period {
            continue;
        }
        if m.spirals.iter().any(|s| (s.x - x).hypot(s.y - y) < 2.0 * period) {
            continue;
        }
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let cut = m.outward(x, y);
        m.spirals.push(Spiral { x, y, sign, cut });
    }

    m.build_fold();
    m.spiral_constant = m.spirals.iter().fold((1.0, 0.0), |(re, im), s| {
        let a = -s.sign * (s.cut + PI);
        let (c, sn) = (a.cos(), a.sin());
        (re * c - im * sn, re * sn + im * c)
    });
    m.offset = match class {
        PatternClass::Arch => {
            PI - TAU / period * m.arch_height - m.texture(core.0, core.1, None)
        }
        // the fold cancels texture, leaving a valley along it
        _ => PI,
    };
    m.finish_minutiae()?;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpressionParams {
    pub growth_lambda: f64,
    /// Visual counter-clockwise rotation about the canvas center, radians.
    pub rotation: f64,
    pub translation: (f64, f64),
    pub noise_sigma: f64,
    /// Gaussian blur standard deviation, pixels; zero disables blur.
    pub blur_radius: f64,
    /// 0 is dry (thin ridges), 1 is wet (thick ridges), 0.5 neutral.
    pub moisture: f64,
    pub rng_seed: u64,
}

impl Default for ImpressionParams {
    fn default() -> Self {
        Self {
            growth_lambda: 1.0,
            rotation: 0.0,
            translation: (0.0, 0.0),
            noise_sigma: 0.0,
            blur_radius: 0.0,
            moisture: 0.5,
            rng_seed: 0,
        }
    }
}

impl ImpressionParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.growth_lambda,
            self.rotation,
            self.translation.0,
            self.translation.1,
            self.noise_sigma,
            self.blur_radius,
            self.moisture,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("impression params", "values must be finite"));
        }
        if self.growth_lambda < 1.0 {
            return Err(Error::invalid("impression params", "growth_lambda must be >= 1"));
        }
        if self.noise_sigma < 0.0 || self.blur_radius < 0.0 {
            return Err(Error::invalid("impression params", "noise and blur must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.moisture) {
            return Err(Error::invalid("impression params", "moisture must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Maps a master-canvas point into the impression:
    /// `λ·(c + R(p - c)) + t` with `c` the master canvas center.
    pub fn transform_point(&self, master: &MasterFinger, x: f64, y: f64) -> (f64, f64) {
        let (qx, qy) = self.rotate_about_center(master, x, y);
        (
            self.growth_lambda * qx + self.translation.0,
            self.growth_lambda * qy + self.translation.1,
        )
    }

    /// `c + R(p - c)`, the growth-free part of [`Self::transform_point`].
    pub fn rotate_about_center(&self, master: &MasterFinger, x: f64, y: f64) -> (f64, f64) {
        let (cx, cy) = (master.width as f64 / 2.0, master.height as f64 / 2.0);
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        let (dx, dy) = (x - cx, y - cy);
        (cx + dx * c + dy * s, cy - dx * s + dy * c)
    }

    fn inverse_point(&self, master: &MasterFinger, x: f64, y: f64) -> (f64, f64) {
        let (cx, cy) = (master.width as f64 / 2.0, master.height as f64 / 2.0);
        let qx = (x - self.translation.0) / self.growth_lambda - cx;
        let qy = (y - self.translation.1) / self.growth_lambda - cy;
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        (cx + qx * c - qy * s, cy + qx * s + qy * c)
    }
}

/// Ground truth for one impression.
#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub image: GrayImage,
    pub truth: MinutiaeSet,
    pub kinds: Vec<MinutiaKind>,
}

/// Renders one impression and transports the master minutiae through the
/// same similarity transform. Minutiae landing off the canvas are dropped.
pub fn render_impression(master: &MasterFinger, params: &ImpressionParams) -> Result<(GrayImage, MinutiaeSet)> {
    let imp = render(master, params)?;
    Ok((imp.image, imp.truth))
}

/// [`render_impression`] that also reports minutia kinds.
pub fn render(master: &MasterFinger, params: &ImpressionParams) -> Result<Impression> {
    params.validate()?;
    let lambda = params.growth_lambda;
    let w = (lambda * master.width as f64).round() as usize;
    let h = (lambda * master.height as f64).round() as usize;

    let mut minutiae = Vec::new();
    let mut kinds = Vec::new();
    for (m, kind) in master.minutiae.iter().zip(&master.kinds) {
        let (x, y) = params.transform_point(master, m.x, m.y);
        if x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64 {
            minutiae.push(Minutia::new(x, y, normalize_angle(m.theta + params.rotation))?);
            kinds.push(*kind);
        }
    }
    if minutiae.is_empty() {
        return Err(Error::OffCanvas);
    }

    let bias = 0.6 * (params.moisture - 0.5);
    let mut pixels = vec![0f32; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let (mx, my) = params.inverse_point(master, x as f64, y as f64);
            *px = master.intensity(mx, my, bias) as f32;
        }
    });
    let mut image = GrayImage::new(w, h, master.ppi, pixels)?;
    if params.blur_radius > 0.0 {
        let blurred = image::imageops::blur(&to_buffer(&image), params.blur_radius as f32);
        image = from_buffer(blurred, master.ppi);
    }
    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        let normal = Normal::new(0.0, params.noise_sigma)
            .map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
        let mut pixels = image.into_pixels();
        for p in &mut pixels {
            *p = (*p as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
        image = GrayImage::new(w, h, master.ppi, pixels)?;
    }
    Ok(Impression {
        image,
        truth: MinutiaeSet::new(minutiae, master.ppi)?,
        kinds,
    })
}

/// Degradation ranges impressions are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationProfile {
    /// Maximum absolute rotation, degrees.
    pub max_rotation_deg: f64,
    /// Maximum absolute translation per axis, pixels.
    pub max_translation: f64,
    pub noise_sigma: f64,
    pub blur_radius: f64,
    pub moisture: (f64, f64),
}

impl DegradationProfile {
    pub fn clean() -> Self {
        Self {
            max_rotation_deg: 5.0,
            max_translation: 8.0,
            noise_sigma: 0.0,
            blur_radius: 0.0,
            moisture: (0.5, 0.5),
        }
    }

    pub fn mild() -> Self {
        Self {
            max_rotation_deg: 10.0,
            max_translation: 12.0,
            noise_sigma: 0.08,
            blur_radius: 1.0,
            moisture: (0.35, 0.65),
        }
    }

    pub fn hard() -> Self {
        Self {
            max_rotation_deg: 20.0,
            max_translation: 20.0,
            noise_sigma: 0.15,
            blur_radius: 1.8,
            moisture: (0.2, 0.8),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "clean" => Ok(Self::clean()),
            "mild" => Ok(Self::mild()),
            "hard" => Ok(Self::hard()),
            other => Err(Error::invalid("profile", format!("`{other}` (expected clean, mild or hard)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.moisture;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::invalid("profile", "moisture range must lie in [0, 1]"));
        }
        if [self.max_rotation_deg, self.max_translation, self.noise_sigma, self.blur_radius]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::invalid("profile", "ranges must be finite and non-negative"));
        }
        Ok(())
    }

    /// Draws impression parameters for the given growth factor.
    pub fn sample(&self, rng: &mut impl Rng, growth_lambda: f64) -> ImpressionParams {
        let sym = |rng: &mut _, r: f64| if r > 0.0 { Rng::random_range(rng, -r..=r) } else { 0.0 };
        let rotation = sym(rng, self.max_rotation_deg).to_radians();
        let tx = sym(rng, self.max_translation);
        let ty = sym(rng, self.max_translation);
        let moisture = if self.moisture.1 > self.moisture.0 {
            rng.random_range(self.moisture.0..=self.moisture.1)
        } else {
            self.moisture.0
        };
        ImpressionParams {
            growth_lambda,
            rotation,
            translation: (tx, ty),
            noise_sigma: self.noise_sigma,
            blur_radius: self.blur_radius,
            moisture,
            rng_seed: rng.random(),
        }
    }
}

impl Default for DegradationProfile {
    fn default() -> Self {
        Self::mild()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSpec {
    pub n_subjects: usize,
    pub sessions: usize,
    pub impressions: usize,
    pub profile: DegradationProfile,
    pub seed: u64,
    /// Master canvas side, pixels.
    pub canvas: usize,
    /// Growth between consecutive sessions; session `k` renders at `growth^k`.
    pub growth_per_session: f64,
    pub weeks_between_sessions: u32,
    pub male_fraction: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            n_subjects: 100,
            sessions: 2,
            impressions: 2,
            profile: DegradationProfile::mild(),
            seed: 0,
            canvas: 384,
            growth_per_session: 1.1,
            weeks_between_sessions: 13,
            male_fraction: 0.43,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::invalid("benchmark", "at least two subjects are required"));
        }
        if self.sessions == 0 || self.impressions == 0 {
            return Err(Error::invalid("benchmark", "sessions and impressions must be positive"));
        }
        if self.sessions > 255 || self.impressions > 255 || self.n_subjects >= 1 << 32 {
            return Err(Error::invalid("benchmark", "too many sessions, impressions or subjects"));
        }
        if !(self.growth_per_session >= 1.0) || !self.growth_per_session.is_finite() {
            return Err(Error::invalid("benchmark", "growth_per_session must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.male_fraction) {
            return Err(Error::invalid("benchmark", "male_fraction must lie in [0, 1]"));
        }
        self.profile.validate()
    }
}

pub fn subject_id(index: usize) -> String {
    format!("S{:04}", index + 1)
}

pub fn session_id(index: usize) -> String {
    format!("s{}", index + 1)
}

fn thumb_code(t: Thumb) -> &'static str {
    match t {
        Thumb::Left => "L",
        Thumb::Right => "R",
    }
}

const TAG_SUBJECT: u64 = 1;
const TAG_MASTER: u64 = 2;
const TAG_IMPRESSION: u64 = 3;

fn pick_class(rng: &mut impl Rng) -> PatternClass {
    match rng.random_range(0..10) {
        0 => PatternClass::Arch,
        1..=3 => PatternClass::Whorl,
        _ => PatternClass::Loop,
    }
}

/// Master finger for one subject's thumb, as used by [`build_benchmark`].
pub fn benchmark_master(spec: &BenchmarkSpec, subject: usize, thumb: Thumb) -> Result<MasterFinger> {
    let t = thumb.code() as u64;
    let mut rng = stream(spec.seed, TAG_MASTER, subject as u64, 0, t, 0);
    let class = pick_class(&mut rng);
    let id = spec.seed ^ ((subject as u64) << 1 | t);
    generate_master_with(&mut rng, id, class, (spec.canvas, spec.canvas))
}

struct SubjectInfo {
    gender: Gender,
    enrollment_age: u32,
    enrollment_date: NaiveDate,
}

fn subject_info(spec: &BenchmarkSpec, subject: usize) -> SubjectInfo {
    let mut rng = stream(spec.seed, TAG_SUBJECT, subject as u64, 0, 0, 0);
    let gender = if rng.random_bool(spec.male_fraction) {
        Gender::Male
    } else {
        Gender::Female
    };
    let enrollment_age = rng.random_range(1..=12);
    let base = NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date");
    let enrollment_date = base + Days::new(rng.random_range(0..365));
    SubjectInfo {
        gender,
        enrollment_age,
        enrollment_date,
    }
}

/// Writes `images/*.pgm`, ground-truth `truth/*.iptf` and `manifest.tsv`
/// under `dir` and returns the manifest. The manifest points at the images.
pub fn build_benchmark(dir: &Path, spec: &BenchmarkSpec) -> Result<Manifest> {
    spec.validate()?;
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("truth"))?;
    let thumbs = [Thumb::Left, Thumb::Right];

    let masters: Vec<MasterFinger> = (0..spec.n_subjects)
        .into_par_iter()
        .flat_map_iter(|s| thumbs.iter().map(move |&t| (s, t)))
        .map(|(s, t)| benchmark_master(spec, s, t))
        .collect::<Result<_>>()?;
    let infos: Vec<SubjectInfo> = (0..spec.n_subjects).map(|s| subject_info(spec, s)).collect();

    let mut jobs = Vec::new();
    for s in 0..spec.n_subjects {
        for session in 0..spec.sessions {
            for (ti, &thumb) in thumbs.iter().enumerate() {
                for imp in 0..spec.impressions {
                    jobs.push((s, session, ti, thumb, imp));
                }
            }
        }
    }

    let entries: Vec<ManifestEntry> = jobs
        .par_iter()
        .map(|&(s, session, ti, thumb, imp)| -> Result<ManifestEntry> {
            let master = &masters[s * 2 + ti];
            let info = &infos[s];
            let mut rng = stream(
                spec.seed,
                TAG_IMPRESSION,
                s as u64,
                session as u64,
                thumb.code() as u64,
                imp as u64,
            );
            let lambda = spec.growth_per_session.powi(session as i32);
            let params = spec.profile.sample(&mut rng, lambda);
            let impression = render(master, &params)?;
            let stem = format!("{}_{}_{}_{}", subject_id(s), session_id(session), thumb_code(thumb), imp);
            let image_rel = PathBuf::from("images").join(format!("{stem}.pgm"));
            write_pgm(&impression.image, &dir.join(&image_rel))?;
            let weeks = spec.weeks_between_sessions * session as u32;
            let age = info.enrollment_age + weeks;
            let template = Template {
                subject_id: subject_id(s),
                thumb,
                session_id: session_id(session),
                age_weeks_at_capture: age,
                gender: info.gender,
                minutiae: impression.truth,
                embedding: None,
                aged: false,
            };
            std::fs::write(
                dir.join("truth").join(format!("{stem}.iptf")),
                write_template(&template)?,
            )?;
            Ok(ManifestEntry {
                subject_id: subject_id(s),
                session_id: session_id(session),
                capture_date: info.enrollment_date + Days::new(7 * weeks as u64),
                age_weeks: age,
                gender: info.gender,
                thumb,
                path: image_rel,
            })
        })
        .collect::<Result<_>>()?;

    write_manifest(&dir.join("manifest.tsv"), &entries)?;
    Ok(Manifest {
        base_dir: dir.to_path_buf(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn master(seed: u64, class: PatternClass) -> MasterFinger {
        generate_master(seed, class, (384, 384)).unwrap()
    }

    #[test]
    fn same_seed_same_master() {
        for class in [PatternClass::Arch, PatternClass::Loop, PatternClass::Whorl] {
            assert_eq!(master(7, class), master(7, class));
        }
    }

    #[test]
    fn different_seeds_differ() {
        let sets: Vec<MinutiaeSet> = (0..100).map(|s| master(s, PatternClass::Loop).minutiae).collect();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                assert_ne!(sets[i], sets[j], "seeds {i} and {j}");
            }
        }
    }

    #[test]
    fn minutiae_respect_construction_constraints() {
        for seed in 0..30 {
            for class in [PatternClass::Arch, PatternClass::Loop, PatternClass::Whorl] {
                let m = master(seed, class);
                assert!((15..=60).contains(&m.minutiae.len()), "{}", m.minutiae.len());
                assert!(m.period > 2.0);
                for p in m.minutiae.iter() {
                    assert!(p.x >= BORDER_MARGIN && p.x <= 384.0 - BORDER_MARGIN);
                    assert!(p.y >= BORDER_MARGIN && p.y <= 384.0 - BORDER_MARGIN);
                }
            }
        }
    }

    #[test]
    fn complex_render_matches_phase() {
        for class in [PatternClass::Arch, PatternClass::Loop, PatternClass::Whorl] {
            let m = master(4, class);
            for i in 0..400 {
                let (x, y) = ((i * 37 % 384) as f64 + 0.3, (i * 91 % 384) as f64 + 0.7);
                let d = (m.cos_phase(x, y) - m.phase(x, y).cos()).abs();
                assert!(d < 1e-9, "{class:?} ({x}, {y}): {d}");
            }
        }
    }

    #[test]
    fn fold_carries_constant_phase() {
        let m = master(3, PatternClass::Loop);
        for t in [0.0, 20.0, 60.0, 120.0] {
            let (x, y) = m.fold_point(t);
            let d = wrap(m.phase(x, y) - PI);
            assert!(d.abs() < 1e-6, "{t}: {d}");
        }
    }

    #[test]
    fn spirals_add_one_ridge_on_the_minutia_side() {
        // phase gained walking a small loop around a minutia is ±2π
        let m = master(11, PatternClass::Whorl);
        let s = m.spirals[0];
        let r = 3.0;
        let mut total = 0.0;
        let n = 64;
        for k in 0..n {
            let a0 = TAU * k as f64 / n as f64;
            let a1 = TAU * (k + 1) as f64 / n as f64;
            let p0 = m.phase(s.x + r * a0.cos(), s.y + r * a0.sin());
            let p1 = m.phase(s.x + r * a1.cos(), s.y + r * a1.sin());
            total += wrap(p1 - p0);
        }
        assert!((total.abs() - TAU).abs() < 1e-6, "{total}");
    }

    #[test]
    fn growth_scales_ground_truth_exactly() {
        let m = master(5, PatternClass::Loop);
        let base = ImpressionParams {
            rotation: 0.1,
            ..Default::default()
        };
        let grown = ImpressionParams {
            growth_lambda: 1.1,
            ..base
        };
        let (img_a, a) = render_impression(&m, &base).unwrap();
        let (img_b, b) = render_impression(&m, &grown).unwrap();
        assert_eq!((img_b.width(), img_b.height()), (422, 422));
        assert_eq!(img_a.width(), 384);
        assert_eq!(a.len(), m.minutiae.len());
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(b.iter()) {
            assert_eq!(q.x, 1.1 * p.x);
            assert_eq!(q.y, 1.1 * p.y);
            assert_eq!(q.theta, p.theta);
        }
    }

    #[test]
    fn identity_render_keeps_master_minutiae() {
        let m = master(9, PatternClass::Arch);
        let (_, truth) = render_impression(&m, &ImpressionParams::default()).unwrap();
        assert_eq!(truth.len(), m.minutiae.len());
        for (a, b) in truth.iter().zip(m.minutiae.iter()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
            assert_eq!(a.theta, b.theta);
        }
    }

    #[test]
    fn render_is_deterministic() {
        let m = master(2, PatternClass::Whorl);
        let p = ImpressionParams {
            noise_sigma: 0.1,
            blur_radius: 1.0,
            moisture: 0.6,
            rng_seed: 42,
            ..Default::default()
        };
        assert_eq!(render_impression(&m, &p).unwrap(), render_impression(&m, &p).unwrap());
    }

    #[test]
    fn off_canvas_transform_rejected() {
        let m = master(2, PatternClass::Loop);
        let p = ImpressionParams {
            translation: (5000.0, 0.0),
            ..Default::default()
        };
        assert!(matches!(render_impression(&m, &p), Err(Error::OffCanvas)));
        let bad = ImpressionParams {
            growth_lambda: 0.9,
            ..Default::default()
        };
        assert!(render_impression(&m, &bad).is_err());
    }

    #[test]
    fn benchmark_counts_and_parses() {
        let dir = tempfile::tempdir().unwrap();
        let spec = BenchmarkSpec {
            n_subjects: 10,
            canvas: 192,
            seed: 3,
            ..Default::default()
        };
        let manifest = build_benchmark(dir.path(), &spec).unwrap();
        assert_eq!(manifest.entries.len(), 80);
        assert_eq!(std::fs::read_dir(dir.path().join("images")).unwrap().count(), 80);
        assert_eq!(std::fs::read_dir(dir.path().join("truth")).unwrap().count(), 80);
        let parsed = crate::eval::read_manifest(&dir.path().join("manifest.tsv")).unwrap();
        assert_eq!(parsed.entries, manifest.entries);
        for e in &parsed.entries {
            let age = e.age_weeks;
            match e.session_id.as_str() {
                "s1" => assert!((1..=12).contains(&age)),
                _ => assert!((14..=25).contains(&age)),
            }
        }
    }
}
