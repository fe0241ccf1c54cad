//! Twelve-channel minutiae maps.
//!
//! Each minutia contributes a spatial Gaussian around its location, scaled per
//! channel by how close its direction is to the channel's center angle
//! `2πk/12`. Decoding finds spatial peaks of the channel sum and reads the
//! direction back from the channel profile at the peak.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_angle, Minutia, MinutiaeSet};

pub const CHANNELS: usize = 12;

/// Contributions smaller than this are not written into the map.
const NEGLIGIBLE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinmapParams {
    /// Width of the spatial Gaussian, in pixels.
    pub sigma_s: f64,
    /// Minimum channel value for a decoded peak (an isolated minutia peaks at 1).
    pub peak_threshold: f64,
    /// Minimum distance between decoded minutiae, in pixels.
    pub nms_radius: f64,
}

impl Default for MinmapParams {
    fn default() -> Self {
        Self {
            sigma_s: 6.0,
            peak_threshold: 0.3,
            nms_radius: 12.0,
        }
    }
}

impl MinmapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s.is_finite() && self.sigma_s > 0.0) {
            return Err(Error::invalid("minmap params", "sigma_s must be positive"));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold <= 1.0) {
            return Err(Error::invalid(
                "minmap params",
                "peak_threshold must lie in (0, 1]",
            ));
        }
        if !(self.nms_radius.is_finite() && self.nms_radius >= 1.0) {
            return Err(Error::invalid("minmap params", "nms_radius must be >= 1"));
        }
        Ok(())
    }
}

/// `height x width x 12` tensor, indexed `[row][col][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinutiaeMap {
    height: usize,
    width: usize,
    ppi: u32,
    values: Vec<f64>,
}

impl MinutiaeMap {
    pub fn zeros(height: usize, width: usize, ppi: u32) -> Self {
        Self {
            height,
            width,
            ppi,
            values: vec![0.0; height * width * CHANNELS],
        }
    }

    /// Wraps raw values (for instance a network prediction).
    pub fn from_values(height: usize, width: usize, ppi: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width * CHANNELS {
            return Err(Error::invalid("minutiae map", "value count does not match shape"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("minutiae map", "values must be finite and >= 0"));
        }
        Ok(Self {
            height,
            width,
            ppi,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ppi(&self) -> u32 {
        self.ppi
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.width + col) * CHANNELS + channel]
    }

    #[inline]
    fn cell(&self, row: usize, col: usize) -> &[f64] {
        let at = (row * self.width + col) * CHANNELS;
        &self.values[at..at + CHANNELS]
    }
}

/// Orientation difference in `[0, π]` between two angles.
pub fn angle_difference(theta1: f64, theta2: f64) -> Result<f64> {
    if !(theta1.is_finite() && theta2.is_finite()) {
        return Err(Error::invalid("angle", "non-finite input"));
    }
    Ok(angle_diff(theta1, theta2))
}

#[inline]
pub(crate) fn angle_diff(theta1: f64, theta2: f64) -> f64 {
    let d = normalize_angle(theta1) - normalize_angle(theta2);
    if (-PI..=PI).contains(&d) {
        d.abs()
    } else {
        TAU - d.abs()
    }
}

fn check_sigma(sigma_s: f64) -> Result<()> {
    if sigma_s.is_finite() && sigma_s > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("sigma_s", "must be positive"))
    }
}

/// Gaussian weight of a minutia at `(px, py)` for the cell at row `i`, column `j`.
pub fn spatial_contribution(px: f64, py: f64, i: usize, j: usize, sigma_s: f64) -> Result<f64> {
    check_sigma(sigma_s)?;
    let dx = px - j as f64;
    let dy = py - i as f64;
    Ok((-(dx * dx + dy * dy) / (2.0 * sigma_s * sigma_s)).exp())
}

/// Weight of direction `theta_t` in channel `k`. The orientation difference
/// enters the exponent unsquared.
pub fn orientation_contribution(theta_t: f64, k: usize, sigma_s: f64) -> Result<f64> {
    check_sigma(sigma_s)?;
    if k >= CHANNELS {
        return Err(Error::invalid("channel", format!("{k} not in 0..{CHANNELS}")));
    }
    let d = angle_difference(theta_t, channel_center(k))?;
    Ok((-d / (2.0 * sigma_s * sigma_s)).exp())
}

#[inline]
pub fn channel_center(k: usize) -> f64 {
    TAU * k as f64 / CHANNELS as f64
}

pub fn encode_minutiae_map(
    set: &MinutiaeSet,
    height: usize,
    width: usize,
    params: &MinmapParams,
) -> Result<MinutiaeMap> {
    params.validate()?;
    set.validate()?;
    for m in set.iter() {
        if m.x >= width as f64 || m.y >= height as f64 {
            return Err(Error::invalid(
                "minutia",
                format!("({}, {}) outside {width}x{height} map", m.x, m.y),
            ));
        }
    }

    let sigma = params.sigma_s;
    let two_var = 2.0 * sigma * sigma;
    let reach = (two_var * (1.0 / NEGLIGIBLE).ln()).sqrt();
    let mut map = MinutiaeMap::zeros(height, width, set.source_ppi);

    for m in set.iter() {
        let mut channel_weight = [0.0; CHANNELS];
        for (k, w) in channel_weight.iter_mut().enumerate() {
            *w = (-angle_diff(m.theta, channel_center(k)) / two_var).exp();
        }
        let r0 = (m.y - reach).floor().max(0.0) as usize;
        let r1 = ((m.y + reach).ceil() as usize).min(height - 1);
        let c0 = (m.x - reach).floor().max(0.0) as usize;
        let c1 = ((m.x + reach).ceil() as usize).min(width - 1);
        for i in r0..=r1 {
            let dy = m.y - i as f64;
            for j in c0..=c1 {
                let dx = m.x - j as f64;
                let spatial = (-(dx * dx + dy * dy) / two_var).exp();
                if spatial < NEGLIGIBLE {
                    continue;
                }
                let at = (i * width + j) * CHANNELS;
                for (v, w) in map.values[at..at + CHANNELS].iter_mut().zip(&channel_weight) {
                    *v += spatial * w;
                }
            }
        }
    }
    Ok(map)
}

struct Peak {
    row: usize,
    col: usize,
    strength: f64,
    x: f64,
    y: f64,
}

/// Sub-pixel offset of a parabola through three samples, clamped to half a pixel.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

pub fn decode_minutiae_map(map: &MinutiaeMap, params: &MinmapParams) -> MinutiaeSet {
    let (h, w) = (map.height, map.width);
    let sums: Vec<f64> = map.values.chunks_exact(CHANNELS).map(|c| c.iter().sum()).collect();
    let sum_at = |r: usize, c: usize| sums[r * w + c];

    let mut peaks = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let cell = map.cell(r, c);
            let top = cell.iter().cloned().fold(0.0, f64::max);
            if top < params.peak_threshold {
                continue;
            }
            let s = sum_at(r, c);
            let mut is_peak = true;
            'nbhd: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    let n = sum_at(rr as usize, cc as usize);
                    // plateaus resolve to their first cell in raster order
                    let earlier = (dr, dc) < (0, 0);
                    if n > s || (earlier && n == s) {
                        is_peak = false;
                        break 'nbhd;
                    }
                }
            }
            if !is_peak {
                continue;
            }
            let dx = if c > 0 && c + 1 < w {
                parabolic_offset(sum_at(r, c - 1), s, sum_at(r, c + 1))
            } else {
                0.0
            };
            let dy = if r > 0 && r + 1 < h {
                parabolic_offset(sum_at(r - 1, c), s, sum_at(r + 1, c))
            } else {
                0.0
            };
            peaks.push(Peak {
                row: r,
                col: c,
                strength: s,
                x: (c as f64 + dx).max(0.0),
                y: (r as f64 + dy).max(0.0),
            });
        }
    }

    peaks.sort_by(|a, b| {
        b.strength
            .total_cmp(&a.strength)
            .then((a.row, a.col).cmp(&(b.row, b.col)))
    });

    let mut kept: Vec<Minutia> = Vec::new();
    for p in peaks {
        let clear = kept
            .iter()
            .all(|k| (k.x - p.x).hypot(k.y - p.y) >= params.nms_radius);
        if !clear {
            continue;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for (k, v) in map.cell(p.row, p.col).iter().enumerate() {
            let a = channel_center(k);
            sx += v * a.cos();
            sy += v * a.sin();
        }
        let theta = normalize_angle(sy.atan2(sx));
        kept.push(Minutia {
            x: p.x,
            y: p.y,
            theta,
        });
    }
    MinutiaeSet {
        minutiae: kept,
        source_ppi: map.ppi,
    }
}

/// Writes one plain-text grid per channel: a `width height channel` header
/// line followed by `height` rows of `width` space-separated values.
pub fn dump_channels(map: &MinutiaeMap, dir: &Path, stem: &str) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(CHANNELS);
    for k in 0..CHANNELS {
        let path = dir.join(format!("{stem}.ch{k:02}.txt"));
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "{} {} {}", map.width, map.height, k)?;
        for r in 0..map.height {
            let row: Vec<String> = (0..map.width)
                .map(|c| format!("{:.6e}", map.get(r, c, k)))
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[(f64, f64, f64)]) -> MinutiaeSet {
        MinutiaeSet::new(
            points
                .iter()
                .map(|&(x, y, t)| Minutia::new(x, y, t).unwrap())
                .collect(),
            500,
        )
        .unwrap()
    }

    #[test]
    fn angle_difference_branches() {
        assert!((angle_difference(0.0, PI / 2.0).unwrap() - PI / 2.0).abs() < 1e-9);
        assert!((angle_difference(0.1, 6.1).unwrap() - (TAU - 6.0)).abs() < 1e-9);
        assert!((angle_difference(0.1, 6.1).unwrap() - 0.28319).abs() < 1e-5);
        for t in [-7.0, 0.0, 1.3, 4.0, 100.0] {
            assert_eq!(angle_difference(t, t).unwrap(), 0.0);
        }
        assert!(angle_difference(f64::NAN, 0.0).is_err());
        assert!(angle_difference(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn spatial_contribution_values() {
        let s = 6.0;
        assert!((spatial_contribution(10.0, 20.0, 20, 10, s).unwrap() - 1.0).abs() < 1e-9);
        // distance sigma along the row axis
        let v = spatial_contribution(16.0, 20.0, 20, 10, s).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-9);
        assert!((v - 0.60653).abs() < 1e-5);
        let mut prev = 1.0;
        for d in 1..200 {
            let v = spatial_contribution(d as f64, 0.0, 0, 0, s).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-100);
        assert!(spatial_contribution(0.0, 0.0, 0, 0, 0.0).is_err());
    }

    #[test]
    fn orientation_contribution_values() {
        let s = 6.0;
        assert!((orientation_contribution(0.0, 0, s).unwrap() - 1.0).abs() < 1e-9);
        assert!((orientation_contribution(PI / 6.0, 1, s).unwrap() - 1.0).abs() < 1e-9);
        let expected = (-PI / (2.0 * s * s)).exp();
        assert!((orientation_contribution(0.0, 6, s).unwrap() - expected).abs() < 1e-9);
        assert!(orientation_contribution(0.0, 12, s).is_err());
    }

    #[test]
    fn empty_set_encodes_to_zeros_and_decodes_to_nothing() {
        let p = MinmapParams::default();
        let map = encode_minutiae_map(&set(&[]), 32, 40, &p).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
        assert!(decode_minutiae_map(&map, &p).is_empty());
    }

    #[test]
    fn single_minutia_peaks_at_its_cell() {
        let p = MinmapParams::default();
        let map = encode_minutiae_map(&set(&[(10.0, 20.0, 0.0)]), 64, 48, &p).unwrap();
        assert!((map.get(20, 10, 0) - 1.0).abs() < 1e-12);
        let max0 = (0..64)
            .flat_map(|r| (0..48).map(move |c| (r, c)))
            .map(|(r, c)| map.get(r, c, 0))
            .fold(0.0, f64::max);
        assert_eq!(max0, map.get(20, 10, 0));
    }

    #[test]
    fn out_of_bounds_rejected() {
        let p = MinmapParams::default();
        assert!(encode_minutiae_map(&set(&[(48.0, 1.0, 0.0)]), 64, 48, &p).is_err());
        assert!(encode_minutiae_map(&set(&[(1.0, 64.5, 0.0)]), 64, 48, &p).is_err());
    }

    #[test]
    fn encoding_is_linear() {
        let p = MinmapParams::default();
        let a = encode_minutiae_map(&set(&[(12.0, 30.5, 1.0)]), 64, 64, &p).unwrap();
        let b = encode_minutiae_map(&set(&[(40.25, 20.0, 4.0)]), 64, 64, &p).unwrap();
        let ab = encode_minutiae_map(&set(&[(12.0, 30.5, 1.0), (40.25, 20.0, 4.0)]), 64, 64, &p)
            .unwrap();
        for ((x, y), z) in a.values().iter().zip(b.values()).zip(ab.values()) {
            assert!((x + y - z).abs() <= 1e-12);
        }
    }

    #[test]
    fn half_pixel_plateau_still_decodes() {
        let p = MinmapParams::default();
        let map = encode_minutiae_map(&set(&[(20.5, 20.0, 1.0)]), 48, 48, &p).unwrap();
        let out = decode_minutiae_map(&map, &p);
        assert_eq!(out.len(), 1);
        assert!((out.minutiae[0].x - 20.5).abs() < 0.5);
    }

    #[test]
    fn nms_keeps_stronger_peak() {
        // two nearby minutiae closer than the NMS radius merge into one
        let p = MinmapParams {
            sigma_s: 2.0,
            ..MinmapParams::default()
        };
        let map = encode_minutiae_map(&set(&[(20.0, 20.0, 0.0), (27.0, 20.0, 0.0)]), 48, 48, &p)
            .unwrap();
        let out = decode_minutiae_map(&map, &p);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn dump_writes_twelve_grids() {
        let dir = tempfile::tempdir().unwrap();
        let p = MinmapParams::default();
        let map = encode_minutiae_map(&set(&[(3.0, 2.0, 0.0)]), 4, 5, &p).unwrap();
        let paths = dump_channels(&map, dir.path(), "m").unwrap();
        assert_eq!(paths.len(), 12);
        let text = std::fs::read_to_string(&paths[3]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("5 4 3"));
        assert_eq!(lines.count(), 4);
    }
}
