//! Binarization and skeletonization.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::orientation::Integral;
use crate::types::GrayImage;

/// How ridge pixels are separated from valleys. Ridges are dark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BinarizeMethod {
    /// Ridge where the pixel is darker than its block-sized neighborhood mean
    /// by more than `contrast`.
    LocalMean { contrast: f64 },
    /// Ridge where the pixel is below `threshold`.
    Fixed { threshold: f64 },
}

impl Default for BinarizeMethod {
    fn default() -> Self {
        BinarizeMethod::LocalMean { contrast: 0.02 }
    }
}

/// Binary raster, `true` on ridge pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn at(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Neighbor bits in circular order N, NE, E, SE, S, SW, W, NW (bit 0 = N).
    #[inline]
    pub fn neighbors(&self, x: usize, y: usize) -> u8 {
        let (x, y) = (x as i64, y as i64);
        let mut bits = 0u8;
        for (i, (dx, dy)) in RING.iter().enumerate() {
            if self.at(x + dx, y + dy) {
                bits |= 1 << i;
            }
        }
        bits
    }

    /// Renders as an image: ridge pixels 1, background 0.
    pub fn to_image(&self, ppi: u32) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, ppi, |x, y| {
            if self.get(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Neighbor offsets in the circular order used for crossing numbers.
pub const RING: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

pub fn binarize(img: &GrayImage, method: BinarizeMethod, window: usize) -> Mask {
    let (w, h) = (img.width(), img.height());
    let mut mask = Mask::new(w, h);
    match method {
        BinarizeMethod::Fixed { threshold } => {
            for (b, &v) in mask.bits.iter_mut().zip(img.pixels()) {
                *b = (v as f64) < threshold;
            }
        }
        BinarizeMethod::LocalMean { contrast } => {
            let vals: Vec<f64> = img.pixels().iter().map(|&v| v as f64).collect();
            let ii = Integral::new(&vals, w, h);
            let r = (window / 2).max(1);
            for y in 0..h {
                let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
                for x in 0..w {
                    let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                    let n = ((x1 - x0) * (y1 - y0)) as f64;
                    let mean = ii.sum(x0, y0, x1, y1) / n;
                    mask.bits[y * w + x] = vals[y * w + x] < mean - contrast;
                }
            }
        }
    }
    mask
}

/// Flood-fills 8-connected components of `value` and flips those smaller than
/// `min_area` pixels.
pub fn remove_small_components(mask: &mut Mask, value: bool, min_area: usize) {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if seen[start] || mask.bits[start] != value {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        component.clear();
        while let Some(i) = queue.pop_front() {
            component.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in RING {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !seen[j] && mask.bits[j] == value {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if component.len() < min_area {
            for &i in &component {
                mask.bits[i] = !value;
            }
        }
    }
}

#[inline]
fn transitions(n: u8) -> u32 {
    // 0 -> 1 transitions walking once around the ring
    (n & !n.rotate_right(1)).count_ones()
}

/// Zhang-Suen thinning followed by staircase removal, leaving an 8-connected
/// skeleton without any 2x2 block of ridge pixels.
pub fn thin(mask: &Mask) -> Mask {
    let mut m = mask.clone();
    let (w, h) = (m.width, m.height);
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            doomed.clear();
            for y in 0..h {
                for x in 0..w {
                    if !m.get(x, y) {
                        continue;
                    }
                    let n = m.neighbors(x, y);
                    let count = n.count_ones();
                    if !(2..=6).contains(&count) || transitions(n) != 1 {
                        continue;
                    }
                    let bit = |i: usize| n & (1 << i) != 0;
                    let (north, east, south, west) = (bit(0), bit(2), bit(4), bit(6));
                    let keep = if step == 0 {
                        (north && east && south) || (east && south && west)
                    } else {
                        (north && east && west) || (north && south && west)
                    };
                    if !keep {
                        doomed.push((x, y));
                    }
                }
            }
            for &(x, y) in &doomed {
                m.set(x, y, false);
            }
            changed |= !doomed.is_empty();
        }
        if !changed {
            break;
        }
    }
    remove_staircases(&mut m);
    break_blocks(&mut m);
    m
}

/// Drops corner pixels whose two 4-neighbors already touch diagonally.
fn remove_staircases(m: &mut Mask) {
    let (w, h) = (m.width, m.height);
    // (first, second, opposite three) in RING indices
    const CORNERS: [(usize, usize, [usize; 3]); 4] = [
        (0, 2, [4, 5, 6]),
        (2, 4, [6, 7, 0]),
        (4, 6, [0, 1, 2]),
        (6, 0, [2, 3, 4]),
    ];
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let n = m.neighbors(x, y);
            let bit = |i: usize| n & (1 << i) != 0;
            let redundant = CORNERS
                .iter()
                .any(|(a, b, opp)| bit(*a) && bit(*b) && opp.iter().all(|&o| !bit(o)));
            if redundant {
                m.set(x, y, false);
            }
        }
    }
}

/// Number of 8-connected groups among the ridge neighbors of a pixel.
fn neighbor_groups(n: u8) -> u32 {
    let bits: Vec<bool> = (0..8).map(|i| n & (1 << i) != 0).collect();
    let mut seen = [false; 8];
    let mut groups = 0;
    for s in 0..8 {
        if !bits[s] || seen[s] {
            continue;
        }
        groups += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            let (xi, yi) = RING[i];
            for j in 0..8 {
                if bits[j] && !seen[j] {
                    let (xj, yj) = RING[j];
                    if (xi - xj).abs() <= 1 && (yi - yj).abs() <= 1 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    groups
}

fn break_blocks(m: &mut Mask) {
    let (w, h) = (m.width, m.height);
    if w < 2 || h < 2 {
        return;
    }
    loop {
        let mut changed = false;
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let block = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
                if !block.iter().all(|&(bx, by)| m.get(bx, by)) {
                    continue;
                }
                // remove the first pixel whose deletion keeps its neighbors connected
                let victim = block
                    .iter()
                    .copied()
                    .find(|&(bx, by)| neighbor_groups(m.neighbors(bx, by)) == 1)
                    .unwrap_or(block[0]);
                m.set(victim.0, victim.1, false);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}
