use std::f64::consts::PI;

use crate::types::GrayImage;

/// Block-wise ridge orientation in `[0, π)` with a coherence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    pub block_size: usize,
    pub cols: usize,
    pub rows: usize,
    pub angles: Vec<f64>,
    pub coherence: Vec<f64>,
}

impl OrientationField {
    #[inline]
    pub fn angle(&self, bx: usize, by: usize) -> f64 {
        self.angles[by * self.cols + bx]
    }

    #[inline]
    pub fn coherence_at(&self, bx: usize, by: usize) -> f64 {
        self.coherence[by * self.cols + bx]
    }

    /// Coherence of the block containing pixel `(x, y)`.
    pub fn coherence_at_pixel(&self, x: f64, y: f64) -> f64 {
        let bx = ((x.max(0.0) as usize) / self.block_size).min(self.cols - 1);
        let by = ((y.max(0.0) as usize) / self.block_size).min(self.rows - 1);
        self.coherence_at(bx, by)
    }

    /// Orientation at a pixel, bilinearly interpolated between block centers
    /// in the doubled-angle domain.
    pub fn angle_at_pixel(&self, x: f64, y: f64) -> f64 {
        let b = self.block_size as f64;
        let fx = (x / b - 0.5).clamp(0.0, (self.cols - 1) as f64);
        let fy = (y / b - 0.5).clamp(0.0, (self.rows - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.cols - 1);
        let y1 = (y0 + 1).min(self.rows - 1);
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let mut c = 0.0;
        let mut s = 0.0;
        for (bx, by, w) in [
            (x0, y0, (1.0 - tx) * (1.0 - ty)),
            (x1, y0, tx * (1.0 - ty)),
            (x0, y1, (1.0 - tx) * ty),
            (x1, y1, tx * ty),
        ] {
            let a = 2.0 * self.angle(bx, by);
            c += w * a.cos();
            s += w * a.sin();
        }
        (0.5 * s.atan2(c)).rem_euclid(PI)
    }
}

/// Sobel gradients `(gx, gy_up)`: x to the right, y pointing up the screen.
pub(crate) fn gradients(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    if w < 3 || h < 3 {
        return (gx, gy);
    }
    let p = |x: usize, y: usize| img.get(x, y) as f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let dx = (p(x + 1, y - 1) + 2.0 * p(x + 1, y) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2.0 * p(x - 1, y) + p(x - 1, y + 1));
            let dy_down = (p(x - 1, y + 1) + 2.0 * p(x, y + 1) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2.0 * p(x, y - 1) + p(x + 1, y - 1));
            gx[y * w + x] = dx / 8.0;
            gy[y * w + x] = -dy_down / 8.0;
        }
    }
    (gx, gy)
}

/// Summed-area table with a zero first row and column.
pub(crate) struct Integral {
    w: usize,
    sums: Vec<f64>,
}

impl Integral {
    pub(crate) fn new(values: &[f64], w: usize, h: usize) -> Self {
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += values[y * w + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { w, sums }
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`.
    pub(crate) fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.w + 1;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]
            + self.sums[y0 * s + x0]
    }
}

/// Least-squares orientation from averaged squared gradients. Each block is
/// estimated over a window of twice the block size centered on it.
pub fn estimate_orientation_field(img: &GrayImage, block_size: usize) -> OrientationField {
    let block = block_size.max(1);
    let (w, h) = (img.width(), img.height());
    let cols = w.div_ceil(block).max(1);
    let rows = h.div_ceil(block).max(1);
    let (gx, gy) = gradients(img);

    let gxx: Vec<f64> = gx.iter().map(|v| v * v).collect();
    let gyy: Vec<f64> = gy.iter().map(|v| v * v).collect();
    let gxy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let (ixx, iyy, ixy) = (
        Integral::new(&gxx, w, h),
        Integral::new(&gyy, w, h),
        Integral::new(&gxy, w, h),
    );

    let mut vx = vec![0.0; cols * rows];
    let mut vy = vec![0.0; cols * rows];
    let mut coherence = vec![0.0; cols * rows];
    for by in 0..rows {
        for bx in 0..cols {
            let cx = bx * block + block / 2;
            let cy = by * block + block / 2;
            let x0 = cx.saturating_sub(block);
            let y0 = cy.saturating_sub(block);
            let x1 = (cx + block).min(w);
            let y1 = (cy + block).min(h);
            if x1 <= x0 || y1 <= y0 {
                continue;
            }
            let sxx = ixx.sum(x0, y0, x1, y1);
            let syy = iyy.sum(x0, y0, x1, y1);
            let sxy = ixy.sum(x0, y0, x1, y1);
            let a = sxx - syy;
            let b = 2.0 * sxy;
            let energy = sxx + syy;
            let i = by * cols + bx;
            vx[i] = a;
            vy[i] = b;
            coherence[i] = if energy > 1e-12 {
                ((a * a + b * b).sqrt() / energy).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }

    // 3x3 smoothing of the doubled-angle vectors
    let mut angles = vec![0.0; cols * rows];
    for by in 0..rows {
        for bx in 0..cols {
            let (mut sx, mut sy) = (0.0, 0.0);
            for ny in by.saturating_sub(1)..=(by + 1).min(rows - 1) {
                for nx in bx.saturating_sub(1)..=(bx + 1).min(cols - 1) {
                    let wgt = if nx == bx && ny == by { 2.0 } else { 1.0 };
                    sx += wgt * vx[ny * cols + nx];
                    sy += wgt * vy[ny * cols + nx];
                }
            }
            let i = by * cols + bx;
            angles[i] = if coherence[i] == 0.0 || (sx == 0.0 && sy == 0.0) {
                0.0
            } else {
                // dominant gradient direction, turned a quarter to follow the ridge
                (0.5 * sy.atan2(sx) + PI / 2.0).rem_euclid(PI)
            };
        }
    }

    OrientationField {
        block_size: block,
        cols,
        rows,
        angles,
        coherence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_sums_rectangles() {
        let vals: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let ii = Integral::new(&vals, 4, 3);
        assert_eq!(ii.sum(0, 0, 4, 3), 66.0);
        assert_eq!(ii.sum(1, 1, 3, 2), 5.0 + 6.0);
    }

    #[test]
    fn flat_image_has_zero_coherence() {
        let img = GrayImage::filled(64, 48, 500, 0.3);
        let f = estimate_orientation_field(&img, 16);
        assert_eq!((f.cols, f.rows), (4, 3));
        assert!(f.coherence.iter().all(|&c| c == 0.0));
        assert!(f.angles.iter().all(|&a| a == 0.0));
    }
}
