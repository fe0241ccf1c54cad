//! Crossing-number minutiae detection on a one-pixel-wide skeleton.

use std::f64::consts::PI;

use super::orientation::OrientationField;
use super::thin::{Mask, RING};
use crate::minmap::angle_diff;
use crate::types::{direction_of, normalize_angle, Minutia};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MinutiaKind {
    Ending,
    Bifurcation,
}

impl MinutiaKind {
    pub fn label(self) -> &'static str {
        match self {
            MinutiaKind::Ending => "ending",
            MinutiaKind::Bifurcation => "bifurcation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub minutia: Minutia,
    pub kind: MinutiaKind,
}

/// Half the number of value changes walking once around the 8-neighborhood
/// (bit 0 = N, clockwise).
#[inline]
pub fn crossing_number(neighbors: u8) -> u32 {
    (neighbors ^ neighbors.rotate_right(1)).count_ones() / 2
}

pub fn classify(neighbors: u8) -> Option<MinutiaKind> {
    match crossing_number(neighbors) {
        1 => Some(MinutiaKind::Ending),
        3 => Some(MinutiaKind::Bifurcation),
        _ => None,
    }
}

/// Every skeleton pixel with crossing number 1 or 3, in raster order.
pub fn candidates(skeleton: &Mask) -> Vec<(usize, usize, MinutiaKind)> {
    let mut out = Vec::new();
    for y in 0..skeleton.height {
        for x in 0..skeleton.width {
            if !skeleton.get(x, y) {
                continue;
            }
            if let Some(kind) = classify(skeleton.neighbors(x, y)) {
                out.push((x, y, kind));
            }
        }
    }
    out
}

/// Result of walking along one skeleton branch.
struct Trace {
    end: (usize, usize),
    steps: usize,
    /// The walk stopped on another minutia pixel.
    hit: Option<(usize, usize)>,
}

fn is_minutia_pixel(sk: &Mask, x: usize, y: usize) -> bool {
    let cn = crossing_number(sk.neighbors(x, y));
    cn == 1 || cn >= 3
}

/// Follows the skeleton from `first` (a neighbor of `origin`) for at most
/// `max_steps` pixels without returning to `origin`'s neighborhood.
fn trace(sk: &Mask, origin: (usize, usize), first: (usize, usize), max_steps: usize) -> Trace {
    let mut visited: Vec<(usize, usize)> = Vec::with_capacity(max_steps + 10);
    visited.push(origin);
    for (dx, dy) in RING {
        let (nx, ny) = (origin.0 as i64 + dx, origin.1 as i64 + dy);
        if sk.at(nx, ny) {
            visited.push((nx as usize, ny as usize));
        }
    }
    let mut cur = first;
    let mut steps = 1;
    loop {
        if is_minutia_pixel(sk, cur.0, cur.1) {
            return Trace { end: cur, steps, hit: Some(cur) };
        }
        if steps >= max_steps {
            return Trace { end: cur, steps, hit: None };
        }
        let mut next = None;
        // prefer edge neighbors over corner neighbors
        for pass in 0..2 {
            for (i, (dx, dy)) in RING.iter().enumerate() {
                if (i % 2 == 0) != (pass == 0) {
                    continue;
                }
                let (nx, ny) = (cur.0 as i64 + dx, cur.1 as i64 + dy);
                if !sk.at(nx, ny) {
                    continue;
                }
                let p = (nx as usize, ny as usize);
                if visited.contains(&p) {
                    continue;
                }
                next = Some(p);
                break;
            }
            if next.is_some() {
                break;
            }
        }
        match next {
            Some(p) => {
                visited.push(cur);
                cur = p;
                steps += 1;
            }
            None => return Trace { end: cur, steps, hit: None },
        }
    }
}

/// One starting pixel per connected run of neighbors, edge neighbors first.
fn branch_starts(sk: &Mask, x: usize, y: usize) -> Vec<(usize, usize)> {
    let n = sk.neighbors(x, y);
    let bit = |i: usize| n & (1 << (i % 8)) != 0;
    let Some(gap) = (0..8).find(|&i| !bit(i)) else {
        return Vec::new();
    };
    let mut starts = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    for k in 1..=8 {
        let i = (gap + k) % 8;
        if bit(i) {
            run.push(i);
        } else if !run.is_empty() {
            let pick = run.iter().copied().find(|i| i % 2 == 0).unwrap_or(run[0]);
            let (dx, dy) = RING[pick];
            starts.push(((x as i64 + dx) as usize, (y as i64 + dy) as usize));
            run.clear();
        }
    }
    starts
}

fn heading(from: (usize, usize), to: (usize, usize)) -> f64 {
    direction_of(to.0 as f64 - from.0 as f64, to.1 as f64 - from.1 as f64)
}

fn circular_mean(a: f64, b: f64) -> f64 {
    normalize_angle((a.sin() + b.sin()).atan2(a.cos() + b.cos()))
}

#[derive(Debug, Clone, Copy)]
pub struct DetectParams {
    /// Ridge period in pixels; sets tracing length and merge distances.
    pub period: f64,
    pub border_margin: f64,
    pub min_quality_coherence: f64,
}

struct Raw {
    x: usize,
    y: usize,
    kind: MinutiaKind,
    theta: f64,
    /// Branch walks that ended early on another minutia.
    short_hits: Vec<(usize, usize)>,
}

/// Crossing-number detection with direction estimation and removal of
/// border, low-quality, spur, short-segment and broken-ridge artifacts.
pub fn detect(sk: &Mask, field: &OrientationField, p: &DetectParams) -> Vec<Detection> {
    let trace_len = p.period.round().max(3.0) as usize;
    let short = (0.75 * p.period).round().max(2.0) as usize;
    let (w, h) = (sk.width as f64, sk.height as f64);

    let mut raws: Vec<Raw> = Vec::new();
    for (x, y, kind) in candidates(sk) {
        let starts = branch_starts(sk, x, y);
        let traces: Vec<Trace> = starts.iter().map(|&s| trace(sk, (x, y), s, trace_len)).collect();
        let short_hits = traces
            .iter()
            .filter(|t| t.steps <= short)
            .filter_map(|t| t.hit)
            .collect();
        let theta = match kind {
            MinutiaKind::Ending => {
                let Some(t) = traces.first() else { continue };
                heading((x, y), t.end)
            }
            MinutiaKind::Bifurcation => {
                if traces.len() != 3 {
                    continue;
                }
                let dirs: Vec<f64> = traces.iter().map(|t| heading((x, y), t.end)).collect();
                // the two closest branches are the arms; the valley between them is the direction
                let pairs = [(0, 1), (0, 2), (1, 2)];
                let &(a, b) = pairs
                    .iter()
                    .min_by(|p1, p2| {
                        angle_diff(dirs[p1.0], dirs[p1.1]).total_cmp(&angle_diff(dirs[p2.0], dirs[p2.1]))
                    })
                    .expect("three pairs");
                circular_mean(dirs[a], dirs[b])
            }
        };
        raws.push(Raw {
            x,
            y,
            kind,
            theta,
            short_hits,
        });
    }

    let mut drop = vec![false; raws.len()];
    let index_of = |pt: (usize, usize), raws: &[Raw]| raws.iter().position(|r| (r.x, r.y) == pt);

    // spurs, islands and bridges: minutiae joined by a very short skeleton path
    for i in 0..raws.len() {
        for &hit in &raws[i].short_hits {
            if let Some(j) = index_of(hit, &raws) {
                drop[i] = true;
                drop[j] = true;
            } else {
                drop[i] = true;
            }
        }
    }

    // broken ridges: facing endings closer than one ridge period
    for i in 0..raws.len() {
        if raws[i].kind != MinutiaKind::Ending {
            continue;
        }
        for j in i + 1..raws.len() {
            if raws[j].kind != MinutiaKind::Ending {
                continue;
            }
            let (a, b) = (&raws[i], &raws[j]);
            let dist = (a.x as f64 - b.x as f64).hypot(a.y as f64 - b.y as f64);
            if dist >= p.period {
                continue;
            }
            let opposed = angle_diff(a.theta, b.theta + PI) < PI / 3.0;
            let gap = heading((a.x, a.y), (b.x, b.y));
            // a's ridge body points away from b
            let aligned = dist < 2.0 || angle_diff(gap, a.theta + PI) < PI / 3.0;
            if opposed && aligned {
                drop[i] = true;
                drop[j] = true;
            }
        }
    }

    raws.iter()
        .zip(&drop)
        .filter(|(_, d)| !**d)
        .map(|(r, _)| r)
        .filter(|r| {
            let (x, y) = (r.x as f64, r.y as f64);
            x >= p.border_margin
                && y >= p.border_margin
                && x < w - p.border_margin
                && y < h - p.border_margin
        })
        .filter(|r| field.coherence_at_pixel(r.x as f64, r.y as f64) >= p.min_quality_coherence)
        .map(|r| Detection {
            minutia: Minutia {
                x: r.x as f64,
                y: r.y as f64,
                theta: r.theta,
            },
            kind: r.kind,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counts 0 -> 1 steps walking the ring, independently of the XOR form.
    fn oracle(n: u8) -> u32 {
        let p: Vec<u32> = (0..8).map(|i| ((n >> i) & 1) as u32).collect();
        (0..8).filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1).count() as u32
    }

    #[test]
    fn crossing_number_matches_definition_everywhere() {
        let mut mismatches = 0;
        for n in 0..=255u8 {
            let half_sum: u32 = (0..8)
                .map(|i| (((n >> i) & 1) as i32 - ((n >> ((i + 1) % 8)) & 1) as i32).unsigned_abs())
                .sum::<u32>()
                / 2;
            if crossing_number(n) != oracle(n) || crossing_number(n) != half_sum {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
    }

    fn line(m: &mut Mask, pts: &[(i64, i64)]) {
        for w in pts.windows(2) {
            let (mut x, mut y) = w[0];
            let (tx, ty) = w[1];
            loop {
                m.set(x as usize, y as usize, true);
                if (x, y) == (tx, ty) {
                    break;
                }
                x += (tx - x).signum();
                y += (ty - y).signum();
            }
        }
    }

    #[test]
    fn straight_segment_has_two_endings() {
        let mut m = Mask::new(30, 10);
        line(&mut m, &[(5, 5), (24, 5)]);
        let c = candidates(&m);
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.2 == MinutiaKind::Ending));
        assert_eq!((c[0].0, c[1].0), (5, 24));
    }

    #[test]
    fn y_shape_has_one_bifurcation_and_three_endings() {
        let mut m = Mask::new(40, 40);
        line(&mut m, &[(20, 35), (20, 20)]);
        line(&mut m, &[(20, 20), (10, 10)]);
        line(&mut m, &[(20, 20), (30, 10)]);
        let c = candidates(&m);
        let bif = c.iter().filter(|c| c.2 == MinutiaKind::Bifurcation).count();
        let end = c.iter().filter(|c| c.2 == MinutiaKind::Ending).count();
        assert_eq!((bif, end), (1, 3));
    }

    fn uniform_field(w: usize, h: usize) -> OrientationField {
        let cols = w.div_ceil(8);
        let rows = h.div_ceil(8);
        OrientationField {
            block_size: 8,
            cols,
            rows,
            angles: vec![0.0; cols * rows],
            coherence: vec![1.0; cols * rows],
        }
    }

    #[test]
    fn directions_follow_ridge_and_fork() {
        let mut m = Mask::new(60, 60);
        // ending at the left tip of a horizontal ridge: points east into the ridge
        line(&mut m, &[(10, 10), (50, 10)]);
        // fork opening upward: stem from below, arms going up-left and up-right
        line(&mut m, &[(30, 55), (30, 40)]);
        line(&mut m, &[(30, 40), (20, 25)]);
        line(&mut m, &[(30, 40), (40, 25)]);
        let params = DetectParams {
            period: 8.0,
            border_margin: 0.0,
            min_quality_coherence: 0.0,
        };
        let found = detect(&m, &uniform_field(60, 60), &params);
        let left = found.iter().find(|d| d.minutia.x == 10.0 && d.minutia.y == 10.0).unwrap();
        assert!(angle_diff(left.minutia.theta, 0.0) < 0.1);
        let right = found.iter().find(|d| d.minutia.x == 50.0).unwrap();
        assert!(angle_diff(right.minutia.theta, PI) < 0.1);
        let fork = found.iter().find(|d| d.kind == MinutiaKind::Bifurcation).unwrap();
        assert!(angle_diff(fork.minutia.theta, PI / 2.0) < 0.15, "{}", fork.minutia.theta);
    }

    #[test]
    fn spur_and_gap_are_suppressed() {
        let mut m = Mask::new(80, 40);
        // long ridge with a 3-pixel spur
        line(&mut m, &[(5, 10), (75, 10)]);
        line(&mut m, &[(40, 11), (40, 13)]);
        // broken ridge: two collinear pieces with a 4-pixel gap
        line(&mut m, &[(5, 30), (36, 30)]);
        line(&mut m, &[(41, 30), (75, 30)]);
        let params = DetectParams {
            period: 9.0,
            border_margin: 0.0,
            min_quality_coherence: 0.0,
        };
        let found = detect(&m, &uniform_field(80, 40), &params);
        let xs: Vec<(f64, f64)> = found.iter().map(|d| (d.minutia.x, d.minutia.y)).collect();
        assert!(!xs.iter().any(|&(x, _)| (36.0..=42.0).contains(&x)), "{xs:?}");
        // the four outer tips survive
        assert_eq!(xs.len(), 4, "{xs:?}");
    }

    #[test]
    fn border_and_quality_filters() {
        let mut m = Mask::new(40, 20);
        line(&mut m, &[(2, 10), (30, 10)]);
        let mut field = uniform_field(40, 20);
        let params = DetectParams {
            period: 8.0,
            border_margin: 5.0,
            min_quality_coherence: 0.5,
        };
        let found = detect(&m, &field, &params);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].minutia.x, 30.0);
        field.coherence.iter_mut().for_each(|c| *c = 0.1);
        assert!(detect(&m, &field, &params).is_empty());
    }
}
