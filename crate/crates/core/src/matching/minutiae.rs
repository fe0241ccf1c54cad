//! Minutiae matching by alignment voting, greedy pairing and a rigid
//! least-squares refinement.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minmap::angle_diff;
use crate::types::{normalize_angle, Minutia, MinutiaeSet};

/// Resolution the positional tolerance is specified at.
pub const TOLERANCE_PPI: f64 = 1900.0;
const TOP_HYPOTHESES: usize = 8;
const REFINEMENTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchParams {
    /// Pairing distance in pixels at 1900 ppi; scaled to the templates' ppi.
    pub pos_tolerance: f64,
    pub angle_tolerance: f64,
    /// Largest rotation considered by the alignment search, radians.
    pub max_rotation: f64,
    pub rotation_step: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            pos_tolerance: 12.0,
            angle_tolerance: PI / 6.0,
            max_rotation: PI / 4.0,
            rotation_step: PI / 90.0,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.pos_tolerance)
            || !ok(self.angle_tolerance)
            || !ok(self.rotation_step)
            || !(self.max_rotation.is_finite() && self.max_rotation >= 0.0)
        {
            return Err(Error::invalid("match params", "tolerances and steps must be positive"));
        }
        Ok(())
    }

    /// Pairing distance in pixels at `ppi`.
    pub fn tolerance_px(&self, ppi: u32) -> f64 {
        self.pos_tolerance * ppi as f64 / TOLERANCE_PPI
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinutiaeScore {
    /// `2·n / (N_a + N_b)` for `n` paired minutiae, in `[0, 1]`.
    pub score: f64,
    pub matched: usize,
    /// Set when either side has no minutiae; the score is then 0.
    pub no_features: bool,
}

/// Visual counter-clockwise rotation by `rho` followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid {
    pub rho: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Rigid {
    #[inline]
    pub fn apply(&self, m: &Minutia) -> (f64, f64, f64) {
        let (c, s) = (self.rho.cos(), self.rho.sin());
        (
            m.x * c + m.y * s + self.tx,
            -m.x * s + m.y * c + self.ty,
            normalize_angle(m.theta + self.rho),
        )
    }
}

/// Symmetric matching score: both alignment directions are tried and the
/// better one is kept.
pub fn minutiae_match(a: &MinutiaeSet, b: &MinutiaeSet, params: &MatchParams) -> MinutiaeScore {
    if a.is_empty() || b.is_empty() {
        return MinutiaeScore {
            score: 0.0,
            matched: 0,
            no_features: true,
        };
    }
    let tol = params.tolerance_px(a.source_ppi.max(b.source_ppi));
    let ab = directed_match(&a.minutiae, &b.minutiae, tol, params).0;
    let ba = directed_match(&b.minutiae, &a.minutiae, tol, params).0;
    let matched = ab.max(ba);
    MinutiaeScore {
        score: 2.0 * matched as f64 / (a.len() + b.len()) as f64,
        matched,
        no_features: false,
    }
}

/// Best pairing count and alignment taking `a` onto `b`.
pub fn directed_match(a: &[Minutia], b: &[Minutia], tol: f64, params: &MatchParams) -> (usize, Option<Rigid>) {
    let step = params.rotation_step;
    let max_k = (params.max_rotation / step).round() as i64;
    let bin = tol.max(1e-6);
    let mut votes: HashMap<(i64, i64, i64), (usize, f64, f64)> = HashMap::new();
    for pa in a {
        for pb in b {
            let delta = wrap_pi(pb.theta - pa.theta);
            let k = (delta / step).round() as i64;
            if k.abs() > max_k {
                continue;
            }
            let rho = k as f64 * step;
            let (c, s) = (rho.cos(), rho.sin());
            let tx = pb.x - (pa.x * c + pa.y * s);
            let ty = pb.y - (-pa.x * s + pa.y * c);
            let key = (k, (tx / bin).floor() as i64, (ty / bin).floor() as i64);
            let e = votes.entry(key).or_insert((0, 0.0, 0.0));
            e.0 += 1;
            e.1 += tx;
            e.2 += ty;
        }
    }
    if votes.is_empty() {
        return (0, None);
    }
    // neighborhood support over adjacent translation bins of the same rotation
    let mut ranked: Vec<((i64, i64, i64), usize)> = votes
        .keys()
        .map(|&(k, x, y)| {
            let mut support = 0;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(v) = votes.get(&(k, x + dx, y + dy)) {
                        support += v.0;
                    }
                }
            }
            ((k, x, y), support)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut best = (0usize, None);
    for &(key, _) in ranked.iter().take(TOP_HYPOTHESES) {
        let v = votes[&key];
        let mut rigid = Rigid {
            rho: key.0 as f64 * step,
            tx: v.1 / v.0 as f64,
            ty: v.2 / v.0 as f64,
        };
        let mut pairs = pair_greedy(a, b, &rigid, tol, params.angle_tolerance);
        for _ in 0..REFINEMENTS {
            if pairs.len() < 2 {
                break;
            }
            let refined = fit_rigid(a, b, &pairs);
            let again = pair_greedy(a, b, &refined, tol, params.angle_tolerance);
            if again.len() < pairs.len() {
                break;
            }
            let grew = again.len() > pairs.len();
            rigid = refined;
            pairs = again;
            if !grew {
                break;
            }
        }
        if pairs.len() > best.0 {
            best = (pairs.len(), Some(rigid));
        }
    }
    best
}

#[inline]
fn wrap_pi(a: f64) -> f64 {
    let r = normalize_angle(a);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// One-to-one pairing, closest candidate pairs first.
pub fn pair_greedy(a: &[Minutia], b: &[Minutia], rigid: &Rigid, tol: f64, angle_tol: f64) -> Vec<(usize, usize)> {
    let moved: Vec<(f64, f64, f64)> = a.iter().map(|m| rigid.apply(m)).collect();
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    let tol2 = tol * tol;
    for (i, &(x, y, t)) in moved.iter().enumerate() {
        for (j, m) in b.iter().enumerate() {
            let d2 = (x - m.x).powi(2) + (y - m.y).powi(2);
            if d2 <= tol2 && angle_diff(t, m.theta) <= angle_tol {
                cands.push((d2, i, j));
            }
        }
    }
    cands.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Least-squares rotation and translation taking the paired `a` points onto
/// their `b` partners.
pub fn fit_rigid(a: &[Minutia], b: &[Minutia], pairs: &[(usize, usize)]) -> Rigid {
    let n = pairs.len() as f64;
    let (mut ax, mut ay, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0);
    for &(i, j) in pairs {
        ax += a[i].x;
        ay += a[i].y;
        bx += b[j].x;
        by += b[j].y;
    }
    let (ax, ay, bx, by) = (ax / n, ay / n, bx / n, by / n);
    let (mut dot, mut cross) = (0.0, 0.0);
    for &(i, j) in pairs {
        let (px, py) = (a[i].x - ax, a[i].y - ay);
        let (qx, qy) = (b[j].x - bx, b[j].y - by);
        dot += px * qx + py * qy;
        cross += px * qy - py * qx;
    }
    // standard rotation in row coordinates is a visual clockwise turn
    let rho = -cross.atan2(dot);
    let (c, s) = (rho.cos(), rho.sin());
    Rigid {
        rho,
        tx: bx - (ax * c + ay * s),
        ty: by - (-ax * s + ay * c),
    }
}
