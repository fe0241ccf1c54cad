//! Verification and identification metrics. Scores at or above a threshold
//! are accepted.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{fuse_scores, RankedCandidate};
use crate::types::{FusionWeights, ScoreBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

fn check_scores(genuine: &[f64], imposter: &[f64]) -> Result<()> {
    if genuine.is_empty() {
        return Err(Error::Empty("genuine scores"));
    }
    if imposter.is_empty() {
        return Err(Error::Empty("imposter scores"));
    }
    if genuine.iter().chain(imposter).any(|s| s.is_nan()) {
        return Err(Error::invalid("scores", "NaN score"));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Number of entries of the ascending slice that are `>= t`.
fn count_at_or_above(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s < t)
}

/// Candidate thresholds, ascending: every distinct score plus one value just
/// above the largest imposter score (where FAR is zero).
fn thresholds(genuine: &[f64], imposter: &[f64]) -> Vec<f64> {
    let top = imposter.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut t: Vec<f64> = genuine.iter().chain(imposter).copied().collect();
    t.push(top.next_up());
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Operating points at every candidate threshold, threshold ascending.
pub fn roc_curve(genuine: &[f64], imposter: &[f64]) -> Result<Vec<RocPoint>> {
    check_scores(genuine, imposter)?;
    let (g, i) = (sorted(genuine), sorted(imposter));
    Ok(thresholds(genuine, imposter)
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            far: count_at_or_above(&i, t) as f64 / i.len() as f64,
            tar: count_at_or_above(&g, t) as f64 / g.len() as f64,
        })
        .collect())
}

/// TAR at the smallest candidate threshold whose FAR does not exceed the
/// target, with that threshold.
pub fn tar_at_far(genuine: &[f64], imposter: &[f64], far_target: f64) -> Result<(f64, f64)> {
    let (count, threshold) = accepted_at_far(genuine, imposter, far_target)?;
    Ok((count as f64 / genuine.len() as f64, threshold))
}

/// Accepted-genuine count at the FAR operating point.
fn accepted_at_far(genuine: &[f64], imposter: &[f64], far_target: f64) -> Result<(usize, f64)> {
    check_scores(genuine, imposter)?;
    if !(far_target > 0.0 && far_target < 1.0) {
        return Err(Error::invalid("far target", format!("{far_target} not in (0, 1)")));
    }
    let (g, i) = (sorted(genuine), sorted(imposter));
    let allowed = (far_target * i.len() as f64 + 1e-9).floor() as usize;
    let cands = thresholds(genuine, imposter);
    let at = cands.partition_point(|&c| count_at_or_above(&i, c) > allowed);
    let threshold = cands[at];
    Ok((count_at_or_above(&g, threshold), threshold))
}

/// Equal error rate: FAR and FRR interpolated linearly between the adjacent
/// operating points where their difference changes sign.
pub fn eer(genuine: &[f64], imposter: &[f64]) -> Result<f64> {
    let curve = roc_curve(genuine, imposter)?;
    let diff = |p: &RocPoint| p.far - (1.0 - p.tar);
    for w in curve.windows(2) {
        let (a, b) = (diff(&w[0]), diff(&w[1]));
        if a == 0.0 {
            return Ok(w[0].far);
        }
        if a > 0.0 && b <= 0.0 {
            let r = a / (a - b);
            return Ok(w[0].far + r * (w[1].far - w[0].far));
        }
    }
    // the first point already has FAR <= FRR
    let p = &curve[0];
    Ok(p.far.max(1.0 - p.tar))
}

/// One probe's ranked candidate list with its true subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub probe_subject: String,
    pub candidates: Vec<RankedCandidate>,
}

impl SearchResult {
    pub fn mate_rank(&self) -> Option<usize> {
        self.candidates
            .iter()
            .find(|c| c.subject_id == self.probe_subject)
            .map(|c| c.rank)
    }
}

/// Fraction of probes whose mate is ranked `k` or better. Probes without a
/// mate in their candidate list are excluded with a warning.
pub fn cmc(results: &[SearchResult], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("rank", "k must be at least 1"));
    }
    let ranks: Vec<usize> = results
        .iter()
        .filter_map(|r| {
            let rank = r.mate_rank();
            if rank.is_none() {
                warn!("probe {} has no mate in the gallery; excluded", r.probe_subject);
            }
            rank
        })
        .collect();
    if ranks.is_empty() {
        return Err(Error::Empty("probes with a gallery mate"));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Normalized scores of one record pair: the bundle of each same-thumb sample
/// comparison, and whether the gender gate zeroes the pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub bundles: Vec<ScoreBundle>,
    pub gated: bool,
}

impl PairScores {
    /// Mean of the fused sample scores, then the gate.
    pub fn fused(&self, weights: &FusionWeights) -> Result<f64> {
        if self.bundles.is_empty() {
            return Err(Error::NoComparablePairs);
        }
        let mut sum = 0.0;
        for b in &self.bundles {
            sum += fuse_scores(b, weights)?;
        }
        Ok(if self.gated { 0.0 } else { sum / self.bundles.len() as f64 })
    }
}

/// Exhaustive simplex grid over fusion weights maximizing TAR at the FAR
/// target on normalized bundles. Ties go to the larger minutiae weight, then
/// the larger external weight.
pub fn calibrate_weights(
    genuine: &[ScoreBundle],
    imposter: &[ScoreBundle],
    far_target: f64,
    grid_step: f64,
) -> Result<FusionWeights> {
    let wrap = |v: &[ScoreBundle]| -> Vec<PairScores> {
        v.iter()
            .map(|b| PairScores {
                bundles: vec![*b],
                gated: false,
            })
            .collect()
    };
    calibrate_pairs(&wrap(genuine), &wrap(imposter), far_target, grid_step)
}

/// [`calibrate_weights`] over multi-sample record pairs.
pub fn calibrate_pairs(
    genuine: &[PairScores],
    imposter: &[PairScores],
    far_target: f64,
    grid_step: f64,
) -> Result<FusionWeights> {
    if genuine.is_empty() {
        return Err(Error::Empty("genuine validation scores"));
    }
    if imposter.is_empty() {
        return Err(Error::Empty("imposter validation scores"));
    }
    let n = (1.0 / grid_step).round();
    if !(grid_step > 0.0 && grid_step <= 1.0) || (n * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("grid step", format!("{grid_step} does not divide 1")));
    }
    let n = n as usize;
    let mut best: Option<(usize, FusionWeights)> = None;
    for i in (0..=n).rev() {
        for k in (0..=n - i).rev() {
            let j = n - i - k;
            let w = FusionWeights {
                minutiae: i as f64 / n as f64,
                texture: j as f64 / n as f64,
                external: k as f64 / n as f64,
            };
            let fuse = |v: &[PairScores]| v.iter().map(|p| p.fused(&w)).collect::<Result<Vec<f64>>>();
            let (count, _) = accepted_at_far(&fuse(genuine)?, &fuse(imposter)?, far_target)?;
            if best.as_ref().is_none_or(|(c, _)| count > *c) {
                best = Some((count, w));
            }
        }
    }
    Ok(best.expect("grid is never empty").1)
}
