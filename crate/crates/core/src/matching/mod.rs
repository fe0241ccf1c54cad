//! Score production and fusion: minutiae and texture comparators, an
//! optional external matcher, fixed-bounds normalization, weighted sum
//! fusion, the gender gate, and subject-level authentication and search.

mod external;
mod minutiae;
mod texture;

use std::cmp::Ordering;
use std::path::PathBuf;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use external::{external_match, prepare_external_image, write_temp_pgm, ExternalConnector};
pub use minutiae::{directed_match, fit_rigid, minutiae_match, pair_greedy, MatchParams, MinutiaeScore, Rigid, TOLERANCE_PPI};
pub use texture::{embedding_from_field, fallback_embedding, texture_match, validate_embedding};

use crate::aging::{age_template, select_scale_factor, AgingPolicy};
use crate::error::{Error, Result};
use crate::extract::ExtractParams;
use crate::imageio::read_pgm;
use crate::types::{FusionWeights, Gender, ScoreBundle, Template};

/// Fixed `(min, max)` ranges mapping raw matcher scores onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationBounds {
    pub minutiae: (f64, f64),
    pub texture: (f64, f64),
    pub external: (f64, f64),
}

impl Default for NormalizationBounds {
    fn default() -> Self {
        Self {
            minutiae: (0.0, 1.0),
            texture: (-1.0, 1.0),
            external: (0.0, 1.0),
        }
    }
}

impl NormalizationBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("minutiae", self.minutiae),
            ("texture", self.texture),
            ("external", self.external),
        ] {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::invalid(
                    "normalization bounds",
                    format!("{name}: max must exceed min"),
                ));
            }
        }
        Ok(())
    }
}

fn min_max(s: f64, (lo, hi): (f64, f64)) -> f64 {
    ((s - lo) / (hi - lo)).clamp(0.0, 1.0)
}

pub fn normalize_scores(raw: &ScoreBundle, bounds: &NormalizationBounds) -> ScoreBundle {
    ScoreBundle {
        minutiae: raw.minutiae.map(|s| min_max(s, bounds.minutiae)),
        texture: raw.texture.map(|s| min_max(s, bounds.texture)),
        external: raw.external.map(|s| min_max(s, bounds.external)),
    }
}

/// Weighted sum over the present slots, weights renormalized over them.
pub fn fuse_scores(norm: &ScoreBundle, weights: &FusionWeights) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (s, w) in norm.slots().iter().zip(weights.as_array()) {
        if let Some(s) = s {
            num += w * s;
            den += w;
        }
    }
    if norm.slots().iter().all(Option::is_none) {
        return Err(Error::NoScores);
    }
    if den <= 0.0 {
        // only zero-weight slots are present: fall back to their plain mean
        let present: Vec<f64> = norm.slots().iter().flatten().copied().collect();
        return Ok(present.iter().sum::<f64>() / present.len() as f64);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Zero when both genders are known and differ.
pub fn gate_genders(a: Gender, b: Gender, fused: f64) -> f64 {
    match (a, b) {
        (Gender::Unknown, _) | (_, Gender::Unknown) => fused,
        (a, b) if a != b => 0.0,
        _ => fused,
    }
}

pub fn gender_gate(a: &Template, b: &Template, fused: f64) -> f64 {
    gate_genders(a.gender, b.gender, fused)
}

/// Average fusion.
pub fn multi_sample_fuse(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// One captured impression: its template and, when available, the image it
/// was extracted from (needed by the external matcher).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub template: Template,
    pub image: Option<PathBuf>,
}

/// All samples of one subject from one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub samples: Vec<Sample>,
}

impl SubjectRecord {
    pub fn gender(&self) -> Gender {
        self.samples
            .iter()
            .map(|s| s.template.gender)
            .find(|g| *g != Gender::Unknown)
            .unwrap_or(Gender::Unknown)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub subject_id: String,
    pub fused_score: f64,
    pub rank: usize,
}

/// Everything needed to compare two records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matcher {
    pub params: MatchParams,
    pub weights: FusionWeights,
    pub bounds: NormalizationBounds,
    pub policy: AgingPolicy,
    pub connector: Option<ExternalConnector>,
    /// Used to preprocess images for the external matcher.
    pub extract: ExtractParams,
}

impl Matcher {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.weights.validate()?;
        self.bounds.validate()?;
        self.policy.validate()?;
        if let Some(c) = &self.connector {
            c.validate()?;
        }
        self.extract.validate()
    }

    /// Raw scores for a probe sample against an enrolled sample. The enrolled
    /// side is aged according to the policy.
    pub fn compare(&self, probe: &Sample, enrolled: &Sample) -> Result<ScoreBundle> {
        let aged = age_template(&enrolled.template, &self.policy)?;
        let m = minutiae_match(&probe.template.minutiae, &aged.minutiae, &self.params);
        let texture = match (&probe.template.embedding, &enrolled.template.embedding) {
            (Some(p), Some(e)) => Some(texture_match(e, p)?),
            _ => None,
        };
        let external = match (&self.connector, &probe.image, &enrolled.image) {
            (Some(c), Some(p), Some(e)) => self.external_score(c, p, e, &enrolled.template),
            _ => None,
        };
        Ok(ScoreBundle {
            minutiae: Some(m.score),
            texture,
            external,
        })
    }

    fn external_score(
        &self,
        connector: &ExternalConnector,
        probe: &std::path::Path,
        enrolled: &std::path::Path,
        enrolled_template: &Template,
    ) -> Option<f64> {
        let prepare = |path: &std::path::Path, lambda: f64| -> Result<tempfile::TempPath> {
            let ppi = enrolled_template.minutiae.source_ppi;
            let img = read_pgm(path, ppi)?;
            write_temp_pgm(&prepare_external_image(&img, lambda, &self.extract)?)
        };
        let lambda = if enrolled_template.aged {
            1.0
        } else {
            select_scale_factor(enrolled_template.age_weeks_at_capture, &self.policy)
        };
        match (prepare(probe, 1.0), prepare(enrolled, lambda)) {
            (Ok(p), Ok(e)) => external_match(&p, &e, Some(connector)),
            (Err(err), _) | (_, Err(err)) => {
                warn!("external matcher input preparation failed: {err}");
                None
            }
        }
    }

    /// Normalized, fused score for one sample pair, before gating.
    pub fn fused(&self, probe: &Sample, enrolled: &Sample) -> Result<f64> {
        fuse_scores(&normalize_scores(&self.compare(probe, enrolled)?, &self.bounds), &self.weights)
    }

    /// Fused scores of every same-thumb sample pair, in probe-major order.
    pub fn pair_scores(&self, probe: &SubjectRecord, enrolled: &SubjectRecord) -> Result<Vec<f64>> {
        let mut scores = Vec::new();
        for p in &probe.samples {
            for e in &enrolled.samples {
                if p.template.thumb == e.template.thumb {
                    scores.push(self.fused(p, e)?);
                }
            }
        }
        if scores.is_empty() {
            return Err(Error::NoComparablePairs);
        }
        Ok(scores)
    }

    /// Mean of all same-thumb pair scores, then the gender gate.
    pub fn authenticate(&self, probe: &SubjectRecord, enrolled: &SubjectRecord) -> Result<f64> {
        let mean = multi_sample_fuse(&self.pair_scores(probe, enrolled)?)?;
        Ok(gate_genders(probe.gender(), enrolled.gender(), mean))
    }

    /// Scores the probe against every gallery subject and ranks them.
    /// Subjects with no comparable samples score 0.
    pub fn search(&self, probe: &SubjectRecord, gallery: &[SubjectRecord]) -> Vec<RankedCandidate> {
        let scores: Vec<f64> = gallery
            .par_iter()
            .map(|g| match self.authenticate(probe, g) {
                Ok(s) => s,
                Err(e) => {
                    warn!("{} vs {}: {e}", probe.subject_id, g.subject_id);
                    0.0
                }
            })
            .collect();
        rank_candidates(gallery.iter().map(|g| g.subject_id.clone()).zip(scores).collect())
    }
}

/// Sorts by descending score, ties by subject id, and assigns ranks 1..G.
pub fn rank_candidates(mut scored: Vec<(String, f64)>) -> Vec<RankedCandidate> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (subject_id, fused_score))| RankedCandidate {
            subject_id,
            fused_score,
            rank: i + 1,
        })
        .collect()
}

/// Authenticates a probe against one enrolled record with a default-weight
/// matcher built from the given parts.
pub fn authenticate(
    probe: &SubjectRecord,
    enrolled: &SubjectRecord,
    weights: &FusionWeights,
    bounds: &NormalizationBounds,
    params: &MatchParams,
    policy: &AgingPolicy,
) -> Result<f64> {
    Matcher {
        params: *params,
        weights: *weights,
        bounds: *bounds,
        policy: *policy,
        ..Default::default()
    }
    .authenticate(probe, enrolled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Minutia, MinutiaeSet, Thumb};

    fn template(subject: &str, thumb: Thumb, gender: Gender, shift: f64) -> Template {
        let minutiae = (0..20)
            .map(|i| {
                let x = 100.0 + 37.0 * (i % 5) as f64 + shift;
                let y = 80.0 + 41.0 * (i / 5) as f64 + 5.0 * (i % 3) as f64;
                Minutia::new(x, y, 0.3 * i as f64).unwrap()
            })
            .collect();
        Template {
            subject_id: subject.into(),
            thumb,
            session_id: "s1".into(),
            age_weeks_at_capture: 20,
            gender,
            minutiae: MinutiaeSet::new(minutiae, 1000).unwrap(),
            embedding: None,
            aged: false,
        }
    }

    fn record(subject: &str, gender: Gender, thumbs: &[Thumb], impressions: usize) -> SubjectRecord {
        let mut samples = Vec::new();
        for &t in thumbs {
            for _ in 0..impressions {
                samples.push(Sample {
                    template: template(subject, t, gender, 0.0),
                    image: None,
                });
            }
        }
        SubjectRecord {
            subject_id: subject.into(),
            samples,
        }
    }

    #[test]
    fn fusion_examples() {
        let w = FusionWeights::default();
        let all = ScoreBundle::new(Some(1.0), Some(1.0), Some(1.0));
        assert!((fuse_scores(&all, &w).unwrap() - 1.0).abs() < 1e-12);
        let b = ScoreBundle::new(Some(0.5), Some(0.2), Some(0.4));
        assert!((fuse_scores(&b, &w).unwrap() - 0.44).abs() < 1e-12);
        let one = ScoreBundle::new(Some(0.5), None, None);
        assert!((fuse_scores(&one, &w).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(fuse_scores(&ScoreBundle::default(), &w), Err(Error::NoScores)));
    }

    #[test]
    fn normalization_examples() {
        let b = NormalizationBounds::default();
        let n = normalize_scores(&ScoreBundle::new(Some(0.0), Some(0.0), Some(1.0)), &b);
        assert_eq!(n, ScoreBundle::new(Some(0.0), Some(0.5), Some(1.0)));
        let n = normalize_scores(&ScoreBundle::new(Some(1.5), Some(-3.0), None), &b);
        assert_eq!(n, ScoreBundle::new(Some(1.0), Some(0.0), None));
        let bad = NormalizationBounds {
            texture: (1.0, 1.0),
            ..b
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gender_gate_examples() {
        assert_eq!(gate_genders(Gender::Male, Gender::Female, 0.9), 0.0);
        assert_eq!(gate_genders(Gender::Female, Gender::Female, 0.9), 0.9);
        assert_eq!(gate_genders(Gender::Unknown, Gender::Male, 0.9), 0.9);
        let a = template("a", Thumb::Left, Gender::Male, 0.0);
        let b = template("b", Thumb::Left, Gender::Female, 0.0);
        assert_eq!(gender_gate(&a, &b, 0.7), 0.0);
    }

    #[test]
    fn multi_sample_examples() {
        assert!((multi_sample_fuse(&[0.8, 0.6]).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(multi_sample_fuse(&[0.3]).unwrap(), 0.3);
        assert!(multi_sample_fuse(&[]).is_err());
    }

    #[test]
    fn authenticate_self_is_one() {
        let m = Matcher::default();
        let r = record("a", Gender::Female, &[Thumb::Left, Thumb::Right], 2);
        assert!((m.authenticate(&r, &r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eight_pair_scores_for_two_by_two() {
        let m = Matcher::default();
        let r = record("a", Gender::Female, &[Thumb::Left, Thumb::Right], 2);
        assert_eq!(m.pair_scores(&r, &r).unwrap().len(), 8);
    }

    #[test]
    fn cross_thumb_only_is_an_error() {
        let m = Matcher::default();
        let l = record("a", Gender::Female, &[Thumb::Left], 1);
        let r = record("a", Gender::Female, &[Thumb::Right], 1);
        assert!(matches!(m.authenticate(&l, &r), Err(Error::NoComparablePairs)));
    }

    #[test]
    fn search_ranks_and_breaks_ties_by_id() {
        let m = Matcher::default();
        let probe = record("b", Gender::Unknown, &[Thumb::Left], 1);
        let gallery = vec![
            record("c", Gender::Unknown, &[Thumb::Left], 1),
            record("a", Gender::Unknown, &[Thumb::Left], 1),
            record("z", Gender::Unknown, &[Thumb::Right], 1),
        ];
        let ranked = m.search(&probe, &gallery);
        let ids: Vec<&str> = ranked.iter().map(|c| c.subject_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c", "z"]);
        assert_eq!(ranked.iter().map(|c| c.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(ranked[2].fused_score, 0.0);
    }

    #[test]
    fn gallery_of_one_is_rank_one() {
        let m = Matcher::default();
        let probe = record("b", Gender::Male, &[Thumb::Left], 1);
        let gallery = vec![record("a", Gender::Female, &[Thumb::Left], 1)];
        let ranked = m.search(&probe, &gallery);
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].rank, 1);
    }

    #[test]
    fn aging_applies_to_enrolled_side() {
        let m = Matcher::default();
        let mut young = template("a", Thumb::Left, Gender::Male, 0.0);
        young.age_weeks_at_capture = 4;
        let grown = crate::aging::age_template(&young, &m.policy).unwrap();
        let probe = Sample {
            template: Template {
                aged: false,
                age_weeks_at_capture: 30,
                ..grown
            },
            image: None,
        };
        let enrolled = Sample {
            template: young,
            image: None,
        };
        let bundle = m.compare(&probe, &enrolled).unwrap();
        assert_eq!(bundle.minutiae, Some(1.0));
    }
}
