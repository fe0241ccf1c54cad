//! Evaluation runner: enrolls a manifest, scores every protocol pair once
//! and derives per-bucket ROC and CMC metrics from the shared scores.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enroll::load_sample;
use crate::error::{Error, Result};
use crate::eval::manifest::Manifest;
use crate::eval::metrics::{cmc, tar_at_far, PairScores, SearchResult};
use crate::eval::protocol::{
    build_protocol, default_age_buckets, default_lapse_buckets, expand_pairs, PairLabel, ProtocolPair, WeekBucket,
};
use crate::eval::report::{Report, ReportRow};
use crate::extract::ExtractParams;
use crate::matching::{gate_genders, normalize_scores, rank_candidates, Matcher, Sample};
use crate::types::{FusionWeights, Gender};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    pub far_targets: Vec<f64>,
    pub age_buckets: Vec<WeekBucket>,
    pub lapse_buckets: Vec<WeekBucket>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            far_targets: vec![0.001, 0.01],
            age_buckets: default_age_buckets(),
            lapse_buckets: default_lapse_buckets(),
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if self.far_targets.is_empty() || self.far_targets.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::invalid("eval params", "FAR targets must lie in (0, 1)"));
        }
        if self.age_buckets.is_empty() || self.lapse_buckets.is_empty() {
            return Err(Error::invalid("eval params", "at least one age and one lapse bucket"));
        }
        for b in self.age_buckets.iter().chain(&self.lapse_buckets) {
            b.validate()?;
        }
        Ok(())
    }
}

/// Enrolls every manifest entry, in manifest order.
pub fn load_samples(manifest: &Manifest, ppi: u32, params: &ExtractParams) -> Result<Vec<Sample>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let mut s = load_sample(manifest, e, ppi, params)?;
            // manifest metadata wins over whatever a stored template says
            s.template.subject_id = e.subject_id.clone();
            s.template.session_id = e.session_id.clone();
            s.template.thumb = e.thumb;
            s.template.gender = e.gender;
            s.template.age_weeks_at_capture = e.age_weeks;
            Ok(s)
        })
        .collect()
}

/// Every protocol pair with its normalized per-sample bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub pairs: Vec<ProtocolPair>,
    pub scores: Vec<PairScores>,
}

/// Scores the unbucketed protocol. Sample comparisons run in parallel; the
/// result order follows the protocol.
pub fn score_protocol(manifest: &Manifest, samples: &[Sample], matcher: &Matcher) -> Result<ScoreTable> {
    matcher.validate()?;
    if samples.len() != manifest.entries.len() {
        return Err(Error::invalid("samples", "one sample per manifest entry is required"));
    }
    let pairs = build_protocol(manifest, None, None);
    let expanded = expand_pairs(manifest, &pairs);
    let bundles: Vec<_> = expanded
        .par_iter()
        .map(|sp| {
            let raw = matcher.compare(&samples[sp.probe_entry], &samples[sp.enrolled_entry])?;
            Ok(normalize_scores(&raw, &matcher.bounds))
        })
        .collect::<Result<_>>()?;
    let genders: BTreeMap<&str, Gender> =
        manifest.entries.iter().map(|e| (e.subject_id.as_str(), e.gender)).collect();
    let gender = |subject: &str| genders.get(subject).copied().unwrap_or(Gender::Unknown);
    let mut scores: Vec<PairScores> = pairs
        .iter()
        .map(|p| PairScores {
            bundles: Vec::new(),
            gated: gate_genders(gender(&p.probe.subject_id), gender(&p.enrolled.subject_id), 1.0) == 0.0,
        })
        .collect();
    for (sp, b) in expanded.iter().zip(bundles) {
        scores[sp.pair].bundles.push(b);
    }
    // record pairs without a same-thumb sample pair cannot be scored
    let keep: Vec<bool> = scores.iter().map(|s| !s.bundles.is_empty()).collect();
    let mut k = keep.iter();
    let pairs: Vec<ProtocolPair> = pairs.into_iter().filter(|_| *k.next().unwrap()).collect();
    let scores: Vec<PairScores> = scores.into_iter().filter(|s| !s.bundles.is_empty()).collect();
    Ok(ScoreTable { pairs, scores })
}

impl ScoreTable {
    /// Fused record-level scores under `weights`, in protocol order.
    pub fn fused(&self, weights: &FusionWeights) -> Result<Vec<f64>> {
        self.scores.iter().map(|s| s.fused(weights)).collect()
    }

    /// Indices of the pairs falling in the buckets.
    pub fn select(&self, age: &WeekBucket, lapse: &WeekBucket) -> Vec<usize> {
        (0..self.pairs.len())
            .filter(|&i| {
                let p = &self.pairs[i];
                age.contains(p.enrollment_age_weeks)
                    && (p.label == PairLabel::Imposter || lapse.contains(p.time_lapse_weeks))
            })
            .collect()
    }

    /// CSV of every record pair: probe, enrolled, label, lapse, age, score.
    pub fn to_csv(&self, weights: &FusionWeights) -> Result<String> {
        let fused = self.fused(weights)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record([
            "probe_subject",
            "probe_session",
            "enrolled_subject",
            "enrolled_session",
            "label",
            "time_lapse_weeks",
            "enrollment_age_weeks",
            "score",
        ])
        .map_err(io)?;
        for (p, s) in self.pairs.iter().zip(fused) {
            let label = match p.label {
                PairLabel::Genuine => "genuine",
                PairLabel::Imposter => "imposter",
            };
            w.write_record([
                p.probe.subject_id.as_str(),
                &p.probe.session_id,
                &p.enrolled.subject_id,
                &p.enrolled.session_id,
                label,
                &p.time_lapse_weeks.to_string(),
                &p.enrollment_age_weeks.to_string(),
                &format!("{s:.6}"),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Ranked candidate subjects per probe record over the selected pairs. A
/// subject enrolled in several sessions counts with its best score.
pub fn search_results(table: &ScoreTable, fused: &[f64], selected: &[usize]) -> Vec<SearchResult> {
    let mut by_probe: BTreeMap<&crate::eval::RecordRef, BTreeMap<&str, f64>> = BTreeMap::new();
    for &i in selected {
        let p = &table.pairs[i];
        let slot = by_probe.entry(&p.probe).or_default().entry(&p.enrolled.subject_id).or_insert(f64::NEG_INFINITY);
        *slot = slot.max(fused[i]);
    }
    by_probe
        .into_iter()
        .map(|(probe, cands)| SearchResult {
            probe_subject: probe.subject_id.clone(),
            candidates: rank_candidates(cands.into_iter().map(|(s, v)| (s.to_string(), v)).collect()),
        })
        .collect()
}

fn bucket_row(
    table: &ScoreTable,
    fused: &[f64],
    age: &WeekBucket,
    lapse: &WeekBucket,
    far_targets: &[f64],
) -> ReportRow {
    let selected = table.select(age, lapse);
    let (mut genuine, mut imposter) = (Vec::new(), Vec::new());
    let mut subjects = BTreeSet::new();
    for &i in &selected {
        match table.pairs[i].label {
            PairLabel::Genuine => {
                genuine.push(fused[i]);
                subjects.insert(table.pairs[i].probe.subject_id.as_str());
            }
            PairLabel::Imposter => imposter.push(fused[i]),
        }
    }
    let tar = far_targets
        .iter()
        .map(|&f| tar_at_far(&genuine, &imposter, f).ok().map(|(t, _)| t))
        .collect();
    // only probes with a mate in this bucket are searched
    let results: Vec<SearchResult> = search_results(table, fused, &selected)
        .into_iter()
        .filter(|r| r.mate_rank().is_some())
        .collect();
    ReportRow {
        age_bucket: age.label.clone(),
        lapse_bucket: lapse.label.clone(),
        n_subjects: subjects.len(),
        n_genuine: genuine.len(),
        n_imposter: imposter.len(),
        tar,
        rank1: cmc(&results, 1).ok(),
        rank5: cmc(&results, 5).ok(),
    }
}

/// One row per (age bucket, lapse bucket), age-major.
pub fn build_report(table: &ScoreTable, weights: &FusionWeights, params: &EvalParams) -> Result<Report> {
    params.validate()?;
    let fused = table.fused(weights)?;
    let mut rows = Vec::new();
    for age in &params.age_buckets {
        for lapse in &params.lapse_buckets {
            rows.push(bucket_row(table, &fused, age, lapse, &params.far_targets));
        }
    }
    Ok(Report {
        far_targets: params.far_targets.clone(),
        rows,
    })
}

/// Enrolls, scores and reports in one go. PGM images are read at `ppi`.
pub fn evaluate(
    manifest: &Manifest,
    matcher: &Matcher,
    params: &EvalParams,
    ppi: u32,
) -> Result<(ScoreTable, Report)> {
    params.validate()?;
    let samples = load_samples(manifest, ppi, &matcher.extract)?;
    let table = score_protocol(manifest, &samples, matcher)?;
    let report = build_report(&table, &matcher.weights, params)?;
    Ok((table, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::manifest::ManifestEntry;
    use crate::iptf::write_template;
    use crate::types::{Minutia, MinutiaeSet, Template, Thumb};
    use chrono::NaiveDate;
    use std::path::PathBuf;

    /// Subject `s` has its own random-looking minutiae, identical across
    /// sessions, so every genuine pair scores 1.
    fn template(s: usize, session: usize, thumb: Thumb, gender: Gender) -> Template {
        let mut state = (s as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ thumb.code() as u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let minutiae = (0..30)
            .map(|_| Minutia::new(20.0 + 300.0 * next(), 20.0 + 300.0 * next(), 6.28 * next()).unwrap())
            .collect();
        Template {
            subject_id: format!("S{s}"),
            thumb,
            session_id: format!("s{}", session + 1),
            age_weeks_at_capture: 20 + 13 * session as u32,
            gender,
            minutiae: MinutiaeSet::new(minutiae, 1900).unwrap(),
            embedding: None,
            aged: false,
        }
    }

    fn dataset(n: usize, genders: &[Gender]) -> (tempfile::TempDir, Manifest) {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = Vec::new();
        for s in 0..n {
            for session in 0..2 {
                for thumb in [Thumb::Left, Thumb::Right] {
                    let t = template(s, session, thumb, genders[s % genders.len()]);
                    let name = format!("S{s}_{session}_{thumb}.iptf");
                    std::fs::write(dir.path().join(&name), write_template(&t).unwrap()).unwrap();
                    entries.push(ManifestEntry {
                        subject_id: t.subject_id.clone(),
                        session_id: t.session_id.clone(),
                        capture_date: NaiveDate::from_ymd_opt(2024, 1 + 3 * session as u32, 1).unwrap(),
                        age_weeks: t.age_weeks_at_capture,
                        gender: t.gender,
                        thumb,
                        path: PathBuf::from(name),
                    });
                }
            }
        }
        let m = Manifest {
            base_dir: dir.path().to_path_buf(),
            entries,
        };
        (dir, m)
    }

    fn params() -> EvalParams {
        EvalParams {
            age_buckets: vec![WeekBucket::new("0-1m", 0, 5), WeekBucket::all()],
            ..Default::default()
        }
    }

    #[test]
    fn perfect_identity_dataset() {
        let (_d, m) = dataset(6, &[Gender::Unknown]);
        let (table, report) = evaluate(&m, &Matcher::default(), &params(), 1000).unwrap();
        assert_eq!(table.pairs.len(), 36);
        let empty = &report.rows[0];
        assert_eq!((empty.n_genuine, empty.n_imposter, empty.rank1), (0, 0, None));
        let all = &report.rows[1];
        assert_eq!((all.n_subjects, all.n_genuine, all.n_imposter), (6, 6, 30));
        assert_eq!(all.tar, vec![Some(1.0), Some(1.0)]);
        assert_eq!((all.rank1, all.rank5), (Some(1.0), Some(1.0)));
        let fused = table.fused(&FusionWeights::default()).unwrap();
        for (p, s) in table.pairs.iter().zip(&fused) {
            if p.label == PairLabel::Genuine {
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gender_gate_zeroes_exactly_cross_gender_pairs() {
        let (_d, m) = dataset(10, &[Gender::Male, Gender::Female, Gender::Female]);
        let samples = load_samples(&m, 1000, &ExtractParams::default()).unwrap();
        let table = score_protocol(&m, &samples, &Matcher::default()).unwrap();
        let gender = |s: &str| m.entries.iter().find(|e| e.subject_id == s).unwrap().gender;
        for (p, s) in table.pairs.iter().zip(&table.scores) {
            assert_eq!(s.gated, gender(&p.probe.subject_id) != gender(&p.enrolled.subject_id));
        }
        assert!(table.scores.iter().any(|s| s.gated));
    }

    #[test]
    fn csv_outputs_are_deterministic() {
        let (_d, m) = dataset(4, &[Gender::Unknown]);
        let a = evaluate(&m, &Matcher::default(), &params(), 1000).unwrap();
        let b = evaluate(&m, &Matcher::default(), &params(), 1000).unwrap();
        assert_eq!(a.1.to_csv(), b.1.to_csv());
        let w = FusionWeights::default();
        assert_eq!(a.0.to_csv(&w).unwrap(), b.0.to_csv(&w).unwrap());
        assert_eq!(a.0.to_csv(&w).unwrap().lines().count(), 17);
    }

    #[test]
    fn bad_params_rejected() {
        let p = EvalParams {
            far_targets: vec![1.5],
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(EvalParams::default().validate().is_ok());
    }
}
