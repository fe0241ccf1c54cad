//! Genuine/imposter pair generation over a longitudinal manifest.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::manifest::Manifest;

/// One subject's capture session: the unit compared by authentication.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordRef {
    pub subject_id: String,
    pub session_id: String,
}

impl fmt::Display for RecordRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.subject_id, self.session_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Genuine,
    Imposter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolPair {
    pub probe: RecordRef,
    pub enrolled: RecordRef,
    pub label: PairLabel,
    /// Probe age minus enrollment age, floored at zero.
    pub time_lapse_weeks: u32,
    pub enrollment_age_weeks: u32,
}

/// Half-open week interval `[lo, hi)` with a display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeekBucket {
    pub label: String,
    pub lo: u32,
    pub hi: u32,
}

impl WeekBucket {
    pub fn new(label: impl Into<String>, lo: u32, hi: u32) -> Self {
        Self {
            label: label.into(),
            lo,
            hi,
        }
    }

    /// Every non-negative week count.
    pub fn all() -> Self {
        Self::new("all", 0, u32::MAX)
    }

    pub fn contains(&self, weeks: u32) -> bool {
        self.lo <= weeks && weeks < self.hi
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo >= self.hi || self.label.trim().is_empty() {
            return Err(Error::invalid(
                "week bucket",
                format!("`{}` [{}, {}) is empty or unlabeled", self.label, self.lo, self.hi),
            ));
        }
        Ok(())
    }
}

/// Enrollment-age buckets of 0-1, 1-2 and 2-3 months, plus everything.
pub fn default_age_buckets() -> Vec<WeekBucket> {
    vec![
        WeekBucket::new("0-1m", 0, 5),
        WeekBucket::new("1-2m", 5, 9),
        WeekBucket::new("2-3m", 9, 13),
        WeekBucket::all(),
    ]
}

pub fn default_lapse_buckets() -> Vec<WeekBucket> {
    vec![WeekBucket::all()]
}

#[derive(Debug, Clone)]
struct Session {
    record: RecordRef,
    date: NaiveDate,
    age_weeks: u32,
}

/// Sessions of every subject in chronological order (capture date, then
/// session id), keyed by subject id.
fn sessions_by_subject(manifest: &Manifest) -> BTreeMap<String, Vec<Session>> {
    let mut by_subject: BTreeMap<String, BTreeMap<String, Session>> = BTreeMap::new();
    for e in &manifest.entries {
        by_subject
            .entry(e.subject_id.clone())
            .or_default()
            .entry(e.session_id.clone())
            .or_insert_with(|| Session {
                record: RecordRef {
                    subject_id: e.subject_id.clone(),
                    session_id: e.session_id.clone(),
                },
                date: e.capture_date,
                age_weeks: e.age_weeks,
            });
    }
    by_subject
        .into_iter()
        .map(|(subject, sessions)| {
            let mut v: Vec<Session> = sessions.into_values().collect();
            v.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.record.session_id.cmp(&b.record.session_id)));
            (subject, v)
        })
        .collect()
}

/// Every ordered (enrolled, probe) record pair whose enrollment session comes
/// earlier in its subject's timeline than the probe session does in its own.
/// Genuine pairs share the subject. Imposter time lapse is not meaningful, so
/// the lapse bucket filters genuine pairs only; the age bucket filters both
/// classes by the enrolled record's age.
///
/// Ordering: probe subject, probe session index, enrolled subject, enrolled
/// session index.
pub fn build_protocol(
    manifest: &Manifest,
    age_bucket: Option<&WeekBucket>,
    lapse_bucket: Option<&WeekBucket>,
) -> Vec<ProtocolPair> {
    let sessions = sessions_by_subject(manifest);
    let mut pairs = Vec::new();
    for (probe_subject, probe_sessions) in &sessions {
        for (pi, probe) in probe_sessions.iter().enumerate() {
            for (enrolled_subject, enrolled_sessions) in &sessions {
                for enrolled in enrolled_sessions.iter().take(pi) {
                    let label = if probe_subject == enrolled_subject {
                        PairLabel::Genuine
                    } else {
                        PairLabel::Imposter
                    };
                    let lapse = probe.age_weeks.saturating_sub(enrolled.age_weeks);
                    if age_bucket.is_some_and(|b| !b.contains(enrolled.age_weeks)) {
                        continue;
                    }
                    if label == PairLabel::Genuine && lapse_bucket.is_some_and(|b| !b.contains(lapse)) {
                        continue;
                    }
                    pairs.push(ProtocolPair {
                        probe: probe.record.clone(),
                        enrolled: enrolled.record.clone(),
                        label,
                        time_lapse_weeks: lapse,
                        enrollment_age_weeks: enrolled.age_weeks,
                    });
                }
            }
        }
    }
    if pairs.is_empty() {
        warn!(
            "protocol bucket (age {}, lapse {}) is empty",
            age_bucket.map_or("any", |b| b.label.as_str()),
            lapse_bucket.map_or("any", |b| b.label.as_str())
        );
    }
    pairs
}

/// Same-thumb impression comparison implied by a record pair: indices into
/// `manifest.entries`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePair {
    pub pair: usize,
    pub probe_entry: usize,
    pub enrolled_entry: usize,
}

/// Expands record pairs into same-thumb impression pairs, probe-major in
/// manifest order.
pub fn expand_pairs(manifest: &Manifest, pairs: &[ProtocolPair]) -> Vec<SamplePair> {
    let mut by_record: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_record.entry((&e.subject_id, &e.session_id)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (k, p) in pairs.iter().enumerate() {
        let probes = by_record.get(&(p.probe.subject_id.as_str(), p.probe.session_id.as_str()));
        let enrolled = by_record.get(&(p.enrolled.subject_id.as_str(), p.enrolled.session_id.as_str()));
        let (Some(probes), Some(enrolled)) = (probes, enrolled) else {
            continue;
        };
        for &pi in probes {
            for &ei in enrolled {
                if manifest.entries[pi].thumb == manifest.entries[ei].thumb {
                    out.push(SamplePair {
                        pair: k,
                        probe_entry: pi,
                        enrolled_entry: ei,
                    });
                }
            }
        }
    }
    out
}
