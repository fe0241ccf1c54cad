//! Dataset manifest: a tab-separated file with one row per template or
//! image file.
//!
//! ```text
//! # comments and blank lines are ignored
//! subject_id	session_id	capture_date	age_weeks	gender	thumb	path
//! S0001	s1	2024-03-04	6	female	left	images/S0001_s1_L_0.pgm
//! ```
//!
//! `capture_date` is ISO `YYYY-MM-DD`, `gender` is `male`, `female` or
//! `unknown`, `thumb` is `left` or `right`. Relative paths resolve against
//! the manifest's directory. A path may name a PGM image or an IPTF template.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::types::{Gender, Thumb, MAX_AGE_WEEKS};

pub const COLUMNS: [&str; 7] = [
    "subject_id",
    "session_id",
    "capture_date",
    "age_weeks",
    "gender",
    "thumb",
    "path",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub session_id: String,
    pub capture_date: NaiveDate,
    pub age_weeks: u32,
    pub gender: Gender,
    pub thumb: Thumb,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn subjects(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.entries.iter().map(|e| e.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &base)
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut header_seen = false;
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Manifest {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::Manifest { line, reason };
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let fields: Vec<&str> = record.iter().map(str::trim).collect();
        if !header_seen {
            if fields != COLUMNS {
                return Err(bad(format!("expected header `{}`", COLUMNS.join("\\t"))));
            }
            header_seen = true;
            continue;
        }
        if fields.len() != COLUMNS.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                COLUMNS.len(),
                fields.len()
            )));
        }
        if fields[0].is_empty() || fields[1].is_empty() || fields[6].is_empty() {
            return Err(bad("subject_id, session_id and path must be non-empty".into()));
        }
        let capture_date = NaiveDate::parse_from_str(fields[2], "%Y-%m-%d")
            .map_err(|e| bad(format!("capture_date `{}`: {e}", fields[2])))?;
        let age_weeks: u32 = fields[3]
            .parse()
            .map_err(|_| bad(format!("age_weeks `{}` is not a whole number", fields[3])))?;
        if age_weeks > MAX_AGE_WEEKS {
            return Err(bad(format!("age_weeks {age_weeks} exceeds {MAX_AGE_WEEKS}")));
        }
        let gender: Gender = fields[4].parse().map_err(|e: Error| bad(e.to_string()))?;
        let thumb: Thumb = fields[5].parse().map_err(|e: Error| bad(e.to_string()))?;
        entries.push((
            line,
            ManifestEntry {
                subject_id: fields[0].to_string(),
                session_id: fields[1].to_string(),
                capture_date,
                age_weeks,
                gender,
                thumb,
                path: PathBuf::from(fields[6]),
            },
        ));
    }
    if !header_seen {
        return Err(Error::Manifest {
            line: 0,
            reason: "missing header".into(),
        });
    }
    check_consistency(&entries)?;
    Ok(Manifest {
        base_dir: base_dir.to_path_buf(),
        entries: entries.into_iter().map(|(_, e)| e).collect(),
    })
}

/// Gender is per subject; date and age are per session.
fn check_consistency(entries: &[(usize, ManifestEntry)]) -> Result<()> {
    let mut genders: BTreeMap<&str, Gender> = BTreeMap::new();
    let mut sessions: BTreeMap<(&str, &str), (NaiveDate, u32)> = BTreeMap::new();
    for (line, e) in entries {
        let g = *genders.entry(&e.subject_id).or_insert(e.gender);
        if g != e.gender {
            return Err(Error::Manifest {
                line: *line,
                reason: format!("subject {} has conflicting genders", e.subject_id),
            });
        }
        let key = (e.subject_id.as_str(), e.session_id.as_str());
        let s = *sessions.entry(key).or_insert((e.capture_date, e.age_weeks));
        if s != (e.capture_date, e.age_weeks) {
            return Err(Error::Manifest {
                line: *line,
                reason: format!(
                    "session {}/{} has conflicting date or age",
                    e.subject_id, e.session_id
                ),
            });
        }
    }
    Ok(())
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for e in entries {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.subject_id,
            e.session_id,
            e.capture_date.format("%Y-%m-%d"),
            e.age_weeks,
            e.gender,
            e.thumb,
            e.path.display()
        );
    }
    out
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    std::fs::write(path, format_manifest(entries))?;
    Ok(())
}
