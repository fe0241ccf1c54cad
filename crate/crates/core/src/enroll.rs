//! Image to template: extraction, texture embedding and optional growth
//! compensation.

use std::path::Path;

use log::warn;

use crate::aging::{age_template, AgingPolicy};
use crate::error::Result;
use crate::eval::manifest::{Manifest, ManifestEntry};
use crate::extract::{extract, ExtractParams, Extraction};
use crate::imageio::read_pgm;
use crate::iptf::read_template;
use crate::matching::{embedding_from_field, Sample};
use crate::types::{Gender, GrayImage, Template, Thumb};

/// Capture metadata attached to an enrolled image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureInfo {
    pub subject_id: String,
    pub session_id: String,
    pub thumb: Thumb,
    pub gender: Gender,
    pub age_weeks: u32,
}

impl From<&ManifestEntry> for CaptureInfo {
    fn from(e: &ManifestEntry) -> Self {
        Self {
            subject_id: e.subject_id.clone(),
            session_id: e.session_id.clone(),
            thumb: e.thumb,
            gender: e.gender,
            age_weeks: e.age_weeks,
        }
    }
}

/// Unaged template from a finished extraction.
pub fn template_from_extraction(ex: &Extraction, info: &CaptureInfo) -> Result<Template> {
    let minutiae = ex.minutiae();
    if minutiae.is_empty() {
        warn!("{}/{} {}: no minutiae extracted", info.subject_id, info.session_id, info.thumb);
    }
    let template = Template {
        subject_id: info.subject_id.clone(),
        thumb: info.thumb,
        session_id: info.session_id.clone(),
        age_weeks_at_capture: info.age_weeks,
        gender: info.gender,
        minutiae,
        embedding: Some(embedding_from_field(&ex.normalized, &ex.field)),
        aged: false,
    };
    template.validate()?;
    Ok(template)
}

/// Extracts minutiae and a texture embedding. With a policy, young captures
/// are aged and flagged.
pub fn enroll_image(
    img: &GrayImage,
    info: &CaptureInfo,
    params: &ExtractParams,
    policy: Option<&AgingPolicy>,
) -> Result<Template> {
    let template = template_from_extraction(&extract(img, params)?, info)?;
    match policy {
        Some(p) => age_template(&template, p),
        None => Ok(template),
    }
}

fn is_template(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("iptf"))
}

/// Loads one manifest entry as an unaged sample. IPTF paths are read as-is;
/// anything else is decoded as a PGM at `ppi` and enrolled.
pub fn load_sample(manifest: &Manifest, entry: &ManifestEntry, ppi: u32, params: &ExtractParams) -> Result<Sample> {
    let path = manifest.resolve(entry);
    if is_template(&path) {
        let template = read_template(&std::fs::read(&path)?)?;
        return Ok(Sample { template, image: None });
    }
    let img = read_pgm(&path, ppi)?;
    let template = enroll_image(&img, &entry.into(), params, None)?;
    Ok(Sample {
        template,
        image: Some(path),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(age: u32) -> CaptureInfo {
        CaptureInfo {
            subject_id: "S1".into(),
            session_id: "s1".into(),
            thumb: Thumb::Left,
            gender: Gender::Male,
            age_weeks: age,
        }
    }

    fn ridges() -> GrayImage {
        GrayImage::from_fn(128, 128, 500, |x, y| {
            let (dx, dy) = (x as f64 - 64.0, y as f64 - 60.0);
            let phase = std::f64::consts::TAU * y as f64 / 10.0 + dy.atan2(dx);
            (0.5 - 0.35 * phase.cos()) as f32
        })
    }

    #[test]
    fn aging_follows_cutoff() {
        let policy = AgingPolicy::default();
        let raw = enroll_image(&ridges(), &info(8), &ExtractParams::default(), None).unwrap();
        let young = enroll_image(&ridges(), &info(8), &ExtractParams::default(), Some(&policy)).unwrap();
        let old = enroll_image(&ridges(), &info(26), &ExtractParams::default(), Some(&policy)).unwrap();
        assert!(young.aged && !old.aged && !raw.aged);
        assert!(!raw.minutiae.is_empty());
        for (a, r) in young.minutiae.iter().zip(raw.minutiae.iter()) {
            assert!((a.x - 1.1 * r.x).abs() < 1e-9 && (a.y - 1.1 * r.y).abs() < 1e-9);
        }
        assert_eq!(old.minutiae, raw.minutiae);
    }

    #[test]
    fn blank_image_gives_empty_template() {
        let t = enroll_image(&GrayImage::filled(64, 64, 500, 0.5), &info(4), &ExtractParams::default(), None)
            .unwrap();
        assert!(t.minutiae.is_empty());
        assert!(t.embedding.is_some());
    }
}
