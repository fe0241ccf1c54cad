//! Single TOML configuration file. Every section is optional and falls back
//! to built-in defaults; unknown keys are rejected.
//!
//! ```toml
//! [image]
//! ppi = 500
//!
//! [minmap]
//! sigma_s = 3.0
//!
//! [aging]
//! lambda = 1.1
//! age_cutoff_weeks = 13
//!
//! [weights]
//! minutiae = 0.6
//! texture = 0.1
//! external = 0.3
//!
//! [external]
//! command = "my-matcher {probe} {enrolled}"
//! timeout_secs = 10
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aging::AgingPolicy;
use crate::error::{Error, Result};
use crate::eval::EvalParams;
use crate::extract::ExtractParams;
use crate::matching::{ExternalConnector, MatchParams, Matcher, NormalizationBounds};
use crate::minmap::MinmapParams;
use crate::synth::BenchmarkSpec;
use crate::types::FusionWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageParams {
    /// Resolution assumed for PGM inputs, which carry none.
    pub ppi: u32,
}

impl Default for ImageParams {
    fn default() -> Self {
        Self { ppi: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub image: ImageParams,
    pub minmap: MinmapParams,
    pub extract: ExtractParams,
    pub aging: AgingPolicy,
    #[serde(rename = "match")]
    pub matching: MatchParams,
    pub weights: FusionWeights,
    pub bounds: NormalizationBounds,
    pub external: Option<ExternalConnector>,
    pub eval: EvalParams,
    pub synth: BenchmarkSpec,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.image.ppi == 0 || self.image.ppi > u16::MAX as u32 {
            return Err(Error::invalid("image", "ppi must lie in 1..=65535"));
        }
        self.minmap.validate()?;
        self.eval.validate()?;
        self.synth.validate()?;
        self.matcher().validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn matcher(&self) -> Matcher {
        Matcher {
            params: self.matching,
            weights: self.weights,
            bounds: self.bounds,
            policy: self.aging,
            connector: self.external.clone(),
            extract: self.extract,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::WeekBucket;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn default_round_trips() {
        let text = Config::default().to_toml().unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), Config::default());
    }

    #[test]
    fn customized_round_trips() {
        let mut c = Config::default();
        c.minmap.sigma_s = 2.5;
        c.image.ppi = 500;
        c.aging.lambda = 1.15;
        c.weights = FusionWeights::new(0.5, 0.2, 0.3).unwrap();
        c.external = Some(ExternalConnector::new("cmp {probe} {enrolled}"));
        c.eval.far_targets = vec![0.05];
        c.eval.lapse_buckets = vec![WeekBucket::new("short", 0, 8), WeekBucket::new("long", 8, 100)];
        c.synth.n_subjects = 7;
        c.matching.pos_tolerance = 9.5;
        let text = c.to_toml().unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = Config::from_toml("[aging]\nlambda = 1.2\n").unwrap();
        assert_eq!(c.aging.lambda, 1.2);
        assert_eq!(c.aging.age_cutoff_weeks, 13);
        assert_eq!(c.weights, FusionWeights::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_toml("[aging]\nlamda = 1.2\n").is_err());
        assert!(Config::from_toml("[agin]\nlambda = 1.2\n").is_err());
        assert!(Config::from_toml("verbose = true\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config::from_toml("[aging]\nlambda = 0.5\n").is_err());
        assert!(Config::from_toml("[weights]\nminutiae = 0.5\ntexture = 0.1\nexternal = 0.1\n").is_err());
    }
}
