//! Connector for an external matcher program.
//!
//! The command template is run through `sh -c` after substituting the
//! single-quoted image paths for `{probe}` and `{enrolled}`. The program
//! must print a decimal score as the first token on standard output. Any
//! failure (spawn error, non-zero exit, timeout, unparsable output) yields
//! a missing score and a logged warning.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::aging::{age_image, downscale_for_external};
use crate::error::{Error, Result};
use crate::extract::{enhance, estimate_orientation_field, estimate_ridge_period, normalize_image, ExtractParams};
use crate::imageio::write_pgm;
use crate::types::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConnector {
    /// Shell command with `{probe}` and `{enrolled}` placeholders.
    pub command: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    10.0
}

impl ExternalConnector {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.trim().is_empty() {
            return Err(Error::invalid("external connector", "command is empty"));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::invalid("external connector", "timeout must be positive"));
        }
        Ok(())
    }

    /// The shell command line for one comparison.
    pub fn command_line(&self, probe: &Path, enrolled: &Path) -> String {
        self.command
            .replace("{probe}", &shell_quote(&probe.to_string_lossy()))
            .replace("{enrolled}", &shell_quote(&enrolled.to_string_lossy()))
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Runs the connector; `None` when absent or on any failure.
pub fn external_match(probe: &Path, enrolled: &Path, connector: Option<&ExternalConnector>) -> Option<f64> {
    let connector = connector?;
    match run(connector, probe, enrolled) {
        Ok(score) => Some(score),
        Err(reason) => {
            warn!("external matcher failed for {} vs {}: {reason}", probe.display(), enrolled.display());
            None
        }
    }
}

fn run(connector: &ExternalConnector, probe: &Path, enrolled: &Path) -> std::result::Result<f64, String> {
    let line = connector.command_line(probe, enrolled);
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&line)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("spawn: {e}"))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout.read_to_string(&mut buf);
        buf
    });
    let deadline = Instant::now() + Duration::from_secs_f64(connector.timeout_secs);
    let status = loop {
        match child.try_wait().map_err(|e| format!("wait: {e}"))? {
            Some(status) => break status,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(format!("timed out after {} s", connector.timeout_secs));
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };
    let out = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(format!("exit status {status}"));
    }
    let token = out.split_whitespace().next().ok_or("empty output")?;
    let score: f64 = token.parse().map_err(|_| format!("unparsable score `{token}`"))?;
    if !score.is_finite() {
        return Err(format!("non-finite score `{token}`"));
    }
    Ok(score)
}

/// Enhancement, growth scaling by `lambda`, then the fixed 0.5x downscale.
pub fn prepare_external_image(img: &GrayImage, lambda: f64, params: &ExtractParams) -> Result<GrayImage> {
    let normalized = normalize_image(img);
    let field = estimate_orientation_field(&normalized, params.block_px(img.ppi()));
    let (lo, hi) = ExtractParams::period_range(img.ppi());
    let period = estimate_ridge_period(&normalized, &field, lo, hi).unwrap_or(0.5 * (lo + hi));
    let enhanced = enhance(&normalized, &field, period);
    Ok(downscale_for_external(&age_image(&enhanced, lambda)?))
}

/// Writes a prepared image to a temporary PGM kept alive by the returned
/// handle.
pub fn write_temp_pgm(img: &GrayImage) -> Result<tempfile::TempPath> {
    let file = tempfile::Builder::new().suffix(".pgm").tempfile()?;
    let path = file.into_temp_path();
    write_pgm(img, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conn(cmd: &str) -> ExternalConnector {
        ExternalConnector {
            command: cmd.into(),
            timeout_secs: 2.0,
        }
    }

    #[test]
    fn absent_connector_is_missing() {
        assert_eq!(external_match(Path::new("a"), Path::new("b"), None), None);
    }

    #[test]
    fn echo_score_parsed() {
        let c = conn("echo 0.42");
        assert_eq!(external_match(Path::new("a"), Path::new("b"), Some(&c)), Some(0.42));
    }

    #[test]
    fn failures_are_missing() {
        for cmd in ["exit 3", "echo nope", "true", "sleep 5; echo 1"] {
            let mut c = conn(cmd);
            c.timeout_secs = 0.3;
            assert_eq!(external_match(Path::new("a"), Path::new("b"), Some(&c)), None, "{cmd}");
        }
    }

    #[test]
    fn placeholders_are_quoted() {
        let c = conn("printf '%s\\n' {probe} {enrolled} | wc -l");
        assert_eq!(external_match(Path::new("it's a.pgm"), Path::new("b c.pgm"), Some(&c)), Some(2.0));
        assert_eq!(c.command_line(Path::new("x"), Path::new("y")), "printf '%s\\n' 'x' 'y' | wc -l");
    }

    #[test]
    fn prepared_image_is_downscaled() {
        let img = GrayImage::from_fn(100, 100, 1000, |x, y| {
            (0.5 + 0.4 * ((x as f64 * 0.6 + y as f64 * 0.2).sin())) as f32
        });
        let out = prepare_external_image(&img, 1.1, &ExtractParams::default()).unwrap();
        assert_eq!((out.width(), out.height(), out.ppi()), (55, 55, 550));
    }
}
