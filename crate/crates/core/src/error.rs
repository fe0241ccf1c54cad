use thiserror::Error;

/// Failures while decoding an IPTF template.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("bad magic: expected `IPTF`, found {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported template version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated {section}: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        section: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after template")]
    TrailingBytes(usize),
    #[error("invalid template: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("no same-thumb template pairs to compare")]
    NoComparablePairs,
    #[error("every matcher score is missing")]
    NoScores,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("every ground-truth minutia falls off the canvas")]
    OffCanvas,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
