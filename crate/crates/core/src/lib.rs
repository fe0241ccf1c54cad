pub mod aging;
pub mod config;
pub mod enroll;
pub mod error;
pub mod eval;
pub mod extract;
pub mod imageio;
pub mod iptf;
pub mod matching;
pub mod minmap;
pub mod synth;
pub mod types;

pub use config::{Config, ImageParams};
pub use error::{Error, Result, TemplateError};
pub use types::*;
