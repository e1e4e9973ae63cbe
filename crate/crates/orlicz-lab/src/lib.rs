//! IO companion for the `orlicz-core` laboratory: textual descriptors,
//! field and measure file formats, problem and suite manifests, report
//! rendering, and the builtin instances the shipped suite uses.

pub mod descriptor;
pub mod fieldfile;
pub mod instances;
pub mod manifest;
pub mod render;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("core error: {0}")]
    Core(orlicz_core::Error),
    #[error("bad file format: {0}")]
    Format(String),
}

impl From<orlicz_core::Error> for LabError {
    fn from(e: orlicz_core::Error) -> Self {
        LabError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
