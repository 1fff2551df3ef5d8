use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("dimension mismatch: {what} ({left_w}x{left_h} vs {right_w}x{right_h})")]
    DimensionMismatch {
        what: String,
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid pixel value {value} at index {index}")]
    PixelRange { index: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unmatched files: images without masks [{}], masks without images [{}]",
        .images_only.join(", "), .masks_only.join(", "))]
    OrphanFiles {
        images_only: Vec<String>,
        masks_only: Vec<String>,
    },

    #[error("sample `{id}`: image is {image_w}x{image_h} but mask is {mask_w}x{mask_h}")]
    SampleMismatch {
        id: String,
        image_w: usize,
        image_h: usize,
        mask_w: usize,
        mask_h: usize,
    },

    #[error("{path}: unsupported image format ({reason})")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("target mean {target} is unreachable: achievable range is [{min}, {max}]")]
    Unreachable { target: f64, min: f64, max: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("region {w}x{h} at ({x}, {y}) does not fit inside {image_w}x{image_h}")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        image_w: usize,
        image_h: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
