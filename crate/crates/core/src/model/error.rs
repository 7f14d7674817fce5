use thiserror::Error;

/// Reasons a DS POST (or one of its fields) is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("{0} missing")]
    MissingField(&'static str),
    #[error("png required")]
    PngRequired,
    #[error("undecodable png: {0}")]
    UndecodablePng(String),
    #[error("animated png not supported")]
    AnimatedPng,
    #[error("height exceeds 2× viewport ({height} > 2 × {viewport})")]
    HeightExceedsViewport { height: u32, viewport: u32 },
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("raster dimensions must be positive and match pixel data")]
    InvalidRaster,
    #[error("malformed multipart body: {0}")]
    Multipart(String),
}

impl ValidationError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ValidationError::InvalidField {
            field,
            reason: reason.into(),
        }
    }

    /// Stable machine-readable code for rejection responses.
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::MissingField(_) => "missing_field",
            ValidationError::PngRequired => "png_required",
            ValidationError::UndecodablePng(_) => "undecodable_png",
            ValidationError::AnimatedPng => "animated_png",
            ValidationError::HeightExceedsViewport { .. } => "height_exceeds_viewport",
            ValidationError::InvalidField { .. } => "invalid_field",
            ValidationError::InvalidRaster => "invalid_raster",
            ValidationError::Multipart(_) => "malformed_multipart",
        }
    }

    /// Field the error refers to, when there is one.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            ValidationError::MissingField(f) | ValidationError::InvalidField { field: f, .. } => Some(f),
            ValidationError::PngRequired
            | ValidationError::UndecodablePng(_)
            | ValidationError::AnimatedPng
            | ValidationError::HeightExceedsViewport { .. } => Some("image"),
            ValidationError::InvalidRaster | ValidationError::Multipart(_) => None,
        }
    }
}
