use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least 8 correspondences, got {got}")]
    TooFewPoints { got: usize },

    #[error("degenerate point configuration: design matrix has numerical rank {rank}")]
    DegenerateConfiguration { rank: usize },

    #[error("SVD failed to converge")]
    SvdFailure,

    #[error("no valid pixels left after masking")]
    NoValidPixels,

    #[error("occlusion mask excludes every pixel")]
    EmptyMask,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("bad magic bytes: not a .flo file")]
    BadMagic,

    #[error("truncated file: expected {expected} bytes of flow data, got {got}")]
    TruncatedFile { expected: usize, got: usize },

    #[error("unsupported image format: {0}")]
    BadFormat(String),

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Stable machine-readable code, one token per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::DegenerateConfiguration { .. } => "DegenerateConfiguration",
            Error::SvdFailure => "SvdFailure",
            Error::NoValidPixels => "NoValidPixels",
            Error::EmptyMask => "EmptyMask",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::BadMagic => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::BadFormat(_) => "BadFormat",
            Error::BadConfig(_) => "BadConfig",
            Error::Io(_) => "Io",
            Error::Image(_) => "Image",
        }
    }
}
