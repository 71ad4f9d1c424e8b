use std::path::PathBuf;

/// Unified error type for the whole pipeline.
///
/// Every variant maps to a stable machine-readable code (see [`Error::code`])
/// so CLI consumers can dispatch on failures without parsing prose.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// No block of the image passed the variance threshold during ROI
    /// segmentation; the print carries no usable ridge area.
    #[error("no image block passed the variance threshold")]
    EmptyRoi,

    /// A pixel operation needed the full 8-neighborhood but the pixel sits on
    /// the raster border (or outside it).
    #[error("pixel ({x}, {y}) is not strictly interior to a {width}x{height} raster")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    /// A ridge could not be traced far enough to estimate a direction.
    #[error("ridge at ({x}, {y}) traceable for fewer than 3 steps")]
    TruncatedRidge { x: u32, y: u32 },

    /// Neighbor distances need at least four minutiae on the partial.
    #[error("{count} minutiae on the partial; need at least 4")]
    TooFewMinutiae { count: usize },

    /// The partial produced fewer good-quality feature tuples than the
    /// enrollment floor.
    #[error("{good} good-quality tuples; enrollment needs at least {min}")]
    NotEnrollable { good: usize, min: usize },

    /// A match was requested against a template with no tuples at all.
    #[error("template has no feature tuples")]
    EmptyTemplate,

    /// The crop grid cannot be placed on the source image.
    #[error("crop spec {rows}x{cols} of {crop_w}x{crop_h} does not fit a {width}x{height} image")]
    SpecTooLarge {
        rows: u32,
        cols: u32,
        crop_w: u32,
        crop_h: u32,
        width: usize,
        height: usize,
    },

    /// A template file failed schema or invariant validation.
    #[error("corrupt template {path}: {reason}")]
    CorruptTemplate { path: PathBuf, reason: String },

    /// Rate computation was handed an empty score list.
    #[error("score list is empty")]
    EmptyScoreList,

    /// A synthetic-print spec violates its own placement rules.
    #[error("infeasible synthesis spec: {0}")]
    SpecInfeasible(String),

    /// Bad configuration file or out-of-range parameter.
    #[error("config: {0}")]
    Config(String),

    /// Image decode/encode failure.
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable machine-readable code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyRoi => "EmptyRoi",
            Error::OutOfBounds { .. } => "OutOfBounds",
            Error::TruncatedRidge { .. } => "TruncatedRidge",
            Error::TooFewMinutiae { .. } => "TooFewMinutiae",
            Error::NotEnrollable { .. } => "NotEnrollable",
            Error::EmptyTemplate => "EmptyTemplate",
            Error::SpecTooLarge { .. } => "SpecTooLarge",
            Error::CorruptTemplate { .. } => "CorruptTemplate",
            Error::EmptyScoreList => "EmptyScoreList",
            Error::SpecInfeasible(_) => "SpecInfeasible",
            Error::Config(_) => "Config",
            Error::Image { .. } => "Image",
            Error::Io { .. } => "Io",
            Error::Json { .. } => "Json",
        }
    }

    /// Wrap an I/O error with the path it concerns.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap a JSON (de)serialization error with the file it concerns.
    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
