use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest line {line}: {msg}")]
    Manifest { line: u64, msg: String },

    #[error("manifest line {line}: duplicate slide_id {slide_id:?}")]
    DuplicateSlide { line: u64, slide_id: String },

    #[error("slide {slide_id}: referenced file {} does not exist", path.display())]
    DanglingReference { slide_id: String, path: PathBuf },

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("slide {0}: empty slide")]
    EmptySlide(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch for {slide_id}: expected {expected}, got {got}")]
    DimensionMismatch {
        slide_id: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("vector too short for MinMax binarization (need at least 2 entries, got {0})")]
    TooShort(usize),

    #[error("empty bunch of barcodes")]
    EmptyBob,

    #[error("empty neighbor list for query {0}")]
    EmptyNeighbors(String),

    #[error("degenerate differences: paired differences have zero variance")]
    DegenerateDifferences,

    #[error("degenerate data: all values identical")]
    DegenerateData,

    #[error("identical component means")]
    IdenticalMeans,

    #[error("unknown slide {0}")]
    UnknownSlide(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage {stage} failed{}: {source}", slide_id.as_ref().map(|s| format!(" on slide {s}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        slide_id: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, slide_id: Option<&str>) -> Self {
        Error::Stage {
            stage,
            slide_id: slide_id.map(str::to_owned),
            source: Box::new(self),
        }
    }

    /// True for errors caused by the run configuration rather than the data.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
