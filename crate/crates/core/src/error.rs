use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("level text is empty")]
    EmptyLevel,
    #[error("ragged rows: row {row} has width {found}, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("unknown symbol {symbol:?} at ({row}, {col})")]
    UnknownSymbol { symbol: char, row: usize, col: usize },
    #[error("symbol {0:?} has no affordance mapping")]
    UnmappedSymbol(char),
    #[error("corpus contains no levels")]
    EmptyCorpus,
    #[error("duplicate domain id {0}")]
    DuplicateDomain(String),
    #[error("unknown domain id {0}")]
    UnknownDomain(String),
    #[error("invalid affordance entry for {symbol:?}: {reason}")]
    InvalidAffordance { symbol: String, reason: String },

    #[error("window {win_h}x{win_w} does not fit in {height}x{width}")]
    WindowTooLarge {
        win_h: usize,
        win_w: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid sketch symbol {0:?}")]
    InvalidSketchSymbol(char),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("segment is {found_h}x{found_w}, conditional model requires {expected_h}x{expected_w}")]
    DimensionViolation {
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },
    #[error("domain label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("no corpus window matches the 1x1 region at ({row}, {col})")]
    UnfillableCell { row: usize, col: usize },
    #[error("no fill corpora supplied")]
    NoCorpora,
    #[error("fill validation failed: {0}")]
    InvalidFill(String),

    #[error("grids differ in size: {0}x{1} vs {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
    #[error("non-linearity needs width >= 2, got {0}")]
    DegenerateWidth(usize),
    #[error("sample is empty")]
    EmptySample,
    #[error("need at least {needed} items, got {found}")]
    SampleTooSmall { needed: usize, found: usize },

    #[error("no trained model available for domain {0}")]
    MissingModel(String),
    #[error("fill subset is empty after excluding sketch domain {0}")]
    EmptySubsetAfterExclusion(String),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
