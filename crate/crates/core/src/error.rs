use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rate matrix rejected: {0}")]
    InvalidModel(#[from] ModelDiagnostic),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("newick syntax error at byte {position}: {message}")]
    NewickSyntax { position: usize, message: String },

    #[error("tree shape error: {0}")]
    TreeShape(String),

    #[error("leaf label sets differ")]
    LeafSetMismatch,

    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("operation requires the symmetric (Potts) model")]
    UnsupportedModel,

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("dilution calibration failed: no l in 1..={l_max} satisfied the inequalities")]
    CalibrationFailed {
        l_max: usize,
        table: Vec<crate::asr::CalibrationRow>,
    },

    #[error("reconstruction failed at level {}: {}", .0.level, .0.reason)]
    Reconstruction(Box<crate::reconstruct::FailureRecord>),

    #[error("alignment format error on line {line}: {message}")]
    AlignmentFormat { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Reasons a user-supplied GTR rate matrix is rejected.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelDiagnostic {
    #[error("alphabet size {0} is below 2")]
    AlphabetTooSmall(usize),
    #[error("expected a {expected}x{expected} matrix and {expected} stationary weights")]
    ShapeMismatch { expected: usize },
    #[error("non-positive off-diagonal rate Q[{row}][{col}] = {value}")]
    NegativeRate { row: usize, col: usize, value: f64 },
    #[error("row {row} of Q sums to {sum}, not 0")]
    RowSum { row: usize, sum: f64 },
    #[error("stationary distribution invalid: {0}")]
    InvalidStationary(String),
    #[error("not reversible: pi[{i}]Q[{i}][{j}] = {lhs} but pi[{j}]Q[{j}][{i}] = {rhs}")]
    NotReversible {
        i: usize,
        j: usize,
        lhs: f64,
        rhs: f64,
    },
    #[error("second eigenvalue {0} is not negative")]
    Degenerate(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
