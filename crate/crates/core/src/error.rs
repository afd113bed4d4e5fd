use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("symbol {symbol:?} is not in alphabet {alphabet:?}")]
    ForeignSymbol { symbol: char, alphabet: String },

    #[error("corrupt stream: pointer {pointer} at phrase {phrase}")]
    CorruptStream { phrase: usize, pointer: u64 },

    #[error("bit stream truncated after {consumed} bits")]
    Truncated { consumed: usize },

    #[error("enumeration infeasible: {states} states exceed cap {cap}")]
    EnumerationInfeasible { states: u128, cap: u64 },

    #[error("distortion kind `{0}` is not a function of the first-order joint type")]
    UnsupportedDistortion(&'static str),

    #[error("uncodable input: the distortion sphere around the source block is empty")]
    UncodableInput,

    #[error("capacity exhausted: no codeword within {draws} draws and witness search infeasible")]
    Capacity { draws: u64 },

    #[error("malformed index code: {0}")]
    MalformedIndex(String),

    #[error("index {index} exceeds codebook cap {cap}")]
    IndexOutOfRange { index: u64, cap: u64 },

    #[error("distortion level {level} is below the minimum achievable {min}")]
    Infeasible { level: f64, min: f64 },

    #[error("type-class member {member} cannot be covered by any reproduction block")]
    Uncoverable { member: String },

    #[error("invalid format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid inputs or configuration, as opposed
    /// to failures that happen while running a valid request.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::Precondition(_)
                | Error::LengthMismatch { .. }
                | Error::AlphabetMismatch(_)
                | Error::ForeignSymbol { .. }
                | Error::EnumerationInfeasible { .. }
                | Error::UnsupportedDistortion(_)
                | Error::Infeasible { .. }
                | Error::Format(_)
                | Error::Json(_)
        )
    }

    /// Short machine-readable tag for structured error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Precondition(_) => "precondition",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::AlphabetMismatch(_) => "alphabet_mismatch",
            Error::ForeignSymbol { .. } => "foreign_symbol",
            Error::CorruptStream { .. } => "corrupt_stream",
            Error::Truncated { .. } => "truncated",
            Error::EnumerationInfeasible { .. } => "enumeration_infeasible",
            Error::UnsupportedDistortion(_) => "unsupported_distortion",
            Error::UncodableInput => "uncodable_input",
            Error::Capacity { .. } => "capacity",
            Error::MalformedIndex(_) => "malformed_index",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::Infeasible { .. } => "infeasible",
            Error::Uncoverable { .. } => "uncoverable",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
