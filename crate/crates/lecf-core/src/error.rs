//! Crate-wide error type.

use core::fmt;

/// Errors raised by geometry, attention, aggregation and training code.
///
/// Variants are grouped by how a caller should treat them: `Usage*` means
/// the caller violated a precondition, `Domain*`/`Degenerate*` mean the
/// inputs are numerically or structurally invalid, `Data*` means the input
/// data itself is inconsistent.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two vectors passed to a binary operation have different lengths.
    DimensionMismatch { expected: usize, got: usize },
    /// A space-axis index is outside `1..=n`.
    AxisOutOfRange { axis: usize, dim: usize },
    /// A point failed the hyperboloid membership check.
    OffManifold { deviation: f64 },
    /// A rotation block is not orthogonal within tolerance.
    NotOrthogonal { deviation: f64 },
    /// All aggregation weights are zero (or no weight is strictly positive).
    DegenerateWeights,
    /// The Lorentz norm of an aggregate vanished; no renormalization exists.
    ZeroLorentzNorm,
    /// A KG edge references a relation id outside the vocabulary.
    UnknownRelation { relation: usize },
    /// An operation reserved for an ablation variant was invoked without it.
    AblationFlagRequired { flag: &'static str },
    /// A configuration value violates its invariant.
    InvalidConfig { what: &'static str },
    /// Structurally inconsistent input data.
    Data { what: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::AxisOutOfRange { axis, dim } => {
                write!(f, "space axis {axis} out of range 1..={dim}")
            }
            Error::OffManifold { deviation } => {
                write!(f, "point off the hyperboloid (deviation {deviation:e})")
            }
            Error::NotOrthogonal { deviation } => {
                write!(f, "rotation block not orthogonal (deviation {deviation:e})")
            }
            Error::DegenerateWeights => write!(f, "all aggregation weights are zero"),
            Error::ZeroLorentzNorm => write!(f, "aggregate has zero Lorentz norm"),
            Error::UnknownRelation { relation } => {
                write!(f, "unknown relation id {relation}")
            }
            Error::AblationFlagRequired { flag } => {
                write!(f, "operation requires ablation flag `{flag}`")
            }
            Error::InvalidConfig { what } => write!(f, "invalid configuration: {what}"),
            Error::Data { what } => write!(f, "inconsistent data: {what}"),
        }
    }
}

impl Error {
    /// True for errors caused by caller misuse rather than bad data.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::AxisOutOfRange { .. }
                | Error::AblationFlagRequired { .. }
                | Error::InvalidConfig { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
