use alloc::string::String;
use core::fmt;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A system size outside the range an operation supports.
    InvalidSize { what: &'static str, n: usize },
    /// Two lengths that must agree do not.
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// Invalid configuration value.
    Config(String),
    /// A value outside the mathematical domain of an operation.
    Domain(&'static str),
    /// Empty input where at least one element is required.
    Empty(&'static str),
    /// A sinusoidal position or learnable slot beyond what the model supports.
    ContextOverflow { position: usize, max: usize },
    /// NaN or infinity appeared in activations, gradients or parameters.
    NumericFailure {
        layer: Option<usize>,
        what: &'static str,
    },
    /// ψ(s) underflowed; the sample cannot be used for a local energy.
    DegenerateSample,
    /// ⟨m²⟩ = 0, the Binder cumulant is undefined.
    UndefinedCumulant,
    /// No pair of Binder curves changes sign on the shared grid.
    NoCrossing,
    /// Exact diagonalization beyond the supported size.
    SizeLimit { n: usize, max: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSize { what, n } => write!(f, "invalid system size {n} for {what}"),
            Error::Shape {
                what,
                expected,
                found,
            } => write!(f, "shape mismatch in {what}: expected {expected}, found {found}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::ContextOverflow { position, max } => {
                write!(f, "position {position} exceeds model context {max}")
            }
            Error::NumericFailure { layer: Some(l), what } => {
                write!(f, "non-finite value in {what} (layer {l})")
            }
            Error::NumericFailure { layer: None, what } => write!(f, "non-finite value in {what}"),
            Error::DegenerateSample => write!(f, "wave-function amplitude underflow"),
            Error::UndefinedCumulant => write!(f, "Binder cumulant undefined for <m^2> = 0"),
            Error::NoCrossing => write!(f, "no Binder-cumulant crossing found"),
            Error::SizeLimit { n, max } => {
                write!(f, "exact diagonalization limited to n <= {max}, got {n}")
            }
        }
    }
}

impl core::error::Error for Error {}
