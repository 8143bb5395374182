use core::fmt;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A distribution violated its construction invariants.
    InvalidDistribution(&'static str),
    /// Two distributions were required to share an atom grid but do not.
    AtomMismatch,
    /// `q` has zero mass where `p` has positive mass.
    AbsoluteContinuity { bin: usize },
    /// A mixing or decomposition proportion was outside its admissible range.
    EpsilonOutOfRange(f64),
    /// An exact decomposition needed clipping, so the decomposed loss is not defined.
    ClippedDecomposition,
    /// Cross entropy fed to the regularizer exceeded the configured bound.
    EntropyUnbounded { value: f64, bound: f64 },
    /// Entropy argument of the regularizer transform was negative.
    NegativeEntropy(f64),
    /// Dimensions of tables, tensors or batches disagree.
    ShapeMismatch { expected: usize, found: usize },
    /// An MDP violated its construction invariants.
    InvalidMdp(&'static str),
    /// State or action index out of range.
    InvalidStateAction { state: usize, action: usize },
    /// Cached activations do not belong to this network.
    CacheMismatch,
    /// An iterative solver hit its iteration cap.
    NonConvergence { iterations: usize },
    /// A configuration value was rejected.
    InvalidConfig(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDistribution(why) => write!(f, "invalid distribution: {why}"),
            Error::AtomMismatch => f.write_str("distributions do not share an atom grid"),
            Error::AbsoluteContinuity { bin } => {
                write!(f, "q has zero mass at bin {bin} where p is positive")
            }
            Error::EpsilonOutOfRange(e) => write!(f, "epsilon {e} out of range"),
            Error::ClippedDecomposition => {
                f.write_str("exact decomposition required clipping negative remainder mass")
            }
            Error::EntropyUnbounded { value, bound } => {
                write!(f, "cross entropy {value} exceeds bound {bound}")
            }
            Error::NegativeEntropy(h) => write!(f, "negative entropy argument {h}"),
            Error::ShapeMismatch { expected, found } => {
                write!(f, "shape mismatch: expected {expected}, found {found}")
            }
            Error::InvalidMdp(why) => write!(f, "invalid MDP: {why}"),
            Error::InvalidStateAction { state, action } => {
                write!(f, "invalid state/action pair ({state}, {action})")
            }
            Error::CacheMismatch => f.write_str("forward cache does not match network"),
            Error::NonConvergence { iterations } => {
                write!(f, "no convergence after {iterations} iterations")
            }
            Error::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
        }
    }
}

impl core::error::Error for Error {}
