use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A tree configuration violates its invariants.
    InvalidTree(&'static str),
    LayerOutOfRange { layer: usize, num_layers: usize },
    /// Target layer of a descendant query must lie strictly below the node.
    NotBelow { node_layer: usize, target: usize },
    IndexOutOfRange { layer: usize, index: u64 },
    /// Index arithmetic would exceed `u64`.
    Overflow,
    EmptyPhotonSeries,
    InvalidPhotonSeries(&'static str),
    InvalidParameter(&'static str),
    EmptyInput,
    LengthMismatch { expected: usize, found: usize },
    NonPositiveWeight { index: usize },
    NonFinite { what: &'static str, index: usize },
    TooFewPaths { found: usize },
    TreeMismatch,
    StateSpaceTooLarge(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidTree(msg) => write!(f, "invalid tree configuration: {msg}"),
            Error::LayerOutOfRange { layer, num_layers } => {
                write!(f, "layer {layer} out of range 1..={num_layers}")
            }
            Error::NotBelow { node_layer, target } => write!(
                f,
                "target layer {target} is not below node layer {node_layer}"
            ),
            Error::IndexOutOfRange { layer, index } => {
                write!(f, "node index {index} out of range in layer {layer}")
            }
            Error::Overflow => f.write_str("tree index arithmetic overflowed u64"),
            Error::EmptyPhotonSeries => f.write_str("photon series is empty"),
            Error::InvalidPhotonSeries(msg) => write!(f, "invalid photon series: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::EmptyInput => f.write_str("empty input"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::NonPositiveWeight { index } => {
                write!(f, "weight at position {index} is not positive")
            }
            Error::NonFinite { what, index } => {
                write!(f, "non-finite {what} at position {index}")
            }
            Error::TooFewPaths { found } => {
                write!(f, "at least 2 sample paths are required, got {found}")
            }
            Error::TreeMismatch => {
                f.write_str("strategy tree does not match the evaluator's tree")
            }
            Error::StateSpaceTooLarge(msg) => write!(f, "state space too large: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
