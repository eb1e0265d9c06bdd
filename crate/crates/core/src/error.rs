use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid rule set: {0}")]
    InvalidRuleSet(String),

    /// A message normalizer vanished: the evidence gives zero mass to every
    /// production consistent with the node.
    #[error("degenerate message at layer {layer}, node {node}")]
    DegenerateMessage { layer: usize, node: usize },

    #[error("instance too large for exhaustive enumeration ({derivations} derivations > {limit})")]
    TooLarge { derivations: f64, limit: f64 },

    #[error("parameters are not in the bistable regime (F'(1) = {slope} >= 1)")]
    NotBistable { slope: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
