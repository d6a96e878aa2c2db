//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SirpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("not a probability vector: {0}")]
    InvalidProbVector(String),

    #[error("not a Markov matrix: {0}")]
    InvalidMarkovMatrix(String),

    #[error("matrix is decomposable ({closed_classes} closed classes); unique invariant measure requires exactly one")]
    Decomposable { closed_classes: usize },

    #[error("matrix is reducible; operation requires an irreducible chain")]
    Reducible,

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("measure is not invariant for the chain (residual {residual:.3e})")]
    NotInvariant { residual: f64 },

    #[error("spectral gap underflow at beta = {beta}; shrink the grid (usable prefix has {usable} points)")]
    GapUnderflow { beta: f64, usable: usize },

    #[error("interaction matrix must be symmetric: U[{i}][{j}] != U[{j}][{i}]")]
    NotSymmetric { i: usize, j: usize },

    #[error("kernel construction failed at step {step}: {source}")]
    KernelAtStep {
        step: usize,
        #[source]
        source: Box<SirpError>,
    },

    #[error("zero row denominator in reinforcement kernel at row {row}")]
    ZeroRowDenominator { row: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),

    #[error("empty target set")]
    EmptyTarget,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SirpError>;
