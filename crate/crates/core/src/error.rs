use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{what} = {value} is out of range {range}")]
    Range {
        what: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("forward cache is stale (cache generation {cache}, parameters generation {params})")]
    StaleCache { cache: u64, params: u64 },
    #[error("instance of size {rows}x{cols} exceeds exact solver limit {limit}")]
    Scale { rows: usize, cols: usize, limit: usize },
    #[error("marginals carry different mass: source {source_mass}, target {target_mass}")]
    Marginal { source_mass: f64, target_mass: f64 },
    #[error("sinkhorn did not converge after {iterations} iterations (marginal residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("cost matrix violates the O(K) transport precondition: {0}")]
    Precondition(String),
    #[error("support mismatch at index {index}: P > 0 where Q = 0")]
    Support { index: usize },
    #[error("classification head column {column} has zero norm")]
    DegenerateHead { column: usize },
    #[error("degenerate threshold state: {0}")]
    DegenerateState(&'static str),
    #[error("class {class} has {available} labeled examples, {needed} needed")]
    Sampling {
        class: usize,
        available: usize,
        needed: usize,
    },
    #[error("IDX format error: {0}")]
    Format(String),
    #[error("IDX payload truncated: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
}

pub type Result<T> = core::result::Result<T, Error>;
