use alloc::boxed::Box;
use alloc::string::String;

use crate::optim::LambdaReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A grouped axis is not a multiple of the group size.
    #[error("shape error: {what} length {len} is not divisible by {group}")]
    NotGroupable {
        what: &'static str,
        len: usize,
        group: usize,
    },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("length mismatch in {op}: expected {expected}, found {found}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    /// A mask violates its structural constraint.
    #[error("format error: {0}")]
    InvalidMask(String),

    /// Compressed metadata is not a pair of distinct ascending indices.
    #[error("format error: group {group} has metadata indices ({lo}, {hi})")]
    InvalidMetadata { group: usize, lo: u8, hi: u8 },

    #[error("wrong operand direction for {op}")]
    WrongDirection { op: &'static str },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("no decay factor has a flip-rate ratio inside the feasible band")]
    NoFeasibleLambda(Box<LambdaReport>),
}
