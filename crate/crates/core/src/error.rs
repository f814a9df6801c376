use alloc::boxed::Box;
use alloc::string::String;

use crate::fitting::FaceParams;

/// Errors produced by the core engine.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("topology mismatch: {0}")]
    Topology(String),
    #[error("{basis} basis: requested {requested} components but data rank is {rank}")]
    Rank {
        basis: &'static str,
        requested: usize,
        rank: usize,
    },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate loss: mask selects no pixels")]
    EmptyMask,
    #[error("degenerate loss: no landmarks with positive weight")]
    EmptyLandmarks,
    #[error("fit diverged at iteration {iteration} (non-finite objective)")]
    Divergence {
        iteration: usize,
        last_finite: Box<FaceParams>,
    },
    #[error("initial parameters cover no pixels of the target")]
    InitCoverage,
    #[error("no texel is visible in any view")]
    NoVisibility,
    #[error("texture has no valid texels to fill from")]
    NoValidTexels,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
