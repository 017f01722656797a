use thiserror::Error;

use crate::projections::ProjectionReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad bounds: need 0 < beta <= alpha, got alpha={alpha}, beta={beta}")]
    BadBounds { alpha: f64, beta: f64 },

    #[error("bad rank: r={r} must lie in 1..={max}")]
    BadRank { r: usize, max: usize },

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("non-positive entry {value} at observed cell ({i}, {j})")]
    NonPositiveEntryAtObservation { i: usize, j: usize, value: f64 },

    #[error("parameter must be strictly positive, got {0}")]
    NonPositiveParameter(f64),

    #[error("non-finite value at ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("observation ({i}, {j}) is outside a {d1}x{d2} matrix")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        d1: usize,
        d2: usize,
    },

    #[error("duplicate observation at ({i}, {j})")]
    DuplicateObservation { i: usize, j: usize },

    #[error("nuclear-norm radius must be positive, got {0}")]
    BadRadius(f64),

    #[error("threshold tau must be nonnegative, got {0}")]
    BadTau(f64),

    #[error("singular value decomposition did not converge")]
    SvdFailure,

    #[error("alternating projection stopped after {} iterations with gap {}", .0.iterations, .0.final_gap)]
    NoConvergence(Box<ProjectionReport>),

    #[error("invalid solver configuration: {0}")]
    BadConfig(String),

    #[error("backtracking pushed L to {0:e} without satisfying the majorization test")]
    BacktrackOverflow(f64),

    #[error("at least one observation is required")]
    NoObservations,

    #[error("rank {0} cannot host a non-constant matrix; need r >= 2 when beta < alpha")]
    RankInfeasible(usize),

    #[error("random factor product is constant; cannot rescale")]
    DegenerateRange,

    #[error("expected sample count m={m} must satisfy 0 < m <= {cells}")]
    BadM { m: f64, cells: usize },

    #[error("non-positive intensity {value} at ({i}, {j})")]
    NonPositiveIntensity { i: usize, j: usize, value: f64 },

    #[error("patch {patch_h}x{patch_w} does not tile image {image_h}x{image_w}")]
    IndivisibleLayout {
        image_h: usize,
        image_w: usize,
        patch_h: usize,
        patch_w: usize,
    },

    #[error("bound regime invalid: {0}")]
    InvalidRegime(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("pixel value {0} cannot be stored in the target format")]
    PixelOutOfRange(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the environment (files, parsing) rather than of
    /// the numerical inputs.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::CorruptFile(_) | Error::UnsupportedFormat(_)
        )
    }

    /// True for failures raised while an iterative solver was running.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SvdFailure | Error::NoConvergence(_) | Error::BacktrackOverflow(_)
        )
    }
}
