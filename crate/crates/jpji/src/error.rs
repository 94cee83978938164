use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no datasets supplied")]
    EmptyInput,
    #[error("subject {subject} has {found} voxels, expected {expected}")]
    MismatchedVoxelCount { subject: usize, expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFiniteData(String),
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cumulant order {0} is outside 2..=4")]
    OrderOutOfRange(usize),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("need at least 2 samples, got {0}")]
    DegenerateSampleCount(usize),
    #[error("covariance is singular at tolerance")]
    SingularCovariance,
    #[error("{0} points cannot form {1} clusters")]
    TooFewPoints(usize, usize),
    #[error("each sample needs at least 2 values")]
    InsufficientSamples,
    #[error("FDR level must lie in (0, 1), got {0}")]
    InvalidQ(f64),
    #[error("requested order {requested} exceeds rank {rank}")]
    OrderExceedsRank { requested: usize, rank: usize },
    #[error("extracted source is identically zero")]
    ZeroSource,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("mixing matrix is rank deficient after resampling")]
    RankDeficientMixing,
    #[error("could not place a source map satisfying the independence constraints")]
    SourcePlacement,
    #[error("a group needs at least 2 subjects")]
    GroupTooSmall,
    #[error("feature bounds are inverted: lower {lower} >= upper {upper}")]
    UnseparableFeatures { lower: f64, upper: f64 },
    #[error("inconsistent label: {0}")]
    InvalidLabel(String),
}
