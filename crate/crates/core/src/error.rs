use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the field domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("non-finite field value near {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("no continuity modulus certified for rho = {rho}: the smallest lattice spacing already violates it")]
    NoModulus { rho: f64 },

    #[error("integration residual {residual} exceeds {limit} (step too large)")]
    StepTooLarge { residual: f64, limit: f64 },

    #[error("multi-flow too sparse: dist_dense = {dist_dense} exceeds cap {cap}")]
    SparseFamily { dist_dense: f64, cap: f64 },

    #[error("empty parameter subset")]
    EmptySubset,

    #[error("direction profile disagrees with the field on interval {interval}")]
    ProfileMismatch { interval: usize },

    #[error("graph would have {nodes} nodes, above the cap of {cap}")]
    GraphTooLarge { nodes: usize, cap: usize },

    #[error("target unreachable from source")]
    Unreachable,

    #[error("lambda schedule exhausted without a convergence or divergence verdict")]
    ScheduleTooShort,

    #[error("pair {first}–{second} has zero distance but different values")]
    DegeneratePair { first: usize, second: usize },

    #[error("no scheduled lambda reaches the requested Lipschitz threshold")]
    NeedSmallerLambda,

    #[error("empty domain")]
    EmptyDomain,

    #[error("empty radii set")]
    EmptyRadii,

    #[error("curves do not share their starting point")]
    DifferentStart,

    #[error("CFL condition violated: dt = {dt} > {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("test function support touches the domain boundary")]
    SupportLeak,

    #[error("lattices or time slices do not match")]
    LatticeMismatch,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
