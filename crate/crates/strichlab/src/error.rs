use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("decay violation: boundary mass fraction {fraction:.3e} exceeds tolerance {tolerance:.1e}")]
    DecayViolation { fraction: f64, tolerance: f64 },
    #[error("band violation: Nyquist-band mass fraction {fraction:.3e} exceeds tolerance {tolerance:.1e}")]
    BandViolation { fraction: f64, tolerance: f64 },
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time {t} outside horizon {horizon}")]
    HorizonViolation { t: f64, horizon: f64 },
    #[error("step budget too small: {steps} < {required}")]
    StepBudget { steps: usize, required: usize },
    #[error("time {t} within {distance} of a focal time")]
    FocalTime { t: f64, distance: f64 },
    #[error("split-step did not self-certify: last halving changed the result by {change:.3e}")]
    NonConvergent { change: f64 },
    #[error("pair ({p}, {r}) is not admissible in dimension {n}")]
    NotAdmissible { n: usize, p: f64, r: f64 },
    #[error("unknown potential '{0}'")]
    UnknownPotential(String),
    #[error("hessian certificate failed: |V''| reaches {observed} > claimed {claimed}")]
    Certificate { observed: f64, claimed: f64 },
    #[error("closed-form and spectral window paths disagree by {deviation:.3e}")]
    ConventionMismatch { deviation: f64 },
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
