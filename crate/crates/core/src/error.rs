//! Crate-wide error type. Variants mirror the failure modes of the
//! individual solvers so call sites can match on what actually went wrong.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unknown built-in system `{0}`")]
    UnknownSystem(String),

    #[error("eigenvalues {0} and {1} closer than the hyperbolicity gap tolerance")]
    HyperbolicityLoss(f64, f64),

    #[error("complex eigenvalues encountered (imaginary part {0:.3e})")]
    NonReal(f64),

    #[error("|l̂·r_{j}| = {value:.3e} below projection tolerance")]
    DegenerateProjection { j: usize, value: f64 },

    #[error("state leaves the δ2 ball (|u - base| = {0:.3e})")]
    OutOfBall(f64),

    #[error("finite-difference stencil leaves the validity ball")]
    StencilExitsBall,

    #[error("Newton iteration diverged at m = {m:.6e} (residual {residual:.3e})")]
    NewtonDivergence { m: f64, residual: f64 },

    #[error("Hugoniot continuation jumped branches near m = {0:.6e}")]
    BranchJump(f64),

    #[error("reduced flux affine over [{0:.6e}, {1:.6e}]: possible linear degeneracy")]
    HullDegeneracy(f64, f64),

    #[error("shock endpoints not on a common Hugoniot curve (residual {0:.3e})")]
    NotOnHugoniot(f64),

    #[error("shock speeds differ by {0:.3e}, beyond the coincidence tolerance")]
    SpeedsDiffer(f64),

    #[error("wave packet has zero strength")]
    ZeroStrength,

    #[error("Riemann solutions are not chained (mismatch {0:.3e})")]
    ChainMismatch(f64),

    #[error("interaction configuration does not match the requested case: {0}")]
    CaseMismatch(String),

    #[error("initial data total variation {tv:.3e} exceeds the budget {budget:.3e}")]
    TVBudgetExceeded { tv: f64, budget: f64 },

    #[error("speed perturbation budget ε = {0:.3e} exhausted while resolving ties")]
    PerturbationBudgetExceeded(f64),

    #[error("more than two fronts meet after perturbation; this is a scheme bug")]
    NonBinaryCollision,

    #[error("event cap of {0} interactions exceeded")]
    EventCapExceeded(usize),

    #[error("time {0:.6e} outside the recorded trajectory")]
    OutOfTimeRange(f64),

    #[error("graph evaluation requested exactly at interaction time {0:.6e}")]
    InteractionTime(f64),

    #[error("CFL number {0} violates the stability bound")]
    CFLViolation(f64),

    #[error("entropy residual requires a conservative system")]
    NotConservative,

    #[error("{0}")]
    Invalid(String),
}
