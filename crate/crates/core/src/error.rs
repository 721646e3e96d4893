//! Error types shared across the solver modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid too small: {nx}x{ny} (need at least 4x4 cells)")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("invalid domain extent lx={lx}, ly={ly}")]
    BadExtent { lx: f64, ly: f64 },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("right-hand side violates the zero-mean compatibility condition: mean={mean:e}")]
    IncompatibleRhs { mean: f64 },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("Poisson residual {residual:e} exceeds the solver tolerance {tol:e}")]
    PoissonResidual { residual: f64, tol: f64 },
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel parameter must be strictly positive: {name}={value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("kernel table is not even under index negation (offset ({di},{dj}): {fwd} vs {bwd})")]
    NotEven { di: i64, dj: i64, fwd: f64, bwd: f64 },
    #[error("kernel table at {path}: {reason}")]
    BadTable { path: String, reason: String },
    #[error("kernel quadrature produced a non-finite cell average at offset ({di},{dj})")]
    NonFiniteQuadrature { di: i64, dj: i64 },
    #[error("second moment of the kernel family diverges; no local-limit coefficient")]
    DivergentSecondMoment,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("potential parameters out of range: {0}")]
    BadPotential(String),
    #[error("mobility parameters out of range: {0}")]
    BadMobility(String),
    #[error("argument s={s} outside the open interval (-1,1) of a singular potential")]
    OutsideDomain { s: f64 },
    #[error("epsilon={eps} outside the admissible range (0, {eps0}]")]
    BadEpsilon { eps: f64, eps0: f64 },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("conjugate gradients did not converge within {iters} iterations (residual {residual:e}, target {target:e})")]
    CgStalled { iters: usize, residual: f64, target: f64 },
    #[error("time step dt={dt:e} violates the CFL guard; largest admissible dt is {suggested:e}")]
    CflViolation { dt: f64, suggested: f64 },
    #[error("chemical potential undefined: |phi| reaches {max_abs} within {delta:e} of the singularity; use the flux form")]
    SingularPotential { max_abs: f64, delta: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}
