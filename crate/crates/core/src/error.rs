use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("beta roots are degenerate (|beta_L| - |beta_R| = {gap:e})")]
    DegenerateRoots { gap: f64 },

    #[error("parameters are not in the gapless regime 0 < t1 < t2 (t1 = {t1}, t2 = {t2})")]
    NotGapless { t1: f64, t2: f64 },

    #[error("a beta root lies on the GBZ contour (distance {distance:e})")]
    PoleOnContour { distance: f64 },

    #[error("impurity factor diverges: |1 - dgamma * G_AA| = {magnitude:e}")]
    Resonance { magnitude: f64 },

    #[error("damping matrix is unstable (max Re lambda = {max_re:e})")]
    UnstableDamping { max_re: f64 },

    #[error("ill-conditioned solve: {0}")]
    IllConditioned(String),

    #[error("time step too large: dt * rho = {product} >= 1")]
    StepTooLarge { product: f64 },

    #[error("evolution not converged: {0}")]
    NotConverged(String),

    #[error("adaptive quadrature did not converge after {intervals} intervals (worst normalized error {worst:e})")]
    QuadratureNotConverged { intervals: usize, worst: f64 },

    #[error("too many divergent trajectories: discard fraction {fraction} at t = {time}")]
    TooManyDivergences { fraction: f64, time: f64 },

    #[error("negative density {value:e} at B site of cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("mean-field correlator blew up (|Delta|_F = {norm:e} at t = {time})")]
    Blowup { norm: f64, time: f64 },

    #[error("power-law fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("power-law fit needs positive data, got distance {distance}, value {value}")]
    NonPositiveValue { distance: f64, value: f64 },

    #[error("bulk fit window too small: {got} eligible points (need {needed})")]
    WindowTooSmall { needed: usize, got: usize },

    #[error("Schur decomposition failed to converge")]
    SchurFailed,
}
