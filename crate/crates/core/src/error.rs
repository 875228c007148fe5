use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("root bracketing failed on (-1, 0) at |k| = {kmag}")]
    RootBracketing { kmag: f64 },

    #[error("operation requires |k| > 0 (use the zero-mode evolution)")]
    ZeroWavevector,

    #[error("state violates the compatibility constraints (residual {residual:.3e})")]
    IncompatibleState { residual: f64 },

    #[error("density collapse: min(1 + rho) = {min_density:.3e}")]
    DensityCollapse { min_density: f64 },

    #[error("time step {dt:.3e} exceeds the stability limit {dt_max:.3e}")]
    CflViolation { dt: f64, dt_max: f64 },

    #[error("quadrature not converged: doubling radial nodes changed the result by {change:.3e}")]
    QuadratureNotConverged { change: f64 },

    #[error("degenerate fit window: {reason}")]
    DegenerateFitWindow { reason: String },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("invalid parameter: {what}")]
    InvalidParameter { what: String },
}

impl Error {
    pub fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidParameter { what: what.into() }
    }
}
