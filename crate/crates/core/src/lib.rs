//! Numerical laboratory for the relaxed compressible electron fluid coupled to
//! Maxwell's equations over a neutralizing ion background.
//!
//! The linearized system is diagonal in Fourier space, which makes an *exact*
//! solution operator available mode by mode: the longitudinal block reduces to
//! a damped oscillator driven by the acoustic/plasma frequency, and the
//! transverse electromagnetic block is governed by the cubic
//! `F(x) = x^3 + x^2 + (1+|k|^2) x + |k|^2`.  The crate provides
//!
//! * [`roots`]: the characteristic root triple of `F` and its asymptotics,
//! * [`propagator`]: the exact per-mode solution operator,
//! * [`oracle`]: an independent adaptive Runge-Kutta integrator used as
//!   ground truth for the closed forms,
//! * [`lyapunov`]: the time-frequency Lyapunov functional, its dissipation
//!   inequality and pointwise exponential bound fitting,
//! * [`decay`]: L2 and sup-norm decay-rate measurement for analytic data,
//! * [`sim`]: a small-amplitude pseudo-spectral solver on a periodic box with
//!   the instant-energy functionals as diagnostics,
//! * [`cli`]: a configuration-driven experiment runner (binary `emlab`).

pub mod checks;
pub mod cli;
pub mod decay;
pub mod error;
pub mod fft;
pub mod lyapunov;
pub mod oracle;
pub mod propagator;
pub mod quadrature;
pub mod roots;
pub mod sim;
pub mod state;
pub mod util;
pub mod vec3;

pub use error::Error;
pub use roots::CharTriple;
pub use state::SpectralState;

/// Default adiabatic exponent (monatomic gas).
pub const GAMMA_DEFAULT: f64 = 5.0 / 3.0;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
