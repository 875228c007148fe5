//! Python bindings for the core types and operations: characteristic roots,
//! the exact per-mode propagator, Lyapunov diagnostics and the decay-rate
//! helpers.  States cross the boundary as 10 complex numbers in the order
//! `rho, ux, uy, uz, Ex, Ey, Ez, Bx, By, Bz`.

use num_complex::Complex64 as C64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use emlab::lyapunov::KappaWeights;
use emlab::state::SpectralState;
use emlab::vec3::{CVec3, Vec3};

fn err<T>(r: emlab::Result<T>) -> PyResult<T> {
    r.map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Characteristic root triple of the transverse cubic at one wavenumber.
#[pyclass(name = "CharTriple", skip_from_py_object)]
#[derive(Clone)]
struct PyCharTriple {
    #[pyo3(get)]
    kmag: f64,
    #[pyo3(get)]
    sigma: f64,
    #[pyo3(get)]
    beta: f64,
    #[pyo3(get)]
    omega: f64,
}

#[pymethods]
impl PyCharTriple {
    /// Normalized cubic residual `|F(sigma)| / (1 + kmag^2)`.
    fn residual(&self) -> f64 {
        emlab::roots::eval_cubic(self.sigma, self.kmag).abs() / (1.0 + self.kmag * self.kmag)
    }

    fn __repr__(&self) -> String {
        format!(
            "CharTriple(kmag={}, sigma={}, beta={}, omega={})",
            self.kmag, self.sigma, self.beta, self.omega
        )
    }
}

#[pyfunction]
fn eval_cubic(chi: f64, kmag: f64) -> f64 {
    emlab::roots::eval_cubic(chi, kmag)
}

#[pyfunction]
fn solve_characteristic(kmag: f64) -> PyResult<PyCharTriple> {
    let t = err(emlab::roots::solve_characteristic(kmag))?;
    Ok(PyCharTriple { kmag: t.kmag, sigma: t.sigma, beta: t.beta, omega: t.omega })
}

#[pyfunction]
fn sigma_derivative(kmag: f64) -> PyResult<f64> {
    err(emlab::roots::sigma_derivative(kmag))
}

#[pyfunction]
fn dissipation_weight(kmag: f64) -> f64 {
    emlab::lyapunov::dissipation_weight(kmag)
}

#[pyfunction]
fn phi_sigma(sigma: f64, gamma: f64) -> PyResult<f64> {
    err(emlab::sim::phi_sigma(sigma, gamma))
}

/// Derivative-count helper of the decay estimates; `q` may be `math.inf`.
#[pyfunction]
fn decay_index(ell: f64, r: f64, q: f64) -> PyResult<u32> {
    err(emlab::decay::decay_index(ell, r, q))
}

fn state_from_parts(k: (f64, f64, f64), components: Vec<C64>) -> PyResult<SpectralState> {
    if components.len() != 10 {
        return Err(PyValueError::new_err("expected 10 complex components"));
    }
    let c = &components;
    Ok(SpectralState {
        k: Vec3::new(k.0, k.1, k.2),
        rho: c[0],
        u: CVec3([c[1], c[2], c[3]]),
        e: CVec3([c[4], c[5], c[6]]),
        b: CVec3([c[7], c[8], c[9]]),
    })
}

fn state_to_parts(st: &SpectralState) -> Vec<C64> {
    vec![
        st.rho, st.u.0[0], st.u.0[1], st.u.0[2], st.e.0[0], st.e.0[1], st.e.0[2], st.b.0[0],
        st.b.0[1], st.b.0[2],
    ]
}

/// Exact linear evolution of one compatible mode by time `t`.
#[pyfunction]
#[pyo3(signature = (t, k, components, gamma = 5.0 / 3.0))]
fn propagate(t: f64, k: (f64, f64, f64), components: Vec<C64>, gamma: f64) -> PyResult<Vec<C64>> {
    let st = state_from_parts(k, components)?;
    let out = err(emlab::propagator::propagate(t, &st, gamma))?;
    Ok(state_to_parts(&out))
}

/// Adaptive-integrator reference solution at the same interface.
#[pyfunction]
#[pyo3(signature = (t, k, components, gamma = 5.0 / 3.0, tol = 1e-10))]
fn integrate_linear(
    t: f64,
    k: (f64, f64, f64),
    components: Vec<C64>,
    gamma: f64,
    tol: f64,
) -> PyResult<Vec<C64>> {
    let st = state_from_parts(k, components)?;
    let out = err(emlab::oracle::integrate_linear_at(st.k, &st, &[t], tol, gamma))?;
    Ok(state_to_parts(&out[0]))
}

/// Value of the time-frequency Lyapunov functional.
#[pyfunction]
#[pyo3(signature = (k, components, kappa = (0.1, 0.01, 0.005), gamma = 5.0 / 3.0))]
fn lyapunov_value(
    k: (f64, f64, f64),
    components: Vec<C64>,
    kappa: (f64, f64, f64),
    gamma: f64,
) -> PyResult<f64> {
    let st = state_from_parts(k, components)?;
    let kw = KappaWeights { kappa1: kappa.0, kappa2: kappa.1, kappa3: kappa.2 };
    Ok(emlab::lyapunov::lyapunov_value(&st, &kw, gamma))
}

/// Gauss-law and divergence residuals of a mode: `(|ik.E + rho|, |k.B|)`.
#[pyfunction]
fn compat_residual(k: (f64, f64, f64), components: Vec<C64>) -> PyResult<(f64, f64)> {
    Ok(state_from_parts(k, components)?.compat_residual())
}

/// Least-squares slope of `log(norm)` against `log(1 + t)` inside a window;
/// returns `(exponent, r2, super_polynomial)`.
#[pyfunction]
fn fit_slope(
    times: Vec<f64>,
    norms: Vec<f64>,
    window: (f64, f64),
) -> PyResult<(f64, f64, bool)> {
    let fit = err(emlab::decay::fit_slope(&times, &norms, window))?;
    Ok((fit.exponent, fit.r2, fit.class == emlab::decay::DecayClass::SuperPolynomial))
}

#[pymodule]
fn emlab_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCharTriple>()?;
    m.add_function(wrap_pyfunction!(eval_cubic, m)?)?;
    m.add_function(wrap_pyfunction!(solve_characteristic, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(dissipation_weight, m)?)?;
    m.add_function(wrap_pyfunction!(phi_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(decay_index, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_linear, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_value, m)?)?;
    m.add_function(wrap_pyfunction!(compat_residual, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope, m)?)?;
    Ok(())
}
