//! Acceptance checks: each function runs one numbered criterion end to end
//! and reports a pass/fail line.  The CLI `--check` flag and the acceptance
//! test suite both dispatch here.

use std::time::Instant;

use rayon::prelude::*;

use crate::decay::{self, Component, DecayBench, DecayClass, GaussianParams};
use crate::lyapunov::{self, KappaWeights, ModulusHistory};
use crate::oracle;
use crate::propagator;
use crate::roots::{eval_cubic, sigma_derivative, solve_characteristic};
use crate::sim::{self, InitConfig, Simulation};
use crate::util::log_spaced;
use crate::vec3::Vec3;
use crate::Result;

#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckOutcome {
    pub criterion: usize,
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub details: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {} ({}): {} ({:.2} s) - {}",
            self.criterion,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.details
        )
    }
}

fn outcome(criterion: usize, name: &str, start: Instant, passed: bool, details: String) -> CheckOutcome {
    CheckOutcome { criterion, name: name.into(), passed, seconds: start.elapsed().as_secs_f64(), details }
}

/// Criterion 1: root-lemma property sweep over `10^3` log-spaced wavenumbers.
pub fn check_roots_lemma() -> Result<CheckOutcome> {
    let start = Instant::now();
    let grid = log_spaced(1000, 1e-3, 1e3);
    let mut passed = true;
    let mut why = String::new();
    let mut max_residual = 0.0f64;
    let mut max_reconstruction = 0.0f64;
    let mut prev_sigma = f64::INFINITY;
    let omega_floor = 6f64.sqrt() / 3.0;

    for &k in &grid {
        let t = solve_characteristic(k)?;
        if !(t.sigma > -1.0 && t.sigma < 0.0) {
            passed = false;
            why = format!("sigma out of (-1,0) at |k|={k}");
            break;
        }
        if !(t.beta > -0.5 && t.beta < 0.0) {
            passed = false;
            why = format!("beta out of (-1/2,0) at |k|={k}");
            break;
        }
        if !(t.omega > omega_floor) {
            passed = false;
            why = format!("omega below sqrt(6)/3 at |k|={k}");
            break;
        }
        if !(t.sigma < prev_sigma) {
            passed = false;
            why = format!("sigma not strictly decreasing at |k|={k}");
            break;
        }
        prev_sigma = t.sigma;
        max_residual = max_residual.max(t.residual());

        // roots must reconstruct the cubic coefficients (1, 1, 1+k^2, k^2)
        let k2 = k * k;
        let c2 = -(t.sigma + 2.0 * t.beta);
        let c1 = 2.0 * t.sigma * t.beta + t.beta * t.beta + t.omega * t.omega;
        let c0 = -t.sigma * (t.beta * t.beta + t.omega * t.omega);
        let rec = (c2 - 1.0)
            .abs()
            .max((c1 - (1.0 + k2)).abs() / (1.0 + k2))
            .max((c0 - k2).abs() / k2);
        max_reconstruction = max_reconstruction.max(rec);
    }
    if passed && max_residual >= 1e-12 {
        passed = false;
        why = format!("max residual {max_residual:.2e} >= 1e-12");
    }
    if passed && max_reconstruction >= 1e-10 {
        passed = false;
        why = format!("max reconstruction error {max_reconstruction:.2e} >= 1e-10");
    }
    // asymptotic tails
    if passed {
        for &k in &[1e-3, 3e-3, 1e-2] {
            let t = solve_characteristic(k)?;
            if (t.sigma + k * k).abs() > 2.0 * k.powi(6) {
                passed = false;
                why = format!("small-k expansion violated at |k|={k}");
            }
        }
        for &k in &[1e2, 3e2, 1e3] {
            let t = solve_characteristic(k)?;
            let scaled = (t.sigma + 1.0) * k * k;
            if !(0.9..=1.0).contains(&scaled) {
                passed = false;
                why = format!("large-k expansion violated at |k|={k}: (1+sigma)k^2={scaled}");
            }
        }
        let d = sigma_derivative(1.0)?;
        if !(d < 0.0) {
            passed = false;
            why = "sigma' not negative at |k|=1".into();
        }
        if eval_cubic(0.0, 2.5) != 6.25 {
            passed = false;
            why = "F(0) != |k|^2".into();
        }
    }
    let details = if passed {
        format!("1000 modes, max residual {max_residual:.2e}, max reconstruction {max_reconstruction:.2e}")
    } else {
        why
    };
    Ok(outcome(1, "root lemma suite", start, passed, details))
}

/// Criterion 2: propagator equals the adaptive oracle on random cases.
pub fn check_propagator_oracle(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let gammas = [1.4, 5.0 / 3.0, 2.0];
    let cases: Vec<(usize, f64)> = (0..100).map(|i| (i, gammas[i % 3])).collect();
    let results: Vec<Result<(f64, f64)>> = cases
        .par_iter()
        .map(|&(i, gamma)| -> Result<(f64, f64)> {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let kmag = (1e-3f64.ln() + (1e2f64.ln() - 1e-3f64.ln()) * rng.random::<f64>()).exp();
            let st = lyapunov::random_state(&mut rng, kmag, true);
            let t = 10.0 * rng.random::<f64>();

            let prop = propagator::propagate(t, &st, gamma)?;
            let orac = oracle::integrate_linear_at(st.k, &st, &[t], 1e-10, gamma)?[0];
            let rel = prop.sub(&orac).norm() / st.norm();

            let ident = propagator::propagate(0.0, &st, gamma)?.sub(&st).norm() / st.norm();
            Ok((rel, ident))
        })
        .collect();
    let mut max_rel = 0.0f64;
    let mut max_ident = 0.0f64;
    for r in results {
        let (rel, ident) = r?;
        max_rel = max_rel.max(rel);
        max_ident = max_ident.max(ident);
    }
    let passed = max_rel <= 1e-8 && max_ident <= 1e-10;
    Ok(outcome(
        2,
        "propagator-oracle equivalence",
        start,
        passed,
        format!("100 cases, max relative error {max_rel:.2e}, t=0 identity {max_ident:.2e}"),
    ))
}

/// Criterion 3: equivalence constants and the dissipation inequality for the
/// default weights.
pub fn check_lyapunov(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let kappa = KappaWeights::default();
    let scan = lyapunov::equivalence_scan(&kappa, crate::GAMMA_DEFAULT, 10_000, (1e-3, 1e3), seed);
    // Finite-difference dE/dt with the fixed 1e-3 step limits the usable
    // wavenumber range; the weight w(|k|) peaks at |k| = 1 and both regimes
    // are inside [1e-3, 10].
    let modes = log_spaced(200, 1e-3, 10.0);
    let report = lyapunov::verify_dissipation(&kappa, &modes, crate::GAMMA_DEFAULT, 5.0, seed)?;
    let passed = scan.c_low > 0.0 && report.lambda_fitted > 0.0 && kappa.is_admissible();
    Ok(outcome(
        3,
        "Lyapunov suite",
        start,
        passed,
        format!(
            "c_low {:.4}, c_high {:.4} over {} samples; lambda_fitted {:.4} over {} modes ({} FD violations)",
            scan.c_low, scan.c_high, scan.samples, report.lambda_fitted, report.modes, report.violations
        ),
    ))
}

/// Criterion 4: fitted pointwise bound with a clean held-out validation set.
pub fn check_pointwise_bound(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let n_total = 400;
    let times: Vec<f64> = {
        let mut t = log_spaced(30, 0.05, 10.0);
        t.insert(0, 0.0);
        t
    };
    let histories: Vec<ModulusHistory> = (0..n_total)
        .into_par_iter()
        .map(|i| -> Result<ModulusHistory> {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                seed ^ (i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d),
            );
            let kmag = (1e-3f64.ln() + (1e2f64.ln() - 1e-3f64.ln()) * rng.random::<f64>()).exp();
            let st = lyapunov::random_state(&mut rng, kmag, true);
            let traj = oracle::integrate_linear(st.k, &st, 10.0, 1e-8, crate::GAMMA_DEFAULT)?;
            Ok(ModulusHistory::from_trajectory(&traj, &times))
        })
        .collect::<Result<Vec<_>>>()?;
    let train: Vec<ModulusHistory> = histories.iter().step_by(2).cloned().collect();
    let validate: Vec<ModulusHistory> = histories.iter().skip(1).step_by(2).cloned().collect();
    let fit = lyapunov::fit_pointwise_bound(&train, &validate);
    let passed = fit.lambda > 0.0 && fit.c >= 1.0 && fit.max_violation <= 0.0;
    Ok(outcome(
        4,
        "pointwise bound",
        start,
        passed,
        format!(
            "C {:.3}, lambda {:.4}, validation max excess {:.3e} over {} held-out trajectories",
            fit.c, fit.lambda, fit.max_violation, fit.validation_trajectories
        ),
    ))
}

/// Measured decay exponents and targets of criterion 5.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DecayRateReport {
    pub name: String,
    pub exponent: f64,
    pub r2: f64,
    pub target: Option<(f64, f64)>,
    pub class: DecayClass,
    pub pass: bool,
}

/// Criterion 5: linear decay rates for Gaussian data at desk scale.
pub fn check_decay_rates(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let window = (10.0, 500.0);
    let times = log_spaced(40, 8.0, 520.0);

    let generic = DecayBench::new(decay::make_gaussian_data(GaussianParams { seed, ..GaussianParams::default() })?, crate::GAMMA_DEFAULT);
    let series_generic = generic.series(&times)?;
    let zero_rho = DecayBench::new(
        decay::make_gaussian_data(GaussianParams::zero_density(seed))?,
        crate::GAMMA_DEFAULT,
    );
    let series_zero = zero_rho.series(&times)?;

    let pick = |series: &[decay::NormSample], comp: Component, linf: bool| -> Vec<f64> {
        series
            .iter()
            .map(|s| if linf { s.linf[comp.index()] } else { s.l2[comp.index()] })
            .collect()
    };

    let mut reports = Vec::new();
    let mut judge = |name: &str,
                     times: &[f64],
                     norms: Vec<f64>,
                     target: Option<(f64, f64)>,
                     want_super: bool|
     -> Result<bool> {
        let fit = decay::fit_slope(times, &norms, window)?;
        let pass = if want_super {
            fit.class == DecayClass::SuperPolynomial
        } else if let Some((center, tol)) = target {
            fit.class == DecayClass::Algebraic && (fit.exponent - center).abs() <= tol
        } else {
            true
        };
        reports.push(DecayRateReport {
            name: name.into(),
            exponent: fit.exponent,
            r2: fit.r2,
            target,
            class: fit.class,
            pass,
        });
        Ok(pass)
    };

    let mut passed = true;
    passed &= judge("rho L2 (super-polynomial)", &times, pick(&series_generic, Component::Rho, false), None, true)?;
    passed &= judge("B L2", &times, pick(&series_generic, Component::B, false), Some((-0.75, 0.10)), false)?;
    passed &= judge("E L2", &times, pick(&series_generic, Component::E, false), Some((-1.25, 0.10)), false)?;
    passed &= judge("u L2 (rho0 = 0)", &times, pick(&series_zero, Component::U, false), Some((-1.25, 0.10)), false)?;
    passed &= judge("B Linf bound", &times, pick(&series_generic, Component::B, true), Some((-1.50, 0.15)), false)?;
    passed &= judge("E Linf bound", &times, pick(&series_generic, Component::E, true), Some((-2.00, 0.15)), false)?;
    // reported, not asserted: the u branch with nonzero initial density
    judge("u L2 (generic, reported)", &times, pick(&series_generic, Component::U, false), None, false)?;

    // monotone refinement: the B slope moves toward -3/4 as t_min grows
    let b_norms = pick(&series_generic, Component::B, false);
    let mut trend = Vec::new();
    for &t_min in &[10.0, 20.0, 50.0] {
        let fit = decay::fit_slope(&times, &b_norms, (t_min, 500.0))?;
        trend.push((t_min, fit.exponent));
    }
    let toward = (trend[2].1 + 0.75).abs() <= (trend[0].1 + 0.75).abs() + 5e-3;
    passed &= toward;

    let detail_fits: Vec<String> = reports
        .iter()
        .map(|r| format!("{}: {:.3} (r2 {:.4}{})", r.name, r.exponent, r.r2, if r.pass { "" } else { " FAIL" }))
        .collect();
    let details = format!(
        "{}; refinement trend {:?}",
        detail_fits.join("; "),
        trend.iter().map(|t| (t.0, (t.1 * 1e3).round() / 1e3)).collect::<Vec<_>>()
    );
    Ok(outcome(5, "linear decay rates", start, passed, details))
}

/// Criterion 6: the derivative-index helper on 20 enumerated cases.
pub fn check_decay_index() -> Result<CheckOutcome> {
    let start = Instant::now();
    let inf = f64::INFINITY;
    let cases: [(f64, f64, f64, u32); 20] = [
        (0.0, 2.0, 2.0, 0),
        (1.0, 2.0, 2.0, 1),
        (2.0, 2.0, 2.0, 2),
        (3.0, 2.0, 2.0, 3),
        (0.5, 2.0, 2.0, 1),
        (1.5, 2.0, 2.0, 2),
        (0.0, 1.0, 2.0, 2),
        (0.25, 1.0, 2.0, 2),
        (1.0, 1.0, 2.0, 3),
        (2.0, 1.0, 2.0, 4),
        (0.0, 1.0, inf, 4),
        (0.5, 1.0, inf, 4),
        (1.0, 1.0, inf, 5),
        (2.0, 1.0, inf, 6),
        (3.0, 1.0, inf, 7),
        (0.0, 2.0, inf, 2),
        (1.0, 2.0, inf, 3),
        (0.0, 1.5, 2.0, 1),
        (1.0, 1.5, 2.0, 2),
        (1.0, 2.0, 4.0, 2),
    ];
    let mut passed = true;
    let mut bad = String::new();
    for &(ell, r, q, want) in &cases {
        let got = decay::decay_index(ell, r, q)?;
        if got != want {
            passed = false;
            bad = format!("index({ell},{r},{q}) = {got}, want {want}");
            break;
        }
    }
    let details = if passed { "20 cases, both branches".into() } else { bad };
    Ok(outcome(6, "decay index table", start, passed, details))
}

/// Criterion 7: nonlinear run properties at `32^3`.
pub fn check_nonlinear(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let kappa = KappaWeights::default();
    let n_order = 2;

    let cfg = InitConfig { seed, ..InitConfig::default() };
    let field = sim::random_compatible_field(&cfg)?;
    let mut s = Simulation::from_field(&field)?;
    let dt = s.suggested_dt();
    let (g0, d0) = s.constraint_residual();
    let e0 = s.energy_report(n_order, &kappa)?;

    let steps = 1000;
    let mut monotone = true;
    let mut worst_increase = 0.0f64;
    let mut prev = e0.clone();
    let mut diss_sum = 0.0;
    let mut lambda_discrete = f64::INFINITY;
    for _ in 0..steps {
        diss_sum += prev.dissipation * dt;
        s.step(dt)?;
        let rep = s.energy_report(n_order, &kappa)?;
        let increase = rep.full_energy - prev.full_energy;
        if increase > 1e-10 * e0.full_energy {
            monotone = false;
            worst_increase = worst_increase.max(increase / e0.full_energy);
        }
        if diss_sum > 0.0 {
            lambda_discrete = lambda_discrete.min((e0.full_energy - rep.full_energy) / diss_sum);
        }
        prev = rep;
    }
    let (g1, d1) = s.constraint_residual();
    let residual_growth = (g1 - g0).max(d1 - d0).max(0.0);

    // linear-regime cross-check: a single excited mode pair at amplitude 1e-8
    // matches per-mode exact propagation
    let cross_err = linear_regime_crosscheck(seed)?;

    // dt-halving self-convergence on a short horizon
    let order = convergence_order(seed)?;

    let passed = residual_growth <= 1e-8
        && monotone
        && lambda_discrete > 0.0
        && cross_err <= 1e-10
        && order >= 2.0;
    Ok(outcome(
        7,
        "nonlinear run",
        start,
        passed,
        format!(
            "residual growth {residual_growth:.2e}, monotone {monotone} (worst relative increase {worst_increase:.2e}), discrete lambda {lambda_discrete:.3e}, linear-regime error {cross_err:.2e}, order {order:.2}"
        ),
    ))
}

/// Runs the full stepping machinery at amplitude `1e-8` on one excited mode
/// pair and compares the excited modes against the exact propagator.
pub fn linear_regime_crosscheck(seed: u64) -> Result<f64> {
    use rand::SeedableRng;
    let cfg = InitConfig { n_grid: 16, seed, ..InitConfig::default() };
    let grid = crate::fft::Grid::new(cfg.n_grid, cfg.box_len);
    let n3 = grid.len();
    let spec = vec![num_complex::Complex64::new(0.0, 0.0); 10 * n3];
    let mut sim0 = Simulation::from_spectral(grid.clone(), cfg.gamma, 0.0, spec.clone())?;

    // excite mode m = (1, 2, 0) and its conjugate partner
    let n = cfg.n_grid;
    let flat = grid.idx(1, 2, 0);
    let flat_conj = grid.idx(n - 1, n - 2, 0);
    let k = grid.wavevector(flat);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let amp = 1e-8;
    let st = lyapunov::random_state(&mut rng, k.norm(), true);
    // re-aim the random state at the lattice wavevector direction
    let st = realign_state(&st, k).scaled(num_complex::Complex64::new(amp, 0.0));
    drop(spec);
    sim0.set_mode(flat, &st);
    sim0.set_mode(flat_conj, &conj_state(&st, grid.wavevector(flat_conj)));

    let dt = sim0.suggested_dt();
    let n_steps = 10;
    let mut s = sim0;
    for _ in 0..n_steps {
        s.step(dt)?;
    }
    let got = s.mode(flat);
    let want = propagator::propagate(n_steps as f64 * dt, &st, cfg.gamma)?;
    Ok(got.sub(&want).norm() / st.norm())
}

fn realign_state(st: &crate::state::SpectralState, k: Vec3) -> crate::state::SpectralState {
    // rebuild compatibility against the new wavevector
    let kt = k.unit();
    let e = st.e;
    crate::state::SpectralState {
        k,
        rho: -crate::vec3::ik_dot(k, e),
        u: st.u,
        e,
        b: st.b.perp_to(kt),
    }
}

fn conj_state(st: &crate::state::SpectralState, k_neg: Vec3) -> crate::state::SpectralState {
    use crate::vec3::CVec3;
    let c = |z: num_complex::Complex64| z.conj();
    crate::state::SpectralState {
        k: k_neg,
        rho: c(st.rho),
        u: CVec3([c(st.u.0[0]), c(st.u.0[1]), c(st.u.0[2])]),
        e: CVec3([c(st.e.0[0]), c(st.e.0[1]), c(st.e.0[2])]),
        b: CVec3([c(st.b.0[0]), c(st.b.0[1]), c(st.b.0[2])]),
    }
}

/// Richardson self-convergence order of the Strang step.
pub fn convergence_order(seed: u64) -> Result<f64> {
    let cfg = InitConfig { n_grid: 16, amplitude: 1e-2, seed, ..InitConfig::default() };
    let field = sim::random_compatible_field(&cfg)?;
    let base = Simulation::from_field(&field)?;
    let dt0 = base.suggested_dt();
    let n_steps = 8;

    let run = |dt: f64, steps: usize| -> Result<Vec<f64>> {
        let mut s = Simulation::from_field(&field)?;
        for _ in 0..steps {
            s.step(dt)?;
        }
        Ok((0..s.grid.len()).flat_map(|flat| s.mode(flat).to_flat()).collect())
    };
    let a = run(dt0, n_steps)?;
    let b = run(dt0 / 2.0, 2 * n_steps)?;
    let c = run(dt0 / 4.0, 4 * n_steps)?;
    let diff = |x: &[f64], y: &[f64]| -> f64 {
        x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    };
    let d1 = diff(&a, &b);
    let d2 = diff(&b, &c);
    Ok((d1 / d2).log2())
}

/// Runs every criterion (excluding the byte-determinism check, which runs
/// the CLI binary and lives with the acceptance tests).
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_roots_lemma()?,
        check_propagator_oracle(seed)?,
        check_lyapunov(seed)?,
        check_pointwise_bound(seed)?,
        check_decay_rates(seed)?,
        check_decay_index()?,
        check_nonlinear(seed)?,
    ])
}
