//! Pseudo-spectral solver checks: a brute-force convolution oracle for the
//! quadratic sources, stepping regressions, and snapshot format sanity.

mod common;

use emlab::fft::Grid;
use emlab::sim::{
    self, nonlinear_sources, transform_to_symmetric, GridField, InitConfig, Simulation,
};
use emlab::lyapunov::KappaWeights;
use num_complex::Complex64 as C64;

/// Circular convolution of DFT spectra: the transform of the pointwise
/// product, computed as a direct O(N^6) sum.
fn convolve(grid: &Grid, f: &[C64], g: &[C64]) -> Vec<C64> {
    let n = grid.n as i64;
    let n3 = grid.len();
    let idx = |ix: i64, iy: i64, iz: i64| -> usize {
        let w = |v: i64| ((v % n + n) % n) as usize;
        (w(ix) * grid.n + w(iy)) * grid.n + w(iz)
    };
    let mut out = vec![C64::new(0.0, 0.0); n3];
    for pf in 0..n3 {
        let (px, py, pz) = (
            (pf / (grid.n * grid.n)) as i64,
            ((pf / grid.n) % grid.n) as i64,
            (pf % grid.n) as i64,
        );
        if f[pf].norm_sqr() == 0.0 {
            continue;
        }
        for qf in 0..n3 {
            if g[qf].norm_sqr() == 0.0 {
                continue;
            }
            let (qx, qy, qz) = (
                (qf / (grid.n * grid.n)) as i64,
                ((qf / grid.n) % grid.n) as i64,
                (qf % grid.n) as i64,
            );
            out[idx(px + qx, py + qy, pz + qz)] += f[pf] * g[qf];
        }
    }
    let scale = 1.0 / n3 as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

fn single_mode_field() -> GridField {
    // gamma = 3 makes the pressure factor exactly 3 rho, so every source is
    // quadratic and the convolution oracle is exact
    let n = 8;
    let l = 8.0;
    let mut field = GridField::zero_perturbation(n, l, 3.0);
    let unit = 2.0 * std::f64::consts::PI / l;
    for flat in 0..field.rho.len() {
        let ix = flat / (n * n);
        let iy = (flat / n) % n;
        let iz = flat % n;
        let (x, y, z) = (
            l * ix as f64 / n as f64,
            l * iy as f64 / n as f64,
            l * iz as f64 / n as f64,
        );
        field.rho[flat] = 0.01 * (unit * x).cos();
        field.u[0][flat] = 0.02 * (unit * x).sin();
        field.u[1][flat] = 0.015 * (unit * y).cos();
        field.u[2][flat] = -0.01 * (unit * z).sin();
        field.b[0][flat] = 0.005 * (unit * y).cos();
        field.b[1][flat] = 0.01 * (unit * z).sin();
        field.b[2][flat] = 0.02 * (unit * x).cos();
    }
    field
}

#[test]
fn sources_match_the_convolution_oracle() {
    let field = single_mode_field();
    let grid = Grid::new(field.n_grid, field.box_len);
    let (g1, g2, g3) = nonlinear_sources(&field).unwrap();

    // independent spectral route: direct circular convolutions
    let rho = grid.fft3_real(&field.rho);
    let u: Vec<Vec<C64>> = (0..3).map(|j| grid.fft3_real(&field.u[j])).collect();
    let b: Vec<Vec<C64>> = (0..3).map(|j| grid.fft3_real(&field.b[j])).collect();
    let du = |j: usize, i: usize| -> Vec<C64> {
        let mut d = u[j].clone();
        for (flat, v) in d.iter_mut().enumerate() {
            *v *= C64::new(0.0, grid.wavevector(flat).0[i]);
        }
        d
    };
    let drho = |i: usize| -> Vec<C64> {
        let mut d = rho.clone();
        for (flat, v) in d.iter_mut().enumerate() {
            *v *= C64::new(0.0, grid.wavevector(flat).0[i]);
        }
        d
    };

    let mut want_g3 = Vec::new();
    for j in 0..3 {
        want_g3.push(convolve(&grid, &rho, &u[j]));
    }
    let mut want_g1 = vec![C64::new(0.0, 0.0); grid.len()];
    for (flat, v) in want_g1.iter_mut().enumerate() {
        let k = grid.wavevector(flat);
        for j in 0..3 {
            *v -= C64::new(0.0, k.0[j]) * want_g3[j][flat];
        }
    }
    let mut want_g2 = Vec::new();
    for j in 0..3 {
        let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
        for i in 0..3 {
            let adv = convolve(&grid, &u[i], &du(j, i));
            for (a, v) in acc.iter_mut().zip(adv) {
                *a -= v;
            }
        }
        let (a, bb) = ((j + 1) % 3, (j + 2) % 3);
        let uxb = convolve(&grid, &u[a], &b[bb]);
        let bxu = convolve(&grid, &u[bb], &b[a]);
        for x in 0..grid.len() {
            *(&mut acc[x]) -= uxb[x] - bxu[x];
        }
        // pressure at gamma = 3: -3 rho grad rho
        let press = convolve(&grid, &rho, &drho(j));
        for (a, v) in acc.iter_mut().zip(press) {
            *a -= v * 3.0;
        }
        want_g2.push(acc);
    }

    let check = |got_phys: &[f64], want_hat: &[C64], label: &str| {
        let got_hat = grid.fft3_real(&got_phys.to_vec());
        let scale = want_hat.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1e-30);
        for flat in 0..grid.len() {
            let d = (got_hat[flat] - want_hat[flat]).norm();
            assert!(d < 1e-12 * grid.len() as f64 * scale, "{label} mode {flat}: {d:.2e}");
        }
    };
    check(&g1, &want_g1, "g1");
    for j in 0..3 {
        check(&g2[j], &want_g2[j], "g2");
        check(&g3[j], &want_g3[j], "g3");
    }
}

#[test]
fn short_run_preserves_constraints_and_monotone_energy() {
    let cfg = InitConfig { n_grid: 16, seed: 2, ..InitConfig::default() };
    let field = sim::random_compatible_field(&cfg).unwrap();
    let mut s = Simulation::from_field(&field).unwrap();
    let dt = s.suggested_dt();
    let kappa = KappaWeights::default();
    let e0 = s.energy_report(2, &kappa).unwrap();
    let mut prev = e0.full_energy;
    for _ in 0..100 {
        s.step(dt).unwrap();
        let rep = s.energy_report(2, &kappa).unwrap();
        assert!(
            rep.full_energy <= prev + 1e-10 * e0.full_energy,
            "energy increased: {prev} -> {}",
            rep.full_energy
        );
        prev = rep.full_energy;
    }
    let (g, d) = s.constraint_residual();
    assert!(g < 1e-10 && d < 1e-10, "residuals {g:.2e} {d:.2e}");
}

#[test]
fn evolved_state_still_satisfies_the_symmetric_formulation() {
    // evolving the primitive system and transforming must leave the
    // symmetric-system equations satisfied on the dealias band
    let cfg = InitConfig { n_grid: 16, seed: 8, ..InitConfig::default() };
    let field = sim::random_compatible_field(&cfg).unwrap();
    let mut s = Simulation::from_field(&field).unwrap();
    let dt = s.suggested_dt();
    for _ in 0..30 {
        s.step(dt).unwrap();
    }
    let evolved = s.to_field();
    let res = sim::formulation_residuals(&evolved).unwrap();
    for (i, r) in res.iter().enumerate() {
        assert!(*r <= 1e-6, "equation {i} residual {r:.3e} after evolution");
    }
}

#[test]
fn linear_regime_matches_the_exact_propagator() {
    let err = emlab::checks::linear_regime_crosscheck(4).unwrap();
    assert!(err <= 1e-10, "excited-mode deviation {err:.2e}");
}

#[test]
fn strang_step_converges_at_second_order() {
    let order = emlab::checks::convergence_order(6).unwrap();
    assert!(order >= 2.0, "observed order {order:.3}");
}

#[test]
fn energy_report_equivalence_with_sobolev_norm() {
    // full energy within the sampled equivalence band of the H^N norm
    let cfg = InitConfig { n_grid: 16, amplitude: 5e-2, seed: 9, ..InitConfig::default() };
    let field = sim::random_compatible_field(&cfg).unwrap();
    let sym = transform_to_symmetric(&field).unwrap();
    let kappa = KappaWeights::default();
    let rep = sim::energy_functionals(&sym, 2, &kappa);
    let h_n: f64 = rep.sobolev_norms.iter().sum();
    assert!(rep.full_energy > 0.5 * h_n && rep.full_energy < 1.5 * h_n);
    assert!(rep.dissipation > 0.0 && rep.high_order_dissipation > 0.0);
}

#[test]
fn snapshot_layout_round_trips() {
    let cfg = InitConfig { n_grid: 8, seed: 3, ..InitConfig::default() };
    let field = sim::random_compatible_field(&cfg).unwrap();
    let mut buf = Vec::new();
    sim::write_snapshot(&field, &mut buf).unwrap();
    assert_eq!(&buf[0..4], b"EMGF");
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    assert_eq!(n, 8);
    let header = 4 + 4 + 8 + 8 + 8 + 8;
    assert_eq!(buf.len(), header + 10 * n * n * n * 8);
    // first payload double is rho[0]
    let rho0 = f64::from_le_bytes(buf[header..header + 8].try_into().unwrap());
    assert_eq!(rho0, field.rho[0]);
}
