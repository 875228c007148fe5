//! Independent ground truth for the closed-form propagator: an embedded
//! Dormand-Prince 5(4) integration of the frequency-space linear system,
//! carried in real arithmetic (each complex component split into re/im).
//!
//! The full-system state is augmented with one extra component accumulating
//! `integral |u|^2 dt`, so the gamma-weighted energy identity
//! `|U(t)|_g^2 + 2 integral |u|^2 = |U(0)|_g^2` can be checked exactly along
//! every trajectory.

use crate::state::SpectralState;
use crate::vec3::Vec3;
use crate::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 50_000_000;

/// Allowed oracle tolerance range.
pub const TOL_RANGE: (f64, f64) = (1e-13, 1e-6);

fn check_tol(tol: f64) -> Result<()> {
    if !(tol >= TOL_RANGE.0 && tol <= TOL_RANGE.1) {
        return Err(Error::invalid(format!("oracle tol {tol} outside [1e-13, 1e-6]")));
    }
    Ok(())
}

/// Dense-output record of one integration: accepted nodes with derivatives,
/// sampled in between by cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct Dense<const N: usize> {
    pub times: Vec<f64>,
    pub values: Vec<[f64; N]>,
    pub derivs: Vec<[f64; N]>,
}

impl<const N: usize> Dense<N> {
    pub fn last(&self) -> &[f64; N] {
        self.values.last().expect("non-empty trajectory")
    }

    /// Cubic Hermite interpolation at `t` within the covered range.
    pub fn sample(&self, t: f64) -> [f64; N] {
        let n = self.times.len();
        assert!(n >= 1);
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let idx = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.times[idx], self.times[idx + 1]);
        let h = t1 - t0;
        let th = (t - t0) / h;
        let th2 = th * th;
        let th3 = th2 * th;
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = th3 - 2.0 * th2 + th;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = th3 - th2;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = h00 * self.values[idx][i]
                + h10 * h * self.derivs[idx][i]
                + h01 * self.values[idx + 1][i]
                + h11 * h * self.derivs[idx + 1][i];
        }
        out
    }
}

/// Integrates `y' = f(t, y)` from `(0, y0)` to `t_end`, recording every
/// accepted step.  If `forced` is non-empty, steps land exactly on those
/// times as well.
fn dopri5<const N: usize>(
    f: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    y0: [f64; N],
    t_end: f64,
    tol: f64,
    forced: &[f64],
) -> Result<Dense<N>> {
    let mut times = vec![0.0];
    let mut values = vec![y0];
    let mut derivs = vec![f(0.0, &y0)];
    if t_end == 0.0 {
        return Ok(Dense { times, values, derivs });
    }

    let mut scale0 = 0.0f64;
    for v in y0.iter() {
        scale0 = scale0.max(v.abs());
    }
    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = derivs[0];
    let mut h = (tol.powf(0.2) / (1.0 + norm_inf(&k1) / (1.0 + scale0))).min(0.05 * t_end).max(1e-10);
    let mut forced_iter = forced.iter().copied().filter(|&ft| ft > 0.0 && ft < t_end).peekable();

    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let mut hit_forced = false;
        let mut h_eff = h;
        if let Some(&ft) = forced_iter.peek() {
            if t + h_eff >= ft - 1e-14 {
                h_eff = ft - t;
                hit_forced = true;
            }
        }
        let mut at_end = false;
        if t + h_eff >= t_end {
            h_eff = t_end - t;
            at_end = true;
            hit_forced = false;
        }
        if h_eff <= f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h: h_eff });
        }

        // stages
        let mut ks = [[0.0; N]; 7];
        ks[0] = k1;
        for s in 1..7 {
            let mut ys = y;
            for j in 0..s {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h_eff * a * ks[j][i];
                    }
                }
            }
            ks[s] = f(t + C[s] * h_eff, &ys);
        }
        let mut y5 = y;
        for (s, k) in ks.iter().enumerate() {
            if B5[s] != 0.0 {
                for i in 0..N {
                    y5[i] += h_eff * B5[s] * k[i];
                }
            }
        }
        // embedded error estimate, measured per unit step so that `tol`
        // bounds the accumulated (global) error over an order-one horizon
        let mut err = 0.0f64;
        for i in 0..N {
            let mut e = 0.0;
            for (s, k) in ks.iter().enumerate() {
                if ERR[s] != 0.0 {
                    e += ERR[s] * k[i];
                }
            }
            let sc = tol + tol * y[i].abs().max(y5[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / N as f64).sqrt();

        if err <= 1.0 {
            t += h_eff;
            y = y5;
            k1 = ks[6]; // FSAL
            times.push(t);
            values.push(y);
            derivs.push(k1);
            if hit_forced {
                forced_iter.next();
            }
            if at_end {
                break;
            }
        }
        // error-per-unit-step scales like h^4
        let fac = (0.9 * err.powf(-0.25)).clamp(0.2, 5.0);
        h = (h_eff * fac).max(1e-16);
    }
    Ok(Dense { times, values, derivs })
}

fn norm_inf<const N: usize>(y: &[f64; N]) -> f64 {
    y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Right-hand side of the full linear system on 20 reals plus the
/// accumulated dissipation `integral |u|^2`.
fn linear_rhs(k: Vec3, gamma: f64, y: &[f64; 21]) -> [f64; 21] {
    let st = SpectralState::from_flat(k, &y[..20]);
    let mut dy = [0.0; 21];
    // rho' = -i k . u
    let ku = st.u.dot(k.as_complex());
    write_c(&mut dy, 0, num_complex::Complex64::new(ku.im, -ku.re));
    for j in 0..3 {
        // u' = -i gamma k rho - E - u
        let igkr = num_complex::Complex64::new(0.0, -gamma * k.0[j]) * st.rho;
        write_c(&mut dy, 1 + j, igkr - st.e.0[j] - st.u.0[j]);
    }
    let ikxb = crate::vec3::ik_cross(k, st.b);
    let ikxe = crate::vec3::ik_cross(k, st.e);
    for j in 0..3 {
        // E' = i k x B + u ;  B' = -i k x E
        write_c(&mut dy, 4 + j, ikxb.0[j] + st.u.0[j]);
        write_c(&mut dy, 7 + j, -ikxe.0[j]);
    }
    dy[20] = st.u.norm_sq();
    dy
}

fn write_c(dy: &mut [f64; 21], slot: usize, v: num_complex::Complex64) {
    dy[2 * slot] = v.re;
    dy[2 * slot + 1] = v.im;
}

/// Trajectory of the full linear system at one wavevector.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub k: Vec3,
    pub gamma: f64,
    pub tol: f64,
    dense: Dense<21>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.dense.times
    }

    pub fn state_at_node(&self, i: usize) -> SpectralState {
        SpectralState::from_flat(self.k, &self.dense.values[i][..20])
    }

    /// Accumulated `integral_0^t |u|^2` at node `i`.
    pub fn dissipated_at_node(&self, i: usize) -> f64 {
        self.dense.values[i][20]
    }

    pub fn last_state(&self) -> SpectralState {
        SpectralState::from_flat(self.k, &self.dense.last()[..20])
    }

    /// Cubic Hermite dense output.
    pub fn sample(&self, t: f64) -> SpectralState {
        SpectralState::from_flat(self.k, &self.dense.sample(t)[..20])
    }
}

/// Integrates the full linear system to `t_end`.
pub fn integrate_linear(
    k: Vec3,
    state0: &SpectralState,
    t_end: f64,
    tol: f64,
    gamma: f64,
) -> Result<Trajectory> {
    check_tol(tol)?;
    let mut y0 = [0.0; 21];
    y0[..20].copy_from_slice(&state0.to_flat());
    let f = move |_t: f64, y: &[f64; 21]| linear_rhs(k, gamma, y);
    let dense = dopri5(&f, y0, t_end, tol, &[])?;
    Ok(Trajectory { k, gamma, tol, dense })
}

/// Integrates the full linear system landing exactly on each requested time;
/// returns the states at those times (plus `t = 0` if requested).
pub fn integrate_linear_at(
    k: Vec3,
    state0: &SpectralState,
    times: &[f64],
    tol: f64,
    gamma: f64,
) -> Result<Vec<SpectralState>> {
    check_tol(tol)?;
    let t_end = times.iter().cloned().fold(0.0f64, f64::max);
    let mut y0 = [0.0; 21];
    y0[..20].copy_from_slice(&state0.to_flat());
    let f = move |_t: f64, y: &[f64; 21]| linear_rhs(k, gamma, y);
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dense = dopri5(&f, y0, t_end, tol, &sorted)?;
    Ok(times
        .iter()
        .map(|&t| {
            // forced times are exact nodes; binary search then read off
            match dense.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
                Ok(i) => SpectralState::from_flat(k, &dense.values[i][..20]),
                Err(_) => SpectralState::from_flat(k, &dense.sample(t)[..20]),
            }
        })
        .collect())
}

/// Transverse subsystem trajectory: 9 complex components `(M1, M2, M3)`.
#[derive(Debug, Clone)]
pub struct TransverseTrajectory {
    pub k: Vec3,
    pub tol: f64,
    pub dense: Dense<18>,
}

fn transverse_rhs(k: Vec3, y: &[f64; 18]) -> [f64; 18] {
    use crate::vec3::{ik_cross, CVec3};
    let c = |i: usize| num_complex::Complex64::new(y[2 * i], y[2 * i + 1]);
    let m1 = CVec3([c(0), c(1), c(2)]);
    let m2 = CVec3([c(3), c(4), c(5)]);
    let m3 = CVec3([c(6), c(7), c(8)]);
    let d1 = -m1 - m2;
    let d2 = m1 + ik_cross(k, m3);
    let d3 = -ik_cross(k, m2);
    let mut dy = [0.0; 18];
    for j in 0..3 {
        dy[2 * j] = d1.0[j].re;
        dy[2 * j + 1] = d1.0[j].im;
        dy[6 + 2 * j] = d2.0[j].re;
        dy[6 + 2 * j + 1] = d2.0[j].im;
        dy[12 + 2 * j] = d3.0[j].re;
        dy[12 + 2 * j + 1] = d3.0[j].im;
    }
    dy
}

pub fn transverse_to_flat(m: &crate::propagator::TransverseTriple) -> [f64; 18] {
    let mut y = [0.0; 18];
    for j in 0..3 {
        y[2 * j] = m.m1.0[j].re;
        y[2 * j + 1] = m.m1.0[j].im;
        y[6 + 2 * j] = m.m2.0[j].re;
        y[6 + 2 * j + 1] = m.m2.0[j].im;
        y[12 + 2 * j] = m.m3.0[j].re;
        y[12 + 2 * j + 1] = m.m3.0[j].im;
    }
    y
}

pub fn transverse_from_flat(y: &[f64; 18]) -> crate::propagator::TransverseTriple {
    use crate::vec3::CVec3;
    let c = |i: usize| num_complex::Complex64::new(y[2 * i], y[2 * i + 1]);
    crate::propagator::TransverseTriple {
        m1: CVec3([c(0), c(1), c(2)]),
        m2: CVec3([c(3), c(4), c(5)]),
        m3: CVec3([c(6), c(7), c(8)]),
    }
}

/// Integrates the 9-complex transverse subsystem.
pub fn integrate_transverse(
    k: Vec3,
    m0: &crate::propagator::TransverseTriple,
    t_end: f64,
    tol: f64,
) -> Result<TransverseTrajectory> {
    check_tol(tol)?;
    let y0 = transverse_to_flat(m0);
    let f = move |_t: f64, y: &[f64; 18]| transverse_rhs(k, y);
    let dense = dopri5(&f, y0, t_end, tol, &[])?;
    Ok(TransverseTrajectory { k, tol, dense })
}

/// Transverse integration landing exactly on the requested times.
pub fn integrate_transverse_at(
    k: Vec3,
    m0: &crate::propagator::TransverseTriple,
    times: &[f64],
    tol: f64,
) -> Result<Vec<crate::propagator::TransverseTriple>> {
    check_tol(tol)?;
    let t_end = times.iter().cloned().fold(0.0f64, f64::max);
    let y0 = transverse_to_flat(m0);
    let f = move |_t: f64, y: &[f64; 18]| transverse_rhs(k, y);
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dense = dopri5(&f, y0, t_end, tol, &sorted)?;
    Ok(times
        .iter()
        .map(|&t| match dense.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => transverse_from_flat(&dense.values[i]),
            Err(_) => transverse_from_flat(&dense.sample(t)),
        })
        .collect())
}
