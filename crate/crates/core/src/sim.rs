//! Small-amplitude pseudo-spectral solver for the full nonlinear system on a
//! periodic box,
//!
//! ```text
//! d/dt rho + div u = -div(rho u)
//! d/dt u + gamma grad rho + E + u = -u.grad u - u x B - gamma[(1+rho)^{gamma-2}-1] grad rho
//! d/dt E - curl B - u = rho u
//! d/dt B + curl E = 0,          div E = -rho,  div B = 0,
//! ```
//!
//! advanced by Strang splitting: exact linear propagation per torus mode
//! (half step), an explicit midpoint step on the nonlinear sources (full
//! step), then another linear half step.  Constraints are re-projected after
//! every step: `rho_hat <- -i k . E_hat` and `B_hat <- (I - kt kt) B_hat`.
//!
//! Spatial derivatives are spectral; products are pointwise on 2/3-rule
//! dealiased fields, which keeps the state band-limited for all time.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::HashMap;

use crate::fft::Grid;
use crate::lyapunov::KappaWeights;
use crate::propagator::{self};
use crate::roots::{solve_characteristic, CharTriple};
use crate::state::SpectralState;
use crate::util::pairwise_sum;
use crate::vec3::{CVec3, Vec3};
use crate::{Error, Result};

/// Real-space fields `[rho, u, E, B]` on a periodic lattice.
#[derive(Debug, Clone)]
pub struct GridField {
    pub n_grid: usize,
    pub box_len: f64,
    pub time: f64,
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub u: [Vec<f64>; 3],
    pub e: [Vec<f64>; 3],
    pub b: [Vec<f64>; 3],
}

impl GridField {
    pub fn zero_perturbation(n_grid: usize, box_len: f64, gamma: f64) -> GridField {
        let len = n_grid * n_grid * n_grid;
        GridField {
            n_grid,
            box_len,
            time: 0.0,
            gamma,
            rho: vec![0.0; len],
            u: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            e: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            b: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
        }
    }

    /// Largest pointwise amplitude over all components.
    pub fn max_amplitude(&self) -> f64 {
        let mut m = 0.0f64;
        for v in std::iter::once(&self.rho).chain(self.u.iter()).chain(self.e.iter()).chain(self.b.iter())
        {
            for &x in v {
                m = m.max(x.abs());
            }
        }
        m
    }
}

/// Symmetric-variable fields `[sigma, v, E~, B~]`; `time` is the rescaled
/// time `sqrt(gamma) * t_physical`.
#[derive(Debug, Clone)]
pub struct SymmetricField {
    pub n_grid: usize,
    pub box_len: f64,
    pub time: f64,
    pub gamma: f64,
    pub sigma: Vec<f64>,
    pub v: [Vec<f64>; 3],
    pub e: [Vec<f64>; 3],
    pub b: [Vec<f64>; 3],
}

/// `Phi(s) = ((gamma-1)/2 s + 1)^{2/(gamma-1)} - s - 1`, the higher-order
/// part of the density nonlinearity; `Phi(0) = Phi'(0) = 0`.
pub fn phi_sigma(sigma: f64, gamma: f64) -> Result<f64> {
    let base = 0.5 * (gamma - 1.0) * sigma + 1.0;
    if base <= 0.0 {
        return Err(Error::DensityCollapse { min_density: base });
    }
    Ok(base.powf(2.0 / (gamma - 1.0)) - sigma - 1.0)
}

/// `sigma = 2/(gamma-1) [(1+rho)^{(gamma-1)/2} - 1]`, `v = u/sqrt(gamma)`,
/// and the electromagnetic fields scale the same way; time is relabeled
/// `t -> sqrt(gamma) t`.
pub fn transform_to_symmetric(field: &GridField) -> Result<SymmetricField> {
    let gamma = field.gamma;
    let ex = 0.5 * (gamma - 1.0);
    let inv_sq = 1.0 / gamma.sqrt();
    let mut sigma = Vec::with_capacity(field.rho.len());
    for &r in &field.rho {
        let n = 1.0 + r;
        if n <= 0.0 {
            return Err(Error::DensityCollapse { min_density: n });
        }
        sigma.push((n.powf(ex) - 1.0) / ex);
    }
    let scale = |v: &[Vec<f64>; 3]| -> [Vec<f64>; 3] {
        [
            v[0].iter().map(|&x| x * inv_sq).collect(),
            v[1].iter().map(|&x| x * inv_sq).collect(),
            v[2].iter().map(|&x| x * inv_sq).collect(),
        ]
    };
    Ok(SymmetricField {
        n_grid: field.n_grid,
        box_len: field.box_len,
        time: gamma.sqrt() * field.time,
        gamma,
        sigma,
        v: scale(&field.u),
        e: scale(&field.e),
        b: scale(&field.b),
    })
}

/// Inverse of [`transform_to_symmetric`].
pub fn transform_from_symmetric(field: &SymmetricField) -> Result<GridField> {
    let gamma = field.gamma;
    let ex = 0.5 * (gamma - 1.0);
    let sq = gamma.sqrt();
    let mut rho = Vec::with_capacity(field.sigma.len());
    for &s in &field.sigma {
        let base = ex * s + 1.0;
        if base <= 0.0 {
            return Err(Error::DensityCollapse { min_density: base });
        }
        rho.push(base.powf(1.0 / ex) - 1.0);
    }
    let scale = |v: &[Vec<f64>; 3]| -> [Vec<f64>; 3] {
        [
            v[0].iter().map(|&x| x * sq).collect(),
            v[1].iter().map(|&x| x * sq).collect(),
            v[2].iter().map(|&x| x * sq).collect(),
        ]
    };
    Ok(GridField {
        n_grid: field.n_grid,
        box_len: field.box_len,
        time: field.time / sq,
        gamma,
        rho,
        u: scale(&field.v),
        e: scale(&field.e),
        b: scale(&field.b),
    })
}

// Component offsets inside the packed spectral vector (length 10 n^3).
const RHO: usize = 0;
const UX: usize = 1;
const EX: usize = 4;
const BX: usize = 7;

/// Pseudo-spectral state and stepping machinery.
pub struct Simulation {
    pub grid: Grid,
    pub gamma: f64,
    pub time: f64,
    pub cfl: f64,
    /// Packed spectra: component `c` occupies `[c n^3, (c+1) n^3)`.
    spec: Vec<C64>,
    /// Root triple per distinct squared mode-index sum.
    triples: HashMap<u64, CharTriple>,
    /// Cached wavevector and squared mode-index sum per flat index.
    kvecs: Vec<Vec3>,
    m2s: Vec<u64>,
    /// Step factors of the last `linear_step` dt, keyed by the mode class.
    step_cache: Option<(f64, HashMap<u64, ModeStep>)>,
    /// Energy weight tables per derivative order.
    energy_weights: HashMap<usize, EnergyWeights>,
}

/// Per-shell factors of the exact linear step: damped-oscillator scalars for
/// the longitudinal block and the transverse step factors.
#[derive(Debug, Clone, Copy)]
struct ModeStep {
    lc: f64,
    ls: f64,
    trans: propagator::TransverseStep,
}

impl Simulation {
    pub fn from_field(field: &GridField) -> Result<Simulation> {
        let grid = Grid::new(field.n_grid, field.box_len);
        let n3 = grid.len();
        let mut spec = vec![C64::new(0.0, 0.0); 10 * n3];
        let comps: [&Vec<f64>; 10] = [
            &field.rho,
            &field.u[0],
            &field.u[1],
            &field.u[2],
            &field.e[0],
            &field.e[1],
            &field.e[2],
            &field.b[0],
            &field.b[1],
            &field.b[2],
        ];
        for (c, comp) in comps.iter().enumerate() {
            let hat = grid.fft3_real(comp);
            spec[c * n3..(c + 1) * n3].copy_from_slice(&hat);
        }
        Self::from_spectral(grid, field.gamma, field.time, spec)
    }

    pub fn from_spectral(grid: Grid, gamma: f64, time: f64, spec: Vec<C64>) -> Result<Simulation> {
        if gamma <= 1.0 {
            return Err(Error::invalid("gamma must exceed 1"));
        }
        if spec.len() != 10 * grid.len() {
            return Err(Error::invalid("spectral vector must have 10 n^3 entries"));
        }
        let mut triples = HashMap::new();
        let n = grid.n;
        let unit = 2.0 * std::f64::consts::PI / grid.box_len;
        let mut kvecs = Vec::with_capacity(grid.len());
        let mut m2s = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            let iz = flat % n;
            let iy = (flat / n) % n;
            let ix = flat / (n * n);
            let (sx, sy, sz) = (grid.signed(ix), grid.signed(iy), grid.signed(iz));
            let m2 = (sx * sx + sy * sy + sz * sz) as u64;
            kvecs.push(grid.wavevector(flat));
            m2s.push(m2);
            if m2 == 0 {
                continue;
            }
            triples
                .entry(m2)
                .or_insert_with(|| solve_characteristic(unit * (m2 as f64).sqrt()).expect("|k| > 0"));
        }
        Ok(Simulation {
            grid,
            gamma,
            time,
            cfl: 0.5,
            spec,
            triples,
            kvecs,
            m2s,
            step_cache: None,
            energy_weights: HashMap::new(),
        })
    }

    pub fn to_field(&self) -> GridField {
        let n3 = self.grid.len();
        let pull = |c: usize| self.grid.ifft3_to_real(&self.spec[c * n3..(c + 1) * n3]);
        GridField {
            n_grid: self.grid.n,
            box_len: self.grid.box_len,
            time: self.time,
            gamma: self.gamma,
            rho: pull(RHO),
            u: [pull(UX), pull(UX + 1), pull(UX + 2)],
            e: [pull(EX), pull(EX + 1), pull(EX + 2)],
            b: [pull(BX), pull(BX + 1), pull(BX + 2)],
        }
    }

    /// Stability limit: `cfl / (sqrt(3/4 + gamma k_max^2) + k_max)` with the
    /// full corner wavenumber.
    pub fn suggested_dt(&self) -> f64 {
        let kmax = self.grid.k_max();
        self.cfl / ((0.75 + self.gamma * kmax * kmax).sqrt() + kmax)
    }

    /// The spectral state of one mode.
    pub fn mode(&self, flat: usize) -> SpectralState {
        let n3 = self.grid.len();
        let at = |c: usize| self.spec[c * n3 + flat];
        SpectralState {
            k: self.grid.wavevector(flat),
            rho: at(RHO),
            u: CVec3([at(UX), at(UX + 1), at(UX + 2)]),
            e: CVec3([at(EX), at(EX + 1), at(EX + 2)]),
            b: CVec3([at(BX), at(BX + 1), at(BX + 2)]),
        }
    }

    pub fn set_mode(&mut self, flat: usize, st: &SpectralState) {
        let n3 = self.grid.len();
        self.spec[RHO * n3 + flat] = st.rho;
        for j in 0..3 {
            self.spec[(UX + j) * n3 + flat] = st.u.0[j];
            self.spec[(EX + j) * n3 + flat] = st.e.0[j];
            self.spec[(BX + j) * n3 + flat] = st.b.0[j];
        }
    }

    /// Exact linear propagation of every mode by `dt`.  The transcendental
    /// step factors depend on the shell only and are cached per `dt`.
    fn linear_step(&mut self, dt: f64) {
        let rebuild = match &self.step_cache {
            Some((cached_dt, _)) => *cached_dt != dt,
            None => true,
        };
        if rebuild {
            let unit = 2.0 * std::f64::consts::PI / self.grid.box_len;
            let gamma = self.gamma;
            let cache: HashMap<u64, ModeStep> = self
                .triples
                .iter()
                .map(|(&m2, triple)| {
                    let k2 = unit * unit * m2 as f64;
                    let w = (0.75 + gamma * k2).sqrt();
                    let damp = (-dt / 2.0).exp();
                    (
                        m2,
                        ModeStep {
                            lc: damp * (w * dt).cos(),
                            ls: damp * (w * dt).sin() / w,
                            trans: propagator::TransverseStep::new(triple, dt),
                        },
                    )
                })
                .collect();
            self.step_cache = Some((dt, cache));
        }
        let cache = &self.step_cache.as_ref().unwrap().1;

        let n3 = self.grid.len();
        struct Ptr(*mut C64);
        unsafe impl Send for Ptr {}
        unsafe impl Sync for Ptr {}
        let ptr = Ptr(self.spec.as_mut_ptr());
        let ptr_ref = &ptr;
        let this: &Simulation = self;
        let gamma = self.gamma;
        (0..n3).into_par_iter().for_each(|flat| {
            let st = this.mode_from_ptr(ptr_ref.0, flat);
            let out = if flat == 0 {
                // zero mode: rho frozen (projection keeps it 0), B constant,
                // (u, E) rotate under the damped 2x2 block
                let q = 3f64.sqrt() / 2.0;
                let damp = (-dt / 2.0).exp();
                let c = damp * (q * dt).cos();
                let s = damp * (q * dt).sin() / q;
                SpectralState {
                    k: st.k,
                    rho: st.rho,
                    u: st.u * (c - 0.5 * s) + st.e * (-s),
                    e: st.u * s + st.e * (c + 0.5 * s),
                    b: st.b,
                }
            } else {
                let ms = &cache[&this.m2s[flat]];
                let k = st.k;
                let kt = k.unit();
                let u_par = st.u.parallel_to(kt);
                let e_par = st.e.parallel_to(kt);
                let m0 = propagator::TransverseTriple {
                    m1: st.u - u_par,
                    m2: st.e - e_par,
                    m3: st.b.perp_to(kt),
                };
                // damped-oscillator scalars on (rho, u_par, E_par)
                let rho =
                    st.rho * ms.lc + (st.rho * 0.5 - crate::vec3::ik_dot(k, u_par)) * ms.ls;
                let igk = C64::new(0.0, -gamma);
                let u_new = u_par * ms.lc
                    + (k.as_complex() * (igk * st.rho) - u_par * 0.5 - e_par) * ms.ls;
                let e_new = e_par * ms.lc + (u_par + e_par * 0.5) * ms.ls;
                let tr = ms.trans.apply(k, &m0);
                SpectralState {
                    k,
                    rho,
                    u: u_new + tr.m1,
                    e: e_new + tr.m2,
                    b: tr.m3,
                }
            };
            unsafe {
                let p = ptr_ref.0;
                *p.add(RHO * n3 + flat) = out.rho;
                for j in 0..3 {
                    *p.add((UX + j) * n3 + flat) = out.u.0[j];
                    *p.add((EX + j) * n3 + flat) = out.e.0[j];
                    *p.add((BX + j) * n3 + flat) = out.b.0[j];
                }
            }
        });
    }

    fn mode_from_ptr(&self, p: *mut C64, flat: usize) -> SpectralState {
        let n3 = self.grid.len();
        let at = |c: usize| unsafe { *p.add(c * n3 + flat) };
        SpectralState {
            k: self.kvecs[flat],
            rho: at(RHO),
            u: CVec3([at(UX), at(UX + 1), at(UX + 2)]),
            e: CVec3([at(EX), at(EX + 1), at(EX + 2)]),
            b: CVec3([at(BX), at(BX + 1), at(BX + 2)]),
        }
    }

    /// Spectral nonlinear sources `(g1, g2, g3)` of the packed state:
    /// `g1 = -div(rho u)`, `g2 = -u.grad u - u x B - gamma[(1+rho)^{g-2}-1] grad rho`,
    /// `g3 = rho u`.  Derivatives spectral, products pointwise on dealiased
    /// fields, outputs dealiased.
    fn sources_spectral(&self, spec: &[C64]) -> Result<Vec<C64>> {
        let grid = &self.grid;
        let n3 = grid.len();
        let gamma = self.gamma;

        let dealias_copy = |c: usize| -> Vec<C64> {
            let mut v = spec[c * n3..(c + 1) * n3].to_vec();
            grid.dealias(&mut v);
            v
        };
        let to_phys = |v: &[C64]| grid.ifft3_to_real(v);

        let rho_hat = dealias_copy(RHO);
        let u_hat = [dealias_copy(UX), dealias_copy(UX + 1), dealias_copy(UX + 2)];
        let b_hat = [dealias_copy(BX), dealias_copy(BX + 1), dealias_copy(BX + 2)];

        let rho_p = to_phys(&rho_hat);
        let min_n = rho_p.par_iter().cloned().reduce(|| f64::INFINITY, f64::min) + 1.0;
        if min_n <= 0.0 {
            return Err(Error::DensityCollapse { min_density: min_n });
        }
        let u_p = [to_phys(&u_hat[0]), to_phys(&u_hat[1]), to_phys(&u_hat[2])];
        let b_p = [to_phys(&b_hat[0]), to_phys(&b_hat[1]), to_phys(&b_hat[2])];

        let kvecs = &self.kvecs;
        let deriv = |hat: &[C64], axis: usize| -> Vec<f64> {
            let mut d = hat.to_vec();
            for (v, k) in d.iter_mut().zip(kvecs) {
                *v *= C64::new(0.0, k.0[axis]);
            }
            to_phys(&d)
        };
        let grad_rho = [deriv(&rho_hat, 0), deriv(&rho_hat, 1), deriv(&rho_hat, 2)];
        let mut du = Vec::with_capacity(9); // du[3*j + i] = d_i u_j
        for j in 0..3 {
            for i in 0..3 {
                du.push(deriv(&u_hat[j], i));
            }
        }

        // pointwise products
        let pow = gamma - 2.0;
        let cells: Vec<[f64; 6]> = (0..n3)
            .into_par_iter()
            .map(|x| {
                let r = rho_p[x];
                let u = [u_p[0][x], u_p[1][x], u_p[2][x]];
                let b = [b_p[0][x], b_p[1][x], b_p[2][x]];
                let press = gamma * ((1.0 + r).powf(pow) - 1.0);
                let uxb = [
                    u[1] * b[2] - u[2] * b[1],
                    u[2] * b[0] - u[0] * b[2],
                    u[0] * b[1] - u[1] * b[0],
                ];
                let mut cell = [0.0; 6];
                for j in 0..3 {
                    cell[j] = r * u[j];
                    let adv =
                        u[0] * du[3 * j][x] + u[1] * du[3 * j + 1][x] + u[2] * du[3 * j + 2][x];
                    cell[3 + j] = -adv - uxb[j] - press * grad_rho[j][x];
                }
                cell
            })
            .collect();
        let pick = |c: usize| -> Vec<f64> { cells.iter().map(|cell| cell[c]).collect() };
        let ru = [pick(0), pick(1), pick(2)];
        let g2 = [pick(3), pick(4), pick(5)];

        let mut out = vec![C64::new(0.0, 0.0); 10 * n3];
        let mut ru_hat = [Vec::new(), Vec::new(), Vec::new()];
        for j in 0..3 {
            ru_hat[j] = grid.fft3_real(&ru[j]);
            let mut g2_hat = grid.fft3_real(&g2[j]);
            grid.dealias(&mut g2_hat);
            out[(UX + j) * n3..(UX + j + 1) * n3].copy_from_slice(&g2_hat);
        }
        // g1 = -i k . (rho u)^ ; g3 = (rho u)^
        for flat in 0..n3 {
            let k = kvecs[flat];
            let mut div = C64::new(0.0, 0.0);
            for j in 0..3 {
                div += C64::new(0.0, k.0[j]) * ru_hat[j][flat];
            }
            out[RHO * n3 + flat] = -div;
        }
        for j in 0..3 {
            out[(EX + j) * n3..(EX + j + 1) * n3].copy_from_slice(&ru_hat[j]);
        }
        grid.dealias(&mut out[RHO * n3..(RHO + 1) * n3]);
        for j in 0..3 {
            grid.dealias(&mut out[(EX + j) * n3..(EX + j + 1) * n3]);
        }
        // B carries no nonlinear source
        Ok(out)
    }

    /// Re-imposes the constraints: `rho_hat <- -i k . E_hat` (`0` at `k = 0`)
    /// and `B_hat <- (I - kt kt) B_hat`.
    pub fn project_constraints(&mut self) {
        let n3 = self.grid.len();
        for flat in 0..n3 {
            let k = self.grid.wavevector(flat);
            if flat == 0 {
                self.spec[RHO * n3] = C64::new(0.0, 0.0);
                continue;
            }
            let e = CVec3([
                self.spec[EX * n3 + flat],
                self.spec[(EX + 1) * n3 + flat],
                self.spec[(EX + 2) * n3 + flat],
            ]);
            self.spec[RHO * n3 + flat] = -crate::vec3::ik_dot(k, e);
            let kt = k.unit();
            let b = CVec3([
                self.spec[BX * n3 + flat],
                self.spec[(BX + 1) * n3 + flat],
                self.spec[(BX + 2) * n3 + flat],
            ]);
            let bp = b.perp_to(kt);
            for j in 0..3 {
                self.spec[(BX + j) * n3 + flat] = bp.0[j];
            }
        }
    }

    /// One Strang step: exact linear half step, explicit midpoint on the
    /// sources, linear half step, constraint projection.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let dt_max = self.suggested_dt();
        if dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, dt_max });
        }
        self.linear_step(dt / 2.0);

        let g = self.sources_spectral(&self.spec)?;
        let mut star = self.spec.clone();
        star.par_iter_mut().zip(g.par_iter()).for_each(|(s, gi)| *s += *gi * (dt / 2.0));
        let g_mid = self.sources_spectral(&star)?;
        self.spec.par_iter_mut().zip(g_mid.par_iter()).for_each(|(s, gi)| *s += *gi * dt);

        self.linear_step(dt / 2.0);
        self.project_constraints();
        self.time += dt;
        Ok(())
    }

    /// L2 lattice norms of `(div E + rho, div B)`.
    pub fn constraint_residual(&self) -> (f64, f64) {
        let n3 = self.grid.len();
        let norm_factor = self.grid.box_len.powi(3) / (n3 as f64 * n3 as f64);
        let mut gauss = Vec::with_capacity(n3);
        let mut divb = Vec::with_capacity(n3);
        for flat in 0..n3 {
            let k = self.grid.wavevector(flat);
            let st = self.mode(flat);
            gauss.push((crate::vec3::ik_dot(k, st.e) + st.rho).norm_sqr());
            divb.push(crate::vec3::ik_dot(k, st.b).norm_sqr());
        }
        (
            (norm_factor * pairwise_sum(&gauss)).sqrt(),
            (norm_factor * pairwise_sum(&divb)).sqrt(),
        )
    }

    /// L2 lattice norms of the four physical components `(rho, u, E, B)`.
    pub fn component_norms(&self) -> [f64; 4] {
        let n3 = self.grid.len();
        let norm_factor = self.grid.box_len.powi(3) / (n3 as f64 * n3 as f64);
        let sum_comp = |c0: usize, nc: usize| -> f64 {
            let vals: Vec<f64> = (0..n3)
                .map(|flat| {
                    (0..nc).map(|j| self.spec[(c0 + j) * n3 + flat].norm_sqr()).sum::<f64>()
                })
                .collect();
            (norm_factor * pairwise_sum(&vals)).sqrt()
        };
        [sum_comp(RHO, 1), sum_comp(UX, 3), sum_comp(EX, 3), sum_comp(BX, 3)]
    }

    /// Energy report in the symmetric variables, taking the fast path: only
    /// `sigma` needs a transform pair, the remaining spectra rescale, and
    /// the derivative weight tables are cached per order.
    pub fn energy_report(&mut self, n_order: usize, kappa: &KappaWeights) -> Result<EnergyReport> {
        let n3 = self.grid.len();
        let gamma = self.gamma;
        let rho_p = self.grid.ifft3_to_real(&self.spec[RHO * n3..(RHO + 1) * n3]);
        let ex = 0.5 * (gamma - 1.0);
        let mut sigma_p = Vec::with_capacity(n3);
        for &r in &rho_p {
            let n = 1.0 + r;
            if n <= 0.0 {
                return Err(Error::DensityCollapse { min_density: n });
            }
            sigma_p.push((n.powf(ex) - 1.0) / ex);
        }
        let sigma_hat = self.grid.fft3_real(&sigma_p);
        let inv_sq = C64::new(1.0 / gamma.sqrt(), 0.0);
        let scale = |c: usize| -> Vec<C64> {
            self.spec[c * n3..(c + 1) * n3].iter().map(|&v| v * inv_sq).collect()
        };
        let v_hat = [scale(UX), scale(UX + 1), scale(UX + 2)];
        let e_hat = [scale(EX), scale(EX + 1), scale(EX + 2)];
        let b_hat = [scale(BX), scale(BX + 1), scale(BX + 2)];
        let grid = &self.grid;
        let weights = self
            .energy_weights
            .entry(n_order)
            .or_insert_with(|| EnergyWeights::new(grid, n_order));
        Ok(energy_with_weights(grid, weights, &sigma_hat, &v_hat, &e_hat, &b_hat, kappa))
    }
}

/// Instant-energy functional report in the symmetric variables.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyReport {
    /// `E_N`: the weighted H^N norm plus the three interactive terms.
    pub full_energy: f64,
    /// `D_N`: dissipation controlled by `-dE_N/dt`.
    pub dissipation: f64,
    /// `E_N^h`: the gradient (high-order) version.
    pub high_order_energy: f64,
    /// `D_N^h`.
    pub high_order_dissipation: f64,
    /// `sum_{|a| = n} ||d^a V||^2` for `n = 0..=N`.
    pub sobolev_norms: Vec<f64>,
    pub n_order: usize,
    pub kappa: KappaWeights,
}

fn multi_indices(max: usize) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for a in 0..=max as u32 {
        for b in 0..=(max as u32 - a) {
            for c in 0..=(max as u32 - a - b) {
                out.push((a, b, c));
            }
        }
    }
    out
}

/// `sum_{|alpha| <= m} k^{2 alpha}` evaluated at `k`.
fn weight_sum(k: Vec3, idx: &[(u32, u32, u32)]) -> f64 {
    let (x, y, z) = (k.0[0] * k.0[0], k.0[1] * k.0[1], k.0[2] * k.0[2]);
    idx.iter().map(|&(a, b, c)| x.powi(a as i32) * y.powi(b as i32) * z.powi(c as i32)).sum()
}

/// Precomputed derivative weight tables: `sum_{|alpha| <= m} k^{2 alpha}`
/// per mode for the orders the functionals need.
#[derive(Debug, Clone)]
pub struct EnergyWeights {
    n_order: usize,
    wn: Vec<f64>,
    wn1: Vec<f64>,
    wn2: Vec<f64>,
    per_order: Vec<Vec<f64>>,
}

impl EnergyWeights {
    pub fn new(grid: &Grid, n_order: usize) -> EnergyWeights {
        assert!(n_order >= 1, "the functionals need N >= 1");
        let n3 = grid.len();
        let idx_n = multi_indices(n_order);
        let idx_n1 = multi_indices(n_order - 1);
        let idx_n2: Vec<(u32, u32, u32)> =
            if n_order >= 2 { multi_indices(n_order - 2) } else { Vec::new() };
        let per_idx: Vec<Vec<(u32, u32, u32)>> = (0..=n_order)
            .map(|m| {
                idx_n.iter().cloned().filter(|&(a, b, c)| (a + b + c) as usize == m).collect()
            })
            .collect();
        let mut wn = Vec::with_capacity(n3);
        let mut wn1 = Vec::with_capacity(n3);
        let mut wn2 = Vec::with_capacity(n3);
        let mut per_order = vec![Vec::with_capacity(n3); n_order + 1];
        for flat in 0..n3 {
            let k = grid.wavevector(flat);
            wn.push(weight_sum(k, &idx_n));
            wn1.push(weight_sum(k, &idx_n1));
            wn2.push(if n_order >= 2 { weight_sum(k, &idx_n2) } else { 0.0 });
            for (m, per) in per_idx.iter().enumerate() {
                per_order[m].push(weight_sum(k, per));
            }
        }
        EnergyWeights { n_order, wn, wn1, wn2, per_order }
    }
}

/// Core energy computation on the symmetric-variable spectra.
pub fn energy_from_spectra(
    grid: &Grid,
    sigma: &[C64],
    v: &[Vec<C64>; 3],
    e: &[Vec<C64>; 3],
    b: &[Vec<C64>; 3],
    n_order: usize,
    kappa: &KappaWeights,
) -> EnergyReport {
    let weights = EnergyWeights::new(grid, n_order);
    energy_with_weights(grid, &weights, sigma, v, e, b, kappa)
}

/// Energy computation with prebuilt weight tables.
pub fn energy_with_weights(
    grid: &Grid,
    weights: &EnergyWeights,
    sigma: &[C64],
    v: &[Vec<C64>; 3],
    e: &[Vec<C64>; 3],
    b: &[Vec<C64>; 3],
    kappa: &KappaWeights,
) -> EnergyReport {
    let n_order = weights.n_order;
    let n3 = grid.len();
    let ip = grid.box_len.powi(3) / (n3 as f64 * n3 as f64);

    let mut base = vec![0.0; n3];
    let mut diss = vec![0.0; n3];
    let mut hi = vec![0.0; n3];
    let mut hi_diss = vec![0.0; n3];
    let mut t1 = vec![0.0; n3];
    let mut t2 = vec![0.0; n3];
    let mut t3 = vec![0.0; n3];
    let mut t1h = vec![0.0; n3];
    let mut t2h = vec![0.0; n3];
    let mut t3h = vec![0.0; n3];
    let mut orders = vec![vec![0.0; n3]; n_order + 1];

    for flat in 0..n3 {
        let k = grid.wavevector(flat);
        let k2 = k.dot(k);
        let wn = weights.wn[flat];
        let wn1 = weights.wn1[flat];
        let wn2 = weights.wn2[flat];

        let s = sigma[flat];
        let vv = CVec3([v[0][flat], v[1][flat], v[2][flat]]);
        let ee = CVec3([e[0][flat], e[1][flat], e[2][flat]]);
        let bb = CVec3([b[0][flat], b[1][flat], b[2][flat]]);
        let all = s.norm_sqr() + vv.norm_sq() + ee.norm_sq() + bb.norm_sq();
        let sv = s.norm_sqr() + vv.norm_sq();
        let eb = ee.norm_sq() + bb.norm_sq();

        base[flat] = wn * all;
        diss[flat] = wn * sv + k2 * wn2 * eb + ee.norm_sq();
        hi[flat] = k2 * wn1 * all;
        hi_diss[flat] = k2 * (wn1 * sv + wn2 * eb);
        for m in 0..=n_order {
            orders[m][flat] = weights.per_order[m][flat] * all;
        }

        // <grad sigma, v>: Re sum_j (i k_j sigma) conj(v_j)
        let iks = k.as_complex() * (C64::new(0.0, 1.0) * s);
        let g1 = iks.dot_conj(vv).re;
        let g2 = vv.dot_conj(ee).re;
        let g3 = crate::vec3::ik_cross(k, ee).dot_conj(bb).re;
        t1[flat] = wn1 * g1;
        t2[flat] = wn1 * g2;
        t3[flat] = wn2 * g3;
        t1h[flat] = (wn1 - 1.0) * g1;
        t2h[flat] = (wn1 - 1.0) * g2;
        t3h[flat] = (wn2 - 1.0).max(0.0) * g3;
    }

    let sum = |v: &Vec<f64>| ip * pairwise_sum(v);
    let full_energy =
        sum(&base) + kappa.kappa1 * sum(&t1) + kappa.kappa2 * sum(&t2) + kappa.kappa3 * sum(&t3);
    let high_order_energy =
        sum(&hi) + kappa.kappa1 * sum(&t1h) + kappa.kappa2 * sum(&t2h) + kappa.kappa3 * sum(&t3h);
    EnergyReport {
        full_energy,
        dissipation: sum(&diss),
        high_order_energy,
        high_order_dissipation: sum(&hi_diss),
        sobolev_norms: orders.iter().map(sum).collect(),
        n_order,
        kappa: *kappa,
    }
}

/// Energy functionals of a symmetric-variable field.
pub fn energy_functionals(
    field: &SymmetricField,
    n_order: usize,
    kappa: &KappaWeights,
) -> EnergyReport {
    let grid = Grid::new(field.n_grid, field.box_len);
    let sigma = grid.fft3_real(&field.sigma);
    let hat3 = |f: &[Vec<f64>; 3]| -> [Vec<C64>; 3] {
        [grid.fft3_real(&f[0]), grid.fft3_real(&f[1]), grid.fft3_real(&f[2])]
    };
    energy_from_spectra(&grid, &sigma, &hat3(&field.v), &hat3(&field.e), &hat3(&field.b), n_order, kappa)
}

/// Physical-space nonlinear sources of a grid field.
pub fn nonlinear_sources(field: &GridField) -> Result<(Vec<f64>, [Vec<f64>; 3], [Vec<f64>; 3])> {
    let sim = Simulation::from_field(field)?;
    let g = sim.sources_spectral(&sim.spec)?;
    let n3 = sim.grid.len();
    let pull = |c: usize| sim.grid.ifft3_to_real(&g[c * n3..(c + 1) * n3]);
    Ok((
        pull(RHO),
        [pull(UX), pull(UX + 1), pull(UX + 2)],
        [pull(EX), pull(EX + 1), pull(EX + 2)],
    ))
}

/// One Strang step of a grid field (round-trips through spectral space).
pub fn step(field: &GridField, dt: f64) -> Result<GridField> {
    let mut sim = Simulation::from_field(field)?;
    sim.step(dt)?;
    Ok(sim.to_field())
}

/// L2 lattice norms of `(div E + rho, div B)` of a grid field.
pub fn constraint_residual(field: &GridField) -> Result<(f64, f64)> {
    Ok(Simulation::from_field(field)?.constraint_residual())
}

/// Residual L2 norms of the four symmetric-system equations evaluated on a
/// grid field: time derivatives come from the primitive-system right-hand
/// sides, spatial derivatives are spectral, and the measurement is restricted
/// to the dealias band where grid products are exact.
// index arithmetic below spells out the (axis, component) layout d[3b + a]
#[allow(clippy::erasing_op, clippy::identity_op)]
pub fn formulation_residuals(field: &GridField) -> Result<[f64; 4]> {
    let grid = Grid::new(field.n_grid, field.box_len);
    let n3 = grid.len();
    let gamma = field.gamma;
    let sq = gamma.sqrt();

    let hat = |f: &Vec<f64>| grid.fft3_real(f);
    let deriv = |h: &[C64], axis: usize| -> Vec<f64> {
        let mut d = h.to_vec();
        for (flat, v) in d.iter_mut().enumerate() {
            let k = grid.wavevector(flat);
            *v *= C64::new(0.0, k.0[axis]);
        }
        grid.ifft3_to_real(&d)
    };

    let rho_hat = hat(&field.rho);
    let u_hat = [hat(&field.u[0]), hat(&field.u[1]), hat(&field.u[2])];
    let e_hat = [hat(&field.e[0]), hat(&field.e[1]), hat(&field.e[2])];
    let b_hat = [hat(&field.b[0]), hat(&field.b[1]), hat(&field.b[2])];

    let grad_rho: Vec<Vec<f64>> = (0..3).map(|a| deriv(&rho_hat, a)).collect();
    let mut du = Vec::new(); // du[3j + i] = d_i u_j
    for j in 0..3 {
        for i in 0..3 {
            du.push(deriv(&u_hat[j], i));
        }
    }
    let mut de = Vec::new();
    let mut db = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            de.push(deriv(&e_hat[j], i));
            db.push(deriv(&b_hat[j], i));
        }
    }
    let curl = |d: &Vec<Vec<f64>>, j: usize, x: usize| -> f64 {
        // (curl F)_j = eps_{jab} d_a F_b ; d[3b + a] = d_a F_b
        match j {
            0 => d[3 * 2 + 1][x] - d[3 * 1 + 2][x],
            1 => d[3 * 0 + 2][x] - d[3 * 2 + 0][x],
            _ => d[3 * 1 + 0][x] - d[3 * 0 + 1][x],
        }
    };

    // primitive-system right-hand sides, pointwise
    let mut dt_u = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
    let mut dt_e = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
    let mut dt_b = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
    // d/dt rho = -div(n u): spectral divergence of the pointwise product
    let mut nu = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
    for x in 0..n3 {
        let n = 1.0 + field.rho[x];
        for j in 0..3 {
            nu[j][x] = n * field.u[j][x];
        }
    }
    let nu_hat = [hat(&nu[0]), hat(&nu[1]), hat(&nu[2])];
    let dt_rho = {
        let mut div_hat = vec![C64::new(0.0, 0.0); n3];
        for flat in 0..n3 {
            let k = grid.wavevector(flat);
            let mut div = C64::new(0.0, 0.0);
            for j in 0..3 {
                div += C64::new(0.0, k.0[j]) * nu_hat[j][flat];
            }
            div_hat[flat] = -div;
        }
        grid.ifft3_to_real(&div_hat)
    };
    for x in 0..n3 {
        let r = field.rho[x];
        let n = 1.0 + r;
        let u = [field.u[0][x], field.u[1][x], field.u[2][x]];
        let b = [field.b[0][x], field.b[1][x], field.b[2][x]];
        let e = [field.e[0][x], field.e[1][x], field.e[2][x]];
        if n <= 0.0 {
            return Err(Error::DensityCollapse { min_density: n });
        }
        let press = gamma * n.powf(gamma - 2.0);
        let uxb = [
            u[1] * b[2] - u[2] * b[1],
            u[2] * b[0] - u[0] * b[2],
            u[0] * b[1] - u[1] * b[0],
        ];
        for j in 0..3 {
            let adv = u[0] * du[3 * j][x] + u[1] * du[3 * j + 1][x] + u[2] * du[3 * j + 2][x];
            dt_u[j][x] = -press * grad_rho[j][x] - e[j] - u[j] - adv - uxb[j];
            dt_e[j][x] = curl(&db, j, x) + u[j] + r * u[j];
            dt_b[j][x] = -curl(&de, j, x);
        }
    }

    // symmetric-system residuals via the chain rule
    let sym = transform_to_symmetric(field)?;
    let sigma_hat = hat(&sym.sigma);
    let grad_sigma: Vec<Vec<f64>> = (0..3).map(|a| deriv(&sigma_hat, a)).collect();
    let v_hat = [hat(&sym.v[0]), hat(&sym.v[1]), hat(&sym.v[2])];
    let mut dv = Vec::new();
    let mut dec = Vec::new();
    let et_hat = [hat(&sym.e[0]), hat(&sym.e[1]), hat(&sym.e[2])];
    let bt_hat = [hat(&sym.b[0]), hat(&sym.b[1]), hat(&sym.b[2])];
    for j in 0..3 {
        for i in 0..3 {
            dv.push(deriv(&v_hat[j], i));
            dec.push(deriv(&et_hat[j], i));
        }
    }
    let mut dbt = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            dbt.push(deriv(&bt_hat[j], i));
        }
    }

    // residual components per equation (the sigma equation is scalar, the
    // other three are vector-valued)
    let mut res_sigma = vec![0.0; n3];
    let mut res_v = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
    let mut res_e = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
    let mut res_b = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
    for x in 0..n3 {
        let n = 1.0 + field.rho[x];
        let half_gm1 = 0.5 * (gamma - 1.0);
        let amp = n.powf(half_gm1); // (gamma-1)/2 sigma + 1
        let dsym = |dphys: f64| dphys / gamma; // d/dt_sym of a 1/sqrt(gamma)-scaled field
        // sigma equation
        let dt_sigma_sym = n.powf(half_gm1 - 1.0) * dt_rho[x] / sq;
        let v = [sym.v[0][x], sym.v[1][x], sym.v[2][x]];
        let div_v = dv[0][x] + dv[4][x] + dv[8][x];
        let vdot_gs = v[0] * grad_sigma[0][x] + v[1] * grad_sigma[1][x] + v[2] * grad_sigma[2][x];
        res_sigma[x] = dt_sigma_sym + vdot_gs + amp * div_v;
        // v equation: dt v + v.grad v + amp grad sigma + (Et/sqg + v x Bt) + v/sqg = 0
        let bt = [sym.b[0][x], sym.b[1][x], sym.b[2][x]];
        let vxb = [
            v[1] * bt[2] - v[2] * bt[1],
            v[2] * bt[0] - v[0] * bt[2],
            v[0] * bt[1] - v[1] * bt[0],
        ];
        for j in 0..3 {
            let adv = v[0] * dv[3 * j][x] + v[1] * dv[3 * j + 1][x] + v[2] * dv[3 * j + 2][x];
            res_v[j][x] = dsym(dt_u[j][x]) + adv + amp * grad_sigma[j][x]
                + (sym.e[j][x] / sq + vxb[j])
                + v[j] / sq;
            // Et equation: dt Et - curl Bt / sqg - v/sqg - (sigma + Phi)v/sqg = 0
            let curl_bt = match j {
                0 => dbt[3 * 2 + 1][x] - dbt[3 * 1 + 2][x],
                1 => dbt[3 * 0 + 2][x] - dbt[3 * 2 + 0][x],
                _ => dbt[3 * 1 + 0][x] - dbt[3 * 0 + 1][x],
            };
            let sig_phi = field.rho[x]; // sigma + Phi(sigma) = rho exactly
            res_e[j][x] =
                dsym(dt_e[j][x]) - curl_bt / sq - sym.v[j][x] / sq - sig_phi * sym.v[j][x] / sq;
            // Bt equation: dt Bt + curl Et / sqg = 0
            let curl_et = match j {
                0 => dec[3 * 2 + 1][x] - dec[3 * 1 + 2][x],
                1 => dec[3 * 0 + 2][x] - dec[3 * 2 + 0][x],
                _ => dec[3 * 1 + 0][x] - dec[3 * 0 + 1][x],
            };
            res_b[j][x] = dsym(dt_b[j][x]) + curl_et / sq;
        }
    }

    // L2 norms restricted componentwise to the dealias band, where grid
    // products carry no aliasing
    let ip = grid.box_len.powi(3) / (n3 as f64 * n3 as f64);
    let band_norm_sq = |r: &Vec<f64>| -> f64 {
        let mut h = grid.fft3_real(r);
        grid.dealias(&mut h);
        let vals: Vec<f64> = h.iter().map(|v| v.norm_sqr()).collect();
        ip * pairwise_sum(&vals)
    };
    let vec_norm = |r: &[Vec<f64>; 3]| -> f64 {
        (band_norm_sq(&r[0]) + band_norm_sq(&r[1]) + band_norm_sq(&r[2])).sqrt()
    };
    Ok([band_norm_sq(&res_sigma).sqrt(), vec_norm(&res_v), vec_norm(&res_e), vec_norm(&res_b)])
}

/// Configuration of the random compatible initial data generator.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct InitConfig {
    pub n_grid: usize,
    pub box_len: f64,
    pub gamma: f64,
    /// Target maximum pointwise amplitude over all components.
    pub amplitude: f64,
    /// Spectral envelope cutoff in mode units (smooth Gaussian falloff).
    pub mode_cutoff: f64,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            n_grid: 32,
            box_len: 20.0 * std::f64::consts::PI,
            gamma: crate::GAMMA_DEFAULT,
            amplitude: 1e-2,
            mode_cutoff: 3.0,
            seed: 1,
        }
    }
}

/// Draws a smooth random compatible field: solenoidal `B` from a vector
/// potential, `E` combining a density-sourced longitudinal part with a
/// solenoidal part, `rho` matching the Gauss law, zero means.
pub fn random_compatible_field(cfg: &InitConfig) -> Result<GridField> {
    use rand::{Rng, SeedableRng};
    if cfg.amplitude <= 0.0 {
        return Err(Error::invalid("amplitude must be positive"));
    }
    let grid = Grid::new(cfg.n_grid, cfg.box_len);
    let n3 = grid.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);

    let white = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<C64> {
        let field: Vec<f64> = (0..n3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        grid.fft3_real(&field)
    };
    let envelope = |grid: &Grid, flat: usize, hat: &mut C64, cutoff: f64| {
        let n = grid.n;
        let iz = flat % n;
        let iy = (flat / n) % n;
        let ix = flat / (n * n);
        let m2 = (grid.signed(ix).pow(2) + grid.signed(iy).pow(2) + grid.signed(iz).pow(2)) as f64;
        *hat *= (-m2 / (cutoff * cutoff)).exp();
        if !grid.in_dealias_band(flat) {
            *hat = C64::new(0.0, 0.0);
        }
    };

    let filtered = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<C64> {
        let mut h = white(rng);
        for flat in 0..n3 {
            envelope(&grid, flat, &mut h[flat], cfg.mode_cutoff);
        }
        h[0] = C64::new(0.0, 0.0);
        h
    };

    let u_hat = [filtered(&mut rng), filtered(&mut rng), filtered(&mut rng)];
    let rho_hat = filtered(&mut rng);
    let e_sol_raw = [filtered(&mut rng), filtered(&mut rng), filtered(&mut rng)];
    let a_hat = [filtered(&mut rng), filtered(&mut rng), filtered(&mut rng)];

    let mut e_hat = [
        vec![C64::new(0.0, 0.0); n3],
        vec![C64::new(0.0, 0.0); n3],
        vec![C64::new(0.0, 0.0); n3],
    ];
    let mut b_hat = [
        vec![C64::new(0.0, 0.0); n3],
        vec![C64::new(0.0, 0.0); n3],
        vec![C64::new(0.0, 0.0); n3],
    ];
    for flat in 1..n3 {
        let k = grid.wavevector(flat);
        let k2 = k.dot(k);
        if k2 == 0.0 {
            continue;
        }
        // longitudinal E solving i k . E = -rho: E = i k rho / |k|^2
        let el = k.as_complex() * (C64::new(0.0, 1.0) * rho_hat[flat] * (1.0 / k2));
        let kt = k.unit();
        let es = CVec3([e_sol_raw[0][flat], e_sol_raw[1][flat], e_sol_raw[2][flat]]).perp_to(kt);
        let a = CVec3([a_hat[0][flat], a_hat[1][flat], a_hat[2][flat]]);
        let b = crate::vec3::ik_cross(k, a);
        for j in 0..3 {
            e_hat[j][flat] = el.0[j] + es.0[j];
            b_hat[j][flat] = b.0[j];
        }
    }

    let mut field = GridField {
        n_grid: cfg.n_grid,
        box_len: cfg.box_len,
        time: 0.0,
        gamma: cfg.gamma,
        rho: grid.ifft3_to_real(&rho_hat),
        u: [
            grid.ifft3_to_real(&u_hat[0]),
            grid.ifft3_to_real(&u_hat[1]),
            grid.ifft3_to_real(&u_hat[2]),
        ],
        e: [
            grid.ifft3_to_real(&e_hat[0]),
            grid.ifft3_to_real(&e_hat[1]),
            grid.ifft3_to_real(&e_hat[2]),
        ],
        b: [
            grid.ifft3_to_real(&b_hat[0]),
            grid.ifft3_to_real(&b_hat[1]),
            grid.ifft3_to_real(&b_hat[2]),
        ],
    };
    let m = field.max_amplitude();
    if m == 0.0 {
        return Err(Error::invalid("degenerate random draw"));
    }
    let s = cfg.amplitude / m;
    for v in std::iter::once(&mut field.rho)
        .chain(field.u.iter_mut())
        .chain(field.e.iter_mut())
        .chain(field.b.iter_mut())
    {
        for x in v.iter_mut() {
            *x *= s;
        }
    }
    Ok(field)
}

/// Writes a field snapshot in the flat binary layout:
/// magic `EMGF`, u32 version, u64 n_grid, f64 box_len, f64 time, f64 gamma,
/// then the 10 components (`rho, ux, uy, uz, Ex, Ey, Ez, Bx, By, Bz`) as
/// little-endian doubles in lattice order.
pub fn write_snapshot(field: &GridField, w: &mut impl std::io::Write) -> std::io::Result<()> {
    w.write_all(b"EMGF")?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(field.n_grid as u64).to_le_bytes())?;
    w.write_all(&field.box_len.to_le_bytes())?;
    w.write_all(&field.time.to_le_bytes())?;
    w.write_all(&field.gamma.to_le_bytes())?;
    for comp in std::iter::once(&field.rho)
        .chain(field.u.iter())
        .chain(field.e.iter())
        .chain(field.b.iter())
    {
        for &x in comp {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_vanishes_to_second_order_at_zero() {
        for &gamma in &[1.4, 5.0 / 3.0, 2.0, 3.0] {
            assert_eq!(phi_sigma(0.0, gamma).unwrap(), 0.0);
            let h = 1e-6;
            let dphi =
                (phi_sigma(h, gamma).unwrap() - phi_sigma(-h, gamma).unwrap()) / (2.0 * h);
            assert!(dphi.abs() < 1e-9, "Phi'(0) = {dphi} at gamma = {gamma}");
        }
    }

    #[test]
    fn phi_closed_forms_at_special_gammas() {
        for &s in &[-0.5, -0.1, 0.0, 0.3, 1.0] {
            assert!((phi_sigma(s, 2.0).unwrap() - s * s / 4.0).abs() < 1e-14);
            assert!(phi_sigma(s, 3.0).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn phi_rejects_density_collapse() {
        assert!(phi_sigma(-10.0, 1.4).is_err());
    }

    #[test]
    fn symmetric_transform_round_trip() {
        let cfg = InitConfig { n_grid: 8, amplitude: 0.3, ..InitConfig::default() };
        let field = random_compatible_field(&cfg).unwrap();
        let sym = transform_to_symmetric(&field).unwrap();
        let back = transform_from_symmetric(&sym).unwrap();
        for (a, b) in field.rho.iter().zip(&back.rho) {
            assert!((a - b).abs() < 1e-12);
        }
        for j in 0..3 {
            for (a, b) in field.u[j].iter().zip(&back.u[j]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!((back.time - field.time).abs() < 1e-15);
    }

    #[test]
    fn symmetric_sigma_closed_form_at_gamma_two() {
        let mut field = GridField::zero_perturbation(4, 1.0, 2.0);
        field.rho.iter_mut().enumerate().for_each(|(i, r)| *r = 0.01 * i as f64 / 64.0);
        let sym = transform_to_symmetric(&field).unwrap();
        for (s, r) in sym.sigma.iter().zip(&field.rho) {
            let want = 2.0 * ((1.0 + r).sqrt() - 1.0);
            assert!((s - want).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_equilibrium_maps_to_zero_symmetric_state() {
        let field = GridField::zero_perturbation(4, 1.0, 5.0 / 3.0);
        let sym = transform_to_symmetric(&field).unwrap();
        assert!(sym.sigma.iter().all(|&s| s == 0.0));
        assert!(sym.v.iter().all(|c| c.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn sources_vanish_at_equilibrium() {
        let field = GridField::zero_perturbation(8, 10.0, 5.0 / 3.0);
        let (g1, g2, g3) = nonlinear_sources(&field).unwrap();
        assert!(g1.iter().all(|&x| x.abs() < 1e-14));
        for j in 0..3 {
            assert!(g2[j].iter().all(|&x| x.abs() < 1e-14));
            assert!(g3[j].iter().all(|&x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn sources_of_constant_fields() {
        // rho = 0.1, u = const, B = 0: g1 = 0 and g3 = 0.1 u
        let mut field = GridField::zero_perturbation(8, 10.0, 5.0 / 3.0);
        field.rho.iter_mut().for_each(|x| *x = 0.1);
        field.u[0].iter_mut().for_each(|x| *x = 0.25);
        field.u[2].iter_mut().for_each(|x| *x = -0.5);
        let (g1, g2, g3) = nonlinear_sources(&field).unwrap();
        for x in 0..g1.len() {
            assert!(g1[x].abs() < 1e-12);
            assert!((g3[0][x] - 0.025).abs() < 1e-12);
            assert!((g3[2][x] + 0.05).abs() < 1e-12);
            assert!(g2[0][x].abs() < 1e-12); // no gradients, no B
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point_of_the_step() {
        let field = GridField::zero_perturbation(8, 10.0, 5.0 / 3.0);
        let sim = Simulation::from_field(&field).unwrap();
        let dt = sim.suggested_dt();
        let out = step(&field, dt).unwrap();
        assert!(out.max_amplitude() < 1e-14);
        assert!((out.time - dt).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_cfl_violation() {
        let field = GridField::zero_perturbation(8, 10.0, 5.0 / 3.0);
        let sim = Simulation::from_field(&field).unwrap();
        let dt = sim.suggested_dt() * 2.0;
        assert!(matches!(step(&field, dt), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn generator_is_compatible_and_detector_sees_corruption() {
        let cfg = InitConfig { n_grid: 16, ..InitConfig::default() };
        let field = random_compatible_field(&cfg).unwrap();
        let (g, d) = constraint_residual(&field).unwrap();
        assert!(g < 1e-12 && d < 1e-12, "generator residuals {g:.2e} {d:.2e}");

        let mut bad = field.clone();
        bad.e[0].iter_mut().for_each(|x| *x += 1e-3);
        // a constant shift in E leaves div E unchanged; corrupt rho instead
        bad.rho.iter_mut().enumerate().for_each(|(i, x)| *x += 1e-3 * ((i % 7) as f64));
        let (g2, _) = constraint_residual(&bad).unwrap();
        assert!(g2 > 1e-6, "corruption must be detected, got {g2:.2e}");
    }

    #[test]
    fn energy_report_zero_field() {
        let field = GridField::zero_perturbation(8, 10.0, 5.0 / 3.0);
        let sym = transform_to_symmetric(&field).unwrap();
        let rep = energy_functionals(&sym, 2, &KappaWeights::default());
        assert_eq!(rep.full_energy, 0.0);
        assert_eq!(rep.dissipation, 0.0);
        assert_eq!(rep.high_order_energy, 0.0);
    }

    #[test]
    fn energy_single_mode_closed_form() {
        // sigma = A cos(k1 x): ||sigma||^2 = A^2 L^3/2, ||d^a sigma||^2 = k1^{2a} A^2 L^3/2
        let n = 16;
        let l = 8.0;
        let k1 = 2.0 * std::f64::consts::PI / l;
        let amp = 0.01;
        let mut field = GridField::zero_perturbation(n, l, 5.0 / 3.0);
        // use the v-field slot to dodge the nonlinear density transform
        for flat in 0..field.u[0].len() {
            let ix = flat / (n * n);
            let x = l * ix as f64 / n as f64;
            field.u[0][flat] = amp * (k1 * x).cos();
        }
        let sym = transform_to_symmetric(&field).unwrap();
        let rep = energy_functionals(&sym, 2, &KappaWeights::ZERO);
        let a_sym = amp / field.gamma.sqrt();
        let base = a_sym * a_sym * l.powi(3) / 2.0;
        let want = base * (1.0 + k1 * k1 + k1.powi(4));
        assert!(
            (rep.full_energy - want).abs() < 1e-10 * want,
            "got {}, want {want}",
            rep.full_energy
        );
        // per-order table: (1, k^2, k^4) times the base
        assert!((rep.sobolev_norms[0] - base).abs() < 1e-10 * base);
        assert!((rep.sobolev_norms[1] - base * k1 * k1).abs() < 1e-10 * base);
        assert!((rep.sobolev_norms[2] - base * k1.powi(4)).abs() < 1e-10 * base);
        // kappa = 0 means E_N is the plain squared H^N norm
        let total: f64 = rep.sobolev_norms.iter().sum();
        assert!((rep.full_energy - total).abs() < 1e-12 * total);
    }

    #[test]
    fn formulation_residuals_are_small_on_smooth_data() {
        let cfg = InitConfig { n_grid: 16, amplitude: 1e-2, ..InitConfig::default() };
        let field = random_compatible_field(&cfg).unwrap();
        let res = formulation_residuals(&field).unwrap();
        for (i, r) in res.iter().enumerate() {
            assert!(*r <= 1e-6, "equation {i} residual {r:.3e}");
        }
    }
}
