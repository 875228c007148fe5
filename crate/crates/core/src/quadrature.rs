//! Product quadrature over R^3 in spherical form: a log-spaced radial
//! trapezoid rule times a fixed icosahedral sphere rule.
//!
//! The angular rule places nodes on the three icosahedral orbits (12
//! vertices, 20 face centers, 30 edge midpoints) and solves a 3x3 system for
//! the orbit weights so that the lowest icosahedrally-invariant harmonics
//! (degrees 6 and 10) are integrated exactly; symmetry kills everything else
//! below degree 12, so the rule is exact for all spherical polynomials of
//! degree <= 11.  The log-spaced radial grid concentrates nodes near
//! `|k| = 0`, which is where large-time algebraic decay is decided.

use rayon::prelude::*;

use crate::util::pairwise_sum;
use crate::vec3::Vec3;
use crate::{Error, Result};

/// Fixed rule on the unit sphere: weights sum to `4 pi`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// The 62-node icosahedral rule (exact through degree 11).
    ///
    /// The face-center and edge-midpoint orbits are derived from the vertex
    /// set itself so all three share one icosahedral orientation; mixing
    /// textbook coordinate conventions silently yields mirror-rotated orbits
    /// whose moments are inconsistent.
    pub fn icosahedral() -> SphereRule {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;

        // 12 icosahedron vertices: cyclic (0, +-1, +-phi), normalized.
        let mut vertices = Vec::with_capacity(12);
        for s1 in [-1.0, 1.0] {
            for s2 in [-1.0, 1.0] {
                for cyc in 0..3 {
                    vertices.push(cycle(Vec3::new(0.0, s1, s2 * phi).unit(), cyc));
                }
            }
        }
        // Edges connect vertex pairs at the minimal distance; faces are the
        // mutually-adjacent triples.
        let mut edge_sq = f64::INFINITY;
        for i in 0..12 {
            for j in (i + 1)..12 {
                let d = vertices[i] - vertices[j];
                edge_sq = edge_sq.min(d.dot(d));
            }
        }
        let adjacent = |i: usize, j: usize| -> bool {
            let d = vertices[i] - vertices[j];
            (d.dot(d) - edge_sq).abs() < 1e-9
        };
        let mut mids = Vec::with_capacity(30);
        let mut faces = Vec::with_capacity(20);
        for i in 0..12 {
            for j in (i + 1)..12 {
                if !adjacent(i, j) {
                    continue;
                }
                mids.push((vertices[i] + vertices[j]).unit());
                for k in (j + 1)..12 {
                    if adjacent(i, k) && adjacent(j, k) {
                        faces.push((vertices[i] + vertices[j] + vertices[k]).unit());
                    }
                }
            }
        }
        let orbits: [Vec<Vec3>; 3] = [vertices, faces, mids];
        debug_assert_eq!(orbits[0].len(), 12);
        debug_assert_eq!(orbits[1].len(), 20);
        debug_assert_eq!(orbits[2].len(), 30);

        // Orbit weights from exactness on {1, x^6, x^10}.
        let four_pi = 4.0 * std::f64::consts::PI;
        let moment = |orbit: &[Vec3], p: u32| -> f64 {
            orbit.iter().map(|n| n.0[0].powi(p as i32)).sum()
        };
        let mut m = [[0.0f64; 3]; 3];
        let mut rhs = [four_pi, four_pi / 7.0, four_pi / 11.0];
        for (j, orbit) in orbits.iter().enumerate() {
            m[0][j] = orbit.len() as f64;
            m[1][j] = moment(orbit, 6);
            m[2][j] = moment(orbit, 10);
        }
        let w = solve3(&mut m, &mut rhs);

        let mut nodes = Vec::with_capacity(62);
        let mut weights = Vec::with_capacity(62);
        for (j, orbit) in orbits.iter().enumerate() {
            for &n in orbit {
                nodes.push(n);
                weights.push(w[j]);
            }
        }
        SphereRule { nodes, weights }
    }
}

fn cycle(v: Vec3, by: usize) -> Vec3 {
    match by {
        0 => v,
        1 => Vec3::new(v.0[2], v.0[0], v.0[1]),
        _ => Vec3::new(v.0[1], v.0[2], v.0[0]),
    }
}

fn solve3(m: &mut [[f64; 3]; 3], rhs: &mut [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for c in col..3 {
                m[row][c] -= f * m[col][c];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = rhs[row];
        for c in (row + 1)..3 {
            s -= m[row][c] * x[c];
        }
        x[row] = s / m[row][row];
    }
    x
}

/// Log-spaced radial trapezoid for `integral_0^inf f(r) r^2 dr` truncated to
/// `[r_min, r_max]`.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub r: Vec<f64>,
    /// Weights including the `r^2 dr` factor.
    pub w: Vec<f64>,
}

impl RadialGrid {
    pub fn log_trapezoid(n: usize, r_min: f64, r_max: f64) -> RadialGrid {
        assert!(n >= 8 && r_min > 0.0 && r_max > r_min);
        let (a, b) = (r_min.ln(), r_max.ln());
        let h = (b - a) / (n - 1) as f64;
        let mut r = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let s = a + h * i as f64;
            let ri = s.exp();
            let c = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            r.push(ri);
            // dr = r ds, so r^2 dr = r^3 ds
            w.push(c * h * ri * ri * ri);
        }
        RadialGrid { r, w }
    }
}

/// Quadrature configuration for spectral-space norms.
#[derive(Debug, Clone)]
pub struct ProductQuadrature {
    pub radial: RadialGrid,
    pub sphere: SphereRule,
}

/// Default radial truncation and node count.
pub const RADIAL_NODES_DEFAULT: usize = 2000;
pub const RADIAL_RANGE_DEFAULT: (f64, f64) = (1e-4, 40.0);

/// Relative change allowed when the radial node count doubles.
pub const CONVERGENCE_TOL: f64 = 1e-4;

impl ProductQuadrature {
    pub fn with_radial_nodes(n: usize) -> Self {
        ProductQuadrature {
            radial: RadialGrid::log_trapezoid(n, RADIAL_RANGE_DEFAULT.0, RADIAL_RANGE_DEFAULT.1),
            sphere: SphereRule::icosahedral(),
        }
    }

    /// `integral f(k) d^3k`, shells evaluated in parallel and combined in a
    /// fixed order (pairwise) for reproducibility.
    ///
    /// `f` returns `M` integrands at once; they share the sweep.
    pub fn integrate_batch<const M: usize>(
        &self,
        f: impl Fn(Vec3) -> [f64; M] + Sync,
    ) -> [f64; M] {
        self.integrate_with_shell_ctx(|_| (), |_, k| f(k))
    }

    /// Like [`Self::integrate_batch`] but builds a per-shell context from the
    /// radius first (e.g. a characteristic root triple shared by the whole
    /// shell).
    pub fn integrate_with_shell_ctx<C: Sync + Send, const M: usize>(
        &self,
        mk_ctx: impl Fn(f64) -> C + Sync,
        f: impl Fn(&C, Vec3) -> [f64; M] + Sync,
    ) -> [f64; M] {
        let shells: Vec<[f64; M]> = (0..self.radial.r.len())
            .into_par_iter()
            .map(|i| {
                let r = self.radial.r[i];
                let ctx = mk_ctx(r);
                let mut acc = [0.0; M];
                for (node, aw) in self.sphere.nodes.iter().zip(&self.sphere.weights) {
                    let vals = f(&ctx, *node * r);
                    for m in 0..M {
                        acc[m] += aw * vals[m];
                    }
                }
                for a in acc.iter_mut() {
                    *a *= self.radial.w[i];
                }
                acc
            })
            .collect();
        let mut out = [0.0; M];
        for m in 0..M {
            let col: Vec<f64> = shells.iter().map(|s| s[m]).collect();
            out[m] = pairwise_sum(&col);
        }
        out
    }

    pub fn integrate(&self, f: impl Fn(Vec3) -> f64 + Sync) -> f64 {
        self.integrate_batch(|k| [f(k)])[0]
    }

    /// Integrates at the configured and the doubled radial resolution and
    /// errors out if any component moved by more than [`CONVERGENCE_TOL`]
    /// relative.
    pub fn integrate_batch_checked<const M: usize>(
        &self,
        f: impl Fn(Vec3) -> [f64; M] + Sync,
    ) -> Result<[f64; M]> {
        self.integrate_with_shell_ctx_checked(|_| (), |_, k| f(k))
    }

    /// Checked variant of [`Self::integrate_with_shell_ctx`].
    pub fn integrate_with_shell_ctx_checked<C: Sync + Send, const M: usize>(
        &self,
        mk_ctx: impl Fn(f64) -> C + Sync,
        f: impl Fn(&C, Vec3) -> [f64; M] + Sync,
    ) -> Result<[f64; M]> {
        let coarse = self.integrate_with_shell_ctx(&mk_ctx, &f);
        let fine = ProductQuadrature {
            radial: RadialGrid::log_trapezoid(
                self.radial.r.len() * 2,
                self.radial.r[0],
                *self.radial.r.last().unwrap(),
            ),
            sphere: self.sphere.clone(),
        }
        .integrate_with_shell_ctx(&mk_ctx, &f);
        // components at roundoff level relative to the dominant one carry no
        // information; give them an absolute slack
        let max_scale = (0..M).map(|m| fine[m].abs().max(coarse[m].abs())).fold(0.0, f64::max);
        for m in 0..M {
            let scale = fine[m].abs().max(coarse[m].abs());
            if scale > 0.0 {
                let change = (fine[m] - coarse[m]).abs();
                if change > CONVERGENCE_TOL * scale + 1e-13 * max_scale {
                    return Err(Error::QuadratureNotConverged { change: change / scale });
                }
            }
        }
        Ok(fine)
    }
}
