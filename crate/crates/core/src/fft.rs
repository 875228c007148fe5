//! Periodic-box grid bookkeeping and 3D FFTs (complex-to-complex via 1D
//! passes), with the 2/3-rule dealiasing mask used before pointwise
//! products.
//!
//! Layout: fields are flat `Vec<Complex64>` of length `n^3` indexed
//! `(ix * n + iy) * n + iz`.  The forward transform is the plain DFT sum
//! (no normalization); the inverse divides by `n^3`.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::vec3::Vec3;

#[derive(Clone)]
pub struct Grid {
    pub n: usize,
    pub box_len: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("box_len", &self.box_len).finish()
    }
}

impl Grid {
    pub fn new(n: usize, box_len: f64) -> Grid {
        assert!(n >= 4 && n % 2 == 0, "grid size must be even and >= 4");
        assert!(box_len > 0.0);
        let mut planner = FftPlanner::new();
        Grid {
            n,
            box_len,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Number of lattice points, `n^3`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    /// Signed mode index of axis position `i`.
    pub fn signed(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Torus wavevector `2 pi m / L` of the flat index.
    pub fn wavevector(&self, flat: usize) -> Vec3 {
        let n = self.n;
        let iz = flat % n;
        let iy = (flat / n) % n;
        let ix = flat / (n * n);
        let f = 2.0 * std::f64::consts::PI / self.box_len;
        Vec3::new(
            f * self.signed(ix) as f64,
            f * self.signed(iy) as f64,
            f * self.signed(iz) as f64,
        )
    }

    /// Largest wavevector magnitude on the grid (corner mode).
    pub fn k_max(&self) -> f64 {
        let f = 2.0 * std::f64::consts::PI / self.box_len;
        f * (self.n as f64 / 2.0) * 3f64.sqrt()
    }

    /// True if the mode survives the 2/3 rule (`|m| <= n/3` on every axis).
    pub fn in_dealias_band(&self, flat: usize) -> bool {
        let n = self.n;
        let cut = (n / 3) as i64;
        let iz = flat % n;
        let iy = (flat / n) % n;
        let ix = flat / (n * n);
        self.signed(ix).abs() <= cut && self.signed(iy).abs() <= cut && self.signed(iz).abs() <= cut
    }

    /// Zeroes every mode outside the 2/3 band.
    pub fn dealias(&self, spec: &mut [C64]) {
        let n = self.n;
        let cut = (n / 3) as i64;
        spec.par_chunks_mut(n * n).enumerate().for_each(|(ix, plane)| {
            let sx = self.signed(ix).abs();
            for iy in 0..n {
                let sy = self.signed(iy).abs();
                for iz in 0..n {
                    if sx > cut || sy > cut || self.signed(iz).abs() > cut {
                        plane[iy * n + iz] = C64::new(0.0, 0.0);
                    }
                }
            }
        });
    }

    fn pass_z(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        data.par_chunks_mut(n).for_each_init(
            || vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
            |scratch, line| {
                plan.process_with_scratch(line, scratch);
            },
        );
    }

    fn pass_y(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        data.par_chunks_mut(n * n).for_each_init(
            || {
                (
                    vec![C64::new(0.0, 0.0); n],
                    vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
                )
            },
            |(line, scratch), plane| {
                for iz in 0..n {
                    for iy in 0..n {
                        line[iy] = plane[iy * n + iz];
                    }
                    plan.process_with_scratch(line, scratch);
                    for iy in 0..n {
                        plane[iy * n + iz] = line[iy];
                    }
                }
            },
        );
    }

    fn pass_x(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let n2 = n * n;
        // Lines along x for fixed iy span disjoint index sets across iy, so
        // hand each iy to one task through raw pointers.
        struct Ptr(*mut C64);
        unsafe impl Send for Ptr {}
        unsafe impl Sync for Ptr {}
        let base = Ptr(data.as_mut_ptr());
        let base_ref = &base;
        (0..n).into_par_iter().for_each_init(
            || {
                (
                    vec![C64::new(0.0, 0.0); n],
                    vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
                )
            },
            |(line, scratch), iy| {
                let p = base_ref.0;
                for iz in 0..n {
                    for ix in 0..n {
                        line[ix] = unsafe { *p.add(ix * n2 + iy * n + iz) };
                    }
                    plan.process_with_scratch(line, scratch);
                    for ix in 0..n {
                        unsafe { *p.add(ix * n2 + iy * n + iz) = line[ix] };
                    }
                }
            },
        );
    }

    /// In-place forward 3D DFT (unnormalized).
    pub fn fft3(&self, data: &mut [C64]) {
        assert_eq!(data.len(), self.len());
        self.pass_z(data, &self.forward);
        self.pass_y(data, &self.forward);
        self.pass_x(data, &self.forward);
    }

    /// In-place inverse 3D DFT (normalized by `1/n^3`).
    pub fn ifft3(&self, data: &mut [C64]) {
        assert_eq!(data.len(), self.len());
        self.pass_z(data, &self.inverse);
        self.pass_y(data, &self.inverse);
        self.pass_x(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    /// Forward transform of a real field.
    pub fn fft3_real(&self, field: &[f64]) -> Vec<C64> {
        let mut buf: Vec<C64> = field.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.fft3(&mut buf);
        buf
    }

    /// Inverse transform, discarding the imaginary residue (valid for
    /// Hermitian-symmetric spectra).
    pub fn ifft3_to_real(&self, spec: &[C64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.ifft3(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_recovers_field() {
        let g = Grid::new(8, 2.0 * std::f64::consts::PI);
        let field: Vec<f64> = (0..g.len()).map(|i| ((i * 37 % 101) as f64) / 101.0).collect();
        let spec = g.fft3_real(&field);
        let back = g.ifft3_to_real(&spec);
        for (a, b) in field.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_in_one_bin() {
        let n = 16;
        let l = 4.0;
        let g = Grid::new(n, l);
        let kx = 2.0 * std::f64::consts::PI * 3.0 / l;
        let field: Vec<f64> = (0..g.len())
            .map(|flat| {
                let ix = flat / (n * n);
                let x = l * ix as f64 / n as f64;
                (kx * x).cos()
            })
            .collect();
        let spec = g.fft3_real(&field);
        // cos splits into modes (3,0,0) and (-3,0,0) with weight n^3/2
        let hit = g.idx(3, 0, 0);
        let mirror = g.idx(n - 3, 0, 0);
        let expect = g.len() as f64 / 2.0;
        assert!((spec[hit].re - expect).abs() < 1e-9 * expect);
        assert!((spec[mirror].re - expect).abs() < 1e-9 * expect);
        let energy: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
        let in_two = spec[hit].norm_sqr() + spec[mirror].norm_sqr();
        assert!((energy - in_two).abs() < 1e-9 * energy);
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let n = 16;
        let l = 2.0 * std::f64::consts::PI;
        let g = Grid::new(n, l);
        let field: Vec<f64> = (0..g.len())
            .map(|flat| {
                let iy = (flat / n) % n;
                let y = l * iy as f64 / n as f64;
                (2.0 * y).sin()
            })
            .collect();
        let mut spec = g.fft3_real(&field);
        for (flat, v) in spec.iter_mut().enumerate() {
            let k = g.wavevector(flat);
            *v *= C64::new(0.0, k.0[1]);
        }
        let deriv = g.ifft3_to_real(&spec);
        for (flat, d) in deriv.iter().enumerate() {
            let iy = (flat / n) % n;
            let y = l * iy as f64 / n as f64;
            assert!((d - 2.0 * (2.0 * y).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn dealias_keeps_band_and_kills_tail() {
        let g = Grid::new(12, 1.0);
        let mut spec = vec![C64::new(1.0, 0.0); g.len()];
        g.dealias(&mut spec);
        for flat in 0..g.len() {
            let kept = spec[flat].re != 0.0;
            assert_eq!(kept, g.in_dealias_band(flat));
        }
    }
}
