use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::{Fft, FftPlanner};

use super::DomainSpec;
use crate::error::Result;

/// Horizontal mode index pair (signed integer wavenumbers).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeIndex {
    /// Array index along x.
    pub ix: usize,
    /// Array index along y.
    pub iy: usize,
    /// Signed integer wavenumber along x.
    pub kx: i32,
    /// Signed integer wavenumber along y.
    pub ky: i32,
}

/// Precomputed discretization machinery for one `DomainSpec`: collocation
/// points, Fourier wavenumbers, Chebyshev transform/derivative/integration
/// matrices, quadrature weights and the dealias mask.
///
/// Immutable after construction; all field operations are pure methods that
/// take the grid as context, so concurrent use is safe.
pub struct Grid {
    pub spec: DomainSpec,

    /// Horizontal collocation points.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Vertical Chebyshev-Gauss-Lobatto points on [-l, 0]; z[0] = 0 (top),
    /// z[nz-1] = -l (bottom).
    pub z: Vec<f64>,

    /// Signed integer wavenumbers per array index.
    pub kx_idx: Vec<i32>,
    pub ky_idx: Vec<i32>,
    /// Physical wavenumbers 2*pi*k/L.
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,

    /// Dealias mask (true = mode kept).
    pub mask: Array2<bool>,
    /// Kept modes, canonical half-lattice (ky > 0, or ky == 0 and kx >= 0),
    /// sorted deterministically. Mirror modes are filled by conjugation.
    pub half_modes: Vec<ModeIndex>,
    /// All kept modes.
    pub active_modes: Vec<ModeIndex>,

    /// Chebyshev synthesis: values at CGL points from coefficients (nz x nz).
    pub cheb_synth: Array2<f64>,
    /// Chebyshev analysis: coefficients from values (nz x nz), exact inverse
    /// of `cheb_synth` for polynomial data.
    pub cheb_analysis: Array2<f64>,
    /// Synthesis onto the padded vertical grid used for products (mz x nz).
    pub pad_synth: Array2<f64>,
    /// Analysis from the padded grid, truncated to nz coefficients (nz x mz).
    pub pad_analysis: Array2<f64>,
    /// Number of padded vertical points (>= ceil(3 nz / 2)).
    pub mz: usize,

    /// d/dz in coefficient space (nz x nz).
    pub dz_coeff: Array2<f64>,
    /// d2/dz2 in coefficient space.
    pub dzz_coeff: Array2<f64>,
    /// Integral from the bottom, (Iv a)_m = coefficients of z -> int_{-l}^{z} f,
    /// normalized so the result vanishes at z = -l.
    pub int_from_bottom: Array2<f64>,
    /// Coefficient functional for the vertical average (1/l) int_{-l}^0 f dz.
    pub avg_weights: Vec<f64>,
    /// Clenshaw-Curtis quadrature weights on the CGL points for int_{-l}^0.
    pub zq_weights: Vec<f64>,
    /// Quadrature weights on the padded CGL grid.
    pub zq_weights_pad: Vec<f64>,
    /// Chebyshev mass matrix M[m][n] = int_{-l}^0 T_m T_n dz.
    pub mass: Array2<f64>,
    /// Lower Cholesky factor of `mass`.
    pub mass_chol: Array2<f64>,
    /// Horizontal quadrature weight per grid point, (lx/nx)*(ly/ny).
    pub hq_weight: f64,

    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

/// cos(pi m j / (n-1)) with the index reduced mod 2(n-1) so the boundary rows
/// come out as exact +-1.
fn cgl_cos(m: usize, j: usize, n: usize) -> f64 {
    let p = (m * j) % (2 * (n - 1));
    (PI * p as f64 / (n - 1) as f64).cos()
}

/// Chebyshev synthesis matrix on an n-point CGL grid for coefficients of
/// degree < ncoef: S[j][m] = T_m(xi_j) = cos(pi m j / (n-1)).
fn synth_matrix(n: usize, ncoef: usize) -> Array2<f64> {
    let mut s = Array2::zeros((n, ncoef));
    for j in 0..n {
        for m in 0..ncoef {
            s[[j, m]] = cgl_cos(m, j, n);
        }
    }
    s
}

/// Chebyshev analysis matrix (DCT-I with endpoint halving), exact inverse of
/// `synth_matrix(n, n)` on polynomial data.
fn analysis_matrix(n: usize) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    let nm1 = (n - 1) as f64;
    let c = |i: usize| if i == 0 || i == n - 1 { 2.0 } else { 1.0 };
    for m in 0..n {
        for j in 0..n {
            a[[m, j]] = 2.0 / (nm1 * c(m) * c(j)) * cgl_cos(m, j, n);
        }
    }
    a
}

/// d/dxi in Chebyshev coefficient space: b_m = (2/c_m) sum_{n>m, n-m odd} n a_n.
fn deriv_coeff_matrix(n: usize) -> Array2<f64> {
    let mut d = Array2::zeros((n, n));
    for m in 0..n {
        let cm = if m == 0 { 2.0 } else { 1.0 };
        let mut k = m + 1;
        while k < n {
            d[[m, k]] = 2.0 * k as f64 / cm;
            k += 2;
        }
    }
    d
}

/// int_{-1}^{1} T_p dxi.
fn cheb_definite_integral(p: usize) -> f64 {
    if p % 2 == 0 {
        2.0 / (1.0 - (p * p) as f64)
    } else {
        0.0
    }
}

/// Antiderivative from xi = -1 in coefficient space: (Iv a) are the
/// coefficients of xi -> int_{-1}^{xi} f, with the T_0 coefficient fixed so
/// the result vanishes at xi = -1. The degree-n spillover row is truncated.
fn int_from_bottom_matrix(n: usize) -> Array2<f64> {
    let mut iv = Array2::zeros((n, n));
    for m in 1..n {
        // contribution of a_{m-1}
        let chat = if m - 1 == 0 { 2.0 } else { 1.0 };
        iv[[m, m - 1]] += chat / (2.0 * m as f64);
        // contribution of a_{m+1}
        if m + 1 < n {
            iv[[m, m + 1]] -= 1.0 / (2.0 * m as f64);
        }
    }
    // A_0 = -sum_{m>=1} (-1)^m A_m so that the value at xi = -1 is zero.
    for col in 0..n {
        let mut s = 0.0;
        for m in 1..n {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * iv[[m, col]];
        }
        iv[[0, col]] = -s;
    }
    iv
}

/// Interpolatory Clenshaw-Curtis weights on the n-point CGL grid for
/// int_{-1}^{1}, computed as w = A^T i with i the exact Chebyshev moments.
fn cc_weights(n: usize, analysis: &Array2<f64>) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for j in 0..n {
        let mut s = 0.0;
        for m in 0..n {
            s += analysis[[m, j]] * cheb_definite_integral(m);
        }
        w[j] = s;
    }
    w
}

/// Dense Cholesky of a small symmetric positive definite matrix.
fn cholesky(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                assert!(s > 0.0, "mass matrix not positive definite");
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    l
}

fn wavenumbers(n: usize) -> Vec<i32> {
    (0..n)
        .map(|i| {
            if i <= n / 2 {
                i as i32
            } else {
                i as i32 - n as i32
            }
        })
        .collect()
}

impl Grid {
    pub fn new(spec: DomainSpec) -> Result<Grid> {
        spec.validate()?;
        let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
        let l = spec.l;

        let x: Vec<f64> = (0..nx).map(|i| i as f64 * spec.lx / nx as f64).collect();
        let y: Vec<f64> = (0..ny).map(|j| j as f64 * spec.ly / ny as f64).collect();
        // xi_j = cos(pi j/(nz-1)); z = (xi - 1) l / 2 maps to [-l, 0].
        let z: Vec<f64> = (0..nz)
            .map(|j| ((PI * j as f64 / (nz - 1) as f64).cos() - 1.0) * l / 2.0)
            .collect();

        let kx_idx = wavenumbers(nx);
        let ky_idx = wavenumbers(ny);
        let kx: Vec<f64> = kx_idx.iter().map(|&k| 2.0 * PI * k as f64 / spec.lx).collect();
        let ky: Vec<f64> = ky_idx.iter().map(|&k| 2.0 * PI * k as f64 / spec.ly).collect();

        let kx_keep = (spec.dealias * nx as f64 / 2.0).floor() as i32;
        let ky_keep = (spec.dealias * ny as f64 / 2.0).floor() as i32;
        let mut mask = Array2::from_elem((nx, ny), false);
        let mut active_modes = Vec::new();
        let mut half_modes = Vec::new();
        for ix in 0..nx {
            for iy in 0..ny {
                let (kxi, kyi) = (kx_idx[ix], ky_idx[iy]);
                let keep = kxi.abs() <= kx_keep && kyi.abs() <= ky_keep;
                mask[[ix, iy]] = keep;
                if keep {
                    let m = ModeIndex { ix, iy, kx: kxi, ky: kyi };
                    active_modes.push(m);
                    if kyi > 0 || (kyi == 0 && kxi >= 0) {
                        half_modes.push(m);
                    }
                }
            }
        }

        let cheb_synth = synth_matrix(nz, nz);
        let cheb_analysis = analysis_matrix(nz);
        let mz = (3 * nz).div_ceil(2);
        let pad_synth = synth_matrix(mz, nz);
        let pad_full_analysis = analysis_matrix(mz);
        let pad_analysis = pad_full_analysis.slice(ndarray::s![0..nz, ..]).to_owned();

        // d/dz = (2/l) d/dxi
        let dxi = deriv_coeff_matrix(nz);
        let dz_coeff = dxi.mapv(|v| v * 2.0 / l);
        let dzz_coeff = dz_coeff.dot(&dz_coeff);
        // int_{-l}^{z} = (l/2) int over xi
        let int_from_bottom = int_from_bottom_matrix(nz).mapv(|v| v * l / 2.0);

        // (1/l) int_{-l}^0 T_m dz = (1/2) int_{-1}^{1} T_m dxi
        let avg_weights: Vec<f64> = (0..nz).map(|m| 0.5 * cheb_definite_integral(m)).collect();
        let zq_weights: Vec<f64> = cc_weights(nz, &cheb_analysis)
            .into_iter()
            .map(|w| w * l / 2.0)
            .collect();
        let zq_weights_pad: Vec<f64> = cc_weights(mz, &pad_full_analysis)
            .into_iter()
            .map(|w| w * l / 2.0)
            .collect();

        // mass[m][n] = int_{-l}^0 T_m T_n dz, closed form.
        let mut mass = Array2::zeros((nz, nz));
        for m in 0..nz {
            for n in 0..nz {
                let ip = cheb_definite_integral(m + n) + cheb_definite_integral(m.abs_diff(n));
                mass[[m, n]] = 0.5 * ip * l / 2.0;
            }
        }
        let mass_chol = cholesky(&mass);

        let mut planner = FftPlanner::<f64>::new();
        let fft_x = planner.plan_fft_forward(nx);
        let ifft_x = planner.plan_fft_inverse(nx);
        let fft_y = planner.plan_fft_forward(ny);
        let ifft_y = planner.plan_fft_inverse(ny);

        Ok(Grid {
            hq_weight: (spec.lx / nx as f64) * (spec.ly / ny as f64),
            spec,
            x,
            y,
            z,
            kx_idx,
            ky_idx,
            kx,
            ky,
            mask,
            half_modes,
            active_modes,
            cheb_synth,
            cheb_analysis,
            pad_synth,
            pad_analysis,
            mz,
            dz_coeff,
            dzz_coeff,
            int_from_bottom,
            avg_weights,
            zq_weights,
            zq_weights_pad,
            mass,
            mass_chol,
            fft_x: fft_x,
            ifft_x,
            fft_y,
            ifft_y,
        })
    }

    pub fn nx(&self) -> usize {
        self.spec.nx
    }
    pub fn ny(&self) -> usize {
        self.spec.ny
    }
    pub fn nz(&self) -> usize {
        self.spec.nz
    }

    /// |k|^2 for an active mode.
    pub fn k2(&self, m: &ModeIndex) -> f64 {
        self.kx[m.ix] * self.kx[m.ix] + self.ky[m.iy] * self.ky[m.iy]
    }

    /// Array indices of the conjugate mode (-kx, -ky).
    pub fn mirror(&self, m: &ModeIndex) -> (usize, usize) {
        let nx = self.nx();
        let ny = self.ny();
        ((nx - m.ix) % nx, (ny - m.iy) % ny)
    }

    pub(crate) fn fft_x(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft_x
    }
    pub(crate) fn ifft_x(&self) -> &Arc<dyn Fft<f64>> {
        &self.ifft_x
    }
    pub(crate) fn fft_y(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft_y
    }
    pub(crate) fn ifft_y(&self) -> &Arc<dyn Fft<f64>> {
        &self.ifft_y
    }

    /// Minimal vertical grid spacing (boundary clustering scale).
    pub fn dz_min(&self) -> f64 {
        self.z
            .windows(2)
            .map(|w| (w[0] - w[1]).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn analysis_inverts_synthesis() {
        for n in [5, 9, 17] {
            let s = synth_matrix(n, n);
            let a = analysis_matrix(n);
            let prod = a.dot(&s);
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (prod[[i, j]] - expect).abs() < 1e-12,
                        "n={n} ({i},{j}): {}",
                        prod[[i, j]]
                    );
                }
            }
        }
    }

    #[test]
    fn derivative_matrix_on_monomials() {
        // f(xi) = T_3(xi) = 4 xi^3 - 3 xi, f' = 12 xi^2 - 3 = 6 T_2 - 3 T_0 ... check via values
        let n = 9;
        let d = deriv_coeff_matrix(n);
        let mut a = Array1::<f64>::zeros(n);
        a[3] = 1.0;
        let b = d.dot(&a);
        // T_3' = 3 U_2 = 3 (4 xi^2 - 1) = 6 T_2 + 3 T_0
        assert!((b[0] - 3.0).abs() < 1e-13);
        assert!((b[2] - 6.0).abs() < 1e-13);
        for m in [1, 3, 4, 5, 6, 7, 8] {
            assert!(b[m].abs() < 1e-13);
        }
    }

    #[test]
    fn integral_from_bottom_vanishes_at_bottom() {
        let n = 9;
        let iv = int_from_bottom_matrix(n);
        let s = synth_matrix(n, n);
        // random-ish coefficients; degree <= n-2 so the antiderivative has no
        // spillover past the stored coefficient range
        let mut a = Array1::from_iter((0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 2.0));
        a[n - 1] = 0.0;
        let ia = iv.dot(&a);
        let vals = s.dot(&ia);
        // xi_{n-1} = -1 is the last CGL point
        assert!(vals[n - 1].abs() < 1e-13, "bottom value {}", vals[n - 1]);
        // derivative of the antiderivative recovers the input
        let d = deriv_coeff_matrix(n);
        let back = d.dot(&ia);
        for m in 0..n {
            assert!((back[m] - a[m]).abs() < 1e-12, "m={m}: {} vs {}", back[m], a[m]);
        }
    }

    #[test]
    fn cc_weights_integrate_polynomials() {
        let n = 9;
        let a = analysis_matrix(n);
        let w = cc_weights(n, &a);
        let s = synth_matrix(n, n);
        // integral of T_2 over [-1,1] is -2/3
        let mut c = Array1::<f64>::zeros(n);
        c[2] = 1.0;
        let vals = s.dot(&c);
        let q: f64 = vals.iter().zip(&w).map(|(v, w)| v * w).sum();
        assert!((q - (-2.0 / 3.0)).abs() < 1e-13);
    }

    #[test]
    fn grid_constructs_and_masks() {
        let spec = DomainSpec::new(1.0, 16, 16, 17).unwrap();
        let g = Grid::new(spec).unwrap();
        assert_eq!(g.z[0], 0.0);
        assert!((g.z[16] + 1.0).abs() < 1e-15);
        // 2/3 rule keeps |k| <= 5 on 16 modes
        assert!(g.mask[[5, 0]]);
        assert!(!g.mask[[6, 0]]);
        assert_eq!(g.active_modes.len(), 11 * 11);
    }
}
