use ndarray::{Array4, Zip};
use num_complex::Complex64;

use super::Grid;
use crate::error::{CoreError, Result};

/// A real field on the collocation grid, shape (components, nx, ny, nz).
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    pub values: Array4<f64>,
}

/// Fourier (horizontal) x Chebyshev (vertical) coefficients of a real field,
/// shape (components, nx, ny, nz). Horizontal modes carry Hermitian symmetry;
/// dealiased modes are kept exactly zero by the operations that build fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub coeffs: Array4<Complex64>,
}

impl PhysicalField {
    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        PhysicalField {
            values: Array4::zeros((ncomp, grid.nx(), grid.ny(), grid.nz())),
        }
    }

    pub fn from_fn(grid: &Grid, ncomp: usize, mut f: impl FnMut(usize, f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, ncomp);
        for c in 0..ncomp {
            for (i, &x) in grid.x.iter().enumerate() {
                for (j, &y) in grid.y.iter().enumerate() {
                    for (k, &z) in grid.z.iter().enumerate() {
                        out.values[[c, i, j, k]] = f(c, x, y, z);
                    }
                }
            }
        }
        out
    }

    pub fn ncomp(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn check_shape(&self, grid: &Grid, what: &'static str) -> Result<()> {
        let sh = self.values.shape();
        if sh[1] != grid.nx() || sh[2] != grid.ny() || sh[3] != grid.nz() {
            return Err(CoreError::ShapeMismatch {
                what,
                expected: vec![sh[0], grid.nx(), grid.ny(), grid.nz()],
                got: sh.to_vec(),
            });
        }
        Ok(())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(what.to_string()));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        PhysicalField {
            values: &self.values * a,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        PhysicalField {
            values: &self.values - &other.values,
        }
    }
}

impl SpectralField {
    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        SpectralField {
            coeffs: Array4::zeros((ncomp, grid.nx(), grid.ny(), grid.nz())),
        }
    }

    pub fn ncomp(&self) -> usize {
        self.coeffs.shape()[0]
    }

    pub fn check_shape(&self, grid: &Grid, what: &'static str) -> Result<()> {
        let sh = self.coeffs.shape();
        if sh[1] != grid.nx() || sh[2] != grid.ny() || sh[3] != grid.nz() {
            return Err(CoreError::ShapeMismatch {
                what,
                expected: vec![sh[0], grid.nx(), grid.ny(), grid.nz()],
                got: sh.to_vec(),
            });
        }
        Ok(())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.coeffs.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(CoreError::NonFinite(what.to_string()));
        }
        Ok(())
    }

    /// self += a * other
    pub fn axpy(&mut self, a: f64, other: &Self) {
        Zip::from(&mut self.coeffs)
            .and(&other.coeffs)
            .for_each(|s, &o| *s += a * o);
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.mapv_inplace(|v| v * a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        SpectralField {
            coeffs: self.coeffs.mapv(|v| v * a),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        SpectralField {
            coeffs: &self.coeffs + &other.coeffs,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        SpectralField {
            coeffs: &self.coeffs - &other.coeffs,
        }
    }

    /// Max coefficient magnitude (cheap divergence sentinel).
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Zero out dealiased horizontal modes.
    pub fn apply_mask(&mut self, grid: &Grid) {
        let ncomp = self.ncomp();
        for c in 0..ncomp {
            for ix in 0..grid.nx() {
                for iy in 0..grid.ny() {
                    if !grid.mask[[ix, iy]] {
                        for m in 0..grid.nz() {
                            self.coeffs[[c, ix, iy, m]] = Complex64::new(0.0, 0.0);
                        }
                    }
                }
            }
        }
    }

    /// Total squared coefficient magnitude over masked (dealiased) modes.
    pub fn masked_energy(&self, grid: &Grid) -> f64 {
        let mut e = 0.0;
        for c in 0..self.ncomp() {
            for ix in 0..grid.nx() {
                for iy in 0..grid.ny() {
                    if !grid.mask[[ix, iy]] {
                        for m in 0..grid.nz() {
                            e += self.coeffs[[c, ix, iy, m]].norm_sqr();
                        }
                    }
                }
            }
        }
        e
    }
}
