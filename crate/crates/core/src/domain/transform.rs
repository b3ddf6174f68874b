use ndarray::{Array1, Array4};
use num_complex::Complex64;

use super::{Grid, PhysicalField, SpectralField};
use crate::error::Result;

impl Grid {
    /// In-place FFT along the x axis of an (nx, ny, nzl) complex tensor.
    fn fft_axis_x(&self, data: &mut Array4<Complex64>, comp: usize, nzl: usize, forward: bool) {
        let nx = self.nx();
        let ny = data.shape()[2];
        let fft = if forward { self.fft_x() } else { self.ifft_x() };
        let mut line = vec![Complex64::default(); nx];
        for iy in 0..ny {
            for iz in 0..nzl {
                for ix in 0..nx {
                    line[ix] = data[[comp, ix, iy, iz]];
                }
                fft.process(&mut line);
                for ix in 0..nx {
                    data[[comp, ix, iy, iz]] = line[ix];
                }
            }
        }
    }

    fn fft_axis_y(&self, data: &mut Array4<Complex64>, comp: usize, nzl: usize, forward: bool) {
        let nx = data.shape()[1];
        let ny = self.ny();
        let fft = if forward { self.fft_y() } else { self.ifft_y() };
        let mut line = vec![Complex64::default(); ny];
        for ix in 0..nx {
            for iz in 0..nzl {
                for iy in 0..ny {
                    line[iy] = data[[comp, ix, iy, iz]];
                }
                fft.process(&mut line);
                for iy in 0..ny {
                    data[[comp, ix, iy, iz]] = line[iy];
                }
            }
        }
    }

    /// Forward transform: collocation values -> Fourier x Chebyshev coefficients.
    pub fn to_spectral(&self, f: &PhysicalField) -> Result<SpectralField> {
        f.check_shape(self, "to_spectral input")?;
        let ncomp = f.ncomp();
        let (nx, ny, nz) = (self.nx(), self.ny(), self.nz());
        let mut work = Array4::<Complex64>::zeros((ncomp, nx, ny, nz));
        for c in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    for iz in 0..nz {
                        work[[c, ix, iy, iz]] = Complex64::new(f.values[[c, ix, iy, iz]], 0.0);
                    }
                }
            }
            self.fft_axis_x(&mut work, c, nz, true);
            self.fft_axis_y(&mut work, c, nz, true);
        }
        let norm = 1.0 / (nx * ny) as f64;
        let mut out = Array4::<Complex64>::zeros((ncomp, nx, ny, nz));
        let mut col = vec![Complex64::default(); nz];
        for c in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    for iz in 0..nz {
                        col[iz] = work[[c, ix, iy, iz]] * norm;
                    }
                    for m in 0..nz {
                        let mut s = Complex64::default();
                        for j in 0..nz {
                            s += self.cheb_analysis[[m, j]] * col[j];
                        }
                        out[[c, ix, iy, m]] = s;
                    }
                }
            }
        }
        Ok(SpectralField { coeffs: out })
    }

    /// Inverse transform: coefficients -> collocation values (real part).
    pub fn to_physical(&self, c: &SpectralField) -> Result<PhysicalField> {
        c.check_shape(self, "to_physical input")?;
        let ncomp = c.ncomp();
        let (nx, ny, nz) = (self.nx(), self.ny(), self.nz());
        let mut work = Array4::<Complex64>::zeros((ncomp, nx, ny, nz));
        let mut col = vec![Complex64::default(); nz];
        for comp in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    for m in 0..nz {
                        col[m] = c.coeffs[[comp, ix, iy, m]];
                    }
                    for j in 0..nz {
                        let mut s = Complex64::default();
                        for m in 0..nz {
                            s += self.cheb_synth[[j, m]] * col[m];
                        }
                        work[[comp, ix, iy, j]] = s;
                    }
                }
            }
            self.fft_axis_x(&mut work, comp, nz, false);
            self.fft_axis_y(&mut work, comp, nz, false);
        }
        let mut out = Array4::<f64>::zeros((ncomp, nx, ny, nz));
        for comp in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    for iz in 0..nz {
                        out[[comp, ix, iy, iz]] = work[[comp, ix, iy, iz]].re;
                    }
                }
            }
        }
        Ok(PhysicalField { values: out })
    }

    /// Largest imaginary residue of the inverse transform; ~1e-16 per mode for
    /// Hermitian-symmetric coefficients.
    pub fn imag_residual(&self, c: &SpectralField) -> f64 {
        let ncomp = c.ncomp();
        let (nx, ny, nz) = (self.nx(), self.ny(), self.nz());
        let mut work = Array4::<Complex64>::zeros((ncomp, nx, ny, nz));
        let mut col = vec![Complex64::default(); nz];
        let mut max_im: f64 = 0.0;
        for comp in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    for m in 0..nz {
                        col[m] = c.coeffs[[comp, ix, iy, m]];
                    }
                    for j in 0..nz {
                        let mut s = Complex64::default();
                        for m in 0..nz {
                            s += self.cheb_synth[[j, m]] * col[m];
                        }
                        work[[comp, ix, iy, j]] = s;
                    }
                }
            }
            self.fft_axis_x(&mut work, comp, nz, false);
            self.fft_axis_y(&mut work, comp, nz, false);
            for v in work.iter() {
                max_im = max_im.max(v.im.abs());
            }
        }
        max_im
    }

    /// Synthesize on the vertically padded grid used for dealiased products.
    pub fn to_physical_padded(&self, c: &SpectralField) -> Array4<f64> {
        let ncomp = c.ncomp();
        let (nx, ny, nz, mz) = (self.nx(), self.ny(), self.nz(), self.mz);
        let mut work = Array4::<Complex64>::zeros((ncomp, nx, ny, mz));
        let mut col = vec![Complex64::default(); nz];
        for comp in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    for m in 0..nz {
                        col[m] = c.coeffs[[comp, ix, iy, m]];
                    }
                    for j in 0..mz {
                        let mut s = Complex64::default();
                        for m in 0..nz {
                            s += self.pad_synth[[j, m]] * col[m];
                        }
                        work[[comp, ix, iy, j]] = s;
                    }
                }
            }
            self.fft_axis_x(&mut work, comp, mz, false);
            self.fft_axis_y(&mut work, comp, mz, false);
        }
        let mut out = Array4::<f64>::zeros((ncomp, nx, ny, mz));
        for comp in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    for iz in 0..mz {
                        out[[comp, ix, iy, iz]] = work[[comp, ix, iy, iz]].re;
                    }
                }
            }
        }
        out
    }

    /// Analyze a padded-grid field back to nz coefficients (products are then
    /// alias-free in the vertical after this truncation). Horizontal dealias
    /// mask is applied.
    pub fn from_physical_padded(&self, vals: &Array4<f64>) -> SpectralField {
        let ncomp = vals.shape()[0];
        let (nx, ny, nz, mz) = (self.nx(), self.ny(), self.nz(), self.mz);
        let mut work = Array4::<Complex64>::zeros((ncomp, nx, ny, mz));
        for comp in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    for iz in 0..mz {
                        work[[comp, ix, iy, iz]] = Complex64::new(vals[[comp, ix, iy, iz]], 0.0);
                    }
                }
            }
            self.fft_axis_x(&mut work, comp, mz, true);
            self.fft_axis_y(&mut work, comp, mz, true);
        }
        let norm = 1.0 / (nx * ny) as f64;
        let mut out = Array4::<Complex64>::zeros((ncomp, nx, ny, nz));
        let mut col = vec![Complex64::default(); mz];
        for comp in 0..ncomp {
            for ix in 0..nx {
                for iy in 0..ny {
                    if !self.mask[[ix, iy]] {
                        continue;
                    }
                    for j in 0..mz {
                        col[j] = work[[comp, ix, iy, j]] * norm;
                    }
                    for m in 0..nz {
                        let mut s = Complex64::default();
                        for j in 0..mz {
                            s += self.pad_analysis[[m, j]] * col[j];
                        }
                        out[[comp, ix, iy, m]] = s;
                    }
                }
            }
        }
        SpectralField { coeffs: out }
    }

    /// Spectral d/dx.
    pub fn dx(&self, f: &SpectralField) -> SpectralField {
        let mut out = f.clone();
        for c in 0..f.ncomp() {
            for ix in 0..self.nx() {
                let ik = Complex64::new(0.0, self.kx[ix]);
                for iy in 0..self.ny() {
                    for m in 0..self.nz() {
                        out.coeffs[[c, ix, iy, m]] = f.coeffs[[c, ix, iy, m]] * ik;
                    }
                }
            }
        }
        out
    }

    /// Spectral d/dy.
    pub fn dy(&self, f: &SpectralField) -> SpectralField {
        let mut out = f.clone();
        for c in 0..f.ncomp() {
            for iy in 0..self.ny() {
                let ik = Complex64::new(0.0, self.ky[iy]);
                for ix in 0..self.nx() {
                    for m in 0..self.nz() {
                        out.coeffs[[c, ix, iy, m]] = f.coeffs[[c, ix, iy, m]] * ik;
                    }
                }
            }
        }
        out
    }

    /// Chebyshev d/dz (coefficient recurrence).
    pub fn dz(&self, f: &SpectralField) -> SpectralField {
        self.apply_vertical_matrix(f, &self.dz_coeff)
    }

    /// Apply an (nz x nz) real matrix to every vertical coefficient column.
    pub fn apply_vertical_matrix(&self, f: &SpectralField, mat: &ndarray::Array2<f64>) -> SpectralField {
        let mut out = SpectralField {
            coeffs: Array4::zeros(f.coeffs.raw_dim()),
        };
        let nz = self.nz();
        let mut col = vec![Complex64::default(); nz];
        for c in 0..f.ncomp() {
            for ix in 0..self.nx() {
                for iy in 0..self.ny() {
                    for m in 0..nz {
                        col[m] = f.coeffs[[c, ix, iy, m]];
                    }
                    for m in 0..nz {
                        let mut s = Complex64::default();
                        for n in 0..nz {
                            s += mat[[m, n]] * col[n];
                        }
                        out.coeffs[[c, ix, iy, m]] = s;
                    }
                }
            }
        }
        out
    }

    /// Laplacian: -|k|^2 + d2/dz2 per horizontal mode.
    pub fn laplacian(&self, f: &SpectralField) -> SpectralField {
        let mut out = self.apply_vertical_matrix(f, &self.dzz_coeff);
        for c in 0..f.ncomp() {
            for ix in 0..self.nx() {
                for iy in 0..self.ny() {
                    let k2 = self.kx[ix] * self.kx[ix] + self.ky[iy] * self.ky[iy];
                    for m in 0..self.nz() {
                        out.coeffs[[c, ix, iy, m]] -= k2 * f.coeffs[[c, ix, iy, m]];
                    }
                }
            }
        }
        out
    }

    /// Value at the bottom boundary z = -l of one coefficient column.
    pub fn bottom_value(col: &[Complex64]) -> Complex64 {
        let mut s = Complex64::default();
        for (m, a) in col.iter().enumerate() {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * a;
        }
        s
    }

    /// dz-derivative at the top boundary z = 0 of one coefficient column
    /// (T_m'(1) = m^2, scaled by the [-1,1] -> [-l,0] map).
    pub fn top_derivative(&self, col: &[Complex64]) -> Complex64 {
        let mut s = Complex64::default();
        for (m, a) in col.iter().enumerate() {
            s += ((m * m) as f64) * a;
        }
        s * (2.0 / self.spec.l)
    }

    /// Copy one vertical coefficient column.
    pub fn column(f: &SpectralField, c: usize, ix: usize, iy: usize) -> Array1<Complex64> {
        let nz = f.coeffs.shape()[3];
        Array1::from_iter((0..nz).map(|m| f.coeffs[[c, ix, iy, m]]))
    }
}
