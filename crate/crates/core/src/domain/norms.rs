use num_complex::Complex64;

use super::{Grid, PhysicalField, SpectralField};
use crate::error::{CoreError, Result};

/// Physical-space first derivatives of a field, one entry per direction.
pub struct GradientFields {
    pub ddx: PhysicalField,
    pub ddy: PhysicalField,
    pub ddz: PhysicalField,
}

impl Grid {
    /// Discrete L^q(Omega) norm by trapezoid (horizontal, periodic-uniform)
    /// x Clenshaw-Curtis (vertical) quadrature. Multi-component fields use the
    /// pointwise Euclidean magnitude. q = infinity returns the max magnitude.
    pub fn lebesgue_norm(&self, f: &PhysicalField, q: f64) -> Result<f64> {
        f.check_shape(self, "lebesgue_norm input")?;
        f.check_finite("lebesgue_norm input")?;
        if !(q >= 1.0) {
            return Err(CoreError::invalid("q", "must satisfy q >= 1"));
        }
        let ncomp = f.ncomp();
        let (nx, ny, nz) = (self.nx(), self.ny(), self.nz());
        if q.is_infinite() {
            let mut m: f64 = 0.0;
            for ix in 0..nx {
                for iy in 0..ny {
                    for iz in 0..nz {
                        let mut p2 = 0.0;
                        for c in 0..ncomp {
                            let v = f.values[[c, ix, iy, iz]];
                            p2 += v * v;
                        }
                        m = m.max(p2.sqrt());
                    }
                }
            }
            return Ok(m);
        }
        let mut acc = 0.0;
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let mut p2 = 0.0;
                    for c in 0..ncomp {
                        let v = f.values[[c, ix, iy, iz]];
                        p2 += v * v;
                    }
                    acc += self.hq_weight * self.zq_weights[iz] * p2.sqrt().powf(q);
                }
            }
        }
        Ok(acc.powf(1.0 / q))
    }

    /// Squared L^2 norm straight from coefficients via Parseval:
    /// lx ly sum_k a_k^H M a_k with M the Chebyshev mass matrix.
    pub fn parseval_l2_sq(&self, f: &SpectralField) -> f64 {
        let nz = self.nz();
        let mut col = vec![Complex64::default(); nz];
        let mut acc = 0.0;
        for c in 0..f.ncomp() {
            for ix in 0..self.nx() {
                for iy in 0..self.ny() {
                    for m in 0..nz {
                        col[m] = f.coeffs[[c, ix, iy, m]];
                    }
                    for m in 0..nz {
                        for n in 0..nz {
                            acc += self.mass[[m, n]] * (col[m].conj() * col[n]).re;
                        }
                    }
                }
            }
        }
        acc * self.spec.lx * self.spec.ly
    }

    /// Exact discrete L^2 inner product of two spectral fields through the
    /// Chebyshev mass matrix (no quadrature aliasing).
    pub fn l2_inner(&self, a: &SpectralField, b: &SpectralField) -> f64 {
        let nz = self.nz();
        let mut acc = 0.0;
        let mut ca = vec![Complex64::default(); nz];
        let mut cb = vec![Complex64::default(); nz];
        for c in 0..a.ncomp().min(b.ncomp()) {
            for ix in 0..self.nx() {
                for iy in 0..self.ny() {
                    for m in 0..nz {
                        ca[m] = a.coeffs[[c, ix, iy, m]];
                        cb[m] = b.coeffs[[c, ix, iy, m]];
                    }
                    for m in 0..nz {
                        for n in 0..nz {
                            acc += self.mass[[m, n]] * (ca[m].conj() * cb[n]).re;
                        }
                    }
                }
            }
        }
        acc * self.spec.lx * self.spec.ly
    }

    /// Physical first derivatives of all components.
    pub fn gradient(&self, f: &SpectralField) -> Result<GradientFields> {
        Ok(GradientFields {
            ddx: self.to_physical(&self.dx(f))?,
            ddy: self.to_physical(&self.dy(f))?,
            ddz: self.to_physical(&self.dz(f))?,
        })
    }

    /// L^q norm of the pointwise gradient magnitude
    /// sqrt(sum_c |d_x f_c|^2 + |d_y f_c|^2 + |d_z f_c|^2).
    pub fn gradient_norm(&self, f: &SpectralField, q: f64) -> Result<f64> {
        let g = self.gradient(f)?;
        let ncomp = f.ncomp();
        let mut mag = PhysicalField::zeros(self, 1);
        for ix in 0..self.nx() {
            for iy in 0..self.ny() {
                for iz in 0..self.nz() {
                    let mut p2 = 0.0;
                    for c in 0..ncomp {
                        p2 += g.ddx.values[[c, ix, iy, iz]].powi(2)
                            + g.ddy.values[[c, ix, iy, iz]].powi(2)
                            + g.ddz.values[[c, ix, iy, iz]].powi(2);
                    }
                    mag.values[[0, ix, iy, iz]] = p2.sqrt();
                }
            }
        }
        self.lebesgue_norm(&mag, q)
    }

    /// Pointwise magnitude of the order-j derivative tensor with multinomial
    /// weights: |D^j f|(x)^2 = sum_c sum_{|alpha|=j} (j!/alpha!) |d^alpha f_c|^2.
    /// For a single Fourier mode this reproduces the symbol |k|^{2j}.
    fn derivative_tensor_magnitude(&self, f: &SpectralField, j: usize) -> Result<PhysicalField> {
        let ncomp = f.ncomp();
        let mut out = PhysicalField::zeros(self, 1);
        if j == 0 {
            let phys = self.to_physical(f)?;
            for ix in 0..self.nx() {
                for iy in 0..self.ny() {
                    for iz in 0..self.nz() {
                        let mut p2 = 0.0;
                        for c in 0..ncomp {
                            p2 += phys.values[[c, ix, iy, iz]].powi(2);
                        }
                        out.values[[0, ix, iy, iz]] = p2.sqrt();
                    }
                }
            }
            return Ok(out);
        }
        let factorial = |n: usize| -> f64 { (1..=n).map(|v| v as f64).product::<f64>().max(1.0) };
        let mut acc = PhysicalField::zeros(self, 1);
        for a1 in 0..=j {
            for a2 in 0..=(j - a1) {
                let a3 = j - a1 - a2;
                let weight = factorial(j) / (factorial(a1) * factorial(a2) * factorial(a3));
                let mut d = f.clone();
                for _ in 0..a1 {
                    d = self.dx(&d);
                }
                for _ in 0..a2 {
                    d = self.dy(&d);
                }
                for _ in 0..a3 {
                    d = self.dz(&d);
                }
                let phys = self.to_physical(&d)?;
                for ix in 0..self.nx() {
                    for iy in 0..self.ny() {
                        for iz in 0..self.nz() {
                            let mut p2 = 0.0;
                            for c in 0..ncomp {
                                p2 += phys.values[[c, ix, iy, iz]].powi(2);
                            }
                            acc.values[[0, ix, iy, iz]] += weight * p2;
                        }
                    }
                }
            }
        }
        for v in acc.values.iter_mut() {
            *v = v.sqrt();
        }
        Ok(acc)
    }

    /// L^q norm of the order-j derivative tensor magnitude (the homogeneous
    /// Sobolev seminorm route used by the resolvent diagnostics).
    pub fn sobolev_seminorm(&self, f: &SpectralField, j: usize, q: f64) -> Result<f64> {
        let mag = self.derivative_tensor_magnitude(f, j)?;
        self.lebesgue_norm(&mag, q)
    }

    /// Discrete H^{s,q}(Omega) norm.
    ///
    /// Integer s: (sum_{j<=s} ||D^j f||_q^q)^{1/q} via spectral derivatives.
    /// Fractional s with q = 2: coefficient functional with the
    /// (1 + |k|^2 + m^2)^{s/2} weight in a mass-orthonormalized vertical basis
    /// (reduces exactly to L^2 at s = 0).
    /// Fractional s with q != 2: interpolation proxy
    /// ||f||_{L^q}^{1-theta} ||f||_{H^{ceil(s),q}}^theta, theta = s/ceil(s).
    /// The fractional branches are diagnostics, not exact Besov norms.
    pub fn sobolev_norm(&self, f: &SpectralField, s: f64, q: f64) -> Result<f64> {
        f.check_shape(self, "sobolev_norm input")?;
        if !(s >= 0.0) {
            return Err(CoreError::invalid("s", "must satisfy s >= 0"));
        }
        if !(q >= 1.0) {
            return Err(CoreError::invalid("q", "must satisfy q >= 1"));
        }
        let s_int = s.round();
        if (s - s_int).abs() < 1e-12 {
            let order = s_int as usize;
            if q.is_infinite() {
                let mut m: f64 = 0.0;
                for j in 0..=order {
                    let mag = self.derivative_tensor_magnitude(f, j)?;
                    m = m.max(mag.max_abs());
                }
                return Ok(m);
            }
            let mut acc = 0.0;
            for j in 0..=order {
                let mag = self.derivative_tensor_magnitude(f, j)?;
                acc += self.lebesgue_norm(&mag, q)?.powf(q);
            }
            return Ok(acc.powf(1.0 / q));
        }
        if (q - 2.0).abs() < 1e-12 {
            return Ok(self.fractional_h_s_2(f, s));
        }
        let ceil = s.ceil();
        let theta = s / ceil;
        let base = self.lebesgue_norm(&self.to_physical(f)?, q)?;
        let high = self.sobolev_norm(f, ceil, q)?;
        Ok(base.powf(1.0 - theta) * high.powf(theta))
    }

    /// Fractional H^{s,2} diagnostic: lx ly sum_k sum_m (1+|k|^2+m^2)^s |b_m|^2
    /// with b = L^T a and M = L L^T the Chebyshev mass matrix.
    fn fractional_h_s_2(&self, f: &SpectralField, s: f64) -> f64 {
        let nz = self.nz();
        let mut acc = 0.0;
        for c in 0..f.ncomp() {
            for ix in 0..self.nx() {
                for iy in 0..self.ny() {
                    let k2 = self.kx[ix] * self.kx[ix] + self.ky[iy] * self.ky[iy];
                    for m in 0..nz {
                        // b_m = sum_{n >= m} L[n][m] a_n
                        let mut b = Complex64::default();
                        for n in m..nz {
                            b += self.mass_chol[[n, m]] * f.coeffs[[c, ix, iy, n]];
                        }
                        let w = (1.0 + k2 + (m * m) as f64).powf(s);
                        acc += w * b.norm_sqr();
                    }
                }
            }
        }
        (acc * self.spec.lx * self.spec.ly).sqrt()
    }
}
