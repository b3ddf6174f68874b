//! Per-horizontal-mode machinery shared by the time integrators and the dense
//! analysis: Chebyshev-tau boundary completion, the mean-divergence
//! constraint border, reduced generators for the matrix-exponential stepper
//! and bordered Crank-Nicolson matrices for the IMEX stepper.
//!
//! Per mode k the raw linear operator is L0 = (mu_eff + |k|^2) I - d_zz per
//! velocity component. The hydrostatic projection acts within a mode as the
//! vertically constant correction along g = (kx e_0, ky e_0); enforcing the
//! constraint div_H(avg v) = 0 through a scalar multiplier along g is exactly
//! equivalent to applying P, so matrices stay real and assembly stays local.

use ndarray::Array2;
use num_complex::Complex64;

use crate::domain::Grid;
use crate::error::Result;
use crate::linalg::LuReal;

/// Solves the 2x2 tau system for the two highest Chebyshev coefficients given
/// the Neumann-top / Dirichlet-bottom residuals of the lower coefficients.
#[derive(Debug, Clone)]
pub struct TauSolver {
    p: f64,
    q: f64,
    r: f64,
    s: f64,
    det: f64,
}

impl TauSolver {
    pub fn new(nz: usize) -> Self {
        let p = ((nz - 2) * (nz - 2)) as f64;
        let q = ((nz - 1) * (nz - 1)) as f64;
        let r = if (nz - 2) % 2 == 0 { 1.0 } else { -1.0 };
        let s = if (nz - 1) % 2 == 0 { 1.0 } else { -1.0 };
        let det = p * s - q * r;
        TauSolver { p, q, s, r, det }
    }

    /// Tail (a_{nz-2}, a_{nz-1}) from residuals rn = sum m^2 a_m and
    /// rd = sum (-1)^m a_m over the low coefficients.
    pub fn tail_f(&self, rn: f64, rd: f64) -> (f64, f64) {
        let t1 = (self.q * rd - rn * self.s) / self.det;
        let t2 = (rn * self.r - self.p * rd) / self.det;
        (t1, t2)
    }

    pub fn tail_c(&self, rn: Complex64, rd: Complex64) -> (Complex64, Complex64) {
        let t1 = (self.q * rd - rn * self.s) / self.det;
        let t2 = (rn * self.r - self.p * rd) / self.det;
        (t1, t2)
    }
}

/// Per-component completion matrix (nz x (nz-2)): unit low coefficient plus
/// the tau tail that makes the column satisfy both boundary conditions.
pub fn completion_matrix(nz: usize) -> Array2<f64> {
    let tau = TauSolver::new(nz);
    let mut b = Array2::zeros((nz, nz - 2));
    for m in 0..nz - 2 {
        b[[m, m]] = 1.0;
        let rn = (m * m) as f64;
        let rd = if m % 2 == 0 { 1.0 } else { -1.0 };
        let (t1, t2) = tau.tail_f(rn, rd);
        b[[nz - 2, m]] = t1;
        b[[nz - 1, m]] = t2;
    }
    b
}

/// Reduction of one horizontal mode onto the BC-satisfying (and, for k != 0,
/// mean-divergence-free) coefficients. Coordinates y are the low Chebyshev
/// coefficients of both components, dim = 2 (nz - 2).
#[derive(Debug, Clone)]
pub struct ModeReduction {
    pub ix: usize,
    pub iy: usize,
    pub kx: f64,
    pub ky: f64,
    pub k2: f64,
    pub nz: usize,
    pub dim: usize,
    /// Per-component completion (nz x (nz-2)).
    pub b_comp: Array2<f64>,
    /// Constraint functional on reduced coordinates (k != 0 only).
    pub chat: Option<Vec<f64>>,
    /// Multiplier direction in reduced coordinates (k != 0 only).
    pub sg: Option<Vec<f64>>,
    /// chat . sg
    pub denom: f64,
}

impl ModeReduction {
    pub fn new(grid: &Grid, ix: usize, iy: usize) -> Self {
        let nz = grid.nz();
        let (kx, ky) = (grid.kx[ix], grid.ky[iy]);
        let k2 = kx * kx + ky * ky;
        let dim = 2 * (nz - 2);
        let b_comp = completion_matrix(nz);

        let (chat, sg, denom) = if k2 > 0.0 {
            // cavg[m] = vertical average of the completed basis column m
            let mut cavg = vec![0.0; nz - 2];
            for m in 0..nz - 2 {
                let mut s = 0.0;
                for row in 0..nz {
                    s += grid.avg_weights[row] * b_comp[[row, m]];
                }
                cavg[m] = s;
            }
            let mut chat = vec![0.0; dim];
            for m in 0..nz - 2 {
                chat[m] = kx * cavg[m];
                chat[nz - 2 + m] = ky * cavg[m];
            }
            let mut sg = vec![0.0; dim];
            sg[0] = kx;
            sg[nz - 2] = ky;
            let denom = k2 * cavg[0];
            assert!(
                denom.abs() > 1e-14,
                "degenerate constraint normalization for mode ({ix},{iy})"
            );
            (Some(chat), Some(sg), denom)
        } else {
            (None, None, 1.0)
        };

        ModeReduction {
            ix,
            iy,
            kx,
            ky,
            k2,
            nz,
            dim,
            b_comp,
            chat,
            sg,
            denom,
        }
    }

    /// Raw per-component linear block L0 = (mu_eff + |k|^2) I - d_zz.
    pub fn l0(&self, grid: &Grid, mu_eff: f64) -> Array2<f64> {
        let nz = self.nz;
        let mut l0 = grid.dzz_coeff.mapv(|v| -v);
        for m in 0..nz {
            l0[[m, m]] += mu_eff + self.k2;
        }
        l0
    }

    /// Reduced generator G (dim x dim): dynamics of the low coefficients with
    /// the tau tail eliminated and the constraint multiplier eliminated.
    /// d/dt y = -G y for the homogeneous problem.
    pub fn generator(&self, grid: &Grid, mu_eff: f64) -> Array2<f64> {
        let nz = self.nz;
        let l0 = self.l0(grid, mu_eff);
        let slb = l0.dot(&self.b_comp); // (nz x (nz-2))
        let mut g = Array2::zeros((self.dim, self.dim));
        for comp in 0..2 {
            for m in 0..nz - 2 {
                for n in 0..nz - 2 {
                    g[[comp * (nz - 2) + m, comp * (nz - 2) + n]] = slb[[m, n]];
                }
            }
        }
        self.project_rows(&mut g);
        g
    }

    /// Apply the multiplier elimination I - sg chat / denom to each column.
    fn project_rows(&self, g: &mut Array2<f64>) {
        let (Some(chat), Some(sg)) = (&self.chat, &self.sg) else {
            return;
        };
        for col in 0..g.ncols() {
            let mut c = 0.0;
            for row in 0..self.dim {
                c += chat[row] * g[[row, col]];
            }
            let f = c / self.denom;
            for row in 0..self.dim {
                g[[row, col]] -= f * sg[row];
            }
        }
    }

    /// Reduce a forcing column pair (full nz coefficients per component) to
    /// reduced coordinates, with multiplier elimination.
    pub fn reduce_forcing(&self, fx: &[Complex64], fy: &[Complex64]) -> Vec<Complex64> {
        let nz = self.nz;
        let mut y = vec![Complex64::default(); self.dim];
        y[..(nz - 2)].copy_from_slice(&fx[..(nz - 2)]);
        y[(nz - 2)..].copy_from_slice(&fy[..(nz - 2)]);
        if let (Some(chat), Some(sg)) = (&self.chat, &self.sg) {
            let mut c = Complex64::default();
            for row in 0..self.dim {
                c += chat[row] * y[row];
            }
            let f = c / self.denom;
            for row in 0..self.dim {
                y[row] -= f * sg[row];
            }
        }
        y
    }

    /// Low coefficients of a BC-satisfying state.
    pub fn reduce_state(&self, ax: &[Complex64], ay: &[Complex64]) -> Vec<Complex64> {
        let nz = self.nz;
        let mut y = vec![Complex64::default(); self.dim];
        y[..(nz - 2)].copy_from_slice(&ax[..(nz - 2)]);
        y[(nz - 2)..].copy_from_slice(&ay[..(nz - 2)]);
        y
    }

    /// Complete reduced coordinates to full coefficient columns (tau tails).
    pub fn complete(&self, y: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let nz = self.nz;
        let mut ax = vec![Complex64::default(); nz];
        let mut ay = vec![Complex64::default(); nz];
        for m in 0..nz {
            let mut sx = Complex64::default();
            let mut sy = Complex64::default();
            for n in 0..nz - 2 {
                sx += self.b_comp[[m, n]] * y[n];
                sy += self.b_comp[[m, n]] * y[nz - 2 + n];
            }
            ax[m] = sx;
            ay[m] = sy;
        }
        (ax, ay)
    }

    /// Small constraint drift cleanup in reduced coordinates.
    pub fn enforce_constraint(&self, y: &mut [Complex64]) {
        let Some(chat) = &self.chat else { return };
        let mut c = Complex64::default();
        let mut n2 = 0.0;
        for row in 0..self.dim {
            c += chat[row] * y[row];
            n2 += chat[row] * chat[row];
        }
        let f = c / n2;
        for row in 0..self.dim {
            y[row] -= f * chat[row];
        }
    }
}

/// Bordered Crank-Nicolson solve for one horizontal mode:
/// (I + h/2 L0) v^{n+1} + multiplier = (I - h/2 L0) v^n + h X with tau rows
/// enforcing the boundary conditions and (k != 0) a constraint row enforcing
/// mean-divergence freedom at the new time level.
#[derive(Debug)]
pub struct ModeCn {
    pub ix: usize,
    pub iy: usize,
    nz: usize,
    bordered: bool,
    lu: LuReal,
    /// Explicit half-step matrix I - h/2 L0 (per component).
    expl: Array2<f64>,
}

impl ModeCn {
    pub fn new(grid: &Grid, red: &ModeReduction, mu_eff: f64, h: f64) -> Result<ModeCn> {
        let nz = red.nz;
        let l0 = red.l0(grid, mu_eff);
        let bordered = red.k2 > 0.0;
        let n = if bordered { 2 * nz + 1 } else { 2 * nz };
        let mut m = Array2::<f64>::zeros((n, n));
        for comp in 0..2 {
            let off = comp * nz;
            for row in 0..nz {
                if row < nz - 2 {
                    for col in 0..nz {
                        m[[off + row, off + col]] = h / 2.0 * l0[[row, col]];
                    }
                    m[[off + row, off + row]] += 1.0;
                    if bordered && row == 0 {
                        let kc = if comp == 0 { red.kx } else { red.ky };
                        m[[off + row, 2 * nz]] = kc;
                    }
                } else if row == nz - 2 {
                    for col in 0..nz {
                        m[[off + row, off + col]] = (col * col) as f64;
                    }
                } else {
                    for col in 0..nz {
                        m[[off + row, off + col]] = if col % 2 == 0 { 1.0 } else { -1.0 };
                    }
                }
            }
        }
        if bordered {
            for comp in 0..2 {
                let kc = if comp == 0 { red.kx } else { red.ky };
                for col in 0..nz {
                    m[[2 * nz, comp * nz + col]] = kc * grid.avg_weights[col];
                }
            }
        }
        let lu = LuReal::factor(&m)?;
        let mut expl = l0.mapv(|v| -h / 2.0 * v);
        for d in 0..nz {
            expl[[d, d]] += 1.0;
        }
        Ok(ModeCn {
            ix: red.ix,
            iy: red.iy,
            nz,
            bordered,
            lu,
            expl,
        })
    }

    /// One CN step: a, b are the current coefficient columns; xa, xb the
    /// accumulated explicit terms (already multiplied by h).
    pub fn step(
        &self,
        a: &[Complex64],
        b: &[Complex64],
        xa: &[Complex64],
        xb: &[Complex64],
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let nz = self.nz;
        let n = if self.bordered { 2 * nz + 1 } else { 2 * nz };
        let mut rhs = vec![Complex64::default(); n];
        for (comp, (cur, ex)) in [(a, xa), (b, xb)].iter().enumerate() {
            let off = comp * nz;
            for row in 0..nz - 2 {
                let mut s = Complex64::default();
                for col in 0..nz {
                    s += self.expl[[row, col]] * cur[col];
                }
                rhs[off + row] = s + ex[row];
            }
            // tau and constraint rows stay zero
        }
        let sol = self.lu.solve_c64(&rhs);
        (sol[..nz].to_vec(), sol[nz..2 * nz].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainSpec, Grid};

    #[test]
    fn completion_satisfies_bcs() {
        let nz = 9;
        let b = completion_matrix(nz);
        for m in 0..nz - 2 {
            let mut rn = 0.0;
            let mut rd = 0.0;
            for row in 0..nz {
                rn += (row * row) as f64 * b[[row, m]];
                let sign = if row % 2 == 0 { 1.0 } else { -1.0 };
                rd += sign * b[[row, m]];
            }
            assert!(rn.abs() < 1e-11, "neumann residual {rn}");
            assert!(rd.abs() < 1e-11, "dirichlet residual {rd}");
        }
    }

    #[test]
    fn generator_preserves_constraint() {
        let grid = Grid::new(DomainSpec::new(1.0, 8, 8, 9).unwrap()).unwrap();
        let red = ModeReduction::new(&grid, 1, 2);
        let g = red.generator(&grid, 3.0);
        let chat = red.chat.as_ref().unwrap();
        // chat . (G y) = 0 for all y: chat^T G = 0
        for col in 0..red.dim {
            let mut s = 0.0;
            for row in 0..red.dim {
                s += chat[row] * g[[row, col]];
            }
            assert!(s.abs() < 1e-9, "col {col}: {s}");
        }
    }
}
