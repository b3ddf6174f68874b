//! Linear spatial operators: vertical average, diagnostic vertical velocity,
//! hydrostatic Helmholtz projection, hydrostatic Stokes operator, tau-sense
//! boundary enforcement, observation operators and the perturbed operator
//! A + mu P J.

mod modeblocks;
mod observation;

pub use modeblocks::{ModeCn, ModeReduction, TauSolver};
pub use observation::{ObservationKind, ObservationOperator};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{Grid, PhysicalField, SpectralField};
use crate::error::{CoreError, Result};

/// Inflation strength and observation resolution of the nudging term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NudgingParams {
    /// Inflation parameter (1/time). Zero disables nudging (baseline runs).
    pub mu: f64,
    /// Observation resolution (length).
    pub delta: f64,
}

impl NudgingParams {
    pub fn new(mu: f64, delta: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(CoreError::invalid("nudging.mu", "must be >= 0 and finite"));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(CoreError::invalid("nudging.delta", "must be >= 0 and finite"));
        }
        Ok(NudgingParams { mu, delta })
    }

    /// Smallness flag mu * delta < alpha. The threshold alpha is never given
    /// by the theory; callers pass an empirically measured value.
    pub fn admissible(&self, alpha: f64) -> bool {
        self.mu * self.delta < alpha
    }
}

/// The discretized perturbed hydrostatic Stokes operator A + mu P J_delta.
#[derive(Debug, Clone)]
pub struct PerturbedStokes {
    pub params: NudgingParams,
    pub obs: ObservationOperator,
}

impl PerturbedStokes {
    pub fn new(params: NudgingParams, obs: ObservationOperator) -> Self {
        PerturbedStokes { params, obs }
    }

    /// A v + mu P J v.
    pub fn apply(&self, grid: &Grid, v: &SpectralField) -> Result<SpectralField> {
        let mut out = apply_stokes(grid, v)?;
        if self.params.mu != 0.0 {
            let observed = self.obs.apply_spectral(grid, v)?;
            let projected = hydrostatic_projection(grid, &observed)?;
            out.axpy(self.params.mu, &projected);
        }
        Ok(out)
    }

    /// The decomposition partner (A + mu I) v - mu P K_delta v, K = I - J.
    pub fn apply_decomposed(&self, grid: &Grid, v: &SpectralField) -> Result<SpectralField> {
        let mut out = apply_stokes(grid, v)?;
        out.axpy(self.params.mu, v);
        if self.params.mu != 0.0 {
            let jv = self.obs.apply_spectral(grid, v)?;
            let kv = v.sub(&jv);
            let pkv = hydrostatic_projection(grid, &kv)?;
            out.axpy(-self.params.mu, &pkv);
        }
        Ok(out)
    }
}

/// Vertical average (1/l) int_{-l}^0 v dz, returned as a vertically constant
/// field. Linear and idempotent.
pub fn vertical_average(grid: &Grid, v: &SpectralField) -> Result<SpectralField> {
    v.check_shape(grid, "vertical_average input")?;
    let mut out = SpectralField::zeros(grid, v.ncomp());
    let nz = grid.nz();
    for c in 0..v.ncomp() {
        for ix in 0..grid.nx() {
            for iy in 0..grid.ny() {
                let mut avg = Complex64::default();
                for m in 0..nz {
                    avg += grid.avg_weights[m] * v.coeffs[[c, ix, iy, m]];
                }
                out.coeffs[[c, ix, iy, 0]] = avg;
            }
        }
    }
    Ok(out)
}

/// Diagnostic vertical velocity w(x', z) = -int_{-l}^{z} div_H v dz'.
///
/// The endpoint values are enforced structurally: w(-l) = 0, and
/// w(0) = -l div_H(avg v) evaluated with the exact Chebyshev moments, so that
/// projected states (div_H avg v = 0) have |w(0)| at round-off regardless of
/// the antiderivative's degree truncation.
pub fn vertical_velocity(grid: &Grid, v: &SpectralField) -> Result<SpectralField> {
    v.check_shape(grid, "vertical_velocity input")?;
    if v.ncomp() != 2 {
        return Err(CoreError::ShapeMismatch {
            what: "vertical_velocity input components",
            expected: vec![2],
            got: vec![v.ncomp()],
        });
    }
    let nz = grid.nz();
    let l = grid.spec.l;
    let mut out = SpectralField::zeros(grid, 1);
    let mut div = vec![Complex64::default(); nz];
    let mut w = vec![Complex64::default(); nz];
    for ix in 0..grid.nx() {
        let ikx = Complex64::new(0.0, grid.kx[ix]);
        for iy in 0..grid.ny() {
            let iky = Complex64::new(0.0, grid.ky[iy]);
            for m in 0..nz {
                div[m] = ikx * v.coeffs[[0, ix, iy, m]] + iky * v.coeffs[[1, ix, iy, m]];
            }
            for m in 0..nz {
                let mut s = Complex64::default();
                for n in 0..nz {
                    s += grid.int_from_bottom[[m, n]] * div[n];
                }
                w[m] = -s;
            }
            // exact full-column integral for the top value
            let mut total = Complex64::default();
            for m in 0..nz {
                total += grid.avg_weights[m] * div[m];
            }
            let top_desired = -l * total;
            let mut top_cur = Complex64::default();
            for wm in w.iter() {
                top_cur += wm;
            }
            let bot_cur = Grid::bottom_value(&w);
            // corrections on T_0 and T_1 hit (top, bottom) as (d0+d1, d0-d1)
            let d0 = ((top_desired - top_cur) - bot_cur) * 0.5;
            let d1 = ((top_desired - top_cur) + bot_cur) * 0.5;
            w[0] += d0;
            w[1] += d1;
            for m in 0..nz {
                out.coeffs[[0, ix, iy, m]] = w[m];
            }
        }
    }
    Ok(out)
}

/// Hydrostatic Helmholtz projection P = I + grad_H (-Delta_H)^{-1} div_H
/// applied to the vertical average: per horizontal mode k != 0 the vertically
/// constant correction (k k^T / |k|^2) avg(f)_k is subtracted; the k = 0 mode
/// is unchanged. Idempotent contraction on discrete L^2.
pub fn hydrostatic_projection(grid: &Grid, f: &SpectralField) -> Result<SpectralField> {
    f.check_shape(grid, "projection input")?;
    if f.ncomp() != 2 {
        return Err(CoreError::ShapeMismatch {
            what: "projection input components",
            expected: vec![2],
            got: vec![f.ncomp()],
        });
    }
    let nz = grid.nz();
    let mut out = f.clone();
    for ix in 0..grid.nx() {
        for iy in 0..grid.ny() {
            let (kx, ky) = (grid.kx[ix], grid.ky[iy]);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            let mut ax = Complex64::default();
            let mut ay = Complex64::default();
            for m in 0..nz {
                ax += grid.avg_weights[m] * f.coeffs[[0, ix, iy, m]];
                ay += grid.avg_weights[m] * f.coeffs[[1, ix, iy, m]];
            }
            let s = (kx * ax + ky * ay) / k2;
            out.coeffs[[0, ix, iy, 0]] -= kx * s;
            out.coeffs[[1, ix, iy, 0]] -= ky * s;
        }
    }
    Ok(out)
}

/// div_H of the vertical average, one scalar coefficient per mode; returns the
/// max magnitude (diagnostic for the mean-divergence-free constraint).
pub fn mean_divergence_residual(grid: &Grid, v: &SpectralField) -> f64 {
    let nz = grid.nz();
    let mut max_r: f64 = 0.0;
    for ix in 0..grid.nx() {
        for iy in 0..grid.ny() {
            let (kx, ky) = (grid.kx[ix], grid.ky[iy]);
            let mut ax = Complex64::default();
            let mut ay = Complex64::default();
            for m in 0..nz {
                ax += grid.avg_weights[m] * v.coeffs[[0, ix, iy, m]];
                ay += grid.avg_weights[m] * v.coeffs[[1, ix, iy, m]];
            }
            max_r = max_r.max((Complex64::i() * (kx * ax + ky * ay)).norm());
        }
    }
    max_r
}

/// Hydrostatic Stokes operator A v = P(-Delta v) on fields obeying
/// d_z v = 0 at z = 0 and v = 0 at z = -l.
pub fn apply_stokes(grid: &Grid, v: &SpectralField) -> Result<SpectralField> {
    v.check_shape(grid, "stokes input")?;
    let lap = grid.laplacian(v);
    let neg = lap.scaled(-1.0);
    hydrostatic_projection(grid, &neg)
}

/// Max boundary-condition residual over modes and components, normalized by
/// the largest coefficient magnitude: reports how far v is from the domain of
/// the Stokes operator.
pub fn bc_residual(grid: &Grid, v: &SpectralField) -> f64 {
    let nz = grid.nz();
    let scale = v.max_coeff().max(1e-300);
    let mut col = vec![Complex64::default(); nz];
    let mut max_r: f64 = 0.0;
    for c in 0..v.ncomp() {
        for ix in 0..grid.nx() {
            for iy in 0..grid.ny() {
                for m in 0..nz {
                    col[m] = v.coeffs[[c, ix, iy, m]];
                }
                max_r = max_r.max(Grid::bottom_value(&col).norm());
                max_r = max_r.max(grid.top_derivative(&col).norm() * grid.spec.l / 2.0);
            }
        }
    }
    max_r / scale
}

/// Enforce the boundary conditions in the Chebyshev tau sense: the two highest
/// coefficients of every vertical column are recomputed so that d_z v(0) = 0
/// and v(-l) = 0 hold exactly. Idempotent; fixes BC-satisfying inputs.
pub fn project_bc(grid: &Grid, v: &SpectralField) -> Result<SpectralField> {
    v.check_shape(grid, "project_bc input")?;
    let nz = grid.nz();
    let tau = TauSolver::new(nz);
    let mut out = v.clone();
    for c in 0..v.ncomp() {
        for ix in 0..grid.nx() {
            for iy in 0..grid.ny() {
                let mut rn = Complex64::default();
                let mut rd = Complex64::default();
                for m in 0..nz - 2 {
                    let a = v.coeffs[[c, ix, iy, m]];
                    rn += ((m * m) as f64) * a;
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    rd += sign * a;
                }
                let (t1, t2) = tau.tail_c(rn, rd);
                out.coeffs[[c, ix, iy, nz - 2]] = t1;
                out.coeffs[[c, ix, iy, nz - 1]] = t2;
            }
        }
    }
    Ok(out)
}

/// Bring a 2-component state into the discrete solution space: tau-complete
/// the boundary conditions, enforce mean-divergence freedom on the low
/// coefficients (the tau tail then keeps both exact), and dealias. This is
/// the invariant the time integrators maintain step by step.
pub fn prepare_state(grid: &Grid, v: &SpectralField) -> Result<SpectralField> {
    v.check_shape(grid, "prepare_state input")?;
    if v.ncomp() != 2 {
        return Err(CoreError::ShapeMismatch {
            what: "prepare_state input components",
            expected: vec![2],
            got: vec![v.ncomp()],
        });
    }
    let nz = grid.nz();
    let mut out = SpectralField::zeros(grid, 2);
    for mode in &grid.half_modes {
        let red = ModeReduction::new(grid, mode.ix, mode.iy);
        let mut ax = vec![Complex64::default(); nz];
        let mut ay = vec![Complex64::default(); nz];
        for m in 0..nz {
            ax[m] = v.coeffs[[0, mode.ix, mode.iy, m]];
            ay[m] = v.coeffs[[1, mode.ix, mode.iy, m]];
        }
        let mut y = red.reduce_state(&ax, &ay);
        red.enforce_constraint(&mut y);
        let (cx, cy) = red.complete(&y);
        let (mx, my) = grid.mirror(mode);
        for m in 0..nz {
            out.coeffs[[0, mode.ix, mode.iy, m]] = cx[m];
            out.coeffs[[1, mode.ix, mode.iy, m]] = cy[m];
            if (mx, my) != (mode.ix, mode.iy) {
                out.coeffs[[0, mx, my, m]] = cx[m].conj();
                out.coeffs[[1, mx, my, m]] = cy[m].conj();
            }
        }
    }
    Ok(out)
}

/// Empirically estimate the two observation constants of the J_delta bounds:
/// C_bound = sup ||Jf||_q / ||f||_q and
/// C_approx = sup ||Jf - f||_q / (delta ||grad f||_q).
/// Samples with (near-)zero gradient are skipped for C_approx.
pub fn estimate_observation_constants(
    grid: &Grid,
    obs: &ObservationOperator,
    samples: &[PhysicalField],
    q: f64,
) -> Result<(f64, f64)> {
    if samples.len() < 10 {
        return Err(CoreError::Degenerate(format!(
            "need at least 10 samples, got {}",
            samples.len()
        )));
    }
    if obs.delta <= 0.0 {
        return Err(CoreError::invalid(
            "observation.delta",
            "constants are undefined for the identity operator (delta = 0)",
        ));
    }
    let mut c_bound: f64 = 0.0;
    let mut c_approx: f64 = 0.0;
    let mut used_approx = 0usize;
    for f in samples {
        let jf = obs.apply_physical(grid, f)?;
        let nf = grid.lebesgue_norm(f, q)?;
        if nf > 1e-300 {
            c_bound = c_bound.max(grid.lebesgue_norm(&jf, q)? / nf);
        }
        let spec = grid.to_spectral(f)?;
        let grad = grid.gradient_norm(&spec, q)?;
        if grad > 1e-12 * nf.max(1e-300) {
            let err = grid.lebesgue_norm(&jf.sub(f), q)?;
            c_approx = c_approx.max(err / (obs.delta * grad));
            used_approx += 1;
        }
    }
    if used_approx == 0 {
        return Err(CoreError::Degenerate(
            "all samples had vanishing gradient".into(),
        ));
    }
    Ok((c_bound, c_approx))
}
