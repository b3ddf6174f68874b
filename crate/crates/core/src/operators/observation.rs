use serde::{Deserialize, Serialize};

use crate::domain::{Grid, PhysicalField, SpectralField};
use crate::error::{CoreError, Result};

/// Which coarse-graining realizes the observation operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservationKind {
    /// Quadrature-weighted averages over a cx x cy x cz cell partition of the
    /// layer; an orthogonal projection onto cell-wise constants in the
    /// discrete L^2 inner product.
    CubeAverage { cx: usize, cy: usize, cz: usize },
    /// Horizontal Fourier truncation |k| <= kcut with full vertical retention.
    FourierLowpass { kcut: f64 },
}

/// A realization of the linear, time-independent observation operator with
/// resolution parameter delta (approximation error <= C delta ||grad f||).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationOperator {
    pub kind: ObservationKind,
    pub delta: f64,
}

impl ObservationOperator {
    /// Cube averaging over cx x cy x cz cells; delta is the maximum cell
    /// diameter. Vertical cells are uniform intervals of (-l, 0); the mean
    /// within each cell uses the Chebyshev quadrature weights so constants
    /// are reproduced exactly.
    pub fn cube_average(grid: &Grid, cx: usize, cy: usize, cz: usize) -> Result<Self> {
        if cx == 0 || cy == 0 || cz == 0 {
            return Err(CoreError::invalid("observation.cells", "must be >= 1"));
        }
        if cx > grid.nx() || cy > grid.ny() {
            return Err(CoreError::invalid(
                "observation.cells",
                "more horizontal cells than grid points",
            ));
        }
        // every vertical cell must contain at least one collocation point
        let h = grid.spec.l / cz as f64;
        let mut occupied = vec![false; cz];
        for &z in &grid.z {
            occupied[vertical_cell(z, grid.spec.l, cz)] = true;
        }
        if occupied.iter().any(|o| !o) {
            return Err(CoreError::invalid(
                "observation.cz",
                "a vertical cell contains no collocation point; reduce cz",
            ));
        }
        let dx = grid.spec.lx / cx as f64;
        let dy = grid.spec.ly / cy as f64;
        let delta = (dx * dx + dy * dy + h * h).sqrt();
        Ok(ObservationOperator {
            kind: ObservationKind::CubeAverage { cx, cy, cz },
            delta,
        })
    }

    /// Horizontal low-pass with cutoff ~ 1/delta.
    pub fn fourier_lowpass(grid: &Grid, delta: f64) -> Result<Self> {
        let extent = grid.spec.lx.max(grid.spec.ly).max(grid.spec.l);
        if !(delta > 0.0) {
            return Err(CoreError::invalid("observation.delta", "must be > 0"));
        }
        if delta > extent {
            return Err(CoreError::invalid(
                "observation.delta",
                format!("delta {delta} exceeds the domain extent {extent}"),
            ));
        }
        Ok(ObservationOperator {
            kind: ObservationKind::FourierLowpass { kcut: 1.0 / delta },
            delta,
        })
    }

    /// The delta -> 0 limit: J = identity.
    pub fn identity() -> Self {
        ObservationOperator {
            kind: ObservationKind::FourierLowpass { kcut: f64::INFINITY },
            delta: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, ObservationKind::FourierLowpass { kcut } if kcut.is_infinite())
    }

    /// True when J is diagonal over horizontal Fourier modes, i.e. the
    /// perturbed operator block-decouples per mode.
    pub fn is_mode_diagonal(&self) -> bool {
        matches!(self.kind, ObservationKind::FourierLowpass { .. })
    }

    /// Per-mode multiplier for mode-diagonal kinds (1 = kept, 0 = cut).
    pub fn mode_symbol(&self, grid: &Grid, ix: usize, iy: usize) -> Option<f64> {
        match self.kind {
            ObservationKind::FourierLowpass { kcut } => {
                let k2 = grid.kx[ix] * grid.kx[ix] + grid.ky[iy] * grid.ky[iy];
                if kcut.is_infinite() || k2 <= kcut * kcut {
                    Some(1.0)
                } else {
                    Some(0.0)
                }
            }
            ObservationKind::CubeAverage { .. } => None,
        }
    }

    pub fn apply_physical(&self, grid: &Grid, f: &PhysicalField) -> Result<PhysicalField> {
        f.check_shape(grid, "observation input")?;
        match self.kind {
            ObservationKind::CubeAverage { cx, cy, cz } => Ok(self.cube_apply(grid, f, cx, cy, cz)),
            ObservationKind::FourierLowpass { .. } => {
                let spec = grid.to_spectral(f)?;
                let cut = self.apply_spectral(grid, &spec)?;
                grid.to_physical(&cut)
            }
        }
    }

    pub fn apply_spectral(&self, grid: &Grid, f: &SpectralField) -> Result<SpectralField> {
        f.check_shape(grid, "observation input")?;
        match self.kind {
            ObservationKind::FourierLowpass { kcut } => {
                if kcut.is_infinite() {
                    return Ok(f.clone());
                }
                let mut out = f.clone();
                for c in 0..f.ncomp() {
                    for ix in 0..grid.nx() {
                        for iy in 0..grid.ny() {
                            let k2 = grid.kx[ix] * grid.kx[ix] + grid.ky[iy] * grid.ky[iy];
                            if k2 > kcut * kcut {
                                for m in 0..grid.nz() {
                                    out.coeffs[[c, ix, iy, m]] = num_complex::Complex64::default();
                                }
                            }
                        }
                    }
                }
                Ok(out)
            }
            ObservationKind::CubeAverage { .. } => {
                let phys = grid.to_physical(f)?;
                let obs = self.apply_physical(grid, &phys)?;
                grid.to_spectral(&obs)
            }
        }
    }

    fn cube_apply(&self, grid: &Grid, f: &PhysicalField, cx: usize, cy: usize, cz: usize) -> PhysicalField {
        let (nx, ny, nz) = (grid.nx(), grid.ny(), grid.nz());
        let ncomp = f.ncomp();
        let zcell: Vec<usize> = grid
            .z
            .iter()
            .map(|&z| vertical_cell(z, grid.spec.l, cz))
            .collect();
        let xcell: Vec<usize> = (0..nx).map(|ix| ix * cx / nx).collect();
        let ycell: Vec<usize> = (0..ny).map(|iy| iy * cy / ny).collect();

        let ncells = cx * cy * cz;
        let mut sums = vec![0.0; ncells * ncomp];
        let mut wsum = vec![0.0; ncells];
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let cell = (xcell[ix] * cy + ycell[iy]) * cz + zcell[iz];
                    let w = grid.zq_weights[iz];
                    wsum[cell] += w;
                    for c in 0..ncomp {
                        sums[cell * ncomp + c] += w * f.values[[c, ix, iy, iz]];
                    }
                }
            }
        }
        let mut out = PhysicalField::zeros(grid, ncomp);
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let cell = (xcell[ix] * cy + ycell[iy]) * cz + zcell[iz];
                    for c in 0..ncomp {
                        out.values[[c, ix, iy, iz]] = sums[cell * ncomp + c] / wsum[cell];
                    }
                }
            }
        }
        out
    }
}

fn vertical_cell(z: f64, l: f64, cz: usize) -> usize {
    let h = l / cz as f64;
    (((z + l) / h).floor() as usize).min(cz - 1)
}
