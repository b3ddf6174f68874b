//! Dense assembly and eigen/resolvent analysis of the hydrostatic Stokes
//! operator A and its nudging perturbation A + mu P J on desk-scale grids.
//!
//! The dense matrix represents the generator on the constrained subspace
//! (boundary conditions tau-eliminated, mean divergence removed, dealiased),
//! in a mass-orthonormal real basis: L^2 norms of fields equal Euclidean
//! norms of coordinate vectors, so operator norms and symmetry checks are
//! plain matrix statements.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Inverse, Norm, Solve, SVD};
use num_complex::Complex64;
use thiserror::Error;

use hydronudge::domain::{Grid, SpectralField};
use hydronudge::linalg::expm;
use hydronudge::operators::{
    apply_stokes, hydrostatic_projection, ModeReduction, PerturbedStokes,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dense dimension {0} exceeds the cap {1}")]
    CapExceeded(usize, usize),
    #[error("eigensolver failed: {0}")]
    Eig(String),
    #[error("operator spectrum is not strictly positive (min Re = {0})")]
    NonPositiveSpectrum(f64),
    #[error(transparent)]
    Core(#[from] hydronudge::CoreError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

pub const DEFAULT_DENSE_CAP: usize = 4096;

/// OpenBLAS complex kernels use large on-stack buffers and overflow the 2 MiB
/// default test-thread stack; LAPACK-heavy entry points run on a dedicated
/// big-stack thread.
fn big_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(64 * 1024 * 1024)
            .spawn_scoped(s, f)
            .expect("spawn big-stack worker")
            .join()
            .expect("join big-stack worker")
    })
}

struct ModeBasis {
    red: ModeReduction,
    /// Orthonormal directions in reduced coordinates (dim_y x ncols).
    u: Array2<f64>,
    /// Gram weight of this mode's coordinate space.
    w: Array2<f64>,
    /// Column offset of this mode's block in the dense matrix.
    offset: usize,
    /// Real dimensions contributed: ncols (k = 0) or 2 ncols (re/im pair).
    real_dim: usize,
    two_phases: bool,
}

/// Bookkeeping between dense matrix indices and spectral coefficients.
pub struct Basis<'g> {
    grid: &'g Grid,
    modes: Vec<ModeBasis>,
    n: usize,
}

/// Dense generator with its basis; `matrix` acts on mass-orthonormal
/// coordinates, so the discrete L^2 geometry is Euclidean.
pub struct DenseOperator<'g> {
    pub matrix: Array2<f64>,
    pub basis: Basis<'g>,
}

fn cholesky_lower(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                assert!(s > 0.0, "Gram matrix not positive definite");
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    l
}

/// Solve L^T X = I for upper-triangular back-substitution (inverse transpose
/// of a lower Cholesky factor).
fn inv_transpose_lower(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut x = Array2::<f64>::zeros((n, n));
    // columns of (L^T)^{-1}
    for c in 0..n {
        let mut col = vec![0.0; n];
        col[c] = 1.0;
        // back substitution with L^T (upper triangular with L^T[i][j] = l[j][i])
        for i in (0..n).rev() {
            let mut s = col[i];
            for j in i + 1..n {
                s -= l[[j, i]] * x[[j, c]];
            }
            x[[i, c]] = s / l[[i, i]];
        }
    }
    x
}

impl<'g> Basis<'g> {
    /// Build the mass-orthonormal constrained basis over the kept half-modes.
    pub fn new(grid: &'g Grid, cap: usize) -> Result<Basis<'g>> {
        let nz = grid.nz();
        let area = grid.spec.lx * grid.spec.ly;
        let mut modes = Vec::new();
        let mut offset = 0;
        for mode in &grid.half_modes {
            let red = ModeReduction::new(grid, mode.ix, mode.iy);
            let dim_y = red.dim;
            // per-component Gram of the completed columns: B^T M B
            let mut g_comp = Array2::<f64>::zeros((nz - 2, nz - 2));
            for a in 0..nz - 2 {
                for b in 0..nz - 2 {
                    let mut s = 0.0;
                    for r in 0..nz {
                        for c in 0..nz {
                            s += red.b_comp[[r, a]] * grid.mass[[r, c]] * red.b_comp[[c, b]];
                        }
                    }
                    g_comp[[a, b]] = s;
                }
            }
            let factor = if red.k2 > 0.0 { 2.0 * area } else { area };
            let mut w = Array2::<f64>::zeros((dim_y, dim_y));
            for comp in 0..2 {
                for a in 0..nz - 2 {
                    for b in 0..nz - 2 {
                        w[[comp * (nz - 2) + a, comp * (nz - 2) + b]] = factor * g_comp[[a, b]];
                    }
                }
            }
            // constrained directions: null space of chat (k != 0)
            let ncols;
            let dirs: Array2<f64>;
            if let Some(chat) = &red.chat {
                ncols = dim_y - 1;
                // Householder reflection of chat onto e_0; kernel basis are
                // the reflected unit vectors e_1..e_{dim-1}
                let mut v: Vec<f64> = chat.clone();
                let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v[0] += if v[0] >= 0.0 { nrm } else { -nrm };
                let vn2: f64 = v.iter().map(|x| x * x).sum();
                let mut h = Array2::<f64>::zeros((dim_y, ncols));
                for c in 0..ncols {
                    // column = (I - 2 v v^T / |v|^2) e_{c+1}
                    for r in 0..dim_y {
                        let e = if r == c + 1 { 1.0 } else { 0.0 };
                        h[[r, c]] = e - 2.0 * v[r] * v[c + 1] / vn2;
                    }
                }
                dirs = h;
            } else {
                ncols = dim_y;
                dirs = Array2::eye(dim_y);
            }
            // orthonormalize against W: U = dirs * chol(dirs^T W dirs)^{-T}
            let gram = dirs.t().dot(&w).dot(&dirs);
            let l = cholesky_lower(&gram);
            let u = dirs.dot(&inv_transpose_lower(&l));
            let two_phases = red.k2 > 0.0;
            let real_dim = if two_phases { 2 * ncols } else { ncols };
            modes.push(ModeBasis {
                red,
                u,
                w,
                offset,
                real_dim,
                two_phases,
            });
            offset += real_dim;
        }
        if offset > cap {
            return Err(AnalysisError::CapExceeded(offset, cap));
        }
        Ok(Basis {
            grid,
            modes,
            n: offset,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    /// Build the real spectral field of a coordinate vector.
    pub fn field(&self, coords: &[f64]) -> SpectralField {
        let grid = self.grid;
        let nz = grid.nz();
        let mut out = SpectralField::zeros(grid, 2);
        for mb in &self.modes {
            let ncols = mb.u.ncols();
            let dim_y = mb.red.dim;
            let mut y = vec![Complex64::default(); dim_y];
            for c in 0..ncols {
                let re = coords[mb.offset + c];
                let im = if mb.two_phases {
                    coords[mb.offset + ncols + c]
                } else {
                    0.0
                };
                let amp = Complex64::new(re, im);
                for r in 0..dim_y {
                    y[r] += mb.u[[r, c]] * amp;
                }
            }
            let (cx, cy) = mb.red.complete(&y);
            let (ix, iy) = (mb.red.ix, mb.red.iy);
            let (mx, my) = grid.mirror(&hydronudge::domain::ModeIndex {
                ix,
                iy,
                kx: 0,
                ky: 0,
            });
            for m in 0..nz {
                out.coeffs[[0, ix, iy, m]] = cx[m];
                out.coeffs[[1, ix, iy, m]] = cy[m];
                if (mx, my) != (ix, iy) {
                    out.coeffs[[0, mx, my, m]] = cx[m].conj();
                    out.coeffs[[1, mx, my, m]] = cy[m].conj();
                }
            }
        }
        out
    }

    /// Mass-adjoint projection coords_i = <X_i, f>_{L^2}: the Galerkin pairing
    /// of an arbitrary field with the orthonormal basis.
    pub fn adjoint_project(&self, f: &SpectralField) -> Vec<f64> {
        let grid = self.grid;
        let nz = grid.nz();
        let area = grid.spec.lx * grid.spec.ly;
        let mut out = vec![0.0; self.n];
        let mut fx = vec![Complex64::default(); nz];
        let mut fy = vec![Complex64::default(); nz];
        for mb in &self.modes {
            let (ix, iy) = (mb.red.ix, mb.red.iy);
            let factor = if mb.two_phases { 2.0 * area } else { area };
            for m in 0..nz {
                fx[m] = f.coeffs[[0, ix, iy, m]];
                fy[m] = f.coeffs[[1, ix, iy, m]];
            }
            // z = B^T M f per component (length nz-2 each)
            let dim_y = mb.red.dim;
            let mut z = vec![Complex64::default(); dim_y];
            for a in 0..nz - 2 {
                let mut sx = Complex64::default();
                let mut sy = Complex64::default();
                for r in 0..nz {
                    let mut mx = Complex64::default();
                    let mut my = Complex64::default();
                    for c in 0..nz {
                        mx += grid.mass[[r, c]] * fx[c];
                        my += grid.mass[[r, c]] * fy[c];
                    }
                    sx += mb.red.b_comp[[r, a]] * mx;
                    sy += mb.red.b_comp[[r, a]] * my;
                }
                z[a] = sx;
                z[nz - 2 + a] = sy;
            }
            let ncols = mb.u.ncols();
            for c in 0..ncols {
                let mut s = Complex64::default();
                for a in 0..dim_y {
                    s += mb.u[[a, c]] * z[a];
                }
                s *= factor;
                out[mb.offset + c] = s.re;
                if mb.two_phases {
                    out[mb.offset + ncols + c] = s.im;
                }
            }
        }
        out
    }

    /// Coordinates of the reduced image of an operator output: per mode the
    /// tau-dynamic rows with multiplier elimination, then projection onto the
    /// orthonormal directions.
    pub fn reduce(&self, f: &SpectralField) -> Vec<f64> {
        let grid = self.grid;
        let nz = grid.nz();
        let mut out = vec![0.0; self.n];
        let mut fx = vec![Complex64::default(); nz];
        let mut fy = vec![Complex64::default(); nz];
        for mb in &self.modes {
            let (ix, iy) = (mb.red.ix, mb.red.iy);
            for m in 0..nz {
                fx[m] = f.coeffs[[0, ix, iy, m]];
                fy[m] = f.coeffs[[1, ix, iy, m]];
            }
            let r = mb.red.reduce_forcing(&fx, &fy);
            // coords = U^T W r
            let ncols = mb.u.ncols();
            let dim_y = mb.red.dim;
            for c in 0..ncols {
                let mut s = Complex64::default();
                for a in 0..dim_y {
                    let mut wa = 0.0;
                    for b in 0..dim_y {
                        wa += mb.u[[b, c]] * mb.w[[b, a]];
                    }
                    s += wa * r[a];
                }
                out[mb.offset + c] = s.re;
                if mb.two_phases {
                    out[mb.offset + ncols + c] = s.im;
                }
            }
        }
        out
    }
}

/// Which operator to assemble.
pub enum OperatorKind<'a> {
    Stokes,
    Perturbed(&'a PerturbedStokes),
}

/// Matrix-free application matching the dense assembly conventions.
pub fn apply_operator(grid: &Grid, kind: &OperatorKind, v: &SpectralField) -> Result<SpectralField> {
    let mut out = match kind {
        OperatorKind::Stokes => apply_stokes(grid, v)?,
        OperatorKind::Perturbed(p) => p.apply(grid, v)?,
    };
    out.apply_mask(grid);
    Ok(out)
}

/// Assemble the dense generator on the constrained subspace.
pub fn assemble<'g>(grid: &'g Grid, kind: OperatorKind, cap: usize) -> Result<DenseOperator<'g>> {
    let basis = Basis::new(grid, cap)?;
    let n = basis.n();
    let mut matrix = Array2::<f64>::zeros((n, n));
    let mut coords = vec![0.0; n];
    for col in 0..n {
        coords.iter_mut().for_each(|v| *v = 0.0);
        coords[col] = 1.0;
        let x = basis.field(&coords);
        let ax = apply_operator(grid, &kind, &x)?;
        let img = basis.reduce(&ax);
        for row in 0..n {
            matrix[[row, col]] = img[row];
        }
    }
    Ok(DenseOperator { matrix, basis })
}

impl<'g> DenseOperator<'g> {
    pub fn n(&self) -> usize {
        self.basis.n()
    }

    /// Max relative deviation between the dense matrix action and the
    /// matrix-free application on random coordinate vectors.
    pub fn action_agreement(&self, kind: &OperatorKind, samples: usize, seed: u64) -> Result<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = self.n();
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = self.basis.field(&c);
            let ax = apply_operator(self.basis.grid, kind, &x)?;
            let direct = self.basis.reduce(&ax);
            let ca = Array1::from_vec(c);
            let via_matrix = self.matrix.dot(&ca);
            let num = (&Array1::from_vec(direct) - &via_matrix).norm_l2();
            let den = via_matrix.norm_l2().max(1e-300);
            worst = worst.max(num / den);
        }
        Ok(worst)
    }

    /// Eigenvalues sorted by real part.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        big_stack(|| {
            let (vals, _) = self
                .matrix
                .eig()
                .map_err(|e| AnalysisError::Eig(e.to_string()))?;
            let mut v: Vec<Complex64> = vals.into_iter().collect();
            v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
            Ok(v)
        })
    }

    /// Full eigendecomposition (values, vectors, inverse of the vector matrix).
    pub fn eigendecomposition(
        &self,
    ) -> Result<(Vec<Complex64>, Array2<Complex64>, Array2<Complex64>)> {
        big_stack(|| {
            let (vals, vecs) = self
                .matrix
                .eig()
                .map_err(|e| AnalysisError::Eig(e.to_string()))?;
            let vinv = vecs
                .inv()
                .map_err(|e| AnalysisError::Eig(e.to_string()))?;
            Ok((vals.into_iter().collect(), vecs, vinv))
        })
    }

    /// Operator 2-norm of e^{-t M} (mass-orthonormal coordinates make this
    /// the discrete L^2 -> L^2 norm).
    pub fn semigroup_norm(&self, t: f64) -> Result<f64> {
        big_stack(|| {
            let e = expm(&self.matrix.mapv(|v| -t * v)).map_err(AnalysisError::Core)?;
            let (_, s, _) = e
                .svd(false, false)
                .map_err(|e| AnalysisError::Eig(e.to_string()))?;
            Ok(s.iter().cloned().fold(0.0f64, f64::max))
        })
    }

    /// Galerkin quadratic form Q[i][j] = <X_i, A X_j> in the orthonormal
    /// basis. For the Stokes operator this is exactly the Dirichlet form
    /// <grad X_i, grad X_j> (integration by parts closes: Neumann top,
    /// Dirichlet bottom, horizontal periodicity), hence symmetric; the
    /// tau-dynamics generator `matrix` is not, by construction.
    pub fn quadratic_form(&self, kind: &OperatorKind) -> Result<Array2<f64>> {
        let n = self.n();
        let mut q = Array2::<f64>::zeros((n, n));
        let mut coords = vec![0.0; n];
        for col in 0..n {
            coords.iter_mut().for_each(|v| *v = 0.0);
            coords[col] = 1.0;
            let x = self.basis.field(&coords);
            let ax = apply_operator(self.basis.grid, kind, &x)?;
            let proj = self.basis.adjoint_project(&ax);
            for row in 0..n {
                q[[row, col]] = proj[row];
            }
        }
        Ok(q)
    }

    /// Symmetry defect ||Q - Q^T|| / ||Q|| of the Galerkin quadratic form.
    pub fn symmetry_defect(&self, kind: &OperatorKind) -> Result<f64> {
        let q = self.quadratic_form(kind)?;
        let diff = &q - &q.t();
        Ok(diff.norm_l2() / q.norm_l2().max(1e-300))
    }

    /// Smooth random coordinate samples: white noise regularized by two
    /// solves with (M + sigma I), so the energy concentrates in the low
    /// modes the way smooth fields do.
    pub fn smooth_samples(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        use rand::{Rng, SeedableRng};
        let n = self.n();
        let eigs = self.eigenvalues()?;
        let sigma = eigs[0].re.max(1e-8);
        let mut shifted = self.matrix.clone();
        for d in 0..n {
            shifted[[d, d]] += sigma;
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        big_stack(move || {
            let mut out = Vec::new();
            for _ in 0..count {
                let c: Array1<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let once = shifted
                    .solve(&c)
                    .map_err(|e| AnalysisError::Eig(e.to_string()))?;
                let twice = shifted
                    .solve(&once)
                    .map_err(|e| AnalysisError::Eig(e.to_string()))?;
                let nrm = twice.norm_l2().max(1e-300);
                out.push(twice.iter().map(|v| v / nrm).collect());
            }
            Ok(out)
        })
    }
}

/// Minimum spectrum data of one (mu, delta) pair.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GapReport {
    pub mu: f64,
    pub delta: f64,
    pub lambda_min_a: f64,
    pub lambda_min_tilde: f64,
    pub margin: f64,
    pub max_imag: f64,
    pub transient_c: f64,
}

/// Dense eigensolves of A and A + mu P J over a (mu, observation) sweep.
pub fn spectral_gap(
    grid: &Grid,
    sweeps: &[(f64, hydronudge::operators::ObservationOperator)],
    cap: usize,
) -> Result<Vec<GapReport>> {
    let stokes = assemble(grid, OperatorKind::Stokes, cap)?;
    let lambda_min_a = stokes
        .eigenvalues()?
        .first()
        .map(|v| v.re)
        .unwrap_or(f64::NAN);
    let mut out = Vec::new();
    for (mu, obs) in sweeps {
        let perturbed = PerturbedStokes::new(
            hydronudge::operators::NudgingParams {
                mu: *mu,
                delta: obs.delta,
            },
            obs.clone(),
        );
        let dense = assemble(grid, OperatorKind::Perturbed(&perturbed), cap)?;
        let eigs = dense.eigenvalues()?;
        let lambda_min_tilde = eigs.first().map(|v| v.re).unwrap_or(f64::NAN);
        let max_imag = eigs
            .iter()
            .take(10)
            .map(|v| v.im.abs())
            .fold(0.0f64, f64::max);
        // transient constant sup_t ||e^{-t A~}|| e^{lambda_min t}
        let mut transient_c = 0.0f64;
        if lambda_min_tilde.is_finite() && lambda_min_tilde > 0.0 {
            for i in 0..8 {
                let t = 0.02 / lambda_min_tilde * 2f64.powi(i);
                let norm = dense.semigroup_norm(t)?;
                transient_c = transient_c.max(norm * (lambda_min_tilde * t).exp());
            }
        }
        out.push(GapReport {
            mu: *mu,
            delta: obs.delta,
            lambda_min_a,
            lambda_min_tilde,
            margin: lambda_min_tilde - lambda_min_a,
            max_imag,
            transient_c,
        });
    }
    Ok(out)
}

/// One probed resolvent point.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResolventRow {
    pub lambda_re: f64,
    pub lambda_im: f64,
    /// sup over samples of |lambda| ||psi|| / ||f||
    pub ratio_resolvent: f64,
    /// sup over samples of ||psi||_{H2-seminorm} / ||f||
    pub ratio_h2: f64,
    pub skipped: bool,
}

/// Solve (lambda - A) psi = P f for lambda along rays outside the sector and
/// report |lambda| ||psi|| / ||f|| and the homogeneous-H2 ratio.
pub fn resolvent_probe(
    dense: &DenseOperator,
    lambdas: &[Complex64],
    nsamples: usize,
    seed: u64,
) -> Result<Vec<ResolventRow>> {
    let n = dense.n();
    let eigs = dense.eigenvalues()?;
    // smooth samples: the scalar |lambda|/( |lambda| + lambda_mode ) -> 1
    // asymptotics presumes low-mode-dominated data
    let samples: Vec<Vec<f64>> = dense.smooth_samples(nsamples, seed)?;
    let grid = dense.basis.grid;
    let mut rows = Vec::new();
    for &lam in lambdas {
        // skip near-eigenvalue probes
        let near = eigs
            .iter()
            .any(|e| (lam - e).norm() < 1e-6 * e.norm().max(1.0));
        if near {
            rows.push(ResolventRow {
                lambda_re: lam.re,
                lambda_im: lam.im,
                ratio_resolvent: f64::NAN,
                ratio_h2: f64::NAN,
                skipped: true,
            });
            continue;
        }
        let mut m = Array2::<Complex64>::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                m[[r, c]] = Complex64::new(-dense.matrix[[r, c]], 0.0);
            }
            m[[r, r]] += lam;
        }
        let mut ratio_res = 0.0f64;
        let mut ratio_h2 = 0.0f64;
        for s in &samples {
            let f: Array1<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let fnorm = f.norm_l2();
            let psi = big_stack(|| {
                m.solve(&f).map_err(|e| AnalysisError::Eig(e.to_string()))
            })?;
            ratio_res = ratio_res.max(lam.norm() * psi.norm_l2() / fnorm);
            // homogeneous H2 of the complex field, by real/imag parts
            let re: Vec<f64> = psi.iter().map(|v| v.re).collect();
            let im: Vec<f64> = psi.iter().map(|v| v.im).collect();
            let fre = dense.basis.field(&re);
            let fim = dense.basis.field(&im);
            let h2 = (grid.sobolev_seminorm(&fre, 2, 2.0)?.powi(2)
                + grid.sobolev_seminorm(&fim, 2, 2.0)?.powi(2))
            .sqrt();
            ratio_h2 = ratio_h2.max(h2 / fnorm);
        }
        rows.push(ResolventRow {
            lambda_re: lam.re,
            lambda_im: lam.im,
            ratio_resolvent: ratio_res,
            ratio_h2,
            skipped: false,
        });
    }
    Ok(rows)
}

/// Semigroup decay probe report for one theta.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SemigroupRow {
    pub theta: f64,
    /// sup over samples and t of t^theta e^{mu* t} ||A~^theta e^{-t A~} f|| / ||f||
    pub sup_ratio: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SemigroupReport {
    pub mu_star: f64,
    pub abscissa: f64,
    pub rows: Vec<SemigroupRow>,
    /// sup_t ||e^{-tA~}|| e^{lambda_min t} over the probed grid.
    pub transient_c: f64,
}

/// Fractional-power semigroup decay probe via the eigendecomposition:
/// mu* = 0.95 x spectral abscissa.
pub fn semigroup_decay_probe(
    dense: &DenseOperator,
    thetas: &[f64],
    t_grid: &[f64],
    nsamples: usize,
    seed: u64,
) -> Result<SemigroupReport> {
    use rand::{Rng, SeedableRng};
    let (vals, vecs, vinv) = dense.eigendecomposition()?;
    let abscissa = vals.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    if !(abscissa > 0.0) {
        return Err(AnalysisError::NonPositiveSpectrum(abscissa));
    }
    let mu_star = 0.95 * abscissa;
    let n = dense.n();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Array1<Complex64>> = (0..nsamples)
        .map(|_| {
            (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0))
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for &theta in thetas {
        let mut sup = 0.0f64;
        for f in &samples {
            let coeffs = vinv.dot(f);
            let fnorm = f.norm_l2();
            for &t in t_grid {
                let weights: Array1<Complex64> = vals
                    .iter()
                    .zip(coeffs.iter())
                    .map(|(lam, c)| lam.powf(theta) * (-lam * t).exp() * c)
                    .collect();
                let x = vecs.dot(&weights);
                let ratio = t.powf(theta) * (mu_star * t).exp() * x.norm_l2() / fnorm;
                sup = sup.max(ratio);
            }
        }
        rows.push(SemigroupRow {
            theta,
            sup_ratio: sup,
        });
    }
    // transient constant over the same grid
    let mut transient_c = 0.0f64;
    for &t in t_grid {
        transient_c = transient_c.max(dense.semigroup_norm(t)? * (abscissa * t).exp());
    }
    Ok(SemigroupReport {
        mu_star,
        abscissa,
        rows,
        transient_c,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ForcedIntegralReport {
    pub beta: f64,
    pub gamma: f64,
    pub mu_star: f64,
    /// Per probed time: (t, ||phi(t)||, bound shape t^{1-beta}(e^{-gamma t} + e^{-mu* t/2})).
    pub points: Vec<(f64, f64, f64)>,
    /// Fitted constant sup ||phi|| / shape.
    pub c_fit: f64,
}

/// Forced-integral probe: phi(t) = int_0^t e^{-(t-s) A~} P f(s) ds with
/// f(s) = s^{-beta} e^{-gamma s} f0, evaluated through the eigendecomposition
/// with the singular weight absorbed by the substitution s = sigma^{1/(1-beta)}.
pub fn forced_integral_probe(
    dense: &DenseOperator,
    beta: f64,
    gamma: f64,
    t_grid: &[f64],
    seed: u64,
) -> Result<ForcedIntegralReport> {
    use rand::{Rng, SeedableRng};
    let (vals, vecs, vinv) = dense.eigendecomposition()?;
    let abscissa = vals.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    if !(abscissa > 0.0) {
        return Err(AnalysisError::NonPositiveSpectrum(abscissa));
    }
    let mu_star = 0.95 * abscissa;
    let n = dense.n();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // P f0 in coordinates: project a random smooth field
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f0_field = dense.basis.field(&raw);
    let pf0 = hydrostatic_projection(dense.basis.grid, &f0_field)?;
    let f0 = Array1::from_vec(dense.basis.reduce(&pf0));
    let f0c: Array1<Complex64> = f0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let coeffs = vinv.dot(&f0c);
    let mut points = Vec::new();
    let mut c_fit = 0.0f64;
    let quad_points = 600;
    for &t in t_grid {
        // int_0^t e^{-lambda (t-s)} s^{-beta} e^{-gamma s} ds per eigenvalue,
        // substituted s = sigma^{1/(1-beta)} so the integrand is smooth
        let upper = t.powf(1.0 - beta);
        let h = upper / quad_points as f64;
        let mut weights = vec![Complex64::default(); n];
        for q in 0..=quad_points {
            let sigma = q as f64 * h;
            let s = sigma.powf(1.0 / (1.0 - beta));
            let trap = if q == 0 || q == quad_points { 0.5 } else { 1.0 };
            for (wi, lam) in weights.iter_mut().zip(&vals) {
                let e = (-(lam * (t - s))).exp() * (-gamma * s).exp();
                *wi += trap * h / (1.0 - beta) * e;
            }
        }
        let modal: Array1<Complex64> = weights
            .iter()
            .zip(coeffs.iter())
            .map(|(w, c)| w * c)
            .collect();
        let phi = vecs.dot(&modal);
        let norm = phi.norm_l2();
        let shape = t.powf(1.0 - beta) * ((-gamma * t).exp() + (-mu_star * t / 2.0).exp());
        points.push((t, norm, shape));
        if shape > 0.0 {
            c_fit = c_fit.max(norm / shape);
        }
    }
    Ok(ForcedIntegralReport {
        beta,
        gamma,
        mu_star,
        points,
        c_fit,
    })
}
