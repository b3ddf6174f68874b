//! Nonlinear terms and right-hand-side assembly for the three systems:
//! the primitive equations, the nudged system, and their difference.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, PhysicalField, SpectralField};
use crate::error::{CoreError, Result};
use crate::operators::{
    hydrostatic_projection, vertical_velocity, ObservationOperator,
};

/// Which evolution system a right-hand side or integrator realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Primitive,
    Nudged,
    Difference,
}

/// Unprojected advective product u_c . grad target where the carrier
/// velocity is (v_c, w(v_c)): horizontal products on the dealiased grid,
/// vertical products on the padded Chebyshev grid.
pub fn advective_product(
    grid: &Grid,
    carrier: &SpectralField,
    target: &SpectralField,
) -> Result<SpectralField> {
    carrier.check_shape(grid, "advect carrier")?;
    target.check_shape(grid, "advect target")?;
    let w = vertical_velocity(grid, carrier)?;

    let car_phys = grid.to_physical_padded(carrier);
    let w_phys = grid.to_physical_padded(&w);
    let tx = grid.to_physical_padded(&grid.dx(target));
    let ty = grid.to_physical_padded(&grid.dy(target));
    let tz = grid.to_physical_padded(&grid.dz(target));

    let (nx, ny, mz) = (grid.nx(), grid.ny(), grid.mz);
    let ncomp = target.ncomp();
    let mut prod = ndarray::Array4::<f64>::zeros((ncomp, nx, ny, mz));
    for c in 0..ncomp {
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..mz {
                    prod[[c, i, j, k]] = car_phys[[0, i, j, k]] * tx[[c, i, j, k]]
                        + car_phys[[1, i, j, k]] * ty[[c, i, j, k]]
                        + w_phys[[0, i, j, k]] * tz[[c, i, j, k]];
                }
            }
        }
    }
    Ok(grid.from_physical_padded(&prod))
}

/// Projected advective transport P(u_c . grad target).
pub fn advect(grid: &Grid, carrier: &SpectralField, target: &SpectralField) -> Result<SpectralField> {
    let prod = advective_product(grid, carrier, target)?;
    hydrostatic_projection(grid, &prod)
}

/// Projected convection P(u . grad v) of a velocity field by itself.
pub fn convection(grid: &Grid, v: &SpectralField) -> Result<SpectralField> {
    advect(grid, v, v)
}

/// Right-hand side of the primitive equations:
/// P Delta v - P(u . grad v) + P f.
pub fn primitive_rhs(grid: &Grid, v: &SpectralField, f: &SpectralField) -> Result<SpectralField> {
    let lap = grid.laplacian(v);
    let mut rhs = hydrostatic_projection(grid, &lap)?;
    let conv = convection(grid, v)?;
    rhs.axpy(-1.0, &conv);
    let pf = hydrostatic_projection(grid, f)?;
    rhs.axpy(1.0, &pf);
    rhs.apply_mask(grid);
    Ok(rhs)
}

/// Right-hand side of the nudged system:
/// P Delta v~ - P(u~ . grad v~) + P J f + mu P (J v - J v~).
/// `observed_truth` is J v, supplied by the observation stream: the nudged
/// dynamics never see the truth itself, only its observation.
pub fn nudged_rhs(
    grid: &Grid,
    vt: &SpectralField,
    observed_truth: &SpectralField,
    obs: &ObservationOperator,
    mu: f64,
    f: &SpectralField,
) -> Result<SpectralField> {
    let lap = grid.laplacian(vt);
    let mut rhs = hydrostatic_projection(grid, &lap)?;
    let conv = convection(grid, vt)?;
    rhs.axpy(-1.0, &conv);
    let jf = obs.apply_spectral(grid, f)?;
    let pjf = hydrostatic_projection(grid, &jf)?;
    rhs.axpy(1.0, &pjf);
    if mu != 0.0 {
        let jvt = obs.apply_spectral(grid, vt)?;
        let feedback = observed_truth.sub(&jvt);
        let pfb = hydrostatic_projection(grid, &feedback)?;
        rhs.axpy(mu, &pfb);
    }
    rhs.apply_mask(grid);
    Ok(rhs)
}

/// Convenience wrapper observing the truth internally.
pub fn nudged_rhs_with_truth(
    grid: &Grid,
    vt: &SpectralField,
    v_truth: &SpectralField,
    obs: &ObservationOperator,
    mu: f64,
    f: &SpectralField,
) -> Result<SpectralField> {
    let observed = obs.apply_spectral(grid, v_truth)?;
    nudged_rhs(grid, vt, &observed, obs, mu, f)
}

/// Right-hand side of the difference system for V = v - v~:
/// P Delta V - P(u . grad V + U . grad v - U . grad V) + P F - mu P J V,
/// with F = f - J f.
pub fn difference_rhs(
    grid: &Grid,
    big_v: &SpectralField,
    v_truth: &SpectralField,
    obs: &ObservationOperator,
    mu: f64,
    f: &SpectralField,
) -> Result<SpectralField> {
    let lap = grid.laplacian(big_v);
    let mut rhs = hydrostatic_projection(grid, &lap)?;
    let u_grad_v_big = advect(grid, v_truth, big_v)?;
    let big_u_grad_v = advect(grid, big_v, v_truth)?;
    let big_u_grad_big_v = advect(grid, big_v, big_v)?;
    rhs.axpy(-1.0, &u_grad_v_big);
    rhs.axpy(-1.0, &big_u_grad_v);
    rhs.axpy(1.0, &big_u_grad_big_v);
    let jf = obs.apply_spectral(grid, f)?;
    let cap_f = f.sub(&jf);
    let pf = hydrostatic_projection(grid, &cap_f)?;
    rhs.axpy(1.0, &pf);
    if mu != 0.0 {
        let jv = obs.apply_spectral(grid, big_v)?;
        let pjv = hydrostatic_projection(grid, &jv)?;
        rhs.axpy(-mu, &pjv);
    }
    rhs.apply_mask(grid);
    Ok(rhs)
}

/// Closed-form forcing fields registered by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    /// "zero", "single-mode", "taylor-green-layer" or "manufactured-tg".
    pub name: String,
    pub amplitude: f64,
    /// Exponential decay rate gamma_0 of the modulation e^{-gamma_0 t}.
    pub gamma0: f64,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec {
            name: "zero".into(),
            amplitude: 0.0,
            gamma0: 0.0,
        }
    }
}

/// Forcing evaluator with precomputed spatial patterns.
#[derive(Debug, Clone)]
pub struct ForcingField {
    spec: ForcingSpec,
    pattern: SpectralField,
    /// Second pattern for the manufactured solution (nonlinear compensation).
    pattern_nl: Option<SpectralField>,
    /// Stokes eigenvalue of the Taylor-Green pattern (manufactured mode).
    lambda_tg: f64,
}

/// Taylor-Green layer velocity pattern: divergence-free pointwise, satisfies
/// the Neumann-top/Dirichlet-bottom conditions, and is an exact eigenfunction
/// of the hydrostatic Stokes operator.
pub fn taylor_green_pattern(grid: &Grid) -> Result<SpectralField> {
    let l = grid.spec.l;
    let phys = PhysicalField::from_fn(grid, 2, |c, x, y, z| {
        let profile = (PI * z / (2.0 * l)).cos();
        match c {
            0 => x.sin() * y.cos() * profile,
            _ => -x.cos() * y.sin() * profile,
        }
    });
    let mut s = grid.to_spectral(&phys)?;
    s.apply_mask(grid);
    Ok(s)
}

/// Eigenvalue of the Taylor-Green pattern under the Stokes operator.
pub fn taylor_green_eigenvalue(grid: &Grid) -> f64 {
    let k2 = (2.0 * PI / grid.spec.lx).powi(2) + (2.0 * PI / grid.spec.ly).powi(2);
    k2 + (PI / (2.0 * grid.spec.l)).powi(2)
}

fn single_mode_pattern(grid: &Grid) -> Result<SpectralField> {
    let l = grid.spec.l;
    let phys = PhysicalField::from_fn(grid, 2, |c, x, _, z| {
        let profile = (PI * z / (2.0 * l)).cos();
        if c == 0 {
            x.cos() * profile
        } else {
            0.0
        }
    });
    let mut s = grid.to_spectral(&phys)?;
    s.apply_mask(grid);
    Ok(s)
}

/// Nonlinear compensation pattern of the manufactured Taylor-Green solution:
/// P(u_tg . grad v_tg) = (phi^2 - 1/2) (sin 2x, sin 2y) / 2 for the unit
/// Taylor-Green field (closed form; the vertical mean of cos^2 is exactly 1/2).
fn manufactured_nl_pattern(grid: &Grid) -> Result<SpectralField> {
    let l = grid.spec.l;
    let phys = PhysicalField::from_fn(grid, 2, |c, x, y, z| {
        let phi = (PI * z / (2.0 * l)).cos();
        let weight = phi * phi - 0.5;
        match c {
            0 => weight * (2.0 * x).sin() / 2.0,
            _ => weight * (2.0 * y).sin() / 2.0,
        }
    });
    let mut s = grid.to_spectral(&phys)?;
    s.apply_mask(grid);
    Ok(s)
}

impl ForcingField {
    pub fn build(grid: &Grid, spec: &ForcingSpec) -> Result<ForcingField> {
        let pattern = match spec.name.as_str() {
            "zero" => SpectralField::zeros(grid, 2),
            "taylor-green-layer" | "manufactured-tg" => taylor_green_pattern(grid)?,
            "single-mode" => single_mode_pattern(grid)?,
            other => {
                return Err(CoreError::invalid(
                    "forcing.name",
                    format!("unknown forcing '{other}' (expected zero, single-mode, taylor-green-layer, manufactured-tg)"),
                ))
            }
        };
        let pattern_nl = if spec.name == "manufactured-tg" {
            Some(manufactured_nl_pattern(grid)?)
        } else {
            None
        };
        Ok(ForcingField {
            spec: spec.clone(),
            pattern,
            pattern_nl,
            lambda_tg: taylor_green_eigenvalue(grid),
        })
    }

    /// f(t). For the named decaying forcings this is amp e^{-gamma0 t} times
    /// the spatial pattern. The manufactured forcing is built so the exact
    /// solution of the primitive equations is a(t) TG with a = amp e^{-gamma0 t}:
    /// f = (lambda - gamma0) a TG + a^2 NL.
    pub fn evaluate(&self, t: f64) -> SpectralField {
        let a = self.spec.amplitude * (-self.spec.gamma0 * t).exp();
        match &self.pattern_nl {
            None => self.pattern.scaled(a),
            Some(nl) => {
                let mut f = self.pattern.scaled((self.lambda_tg - self.spec.gamma0) * a);
                f.axpy(a * a, nl);
                f
            }
        }
    }

    /// Exact manufactured solution at time t (only for "manufactured-tg").
    pub fn manufactured_state(&self, t: f64) -> Option<SpectralField> {
        self.pattern_nl.as_ref()?;
        let a = self.spec.amplitude * (-self.spec.gamma0 * t).exp();
        Some(self.pattern.scaled(a))
    }

    pub fn spec(&self) -> &ForcingSpec {
        &self.spec
    }
}

/// Named initial-data builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    /// "zero", "taylor-green-layer", "single-mode" or "random-smooth".
    pub name: String,
    pub amplitude: f64,
    /// Spectral decay of the random-smooth field.
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    0.8
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec {
            name: "zero".into(),
            amplitude: 0.0,
            decay: default_decay(),
        }
    }
}

impl InitialSpec {
    /// Build the initial state: BC-satisfying, mean-divergence-free, dealiased.
    pub fn build(&self, grid: &Grid, seed: u64) -> Result<SpectralField> {
        let raw = match self.name.as_str() {
            "zero" => SpectralField::zeros(grid, 2),
            "taylor-green-layer" => taylor_green_pattern(grid)?.scaled(self.amplitude),
            "single-mode" => single_mode_pattern(grid)?.scaled(self.amplitude),
            "random-smooth" => {
                crate::domain::random_smooth(grid, 2, seed, self.decay).scaled(self.amplitude)
            }
            other => {
                return Err(CoreError::invalid(
                    "initial.name",
                    format!("unknown initial data '{other}' (expected zero, taylor-green-layer, single-mode, random-smooth)"),
                ))
            }
        };
        crate::operators::prepare_state(grid, &raw)
    }
}

/// Truth trajectory sampled at discrete times, interpolated in time by cubic
/// Hermite with finite-difference slopes (used when assimilation runs consume
/// a stored truth rather than running in lockstep).
#[derive(Debug, Clone)]
pub struct SampledTruth {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
}

impl SampledTruth {
    pub fn new(times: Vec<f64>, states: Vec<SpectralField>) -> Result<Self> {
        if times.len() != states.len() || times.len() < 2 {
            return Err(CoreError::Degenerate(
                "sampled truth needs at least two snapshots".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CoreError::Degenerate(
                "sampled truth times must be strictly increasing".into(),
            ));
        }
        Ok(SampledTruth { times, states })
    }

    /// Cubic Hermite interpolation with Catmull-Rom style slopes.
    pub fn at(&self, t: f64) -> Result<SpectralField> {
        let n = self.times.len();
        let eps = 1e-9 * (self.times[n - 1] - self.times[0]).abs().max(1.0);
        if t < self.times[0] - eps || t > self.times[n - 1] + eps {
            return Err(CoreError::MissingTruth(t));
        }
        let t = t.clamp(self.times[0], self.times[n - 1]);
        let i = match self
            .times
            .binary_search_by(|v| v.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => return Ok(self.states[i].clone()),
            Err(i) => (i - 1).min(n - 2),
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let slope = |j: usize| -> SpectralField {
            if n == 2 {
                let dt = self.times[1] - self.times[0];
                let mut d = self.states[1].sub(&self.states[0]);
                d.scale(1.0 / dt);
                return d;
            }
            if j == 0 || j == n - 1 {
                // one-sided second-order slope at the ends (uniform spacing
                // assumed only locally; uses the actual time gaps)
                let (a, b, c) = if j == 0 { (0, 1, 2) } else { (n - 1, n - 2, n - 3) };
                let h1 = self.times[b] - self.times[a];
                let h2 = self.times[c] - self.times[a];
                // derivative of the quadratic through (t_a, t_b, t_c) at t_a
                let wa = -(h1 + h2) / (h1 * h2);
                let wb = h2 / (h1 * (h2 - h1));
                let wc = -h1 / (h2 * (h2 - h1));
                let mut d = self.states[a].scaled(wa);
                d.axpy(wb, &self.states[b]);
                d.axpy(wc, &self.states[c]);
                return d;
            }
            let (lo, hi) = (j - 1, j + 1);
            let dt = self.times[hi] - self.times[lo];
            let mut d = self.states[hi].sub(&self.states[lo]);
            d.scale(1.0 / dt);
            d
        };
        let m0 = slope(i);
        let m1 = slope(i + 1);
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        let mut out = self.states[i].scaled(h00);
        out.axpy(h10 * h, &m0);
        out.axpy(h01, &self.states[i + 1]);
        out.axpy(h11 * h, &m1);
        Ok(out)
    }
}
