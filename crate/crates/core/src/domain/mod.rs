//! Grids, spectral/physical transforms, field containers, and the spatial and
//! time-weighted norms used as diagnostics.

mod field;
mod grid;
mod norms;
mod time_weighted;
mod transform;

pub use field::{PhysicalField, SpectralField};
pub use grid::{Grid, ModeIndex};
pub use norms::GradientFields;
pub use time_weighted::time_weighted_norm;

use crate::error::{CoreError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Deterministic random smooth field: white noise on the grid, spectrally
/// damped by exp(-decay (|k| + m)) and dealias-masked. Hermitian symmetry is
/// exact because the construction starts from real point values.
pub fn random_smooth(grid: &Grid, ncomp: usize, seed: u64, decay: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phys = PhysicalField::zeros(grid, ncomp);
    for v in phys.values.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let mut spec = grid.to_spectral(&phys).expect("shapes match");
    for c in 0..ncomp {
        for ix in 0..grid.nx() {
            for iy in 0..grid.ny() {
                let kmag = ((grid.kx_idx[ix].pow(2) + grid.ky_idx[iy].pow(2)) as f64).sqrt();
                for m in 0..grid.nz() {
                    let damp = (-decay * (kmag + m as f64)).exp();
                    spec.coeffs[[c, ix, iy, m]] *= damp;
                }
            }
        }
    }
    spec.apply_mask(grid);
    spec
}

/// Geometry and resolution of the periodic layer T^2 x (-l, 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    /// Layer depth (> 0); the vertical coordinate runs over (-l, 0).
    pub l: f64,
    /// Horizontal period in x.
    pub lx: f64,
    /// Horizontal period in y.
    pub ly: f64,
    /// Horizontal mode count in x (even, >= 4).
    pub nx: usize,
    /// Horizontal mode count in y (even, >= 4).
    pub ny: usize,
    /// Vertical collocation point count (>= 4).
    pub nz: usize,
    /// Horizontal dealias truncation fraction, in (0, 1].
    pub dealias: f64,
}

impl DomainSpec {
    pub fn new(l: f64, nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let spec = DomainSpec {
            l,
            lx: 2.0 * std::f64::consts::PI,
            ly: 2.0 * std::f64::consts::PI,
            nx,
            ny,
            nz,
            dealias: 2.0 / 3.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) || !self.l.is_finite() {
            return Err(CoreError::invalid("l", "layer depth must be positive"));
        }
        if !(self.lx > 0.0) || !(self.ly > 0.0) {
            return Err(CoreError::invalid("lx/ly", "periods must be positive"));
        }
        if self.nx < 4 || self.nx % 2 != 0 {
            return Err(CoreError::invalid("nx", "must be even and >= 4"));
        }
        if self.ny < 4 || self.ny % 2 != 0 {
            return Err(CoreError::invalid("ny", "must be even and >= 4"));
        }
        if self.nz < 4 {
            return Err(CoreError::invalid("nz", "must be >= 4"));
        }
        if !(self.dealias > 0.0 && self.dealias <= 1.0) {
            return Err(CoreError::invalid("dealias", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Parameters of a Lebesgue/Sobolev time-weighted norm
/// (integral of (t^{1-eta} e^{gamma t} ||f(t)||_X)^p dt)^{1/p}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    /// Time exponent p in (1, inf).
    pub p: f64,
    /// Space exponent q in (1, inf).
    pub q: f64,
    /// Time weight eta in (1/p, 1].
    pub eta: f64,
    /// Exponential weight rate gamma >= 0.
    pub gamma: f64,
}

impl NormSpec {
    pub fn new(p: f64, q: f64, eta: f64, gamma: f64) -> Result<Self> {
        let spec = NormSpec { p, q, eta, gamma };
        spec.validate()?;
        Ok(spec)
    }

    /// The critical time weight eta = 1/p + 1/q.
    pub fn critical(p: f64, q: f64, gamma: f64) -> Result<Self> {
        Self::new(p, q, 1.0 / p + 1.0 / q, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(CoreError::invalid("p", "must lie in (1, inf)"));
        }
        if !(self.q > 1.0) || !self.q.is_finite() {
            return Err(CoreError::invalid("q", "must lie in (1, inf)"));
        }
        if !(self.eta > 1.0 / self.p && self.eta <= 1.0) {
            return Err(CoreError::invalid("eta", "must lie in (1/p, 1]"));
        }
        if !(self.gamma >= 0.0) {
            return Err(CoreError::invalid("gamma", "must be >= 0"));
        }
        Ok(())
    }
}

/// A sampled scalar time series (norm values along a trajectory).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(CoreError::invalid(
                "series",
                "times and values must have equal length",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CoreError::invalid(
                "series.times",
                "must be strictly increasing",
            ));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("time series".into()));
        }
        Ok(TimeSeries { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, v: f64) {
        debug_assert!(self.times.last().map_or(true, |last| t > *last));
        self.times.push(t);
        self.values.push(v);
    }

    /// Restrict to samples with t in [t_a, t_b].
    pub fn window(&self, t_a: f64, t_b: f64) -> TimeSeries {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t >= t_a && t <= t_b {
                times.push(t);
                values.push(v);
            }
        }
        TimeSeries { times, values }
    }
}
