//! Plain-text run configuration: TOML sections with total validation and a
//! byte-stable effective-config echo. Unknown keys are rejected; constraint
//! violations name the offending key.

use serde::{Deserialize, Serialize};

use hydronudge::assimilation::DifferenceMode;
use hydronudge::domain::{DomainSpec, Grid, NormSpec};
use hydronudge::dynamics::{ForcingSpec, InitialSpec};
use hydronudge::operators::{NudgingParams, ObservationOperator};
use hydronudge::timestep::{Scheme, StepperConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Assimilate,
    Sweep,
    Spectrum,
    VerifyOps,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub l: f64,
    #[serde(default = "default_period")]
    pub lx: f64,
    #[serde(default = "default_period")]
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    #[serde(default = "default_dealias")]
    pub dealias: f64,
}

fn default_period() -> f64 {
    2.0 * std::f64::consts::PI
}

fn default_dealias() -> f64 {
    2.0 / 3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default = "default_cfl_guard")]
    pub cfl_guard: f64,
    #[serde(default = "default_mu_dt_guard")]
    pub mu_dt_guard: f64,
}

fn default_scheme() -> Scheme {
    Scheme::ImexCnab2
}
fn default_output_every() -> usize {
    10
}
fn default_cfl_guard() -> f64 {
    0.8
}
fn default_mu_dt_guard() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum ObservationSection {
    CubeAverage { cx: usize, cy: usize, cz: usize },
    FourierLowpass { delta: f64 },
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NudgingSection {
    #[serde(default)]
    pub mu: f64,
    pub observation: ObservationSection,
}

impl Default for NudgingSection {
    fn default() -> Self {
        NudgingSection {
            mu: 0.0,
            observation: ObservationSection::Identity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssimilationSection {
    #[serde(default = "default_difference_mode")]
    pub difference_mode: DifferenceMode,
    #[serde(default = "default_fit_window")]
    pub fit_window: (f64, f64),
    #[serde(default = "default_monitors")]
    pub monitors: Vec<String>,
    #[serde(default = "default_monitor_ceiling")]
    pub monitor_ceiling: f64,
    #[serde(default)]
    pub record_observations: bool,
    /// Weighted space-time norms (p, q, eta, gamma) of the error state.
    #[serde(default)]
    pub norm_specs: Vec<NormSpec>,
}

fn default_difference_mode() -> DifferenceMode {
    DifferenceMode::Pointwise
}
fn default_fit_window() -> (f64, f64) {
    (0.4, 1.0)
}
fn default_monitors() -> Vec<String> {
    vec!["energy".into(), "h1h2".into(), "h3".into()]
}
fn default_monitor_ceiling() -> f64 {
    1e3
}

impl Default for AssimilationSection {
    fn default() -> Self {
        AssimilationSection {
            difference_mode: default_difference_mode(),
            fit_window: default_fit_window(),
            monitors: default_monitors(),
            monitor_ceiling: default_monitor_ceiling(),
            record_observations: false,
            norm_specs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub mus: Vec<f64>,
    /// Cube-average cell counts per sweep point (cx, cy, cz).
    #[serde(default)]
    pub cube_cells: Vec<(usize, usize, usize)>,
    /// Low-pass observation resolutions.
    #[serde(default)]
    pub lowpass_deltas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub mus: Vec<f64>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    hydronudge_analysis::DEFAULT_DENSE_CAP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub domain: DomainSection,
    #[serde(default)]
    pub stepper: Option<StepperSection>,
    #[serde(default)]
    pub nudging: NudgingSection,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub assimilated: InitialSpec,
    #[serde(default)]
    pub assimilation: AssimilationSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSection>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl std::error::Error for ConfigError {}

impl RunConfig {
    /// Parse and validate; errors name the offending key (TOML syntax and
    /// unknown-key errors carry line anchors from the parser).
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let key = |k: &str, reason: String| ConfigError(format!("{k}: {reason}"));
        self.domain_spec()
            .validate()
            .map_err(|e| key("domain", e.to_string()))?;
        if let Some(st) = &self.stepper {
            self.stepper_config(st)
                .validate()
                .map_err(|e| key("stepper", e.to_string()))?;
        }
        if !(self.nudging.mu >= 0.0) || !self.nudging.mu.is_finite() {
            return Err(key("nudging.mu", "must be >= 0 and finite".into()));
        }
        match &self.nudging.observation {
            ObservationSection::CubeAverage { cx, cy, cz } => {
                if *cx == 0 || *cy == 0 || *cz == 0 {
                    return Err(key(
                        "nudging.observation",
                        "cell counts must be >= 1".into(),
                    ));
                }
            }
            ObservationSection::FourierLowpass { delta } => {
                if !(*delta > 0.0) {
                    return Err(key("nudging.observation.delta", "must be > 0".into()));
                }
            }
            ObservationSection::Identity => {}
        }
        if !(self.forcing.amplitude.is_finite() && self.forcing.gamma0 >= 0.0) {
            return Err(key(
                "forcing",
                "amplitude must be finite and gamma0 >= 0".into(),
            ));
        }
        let fw = self.assimilation.fit_window;
        if !(fw.0 >= 0.0 && fw.0 < fw.1 && fw.1 <= 1.0) {
            return Err(key(
                "assimilation.fit_window",
                "must satisfy 0 <= a < b <= 1".into(),
            ));
        }
        for m in &self.assimilation.monitors {
            if !["energy", "h1h2", "h3"].contains(&m.as_str()) {
                return Err(key(
                    "assimilation.monitors",
                    format!("unknown monitor '{m}'"),
                ));
            }
        }
        for spec in &self.assimilation.norm_specs {
            spec.validate()
                .map_err(|e| key("assimilation.norm_specs", e.to_string()))?;
        }
        match self.run.experiment {
            Experiment::Simulate | Experiment::Assimilate => {
                if self.stepper.is_none() {
                    return Err(key("stepper", "required for this experiment".into()));
                }
            }
            Experiment::Sweep => {
                if self.stepper.is_none() {
                    return Err(key("stepper", "required for sweep".into()));
                }
                let sw = self
                    .sweep
                    .as_ref()
                    .ok_or_else(|| key("sweep", "section required".into()))?;
                if sw.mus.is_empty() {
                    return Err(key("sweep.mus", "must be non-empty".into()));
                }
                if sw.cube_cells.is_empty() && sw.lowpass_deltas.is_empty() {
                    return Err(key(
                        "sweep",
                        "needs cube_cells and/or lowpass_deltas".into(),
                    ));
                }
            }
            Experiment::Spectrum => {
                if self.spectrum.is_none() {
                    return Err(key("spectrum", "section required".into()));
                }
            }
            Experiment::VerifyOps => {}
        }
        Ok(())
    }

    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec {
            l: self.domain.l,
            lx: self.domain.lx,
            ly: self.domain.ly,
            nx: self.domain.nx,
            ny: self.domain.ny,
            nz: self.domain.nz,
            dealias: self.domain.dealias,
        }
    }

    pub fn stepper_config(&self, st: &StepperSection) -> StepperConfig {
        StepperConfig {
            scheme: st.scheme,
            dt: st.dt,
            t_end: st.t_end,
            output_every: st.output_every,
            cfl_guard: st.cfl_guard,
            mu_dt_guard: st.mu_dt_guard,
        }
    }

    pub fn observation(&self, grid: &Grid) -> Result<ObservationOperator, ConfigError> {
        build_observation(&self.nudging.observation, grid)
    }

    pub fn nudging_params(&self, obs: &ObservationOperator) -> Result<NudgingParams, ConfigError> {
        NudgingParams::new(self.nudging.mu, obs.delta)
            .map_err(|e| ConfigError(format!("nudging: {e}")))
    }

    /// Byte-stable serialization of the effective (defaults-filled) config.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

pub fn build_observation(
    section: &ObservationSection,
    grid: &Grid,
) -> Result<ObservationOperator, ConfigError> {
    match section {
        ObservationSection::CubeAverage { cx, cy, cz } => {
            ObservationOperator::cube_average(grid, *cx, *cy, *cz)
                .map_err(|e| ConfigError(format!("nudging.observation: {e}")))
        }
        ObservationSection::FourierLowpass { delta } => {
            ObservationOperator::fourier_lowpass(grid, *delta)
                .map_err(|e| ConfigError(format!("nudging.observation: {e}")))
        }
        ObservationSection::Identity => Ok(ObservationOperator::identity()),
    }
}
