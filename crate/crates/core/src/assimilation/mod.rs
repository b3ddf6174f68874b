//! Twin-experiment orchestration, decay-rate fitting, runtime inequality
//! monitors, the maximal-regularity functional, and parameter sweeps.

mod fit;
mod monitors;

pub use fit::{fit_decay_rate, DecayFit};
pub use monitors::{
    energy_monitor, h1_h2_monitors, h3_budget_monitor, MonitorEntry, MonitorLedger, MonitorSeries,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, NormSpec, SpectralField, TimeSeries};
use crate::dynamics::{ForcingField, ForcingSpec, InitialSpec, SystemKind};
use crate::error::{CoreError, Result};
use crate::operators::{NudgingParams, ObservationOperator};
use crate::timestep::{record_norms, Integrator, NormSeries, Scheme, StepData, StepperConfig};

/// How the error state V is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DifferenceMode {
    /// V = v - v~ pointwise on the grid.
    Pointwise,
    /// Additionally integrate the difference system directly and cross-check.
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinExperimentConfig {
    pub truth_initial: InitialSpec,
    pub assimilated_initial: InitialSpec,
    pub forcing: ForcingSpec,
    pub params: NudgingParams,
    pub obs: ObservationOperator,
    pub stepper: StepperConfig,
    /// Monitors to evaluate: subset of {"energy", "h1h2", "h3"}.
    pub monitors: Vec<String>,
    /// Extra weighted space-time norms evaluated on the error state.
    pub norm_specs: Vec<NormSpec>,
    pub difference_mode: DifferenceMode,
    pub seed: u64,
    /// Fit window as fractions of the horizon (default last 60%).
    pub fit_window: (f64, f64),
    /// Ceiling factor of the boundedness monitors.
    pub monitor_ceiling: f64,
    /// Record the observation stream (J v at every step) for replay tests.
    pub record_observations: bool,
}

impl TwinExperimentConfig {
    pub fn basic(
        truth_initial: InitialSpec,
        assimilated_initial: InitialSpec,
        forcing: ForcingSpec,
        params: NudgingParams,
        obs: ObservationOperator,
        stepper: StepperConfig,
        seed: u64,
    ) -> Self {
        TwinExperimentConfig {
            truth_initial,
            assimilated_initial,
            forcing,
            params,
            obs,
            stepper,
            monitors: vec!["energy".into(), "h1h2".into(), "h3".into()],
            norm_specs: Vec::new(),
            difference_mode: DifferenceMode::Pointwise,
            seed,
            fit_window: (0.4, 1.0),
            monitor_ceiling: 1e3,
            record_observations: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwinExperimentResult {
    pub times: Vec<f64>,
    /// Error norms of V = v - v~ at the output cadence.
    pub error_norms: NormSeries,
    /// Norms of the truth state.
    pub truth_norms: NormSeries,
    /// Error snapshots (V) at the output cadence.
    pub error_snapshots: Vec<SpectralField>,
    /// Decay fits per norm name over the fit window.
    pub fits: BTreeMap<String, DecayFit>,
    pub ledger: MonitorLedger,
    pub monitor_series: MonitorSeries,
    /// Max relative deviation between v - v~ and the directly integrated
    /// difference state (difference_mode = Both).
    pub difference_check: Option<f64>,
    /// Weighted space-time norms of the error (NormSpec with gamma as given).
    pub weighted_norms: Vec<(NormSpec, f64)>,
    /// Observation stream J v(t_n) per step (when recorded).
    pub observed_stream: Vec<SpectralField>,
    pub failure: Option<String>,
}

/// Lockstep twin experiment: the truth runs the primitive equations, the
/// assimilated state runs the nudged system seeing only {J v, J f}, and
/// optionally the difference system is integrated directly for cross-checking.
pub fn run_twin_experiment(grid: &Grid, cfg: &TwinExperimentConfig) -> Result<TwinExperimentResult> {
    cfg.stepper.validate()?;
    if cfg.difference_mode == DifferenceMode::Both
        && cfg.stepper.scheme != Scheme::ImexCnab2
    {
        return Err(CoreError::invalid(
            "difference_mode",
            "the direct-difference cross-check requires the IMEX scheme (its stage-consistent discrete identity)",
        ));
    }
    let forcing = ForcingField::build(grid, &cfg.forcing)?;
    let v0 = cfg.truth_initial.build(grid, cfg.seed)?;
    let vt0 = cfg.assimilated_initial.build(grid, cfg.seed.wrapping_add(1))?;
    let mu = cfg.params.mu;

    let mut truth = Integrator::new(
        grid,
        SystemKind::Primitive,
        ObservationOperator::identity(),
        0.0,
        &cfg.stepper,
        &v0,
    )?;
    let mut assim = Integrator::new(
        grid,
        SystemKind::Nudged,
        cfg.obs.clone(),
        mu,
        &cfg.stepper,
        &vt0,
    )?;
    let mut diff = if cfg.difference_mode == DifferenceMode::Both {
        let d0 = truth.state().sub(assim.state());
        Some(Integrator::new(
            grid,
            SystemKind::Difference,
            cfg.obs.clone(),
            mu,
            &cfg.stepper,
            &d0,
        )?)
    } else {
        None
    };

    let mut result = TwinExperimentResult {
        times: Vec::new(),
        error_norms: NormSeries {
            lq_exponent: 4.0,
            ..Default::default()
        },
        truth_norms: NormSeries {
            lq_exponent: 4.0,
            ..Default::default()
        },
        error_snapshots: Vec::new(),
        fits: BTreeMap::new(),
        ledger: MonitorLedger::default(),
        monitor_series: MonitorSeries::default(),
        difference_check: None,
        weighted_norms: Vec::new(),
        observed_stream: Vec::new(),
        failure: None,
    };

    let want_monitor = |name: &str| cfg.monitors.iter().any(|m| m == name);
    let mut max_diff_dev: f64 = 0.0;

    // t = 0 records
    let record =
        |res: &mut TwinExperimentResult, grid: &Grid, t: f64, v: &SpectralField, vt: &SpectralField, f: &SpectralField| -> Result<()> {
            let err = v.sub(vt);
            record_norms(grid, &mut res.error_norms, t, &err)?;
            record_norms(grid, &mut res.truth_norms, t, v)?;
            res.monitor_series.record_error_state(grid, t, &err)?;
            res.monitor_series.record_forcing(grid, t, f)?;
            res.monitor_series.record_truth(grid, t, v)?;
            res.times.push(t);
            res.error_snapshots.push(err);
            Ok(())
        };
    record(
        &mut result,
        grid,
        0.0,
        truth.state(),
        assim.state(),
        &forcing.evaluate(0.0),
    )?;

    let nsteps = cfg.stepper.steps();
    let dt = cfg.stepper.dt;
    let mut v_prev: Option<SpectralField> = None;
    for n in 0..nsteps {
        let t_now = n as f64 * dt;
        let f_now = forcing.evaluate(t_now);
        let v_now = truth.state().clone();

        // advance the truth first so the difference stepper can see v^{n+1}
        truth.step(&StepData {
            forcing: Some(&f_now),
            ..Default::default()
        })?;
        let v_next = truth.state().clone();

        let observed = assim.observation().apply_spectral(grid, &v_now)?;
        let observed_next = assim.observation().apply_spectral(grid, &v_next)?;
        if cfg.record_observations {
            result.observed_stream.push(observed.clone());
            if n + 1 == nsteps {
                result.observed_stream.push(observed_next.clone());
            }
        }
        assim.step(&StepData {
            forcing: Some(&f_now),
            observed_truth: Some(&observed),
            observed_truth_next: Some(&observed_next),
            ..Default::default()
        })?;
        if let Some(d) = diff.as_mut() {
            d.step(&StepData {
                forcing: Some(&f_now),
                truth_now: Some(&v_now),
                truth_next: Some(&v_next),
                truth_prev: v_prev.as_ref(),
                ..Default::default()
            })?;
        }
        v_prev = Some(v_now);

        if (n + 1) % cfg.stepper.output_every == 0 || n + 1 == nsteps {
            let t = truth.t();
            let finite = truth.state().max_coeff().is_finite()
                && assim.state().max_coeff().is_finite();
            if !finite {
                result.failure = Some(format!("non-finite state at t = {t:.6}"));
                break;
            }
            record(
                &mut result,
                grid,
                t,
                truth.state(),
                assim.state(),
                &forcing.evaluate(t),
            )?;
            if let Some(d) = diff.as_ref() {
                let pointwise = truth.state().sub(assim.state());
                let direct = d.state();
                let denom = grid.parseval_l2_sq(direct).sqrt();
                if denom > 1e-300 {
                    let dev = grid.parseval_l2_sq(&pointwise.sub(direct)).sqrt() / denom;
                    max_diff_dev = max_diff_dev.max(dev);
                }
            }
        }
    }
    if diff.is_some() {
        result.difference_check = Some(max_diff_dev);
    }

    // decay fits on the late window
    let t_end = *result.times.last().unwrap_or(&cfg.stepper.t_end);
    let window = (cfg.fit_window.0 * t_end, cfg.fit_window.1 * t_end);
    for (name, series) in [
        ("L2", &result.error_norms.l2),
        ("H1", &result.error_norms.h1),
        ("H2", &result.error_norms.h2),
    ] {
        if let Ok(fit) = fit_decay_rate(series, window, name) {
            result.fits.insert(name.to_string(), fit);
        }
    }

    // monitors
    if want_monitor("energy") {
        let early_window = (0.0, 0.4 * t_end);
        let early_rate = fit_decay_rate(&result.error_norms.l2, early_window, "L2-early")
            .map(|f| 2.0 * f.rate) // rate of ||V||^2 is twice the rate of ||V||
            .unwrap_or(0.0);
        let reference_sq = result
            .truth_norms
            .l2
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v * v));
        energy_monitor(
            &result.monitor_series,
            cfg.params.delta,
            early_rate,
            reference_sq,
            &mut result.ledger,
        );
    }
    if want_monitor("h1h2") {
        h1_h2_monitors(&result.monitor_series, cfg.monitor_ceiling, &mut result.ledger);
    }
    if want_monitor("h3") {
        h3_budget_monitor(&result.monitor_series, &mut result.ledger);
    }

    // weighted space-time norms of the error state
    for spec in &cfg.norm_specs {
        let value = maximal_regularity_functional(
            grid,
            &result.times,
            &result.error_snapshots,
            spec,
            spec.gamma,
        )?;
        result.weighted_norms.push((*spec, value));
    }
    Ok(result)
}

/// The weighted maximal-regularity functional of Theorem-style form:
/// ||e^{mu* t} dt V||_{L^p_eta(0,T;L^q)} + ||e^{mu* t} V||_{L^p_eta(0,T;H^{2,q})},
/// with dt V by centered differences of the snapshots (endpoints dropped).
pub fn maximal_regularity_functional(
    grid: &Grid,
    times: &[f64],
    snapshots: &[SpectralField],
    spec: &NormSpec,
    mu_star: f64,
) -> Result<f64> {
    if times.len() < 3 || snapshots.len() != times.len() {
        return Err(CoreError::Degenerate(format!(
            "need at least 3 aligned snapshots, got {}",
            times.len()
        )));
    }
    let eff = NormSpec {
        gamma: mu_star,
        ..*spec
    };
    eff.validate()?;
    let mut dt_times = Vec::new();
    let mut dt_vals = Vec::new();
    let mut h2_vals = Vec::new();
    for i in 1..times.len() - 1 {
        let dt = times[i + 1] - times[i - 1];
        let mut d = snapshots[i + 1].sub(&snapshots[i - 1]);
        d.scale(1.0 / dt);
        let dphys = grid.to_physical(&d)?;
        dt_times.push(times[i]);
        dt_vals.push(grid.lebesgue_norm(&dphys, eff.q)?);
        h2_vals.push(grid.sobolev_norm(&snapshots[i], 2.0, eff.q)?);
    }
    let s1 = TimeSeries::new(dt_times.clone(), dt_vals)?;
    let s2 = TimeSeries::new(dt_times, h2_vals)?;
    let n1 = crate::domain::time_weighted_norm(&s1, &eff)?;
    let n2 = crate::domain::time_weighted_norm(&s2, &eff)?;
    Ok(n1 + n2)
}

/// Replay a nudged run from a prerecorded observation stream: the assimilated
/// trajectory is computable from {J v, J f} alone, bit-identically to the
/// lockstep run.
pub fn replay_nudged(
    grid: &Grid,
    cfg: &TwinExperimentConfig,
    observed: &[SpectralField],
) -> Result<SpectralField> {
    let forcing = ForcingField::build(grid, &cfg.forcing)?;
    let vt0 = cfg.assimilated_initial.build(grid, cfg.seed.wrapping_add(1))?;
    let mut assim = Integrator::new(
        grid,
        SystemKind::Nudged,
        cfg.obs.clone(),
        cfg.params.mu,
        &cfg.stepper,
        &vt0,
    )?;
    let nsteps = cfg.stepper.steps();
    if observed.len() < nsteps + 1 {
        return Err(CoreError::Degenerate(format!(
            "observation stream holds {} records; run needs {}",
            observed.len(),
            nsteps + 1
        )));
    }
    for n in 0..nsteps {
        let f_now = forcing.evaluate(n as f64 * cfg.stepper.dt);
        assim.step(&StepData {
            forcing: Some(&f_now),
            observed_truth: Some(&observed[n]),
            observed_truth_next: Some(&observed[n + 1]),
            ..Default::default()
        })?;
    }
    Ok(assim.state().clone())
}

/// One sweep row: fitted rates and monitor outcome for a (mu, delta) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub delta: f64,
    pub rate_l2: f64,
    pub rate_h1: f64,
    pub r2: f64,
    pub max_h2: f64,
    pub flags: String,
}

/// Run the twin experiment over a (mu, observation) grid; individual failures
/// are recorded and the sweep continues.
pub fn parameter_sweep(
    grid: &Grid,
    base: &TwinExperimentConfig,
    mus: &[f64],
    observations: &[ObservationOperator],
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for obs in observations {
        for &mu in mus {
            let mut cfg = base.clone();
            cfg.params = NudgingParams {
                mu,
                delta: obs.delta,
            };
            cfg.obs = obs.clone();
            match run_twin_experiment(grid, &cfg) {
                Ok(res) => {
                    let rate_l2 = res.fits.get("L2").map(|f| f.rate).unwrap_or(f64::NAN);
                    let rate_h1 = res.fits.get("H1").map(|f| f.rate).unwrap_or(f64::NAN);
                    let r2 = res.fits.get("L2").map(|f| f.r2).unwrap_or(f64::NAN);
                    let max_h2 = res
                        .error_norms
                        .h2
                        .values
                        .iter()
                        .fold(0.0f64, |m, v| m.max(*v));
                    let mut flags = Vec::new();
                    if res.failure.is_some() {
                        flags.push("diverged".to_string());
                    }
                    for (name, violated) in &res.ledger.violated {
                        if *violated && !name.ends_with("dissipation") {
                            flags.push(name.clone());
                        }
                    }
                    rows.push(SweepRow {
                        mu,
                        delta: obs.delta,
                        rate_l2,
                        rate_h1,
                        r2,
                        max_h2,
                        flags: if flags.is_empty() {
                            "ok".into()
                        } else {
                            flags.join("+")
                        },
                    });
                }
                Err(e) => rows.push(SweepRow {
                    mu,
                    delta: obs.delta,
                    rate_l2: f64::NAN,
                    rate_h1: f64::NAN,
                    r2: f64::NAN,
                    max_h2: f64::NAN,
                    flags: format!("error: {e}"),
                }),
            }
        }
    }
    rows
}
