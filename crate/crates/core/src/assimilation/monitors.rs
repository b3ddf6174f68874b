//! Runtime inequality monitors: the Gronwall energy inequality and the
//! dissipation budget, the barotropic/baroclinic H1 family, and the H3 budget
//! of the truth run. Monitors observe recorded series; they never abort runs.

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, SpectralField, TimeSeries};
use crate::error::Result;
use crate::operators::vertical_average;

/// One evaluated inequality (or tracked quantity) at one output time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorEntry {
    pub t: f64,
    pub monitor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub flag: bool,
}

/// Chronological ledger of all monitor evaluations plus calibrated constants.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MonitorLedger {
    pub entries: Vec<MonitorEntry>,
    /// Calibrated decay rate c of the energy inequality.
    pub energy_rate: f64,
    /// Calibrated tightness constant C of the energy inequality.
    pub energy_constant: f64,
    /// Reported tightness constant of the dissipation budget.
    pub budget_constant: f64,
    /// Once-violated latches per monitor name.
    pub violated: std::collections::BTreeMap<String, bool>,
}

impl MonitorLedger {
    pub fn push(&mut self, entry: MonitorEntry) {
        let latch = self.violated.entry(entry.monitor.clone()).or_insert(false);
        *latch |= entry.flag;
        self.entries.push(entry);
    }

    pub fn max_ratio(&self, monitor: &str) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.monitor == monitor)
            .map(|e| e.ratio)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn any_violation(&self) -> bool {
        self.violated.values().any(|v| *v)
    }
}

/// Scalar quantities tracked at every output time for the monitors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MonitorSeries {
    /// ||V||_2^2
    pub v_l2_sq: TimeSeries,
    /// ||grad V||_2^2
    pub v_grad_sq: TimeSeries,
    /// ||grad f||_2^2 of the raw forcing
    pub f_grad_sq: TimeSeries,
    /// ||grad_H avg(V)||_2^2 (barotropic)
    pub baro_h1_sq: TimeSeries,
    /// ||V~||_{L4}^4 (baroclinic)
    pub baroclinic_l4: TimeSeries,
    /// ||d3 V||_2^2
    pub dz_l2_sq: TimeSeries,
    /// ||V||_{H2}^2
    pub h2_sq: TimeSeries,
    /// dissipation integrands
    pub baro_diss: TimeSeries,
    pub baroclinic_diss: TimeSeries,
    pub dz_diss: TimeSeries,
    pub h1_diss: TimeSeries,
    /// truth H3 budget: ||Delta v||_2 and ||grad Delta v||_2^2
    pub truth_h2_seminorm: TimeSeries,
    pub truth_h3_integrand: TimeSeries,
}

impl MonitorSeries {
    /// Record the error-state quantities at time t.
    pub fn record_error_state(&mut self, grid: &Grid, t: f64, v: &SpectralField) -> Result<()> {
        self.v_l2_sq.push(t, grid.parseval_l2_sq(v));
        let gx = grid.dx(v);
        let gy = grid.dy(v);
        let gz = grid.dz(v);
        let grad_sq =
            grid.parseval_l2_sq(&gx) + grid.parseval_l2_sq(&gy) + grid.parseval_l2_sq(&gz);
        self.v_grad_sq.push(t, grad_sq);
        self.dz_l2_sq.push(t, grid.parseval_l2_sq(&gz));

        let bar = vertical_average(grid, v)?;
        let baro_h1 = grid.parseval_l2_sq(&grid.dx(&bar)) + grid.parseval_l2_sq(&grid.dy(&bar));
        self.baro_h1_sq.push(t, baro_h1);
        let lap_bar = grid.laplacian(&bar);
        // vertical average is z-constant, so its Laplacian is horizontal
        self.baro_diss.push(t, grid.parseval_l2_sq(&lap_bar));

        let tilde = v.sub(&bar);
        let tilde_phys = grid.to_physical(&tilde)?;
        let l4 = grid.lebesgue_norm(&tilde_phys, 4.0)?;
        self.baroclinic_l4.push(t, l4.powi(4));
        // dissipation pairing | |V~| |grad V~| |_2^2 by quadrature
        let tgx = grid.to_physical(&grid.dx(&tilde))?;
        let tgy = grid.to_physical(&grid.dy(&tilde))?;
        let tgz = grid.to_physical(&grid.dz(&tilde))?;
        let mut diss = 0.0;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                for k in 0..grid.nz() {
                    let mut mag2 = 0.0;
                    let mut grad2 = 0.0;
                    for c in 0..2 {
                        mag2 += tilde_phys.values[[c, i, j, k]].powi(2);
                        grad2 += tgx.values[[c, i, j, k]].powi(2)
                            + tgy.values[[c, i, j, k]].powi(2)
                            + tgz.values[[c, i, j, k]].powi(2);
                    }
                    diss += grid.hq_weight * grid.zq_weights[k] * mag2 * grad2;
                }
            }
        }
        self.baroclinic_diss.push(t, diss);

        let gzx = grid.dx(&gz);
        let gzy = grid.dy(&gz);
        let gzz = grid.dz(&gz);
        self.dz_diss.push(
            t,
            grid.parseval_l2_sq(&gzx) + grid.parseval_l2_sq(&gzy) + grid.parseval_l2_sq(&gzz),
        );

        let h2 = grid.sobolev_norm(v, 2.0, 2.0)?;
        self.h2_sq.push(t, h2 * h2);
        let lap = grid.laplacian(v);
        self.h1_diss.push(t, grid.parseval_l2_sq(&lap));
        Ok(())
    }

    pub fn record_forcing(&mut self, grid: &Grid, t: f64, f: &SpectralField) -> Result<()> {
        let g = grid.gradient_norm(f, 2.0)?;
        self.f_grad_sq.push(t, g * g);
        Ok(())
    }

    pub fn record_truth(&mut self, grid: &Grid, t: f64, v: &SpectralField) -> Result<()> {
        let lap = grid.laplacian(v);
        self.truth_h2_seminorm.push(t, grid.parseval_l2_sq(&lap).sqrt());
        let lx = grid.dx(&lap);
        let ly = grid.dy(&lap);
        let lz = grid.dz(&lap);
        self.truth_h3_integrand.push(
            t,
            grid.parseval_l2_sq(&lx) + grid.parseval_l2_sq(&ly) + grid.parseval_l2_sq(&lz),
        );
        Ok(())
    }
}

fn trapezoid_prefix(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; times.len()];
    for i in 1..times.len() {
        acc[i] = acc[i - 1]
            + 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
    }
    acc
}

/// Post-run evaluation of the Gronwall energy inequality
/// ||V(t)||^2 <= e^{-ct} ||V_0||^2 + C delta int_0^t e^{-c(t-s)} ||grad f||^2 ds
/// and the dissipation budget
/// ||V(t)||^2 + int_0^t ||grad V||^2 <= ||V_0||^2 + C' delta int_0^t ||grad f||^2.
///
/// c is the rate fitted on the early window; C and C' are calibrated to make
/// the inequalities tight at the first sample with forcing (the theory's
/// constants are non-quantitative). Entries are flagged at ratio > 1.05.
pub fn energy_monitor(
    series: &MonitorSeries,
    delta: f64,
    early_rate: f64,
    reference_sq: f64,
    ledger: &mut MonitorLedger,
) {
    // absolute floor tied to the problem scale so zero-error runs are not
    // flagged on round-off noise
    let floor = 1e-20 * reference_sq.max(1e-300);
    let times = &series.v_l2_sq.times;
    let n = times.len();
    if n == 0 {
        return;
    }
    let v0_sq = series.v_l2_sq.values[0];
    let c = early_rate.max(0.0);
    ledger.energy_rate = c;

    // convolution integral int_0^t e^{-c(t-s)} ||grad f(s)||^2 ds by trapezoid
    // (computed as e^{-ct} int e^{cs} g(s) ds with the integrand accumulated)
    let mut conv = vec![0.0; n];
    {
        let g = &series.f_grad_sq.values;
        let mut acc = 0.0;
        for i in 1..n {
            let h = times[i] - times[i - 1];
            // integrate e^{c s} g(s) over [t_{i-1}, t_i], referenced to t_i
            let a = (c * (times[i - 1] - times[i])).exp() * g[i - 1];
            let b = g[i];
            acc = acc * (c * (times[i - 1] - times[i])).exp() + 0.5 * h * (a + b);
            conv[i] = acc;
        }
    }
    // calibrate C at the first time the convolution is active
    let mut big_c = 0.0;
    for i in 1..n {
        if delta > 0.0 && conv[i] > 1e-300 {
            let excess = series.v_l2_sq.values[i] - (-c * times[i]).exp() * v0_sq;
            big_c = (excess / (delta * conv[i])).max(0.0);
            break;
        }
    }
    ledger.energy_constant = big_c;
    for i in 0..n {
        let lhs = series.v_l2_sq.values[i];
        let rhs = (-c * times[i]).exp() * v0_sq + big_c * delta * conv[i];
        let ratio = lhs / (rhs + floor);
        ledger.push(MonitorEntry {
            t: times[i],
            monitor: "energy".into(),
            lhs,
            rhs,
            ratio,
            flag: ratio > 1.05,
        });
    }

    // dissipation budget
    let grad_int = trapezoid_prefix(times, &series.v_grad_sq.values);
    let f_int = trapezoid_prefix(times, &series.f_grad_sq.values);
    let mut big_c2: f64 = 0.0;
    for i in 0..n {
        if delta > 0.0 && f_int[i] > 1e-300 {
            let excess = series.v_l2_sq.values[i] + grad_int[i] - v0_sq;
            big_c2 = big_c2.max((excess / (delta * f_int[i])).max(0.0));
        }
    }
    ledger.budget_constant = big_c2;
    for i in 0..n {
        let lhs = series.v_l2_sq.values[i] + grad_int[i];
        let rhs = v0_sq + big_c2 * delta * f_int[i];
        let ratio = lhs / (rhs + floor);
        ledger.push(MonitorEntry {
            t: times[i],
            monitor: "energy-budget".into(),
            lhs,
            rhs,
            ratio,
            flag: ratio > 1.05,
        });
    }
}

/// Boundedness monitors for the barotropic H1, baroclinic L4, d3 and full H1/H2
/// quantities. Each tracked quantity is flagged if it exceeds
/// ceiling_factor x max(initial value, dissipation-weighted floor); the
/// dissipation integrals are recorded as rhs.
pub fn h1_h2_monitors(series: &MonitorSeries, ceiling_factor: f64, ledger: &mut MonitorLedger) {
    let groups: [(&str, &TimeSeries, &TimeSeries); 4] = [
        ("baro-H1", &series.baro_h1_sq, &series.baro_diss),
        ("baroclinic-L4", &series.baroclinic_l4, &series.baroclinic_diss),
        ("dz-L2", &series.dz_l2_sq, &series.dz_diss),
        ("H1", &series.v_grad_sq, &series.h1_diss),
    ];
    for (name, tracked, diss) in groups {
        if tracked.is_empty() {
            continue;
        }
        let scale = tracked.values[0].max(1e-30);
        let diss_int = trapezoid_prefix(&tracked.times, &diss.values);
        for i in 0..tracked.len() {
            let lhs = tracked.values[i];
            let rhs = ceiling_factor * scale;
            ledger.push(MonitorEntry {
                t: tracked.times[i],
                monitor: format!("{name}"),
                lhs,
                rhs,
                ratio: lhs / rhs,
                flag: lhs > rhs,
            });
            ledger.push(MonitorEntry {
                t: tracked.times[i],
                monitor: format!("{name}-dissipation"),
                lhs: diss_int[i],
                rhs: f64::INFINITY,
                ratio: 0.0,
                flag: !diss_int[i].is_finite(),
            });
        }
    }
    // H2 ceiling
    if !series.h2_sq.is_empty() {
        let scale = series.h2_sq.values[0].max(1e-30);
        for i in 0..series.h2_sq.len() {
            let lhs = series.h2_sq.values[i];
            let rhs = ceiling_factor * scale;
            ledger.push(MonitorEntry {
                t: series.h2_sq.times[i],
                monitor: "H2-ceiling".into(),
                lhs,
                rhs,
                ratio: lhs / rhs,
                flag: lhs > rhs,
            });
        }
    }
}

/// Truth-run H3 budget: ||Delta v(t)||_2 + int_0^t ||grad Delta v||_2^2 must
/// stay finite and stabilize; flags super-linear growth of the integral after
/// the transient (late increments exceeding 1.5x the mid-run increments).
pub fn h3_budget_monitor(series: &MonitorSeries, ledger: &mut MonitorLedger) -> Option<f64> {
    let ts = &series.truth_h3_integrand;
    if ts.len() < 4 {
        return None;
    }
    let int = trapezoid_prefix(&ts.times, &ts.values);
    let n = ts.len();
    let third = n / 3;
    let mid_increment = (int[2 * third] - int[third]).max(0.0);
    let late_increment = (int[n - 1] - int[2 * third]).max(0.0);
    let growth_flag = late_increment > 1.5 * mid_increment + 1e-300;
    for i in 0..n {
        let lhs = series.truth_h2_seminorm.values[i] + int[i];
        // rhs carries the monotone dissipation integral on its own
        ledger.push(MonitorEntry {
            t: ts.times[i],
            monitor: "H3-budget".into(),
            lhs,
            rhs: int[i],
            ratio: 0.0,
            flag: !lhs.is_finite() || (i == n - 1 && growth_flag),
        });
    }
    Some(int[n - 1])
}
