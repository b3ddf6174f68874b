use serde::{Deserialize, Serialize};

use crate::domain::TimeSeries;
use crate::error::{CoreError, Result};

/// Exponential decay rate fitted to log(values) over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted rate (positive = decay), from least squares on ln ||V||.
    pub rate: f64,
    /// ln of the fitted amplitude at t = 0.
    pub intercept: f64,
    pub window: (f64, f64),
    /// Goodness of fit of the log-linear regression.
    pub r2: f64,
    pub norm_name: String,
    pub samples: usize,
}

/// Least-squares exponential fit on a window. Values below 1e-13 relative to
/// the series' initial value truncate the window (noise floor).
pub fn fit_decay_rate(series: &TimeSeries, window: (f64, f64), norm_name: &str) -> Result<DecayFit> {
    if window.0 >= window.1 {
        return Err(CoreError::invalid("fit.window", "t_a must be < t_b"));
    }
    if series.is_empty() {
        return Err(CoreError::Degenerate("empty series".into()));
    }
    let initial = series.values[0].abs();
    let floor = 1e-13 * initial;
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (&t, &v) in series.times.iter().zip(&series.values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if v <= floor {
            break; // below the noise floor: truncate the window here
        }
        if v <= 0.0 {
            return Err(CoreError::Degenerate(format!(
                "non-positive value {v} at t = {t} in fit window"
            )));
        }
        ts.push(t);
        logs.push(v.ln());
    }
    if ts.len() < 10 {
        return Err(CoreError::Degenerate(format!(
            "fit window holds {} samples; need at least 10",
            ts.len()
        )));
    }
    let n = ts.len() as f64;
    let mean_t: f64 = ts.iter().sum::<f64>() / n;
    let mean_l: f64 = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        sxx += (t - mean_t) * (t - mean_t);
        sxy += (t - mean_t) * (l - mean_l);
        syy += (l - mean_l) * (l - mean_l);
    }
    if sxx == 0.0 {
        return Err(CoreError::Degenerate("degenerate fit window".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_l - slope * mean_t;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(DecayFit {
        rate: -slope,
        intercept,
        window: (ts[0], ts[ts.len() - 1]),
        r2,
        norm_name: norm_name.to_string(),
        samples: ts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn series(mut f: impl FnMut(f64) -> f64, t0: f64, t1: f64, n: usize) -> TimeSeries {
        let times: Vec<f64> = (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect();
        let values = times.iter().map(|&t| f(t)).collect();
        TimeSeries::new(times, values).unwrap()
    }

    #[test]
    fn exact_exponential() {
        let s = series(|t| (-2.0 * t).exp(), 0.0, 3.0, 200);
        let fit = fit_decay_rate(&s, (0.0, 3.0), "L2").unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6, "{}", fit.rate);
        assert!(fit.r2 >= 0.999999, "{}", fit.r2);
    }

    #[test]
    fn algebraic_prefactor_late_window() {
        // (1+t) e^{-2t}: the log-slope over [3, 6] is 2 - mean(1/(1+t)) ~ 1.81
        // and approaches 2 only on much later windows
        let s = series(|t| (1.0 + t) * (-2.0 * t).exp(), 0.0, 6.0, 600);
        let fit = fit_decay_rate(&s, (3.0, 6.0), "L2").unwrap();
        assert!((fit.rate - 1.815).abs() < 0.02, "{}", fit.rate);
        // sample the late window only, so the 1e-13 relative noise floor
        // (taken from the series' first value) does not truncate it
        let s_late = series(|t| ((1.0 + t).ln() - 2.0 * (t - 18.0)).exp(), 18.0, 30.0, 1200);
        let fit_late = fit_decay_rate(&s_late, (19.0, 29.0), "L2").unwrap();
        assert!((fit_late.rate - 2.0).abs() < 0.05, "{}", fit_late.rate);
    }

    #[test]
    fn noisy_exponential_within_two_percent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(70);
        let s = series(
            |t| (-1.5 * t).exp() * (1.0 + 0.01 * (rng.gen_range(-1.0..1.0))),
            0.0,
            4.0,
            400,
        );
        let fit = fit_decay_rate(&s, (0.0, 4.0), "L2").unwrap();
        assert!((fit.rate - 1.5).abs() <= 0.02 * 1.5, "{}", fit.rate);
    }

    #[test]
    fn short_window_refused() {
        let s = series(|t| (-t).exp(), 0.0, 1.0, 30);
        assert!(fit_decay_rate(&s, (0.98, 1.0), "L2").is_err());
    }

    #[test]
    fn noise_floor_truncates() {
        // decays to the floor well before t = 20
        let s = series(|t| (-5.0 * t).exp().max(0.0) + 1e-20, 0.0, 20.0, 2000);
        let fit = fit_decay_rate(&s, (0.0, 20.0), "L2").unwrap();
        // only the pre-floor samples enter: the fitted rate stays near 5
        assert!((fit.rate - 5.0).abs() < 0.2, "{}", fit.rate);
        assert!(fit.window.1 < 8.0, "window end {}", fit.window.1);
    }
}
