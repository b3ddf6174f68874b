use super::{NormSpec, TimeSeries};
use crate::error::{CoreError, Result};

/// Discrete time-weighted norm
/// (int_0^T (t^{1-eta} e^{gamma t} ||f(t)||_X)^p dt)^{1/p}
/// evaluated by the trapezoid rule on the sample times. With eta = 1 and
/// gamma = 0 this reduces to the plain L^p(0,T;X) norm of the series.
pub fn time_weighted_norm(series: &TimeSeries, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    if series.is_empty() {
        return Err(CoreError::Degenerate("empty time series".into()));
    }
    if series.values.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("time series values".into()));
    }
    let wexp = (1.0 - spec.eta) * spec.p;
    let integrand = |t: f64, v: f64| -> f64 {
        // 0^0 = 1 at eta = 1, t = 0
        let tw = if t == 0.0 && wexp == 0.0 { 1.0 } else { t.powf(wexp) };
        tw * (spec.gamma * t * spec.p).exp() * v.abs().powf(spec.p)
    };
    let mut acc = 0.0;
    for w in 0..series.len().saturating_sub(1) {
        let (t0, t1) = (series.times[w], series.times[w + 1]);
        let (v0, v1) = (series.values[w], series.values[w + 1]);
        acc += 0.5 * (t1 - t0) * (integrand(t0, v0) + integrand(t1, v1));
    }
    Ok(acc.powf(1.0 / spec.p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{NormSpec, TimeSeries};

    fn sampled(f: impl Fn(f64) -> f64, t0: f64, t1: f64, n: usize) -> TimeSeries {
        let times: Vec<f64> = (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect();
        let values = times.iter().map(|&t| f(t)).collect();
        TimeSeries::new(times, values).unwrap()
    }

    #[test]
    fn zero_series_gives_zero() {
        let s = sampled(|_| 0.0, 0.0, 1.0, 50);
        let spec = NormSpec::new(2.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(time_weighted_norm(&s, &spec).unwrap(), 0.0);
    }

    #[test]
    fn constant_series_plain_lp() {
        // values = 1, eta = 1, gamma = 0, p = 2, T = 1 -> 1
        let s = sampled(|_| 1.0, 0.0, 1.0, 200);
        let spec = NormSpec::new(2.0, 2.0, 1.0, 0.0).unwrap();
        let n = time_weighted_norm(&s, &spec).unwrap();
        assert!((n - 1.0).abs() < 1e-3, "{n}");
    }

    #[test]
    fn exponential_weight_cancels_decay() {
        // values = e^{-t}, gamma = 1: integrand is t^{(1-eta) p}; closed form
        // int_0^T t^{(1-eta)p} dt = T^{(1-eta)p+1} / ((1-eta)p + 1).
        let p = 2.0;
        let eta = 0.75;
        let t_end = 2.0;
        let s = sampled(|t| (-t).exp(), 0.0, t_end, 4000);
        let spec = NormSpec::new(p, 2.0, eta, 1.0).unwrap();
        let n = time_weighted_norm(&s, &spec).unwrap();
        let wexp = (1.0 - eta) * p;
        let exact = (t_end.powf(wexp + 1.0) / (wexp + 1.0)).powf(1.0 / p);
        assert!((n - exact).abs() < 1e-3 * exact, "{n} vs {exact}");
    }

    #[test]
    fn critical_eta_constructible() {
        let spec = NormSpec::critical(2.0, 2.0, 0.0).unwrap();
        assert_eq!(spec.eta, 1.0);
        let spec44 = NormSpec::critical(4.0, 4.0, 0.0).unwrap();
        assert!((spec44.eta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_series_errors() {
        let s = TimeSeries::default();
        let spec = NormSpec::new(2.0, 2.0, 1.0, 0.0).unwrap();
        assert!(time_weighted_norm(&s, &spec).is_err());
    }
}
