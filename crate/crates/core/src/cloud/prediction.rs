use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::env::ForecastRecord;
use crate::fog::{inference_step, BloomEstimate, BloomInputs, BloomParams, Position};
use crate::geo::Geo;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SedimentParams {
    /// Decay time constant (h).
    pub tau_hours: f64,
    /// Sediment added per millimetre of rain.
    pub gain: f64,
    pub initial: f64,
}

impl Default for SedimentParams {
    fn default() -> Self {
        SedimentParams { tau_hours: 24.0, gain: 0.01, initial: 0.0 }
    }
}

/// Sediment level after each rain sample. `rain` holds (hour, rate in mm/h)
/// pairs; the rate at a sample holds until the next one.
pub fn infer_sediment(rain: &[(f64, f64)], params: &SedimentParams) -> Vec<f64> {
    let mut s = params.initial;
    let mut out = Vec::with_capacity(rain.len());
    for (k, &(t, _)) in rain.iter().enumerate() {
        if k > 0 {
            let (t0, r0) = rain[k - 1];
            let dt = t - t0;
            s = s * (-dt / params.tau_hours).exp() + params.gain * r0 * dt;
        }
        out.push(s);
    }
    out
}

/// Surface current from wind: `k_wind` times the wind, optionally lagged by
/// a first-order filter with time constant `lag_hours`. `wind` holds
/// (hour, north, east) triples.
pub fn infer_water_speed(wind: &[(f64, f64, f64)], k_wind: f64, lag_hours: Option<f64>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(wind.len());
    for (k, &(t, v, u)) in wind.iter().enumerate() {
        let target = (k_wind * v, k_wind * u);
        let next = match (lag_hours, out.last()) {
            (Some(lag), Some(&(pv, pu))) if lag > 0.0 => {
                let a = (-(t - wind[k - 1].0) / lag).exp();
                (target.0 + (pv - target.0) * a, target.1 + (pu - target.1) * a)
            }
            _ => target,
        };
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionParams {
    pub bloom: BloomParams,
    pub sediment: SedimentParams,
    pub k_wind: f64,
    pub lag_hours: Option<f64>,
    /// Nitrate level without rain (mg/L), added to the sediment proxy.
    pub nox_background: f64,
    pub incubator: Position,
}

impl Default for PredictionParams {
    fn default() -> Self {
        PredictionParams {
            bloom: BloomParams::default(),
            sediment: SedimentParams::default(),
            k_wind: 0.03,
            lag_hours: None,
            nox_background: 0.005,
            incubator: Position { lat: 47.500, lon: -122.220 },
        }
    }
}

impl PredictionParams {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = self.bloom.validate();
        if !(self.sediment.tau_hours > 0.0) {
            problems.push("sediment tau must be positive".to_owned());
        }
        if !(self.sediment.gain >= 0.0 && self.sediment.initial >= 0.0) {
            problems.push("sediment gain and initial level must be non-negative".to_owned());
        }
        if !self.k_wind.is_finite() || self.lag_hours.is_some_and(|l| !(l > 0.0)) {
            problems.push("k_wind must be finite and lag_hours positive".to_owned());
        }
        if !(self.nox_background >= 0.0) {
            problems.push("nox_background must be non-negative".to_owned());
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedPoint {
    pub t: NaiveDateTime,
    pub r: f64,
    pub lat: f64,
    pub lon: f64,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BloomForecast {
    pub horizon: Vec<PredictedPoint>,
    /// Sun-Nitrates precursor: forecast sun times the nitrate proxy.
    pub precursor: Vec<f64>,
    pub sediment: Vec<f64>,
    pub water: Vec<(f64, f64)>,
}

fn hours_since(t: NaiveDateTime, t0: NaiveDateTime) -> f64 {
    t.signed_duration_since(t0).num_milliseconds() as f64 / 3_600_000.0
}

/// Bloom density and position over a weather forecast.
///
/// Rain feeds the sediment filter, whose level (plus a background) stands in
/// for nitrates. The monitoring inference dynamics then run with the
/// dissolved-oxygen pathway switched off, and the position follows the
/// current inferred from the wind. The position restarts at the incubator
/// every day.
pub fn predict_bloom(forecast: &[ForecastRecord], params: &PredictionParams, geo: &Geo) -> Result<BloomForecast, String> {
    if forecast.len() < 2 {
        return Err(format!("forecast of {} records is shorter than one step", forecast.len()));
    }
    if forecast.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err("forecast times must be strictly increasing".to_owned());
    }
    let t0 = forecast[0].t;
    let rain: Vec<(f64, f64)> = forecast.iter().map(|f| (hours_since(f.t, t0), f.rain.max(0.0))).collect();
    let wind: Vec<(f64, f64, f64)> = forecast.iter().map(|f| (hours_since(f.t, t0), f.wind_v, f.wind_u)).collect();
    let sediment = infer_sediment(&rain, &params.sediment);
    let water = infer_water_speed(&wind, params.k_wind, params.lag_hours);
    let nox: Vec<f64> = sediment.iter().map(|s| params.nox_background + s).collect();
    let precursor: Vec<f64> = forecast.iter().zip(&nox).map(|(f, n)| f.sun * n).collect();

    let mut bloom = params.bloom;
    bloom.k2 = 0.0;
    let inc = params.incubator;
    let mut est = BloomEstimate::initial(t0, inc.lat, inc.lon, &bloom);
    let mut horizon = Vec::with_capacity(forecast.len());
    for k in 0..forecast.len() {
        horizon.push(PredictedPoint { t: est.t, r: est.r, lat: est.lat, lon: est.lon, detected: est.detected });
        if k + 1 == forecast.len() {
            break;
        }
        let inputs = BloomInputs { sun: forecast[k].sun, nox: nox[k], dox: 0.0, wfv: water[k].0, wfu: water[k].1 };
        let dt = forecast[k + 1].t.signed_duration_since(forecast[k].t).num_milliseconds() as f64 / 1000.0;
        est = inference_step(&est, &inputs, dt, &bloom, geo)?;
        est.t = forecast[k + 1].t;
        if forecast[k + 1].t.date() != forecast[k].t.date() {
            est.lat = inc.lat;
            est.lon = inc.lon;
        }
    }
    Ok(BloomForecast { horizon, precursor, sediment, water })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_timestamp;

    fn flat(hours: usize) -> Vec<ForecastRecord> {
        let t0 = parse_timestamp("2008-08-23 00:00:00").unwrap();
        (0..=hours * 2)
            .map(|k| ForecastRecord { t: t0 + chrono::Duration::minutes(30 * k as i64), rain: 0.0, wind_v: 0.0, wind_u: 0.0, sun: 0.0 })
            .collect()
    }

    #[test]
    fn pure_decay() {
        let p = SedimentParams { initial: 2.0, ..SedimentParams::default() };
        let rain: Vec<(f64, f64)> = (0..=48).map(|h| (h as f64, 0.0)).collect();
        let s = infer_sediment(&rain, &p);
        assert!((s[48] - 2.0 * (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn wind_coupling() {
        let w = infer_water_speed(&[(0.0, 2.0, 0.0)], 0.03, None);
        assert!((w[0].0 - 0.06).abs() < 1e-15 && w[0].1 == 0.0);
        assert_eq!(infer_water_speed(&[(0.0, 0.0, 0.0)], 0.03, None), vec![(0.0, 0.0)]);
    }

    #[test]
    fn all_zero_forecast_stays_flat() {
        let p = PredictionParams { nox_background: 0.0, ..PredictionParams::default() };
        let f = predict_bloom(&flat(24), &p, &Geo::new(47.5)).unwrap();
        for pt in &f.horizon {
            assert_eq!((pt.r, pt.lat, pt.lon), (p.bloom.r0, p.incubator.lat, p.incubator.lon));
        }
    }

    #[test]
    fn too_short_horizon() {
        assert!(predict_bloom(&flat(0), &PredictionParams::default(), &Geo::new(47.5)).is_err());
    }
}
