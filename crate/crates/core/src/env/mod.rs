//! Water-body ground truth: records, gridded datasets, CSV exchange and the
//! synthetic scenario generator.

mod csvio;
mod synthetic;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

pub use csvio::{read_forecast_csv, read_irradiance_csv, read_truth_csv, read_water_csv, write_dataset, DatasetFiles};
pub use synthetic::{
    generate_synthetic_scenario, BloomTruthSpec, GeneratorError, GridSpec, IncubatorSpec, NitrateField, RainEpisode,
    SyntheticSpec, TemperatureSpec, TransportSpec, WeatherSpec,
};

pub(crate) mod timestamp_format {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::event::TIMESTAMP_FORMAT;

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&t.format(TIMESTAMP_FORMAT))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        crate::event::parse_timestamp(&raw).map_err(serde::de::Error::custom)
    }
}

/// One environment sample of the surface layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterBodyRecord {
    #[serde(with = "timestamp_format")]
    pub t: NaiveDateTime,
    pub lat: f64,
    pub lon: f64,
    pub depth: f64,
    /// Water velocity, north component (m/s).
    pub wfv: f64,
    /// Water velocity, east component (m/s).
    pub wfu: f64,
    pub tem: f64,
    pub dox: f64,
    pub nox: f64,
    pub bloom: f64,
}

impl WaterBodyRecord {
    pub fn check(&self) -> Result<(), String> {
        let finite = [self.lat, self.lon, self.depth, self.wfv, self.wfu, self.tem, self.dox, self.nox, self.bloom];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(format!("non-finite field at {} ({}, {})", self.t, self.lat, self.lon));
        }
        if self.dox < 0.0 || self.nox < 0.0 || self.bloom < 0.0 {
            return Err(format!("negative concentration at {} ({}, {})", self.t, self.lat, self.lon));
        }
        if !(self.tem > -5.0 && self.tem < 60.0) {
            return Err(format!("temperature {} out of range at {}", self.tem, self.t));
        }
        if self.depth > 0.0 {
            return Err(format!("depth {} above the surface", self.depth));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrradianceRecord {
    #[serde(with = "timestamp_format")]
    pub t: NaiveDateTime,
    pub lat: f64,
    pub lon: f64,
    pub sun: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    #[serde(with = "timestamp_format")]
    pub t: NaiveDateTime,
    /// Rainfall rate (mm/h).
    pub rain: f64,
    pub wind_v: f64,
    pub wind_u: f64,
    pub sun: f64,
}

/// Ground-truth bloom centre and density, for validation only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    #[serde(with = "timestamp_format")]
    pub t: NaiveDateTime,
    pub lat: f64,
    pub lon: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("time {t} outside dataset range [{start}, {end}]")]
    Time { t: NaiveDateTime, start: NaiveDateTime, end: NaiveDateTime },
    #[error("latitude {lat} outside [{min}, {max}]")]
    Lat { lat: f64, min: f64, max: f64 },
    #[error("longitude {lon} outside [{min}, {max}]")]
    Lon { lon: f64, min: f64, max: f64 },
    #[error("depth {depth} outside [-{max_depth}, 0]")]
    Depth { depth: f64, max_depth: f64 },
    #[error("dataset has no {0} series")]
    Missing(&'static str),
}

/// Regular lat/lon grid. Grid points include both ends of each range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub n_lat: usize,
    pub n_lon: usize,
    pub max_depth: f64,
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    fn step(min: f64, max: f64, n: usize) -> f64 {
        if n > 1 {
            (max - min) / (n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn lat_step(&self) -> f64 {
        Grid::step(self.lat_min, self.lat_max, self.n_lat)
    }

    pub fn lon_step(&self) -> f64 {
        Grid::step(self.lon_min, self.lon_max, self.n_lon)
    }

    pub fn lat(&self, i: usize) -> f64 {
        self.lat_min + i as f64 * self.lat_step()
    }

    pub fn lon(&self, j: usize) -> f64 {
        self.lon_min + j as f64 * self.lon_step()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_lon + j
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }

    /// Nearest grid point to a position inside the bounding box.
    pub fn nearest(&self, lat: f64, lon: f64) -> Result<(usize, usize), SampleError> {
        if !(self.lat_min..=self.lat_max).contains(&lat) {
            return Err(SampleError::Lat { lat, min: self.lat_min, max: self.lat_max });
        }
        if !(self.lon_min..=self.lon_max).contains(&lon) {
            return Err(SampleError::Lon { lon, min: self.lon_min, max: self.lon_max });
        }
        Ok((nearest_index(lat, self.lat_min, self.lat_step(), self.n_lat), nearest_index(lon, self.lon_min, self.lon_step(), self.n_lon)))
    }

    /// Clamps a position into the bounding box.
    pub fn clamp(&self, lat: f64, lon: f64) -> (f64, f64) {
        (lat.clamp(self.lat_min, self.lat_max), lon.clamp(self.lon_min, self.lon_max))
    }
}

fn nearest_index(x: f64, min: f64, step: f64, n: usize) -> usize {
    if n <= 1 || step == 0.0 {
        return 0;
    }
    (((x - min) / step).round().max(0.0) as usize).min(n - 1)
}

/// Uniform time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAxis {
    pub start: NaiveDateTime,
    pub step_secs: i64,
    pub len: usize,
}

impl TimeAxis {
    pub fn at(&self, k: usize) -> NaiveDateTime {
        self.start + Duration::seconds(self.step_secs * k as i64)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.at(self.len.saturating_sub(1))
    }

    /// Bracketing indices and the weight of the upper one.
    pub fn locate(&self, t: NaiveDateTime) -> Result<(usize, usize, f64), SampleError> {
        let err = || SampleError::Time { t, start: self.start, end: self.end() };
        if self.len == 0 || t < self.start || t > self.end() {
            return Err(err());
        }
        let us = t.signed_duration_since(self.start).num_microseconds().ok_or_else(err)? as f64;
        let pos = us / (self.step_secs as f64 * 1e6);
        let k = (pos.floor() as usize).min(self.len - 1);
        if k + 1 >= self.len {
            return Ok((k, k, 0.0));
        }
        Ok((k, k + 1, pos - k as f64))
    }
}

/// Linear interpolation over a time-sorted series with arbitrary spacing.
fn interpolate_series<R>(
    series: &[R],
    t: NaiveDateTime,
    time_of: impl Fn(&R) -> NaiveDateTime,
) -> Result<(usize, usize, f64), SampleError> {
    let (first, last) = match (series.first(), series.last()) {
        (Some(a), Some(b)) => (time_of(a), time_of(b)),
        _ => return Err(SampleError::Missing("time")),
    };
    if t < first || t > last {
        return Err(SampleError::Time { t, start: first, end: last });
    }
    let hi = series.partition_point(|r| time_of(r) <= t);
    if hi == 0 {
        return Ok((0, 0, 0.0));
    }
    let lo = hi - 1;
    if hi >= series.len() || time_of(&series[lo]) == t {
        return Ok((lo, lo, 0.0));
    }
    let span = time_of(&series[hi]).signed_duration_since(time_of(&series[lo])).num_microseconds().unwrap_or(1) as f64;
    let into = t.signed_duration_since(time_of(&series[lo])).num_microseconds().unwrap_or(0) as f64;
    Ok((lo, hi, into / span))
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    if w == 0.0 {
        a
    } else {
        a + (b - a) * w
    }
}

/// An immutable environment dataset: a gridded water-body series plus
/// irradiance, forecast and (optionally) ground-truth bloom series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: Grid,
    pub axis: TimeAxis,
    /// Indexed `[k * cells + grid.index(i, j)]`.
    pub water: Vec<WaterBodyRecord>,
    pub irradiance: Vec<IrradianceRecord>,
    pub forecast: Vec<ForecastRecord>,
    pub truth: Vec<TruthRecord>,
}

impl Dataset {
    pub fn start(&self) -> NaiveDateTime {
        self.axis.start
    }

    pub fn end(&self) -> NaiveDateTime {
        self.axis.end()
    }

    pub fn record(&self, k: usize, i: usize, j: usize) -> &WaterBodyRecord {
        &self.water[k * self.grid.cells() + self.grid.index(i, j)]
    }

    /// Surface-layer sample, nearest cell in space and linear in time.
    pub fn sample(&self, t: NaiveDateTime, lat: f64, lon: f64, depth: f64) -> Result<WaterBodyRecord, SampleError> {
        if !(depth <= 0.0 && depth >= -self.grid.max_depth) {
            return Err(SampleError::Depth { depth, max_depth: self.grid.max_depth });
        }
        let (i, j) = self.grid.nearest(lat, lon)?;
        let (k0, k1, w) = self.axis.locate(t)?;
        let a = self.record(k0, i, j);
        let b = self.record(k1, i, j);
        Ok(WaterBodyRecord {
            t,
            lat,
            lon,
            depth,
            wfv: lerp(a.wfv, b.wfv, w),
            wfu: lerp(a.wfu, b.wfu, w),
            tem: lerp(a.tem, b.tem, w),
            dox: lerp(a.dox, b.dox, w),
            nox: lerp(a.nox, b.nox, w),
            bloom: lerp(a.bloom, b.bloom, w),
        })
    }

    /// Normalized irradiance. The series is spatially uniform over the grid.
    pub fn sun(&self, t: NaiveDateTime, lat: f64, lon: f64) -> Result<f64, SampleError> {
        if self.irradiance.is_empty() {
            return Err(SampleError::Missing("irradiance"));
        }
        self.grid.nearest(lat, lon)?;
        let (lo, hi, w) = interpolate_series(&self.irradiance, t, |r| r.t)?;
        Ok(lerp(self.irradiance[lo].sun, self.irradiance[hi].sun, w))
    }

    pub fn forecast_at(&self, t: NaiveDateTime) -> Result<ForecastRecord, SampleError> {
        if self.forecast.is_empty() {
            return Err(SampleError::Missing("forecast"));
        }
        let (lo, hi, w) = interpolate_series(&self.forecast, t, |r| r.t)?;
        let (a, b) = (&self.forecast[lo], &self.forecast[hi]);
        Ok(ForecastRecord {
            t,
            rain: lerp(a.rain, b.rain, w),
            wind_v: lerp(a.wind_v, b.wind_v, w),
            wind_u: lerp(a.wind_u, b.wind_u, w),
            sun: lerp(a.sun, b.sun, w),
        })
    }

    /// Validates every record against the record invariants.
    pub fn check(&self) -> Result<(), String> {
        for r in &self.water {
            r.check()?;
        }
        if let Some(r) = self.irradiance.iter().find(|r| !(0.0..=1.0).contains(&r.sun)) {
            return Err(format!("irradiance {} out of [0, 1] at {}", r.sun, r.t));
        }
        if let Some(r) = self.forecast.iter().find(|r| r.rain < 0.0 || !r.rain.is_finite()) {
            return Err(format!("rainfall {} invalid at {}", r.rain, r.t));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_timestamp;

    pub(crate) fn two_instant_dataset() -> Dataset {
        let start = parse_timestamp("2008-08-23 00:00:00").unwrap();
        let grid = Grid { lat_min: 47.49, lat_max: 47.51, lon_min: -122.23, lon_max: -122.21, n_lat: 3, n_lon: 3, max_depth: 5.0 };
        let axis = TimeAxis { start, step_secs: 1800, len: 2 };
        let mut water = Vec::new();
        for k in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    water.push(WaterBodyRecord {
                        t: axis.at(k),
                        lat: grid.lat(i),
                        lon: grid.lon(j),
                        depth: 0.0,
                        wfv: 0.1 * i as f64,
                        wfu: 0.1 * j as f64,
                        tem: 19.0,
                        dox: if k == 0 { 8.0 } else { 10.0 },
                        nox: 0.01 * (i * 3 + j) as f64,
                        bloom: 0.05,
                    });
                }
            }
        }
        let irradiance =
            vec![IrradianceRecord { t: axis.at(0), lat: 47.5, lon: -122.22, sun: 0.2 }, IrradianceRecord { t: axis.at(1), lat: 47.5, lon: -122.22, sun: 0.6 }];
        Dataset { grid, axis, water, irradiance, forecast: vec![], truth: vec![] }
    }

    #[test]
    fn grid_point_sample_is_stored_value() {
        let d = two_instant_dataset();
        let r = d.sample(d.axis.at(1), 47.50, -122.21, 0.0).unwrap();
        assert_eq!(r.nox, d.record(1, 1, 2).nox);
        assert_eq!(r.wfu, d.record(1, 1, 2).wfu);
        assert_eq!(r.dox, 10.0);
    }

    #[test]
    fn midpoint_in_time_is_linear() {
        let d = two_instant_dataset();
        let mid = d.axis.at(0) + Duration::minutes(15);
        assert_eq!(d.sample(mid, 47.5, -122.22, -1.0).unwrap().dox, 9.0);
        assert!((d.sun(mid, 47.5, -122.22).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn nearest_cell_in_space() {
        let d = two_instant_dataset();
        // 47.4951 is closer to 47.50 than to 47.49.
        let r = d.sample(d.axis.at(0), 47.4951, -122.2296, 0.0).unwrap();
        assert_eq!(r.nox, d.record(0, 1, 0).nox);
    }

    #[test]
    fn out_of_range_queries_name_the_bound() {
        let d = two_instant_dataset();
        let t = d.axis.at(0);
        assert!(matches!(d.sample(t, 47.6, -122.22, 0.0), Err(SampleError::Lat { .. })));
        assert!(matches!(d.sample(t, 47.5, -122.0, 0.0), Err(SampleError::Lon { .. })));
        assert!(matches!(d.sample(t, 47.5, -122.22, -9.0), Err(SampleError::Depth { .. })));
        assert!(matches!(d.sample(t, 47.5, -122.22, 0.5), Err(SampleError::Depth { .. })));
        let late = d.axis.at(2);
        assert!(matches!(d.sample(late, 47.5, -122.22, 0.0), Err(SampleError::Time { .. })));
        assert!(matches!(d.forecast_at(t), Err(SampleError::Missing(_))));
    }
}
