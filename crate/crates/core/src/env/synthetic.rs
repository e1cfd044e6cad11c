use std::f64::consts::PI;

use chrono::{Duration, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{timestamp_format, Dataset, ForecastRecord, Grid, IrradianceRecord, TimeAxis, TruthRecord, WaterBodyRecord};
use crate::geo::{Geo, METERS_PER_DEG_LAT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot generate scenario: {0}")]
pub struct GeneratorError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub n_lat: usize,
    pub n_lon: usize,
    pub max_depth: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lat_min: 47.490, lat_max: 47.520, lon_min: -122.240, lon_max: -122.200, n_lat: 16, n_lon: 16, max_depth: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncubatorSpec {
    pub lat: f64,
    pub lon: f64,
    /// Width of the rain-fed nitrate source around the incubator.
    pub plume_sigma_m: f64,
    /// Nitrate added per millimetre of rain at the source centre (mg/L/mm).
    pub nox_gain: f64,
    pub nox_tau_hours: f64,
    pub nox_baseline: f64,
}

impl Default for IncubatorSpec {
    fn default() -> Self {
        IncubatorSpec { lat: 47.500, lon: -122.220, plume_sigma_m: 400.0, nox_gain: 0.01, nox_tau_hours: 24.0, nox_baseline: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainEpisode {
    #[serde(with = "timestamp_format")]
    pub start: NaiveDateTime,
    pub hours: f64,
    pub total_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherSpec {
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    /// Daily clear-sky peak irradiance is drawn uniformly from this range.
    pub peak_sun: [f64; 2],
    /// Chance that a day gets one random rain episode.
    pub rain_probability: f64,
    pub rain_total_mm: [f64; 2],
    pub rain_hours: [f64; 2],
    /// Explicit episodes; when non-empty they replace the random ones.
    pub rain: Vec<RainEpisode>,
    pub wind_speed: [f64; 2],
    pub wind_noise: f64,
    /// Fraction of irradiance removed under heavy rain.
    pub cloud_damping: f64,
    /// Relative error of the rainfall forecast.
    pub forecast_rain_noise: f64,
    /// Absolute error of the wind forecast (m/s).
    pub forecast_wind_noise: f64,
}

impl Default for WeatherSpec {
    fn default() -> Self {
        WeatherSpec {
            sunrise_hour: 6.0,
            sunset_hour: 20.0,
            peak_sun: [0.75, 1.0],
            rain_probability: 0.35,
            rain_total_mm: [4.0, 25.0],
            rain_hours: [2.0, 6.0],
            rain: Vec::new(),
            wind_speed: [1.5, 6.0],
            wind_noise: 0.3,
            cloud_damping: 0.6,
            forecast_rain_noise: 0.1,
            forecast_wind_noise: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSpec {
    /// Surface current per unit of wind.
    pub k_wind: f64,
    /// Relative change of current speed across the grid, south to north.
    pub shear: f64,
    /// Fraction of the current that carries dissolved nitrates.
    pub nox_drift: f64,
    pub diffusion_m2s: f64,
    pub advection: bool,
}

impl Default for TransportSpec {
    fn default() -> Self {
        TransportSpec { k_wind: 0.03, shear: 0.1, nox_drift: 0.05, diffusion_m2s: 0.1, advection: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureSpec {
    pub mean: f64,
    pub amplitude: f64,
    pub daily_jitter: f64,
    /// Extra warmth of the shallow incubator.
    pub incubator_excess: f64,
}

impl Default for TemperatureSpec {
    fn default() -> Self {
        TemperatureSpec { mean: 19.5, amplitude: 1.0, daily_jitter: 0.3, incubator_excess: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BloomTruthSpec {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub kv: f64,
    pub r0: f64,
    /// Daily growth multiplier is drawn from `1 ± growth_jitter`.
    pub growth_jitter: f64,
    pub temp_opt: f64,
    pub temp_width: f64,
    /// Oxygen released per unit of bloom density (mg/L).
    pub k_do: f64,
    pub radius_m: f64,
}

impl Default for BloomTruthSpec {
    fn default() -> Self {
        BloomTruthSpec {
            k1: 5.0,
            k2: 0.05,
            k3: 0.17,
            kv: 0.0167,
            r0: 0.05,
            growth_jitter: 0.1,
            temp_opt: 20.0,
            temp_width: 6.0,
            k_do: 1.0,
            radius_m: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    #[serde(with = "timestamp_format")]
    pub start: NaiveDateTime,
    pub hours: u32,
    pub cadence_minutes: u32,
    pub substeps: u32,
    pub grid: GridSpec,
    pub incubator: IncubatorSpec,
    pub weather: WeatherSpec,
    pub transport: TransportSpec,
    pub temperature: TemperatureSpec,
    pub bloom: BloomTruthSpec,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 1,
            start: crate::event::parse_timestamp("2008-08-23 00:00:00").expect("valid literal"),
            hours: 7 * 24,
            cadence_minutes: 30,
            substeps: 6,
            grid: GridSpec::default(),
            incubator: IncubatorSpec::default(),
            weather: WeatherSpec::default(),
            transport: TransportSpec::default(),
            temperature: TemperatureSpec::default(),
            bloom: BloomTruthSpec::default(),
        }
    }
}

/// Dissolved-oxygen saturation in fresh water (mg/L) at temperature `t` (°C).
pub fn oxygen_saturation(t: f64) -> f64 {
    14.652 - 0.41022 * t + 0.007991 * t * t - 0.000077774 * t * t * t
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dissolved nitrate excess over the grid: rain-fed source around the
/// incubator, first-order decay, upwind advection and diffusion.
#[derive(Debug, Clone)]
pub struct NitrateField {
    pub n_lat: usize,
    pub n_lon: usize,
    /// Cell spacing north (m) and east (m).
    pub dy: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    /// Source weight of each cell.
    pub weights: Vec<f64>,
    pub gain: f64,
    pub tau_hours: f64,
    pub drift: f64,
    pub diffusion: f64,
    pub advection: bool,
}

impl NitrateField {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Advances by `dt` seconds under a uniform rain rate (mm/h) and the
    /// per-cell current `(north, east)` in m/s.
    pub fn step(&mut self, dt: f64, rain: f64, water: &[(f64, f64)]) {
        let dt_h = dt / 3600.0;
        let decay = (-dt_h / self.tau_hours).exp();
        for (e, w) in self.values.iter_mut().zip(&self.weights) {
            *e = *e * decay + self.gain * rain * w * dt_h;
        }
        if self.advection {
            self.advect(dt, water);
        }
        if self.diffusion > 0.0 {
            self.diffuse(dt);
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_lon + j
    }

    fn advect(&mut self, dt: f64, water: &[(f64, f64)]) {
        let mut delta = vec![0.0; self.values.len()];
        let (ni, nj) = (self.n_lat, self.n_lon);
        // Faces between (i, j) and (i + 1, j), plus the two outer faces per column.
        if ni > 1 {
            for j in 0..nj {
                for f in 0..=ni {
                    let below = f.checked_sub(1);
                    let above = (f < ni).then_some(f);
                    let v = match (below, above) {
                        (Some(a), Some(b)) => 0.5 * (water[self.idx(a, j)].0 + water[self.idx(b, j)].0),
                        (Some(a), None) => water[self.idx(a, j)].0,
                        (None, Some(b)) => water[self.idx(b, j)].0,
                        (None, None) => 0.0,
                    } * self.drift;
                    let upwind = if v > 0.0 { below } else { above };
                    let conc = upwind.map_or(0.0, |i| self.values[self.idx(i, j)]);
                    let flux = v * conc * dt / self.dy;
                    if let Some(a) = below {
                        delta[self.idx(a, j)] -= flux;
                    }
                    if let Some(b) = above {
                        delta[self.idx(b, j)] += flux;
                    }
                }
            }
        }
        if nj > 1 {
            for i in 0..ni {
                for f in 0..=nj {
                    let west = f.checked_sub(1);
                    let east = (f < nj).then_some(f);
                    let u = match (west, east) {
                        (Some(a), Some(b)) => 0.5 * (water[self.idx(i, a)].1 + water[self.idx(i, b)].1),
                        (Some(a), None) => water[self.idx(i, a)].1,
                        (None, Some(b)) => water[self.idx(i, b)].1,
                        (None, None) => 0.0,
                    } * self.drift;
                    let upwind = if u > 0.0 { west } else { east };
                    let conc = upwind.map_or(0.0, |j| self.values[self.idx(i, j)]);
                    let flux = u * conc * dt / self.dx;
                    if let Some(a) = west {
                        delta[self.idx(i, a)] -= flux;
                    }
                    if let Some(b) = east {
                        delta[self.idx(i, b)] += flux;
                    }
                }
            }
        }
        for (e, d) in self.values.iter_mut().zip(delta) {
            *e = (*e + d).max(0.0);
        }
    }

    fn diffuse(&mut self, dt: f64) {
        let mut delta = vec![0.0; self.values.len()];
        let (ni, nj) = (self.n_lat, self.n_lon);
        for i in 0..ni {
            for j in 0..nj {
                let here = self.values[self.idx(i, j)];
                if i + 1 < ni {
                    let flux = self.diffusion * dt / (self.dy * self.dy) * (self.values[self.idx(i + 1, j)] - here);
                    delta[self.idx(i, j)] += flux;
                    delta[self.idx(i + 1, j)] -= flux;
                }
                if j + 1 < nj {
                    let flux = self.diffusion * dt / (self.dx * self.dx) * (self.values[self.idx(i, j + 1)] - here);
                    delta[self.idx(i, j)] += flux;
                    delta[self.idx(i, j + 1)] -= flux;
                }
            }
        }
        for (e, d) in self.values.iter_mut().zip(delta) {
            *e += d;
        }
    }
}

fn validate(spec: &SyntheticSpec) -> Result<(), GeneratorError> {
    let fail = |m: &str| Err(GeneratorError(m.to_owned()));
    let g = &spec.grid;
    if spec.hours == 0 || spec.cadence_minutes == 0 || spec.substeps == 0 {
        return fail("duration, cadence and substeps must be positive");
    }
    if (spec.hours as u64 * 60) % spec.cadence_minutes as u64 != 0 {
        return fail("duration must be a whole number of cadence steps");
    }
    if g.n_lat == 0 || g.n_lon == 0 {
        return fail("grid needs at least one cell");
    }
    if (g.n_lat > 1 && g.lat_min >= g.lat_max) || (g.n_lon > 1 && g.lon_min >= g.lon_max) {
        return fail("grid bounds must be increasing");
    }
    if g.n_lat * g.n_lon == 1 && spec.transport.advection {
        return fail("advection needs more than one grid cell");
    }
    if !(g.max_depth > 0.0) {
        return fail("max_depth must be positive");
    }
    let grid = to_grid(g);
    if !grid.contains(spec.incubator.lat, spec.incubator.lon) {
        return fail("incubator lies outside the grid");
    }
    if !(spec.incubator.nox_tau_hours > 0.0) || spec.incubator.nox_baseline < 0.0 || spec.incubator.nox_gain < 0.0 {
        return fail("incubator needs tau > 0 and non-negative gain and baseline");
    }
    let w = &spec.weather;
    if !(w.sunset_hour > w.sunrise_hour) || w.sunrise_hour < 0.0 || w.sunset_hour > 24.0 {
        return fail("sunrise must precede sunset within the day");
    }
    if w.peak_sun[0] < 0.0 || w.peak_sun[1] > 1.0 || w.peak_sun[0] > w.peak_sun[1] {
        return fail("peak_sun must be an ordered range within [0, 1]");
    }
    if w.rain.iter().any(|e| !(e.hours > 0.0) || e.total_mm < 0.0) {
        return fail("rain episodes need positive duration and non-negative totals");
    }
    let b = &spec.bloom;
    if !(b.k1 > 0.0 && b.k2 > 0.0 && b.k3 > 0.0 && b.kv > 0.0 && b.r0 >= 0.0 && b.temp_width > 0.0) {
        return fail("bloom constants must be positive");
    }
    Ok(())
}

fn to_grid(g: &GridSpec) -> Grid {
    Grid { lat_min: g.lat_min, lat_max: g.lat_max, lon_min: g.lon_min, lon_max: g.lon_max, n_lat: g.n_lat, n_lon: g.n_lon, max_depth: g.max_depth }
}

struct Day {
    peak_sun: f64,
    wind: (f64, f64),
    temp_offset: f64,
    growth: f64,
}

/// Builds a deterministic synthetic dataset: diurnal irradiance, daily winds,
/// rain-fed nitrates at the incubator and a Lagrangian ground-truth bloom
/// driven by the same growth law the inference service uses.
pub fn generate_synthetic_scenario(spec: &SyntheticSpec) -> Result<Dataset, GeneratorError> {
    validate(spec)?;
    let grid = to_grid(&spec.grid);
    let geo = Geo::new(spec.incubator.lat);
    let step_secs = spec.cadence_minutes as i64 * 60;
    let n_steps = (spec.hours as i64 * 3600 / step_secs) as usize;
    let axis = TimeAxis { start: spec.start, step_secs, len: n_steps + 1 };
    let midnight0 = spec.start.date().and_hms_opt(0, 0, 0).expect("valid midnight");
    let day_of = |t: NaiveDateTime| t.signed_duration_since(midnight0).num_days();
    let n_days = (day_of(axis.end()) + 1) as usize;

    let mut weather_rng = rng_stream(spec.seed, 1);
    let mut bio_rng = rng_stream(spec.seed, 2);
    let mut forecast_rng = rng_stream(spec.seed, 3);
    let w = &spec.weather;

    let mut days = Vec::with_capacity(n_days);
    let mut episodes = w.rain.clone();
    for d in 0..n_days {
        let peak_sun = uniform(&mut weather_rng, w.peak_sun);
        let speed = uniform(&mut weather_rng, w.wind_speed);
        let dir = weather_rng.random_range(0.0..2.0 * PI);
        let rain_roll: f64 = weather_rng.random();
        let start_slot = weather_rng.random_range(0..=40u32);
        let hours = uniform(&mut weather_rng, w.rain_hours);
        let total = uniform(&mut weather_rng, w.rain_total_mm);
        if w.rain.is_empty() && rain_roll < w.rain_probability {
            episodes.push(RainEpisode {
                start: midnight0 + Duration::days(d as i64) + Duration::minutes(30 * start_slot as i64),
                hours: (hours * 2.0).round().max(1.0) / 2.0,
                total_mm: total,
            });
        }
        let temp_offset = Normal::new(0.0, spec.temperature.daily_jitter.max(0.0))
            .map(|n| n.sample(&mut bio_rng))
            .unwrap_or(0.0);
        let growth = 1.0 + spec.bloom.growth_jitter * bio_rng.random_range(-1.0..=1.0);
        days.push(Day { peak_sun, wind: (speed * dir.cos(), speed * dir.sin()), temp_offset, growth });
    }

    let rain_at = |t: NaiveDateTime| -> f64 {
        episodes
            .iter()
            .filter(|e| t >= e.start && t < e.start + Duration::seconds((e.hours * 3600.0) as i64))
            .map(|e| e.total_mm / e.hours)
            .sum()
    };
    let hour_of = |t: NaiveDateTime| t.num_seconds_from_midnight() as f64 / 3600.0;
    let clear_sky = |t: NaiveDateTime| {
        let h = hour_of(t);
        if h <= w.sunrise_hour || h >= w.sunset_hour {
            0.0
        } else {
            (PI * (h - w.sunrise_hour) / (w.sunset_hour - w.sunrise_hour)).sin()
        }
    };

    let wind_noise = Normal::new(0.0, w.wind_noise.max(0.0)).expect("finite sigma");
    let times: Vec<NaiveDateTime> = (0..axis.len).map(|k| axis.at(k)).collect();
    let rain: Vec<f64> = times.iter().map(|&t| rain_at(t)).collect();
    let wind: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| {
            let base = days[day_of(t) as usize].wind;
            (base.0 + wind_noise.sample(&mut weather_rng), base.1 + wind_noise.sample(&mut weather_rng))
        })
        .collect();
    let sun: Vec<f64> = times
        .iter()
        .zip(&rain)
        .map(|(&t, &r)| {
            let damp = 1.0 - w.cloud_damping.clamp(0.0, 1.0) * (r / 2.0).min(1.0);
            (clear_sky(t) * days[day_of(t) as usize].peak_sun * damp).clamp(0.0, 1.0)
        })
        .collect();

    let inc = &spec.incubator;
    let cells = grid.cells();
    let mut plume = vec![0.0; cells];
    let mut shear = vec![0.0; cells];
    let lat_mid = 0.5 * (grid.lat_min + grid.lat_max);
    let lat_half = 0.5 * (grid.lat_max - grid.lat_min);
    for i in 0..grid.n_lat {
        for j in 0..grid.n_lon {
            let c = grid.index(i, j);
            let d = geo.distance_m(grid.lat(i), grid.lon(j), inc.lat, inc.lon);
            plume[c] = (-d * d / (2.0 * inc.plume_sigma_m * inc.plume_sigma_m)).exp();
            let y = if lat_half > 0.0 { (grid.lat(i) - lat_mid) / lat_half } else { 0.0 };
            shear[c] = 1.0 + spec.transport.shear * y;
        }
    }
    let water_field = |k: usize| -> Vec<(f64, f64)> {
        let (v, u) = wind[k];
        shear.iter().map(|s| (spec.transport.k_wind * v * s, spec.transport.k_wind * u * s)).collect()
    };
    let temp = &spec.temperature;
    let temperature = |t: NaiveDateTime, c: usize| {
        let day = &days[(day_of(t) as usize).min(n_days - 1)];
        temp.mean + day.temp_offset + temp.amplitude * (2.0 * PI * (hour_of(t) - 9.0) / 24.0).sin() + temp.incubator_excess * plume[c]
    };

    let mut field = NitrateField {
        n_lat: grid.n_lat,
        n_lon: grid.n_lon,
        dy: geo.lat_deg_to_m(grid.lat_step()).max(1.0),
        dx: geo.lon_deg_to_m(grid.lon_step()).max(1.0),
        values: vec![0.0; cells],
        weights: plume.clone(),
        gain: inc.nox_gain,
        tau_hours: inc.nox_tau_hours,
        drift: spec.transport.nox_drift,
        diffusion: spec.transport.diffusion_m2s,
        advection: spec.transport.advection,
    };

    let b = &spec.bloom;
    let (mut r, mut c_lat, mut c_lon) = (b.r0, inc.lat, inc.lon);
    let mut water = Vec::with_capacity(cells * axis.len);
    let mut irradiance = Vec::with_capacity(axis.len);
    let mut forecast = Vec::with_capacity(axis.len);
    let mut truth = Vec::with_capacity(axis.len);
    let rain_err = Normal::new(0.0, w.forecast_rain_noise.max(0.0)).expect("finite sigma");
    let wind_err = Normal::new(0.0, w.forecast_wind_noise.max(0.0)).expect("finite sigma");
    let sub_dt = step_secs as f64 / spec.substeps as f64;

    for k in 0..axis.len {
        let t = times[k];
        if k > 0 && t.num_seconds_from_midnight() == 0 {
            c_lat = inc.lat;
            c_lon = inc.lon;
        }
        let flow = water_field(k);
        for i in 0..grid.n_lat {
            for j in 0..grid.n_lon {
                let c = grid.index(i, j);
                let d = geo.distance_m(grid.lat(i), grid.lon(j), c_lat, c_lon);
                let bloom = b.r0 + (r - b.r0) * (-d * d / (2.0 * b.radius_m * b.radius_m)).exp();
                let tem = temperature(t, c);
                water.push(WaterBodyRecord {
                    t,
                    lat: grid.lat(i),
                    lon: grid.lon(j),
                    depth: 0.0,
                    wfv: flow[c].0,
                    wfu: flow[c].1,
                    tem,
                    dox: oxygen_saturation(tem) + b.k_do * (bloom - b.r0),
                    nox: inc.nox_baseline + field.values[c],
                    bloom,
                });
            }
        }
        irradiance.push(IrradianceRecord { t, lat: inc.lat, lon: inc.lon, sun: sun[k] });
        forecast.push(ForecastRecord {
            t,
            rain: (rain[k] * (1.0 + rain_err.sample(&mut forecast_rng))).max(0.0),
            wind_v: wind[k].0 + wind_err.sample(&mut forecast_rng),
            wind_u: wind[k].1 + wind_err.sample(&mut forecast_rng),
            sun: sun[k],
        });
        truth.push(TruthRecord { t, lat: c_lat, lon: c_lon, r });

        if k + 1 == axis.len {
            break;
        }
        let growth = days[day_of(t) as usize].growth;
        for s in 0..spec.substeps {
            let frac = s as f64 / spec.substeps as f64;
            let ts = t + Duration::milliseconds((frac * step_secs as f64 * 1000.0) as i64);
            let sun_s = sun[k] + (sun[k + 1] - sun[k]) * frac;
            let (i, j) = grid.nearest(c_lat, c_lon).expect("centre clamped into the grid");
            let c = grid.index(i, j);
            let tem = temperature(ts, c);
            let nox = inc.nox_baseline + field.values[c];
            let dox = oxygen_saturation(tem) + b.k_do * (r - b.r0);
            let f_t = (-((tem - b.temp_opt) / b.temp_width).powi(2)).exp();
            let drive = growth * f_t * (b.k1 * sun_s * nox + b.k2 * dox * nox);
            let r_inf = b.r0 + drive / b.k3;
            r = (r_inf + (r - r_inf) * (-b.k3 * sub_dt / 3600.0).exp()).max(0.0);
            c_lat += b.kv * flow[c].0 * sub_dt / METERS_PER_DEG_LAT;
            c_lon += b.kv * geo.east_m_to_deg(flow[c].1 * sub_dt);
            (c_lat, c_lon) = grid.clamp(c_lat, c_lon);
            field.step(sub_dt, rain[k], &flow);
        }
    }

    let dataset = Dataset { grid, axis, water, irradiance, forecast, truth };
    dataset.check().map_err(GeneratorError)?;
    Ok(dataset)
}
