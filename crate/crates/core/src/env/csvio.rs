use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Dataset, ForecastRecord, Grid, IrradianceRecord, TimeAxis, TruthRecord, WaterBodyRecord};

/// Locations of the CSV files making up a dataset.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFiles {
    pub water: PathBuf,
    pub irradiance: Option<PathBuf>,
    pub forecast: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

fn read_records<R: Read, T: DeserializeOwned>(reader: R, what: &str) -> Result<Vec<T>, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().enumerate().map(|(i, r)| r.map_err(|e| format!("{what} row {}: {e}", i + 2))).collect()
}

fn write_records<W: Write, T: Serialize>(writer: W, records: &[T], header: &[&str]) -> Result<(), String> {
    let mut wtr = csv::WriterBuilder::new().has_headers(!records.is_empty()).from_writer(writer);
    if records.is_empty() {
        wtr.write_record(header).map_err(|e| e.to_string())?;
    }
    for r in records {
        wtr.serialize(r).map_err(|e| e.to_string())?;
    }
    wtr.flush().map_err(|e| e.to_string())
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn uniform_step(v: &[f64], what: &str) -> Result<(), String> {
    if v.len() < 3 {
        return Ok(());
    }
    let step = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
    match v.windows(2).find(|w| ((w[1] - w[0]) - step).abs() > 1e-6 * step.abs().max(1e-12)) {
        Some(w) => Err(format!("{what} values are not evenly spaced near {}", w[0])),
        None => Ok(()),
    }
}

/// Reads `t,lat,lon,depth,wfv,wfu,tem,dox,nox,bloom` rows covering a
/// complete, evenly spaced grid at a uniform cadence.
pub fn read_water_csv<R: Read>(reader: R, max_depth: f64) -> Result<(Grid, TimeAxis, Vec<WaterBodyRecord>), String> {
    let rows: Vec<WaterBodyRecord> = read_records(reader, "water")?;
    if rows.is_empty() {
        return Err("water dataset is empty".to_owned());
    }
    for r in &rows {
        r.check()?;
    }
    let lats = sorted_unique(rows.iter().map(|r| r.lat));
    let lons = sorted_unique(rows.iter().map(|r| r.lon));
    uniform_step(&lats, "latitude")?;
    uniform_step(&lons, "longitude")?;
    let times: Vec<NaiveDateTime> = rows.iter().map(|r| r.t).collect::<BTreeSet<_>>().into_iter().collect();
    let step_secs = if times.len() > 1 { times[1].signed_duration_since(times[0]).num_seconds() } else { 1800 };
    if let Some(w) = times.windows(2).find(|w| w[1].signed_duration_since(w[0]).num_seconds() != step_secs) {
        return Err(format!("water dataset cadence changes at {}", w[1]));
    }

    let grid = Grid {
        lat_min: lats[0],
        lat_max: lats[lats.len() - 1],
        lon_min: lons[0],
        lon_max: lons[lons.len() - 1],
        n_lat: lats.len(),
        n_lon: lons.len(),
        max_depth,
    };
    let axis = TimeAxis { start: times[0], step_secs, len: times.len() };
    let expected = grid.cells() * axis.len;
    if rows.len() != expected {
        return Err(format!(
            "water dataset has {} rows but a {}x{} grid over {} instants needs {expected}",
            rows.len(),
            grid.n_lat,
            grid.n_lon,
            axis.len
        ));
    }
    let mut slots: Vec<Option<WaterBodyRecord>> = vec![None; expected];
    for r in rows {
        let k = (r.t.signed_duration_since(axis.start).num_seconds() / step_secs) as usize;
        let i = lats.iter().position(|&x| x == r.lat).expect("latitude collected above");
        let j = lons.iter().position(|&x| x == r.lon).expect("longitude collected above");
        let slot = &mut slots[k * grid.cells() + grid.index(i, j)];
        if slot.is_some() {
            return Err(format!("duplicate water row at {} ({}, {})", r.t, r.lat, r.lon));
        }
        *slot = Some(r);
    }
    let water = slots.into_iter().map(|s| s.expect("count checked above")).collect();
    Ok((grid, axis, water))
}

fn sorted_series<T>(rows: Vec<T>, time_of: impl Fn(&T) -> NaiveDateTime, what: &str) -> Result<Vec<T>, String> {
    if let Some(w) = rows.windows(2).find(|w| time_of(&w[1]) <= time_of(&w[0])) {
        return Err(format!("{what} times must be strictly increasing (at {})", time_of(&w[1])));
    }
    Ok(rows)
}

pub fn read_irradiance_csv<R: Read>(reader: R) -> Result<Vec<IrradianceRecord>, String> {
    let rows: Vec<IrradianceRecord> = read_records(reader, "irradiance")?;
    if let Some(r) = rows.iter().find(|r| !(0.0..=1.0).contains(&r.sun)) {
        return Err(format!("irradiance {} out of [0, 1] at {}", r.sun, r.t));
    }
    sorted_series(rows, |r| r.t, "irradiance")
}

pub fn read_forecast_csv<R: Read>(reader: R) -> Result<Vec<ForecastRecord>, String> {
    let rows: Vec<ForecastRecord> = read_records(reader, "forecast")?;
    if let Some(r) = rows.iter().find(|r| !(r.rain >= 0.0) || !r.wind_v.is_finite() || !r.wind_u.is_finite()) {
        return Err(format!("invalid forecast row at {}", r.t));
    }
    sorted_series(rows, |r| r.t, "forecast")
}

pub fn read_truth_csv<R: Read>(reader: R) -> Result<Vec<TruthRecord>, String> {
    let rows: Vec<TruthRecord> = read_records(reader, "truth")?;
    sorted_series(rows, |r| r.t, "truth")
}

fn open(path: &Path) -> Result<std::fs::File, String> {
    std::fs::File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))
}

impl DatasetFiles {
    /// Standard file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        DatasetFiles {
            water: dir.join("water.csv"),
            irradiance: Some(dir.join("irradiance.csv")),
            forecast: Some(dir.join("forecast.csv")),
            truth: Some(dir.join("truth.csv")),
        }
    }

    /// Resolves relative paths against `base`.
    pub fn relative_to(&self, base: &Path) -> Self {
        let fix = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        DatasetFiles {
            water: fix(&self.water),
            irradiance: self.irradiance.as_ref().map(fix),
            forecast: self.forecast.as_ref().map(fix),
            truth: self.truth.as_ref().map(fix),
        }
    }

    pub fn missing(&self) -> Vec<PathBuf> {
        std::iter::once(&self.water)
            .chain(self.irradiance.iter())
            .chain(self.forecast.iter())
            .chain(self.truth.iter())
            .filter(|p| !p.is_file())
            .cloned()
            .collect()
    }

    pub fn load(&self, max_depth: f64) -> Result<Dataset, String> {
        let (grid, axis, water) = read_water_csv(open(&self.water)?, max_depth)?;
        let irradiance = match &self.irradiance {
            Some(p) => read_irradiance_csv(open(p)?)?,
            None => Vec::new(),
        };
        let forecast = match &self.forecast {
            Some(p) => read_forecast_csv(open(p)?)?,
            None => Vec::new(),
        };
        let truth = match &self.truth {
            Some(p) => read_truth_csv(open(p)?)?,
            None => Vec::new(),
        };
        Ok(Dataset { grid, axis, water, irradiance, forecast, truth })
    }
}

/// Writes the four dataset CSVs into `dir` using the standard names.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetFiles, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let files = DatasetFiles::in_dir(dir);
    let create = |p: &Path| std::fs::File::create(p).map_err(|e| format!("cannot create {}: {e}", p.display()));
    let buffered = |p: &Path| create(p).map(std::io::BufWriter::new);
    write_records(
        buffered(&files.water)?,
        &dataset.water,
        &["t", "lat", "lon", "depth", "wfv", "wfu", "tem", "dox", "nox", "bloom"],
    )?;
    if let Some(p) = &files.irradiance {
        write_records(buffered(p)?, &dataset.irradiance, &["t", "lat", "lon", "sun"])?;
    }
    if let Some(p) = &files.forecast {
        write_records(buffered(p)?, &dataset.forecast, &["t", "rain", "wind_v", "wind_u", "sun"])?;
    }
    if let Some(p) = &files.truth {
        write_records(buffered(p)?, &dataset.truth, &["t", "lat", "lon", "r"])?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WATER: &str = "t,lat,lon,depth,wfv,wfu,tem,dox,nox,bloom
2008-08-23 00:00:00,47.50,-122.22,0.0,0.01,0.02,19.5,8.0,0.005,0.05
2008-08-23 00:00:00,47.50,-122.21,0.0,0.01,0.02,19.5,8.1,0.006,0.05
2008-08-23 00:30:00,47.50,-122.22,0.0,0.01,0.02,19.6,10.0,0.005,0.05
2008-08-23 00:30:00,47.50,-122.21,0.0,0.01,0.02,19.6,8.3,0.006,0.05
";

    #[test]
    fn reads_complete_grid() {
        let (grid, axis, water) = read_water_csv(WATER.as_bytes(), 5.0).unwrap();
        assert_eq!((grid.n_lat, grid.n_lon, axis.len, axis.step_secs), (1, 2, 2, 1800));
        assert_eq!(water[2].dox, 10.0);
    }

    #[test]
    fn rejects_incomplete_grid_and_bad_rows() {
        let truncated: String = WATER.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(read_water_csv(truncated.as_bytes(), 5.0).unwrap_err().contains("needs 4"));
        let negative = WATER.replace("8.3,0.006", "8.3,-0.006");
        assert!(read_water_csv(negative.as_bytes(), 5.0).is_err());
        assert!(read_irradiance_csv("t,lat,lon,sun\n2008-08-23 00:00:00,47.5,-122.2,1.5\n".as_bytes()).is_err());
        assert!(read_forecast_csv("t,rain,wind_v,wind_u,sun\n2008-08-23 00:00:00,-1,0,0,0\n".as_bytes()).is_err());
    }
}
