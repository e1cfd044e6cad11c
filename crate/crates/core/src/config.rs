//! Run configuration: one TOML file describing the scenario, the dataset,
//! every component and the clock.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloud::CloudConfig;
use crate::edge::{StationarySensor, UsvConfig};
use crate::env::{generate_synthetic_scenario, Dataset, DatasetFiles, SyntheticSpec};
use crate::fog::FogConfig;
use crate::scenario::{load_scenario, Scenario, Service};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Virtual,
    Realtime,
    Hybrid,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "virtual" => Ok(Mode::Virtual),
            "realtime" => Ok(Mode::Realtime),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(format!("unknown mode `{other}` (virtual, realtime, hybrid)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockConfig {
    pub mode: Mode,
    /// Virtual seconds per wall second in realtime and hybrid modes.
    pub scale: f64,
    /// Stop time overriding the scenario STOP.
    pub until: Option<String>,
    /// Run transitions of simultaneous components on a thread pool.
    pub parallel: bool,
    /// Address of the hybrid-mode injection socket.
    pub listen: String,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig { mode: Mode::Virtual, scale: 1.0, until: None, parallel: false, listen: "127.0.0.1:7878".to_owned() }
    }
}

/// Where the environment comes from: a directory of CSV files or the
/// synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub csv: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    /// Deepest valid sampling depth for CSV datasets (m).
    pub max_depth: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { csv: None, synthetic: None, max_depth: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario name used in output file names.
    pub name: String,
    pub scenario: PathBuf,
    pub seed: u64,
    pub output: PathBuf,
    /// Latitude of the metres-to-degrees conversion; the incubator when unset.
    pub reference_lat: Option<f64>,
    pub dataset: DatasetConfig,
    pub clock: ClockConfig,
    pub sensors: Vec<StationarySensor>,
    pub usv: Option<UsvConfig>,
    pub fog: FogConfig,
    pub cloud: CloudConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".to_owned(),
            scenario: PathBuf::from("scenario.scn"),
            seed: 1,
            output: PathBuf::from("out"),
            reference_lat: None,
            dataset: DatasetConfig::default(),
            clock: ClockConfig::default(),
            sensors: Vec::new(),
            usv: None,
            fog: FogConfig::default(),
            cloud: CloudConfig::default(),
            base: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, String> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.base = base.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_toml(&text, &base).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn scenario_path(&self) -> PathBuf {
        self.resolve(&self.scenario)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn reference_lat(&self) -> f64 {
        self.reference_lat.unwrap_or(self.fog.incubator.lat)
    }

    pub fn scenario(&self) -> Result<Scenario, Vec<String>> {
        load_scenario(self.scenario_path()).map_err(|e| e.violations.into_iter().map(|v| format!("scenario: {v}")).collect())
    }

    fn dataset_files(&self) -> Option<DatasetFiles> {
        self.dataset.csv.as_ref().map(|dir| DatasetFiles::in_dir(&self.resolve(dir)))
    }

    /// Loads the CSV dataset or runs the generator.
    pub fn dataset(&self) -> Result<Dataset, String> {
        match (self.dataset_files(), &self.dataset.synthetic) {
            (Some(files), None) => files.load(self.dataset.max_depth),
            (None, spec) => generate_synthetic_scenario(&spec.clone().unwrap_or_default()).map_err(|e| e.to_string()),
            (Some(_), Some(_)) => Err("dataset: give either csv or synthetic, not both".to_owned()),
        }
    }

    /// Every problem that would stop `run`, without running anything.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            problems.push(format!("name `{}` must be non-empty and contain no path separators", self.name));
        }
        if let Err(v) = self.scenario() {
            problems.extend(v);
        }
        if let Some(files) = self.dataset_files() {
            if self.dataset.synthetic.is_some() {
                problems.push("dataset: give either csv or synthetic, not both".to_owned());
            }
            for p in files.missing() {
                if p == files.water {
                    problems.push(format!("dataset: missing {}", p.display()));
                }
            }
        }
        if !(self.dataset.max_depth >= 0.0) {
            problems.push("dataset: max_depth must be non-negative".to_owned());
        }
        if !(self.clock.scale > 0.0 && self.clock.scale.is_finite()) {
            problems.push(format!("clock: scale {} must be positive", self.clock.scale));
        }
        if let Some(u) = &self.clock.until {
            if let Err(e) = crate::event::parse_timestamp(u) {
                problems.push(format!("clock: until: {e}"));
            }
        }
        if self.clock.mode == Mode::Hybrid && self.clock.listen.parse::<std::net::SocketAddr>().is_err() && self.clock.listen != "stdin" {
            problems.push(format!("clock: listen `{}` is neither a socket address nor `stdin`", self.clock.listen));
        }

        let mut names = BTreeSet::new();
        for s in &self.sensors {
            problems.extend(s.config.validate());
            if !names.insert((s.config.source.clone(), s.config.id.clone())) {
                problems.push(format!("sensor {}/{} is declared twice", s.config.source, s.config.id));
            }
            if s.depth.is_some_and(|d| d > 0.0) {
                problems.push(format!("sensor {}/{}: depth must be <= 0", s.config.source, s.config.id));
            }
        }
        problems.extend(self.fog.validate().into_iter().map(|p| format!("fog: {p}")));
        problems.extend(self.cloud.prediction.validate().into_iter().map(|p| format!("cloud: {p}")));
        if !(self.cloud.horizon_hours > 0.0) {
            problems.push("cloud: horizon_hours must be positive".to_owned());
        }
        if let Some(usv) = &self.usv {
            problems.extend(usv.validate());
            for s in &usv.sensors {
                if !names.insert((s.source.clone(), s.id.clone())) {
                    problems.push(format!("sensor {}/{} is declared twice", s.source, s.id));
                }
            }
            if let Some(service) = &usv.guided_by {
                let enabled = self.fog.enabled().unwrap_or_default();
                if service != "planner" {
                    problems.push(format!("usv: guided_by `{service}` is not a known service (planner)"));
                } else if !enabled.contains(&Service::Plan) {
                    problems.push("usv: guided_by planner but the fog service plan is disabled".to_owned());
                }
            }
        }
        problems
    }
}
