//! Assembly of the root coupled model and end-to-end runs.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::mpsc::Receiver;
use std::sync::Arc;

use habsim_devs::{ClockMode, Coupled, Injection, SimulationClock, SimulationReport, Simulator, Time};

use crate::cloud::{cloud_ports, Cloud, CloudStore};
use crate::config::{Mode, RunConfig};
use crate::edge::{SensorTwin, SimulationFile, Usv, USV_PORTS};
use crate::env::Dataset;
use crate::epoch::Epoch;
use crate::event::{parse_timestamp, Event};
use crate::fog::{build_fog, build_report, ReportBundle, ReportWindow};
use crate::geo::Geo;
use crate::log::EventLog;
use crate::scenario::{Scenario, Service};

/// The root model together with the stores its components write to.
pub struct Assembly {
    pub root: Coupled<Event>,
    pub fog_log: EventLog,
    pub cloud: CloudStore,
    pub epoch: Epoch,
    pub scenario: Scenario,
    pub dataset: Arc<Dataset>,
    /// Root input port for injected events, by event source.
    pub injection_ports: BTreeMap<String, String>,
}

impl Assembly {
    pub fn router(&self) -> InjectionRouter {
        InjectionRouter { epoch: self.epoch, ports: self.injection_ports.clone() }
    }
}

/// Turns event lines received from outside into kernel injections.
#[derive(Debug, Clone)]
pub struct InjectionRouter {
    pub epoch: Epoch,
    /// Root input port by event source.
    pub ports: BTreeMap<String, String>,
}

impl InjectionRouter {
    /// Injection timed by the event's own timestamp, on the port of the
    /// sensor twin whose source matches.
    pub fn route(&self, event: Event) -> Result<Injection<Event>, String> {
        let port = self.ports.get(&event.source).ok_or_else(|| format!("no sensor accepts events from `{}`", event.source))?;
        let time = self.epoch.offset(event.timestamp).ok_or_else(|| format!("event at {} precedes the scenario", event.timestamp))?;
        Ok(Injection { time, port: port.clone(), message: event })
    }
}

fn component_name(source: &str, id: &str) -> String {
    format!("{source}_{id}")
}

/// Builds the root coupled model: simulation-file source, stationary sensor
/// twins, the USV, the fog coupled model and the cloud.
pub fn assemble(cfg: &RunConfig) -> Result<Assembly, Vec<String>> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(problems);
    }
    let scenario = cfg.scenario()?;
    let dataset = Arc::new(cfg.dataset().map_err(|e| vec![format!("dataset: {e}")])?);
    assemble_with(cfg, scenario, dataset)
}

/// As [`assemble`], with the scenario and dataset already loaded.
pub fn assemble_with(cfg: &RunConfig, scenario: Scenario, dataset: Arc<Dataset>) -> Result<Assembly, Vec<String>> {
    let epoch = Epoch(scenario.start());
    let geo = Geo::new(cfg.reference_lat());
    let fog_log = EventLog::new();
    let cloud = CloudStore::new();
    let wb = cfg.fog.water_body.clone();

    let mut root = Coupled::new(cfg.name.replace(|c: char| !c.is_ascii_alphanumeric() && c != '_', "_"));
    root.add_atomic("file", SimulationFile::new(&scenario, epoch));
    let fog = build_fog("fog", &cfg.fog, epoch, geo, fog_log.clone())?;
    let plan = cfg.fog.enabled()?.contains(&Service::Plan);
    root.add_coupled(fog);
    root.add_ic("file", "out", "fog", "cmd");
    root.add_atomic("cloud", Cloud::new(vec![wb.clone()], cfg.cloud.clone(), dataset.clone(), epoch, geo, cloud.clone()));
    let (d1, dh1) = cloud_ports(&wb);
    root.add_ic("file", "out", "cloud", "cmd").add_ic("fog", "d1", "cloud", &d1).add_ic("fog", "dh1", "cloud", &dh1);

    let mut injection_ports = BTreeMap::new();
    for s in &cfg.sensors {
        let name = component_name(&s.config.source, &s.config.id);
        root.add_atomic(name.clone(), SensorTwin::new(s.clone(), dataset.clone(), epoch, cfg.seed));
        root.add_ic("file", "out", &name, "cmd").add_ic(&name, "e", "fog", "e");
        let port = format!("d_{}", s.config.source);
        if !injection_ports.contains_key(&s.config.source) {
            root.add_input(port.clone());
            injection_ports.insert(s.config.source.clone(), port.clone());
        }
        root.add_eic(&port, &name, "d");
    }
    if let Some(usv) = &cfg.usv {
        let name = usv.name.clone();
        root.add_atomic(name.clone(), Usv::new(usv.clone(), geo, dataset.clone(), epoch, cfg.seed));
        root.add_ic("file", "out", &name, "cmd");
        for port in USV_PORTS {
            root.add_ic(&name, port, "fog", "e");
        }
        if plan && usv.guided_by.is_some() {
            root.add_ic("fog", "usv_cmd", &name, "trk");
        }
    }
    Ok(Assembly { root, fog_log, cloud, epoch, scenario, dataset, injection_ports })
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("run failed: {0}")]
    Runtime(String),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mode: Option<Mode>,
    pub scale: Option<f64>,
    pub until: Option<String>,
    pub parallel: Option<bool>,
}

pub struct RunOutcome {
    pub report: SimulationReport,
    pub fog_log: EventLog,
    pub cloud: CloudStore,
    pub epoch: Epoch,
    pub dataset: Arc<Dataset>,
}

/// Clock for an assembled run: from START to STOP unless `until` says
/// otherwise.
pub fn clock_for(cfg: &RunConfig, assembly: &Assembly, opts: &RunOptions) -> Result<SimulationClock, RunError> {
    let mode = opts.mode.unwrap_or(cfg.clock.mode);
    let scale = opts.scale.unwrap_or(cfg.clock.scale);
    let until = opts.until.clone().or_else(|| cfg.clock.until.clone());
    let end = match until {
        Some(u) => {
            let t = parse_timestamp(&u).map_err(|e| RunError::Config(vec![format!("until: {e}")]))?;
            assembly.epoch.offset(t).ok_or_else(|| RunError::Config(vec![format!("until {u} precedes START")]))?
        }
        None => assembly.epoch.offset(assembly.scenario.stop()).expect("STOP follows START"),
    };
    let mode = match mode {
        Mode::Virtual => ClockMode::Virtual,
        Mode::Realtime => ClockMode::RealTime,
        Mode::Hybrid => ClockMode::Hybrid,
    };
    let clock = SimulationClock { mode, scale, start: Time::ZERO, end };
    clock.validate().map_err(|e| RunError::Config(vec![e.to_string()]))?;
    Ok(clock)
}

/// Runs an assembled model to completion.
pub fn run_assembly(
    cfg: &RunConfig,
    assembly: Assembly,
    opts: &RunOptions,
    injector: Option<Receiver<Injection<Event>>>,
) -> Result<RunOutcome, RunError> {
    let clock = clock_for(cfg, &assembly, opts)?;
    let Assembly { root, fog_log, cloud, epoch, dataset, .. } = assembly;
    let sim = Simulator::new(root)
        .map_err(|e| RunError::Config(vec![e.to_string()]))?
        .parallel(opts.parallel.unwrap_or(cfg.clock.parallel));
    let report = sim.run_paced(&clock, &mut [], injector).map_err(|e| RunError::Runtime(e.to_string()))?;
    Ok(RunOutcome { report, fog_log, cloud, epoch, dataset })
}

/// Validates, assembles and runs a configuration.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let assembly = assemble(cfg).map_err(RunError::Config)?;
    run_assembly(cfg, assembly, opts, None)
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub fog_log: PathBuf,
    pub cloud_log: PathBuf,
    pub report: ReportBundle,
}

/// Writes the fog log, the central cloud log and the report bundle into
/// `dir`.
pub fn write_outputs(cfg: &RunConfig, outcome: &RunOutcome, dir: &Path) -> Result<OutputFiles, String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let create = |p: &Path| fs::File::create(p).map(BufWriter::new).map_err(|e| format!("cannot create {}: {e}", p.display()));
    let fog_log = dir.join(format!("fog_{}.log", cfg.fog.water_body));
    outcome.fog_log.write_lines(create(&fog_log)?).map_err(|e| e.to_string())?;
    let cloud_log = dir.join("cloud.log");
    outcome.cloud.write_lines(create(&cloud_log)?).map_err(|e| e.to_string())?;
    let report = build_report(&outcome.fog_log.snapshot(), ReportWindow::all(), &cfg.name, dir)?;
    Ok(OutputFiles { fog_log, cloud_log, report })
}
