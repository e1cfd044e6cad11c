//! Fog layer: ground control station and the inference, planning,
//! outlier-repair and analysis services.

mod analysis;
mod gcs;
mod inference;
mod outliers;
mod planner;
mod report;

use std::collections::BTreeSet;

use habsim_devs::Coupled;
use serde::{Deserialize, Serialize};

use crate::epoch::Epoch;
use crate::event::Event;
use crate::geo::Geo;
use crate::log::EventLog;
use crate::scenario::Service;

pub use analysis::{is_signal_reading, Analysis, SignalStats};
pub use gcs::{req_port, Gcs, FOG_SERVICES};
pub use inference::{bloom_derivative, inference_step, BloomEstimate, BloomInputs, BloomParams, Inference};
pub use outliers::{repair_outliers, OutlierConfig, OutlierReport, Outliers, Replacement};
pub use planner::{plan_track, Fix, Planner, PlannerConfig, TrackCommand};
pub use report::{build_report, ReportBundle, ReportWindow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FogConfig {
    /// Water body served by this fog node.
    pub water_body: String,
    /// Services this node runs: any of outliers, infer, plan, report.
    pub services: Vec<String>,
    /// Where the bloom estimate starts every day.
    pub incubator: Position,
    pub bloom: BloomParams,
    pub planner: PlannerConfig,
    pub outliers: OutlierConfig,
}

impl Default for FogConfig {
    fn default() -> Self {
        FogConfig {
            water_body: "wb1".to_owned(),
            services: ["outliers", "infer", "plan", "report"].map(str::to_owned).to_vec(),
            incubator: Position { lat: 47.500, lon: -122.220 },
            bloom: BloomParams::default(),
            planner: PlannerConfig::default(),
            outliers: OutlierConfig::default(),
        }
    }
}

impl FogConfig {
    /// Enabled services, or the names that are not fog services.
    pub fn enabled(&self) -> Result<BTreeSet<Service>, Vec<String>> {
        let mut set = BTreeSet::new();
        let mut bad = Vec::new();
        for name in &self.services {
            match Service::from_id(&name.to_uppercase()).filter(|s| FOG_SERVICES.contains(s)) {
                Some(s) => {
                    set.insert(s);
                }
                None => bad.push(format!("fog service `{name}` is not one of outliers, infer, plan, report")),
            }
        }
        if bad.is_empty() {
            Ok(set)
        } else {
            Err(bad)
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = self.bloom.validate();
        problems.extend(self.outliers.validate());
        if self.water_body.is_empty() || !self.water_body.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            problems.push(format!("water body name `{}` must be non-empty and alphanumeric", self.water_body));
        }
        if !(self.planner.staleness > 0.0) {
            problems.push("planner staleness must be positive".to_owned());
        }
        match self.enabled() {
            Ok(set) => {
                if set.contains(&Service::Plan) && !set.contains(&Service::Infer) {
                    problems.push("service plan needs service infer".to_owned());
                }
            }
            Err(bad) => problems.extend(bad),
        }
        problems
    }
}

/// Builds the fog coupled model.
///
/// Inputs `e` (sensor events) and `cmd` (scenario commands); outputs `d1`
/// (raw data to the cloud), `dh1` (service output to the cloud) and
/// `usv_cmd` (planner commands).
pub fn build_fog(name: &str, cfg: &FogConfig, epoch: Epoch, geo: Geo, log: EventLog) -> Result<Coupled<Event>, Vec<String>> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(problems);
    }
    let enabled = cfg.enabled()?;
    let mut fog = Coupled::new(name);
    fog.add_input("e").add_input("cmd").add_output("d1").add_output("dh1").add_output("usv_cmd");
    fog.add_atomic("gcs", Gcs::new("Gcs", epoch, enabled.clone(), log));
    fog.add_eic("e", "gcs", "e").add_eic("cmd", "gcs", "cmd").add_eoc("gcs", "d1", "d1").add_eoc("gcs", "dh1", "dh1");

    let service = |fog: &mut Coupled<Event>, s: Service, component: &str| {
        fog.add_ic("gcs", req_port(s), component, "req").add_ic("gcs", "data", component, "data").add_ic(component, "out", "gcs", "svc");
    };
    if enabled.contains(&Service::Outliers) {
        fog.add_atomic("outliers", Outliers::new("Outliers", epoch, cfg.outliers));
        service(&mut fog, Service::Outliers, "outliers");
    }
    if enabled.contains(&Service::Infer) {
        let incubator = (cfg.incubator.lat, cfg.incubator.lon);
        fog.add_atomic("inference", Inference::new("Inference", cfg.bloom, geo, epoch, incubator));
        service(&mut fog, Service::Infer, "inference");
    }
    if enabled.contains(&Service::Plan) {
        fog.add_atomic("planner", Planner::new("Planner", cfg.planner.clone()));
        service(&mut fog, Service::Plan, "planner");
        fog.add_ic("inference", "out", "planner", "est").add_eoc("planner", "out", "usv_cmd");
    }
    if enabled.contains(&Service::Report) {
        fog.add_atomic("analysis", Analysis::new("Analysis", epoch));
        service(&mut fog, Service::Report, "analysis");
    }
    Ok(fog)
}
