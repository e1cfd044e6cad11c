use std::fmt;
use std::path::Path;

use chrono::NaiveDateTime;

use crate::event::{parse_event_line_at, Event, Payload};

/// Payload keys that mark a line as component configuration.
pub const CONFIG_KEYS: [&str; 9] = ["id", "description", "delay", "max", "min", "precision", "noisesigma", "period", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Service {
    Outliers,
    Infer,
    Plan,
    Report,
    Predict,
}

impl Service {
    pub const ALL: [Service; 5] = [Service::Outliers, Service::Infer, Service::Plan, Service::Report, Service::Predict];

    pub fn from_id(id: &str) -> Option<Service> {
        Service::ALL.into_iter().find(|s| s.id() == id)
    }

    pub fn id(self) -> &'static str {
        match self {
            Service::Outliers => "OUTLIERS",
            Service::Infer => "INFER",
            Service::Plan => "PLAN",
            Service::Report => "REPORT",
            Service::Predict => "PREDICT",
        }
    }
}

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandKind {
    Start,
    Stop,
    Trigger(Service),
    /// Parameters for the component named by the command's target.
    Config,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioCommand {
    pub at: NaiveDateTime,
    pub kind: CommandKind,
    pub id: String,
    /// The `source` field of the line: the addressed component.
    pub target: String,
    pub args: Payload,
    pub line: usize,
}

impl ScenarioCommand {
    pub fn to_event(&self) -> Event {
        Event::new(self.id.clone(), self.target.clone(), self.at).with_payload(self.args.clone())
    }
}

/// Classifies a parsed line, or returns `None` for an unknown command.
pub fn classify(event: &Event) -> Option<CommandKind> {
    match event.id.as_str() {
        "START" => Some(CommandKind::Start),
        "STOP" => Some(CommandKind::Stop),
        id => {
            if let Some(service) = Service::from_id(id) {
                return Some(CommandKind::Trigger(service));
            }
            let config_shaped = !event.payload.is_empty()
                && event.payload.keys().all(|k| CONFIG_KEYS.contains(&k))
                && event.payload.text("id").is_none_or(|declared| declared == id);
            config_shaped.then_some(CommandKind::Config)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub commands: Vec<ScenarioCommand>,
}

impl Scenario {
    pub fn start(&self) -> NaiveDateTime {
        self.commands[0].at
    }

    pub fn stop(&self) -> NaiveDateTime {
        self.commands[self.commands.len() - 1].at
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ScenarioError {
    pub violations: Vec<String>,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario ({} problem{})", self.violations.len(), if self.violations.len() == 1 { "" } else { "s" })?;
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError { violations: vec![format!("cannot read {}: {e}", path.display())] })?;
    parse_scenario(&text)
}

/// Parses and validates a scenario, collecting every problem found.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut violations = Vec::new();
    let mut commands = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let event = match parse_event_line_at(line, line_no) {
            Ok(e) => e,
            Err(e) => {
                violations.push(e.to_string());
                continue;
            }
        };
        match classify(&event) {
            Some(kind) => commands.push(ScenarioCommand {
                at: event.timestamp,
                kind,
                id: event.id,
                target: event.source,
                args: event.payload,
                line: line_no,
            }),
            None => violations.push(format!("line {line_no}: unknown command `{}`", event.id)),
        }
    }

    for pair in commands.windows(2) {
        if pair[1].at < pair[0].at {
            violations.push(format!(
                "line {}: timestamp {} is earlier than the previous command ({})",
                pair[1].line, pair[1].at, pair[0].at
            ));
        }
    }
    let starts: Vec<usize> = commands.iter().filter(|c| c.kind == CommandKind::Start).map(|c| c.line).collect();
    let stops: Vec<usize> = commands.iter().filter(|c| c.kind == CommandKind::Stop).map(|c| c.line).collect();
    match (commands.first(), commands.last()) {
        (None, _) | (_, None) => violations.push("scenario has no commands".to_owned()),
        (Some(first), Some(last)) => {
            if first.kind != CommandKind::Start {
                violations.push(format!("line {}: first command must be START, found `{}`", first.line, first.id));
            }
            if last.kind != CommandKind::Stop {
                violations.push(format!("line {}: last command must be STOP, found `{}`", last.line, last.id));
            }
        }
    }
    if starts.len() > 1 {
        violations.push(format!("START appears {} times (lines {starts:?})", starts.len()));
    }
    if stops.len() > 1 {
        violations.push(format!("STOP appears {} times (lines {stops:?})", stops.len()));
    }

    if violations.is_empty() {
        Ok(Scenario { commands })
    } else {
        Err(ScenarioError { violations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensor_config_line_becomes_config_command() {
        let text = "START,file,2008-08-23 00:00:00,{}\n\
            DOX,SimSenO,2008-08-23 00:00:00,{'id':'DOX','description':'Oxigen Sensor(mg/L)','delay':5,'max':30.0,'min':0.0,'precision':0.1,'noisesigma':0.2}\n\
            STOP,file,2008-08-24 00:00:00,{}\n";
        let s = parse_scenario(text).unwrap();
        let cfg = &s.commands[1];
        assert_eq!(cfg.kind, CommandKind::Config);
        assert_eq!(cfg.target, "SimSenO");
        for (key, value) in [("delay", 5.0), ("max", 30.0), ("min", 0.0), ("precision", 0.1), ("noisesigma", 0.2)] {
            assert_eq!(cfg.args.number(key), Some(value), "{key}");
        }
    }

    #[test]
    fn start_stop_only() {
        let s = parse_scenario("# empty run\n\nSTART,file,2008-08-23 00:00:00,{}\nSTOP,file,2008-08-23 06:00:00,{}\n")
            .unwrap();
        assert_eq!(s.commands.len(), 2);
        assert_eq!(s.stop().to_string(), "2008-08-23 06:00:00");
    }

    #[test]
    fn collects_every_violation() {
        let text = "STOP,file,2008-08-23 00:00:00,{}\n\
            FLY,drone,2008-08-23 01:00:00,{'speed':3}\n\
            garbage\n\
            START,file,2008-08-22 00:00:00,{}\n";
        let err = parse_scenario(text).unwrap_err();
        let all = err.violations.join("\n");
        assert!(all.contains("unknown command `FLY`"), "{all}");
        assert!(all.contains("line 3"), "{all}");
        assert!(all.contains("earlier than the previous"), "{all}");
        assert!(all.contains("first command must be START"), "{all}");
        assert!(all.contains("last command must be STOP"), "{all}");
    }

    #[test]
    fn config_with_mismatched_id_is_unknown() {
        let e = crate::event::parse_event_line("DOX,SimSenO,2008-08-23 00:00:00,{'id':'NOX','delay':5}").unwrap();
        assert_eq!(classify(&e), None);
        let e = crate::event::parse_event_line("INFER,fog,2008-08-23 00:00:00,{'period':1800}").unwrap();
        assert_eq!(classify(&e), Some(CommandKind::Trigger(Service::Infer)));
    }
}
