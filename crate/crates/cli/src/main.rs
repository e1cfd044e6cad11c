use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc::{self, Sender};
use std::thread;

use clap::{Parser, Subcommand};
use habsim_core::config::{Mode, RunConfig};
use habsim_core::env::{generate_synthetic_scenario, write_dataset, SyntheticSpec};
use habsim_core::event::{parse_event_line_at, parse_timestamp, Event};
use habsim_core::fog::{build_report, ReportWindow};
use habsim_core::run::{assemble, run_assembly, write_outputs, InjectionRouter, RunError, RunOptions};
use habsim_devs::Injection;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Harmful algal bloom early-warning simulator.
#[derive(Parser, Debug)]
#[command(name = "habsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write logs and report CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// virtual, realtime or hybrid.
        #[arg(long)]
        mode: Option<Mode>,
        /// Virtual seconds per wall second.
        #[arg(long)]
        scale: Option<f64>,
        /// Stop time, `YYYY-MM-DD HH:MM:SS`.
        #[arg(long)]
        until: Option<String>,
        /// Output directory; overrides HABSIM_OUT and the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed for sensor noise and the synthetic dataset.
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate simultaneous transitions on a thread pool.
        #[arg(long)]
        parallel: bool,
    },
    /// Write a synthetic dataset as CSV files.
    Generate {
        /// TOML file with generator settings; defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        hours: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the report CSVs from an existing fog log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scenario name used in file names.
        #[arg(long, default_value = "report")]
        name: String,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
    },
    /// Check a configuration and its scenario without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Send event lines to a simulation running in hybrid mode.
    Inject {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// File with event lines; standard input when absent.
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(_) => Failure::config(e.to_string()),
            RunError::Runtime(_) => Failure::runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("habsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, mode, scale, until, out, seed, parallel } => {
            let opts = RunOptions { mode, scale, until, parallel: parallel.then_some(true) };
            cmd_run(&config, opts, out, seed)
        }
        Command::Generate { spec, seed, hours, out } => cmd_generate(spec.as_deref(), seed, hours, &out),
        Command::Report { log, out, name, from, to } => cmd_report(&log, &out, &name, from, to),
        Command::Validate { config } => cmd_validate(&config),
        Command::Inject { addr, file } => cmd_inject(&addr, file.as_deref()),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(Failure::config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
        if let Some(spec) = cfg.dataset.synthetic.as_mut() {
            spec.seed = seed;
        }
    }
    Ok(cfg)
}

fn cmd_run(config: &Path, opts: RunOptions, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let out_dir = out.or_else(|| std::env::var_os("HABSIM_OUT").map(PathBuf::from)).unwrap_or_else(|| cfg.output_dir());
    let assembly = assemble(&cfg).map_err(RunError::Config)?;
    let mode = opts.mode.unwrap_or(cfg.clock.mode);
    let injector = if mode == Mode::Hybrid {
        let (tx, rx) = mpsc::channel();
        start_listener(&cfg.clock.listen, assembly.router(), tx).map_err(Failure::runtime)?;
        Some(rx)
    } else {
        None
    };
    let outcome = run_assembly(&cfg, assembly, &opts, injector)?;
    let files = write_outputs(&cfg, &outcome, &out_dir).map_err(Failure::runtime)?;
    let r = &outcome.report;
    println!(
        "finished at {} after {} events ({} injected, {} rejected)",
        outcome.epoch.at(r.final_time),
        r.event_count,
        r.injections_accepted,
        r.injections_rejected
    );
    println!("fog log:   {} ({} events)", files.fog_log.display(), outcome.fog_log.len());
    println!("cloud log: {} ({} records)", files.cloud_log.display(), outcome.cloud.len());
    for f in files.report.files() {
        println!("report:    {}", f.display());
    }
    Ok(())
}

/// Forwards event lines to the coordinator. Lines that cannot be parsed or
/// routed are reported and skipped.
fn forward_lines<R: BufRead>(reader: R, router: &InjectionRouter, tx: &Sender<Injection<Event>>) {
    for (n, line) in reader.lines().enumerate() {
        let Ok(line) = line else { break };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_event_line_at(line, n + 1).map_err(|e| e.to_string()).and_then(|e| router.route(e)) {
            Ok(inj) => {
                if tx.send(inj).is_err() {
                    return;
                }
            }
            Err(e) => log::warn!("ignored injected line: {e}"),
        }
    }
}

fn start_listener(listen: &str, router: InjectionRouter, tx: Sender<Injection<Event>>) -> Result<(), String> {
    if listen == "stdin" {
        thread::spawn(move || forward_lines(io::stdin().lock(), &router, &tx));
        return Ok(());
    }
    let listener = TcpListener::bind(listen).map_err(|e| format!("cannot listen on {listen}: {e}"))?;
    eprintln!("habsim: accepting injected events on {listen}");
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            forward_lines(BufReader::new(stream), &router, &tx);
        }
    });
    Ok(())
}

fn cmd_generate(spec: Option<&Path>, seed: Option<u64>, hours: Option<u32>, out: &Path) -> Result<(), Failure> {
    let mut spec: SyntheticSpec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(h) = hours {
        spec.hours = h;
    }
    let dataset = generate_synthetic_scenario(&spec).map_err(|e| Failure::config(e.to_string()))?;
    let files = write_dataset(&dataset, out).map_err(Failure::runtime)?;
    println!("wrote {} water records to {}", dataset.water.len(), files.water.display());
    Ok(())
}

fn cmd_report(log: &Path, out: &Path, name: &str, from: Option<String>, to: Option<String>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(log).map_err(|e| Failure::config(format!("cannot read {}: {e}", log.display())))?;
    let mut events = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        events.push(parse_event_line_at(line, n + 1).map_err(|e| Failure::config(format!("{}: {e}", log.display())))?);
    }
    let parse = |s: Option<String>| s.map(|s| parse_timestamp(&s)).transpose().map_err(Failure::config);
    let window = ReportWindow { from: parse(from)?, to: parse(to)? };
    let bundle = build_report(&events, window, name, out).map_err(Failure::runtime)?;
    if let Some(notice) = &bundle.notice {
        println!("{notice}");
    }
    for f in bundle.files() {
        println!("report: {}", f.display());
    }
    Ok(())
}

fn cmd_validate(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config).map_err(Failure::config)?;
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Failure::config(format!("invalid configuration:\n  {}", problems.join("\n  "))));
    }
    println!("{}: ok", config.display());
    Ok(())
}

fn cmd_inject(addr: &str, file: Option<&Path>) -> Result<(), Failure> {
    let text = match file {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?,
        None => io::read_to_string(io::stdin()).map_err(|e| Failure::runtime(e.to_string()))?,
    };
    let mut lines = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let event = parse_event_line_at(line, n + 1).map_err(|e| Failure::config(e.to_string()))?;
        lines.push(event.to_string());
    }
    let mut stream = TcpStream::connect(addr).map_err(|e| Failure::runtime(format!("cannot connect to {addr}: {e}")))?;
    for l in &lines {
        writeln!(stream, "{l}").map_err(|e| Failure::runtime(e.to_string()))?;
    }
    println!("sent {} event(s) to {addr}", lines.len());
    Ok(())
}
