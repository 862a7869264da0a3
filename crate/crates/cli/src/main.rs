//! `intent-orch` — run scripted relocation experiments on the simulated
//! cluster and inspect the inputs and outputs.
//!
//! Exit codes: 0 on success, 2 on input/parse errors, 3 on runtime
//! failures. Set `INTENT_ORCH_LOG` (error/warn/info/debug) for log
//! verbosity.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use intent_orch_core::docfmt::ParseError;
use intent_orch_core::intent::{
    parse_deployment, parse_intent, parse_orchestrator_config, BackendKind,
};
use intent_orch_core::metrics::exposition::parse_exposition;
use intent_orch_core::metrics::probe::measure_rtt;
use intent_orch_core::report::render_svg;
use intent_orch_core::scenario::{
    parse_scenario, run_scenario, ExportFormat, RunOverrides, ScenarioError, Timeline,
};
use intent_orch_core::sim::parse_topology;

#[derive(Parser)]
#[command(
    name = "intent-orch",
    about = "Intent-driven application relocation on a simulated edge/cloud cluster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario and write the timeline and decision log.
    Run {
        /// Orchestrator configuration document.
        #[arg(long)]
        config: PathBuf,
        /// Intent document (service requirements).
        #[arg(long)]
        intent: PathBuf,
        /// App deployment document.
        #[arg(long)]
        deployment: PathBuf,
        /// Cluster topology document.
        #[arg(long)]
        topology: PathBuf,
        /// Scenario document (timed events).
        #[arg(long)]
        scenario: PathBuf,
        /// Timeline output path; the decision log lands next to it as
        /// `<out>.decisions.jsonl`.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the tick resolution.
        #[arg(long)]
        tick_ms: Option<u32>,
        /// Timeline format: csv or jsonl.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Parse input documents and report diagnostics, without running.
    Validate {
        /// Documents to check (type is auto-detected).
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Parse an exposition-format metrics file and print the samples as
    /// JSON lines.
    ParseMetrics { file: PathBuf },
    /// Measure the median TCP connect RTT to a host.
    Probe {
        host: String,
        port: u16,
        #[arg(long, default_value_t = 5)]
        runs: u32,
        #[arg(long, default_value_t = 1000)]
        timeout_ms: u64,
    },
    /// Render a timeline CSV as an SVG plot.
    Report {
        timeline: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

const EXIT_INPUT: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("INTENT_ORCH_LOG")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            intent,
            deployment,
            topology,
            scenario,
            out,
            seed,
            tick_ms,
            format,
        } => cmd_run(
            &config, &intent, &deployment, &topology, &scenario, &out, seed, tick_ms, &format,
        ),
        Command::Validate { paths } => cmd_validate(&paths),
        Command::ParseMetrics { file } => cmd_parse_metrics(&file),
        Command::Probe {
            host,
            port,
            runs,
            timeout_ms,
        } => cmd_probe(&host, port, runs, timeout_ms),
        Command::Report { timeline, out } => cmd_report(&timeline, &out),
    }
}

fn read_input(path: &Path) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_INPUT)
    })
}

fn parse_input<T>(
    path: &Path,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<T, ExitCode> {
    let text = read_input(path)?;
    parse(&text).map_err(|e| {
        // Syntax errors carry their line number in the display form.
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_INPUT)
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config_path: &Path,
    intent_path: &Path,
    deployment_path: &Path,
    topology_path: &Path,
    scenario_path: &Path,
    out: &Path,
    seed: Option<u64>,
    tick_ms: Option<u32>,
    format: &str,
) -> ExitCode {
    let format = match format.parse::<ExportFormat>() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let config = match parse_input(config_path, parse_orchestrator_config) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if config.backend_kind == BackendKind::External {
        eprintln!(
            "error: {}: backend_kind `external` is not driven by this binary; use `simulator`",
            config_path.display()
        );
        return ExitCode::from(EXIT_INPUT);
    }
    let intent = match parse_input(intent_path, parse_intent) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let deployment = match parse_input(deployment_path, parse_deployment) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let topology = match parse_input(topology_path, parse_topology) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let scenario = match parse_input(scenario_path, parse_scenario) {
        Ok(v) => v,
        Err(code) => return code,
    };

    let overrides = RunOverrides {
        seed,
        tick_ms: tick_ms.map(u64::from),
    };
    let (timeline, fatal) = match run_scenario(
        &scenario,
        &topology,
        &config,
        &intent,
        &deployment,
        overrides,
    ) {
        Ok(timeline) => (timeline, None),
        Err(ScenarioError::Parse(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
        Err(ScenarioError::Fatal { partial, source }) => (*partial, Some(source)),
    };

    for decision in &timeline.decisions {
        println!(
            "t={}ms {} ({})",
            decision.cycle_time_ms,
            decision.action.summary(),
            decision.reason
        );
    }
    println!(
        "placement sequence: {}",
        timeline.placement_sequence().join(" -> ")
    );

    if let Err(e) = fs::write(out, timeline.export(format)) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let decisions_path = decisions_path_for(out);
    if let Err(e) = fs::write(&decisions_path, timeline.decision_log()) {
        eprintln!("error: cannot write {}: {e}", decisions_path.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    println!("timeline written to {}", out.display());
    println!("decision log written to {}", decisions_path.display());

    if let Some(source) = fatal {
        eprintln!("error: {source} (partial timeline preserved)");
        return ExitCode::from(EXIT_RUNTIME);
    }
    ExitCode::SUCCESS
}

/// `timeline.csv` → `timeline.decisions.jsonl`.
fn decisions_path_for(out: &Path) -> PathBuf {
    out.with_extension("decisions.jsonl")
}

/// The known document types, tried in order during validation.
const DOCUMENT_KINDS: [&str; 5] = ["intent", "config", "deployment", "topology", "scenario"];

fn try_validate(text: &str) -> Result<&'static str, Vec<(&'static str, ParseError)>> {
    let mut failures = Vec::new();
    match parse_intent(text) {
        Ok(_) => return Ok("intent"),
        Err(e) => failures.push(("intent", e)),
    }
    match parse_orchestrator_config(text) {
        Ok(_) => return Ok("config"),
        Err(e) => failures.push(("config", e)),
    }
    match parse_deployment(text) {
        Ok(_) => return Ok("deployment"),
        Err(e) => failures.push(("deployment", e)),
    }
    match parse_topology(text) {
        Ok(_) => return Ok("topology"),
        Err(e) => failures.push(("topology", e)),
    }
    match parse_scenario(text) {
        Ok(_) => return Ok("scenario"),
        Err(e) => failures.push(("scenario", e)),
    }
    Err(failures)
}

fn cmd_validate(paths: &[PathBuf]) -> ExitCode {
    let mut all_ok = true;
    for path in paths {
        let text = match fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => {
                println!("{}: error: cannot read: {e}", path.display());
                all_ok = false;
                continue;
            }
        };
        match try_validate(&text) {
            Ok(kind) => println!("{}: ok ({kind})", path.display()),
            Err(failures) => {
                all_ok = false;
                // A syntax error means the document is unreadable in any
                // schema; report it once with its line. Otherwise list
                // why each schema rejected it.
                if let Some((_, syntax)) = failures.iter().find(|(_, e)| e.line().is_some()) {
                    println!("{}: error: {syntax}", path.display());
                } else {
                    println!(
                        "{}: error: not a valid document ({})",
                        path.display(),
                        DOCUMENT_KINDS.join("/")
                    );
                    for (kind, e) in failures {
                        println!("  as {kind}: {e}");
                    }
                }
            }
        }
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INPUT)
    }
}

fn cmd_parse_metrics(file: &Path) -> ExitCode {
    let bytes = match fs::read(file) {
        Ok(bytes) => bytes,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match parse_exposition(&bytes) {
        Ok(samples) => {
            for sample in samples {
                println!(
                    "{}",
                    serde_json::to_string(&sample).expect("samples serialize")
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}:{}: {}", file.display(), e.line, e.message);
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn cmd_probe(host: &str, port: u16, runs: u32, timeout_ms: u64) -> ExitCode {
    match measure_rtt(host, port, runs, timeout_ms) {
        Ok(median_ms) => {
            println!("{median_ms:.3}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_report(timeline_path: &Path, out: &Path) -> ExitCode {
    let text = match fs::read_to_string(timeline_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", timeline_path.display());
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let timeline = match Timeline::from_csv(&text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", timeline_path.display());
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let svg = match render_svg(&timeline) {
        Ok(svg) => svg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    if let Err(e) = fs::write(out, svg) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    println!("report written to {}", out.display());
    ExitCode::SUCCESS
}
