use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedsim_core::diagram::{self, DiagramFormat};
use fedsim_core::flow::{run_flow, FlowSpec, FlowTrace, Mode, Scenario, ScenarioReport, SimState};
use fedsim_core::suites::{run_suite, SuiteOptions, SUITES};
use fedsim_core::topology::{load_topology, validate_invariants};
use fedsim_core::{par, Delivery, EntityId, Technology};

const SCENARIO_DIR_VAR: &str = "FEDSIM_SCENARIO_DIR";

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Federated AAI simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a topology or scenario file against the structural invariants.
    Validate { path: PathBuf },
    /// Run a scenario and compare its traces with the expected skeletons.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: Option<String>,
        /// Run every scenario in the scenario directory.
        #[arg(long, conflicts_with = "scenario")]
        all: bool,
        /// Trace output: a file, or a directory with --all.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one ad-hoc login flow over a topology.
    Flow {
        topology: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        sp: EntityId,
        #[arg(long)]
        tech: Technology,
        #[arg(long)]
        provider: EntityId,
        #[arg(long, default_value = "web")]
        mode: Mode,
        #[arg(long, default_value = "push")]
        attr_mode: Delivery,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a trace file as a sequence diagram.
    Diagram {
        trace: PathBuf,
        #[arg(long, default_value = "text")]
        format: DiagramFormat,
    },
    /// List the scenarios in the scenario directory.
    Scenarios,
    /// Run a property suite (or "all").
    Check {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Registry snapshot to audit with the ids suite.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
}

/// Failure carrying its exit code: 1 for domain failures, 2 for usage and
/// load errors.
struct Failure(u8, String);

fn usage(msg: impl ToString) -> Failure {
    Failure(2, msg.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn scenario_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(SCENARIO_DIR_VAR) {
        return PathBuf::from(dir);
    }
    let local = PathBuf::from("scenarios");
    if local.is_dir() {
        return local;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn resolve_scenario(arg: &str) -> PathBuf {
    let direct = PathBuf::from(arg);
    if direct.is_file() {
        return direct;
    }
    scenario_dir().join(format!("{arg}.toml"))
}

fn load_all() -> Result<Vec<Scenario>, Failure> {
    scenario_files(&scenario_dir())?.iter().map(|p| load_scenario(p)).collect()
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let t = load_topology(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let findings = validate_invariants(&t);
    if findings.is_empty() {
        println!("{}: ok", t.name);
        return Ok(());
    }
    for f in &findings {
        println!("{f}");
    }
    Err(Failure(1, format!("{} finding(s)", findings.len())))
}

fn cmd_run(scenario: Option<String>, all: bool, trace: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let scenarios = match (scenario, all) {
        (_, true) => load_all()?,
        (Some(arg), false) => vec![load_scenario(&resolve_scenario(&arg))?],
        (None, false) => return Err(usage("run needs a scenario or --all")),
    };
    let reports: Vec<ScenarioReport> = par::run_all(&scenarios, seed)
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(usage)?;
    if let Some(out) = &trace {
        if all {
            fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
            for r in &reports {
                write(&out.join(format!("{}.jsonl", r.name)), &r.trace_jsonl())?;
            }
        } else {
            write(out, &reports[0].trace_jsonl())?;
        }
    }
    let mut failed = 0;
    for r in &reports {
        print!("{}", r.render());
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        return Err(Failure(1, format!("{failed} scenario(s) did not match expectations")));
    }
    Ok(())
}

fn cmd_flow(topology: &Path, spec: FlowSpec, trace: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let mut t = load_topology(&read(topology)?).map_err(|e| usage(format!("{}: {e}", topology.display())))?;
    if let Some(seed) = seed {
        t = t.with_seed(seed).map_err(usage)?;
    }
    for id in [&spec.target_sp, &spec.provider] {
        if !t.entities.contains_key(id) {
            return Err(usage(format!("unknown entity {id}")));
        }
    }
    let mut st = SimState::new(&t).map_err(usage)?;
    let result = run_flow(&t, &mut st, &spec, 0);
    if let Some(out) = &trace {
        write(out, &result.trace.to_jsonl())?;
    }
    print!("{}", diagram::render_text(&result.trace));
    println!("{spec} => {}", result.decision);
    if result.decision.is_granted() {
        Ok(())
    } else {
        Err(Failure(1, "access denied".into()))
    }
}

fn cmd_diagram(path: &Path, format: DiagramFormat) -> Result<(), Failure> {
    let trace = FlowTrace::from_jsonl(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    print!("{}", diagram::render(&trace, format));
    Ok(())
}

fn cmd_scenarios() -> Result<(), Failure> {
    for path in scenario_files(&scenario_dir())? {
        let s = load_scenario(&path)?;
        println!("{:<14} {:>2} flows  {}", s.name, s.flows.len(), s.topology.description);
    }
    Ok(())
}

fn cmd_check(suite: &str, seed: u64, registry: Option<PathBuf>) -> Result<(), Failure> {
    let names: Vec<&str> = match suite {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => return Err(usage(format!("unknown suite `{other}` (expected all, {})", SUITES.join(", ")))),
    };
    let needs_scenarios = names.iter().any(|n| matches!(*n, "trust" | "policy" | "determinism"));
    let opts = SuiteOptions {
        seed,
        scenarios: if needs_scenarios { load_all()? } else { Vec::new() },
        registry_snapshot: registry.as_deref().map(read).transpose()?,
    };
    let mut failed = Vec::new();
    for name in names {
        let report = run_suite(name, &opts).map_err(usage)?;
        print!("{}", report.render());
        if !report.passed() {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure(1, format!("failing suite(s): {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { path } => cmd_validate(&path),
        Command::Run {
            scenario,
            all,
            trace,
            seed,
        } => cmd_run(scenario, all, trace, seed),
        Command::Flow {
            topology,
            user,
            sp,
            tech,
            provider,
            mode,
            attr_mode,
            trace,
            seed,
        } => {
            let spec = FlowSpec {
                user,
                target_sp: sp,
                tech,
                provider,
                mode,
                attr_mode,
            };
            cmd_flow(&topology, spec, trace, seed)
        }
        Command::Diagram { trace, format } => cmd_diagram(&trace, format),
        Command::Scenarios => cmd_scenarios(),
        Command::Check { suite, seed, registry } => cmd_check(&suite, seed, registry),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("fedsim: {msg}");
            ExitCode::from(code)
        }
    }
}
