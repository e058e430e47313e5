use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use echo_testbed::netsim::{read_jsonl, write_jsonl};
use echo_testbed::scenario::{
    effective_seed, evaluate_all, explain, list_scenarios, parse_assertions, run, Scenario,
    ScenarioError, Verdict, SEED_ENV,
};

macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "echo-testbed",
    version,
    about = "Deterministic Echo protocol testbed"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a built-in scenario or a scenario file and check its assertions.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the JSON-lines trace (default: <name>.trace.jsonl).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// List built-in scenarios.
    List,
    /// Describe a built-in scenario.
    Explain { name: String },
    /// Evaluate an assertion file against a trace file.
    Assert { trace: PathBuf, assertions: PathBuf },
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        let mark = if v.pass { "PASS" } else { "FAIL" };
        match v.first_failure {
            Some(i) if !v.pass => out!("{mark} {}: {} (first failure at {i})", v.name, v.detail),
            _ => out!("{mark} {}: {}", v.name, v.detail),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_USAGE)
}

fn cmd_run(name: &str, seed: Option<u64>, trace: Option<PathBuf>) -> ExitCode {
    let scenario = match Scenario::load(name) {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    let env = std::env::var(SEED_ENV).ok();
    let seed = match effective_seed(seed, env.as_deref(), &scenario) {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    let report = match run(&scenario, seed) {
        Ok(r) => r,
        Err(e @ ScenarioError::Run(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAIL);
        }
        Err(e) => return usage(e),
    };
    let path = trace.unwrap_or_else(|| PathBuf::from(format!("{}.trace.jsonl", scenario.name)));
    let written = File::create(&path).and_then(|f| {
        let mut w = BufWriter::new(f);
        write_jsonl(&report.trace, &mut w)?;
        w.flush()
    });
    if let Err(e) = written {
        return usage(format!("cannot write {}: {e}", path.display()));
    }
    out!(
        "scenario {} seed {} events {} trace {}",
        report.scenario,
        report.seed,
        report.events,
        path.display()
    );
    print_verdicts(&report.verdicts);
    if report.passed() {
        out!("ok");
        ExitCode::SUCCESS
    } else {
        out!("FAILED");
        ExitCode::from(EXIT_FAIL)
    }
}

fn cmd_assert(trace: PathBuf, assertions: PathBuf) -> ExitCode {
    let events = match File::open(&trace).and_then(|f| read_jsonl(BufReader::new(f))) {
        Ok(t) => t,
        Err(e) => return usage(format!("{}: {e}", trace.display())),
    };
    let list = match std::fs::read_to_string(&assertions)
        .map_err(|e| e.to_string())
        .and_then(|t| parse_assertions(&t).map_err(|e| e.to_string()))
    {
        Ok(l) => l,
        Err(e) => return usage(format!("{}: {e}", assertions.display())),
    };
    let verdicts = match evaluate_all(&events, &list) {
        Ok(v) => v,
        Err(e) => return usage(e),
    };
    print_verdicts(&verdicts);
    if verdicts.iter().all(|v| v.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            trace,
        } => cmd_run(&scenario, seed, trace),
        Cmd::List => {
            for n in list_scenarios() {
                out!("{n}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Explain { name } => match explain(&name) {
            Ok(text) => {
                let _ = write!(std::io::stdout(), "{text}");
                ExitCode::SUCCESS
            }
            Err(e) => usage(e),
        },
        Cmd::Assert { trace, assertions } => cmd_assert(trace, assertions),
    }
}
