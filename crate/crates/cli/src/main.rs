mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use gasbound_core::evm::{self, State};
use gasbound_core::explorer::replay::ReplayError;
use gasbound_core::explorer::shrink::ShrinkError;
use gasbound_core::explorer::{explore, fuzz, replay, shrink, Report, Trace};
use gasbound_core::U256;
use serde::Serialize;

use config::RunFlags;

const CLEAN: u8 = 0;
const ERROR: u8 = 1;
const VIOLATIONS: u8 = 2;
const DIVERGED: u8 = 3;

/// Gas-bounded exploration of re-entrant contract models.
#[derive(Parser)]
#[command(name = "gasbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustively explore every transaction sequence within the bounds.
    Explore(RunFlags),
    /// Run seeded random transaction sequences.
    Fuzz(RunFlags),
    /// Re-execute a trace (or every trace in a report) and check it matches.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize a violating trace.
    Shrink {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Evm(EvmCommand),
}

#[derive(Subcommand)]
enum EvmCommand {
    /// Run bytecode and print one line per step.
    Run {
        /// Bytecode as hex.
        #[arg(long)]
        code: String,
        #[arg(long)]
        gas: u64,
        /// Step limit; defaults to gas + 1, enough to halt.
        #[arg(long)]
        steps: Option<u64>,
        /// Initial storage slot, as key=value.
        #[arg(long = "storage", value_parser = parse_slot)]
        storage: Vec<(U256, U256)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the increment contract on boundary and random slot values.
    CheckInc {
        #[arg(long, default_value_t = 1000)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_slot(s: &str) -> Result<(U256, U256), String> {
    let (k, v) = s.split_once('=').ok_or("expected key=value")?;
    let k = k.parse().map_err(|e| format!("key `{k}`: {e}"))?;
    let v = v.parse().map_err(|e| format!("value `{v}`: {e}"))?;
    Ok((k, v))
}

fn write_out(path: Option<&Path>, json: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn finish_report(report: &Report, out: Option<&Path>) -> Result<u8> {
    write_out(out, &report.to_json())?;
    println!("{}", report.summary());
    Ok(if report.violation_count > 0 {
        VIOLATIONS
    } else if report.complete {
        CLEAN
    } else {
        ERROR
    })
}

/// A file holding one trace, or a report whose example traces are used.
fn load_traces(path: &Path) -> Result<Vec<Trace>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(t) = Trace::from_json(&text) {
        return Ok(vec![t]);
    }
    let report: Report = serde_json::from_str(&text)
        .with_context(|| format!("{} is neither a trace nor a report", path.display()))?;
    Ok(report.traces().cloned().collect())
}

fn run_replay(path: &Path, out: Option<&Path>) -> Result<u8> {
    let traces = load_traces(path)?;
    let mut reports = Vec::new();
    let mut code = CLEAN;
    for (i, t) in traces.iter().enumerate() {
        match replay(t) {
            Ok(r) => {
                let verdict = match &r.violation {
                    Some(v) => {
                        code = code.max(VIOLATIONS);
                        format!("violation: {}", v.message)
                    }
                    None => "no violation".to_string(),
                };
                println!(
                    "trace {i}: replayed {} transactions, {} frames, state {}; {verdict}",
                    r.transactions, r.frames, r.final_state_hash
                );
                reports.push(r);
            }
            Err(ReplayError::Divergence(msg)) => {
                println!("trace {i}: DIVERGED: {msg}");
                code = DIVERGED;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let json = if reports.len() == 1 && traces.len() == 1 {
        reports[0].to_json()
    } else {
        serde_json::to_string_pretty(&reports)? + "\n"
    };
    write_out(out, &json)?;
    Ok(code)
}

fn run_shrink(path: &Path, out: Option<&Path>) -> Result<u8> {
    let traces = load_traces(path)?;
    let t = traces.first().ok_or_else(|| anyhow!("{} holds no traces", path.display()))?;
    let small = match shrink(t) {
        Ok(s) => s,
        Err(ShrinkError::NotAViolation) => return Err(anyhow!("trace does not replay to a violation")),
        Err(e) => return Err(e.into()),
    };
    write_out(out, &small.to_json())?;
    let v = small.violation.as_ref().map(|v| v.message.as_str()).unwrap_or("");
    println!(
        "shrunk {} transactions / {} choices to {} / {}: {v}",
        t.transactions.len(),
        t.choices.len(),
        small.transactions.len(),
        small.choices.len()
    );
    Ok(VIOLATIONS)
}

#[derive(Serialize)]
struct EvmRun {
    steps: usize,
    trace: Vec<String>,
    fin: String,
    gas_left: Option<u64>,
    data: Option<String>,
    storage: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn run_evm(code: &str, gas: u64, steps: Option<u64>, storage: Vec<(U256, U256)>, out: Option<&Path>) -> Result<u8> {
    let code = evm::parse_hex(code).map_err(|e| anyhow!(e))?;
    let st = evm::init(code, gas, storage.into_iter().collect());
    let (fin, trace) = evm::execute_traced(&st, steps.unwrap_or(gas.saturating_add(1)));
    for line in &trace {
        println!("{line}");
    }
    println!("{}", fin.label());
    let (gas_left, data, slots) = match &fin {
        State::Ok(m) => (Some(m.gas), None, Some(&m.storage)),
        State::Returns { gas, data, storage } => (Some(*gas), Some(hex(data)), Some(storage)),
        State::Reverts { gas, data } => (Some(*gas), Some(hex(data)), None),
        State::Invalid(_) => (None, None, None),
    };
    let storage: BTreeMap<String, String> =
        slots.into_iter().flatten().map(|(k, v)| (format!("{k:#x}"), format!("{v:#x}"))).collect();
    for (k, v) in &storage {
        println!("storage[{k}] = {v}");
    }
    let report = EvmRun { steps: trace.len(), trace, fin: fin.label(), gas_left, data, storage };
    write_out(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(CLEAN)
}

fn run_check_inc(random: usize, seed: u64) -> u8 {
    let inputs = evm::inc_inputs(random, seed);
    let failures: Vec<String> = inputs.iter().filter_map(|&v| evm::check_inc(v).err()).collect();
    for f in &failures {
        println!("FAIL {f}");
    }
    println!("increment contract: {} of {} initial values ok", inputs.len() - failures.len(), inputs.len());
    if failures.is_empty() {
        CLEAN
    } else {
        VIOLATIONS
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Explore(flags) => {
            let r = flags.resolve()?;
            let report = explore(&r.explore(), r.workers)?;
            finish_report(&report, r.out.as_deref())
        }
        Command::Fuzz(flags) => {
            let r = flags.resolve()?;
            let report = fuzz(&r.fuzz(), r.workers)?;
            finish_report(&report, r.out.as_deref())
        }
        Command::Replay { trace, out } => run_replay(&trace, out.as_deref()),
        Command::Shrink { trace, out } => run_shrink(&trace, out.as_deref()),
        Command::Evm(EvmCommand::Run { code, gas, steps, storage, out }) => {
            run_evm(&code, gas, steps, storage, out.as_deref())
        }
        Command::Evm(EvmCommand::CheckInc { random, seed }) => Ok(run_check_inc(random, seed)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ERROR } else { CLEAN };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ERROR)
        }
    }
}
