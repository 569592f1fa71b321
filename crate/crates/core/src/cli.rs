//! Command-line front end. Exit codes: 0 when the command succeeds or the
//! property holds, 1 when a property is violated, 2 on usage, parse or
//! validation errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::checker::oracle::cross_check;
use crate::checker::{reasonable_envs, Checker, Mode, TemporalOp};
use crate::circuit::{
    compose, derive_deadlock_formula, emit_smt, fullness_projection, parse_netlist, Deadlock,
    FullnessProjection, Netlist,
};
use crate::equations::{parse_condition, verify_condition};
use crate::labeling::{check_unambiguous, compute_block_idle};
use crate::library::{self, parse_primitive, PrimitiveSpec};
use crate::report::{
    render, ConditionRecord, Format, LabelsRecord, QueryRecord, Record, ValidationRecord,
};
use crate::xdi::{Environment, XdiMachine};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Caps the worker threads used for environment sweeps.
pub const THREADS_VAR: &str = "XDI_CHECK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "xdi-check", version, about = "Blocking/idling checks for handshake primitives and circuits")]
pub struct Cli {
    /// Emit a JSON array instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Run single-threaded and omit timings, for byte-identical output.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structural well-formedness of a machine.
    Validate {
        file: PathBuf,
        /// Print the machine as a Graphviz digraph instead of the report.
        #[arg(long)]
        emit_dot: bool,
    },
    /// Blocking and idling states of a handshake.
    Labels {
        file: PathBuf,
        #[arg(long)]
        handshake: String,
    },
    /// List the environments (sets of stable input wires) of a machine.
    Envs { file: PathBuf },
    /// Evaluate one G or F G query.
    Query {
        file: PathBuf,
        #[arg(long)]
        handshake: String,
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        op: TemporalOp,
        /// Stable wires, e.g. `a.R,b.R`; empty for the live environment.
        #[arg(long, default_value = "")]
        env: String,
        #[arg(long)]
        start: Option<String>,
    },
    /// Verify a condition in every environment.
    Check {
        file: PathBuf,
        #[arg(long)]
        condition: String,
    },
    /// Verify the conditions shipped with primitive files (default: the
    /// built-in library).
    CheckLibrary { files: Vec<PathBuf> },
    /// Cross-check the checker against bounded trace enumeration.
    OracleCheck {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Trace length bound; defaults to the number of states plus one.
        #[arg(long)]
        bound: Option<usize>,
    },
    /// Search a circuit for deadlocks and solve its deadlock formulas.
    Deadlock {
        file: PathBuf,
        /// Only derive the formula for this channel.
        #[arg(long)]
        channel: Option<String>,
        /// Write the channel's formula as SMT-LIB (requires --channel).
        #[arg(long)]
        emit_smt: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("writing output: {0}")]
    Io(#[from] io::Error),
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let threads = if cli.deterministic {
        Some(1)
    } else {
        std::env::var(THREADS_VAR).ok().and_then(|v| v.trim().parse().ok())
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    // Output is buffered so that a failing command prints nothing partial.
    let mut buf = Vec::new();
    let result = match builder.build() {
        Ok(pool) => pool.install(|| execute(&cli, &mut buf)),
        Err(e) => Err(CliError::Usage(format!("cannot start worker threads: {e}"))),
    };
    match result.and_then(|code| {
        out.write_all(&buf)?;
        Ok(code)
    }) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn load_primitive(path: &Path) -> Result<PrimitiveSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(path, e))?;
    parse_primitive(&text).map_err(|e| input_error(path, e))
}

/// Loads a machine and rejects it unless it is well formed.
fn load_valid(path: &Path) -> Result<XdiMachine, CliError> {
    let m = load_primitive(path)?.machine;
    let report = m.validate();
    if !report.is_valid() {
        return Err(input_error(path, format!("invalid machine: {report}")));
    }
    Ok(m)
}

fn require_handshake(m: &XdiMachine, h: &str) -> Result<(), CliError> {
    if m.has_handshake(h) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "machine `{}` has no handshake `{h}` (handshakes: {})",
            m.name(),
            m.handshakes().join(", ")
        )))
    }
}

fn emit<T: Record>(out: &mut dyn Write, items: &[T], format: Format) -> Result<(), CliError> {
    out.write_all(render(items, format).as_bytes())?;
    Ok(())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let format = if cli.json { Format::Json } else { Format::Text };
    match &cli.command {
        Command::Validate { file, emit_dot } => {
            let m = load_primitive(file)?.machine;
            let report = m.validate();
            if *emit_dot {
                out.write_all(m.to_dot().as_bytes())?;
            } else {
                let rec = ValidationRecord {
                    machine: m.name().to_string(),
                    valid: report.is_valid(),
                    violations: report.violations.iter().map(|v| v.to_string()).collect(),
                };
                emit(out, &[rec], format)?;
            }
            Ok(if report.is_valid() { EXIT_OK } else { EXIT_ERROR })
        }
        Command::Labels { file, handshake } => {
            let m = load_valid(file)?;
            require_handshake(&m, handshake)?;
            let amb = check_unambiguous(&m, handshake).map_err(|e| input_error(file, e))?;
            let (blocking, idling) = compute_block_idle(&m, handshake)
                .map(|l| l.partition(&m))
                .unwrap_or_default();
            let rec = LabelsRecord {
                machine: m.name().to_string(),
                handshake: handshake.clone(),
                blocking,
                idling,
                ambiguous: amb.ambiguous,
                conflicts: if amb.ambiguous { vec![amb.to_string()] } else { Vec::new() },
            };
            emit(out, &[rec], format)?;
            Ok(if amb.ambiguous { EXIT_ERROR } else { EXIT_OK })
        }
        Command::Envs { file } => {
            let m = load_valid(file)?;
            emit(out, &reasonable_envs(&m), format)?;
            Ok(EXIT_OK)
        }
        Command::Query {
            file,
            handshake,
            mode,
            op,
            env,
            start,
        } => {
            let m = load_valid(file)?;
            require_handshake(&m, handshake)?;
            let env: Environment = env
                .parse()
                .map_err(|e| CliError::Usage(format!("--env: {e}")))?;
            let checker = Checker::new(&m);
            let q = checker
                .query(handshake, *mode, &env, start.as_deref())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let r = checker.check(*op, &q).map_err(|e| input_error(file, e))?;
            let holds = r.holds;
            emit(out, &[QueryRecord::new(handshake, *mode, *op, &env, r)], format)?;
            Ok(if holds { EXIT_OK } else { EXIT_VIOLATED })
        }
        Command::Check { file, condition } => {
            let m = load_valid(file)?;
            let c = parse_condition(condition)
                .map_err(|e| CliError::Usage(format!("--condition: {e}")))?;
            let v = verify_condition(&c, &m).map_err(|e| CliError::Usage(e.to_string()))?;
            emit(out, &v.per_env, format)?;
            if format == Format::Text {
                if v.holds_overall {
                    writeln!(out, "holds in all {} environments", v.per_env.len())?;
                } else {
                    writeln!(
                        out,
                        "fails in {} of {} environments",
                        v.failing_envs.len(),
                        v.per_env.len()
                    )?;
                }
            }
            Ok(if v.holds_overall { EXIT_OK } else { EXIT_VIOLATED })
        }
        Command::CheckLibrary { files } => {
            let specs = if files.is_empty() {
                library::builtin_library()
            } else {
                files.iter().map(|f| load_primitive(f)).collect::<Result<_, _>>()?
            };
            let mut records = Vec::new();
            for spec in &specs {
                for nc in &spec.conditions {
                    let v = verify_condition(&nc.condition, &spec.machine).map_err(|e| {
                        CliError::Usage(format!("{}.{}: {e}", spec.name, nc.name))
                    })?;
                    records.push(ConditionRecord {
                        primitive: spec.name.clone(),
                        name: nc.name.clone(),
                        condition: nc.text.clone(),
                        holds: v.holds_overall,
                        environments: v.per_env.len(),
                        failing_envs: v.failing_envs.into_iter().map(|e| e.env).collect(),
                    });
                }
            }
            emit(out, &records, format)?;
            let ok = records.iter().all(|r| r.holds);
            Ok(if ok { EXIT_OK } else { EXIT_VIOLATED })
        }
        Command::OracleCheck { files, bound } => {
            let started = Instant::now();
            let mut summaries = Vec::new();
            for f in files {
                let m = load_valid(f)?;
                summaries.push(cross_check(&m, *bound).map_err(|e| input_error(f, e))?);
            }
            emit(out, &summaries, format)?;
            if format == Format::Text && !cli.deterministic {
                writeln!(out, "elapsed: {} ms", started.elapsed().as_millis())?;
            }
            let ok = summaries.iter().all(|s| s.all_agree());
            Ok(if ok { EXIT_OK } else { EXIT_VIOLATED })
        }
        Command::Deadlock {
            file,
            channel,
            emit_smt: smt_path,
        } => {
            let started = Instant::now();
            let text = std::fs::read_to_string(file).map_err(|e| input_error(file, e))?;
            let n = parse_netlist(&text).map_err(|e| input_error(file, e))?;
            if smt_path.is_some() && channel.is_none() {
                return Err(CliError::Usage("--emit-smt requires --channel".into()));
            }
            let report = deadlock_report(&n, channel.as_deref(), file)?;
            if let (Some(path), Some(ch)) = (smt_path, channel) {
                let di = derive_deadlock_formula(&n, ch).map_err(|e| input_error(file, e))?;
                std::fs::write(path, emit_smt(&di)).map_err(|e| input_error(path, e))?;
            }
            let deadlocked = report.deadlock.is_some()
                || report.formulas.iter().any(|f| f.satisfiable == Some(true));
            emit(out, &[report], format)?;
            if format == Format::Text && !cli.deterministic {
                writeln!(out, "elapsed: {} ms", started.elapsed().as_millis())?;
            }
            Ok(if deadlocked { EXIT_VIOLATED } else { EXIT_OK })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FormulaRecord {
    pub target: String,
    pub variables: usize,
    pub constraints: usize,
    /// Absent when the instance is too large to enumerate.
    pub satisfiable: Option<bool>,
    pub model: Option<BTreeMap<String, bool>>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeadlockReport {
    pub circuit: String,
    pub product_states: usize,
    pub deadlock: Option<Deadlock>,
    pub fullness: FullnessProjection,
    pub formulas: Vec<FormulaRecord>,
}

fn deadlock_report(n: &Netlist, channel: Option<&str>, file: &Path) -> Result<DeadlockReport, CliError> {
    let p = compose(n).map_err(|e| input_error(file, e))?;
    let deadlock = p.find_deadlock().map_err(|e| input_error(file, e))?;
    let targets: Vec<String> = match channel {
        Some(ch) => {
            if !n.link_names().iter().any(|l| l == ch) {
                return Err(CliError::Usage(format!(
                    "circuit `{}` has no channel or external handshake `{ch}`",
                    n.name
                )));
            }
            vec![ch.to_string()]
        }
        None => n.channels.iter().map(|c| c.name.clone()).collect(),
    };
    let mut formulas = Vec::new();
    for t in targets {
        let di = derive_deadlock_formula(n, &t).map_err(|e| input_error(file, e))?;
        let rec = match di.solve() {
            Ok(model) => FormulaRecord {
                target: t,
                variables: di.variables.len(),
                constraints: di.constraints.len(),
                satisfiable: Some(model.is_some()),
                model,
                skipped: None,
            },
            Err(e) if channel.is_none() => FormulaRecord {
                target: t,
                variables: di.variables.len(),
                constraints: di.constraints.len(),
                satisfiable: None,
                model: None,
                skipped: Some(e.to_string()),
            },
            Err(e) => return Err(input_error(file, e)),
        };
        formulas.push(rec);
    }
    Ok(DeadlockReport {
        circuit: n.name.clone(),
        product_states: p.len(),
        deadlock,
        fullness: fullness_projection(&p),
        formulas,
    })
}

impl Record for DeadlockReport {
    fn text(&self) -> String {
        let mut s = format!("circuit {}: {} reachable states\n", self.circuit, self.product_states);
        match &self.deadlock {
            None => s.push_str("no deadlock\n"),
            Some(d) => {
                s.push_str(&format!("deadlock: {}\n", d.kind));
                s.push_str(&format!("  state: {}\n", d.state));
                s.push_str(&format!("  moves: {}\n", d.moves.join(" ")));
            }
        }
        if !self.fullness.storages.is_empty() {
            let vectors: Vec<String> = self
                .fullness
                .vectors
                .iter()
                .map(|v| v.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect();
            s.push_str(&format!(
                "fullness of {} over {} states: {}\n",
                self.fullness.storages.join(" "),
                if self.fullness.settled_only { "settled" } else { "all reachable" },
                vectors.join(" ")
            ));
        }
        for f in &self.formulas {
            match (f.satisfiable, &f.skipped) {
                (Some(sat), _) => {
                    s.push_str(&format!(
                        "formula for {}: {} ({} variables, {} constraints)\n",
                        f.target,
                        if sat { "sat" } else { "unsat" },
                        f.variables,
                        f.constraints
                    ));
                    if let Some(m) = &f.model {
                        let on: Vec<&str> = m
                            .iter()
                            .filter(|(_, &v)| v)
                            .map(|(k, _)| k.as_str())
                            .collect();
                        s.push_str(&format!("  true in model: {}\n", on.join(" ")));
                    }
                }
                (None, Some(why)) => {
                    s.push_str(&format!("formula for {}: skipped, {why}\n", f.target));
                }
                (None, None) => {}
            }
        }
        s
    }
}
