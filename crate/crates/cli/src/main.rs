use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use supcert_core::basis::{build_basis, gram_diagnostics, MuSpec};
use supcert_core::conditions::classify_region;
use supcert_core::io::{decode_ops, encode_ops, operators_from_plan_json, outcome_to_json, parse_problem, to_canonical_json};
use supcert_core::kraus::{plan, PlanOutcome};
use supcert_core::oracle::{exhaustive_condition_scan, verify_operators, verify_plan, GridSpec, SourceSpec};
use supcert_core::state::{check_maximal_range, maximal_state, MaximalSign};
use supcert_core::{Error, Region, DEFAULT_TOL};

const OK: u8 = 0;
const INPUT_ERROR: u8 = 1;
const NEGATIVE: u8 = 2;
const UNSUPPORTED: u8 = 3;

#[derive(Parser)]
#[command(name = "supcert", version, about = "Certify deterministic conversions between pure superposition states")]
struct Cli {
    /// Numerical tolerance.
    #[arg(long, global = true, env = "SUPCERT_TOL", default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Pretty-print JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Problem file holding {basis, psi, phi}.
    #[arg(required_unless_present = "batch", conflicts_with = "batch")]
    input: Option<PathBuf>,
    /// Run every *.json file of a directory, in filename order.
    #[arg(long)]
    batch: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the convertibility conditions. Exit 0 for region R1, 2 otherwise.
    Check(Inputs),
    /// Build and verify a transformation. Exit 2 on refusal, 3 on unsupported cases.
    Plan {
        #[command(flatten)]
        inputs: Inputs,
        /// Write the operators as a binary dump.
        #[arg(long, conflicts_with = "batch")]
        emit_ops: Option<PathBuf>,
    },
    /// Re-check a plan against its problem. Exit 0 iff every check passes.
    Verify {
        plan: PathBuf,
        input: PathBuf,
        /// Take the operator matrices from a binary dump instead of the plan.
        #[arg(long)]
        ops: Option<PathBuf>,
    },
    /// Print a maximal superposition state.
    Maximal {
        #[arg(long)]
        d: usize,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long, value_enum, default_value_t = SignArg::Plus)]
        sign: SignArg,
    },
    /// Print Gram matrix diagnostics. Exit 2 when the vectors are not independent.
    Gram {
        #[arg(long)]
        d: usize,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
    },
    /// Classify every pair of a direction grid.
    Scan {
        #[arg(long)]
        d: usize,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        /// "grid" or comma-separated source coefficients.
        #[arg(long, default_value = "grid", allow_hyphen_values = true)]
        source: String,
        /// Extra comma-separated target coefficients (repeatable).
        #[arg(long = "target", allow_hyphen_values = true)]
        targets: Vec<String>,
        /// Write one CSV row per pair.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
}

impl From<SignArg> for MaximalSign {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Plus => MaximalSign::Plus,
            SignArg::Minus => MaximalSign::Minus,
        }
    }
}

struct Reply {
    code: u8,
    body: Option<Value>,
    message: Option<String>,
}

impl Reply {
    fn json(code: u8, body: Value) -> Self {
        Reply { code, body: Some(body), message: None }
    }

    fn error(err: impl std::fmt::Display) -> Self {
        Reply { code: INPUT_ERROR, body: None, message: Some(format!("error: {err:#}")) }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn check(path: &Path, tol: f64) -> Reply {
    let problem = match read(path).map_err(|e| e.to_string()).and_then(|t| parse_problem(&t, tol).map_err(|e| e.to_string())) {
        Ok(p) => p,
        Err(e) => return Reply::error(e),
    };
    match classify_region(&problem.psi, &problem.phi, tol) {
        Ok(report) => {
            let code = if report.region == Region::R1 { OK } else { NEGATIVE };
            Reply::json(code, serde_json::to_value(&report).expect("report serializes"))
        }
        Err(e @ (Error::RankIncrease { .. } | Error::SupportMismatch | Error::UnsupportedCase(_))) => {
            Reply { code: NEGATIVE, body: Some(json!({"region": null, "message": e.to_string()})), message: Some(format!("error: {e}")) }
        }
        Err(e) => Reply::error(e),
    }
}

fn plan_one(path: &Path, tol: f64, emit_ops: Option<&Path>) -> Reply {
    let problem = match read(path).map_err(|e| e.to_string()).and_then(|t| parse_problem(&t, tol).map_err(|e| e.to_string())) {
        Ok(p) => p,
        Err(e) => return Reply::error(e),
    };
    let outcome = match plan(&problem.psi, &problem.phi, tol) {
        Ok(o) => o,
        Err(e @ Error::UnsupportedCase(_)) => {
            return Reply { code: UNSUPPORTED, body: Some(json!({"refused": true, "message": e.to_string()})), message: Some(format!("error: {e}")) }
        }
        Err(e @ (Error::RankIncrease { .. } | Error::SupportMismatch)) => {
            return Reply { code: NEGATIVE, body: Some(json!({"refused": true, "message": e.to_string()})), message: None }
        }
        Err(e) => return Reply::error(e),
    };
    match &outcome {
        PlanOutcome::Planned(p) => {
            let report = match verify_plan(&problem.psi, &problem.phi, p, tol) {
                Ok(r) => r,
                Err(e) => return Reply::error(e),
            };
            if let Some(out) = emit_ops {
                let written = encode_ops(&p.operator_set())
                    .map_err(anyhow::Error::from)
                    .and_then(|bytes| fs::write(out, bytes).with_context(|| format!("writing {}", out.display())));
                if let Err(e) = written {
                    return Reply::error(e);
                }
            }
            let code = if report.passed { OK } else { NEGATIVE };
            Reply::json(code, outcome_to_json(&outcome, Some(report.passed)))
        }
        PlanOutcome::Refused { .. } => Reply::json(NEGATIVE, outcome_to_json(&outcome, None)),
    }
}

fn verify(plan_path: &Path, input: &Path, ops: Option<&Path>, tol: f64) -> anyhow::Result<Reply> {
    let problem = parse_problem(&read(input)?, tol)?;
    let text = read(plan_path)?;
    let mut set = operators_from_plan_json(&text)?;
    let dim = serde_json::from_str::<Value>(&text)?.get("dim").and_then(Value::as_u64);
    if dim != Some(problem.psi.dim() as u64) {
        return Err(anyhow!("plan dimension {dim:?} does not match the problem dimension {}", problem.psi.dim()));
    }
    if let Some(path) = ops {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        set = set.with_dump(decode_ops(&bytes)?);
    }
    let report = verify_operators(&problem.psi, &problem.phi, &set, tol)?;
    let failures: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    let message = (!failures.is_empty()).then(|| format!("failed checks: {}", failures.join(", ")));
    let code = if report.passed { OK } else { NEGATIVE };
    Ok(Reply { code, body: Some(serde_json::to_value(&report)?), message })
}

fn maximal(d: usize, mu: f64, sign: SignArg, tol: f64) -> anyhow::Result<Reply> {
    check_maximal_range(d, mu, sign.into(), tol)?;
    let basis = Arc::new(build_basis(d, &MuSpec::Equal(mu), tol)?);
    let state = maximal_state(&basis, sign.into(), tol)?;
    Ok(Reply::json(OK, json!({"d": d, "mu": mu, "sign": sign.to_possible_value().map(|v| v.get_name().to_string()), "coeffs": state.coeffs()})))
}

fn gram(d: usize, mu: f64, tol: f64) -> anyhow::Result<Reply> {
    let diag = gram_diagnostics(d, &MuSpec::Equal(mu), tol)?;
    let code = if diag.ok { OK } else { NEGATIVE };
    Ok(Reply::json(code, serde_json::to_value(&diag)?))
}

fn parse_coeffs(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',').map(|s| s.trim().parse::<f64>().with_context(|| format!("bad coefficient {s:?}"))).collect()
}

fn scan(d: usize, mu: f64, resolution: usize, source: &str, targets: &[String], csv: Option<&Path>, tol: f64) -> anyhow::Result<Reply> {
    let basis = Arc::new(build_basis(d, &MuSpec::Equal(mu), tol)?);
    let source = if source == "grid" { SourceSpec::Grid } else { SourceSpec::Fixed(parse_coeffs(source)?) };
    let extra_targets = targets.iter().map(|t| parse_coeffs(t)).collect::<anyhow::Result<Vec<_>>>()?;
    let spec = GridSpec { resolution, source, extra_targets, keep_records: csv.is_some() };
    let mut census = exhaustive_condition_scan(&basis, &spec, tol)?;
    if let Some(path) = csv {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(";");
        let mut out = String::from("psi,phi,region,majorization,coc,l1_monotone,planned,verified\n");
        for r in &census.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                join(&r.psi),
                join(&r.phi),
                r.region,
                r.majorization,
                r.coc,
                r.l1_monotone,
                r.planned,
                r.verified
            ));
        }
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
        census.records.clear();
    }
    Ok(Reply::json(OK, serde_json::to_value(&census)?))
}

/// Aggregate exit: 1 if any file had an input error, else the largest code.
fn batch(dir: &Path, run: impl Fn(&Path) -> Reply) -> Reply {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => return Reply::error(format!("reading {}: {e}", dir.display())),
    };
    let mut files: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    files.sort();
    let mut results = Vec::new();
    for f in &files {
        let reply = run(f);
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        results.push(json!({"file": name, "exit": reply.code, "result": reply.body, "error": reply.message}));
    }
    let codes = results.iter().filter_map(|r| r["exit"].as_u64()).map(|c| c as u8);
    let code = if codes.clone().any(|c| c == INPUT_ERROR) { INPUT_ERROR } else { codes.max().unwrap_or(OK) };
    Reply::json(code, Value::Array(results))
}

fn run_inputs(inputs: &Inputs, run: impl Fn(&Path) -> Reply) -> Reply {
    match (&inputs.batch, &inputs.input) {
        (Some(dir), _) => batch(dir, run),
        (None, Some(file)) => run(file),
        (None, None) => Reply::error("no input given"),
    }
}

fn dispatch(cli: &Cli) -> Reply {
    let tol = cli.tol;
    if !(tol.is_finite() && tol > 0.0) {
        return Reply::error(anyhow!("tolerance must be positive, got {tol}"));
    }
    let fallible = |r: anyhow::Result<Reply>| r.unwrap_or_else(Reply::error);
    match &cli.command {
        Command::Check(inputs) => run_inputs(inputs, |p| check(p, tol)),
        Command::Plan { inputs, emit_ops } => run_inputs(inputs, |p| plan_one(p, tol, emit_ops.as_deref())),
        Command::Verify { plan, input, ops } => fallible(verify(plan, input, ops.as_deref(), tol)),
        Command::Maximal { d, mu, sign } => fallible(maximal(*d, *mu, *sign, tol)),
        Command::Gram { d, mu } => fallible(gram(*d, *mu, tol)),
        Command::Scan { d, mu, resolution, source, targets, csv } => {
            fallible(scan(*d, *mu, *resolution, source, targets, csv.as_deref(), tol))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { INPUT_ERROR } else { OK });
        }
    };
    let reply = dispatch(&cli);
    if let Some(body) = &reply.body {
        match to_canonical_json(body, cli.pretty) {
            Ok(text) => println!("{text}"),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(INPUT_ERROR);
            }
        }
    }
    if let Some(msg) = &reply.message {
        eprintln!("{msg}");
    }
    ExitCode::from(reply.code)
}
