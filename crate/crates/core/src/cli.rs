//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | solved / certified / no mismatches |
//! | 1 | certification failed, or suite outcomes differ from expectations |
//! | 2 | backend could not solve |
//! | 3 | backend error |
//! | 4 | conditionally certified |
//! | 64 | usage error |
//! | 65 | malformed input (system, solution, suite) |
//! | 66 | unreadable input path |

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::certifier::{Assumption, Certifier, Codomain, Domain, Solution, Status};
use crate::corpus::{self, EntryDoc};
use crate::parser::{self, OdeSystem};
use crate::refuter::{Refutation, Refuter, DEFAULT_SEED};
use crate::solver::{self, BackendSpec, SolveResult, SolveStatus};
use crate::suite::{self, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_UNSOLVED: i32 = 2;
pub const EXIT_BACKEND_ERROR: i32 = 3;
pub const EXIT_CONDITIONAL: i32 = 4;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;

pub fn exit_code_for_status(s: Status) -> i32 {
    match s {
        Status::Certified => EXIT_OK,
        Status::Failed => EXIT_FAILED,
        Status::ConditionallyCertified => EXIT_CONDITIONAL,
    }
}

pub fn exit_code_for_solve(r: &SolveResult) -> i32 {
    match r.status {
        SolveStatus::Solved(_) => EXIT_OK,
        SolveStatus::Unsolved(_) => EXIT_UNSOLVED,
        SolveStatus::BackendError(_) => EXIT_BACKEND_ERROR,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "odecert",
    version,
    about = "Solve ODE systems and certify closed-form solutions"
)]
pub struct Cli {
    /// Seed for randomised counterexample search.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ask a backend for a solution and print a ready-to-run `cert` line.
    Solve(SolveArgs),
    /// Certify a candidate solution.
    Cert(CertArgs),
    /// Extract and deduplicate ODE fragments from a directory of models.
    Corpus(CorpusArgs),
    /// Run a suite of cases through solve and cert.
    Suite(SuiteArgs),
    /// Search for a point where two expressions differ.
    Refute(RefuteArgs),
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// builtin, external:<command>, fricas, maxima, sympy or wolfram.
    #[arg(long, env = "ODECERT_BACKEND", default_value = "builtin")]
    pub backend: String,

    /// Seconds to wait for an external backend.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

impl BackendArgs {
    fn spec(&self) -> Result<BackendSpec, String> {
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err("--timeout must be a positive number of seconds".into());
        }
        let spec: BackendSpec = self.backend.parse().map_err(|e| format!("{e}"))?;
        spec.with_timeout(Duration::from_secs_f64(self.timeout))
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub backend: BackendArgs,

    /// Assumption such as `b > 0`; repeatable.
    #[arg(long = "assume")]
    pub assume: Vec<String>,

    /// The system, e.g. "x' = t, y' = x".
    pub system: String,
}

#[derive(Debug, Args)]
pub struct CertArgs {
    /// Name shown in the certificate.
    #[arg(long)]
    pub name: Option<String>,

    /// Time domain, e.g. "(0, inf)" or "[0, 1]".
    #[arg(long)]
    pub domain: Option<String>,

    /// Range of one variable, e.g. "x:[0, 2]"; repeatable.
    #[arg(long)]
    pub codomain: Vec<String>,

    #[arg(long = "assume")]
    pub assume: Vec<String>,

    /// Binding `var=expr`; one per state variable.
    #[arg(long = "solution", required = true)]
    pub solution: Vec<String>,

    /// On failure, also search this many points for a counterexample.
    #[arg(long, default_value_t = 500)]
    pub trials: usize,

    pub system: String,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    pub dir: PathBuf,

    /// Print every unique entry as a JSON line.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// Suite file: JSON array or JSON lines of cases.
    pub file: Option<PathBuf>,

    /// Bundled suite name (`table`).
    #[arg(long = "suite", conflicts_with = "file")]
    pub bundled: Option<String>,

    #[command(flatten)]
    pub backend: BackendArgs,

    #[arg(long, default_value_t = 4)]
    pub jobs: usize,

    /// Write JSON-lines rows to this path.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Print JSON-lines rows instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RefuteArgs {
    pub lhs: String,
    pub rhs: String,

    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Cert(a) => cmd_cert(a, cli.seed, out),
        Command::Corpus(a) => cmd_corpus(a, out),
        Command::Suite(a) => cmd_suite(a, out),
        Command::Refute(a) => cmd_refute(a, cli.seed, out),
    };
    match result {
        Ok(code) => code,
        Err((code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

type CmdResult = Result<i32, (i32, String)>;

fn data<E: std::fmt::Display>(e: E) -> (i32, String) {
    (EXIT_DATA, e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> (i32, String) {
    (EXIT_USAGE, e.to_string())
}

fn assumptions(texts: &[String], sys: &OdeSystem) -> Result<Vec<Assumption>, (i32, String)> {
    let ctx = sys.context();
    texts
        .iter()
        .map(|a| Assumption::parse(a, &ctx).map_err(data))
        .collect()
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// A `cert` invocation that checks `sol` against `sys`.
pub fn cert_command(sys: &OdeSystem, sol: &Solution, assume: &[String]) -> String {
    let mut parts = vec!["odecert".to_string(), "cert".to_string()];
    if !sol.domain.is_whole() {
        parts.push(format!("--domain {}", quote(&sol.domain.to_string())));
    }
    for a in assume {
        parts.push(format!("--assume {}", quote(a)));
    }
    for (v, e) in &sol.bindings {
        parts.push(format!("--solution {}", quote(&format!("{v}={e}"))));
    }
    let system: Vec<String> = sys
        .equations()
        .iter()
        .map(|(v, e)| format!("{v}' = {e}"))
        .collect();
    parts.push(quote(&system.join(", ")));
    parts.join(" ")
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> CmdResult {
    let spec = a.backend.spec().map_err(usage)?;
    let sys = parser::parse_system(&a.system).map_err(data)?;
    let assume = assumptions(&a.assume, &sys)?;
    let result = solver::solve(&sys, &spec, &assume);
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(data);
    match &result.status {
        SolveStatus::Solved(cands) => {
            for (i, c) in cands.iter().enumerate() {
                if cands.len() > 1 {
                    w(out, format!("branch {}:", i + 1))?;
                }
                for (v, e) in &c.solution.bindings {
                    w(out, format!("  {v}(t) = {e}"))?;
                }
                if !c.solution.domain.is_whole() {
                    w(out, format!("  for t in {}", c.solution.domain))?;
                }
                for cond in &c.conditions {
                    w(out, format!("  requires {cond}"))?;
                }
                w(out, format!("  {}", cert_command(&sys, &c.solution, &a.assume)))?;
            }
        }
        SolveStatus::Unsolved(why) => w(out, format!("unsolved: {why}"))?,
        SolveStatus::BackendError(e) => w(out, format!("backend error: {e}"))?,
    }
    Ok(exit_code_for_solve(&result))
}

fn cmd_cert(a: &CertArgs, seed: u64, out: &mut dyn Write) -> CmdResult {
    let sys = parser::parse_system(&a.system).map_err(data)?;
    let ctx = sys.context();
    let assume = assumptions(&a.assume, &sys)?;
    let mut sol =
        Solution::parse_bindings(&sys, a.solution.iter().map(String::as_str)).map_err(data)?;
    if let Some(d) = &a.domain {
        sol.domain = Domain::parse(d, &ctx).map_err(data)?;
    }
    let mut codomain = Codomain::whole();
    for c in &a.codomain {
        codomain.add_entry(c, &sys).map_err(data)?;
    }
    sol.codomain = codomain;
    let mut certifier = Certifier::new();
    if let Some(n) = &a.name {
        certifier = certifier.named(n.clone());
    }
    let cert = certifier.certify(&sys, &sol, &assume).map_err(data)?;
    write!(out, "{cert}").map_err(data)?;
    if cert.status == Status::Failed && a.trials > 0 {
        let refuter = Refuter::new(seed, a.trials);
        match refuter.refute_solution(&sys, &sol, &assume) {
            Ok(parts) => {
                for p in parts {
                    let line = match &p.result {
                        Ok(Refutation::Counterexample(c)) => format!("counterexample for {}: {c}", p.var),
                        Ok(r @ Refutation::NoneFound { .. }) => format!("{}: {r}", p.var),
                        Err(e) => format!("{}: not sampled ({e})", p.var),
                    };
                    writeln!(out, "{line}").map_err(data)?;
                }
                writeln!(out, "seed: {seed}").map_err(data)?;
            }
            Err(e) => writeln!(out, "refuter: {e}").map_err(data)?,
        }
    }
    Ok(exit_code_for_status(cert.status))
}

fn cmd_corpus(a: &CorpusArgs, out: &mut dyn Write) -> CmdResult {
    if !a.dir.is_dir() {
        return Err((EXIT_NO_INPUT, format!("{} is not a directory", a.dir.display())));
    }
    let corpus = corpus::extract_corpus(&a.dir).map_err(|e| (EXIT_NO_INPUT, e.to_string()))?;
    if a.json {
        for e in &corpus.entries {
            let doc = EntryDoc::from(e);
            writeln!(out, "{}", serde_json::to_string(&doc).map_err(data)?).map_err(data)?;
        }
    } else {
        for e in &corpus.entries {
            writeln!(
                out,
                "{}:{}  [{}] {}",
                e.source_file.display(),
                e.line,
                e.class(),
                e.canonical_key
            )
            .map_err(data)?;
        }
    }
    writeln!(out, "{corpus}").map_err(data)?;
    Ok(EXIT_OK)
}

fn cmd_suite(a: &SuiteArgs, out: &mut dyn Write) -> CmdResult {
    let spec = a.backend.spec().map_err(usage)?;
    let cases = match (&a.file, a.bundled.as_deref()) {
        (None, Some("table")) => suite::table_suite(),
        (None, Some(other)) => return Err(usage(format!("unknown bundled suite `{other}`"))),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| (EXIT_NO_INPUT, format!("{}: {e}", path.display())))?;
            suite::load_suite(&text).map_err(data)?
        }
        (None, None) => return Err(usage("give a suite file or --suite table")),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    let report: Report = suite::run_suite(&cases, &spec, a.jobs);
    if let Some(path) = &a.report {
        std::fs::write(path, report.to_json_lines() + "\n")
            .map_err(|e| (EXIT_NO_INPUT, format!("{}: {e}", path.display())))?;
    }
    if a.json {
        writeln!(out, "{}", report.to_json_lines()).map_err(data)?;
    } else {
        write!(out, "{}", report.table()).map_err(data)?;
    }
    writeln!(out, "{}", report.summary()).map_err(data)?;
    let mismatches: Vec<_> = report.mismatches().collect();
    for m in &mismatches {
        writeln!(
            out,
            "mismatch {}: expected {}, got {}",
            m.id,
            m.expected.map(|e| e.to_string()).unwrap_or_default(),
            m.outcome
        )
        .map_err(data)?;
    }
    Ok(if mismatches.is_empty() { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_refute(a: &RefuteArgs, seed: u64, out: &mut dyn Write) -> CmdResult {
    let lhs = parser::parse_expr(&a.lhs).map_err(data)?;
    let rhs = parser::parse_expr(&a.rhs).map_err(data)?;
    let r = Refuter::new(seed, a.trials)
        .refute_equality(&lhs, &rhs, &[])
        .map_err(usage)?;
    writeln!(out, "{r}").map_err(data)?;
    writeln!(out, "seed: {seed}").map_err(data)?;
    Ok(if r.is_refuted() { EXIT_FAILED } else { EXIT_OK })
}
