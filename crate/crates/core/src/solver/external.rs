//! Client side of the newline-delimited JSON backend protocol.

use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{leaked_symbol, timed, Candidate, SolveResult, SolveStatus};
use crate::certifier::{Assumption, Domain, Solution};
use crate::parser::{self, OdeSystem};

pub const PROTOCOL_VERSION: u32 = 1;
/// Responses longer than this are rejected.
pub const MAX_RESPONSE_BYTES: usize = 4 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("could not start backend: {0}")]
    Spawn(String),
    #[error("backend did not answer within {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("unparseable expression for `{var}`: {detail}")]
    Unparseable { var: String, detail: String },
    #[error("solution mentions undeclared symbol `{0}`")]
    SymbolLeak(String),
    #[error("backend exited with {0}")]
    Exit(String),
    #[error("backend reported an error: {0}")]
    Reported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationDoc {
    pub var: String,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub version: u32,
    pub indep: String,
    pub equations: Vec<EquationDoc>,
    pub assumptions: Vec<String>,
}

impl Request {
    pub fn new(sys: &OdeSystem, assumptions: &[Assumption]) -> Self {
        Request {
            version: PROTOCOL_VERSION,
            indep: "t".into(),
            equations: sys
                .equations()
                .iter()
                .map(|(var, rhs)| EquationDoc {
                    var: var.clone(),
                    rhs: rhs.to_string(),
                })
                .collect(),
            assumptions: assumptions.iter().map(|a| a.name.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingDoc {
    pub var: String,
    pub expr: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Solved,
    Unsolved,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub status: ResponseStatus,
    #[serde(default)]
    pub solutions: Vec<Vec<BindingDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Validates a response document against the system.
pub fn interpret(sys: &OdeSystem, bytes: &[u8]) -> Result<SolveStatus, BackendError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| BackendError::Malformed("response is not UTF-8".into()))?;
    let resp: Response = serde_json::from_str(text.trim())
        .map_err(|e| BackendError::Malformed(e.to_string()))?;
    match resp.status {
        ResponseStatus::Unsolved => Ok(SolveStatus::Unsolved(
            resp.detail.unwrap_or_else(|| "backend could not solve".into()),
        )),
        ResponseStatus::Error => Err(BackendError::Reported(
            resp.detail.unwrap_or_else(|| "unspecified".into()),
        )),
        ResponseStatus::Solved => {
            if resp.solutions.is_empty() {
                return Err(BackendError::Malformed("`solved` without solutions".into()));
            }
            let ctx = sys.context();
            let domain = match &resp.domain {
                Some(d) => Domain::parse(d, &ctx)
                    .map_err(|e| BackendError::Malformed(format!("domain: {e}")))?,
                None => Domain::whole(),
            };
            let mut expected: Vec<&str> = sys.state_vars().collect();
            expected.sort_unstable();
            let mut out = Vec::new();
            for docs in resp.solutions {
                let mut bindings = Vec::new();
                for d in docs {
                    let e = parser::parse_expr_with(&d.expr, &ctx).map_err(|err| {
                        BackendError::Unparseable {
                            var: d.var.clone(),
                            detail: err.to_string(),
                        }
                    })?;
                    bindings.push((d.var, e));
                }
                let sol = Solution::new(bindings).with_domain(domain.clone());
                let found: Vec<&str> = sol.bindings.keys().map(String::as_str).collect();
                if found != expected {
                    return Err(BackendError::Malformed(format!(
                        "solution binds [{}], system has [{}]",
                        found.join(", "),
                        expected.join(", ")
                    )));
                }
                if let Some(sym) = leaked_symbol(sys, &sol) {
                    return Err(BackendError::SymbolLeak(sym));
                }
                out.push(Candidate::new(sol));
            }
            Ok(SolveStatus::Solved(out))
        }
    }
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: signalling a process group we created; a stale id only fails.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Runs `command` through `sh -c`, sends one request and reads one response
/// line. The child and its descendants are killed once `timeout` elapses.
pub fn request_external(
    sys: &OdeSystem,
    command: &str,
    timeout: Duration,
    assumptions: &[Assumption],
) -> SolveResult {
    let start = Instant::now();
    let status = match exchange(sys, command, timeout, assumptions, start) {
        Ok(s) => s,
        Err(e) => SolveStatus::BackendError(e),
    };
    timed("external", start, status)
}

fn exchange(
    sys: &OdeSystem,
    command: &str,
    timeout: Duration,
    assumptions: &[Assumption],
    start: Instant,
) -> Result<SolveStatus, BackendError> {
    let deadline = start + timeout;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .process_group(0)
        .spawn()
        .map_err(|e| BackendError::Spawn(e.to_string()))?;

    let mut line = serde_json::to_string(&Request::new(sys, assumptions))
        .map_err(|e| BackendError::Malformed(e.to_string()))?;
    line.push('\n');
    let stdin = child.stdin.take();
    // Write from a thread so a child that never reads cannot block us.
    thread::spawn(move || {
        if let Some(mut stdin) = stdin {
            let _ = stdin.write_all(line.as_bytes());
        }
    });

    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(stdout).take(MAX_RESPONSE_BYTES as u64 + 1);
        let mut buf = Vec::new();
        let r = reader.read_until(b'\n', &mut buf).map(|_| buf);
        let _ = tx.send(r);
    });

    let remaining = deadline.saturating_duration_since(Instant::now());
    let bytes = match rx.recv_timeout(remaining) {
        Ok(Ok(b)) => b,
        Ok(Err(e)) => {
            kill_group(&mut child);
            return Err(BackendError::Malformed(e.to_string()));
        }
        Err(_) => {
            kill_group(&mut child);
            return Err(BackendError::Timeout(timeout));
        }
    };
    if bytes.len() > MAX_RESPONSE_BYTES {
        kill_group(&mut child);
        return Err(BackendError::Malformed("response too large".into()));
    }
    if bytes.is_empty() {
        let code = wait_until(&mut child, deadline);
        return Err(match code {
            Some(st) if !st.success() => BackendError::Exit(st.to_string()),
            _ => BackendError::Malformed("no response".into()),
        });
    }
    let status = interpret(sys, &bytes);
    // A child may keep serving; it has had its answer read, so reap or kill.
    match wait_until(&mut child, Instant::now() + Duration::from_millis(200)) {
        Some(st) if !st.success() => Err(BackendError::Exit(st.to_string())),
        _ => status,
    }
}

/// Waits for the child until `deadline`; kills the group if it is still
/// running then. Returns the exit status when the child exited.
fn wait_until(child: &mut Child, deadline: Instant) -> Option<ExitStatus> {
    loop {
        match child.try_wait() {
            Ok(Some(st)) => {
                kill_group(child);
                return Some(st);
            }
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
            _ => {
                kill_group(child);
                return None;
            }
        }
    }
}
