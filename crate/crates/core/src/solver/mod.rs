//! Candidate solutions from the builtin catalogue or an external backend.

mod builtin;
pub mod external;
pub mod integrate;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certifier::{self, Assumption, Solution};
use crate::deriv::{self, Condition};
use crate::expr::Symbol;
use crate::parser::OdeSystem;

pub use builtin::solve_builtin;
pub use external::{request_external, BackendError};

/// Grace period on top of an external backend's timeout.
pub const GRACE: Duration = Duration::from_secs(2);
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Named selectors routed through the external protocol.
pub const NAMED_BACKENDS: [&str; 4] = ["fricas", "maxima", "sympy", "wolfram"];

/// One solution branch plus the definedness conditions it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub solution: Solution,
    pub conditions: Vec<Condition>,
}

impl Candidate {
    /// Attaches the conditions that are not trivially true on the
    /// solution's domain.
    pub fn new(solution: Solution) -> Self {
        let mut conditions: Vec<Condition> = Vec::new();
        for binding in solution.bindings.values() {
            let mut found = deriv::definedness_conditions(binding);
            if let Ok(d) = deriv::differentiate(binding) {
                found.extend(d.conditions.into_iter().map(|sc| sc.condition));
            }
            for c in found {
                if conditions.contains(&c) {
                    continue;
                }
                if !certifier::discharge(&c, &solution.domain, &[]).is_discharged() {
                    conditions.push(c);
                }
            }
        }
        Candidate {
            solution,
            conditions,
        }
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.solution)?;
        if !self.solution.domain.is_whole() {
            write!(f, " on {}", self.solution.domain)?;
        }
        for c in &self.conditions {
            write!(f, "; requires {c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveStatus {
    Solved(Vec<Candidate>),
    Unsolved(String),
    BackendError(BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub backend: String,
    pub elapsed: Duration,
}

impl SolveResult {
    pub fn candidates(&self) -> &[Candidate] {
        match &self.status {
            SolveStatus::Solved(c) => c,
            _ => &[],
        }
    }

    pub fn is_solved(&self) -> bool {
        matches!(self.status, SolveStatus::Solved(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendSpec {
    Builtin,
    External {
        /// `external` or one of [`NAMED_BACKENDS`].
        selector: String,
        command: String,
        timeout: Duration,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendSpecError {
    #[error("unknown backend `{0}`; expected builtin, external:<command>, fricas, maxima, sympy or wolfram")]
    Unknown(String),
    #[error("external backend needs a command")]
    EmptyCommand,
    #[error("timeout must be positive")]
    ZeroTimeout,
}

impl BackendSpec {
    pub fn external(command: impl Into<String>, timeout: Duration) -> Self {
        BackendSpec::External {
            selector: "external".into(),
            command: command.into(),
            timeout,
        }
    }

    pub fn with_timeout(self, t: Duration) -> Result<Self, BackendSpecError> {
        if t.is_zero() {
            return Err(BackendSpecError::ZeroTimeout);
        }
        Ok(match self {
            BackendSpec::External {
                selector, command, ..
            } => BackendSpec::External {
                selector,
                command,
                timeout: t,
            },
            b => b,
        })
    }

    pub fn id(&self) -> &str {
        match self {
            BackendSpec::Builtin => "builtin",
            BackendSpec::External { selector, .. } => selector,
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Builtin => f.write_str("builtin"),
            BackendSpec::External {
                selector, command, ..
            } if selector == "external" => write!(f, "external:{command}"),
            BackendSpec::External { selector, .. } => f.write_str(selector),
        }
    }
}

impl FromStr for BackendSpec {
    type Err = BackendSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "builtin" {
            return Ok(BackendSpec::Builtin);
        }
        if let Some(cmd) = s.strip_prefix("external:") {
            if cmd.trim().is_empty() {
                return Err(BackendSpecError::EmptyCommand);
            }
            return Ok(BackendSpec::external(cmd.trim(), DEFAULT_TIMEOUT));
        }
        if NAMED_BACKENDS.contains(&s) {
            let var = format!("ODECERT_{}_CMD", s.to_ascii_uppercase());
            let command = std::env::var(&var)
                .ok()
                .filter(|c| !c.trim().is_empty())
                .unwrap_or_else(|| format!("odecert-cas-bridge --engine {s}"));
            return Ok(BackendSpec::External {
                selector: s.to_string(),
                command,
                timeout: DEFAULT_TIMEOUT,
            });
        }
        Err(BackendSpecError::Unknown(s.to_string()))
    }
}

pub fn solve(sys: &OdeSystem, backend: &BackendSpec, assumptions: &[Assumption]) -> SolveResult {
    match backend {
        BackendSpec::Builtin => solve_builtin(sys),
        BackendSpec::External {
            command, timeout, ..
        } => {
            let mut r = request_external(sys, command, *timeout, assumptions);
            r.backend = backend.id().to_string();
            r
        }
    }
}

/// Checks the free-symbol invariant for one solution.
pub fn leaked_symbol(sys: &OdeSystem, sol: &Solution) -> Option<String> {
    let inits = sys.init_consts();
    for e in sol.bindings.values() {
        for s in e.free_symbols() {
            let ok = match &s {
                Symbol::Time => true,
                Symbol::Init(n) => inits.contains(n),
                Symbol::Param(n) => sys.params().contains(n),
                Symbol::State(_) => false,
            };
            if !ok {
                return Some(s.name().to_string());
            }
        }
    }
    None
}

fn timed(backend: &str, start: Instant, status: SolveStatus) -> SolveResult {
    SolveResult {
        status,
        backend: backend.to_string(),
        elapsed: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_spec_parsing() {
        assert_eq!("builtin".parse::<BackendSpec>().unwrap(), BackendSpec::Builtin);
        let ext: BackendSpec = "external:python3 bridge.py".parse().unwrap();
        assert_eq!(ext.to_string(), "external:python3 bridge.py");
        assert_eq!(ext.id(), "external");
        let named: BackendSpec = "maxima".parse().unwrap();
        assert_eq!(named.id(), "maxima");
        assert!("mathematica".parse::<BackendSpec>().is_err());
        assert!("external:".parse::<BackendSpec>().is_err());
        assert_eq!(
            ext.with_timeout(Duration::ZERO),
            Err(BackendSpecError::ZeroTimeout)
        );
    }
}
