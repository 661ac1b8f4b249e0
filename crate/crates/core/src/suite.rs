//! Suite files, the bundled test-case table and report rows.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certifier::{self, Assumption, Certificate, Domain, Status, Verdict};
use crate::parser::{self, OdeSystem, ParseError};
use crate::solver::{self, BackendSpec, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Certified,
    ConditionallyCertified,
    Failed,
    Unsolved,
    BackendError,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Certified => "certified",
            Outcome::ConditionallyCertified => "conditionally-certified",
            Outcome::Failed => "failed",
            Outcome::Unsolved => "unsolved",
            Outcome::BackendError => "backend-error",
        })
    }
}

impl From<Status> for Outcome {
    fn from(s: Status) -> Self {
        match s {
            Status::Certified => Outcome::Certified,
            Status::ConditionallyCertified => Outcome::ConditionallyCertified,
            Status::Failed => Outcome::Failed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    AlgebraicGoalTooLarge,
    NoDerivativeRule,
    BackendUnsolved,
    SideConditionUnresolved,
}

impl FailureReason {
    pub const ALL: [FailureReason; 4] = [
        FailureReason::AlgebraicGoalTooLarge,
        FailureReason::NoDerivativeRule,
        FailureReason::BackendUnsolved,
        FailureReason::SideConditionUnresolved,
    ];
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::AlgebraicGoalTooLarge => "algebraic-goal-too-large",
            FailureReason::NoDerivativeRule => "no-derivative-rule",
            FailureReason::BackendUnsolved => "backend-unsolved",
            FailureReason::SideConditionUnresolved => "side-condition-unresolved",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub id: String,
    pub system: String,
    #[serde(default, alias = "outcome", skip_serializing_if = "Option::is_none")]
    pub expected: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumptions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl SuiteCase {
    pub fn new(id: impl Into<String>, system: impl Into<String>) -> Self {
        SuiteCase {
            id: id.into(),
            system: system.into(),
            expected: None,
            assumptions: Vec::new(),
            domain: None,
            rationale: None,
        }
    }

    fn with_rationale(mut self, r: &str) -> Self {
        self.rationale = Some(r.to_string());
        self
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite is not a JSON array or JSON lines: {0}")]
    Format(String),
    #[error("case {id}: {source}")]
    System { id: String, source: ParseError },
    #[error("case {id}: {detail}")]
    Case { id: String, detail: String },
    #[error("duplicate case id `{0}`")]
    DuplicateId(String),
}

/// Accepts a JSON array of cases or one case object per line. Report rows
/// load as cases whose expected outcome is the reported one.
pub fn load_suite(text: &str) -> Result<Vec<SuiteCase>, SuiteError> {
    let trimmed = text.trim_start();
    let cases: Vec<SuiteCase> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| SuiteError::Format(e.to_string()))?
    } else {
        trimmed
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| SuiteError::Format(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let mut seen = std::collections::BTreeSet::new();
    for c in &cases {
        if !seen.insert(c.id.clone()) {
            return Err(SuiteError::DuplicateId(c.id.clone()));
        }
        parser::parse_system(&c.system).map_err(|source| SuiteError::System {
            id: c.id.clone(),
            source,
        })?;
    }
    Ok(cases)
}

/// The eighteen-case table of transcendental, rational and coupled systems.
pub fn table_suite() -> Vec<SuiteCase> {
    [
        ("1", "x' = x + t", "Inhomogeneous polynomial"),
        ("2", "x' = tan(t)", "Tangent function"),
        ("3", "x' = x^2", "Second order polynomial"),
        ("4", "x' = -y, y' = x", "Trigonometric solution"),
        ("5", "x' = 1/t", "Domain issues at 0"),
        ("6", "x' = 1/(2*x - 1)", "Has two solutions"),
        ("7", "x' = x*y, y' = 3", "Contains a factor of xy"),
        ("8", "x' = 2*x + y, y' = x", "Homogeneous 2nd order SODE"),
        ("9", "x' = 2*x + y + t^2, y' = x", "Inhomogeneous 2nd order SODE"),
        ("10", "x' = arcsin(t)", "Inverse trigonometric function"),
        ("11", "x' = sqrt(t)", "Square root"),
        ("12", "x' = t^(1/5)", "Higher roots"),
        ("13", "x' = t^sqrt(2)", "Non-rational powers"),
        ("14", "x' = x + y, y' = y + 2*z, z' = x^2 + 1", "Higher dimensional SODE"),
        ("15", "x' = x^2 - t", "Bessel function"),
        ("16", "x' = y, y' = exp(t^2)", "Imaginary error function"),
        ("17", "x' = sin(x)/ln(x)", "Impossible to solve"),
        ("18", "x' = ln(t), y' = x", "Logarithmic"),
    ]
    .into_iter()
    .map(|(id, sys, why)| SuiteCase::new(id, sys).with_rationale(why))
    .collect()
}

/// One row of the report. `domain_found` and `certified` are `None` when
/// the backend produced nothing to check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub system: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumptions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub backend: String,
    pub outcome: Outcome,
    pub solved: bool,
    pub domain_found: Option<bool>,
    pub certified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<FailureReason>,
    /// Largest residual goal among failed components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_ops: Option<usize>,
    pub branches: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Outcome>,
    pub elapsed_ms: u64,
}

impl ReportRow {
    pub fn mismatch(&self) -> bool {
        self.expected.is_some_and(|e| e != self.outcome)
    }

    /// Free-text note: the case rationale, then the backend's detail.
    pub fn note(&self) -> String {
        let mut parts = Vec::new();
        if let Some(r) = &self.rationale {
            parts.push(r.clone());
        }
        if let Some(d) = &self.detail {
            parts.push(d.clone());
        }
        parts.join("; ")
    }
}

/// Failure bucket of a certificate that is not `Certified`.
pub fn failure_reason(cert: &Certificate) -> Option<FailureReason> {
    match cert.status {
        Status::Certified => None,
        Status::ConditionallyCertified => Some(FailureReason::SideConditionUnresolved),
        Status::Failed => {
            let no_rule = cert
                .components
                .iter()
                .any(|c| matches!(c.verdict, Verdict::NoDerivative(_)));
            Some(if no_rule {
                FailureReason::NoDerivativeRule
            } else {
                FailureReason::AlgebraicGoalTooLarge
            })
        }
    }
}

fn case_error(case: &SuiteCase, detail: String, backend: &BackendSpec, elapsed: Duration) -> ReportRow {
    ReportRow {
        id: case.id.clone(),
        system: case.system.clone(),
        assumptions: case.assumptions.clone(),
        domain: case.domain.clone(),
        rationale: case.rationale.clone(),
        backend: backend.id().to_string(),
        outcome: Outcome::BackendError,
        solved: false,
        domain_found: None,
        certified: None,
        reason: Some(FailureReason::BackendUnsolved),
        goal_ops: None,
        branches: 0,
        detail: Some(detail),
        expected: case.expected,
        elapsed_ms: elapsed.as_millis() as u64,
    }
}

/// Solves and certifies one case.
pub fn run_case(case: &SuiteCase, backend: &BackendSpec) -> ReportRow {
    let start = Instant::now();
    let sys = match parser::parse_system(&case.system) {
        Ok(s) => s,
        Err(e) => return case_error(case, e.to_string(), backend, start.elapsed()),
    };
    let ctx = sys.context();
    let assumptions: Result<Vec<Assumption>, _> = case
        .assumptions
        .iter()
        .map(|a| Assumption::parse(a, &ctx))
        .collect();
    let assumptions = match assumptions {
        Ok(a) => a,
        Err(e) => return case_error(case, e.to_string(), backend, start.elapsed()),
    };
    let domain = match case.domain.as_deref().map(|d| Domain::parse(d, &ctx)) {
        None => None,
        Some(Ok(d)) => Some(d),
        Some(Err(e)) => return case_error(case, e.to_string(), backend, start.elapsed()),
    };
    let result = solver::solve(&sys, backend, &assumptions);
    let mut row = ReportRow {
        id: case.id.clone(),
        system: case.system.clone(),
        assumptions: case.assumptions.clone(),
        domain: case.domain.clone(),
        rationale: case.rationale.clone(),
        backend: result.backend.clone(),
        outcome: Outcome::Unsolved,
        solved: false,
        domain_found: None,
        certified: None,
        reason: Some(FailureReason::BackendUnsolved),
        goal_ops: None,
        branches: 0,
        detail: None,
        expected: case.expected,
        elapsed_ms: 0,
    };
    match &result.status {
        SolveStatus::Unsolved(why) => row.detail = Some(why.clone()),
        SolveStatus::BackendError(e) => {
            row.outcome = Outcome::BackendError;
            row.detail = Some(e.to_string());
        }
        SolveStatus::Solved(cands) => {
            row.solved = true;
            row.branches = cands.len();
            certify_branches(&sys, cands, domain.as_ref(), &assumptions, &mut row);
        }
    }
    row.elapsed_ms = start.elapsed().as_millis() as u64;
    row
}

fn certify_branches(
    sys: &OdeSystem,
    cands: &[solver::Candidate],
    domain: Option<&Domain>,
    assumptions: &[Assumption],
    row: &mut ReportRow,
) {
    let mut worst: Option<(Status, Certificate)> = None;
    let mut domain_found = true;
    for c in cands {
        let mut sol = c.solution.clone();
        if let Some(d) = domain {
            sol.domain = d.clone();
        }
        let cert = match certifier::certify(sys, &sol, assumptions) {
            Ok(cert) => cert,
            Err(e) => {
                row.outcome = Outcome::BackendError;
                row.reason = Some(FailureReason::BackendUnsolved);
                row.detail = Some(e.to_string());
                return;
            }
        };
        domain_found &= cert.conditions.iter().all(|c| c.disposition.is_discharged());
        let rank = |s: Status| match s {
            Status::Failed => 0,
            Status::ConditionallyCertified => 1,
            Status::Certified => 2,
        };
        if worst.as_ref().is_none_or(|(s, _)| rank(cert.status) < rank(*s)) {
            worst = Some((cert.status, cert));
        }
    }
    let Some((status, cert)) = worst else { return };
    row.outcome = status.into();
    row.domain_found = Some(domain_found);
    row.certified = Some(status == Status::Certified);
    row.reason = failure_reason(&cert);
    if status == Status::Failed {
        row.goal_ops = Some(cert.max_goal_ops());
        let diag: Vec<String> = cert
            .failed_components()
            .map(|c| format!("{}: {}", c.var, c.verdict))
            .collect();
        row.detail = Some(diag.join("; "));
    } else if status == Status::ConditionallyCertified {
        let open: Vec<String> = cert.unresolved().map(|c| c.condition.to_string()).collect();
        row.detail = Some(format!("unresolved: {}", open.join(", ")));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn mismatches(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.mismatch())
    }

    pub fn histogram(&self) -> BTreeMap<FailureReason, usize> {
        let mut h: BTreeMap<FailureReason, usize> =
            FailureReason::ALL.iter().map(|r| (*r, 0)).collect();
        for r in &self.rows {
            if let Some(reason) = r.reason {
                *h.entry(reason).or_default() += 1;
            }
        }
        h
    }

    fn tally(&self, o: Outcome) -> usize {
        self.rows.iter().filter(|r| r.outcome == o).count()
    }

    pub fn summary(&self) -> String {
        let hist: Vec<String> = self
            .histogram()
            .iter()
            .map(|(r, n)| format!("{r}={n}"))
            .collect();
        format!(
            "{} cases: {} certified, {} conditionally certified, {} failed, {} solved, {} unsolved, {} backend errors; reasons: {}",
            self.rows.len(),
            self.tally(Outcome::Certified),
            self.tally(Outcome::ConditionallyCertified),
            self.tally(Outcome::Failed),
            self.rows.iter().filter(|r| r.solved).count(),
            self.tally(Outcome::Unsolved),
            self.tally(Outcome::BackendError),
            hist.join(", ")
        )
    }

    /// One JSON object per row.
    pub fn to_json_lines(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("report rows serialise"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn table(&self) -> String {
        let flag = |f: Option<bool>| match f {
            None => "N/A",
            Some(true) => "yes",
            Some(false) => "no",
        };
        let mut out = format!(
            "{:<4} {:<34} {:<6} {:<6} {:<9} {:<24} {:<26} {}\n",
            "case", "system", "solved", "domain", "certified", "outcome", "reason", "note"
        );
        for r in &self.rows {
            let reason = match (r.reason, r.goal_ops) {
                (Some(FailureReason::AlgebraicGoalTooLarge), Some(n)) => {
                    format!("algebraic-goal-too-large ({n} ops)")
                }
                (Some(x), _) => x.to_string(),
                (None, _) => "-".into(),
            };
            out.push_str(&format!(
                "{:<4} {:<34} {:<6} {:<6} {:<9} {:<24} {:<26} {}\n",
                r.id,
                r.system,
                if r.solved { "yes" } else { "no" },
                flag(r.domain_found),
                flag(r.certified),
                r.outcome.to_string(),
                reason,
                r.note()
            ));
        }
        out
    }
}

/// Runs cases on up to `jobs` threads; rows come back in case order.
pub fn run_suite(cases: &[SuiteCase], backend: &BackendSpec, jobs: usize) -> Report {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let rows = pool.install(|| cases.par_iter().map(|c| run_case(c, backend)).collect());
    Report { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_suite_parses() {
        let cases = table_suite();
        assert_eq!(cases.len(), 18);
        for c in &cases {
            parser::parse_system(&c.system).unwrap();
        }
        assert_eq!(cases[16].rationale.as_deref(), Some("Impossible to solve"));
    }

    #[test]
    fn single_case() {
        let row = run_case(&SuiteCase::new("t", "x' = t"), &BackendSpec::Builtin);
        assert_eq!(row.outcome, Outcome::Certified);
        assert_eq!(row.certified, Some(true));
        assert_eq!(row.reason, None);
    }

    #[test]
    fn unsolved_row_has_na_flags() {
        let mut case = SuiteCase::new("17", "x' = sin(x)/ln(x)").with_rationale("Impossible to solve");
        case.expected = Some(Outcome::Certified);
        let row = run_case(&case, &BackendSpec::Builtin);
        assert_eq!(row.reason, Some(FailureReason::BackendUnsolved));
        assert_eq!((row.domain_found, row.certified), (None, None));
        assert!(row.note().starts_with("Impossible to solve"));
        assert!(row.mismatch());
    }

    #[test]
    fn report_round_trips_through_loader() {
        let cases = vec![
            SuiteCase::new("a", "x' = t"),
            SuiteCase::new("b", "x' = x^2"),
            SuiteCase::new("c", "x' = sin(x)/ln(x)"),
        ];
        let report = run_suite(&cases, &BackendSpec::Builtin, 2);
        let reloaded = load_suite(&report.to_json_lines()).unwrap();
        assert_eq!(reloaded.len(), 3);
        let again = run_suite(&reloaded, &BackendSpec::Builtin, 2);
        assert_eq!(again.mismatches().count(), 0);
        assert_eq!(reloaded[1].expected, Some(Outcome::ConditionallyCertified));
    }

    #[test]
    fn malformed_suites() {
        assert!(matches!(load_suite("{not json"), Err(SuiteError::Format(_))));
        assert!(matches!(
            load_suite(r#"[{"id":"1","system":"x' = +"}]"#),
            Err(SuiteError::System { .. })
        ));
        assert!(matches!(
            load_suite(r#"[{"id":"1","system":"x' = t"},{"id":"1","system":"x' = t"}]"#),
            Err(SuiteError::DuplicateId(_))
        ));
    }
}
