use std::path::PathBuf;
use std::time::{Duration, Instant};

use odecert::certifier::{certify, Assumption, Status};
use odecert::parser::parse_system;
use odecert::solver::external::{interpret, request_external, BackendError, Request};
use odecert::solver::{solve, BackendSpec, SolveStatus, GRACE};
use proptest::prelude::*;

fn script(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests/fixtures/backends", name]
        .iter()
        .collect();
    format!("sh '{}'", p.display())
}

const TIMEOUT: Duration = Duration::from_secs(5);

#[test]
fn echo_server_solution_certifies() {
    let sys = parse_system("x' = t, y' = x, z' = 1").unwrap();
    let r = request_external(&sys, &script("echo.sh"), TIMEOUT, &[]);
    let SolveStatus::Solved(cands) = &r.status else {
        panic!("{:?}", r.status)
    };
    assert_eq!(cands.len(), 1);
    assert_eq!(r.backend, "external");
    let cert = certify(&sys, &cands[0].solution, &[]).unwrap();
    assert_eq!(cert.status, Status::Certified);
}

#[test]
fn unsolved_is_not_an_error() {
    let sys = parse_system("x' = sin(x)/ln(x)").unwrap();
    let r = request_external(&sys, &script("unsolved.sh"), TIMEOUT, &[]);
    assert!(matches!(&r.status, SolveStatus::Unsolved(d) if d == "no closed form"));
}

#[test]
fn undeclared_symbol_is_rejected() {
    let sys = parse_system("x' = 1").unwrap();
    let r = request_external(&sys, &script("leak.sh"), TIMEOUT, &[]);
    assert_eq!(
        r.status,
        SolveStatus::BackendError(BackendError::SymbolLeak("q".into()))
    );
}

#[test]
fn garbage_and_bad_expressions() {
    let sys = parse_system("x' = 1").unwrap();
    let r = request_external(&sys, &script("garbage.sh"), TIMEOUT, &[]);
    assert!(matches!(r.status, SolveStatus::BackendError(BackendError::Malformed(_))));
    let r = request_external(&sys, &script("unparseable.sh"), TIMEOUT, &[]);
    assert!(matches!(
        r.status,
        SolveStatus::BackendError(BackendError::Unparseable { ref var, .. }) if var == "x"
    ));
}

#[test]
fn hanging_backend_is_killed_at_the_deadline() {
    let sys = parse_system("x' = 1").unwrap();
    let timeout = Duration::from_millis(300);
    let start = Instant::now();
    let r = request_external(&sys, &script("hang.sh"), timeout, &[]);
    assert!(start.elapsed() < timeout + GRACE);
    assert_eq!(r.status, SolveStatus::BackendError(BackendError::Timeout(timeout)));
}

#[test]
fn nonzero_exit_and_missing_program() {
    let sys = parse_system("x' = 1").unwrap();
    let r = request_external(&sys, &script("fail.sh"), TIMEOUT, &[]);
    assert!(matches!(r.status, SolveStatus::BackendError(BackendError::Exit(_))));
    let r = request_external(&sys, "/nonexistent/backend", TIMEOUT, &[]);
    assert!(matches!(r.status, SolveStatus::BackendError(BackendError::Exit(_))));
}

#[test]
fn request_document_on_the_wire() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("request.json");
    let sys = parse_system("x' = b*x").unwrap();
    let assume = Assumption::parse("b > 0", &sys.context()).unwrap();
    let cmd = format!("{} '{}'", script("request.sh"), out.display());
    let r = request_external(&sys, &cmd, TIMEOUT, std::slice::from_ref(&assume));
    assert!(matches!(r.status, SolveStatus::Unsolved(_)));
    let sent: Request = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(sent, Request::new(&sys, &[assume]));
    assert_eq!(sent.equations[0].rhs, "b*x");
}

#[test]
fn branches_and_domain_are_carried() {
    let sys = parse_system("x' = 1/x").unwrap();
    let spec: BackendSpec = format!("external:{}", script("two_branches.sh")).parse().unwrap();
    let r = solve(&sys, &spec, &[]);
    let cands = r.candidates();
    assert_eq!(cands.len(), 2);
    for c in cands {
        assert_eq!(c.solution.domain.to_string(), "(0, inf)");
        let cert = certify(&sys, &c.solution, &[]).unwrap();
        assert_ne!(cert.status, Status::Failed, "{}", c.solution);
    }
}

#[test]
fn named_backend_reads_its_command_from_the_environment() {
    std::env::set_var("ODECERT_SYMPY_CMD", script("unsolved.sh"));
    let spec: BackendSpec = "sympy".parse().unwrap();
    let sys = parse_system("x' = x^2 - t").unwrap();
    let r = solve(&sys, &spec, &[]);
    assert!(matches!(r.status, SolveStatus::Unsolved(_)));
    assert_eq!(spec.id(), "sympy");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn interpret_never_panics_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let sys = parse_system("x' = t, y' = x").unwrap();
        let _ = interpret(&sys, &bytes);
    }

    #[test]
    fn interpret_rejects_truncated_documents(cut in 1usize..120) {
        let sys = parse_system("x' = t").unwrap();
        let doc = r#"{"status":"solved","solutions":[[{"var":"x","expr":"t^2/2 + x0"}]],"domain":"(0, inf)"}"#;
        let cut = cut.min(doc.len() - 1);
        prop_assert!(interpret(&sys, &doc.as_bytes()[..cut]).is_err());
    }
}
