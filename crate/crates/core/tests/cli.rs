use std::path::Path;

use odecert::cli::{self, run};
use odecert::suite::{load_suite, ReportRow};

fn odecert(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("odecert").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// Splits a suggested command line into arguments, honouring double quotes.
fn split_quoted(line: &str) -> Vec<String> {
    let mut args = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => quoted = !quoted,
            '\\' if quoted => cur.extend(chars.next()),
            ' ' if !quoted => {
                if !cur.is_empty() {
                    args.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        args.push(cur);
    }
    args
}

#[test]
fn example_certifies_with_exit_zero() {
    let (code, out, _) = odecert(&[
        "cert",
        "--solution",
        "x=t^2/2 + x0",
        "--solution",
        "y=t^3/6 + x0*t + y0",
        "--solution",
        "z=z0 + t",
        "x' = t, y' = x, z' = 1",
    ]);
    assert_eq!(code, cli::EXIT_OK);
    assert!(out.starts_with("certified\n"), "{out}");
    assert!(out.contains("condition 6 != 0"), "{out}");
}

#[test]
fn conditional_and_failed_exit_codes() {
    let (code, out, _) = odecert(&["cert", "--solution", "x=x0/(1 - x0*t)", "x' = x^2"]);
    assert_eq!(code, cli::EXIT_CONDITIONAL);
    assert!(out.contains("1 - x0*t != 0"));

    let (code, out, _) = odecert(&["cert", "--seed", "7", "--solution", "x=t", "x' = x"]);
    assert_eq!(code, cli::EXIT_FAILED);
    assert!(out.contains("counterexample for x"), "{out}");
    assert!(out.contains("seed: 7"));
}

#[test]
fn assumptions_discharge_conditions() {
    let args = ["cert", "--solution", "x=sqrt(b)*t + x0", "x' = sqrt(b)"];
    let (code, _, _) = odecert(&args);
    assert_eq!(code, cli::EXIT_CONDITIONAL);
    let (code, out, _) = odecert(&[&args[..3], &["--assume", "b > 0"], &args[3..]].concat());
    assert_eq!(code, cli::EXIT_OK, "{out}");
}

#[test]
fn domain_flag_restricts_time() {
    let args = ["cert", "--solution", "x=ln(t) + x0", "x' = 1/t"];
    let (code, _, _) = odecert(&args);
    assert_eq!(code, cli::EXIT_CONDITIONAL);
    let (code, _, _) = odecert(&[&args[..1], &["--domain", "(0, inf)"], &args[1..]].concat());
    assert_eq!(code, cli::EXIT_OK);
}

#[test]
fn suggested_cert_command_runs() {
    let (code, out, _) = odecert(&["solve", "x' = x + t"]);
    assert_eq!(code, cli::EXIT_OK);
    let line = out
        .lines()
        .map(str::trim)
        .find(|l| l.starts_with("odecert cert"))
        .expect("suggestion");
    let args = split_quoted(line);
    let rest: Vec<&str> = args[1..].iter().map(String::as_str).collect();
    let (code, cert, _) = odecert(&rest);
    assert_eq!(code, cli::EXIT_OK, "{line}\n{cert}");
}

#[test]
fn solve_exit_codes() {
    let (code, out, _) = odecert(&["solve", "x' = sin(x)/ln(x)"]);
    assert_eq!(code, cli::EXIT_UNSOLVED);
    assert!(out.starts_with("unsolved"));
    let (code, _, _) = odecert(&["solve", "--backend", "external:exit 3", "x' = t"]);
    assert_eq!(code, cli::EXIT_BACKEND_ERROR);
    let (code, _, err) = odecert(&["solve", "--backend", "nosuch", "x' = t"]);
    assert_eq!(code, cli::EXIT_USAGE, "{err}");
}

#[test]
fn malformed_input_and_usage() {
    assert_eq!(odecert(&["cert", "--solution", "x=", "x' = t"]).0, cli::EXIT_DATA);
    assert_eq!(odecert(&["cert", "--solution", "y=t", "x' = t"]).0, cli::EXIT_DATA);
    assert_eq!(odecert(&["solve", "x' = "]).0, cli::EXIT_DATA);
    assert_eq!(odecert(&["frobnicate"]).0, cli::EXIT_USAGE);
    assert_eq!(odecert(&["cert", "x' = t"]).0, cli::EXIT_USAGE);
    let (code, out, _) = odecert(&["--help"]);
    assert_eq!(code, cli::EXIT_OK);
    assert!(out.contains("Usage"));
}

#[test]
fn corpus_command() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus");
    let (code, out, _) = odecert(&["corpus", dir.to_str().unwrap()]);
    assert_eq!(code, cli::EXIT_OK);
    assert!(out.ends_with(
        "12 systems found, 4 duplicates, 8 unique (4 simple, 4 complex), 2 skipped\n"
    ));
    let (code, out, _) = odecert(&["corpus", "--json", dir.to_str().unwrap()]);
    assert_eq!(code, cli::EXIT_OK);
    let docs = out.lines().filter(|l| l.starts_with('{')).count();
    assert_eq!(docs, 8);
    assert_eq!(odecert(&["corpus", "/no/such/dir"]).0, cli::EXIT_NO_INPUT);
    let empty = tempfile::tempdir().unwrap();
    let (code, out, _) = odecert(&["corpus", empty.path().to_str().unwrap()]);
    assert_eq!(code, cli::EXIT_OK);
    assert!(out.starts_with("0 systems found"));
}

#[test]
fn suite_report_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let (code, out, _) = odecert(&[
        "suite",
        "--suite",
        "table",
        "--jobs",
        "2",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, cli::EXIT_OK);
    assert!(out.contains("Impossible to solve"));
    let text = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<ReportRow> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 18);
    // Rows load back as cases whose expectations are the observed outcomes.
    let cases = load_suite(&text).unwrap();
    assert_eq!(cases.len(), 18);
    for (case, row) in cases.iter().zip(&rows) {
        assert_eq!(case.expected, Some(row.outcome));
    }
    let (code, out, _) = odecert(&["suite", report.to_str().unwrap()]);
    assert_eq!(code, cli::EXIT_OK, "{out}");
}

#[test]
fn suite_mismatch_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let wrong = dir.path().join("wrong.json");
    std::fs::write(&wrong, r#"[{"id":"a","system":"x' = t","expected":"failed"}]"#).unwrap();
    let (code, out, _) = odecert(&["suite", wrong.to_str().unwrap()]);
    assert_eq!(code, cli::EXIT_FAILED);
    assert!(out.contains("mismatch a: expected failed, got certified"), "{out}");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "[{\"id\": 1").unwrap();
    assert_eq!(odecert(&["suite", bad.to_str().unwrap()]).0, cli::EXIT_DATA);
    assert_eq!(odecert(&["suite"]).0, cli::EXIT_USAGE);
}

#[test]
fn refute_is_deterministic_under_a_seed() {
    let a = odecert(&["refute", "--seed", "42", "sin(t)^2", "t"]);
    let b = odecert(&["refute", "--seed", "42", "sin(t)^2", "t"]);
    assert_eq!(a, b);
    assert_eq!(a.0, cli::EXIT_FAILED);
    let (code, out, _) = odecert(&["refute", "sin(t)^2 + cos(t)^2", "1"]);
    assert_eq!(code, cli::EXIT_OK, "{out}");
}
