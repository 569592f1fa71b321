use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;
use xdi_check::cli::{run, EXIT_ERROR, EXIT_OK, EXIT_VIOLATED};

fn data(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join(rel)
        .display()
        .to_string()
}

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn xdi(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("xdi-check").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn json(o: &Outcome) -> Vec<Value> {
    match serde_json::from_str(&o.out) {
        Ok(Value::Array(items)) => items,
        other => panic!("expected a JSON array, got {other:?} from {}", o.out),
    }
}

fn temp_file(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn labels_of_join() {
    let o = xdi(&["labels", &data("library/join.xdi"), "--handshake", "a"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    assert_eq!(
        o.out,
        "blocking: s1 s3 s4 s5 s7 s8 s9\nidling: s0 s2 s6\nambiguous: no\n"
    );
}

#[test]
fn labels_of_ambiguous_machine() {
    let dir = tempfile::tempdir().unwrap();
    let f = temp_file(
        &dir,
        "two_path.xdi",
        "(machine m (s0 t box (((h R I) s1) ((g R I) s1))) (s1 nil box ()))",
    );
    let o = xdi(&["labels", &f, "--handshake", "h"]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.out.contains("ambiguous: yes"), "{}", o.out);
    assert!(o.out.contains("state `s1`"), "{}", o.out);
}

#[test]
fn check_condition_exit_codes() {
    let join = data("library/join.xdi");
    let guarded = xdi(&[
        "check",
        &join,
        "--condition",
        "blocked(a) <-> !idle(a) & (blocked(c) | idle(b))",
        "--json",
    ]);
    assert_eq!(guarded.code, EXIT_OK);
    let items = json(&guarded);
    assert_eq!(items.len(), 8);
    assert!(items.iter().all(|v| v["holds"] == Value::Bool(true)));

    let literal = xdi(&["check", &join, "--condition", "blocked(a) <-> blocked(c) | idle(b)"]);
    assert_eq!(literal.code, EXIT_VIOLATED);
    assert!(literal.out.ends_with("fails in 2 of 8 environments\n"), "{}", literal.out);
    assert!(literal.out.contains("{a.R,b.R} lhs=false rhs=true: fails"));
}

#[test]
fn query_json_schema() {
    let o = xdi(&[
        "query",
        &data("library/join.xdi"),
        "--handshake",
        "a",
        "--mode",
        "blocking",
        "--op",
        "g",
        "--env",
        "a.R,b.R",
        "--json",
    ]);
    assert_eq!(o.code, EXIT_VIOLATED);
    let items = json(&o);
    assert_eq!(items.len(), 1);
    let obj = items[0].as_object().unwrap();
    let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    let mut want = vec!["handshake", "mode", "op", "env", "holds", "visited", "counterexample"];
    want.sort();
    let mut got = keys.clone();
    got.sort();
    assert_eq!(got, want);
    assert_eq!(obj["holds"], Value::Bool(false));
    assert_eq!(obj["op"], "g");
    assert_eq!(obj["mode"], "blocking");
    assert_eq!(obj["env"], serde_json::json!(["a.R", "b.R"]));
    // The initial state is idling, so the shortest counterexample is itself.
    assert_eq!(obj["counterexample"], serde_json::json!(["s0"]));
}

#[test]
fn query_environment_scenarios() {
    let join = data("library/join.xdi");
    let q = |mode: &str, env: &str| {
        xdi(&[
            "query", &join, "--handshake", "a", "--mode", mode, "--op", "fg", "--env", env,
        ])
        .code
    };
    assert_eq!(q("blocking", "c.A"), EXIT_OK);
    assert_eq!(q("idling", "{a.R,b.R}"), EXIT_OK);
    assert_eq!(q("blocking", ""), EXIT_VIOLATED);
}

#[test]
fn envs_in_deterministic_order() {
    let o = xdi(&["envs", &data("library/join.xdi")]);
    assert_eq!(o.code, EXIT_OK);
    assert_eq!(
        o.out,
        "{}\n{a.R}\n{b.R}\n{c.A}\n{a.R,b.R}\n{a.R,c.A}\n{b.R,c.A}\n{a.R,b.R,c.A}\n"
    );
}

#[test]
fn validate_reports_violations() {
    let ok = xdi(&["validate", &data("library/distributor.xdi")]);
    assert_eq!(ok.code, EXIT_OK);
    assert_eq!(ok.out, "distributor: valid\n");

    let dir = tempfile::tempdir().unwrap();
    let f = temp_file(&dir, "two_init.xdi", "(machine m (s0 t box ()) (s1 t box ()))");
    let bad = xdi(&["validate", &f, "--json"]);
    assert_eq!(bad.code, EXIT_ERROR);
    let items = json(&bad);
    assert_eq!(items[0]["valid"], Value::Bool(false));
    assert!(items[0]["violations"][0]
        .as_str()
        .unwrap()
        .starts_with("multiple initial states"));

    // Other commands refuse invalid machines outright.
    let envs = xdi(&["envs", &f]);
    assert_eq!(envs.code, EXIT_ERROR);
    assert!(envs.out.is_empty());
    assert!(envs.err.contains("invalid machine"), "{}", envs.err);
}

#[test]
fn validate_emits_dot() {
    let o = xdi(&["validate", &data("library/join.xdi"), "--emit-dot"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.out.starts_with("digraph \"join\" {\n"));
    assert!(o.out.contains("\"s0\" [shape=box, peripheries=2];"));
    assert!(o.out.contains("\"s0\" -> \"s1\" [label=\"a R I\"];"), "{}", o.out);
}

#[test]
fn check_library_passes() {
    let o = xdi(&["check-library", "--json"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.out);
    let items = json(&o);
    assert!(items.len() >= 10);
    assert!(items.iter().all(|v| v["holds"] == Value::Bool(true)));
}

#[test]
fn check_library_on_a_file_with_a_false_condition() {
    let dir = tempfile::tempdir().unwrap();
    let text = library_with_condition("join", "(wrong \"blocked(a) <-> blocked(c) | idle(b)\")");
    let f = temp_file(&dir, "join.xdi", &text);
    let o = xdi(&["check-library", &f]);
    assert_eq!(o.code, EXIT_VIOLATED);
    assert!(o.out.contains("join.wrong: FAILS (8 environments)"), "{}", o.out);
    assert!(o.out.contains("fails in {a.R,b.R}\n"));
}

fn library_with_condition(name: &str, entry: &str) -> String {
    let src = xdi_check::library::primitive_source(name).unwrap();
    let machine_end = src.find("(conditions").unwrap();
    format!("{}(conditions {entry})\n", &src[..machine_end])
}

#[test]
fn oracle_check_summary() {
    let o = xdi(&["oracle-check", &data("library/join.xdi"), "--deterministic"]);
    assert_eq!(o.code, EXIT_OK);
    assert_eq!(o.out, "join: 960 queries, 960 agreeing, 0 disagreeing\n");
}

#[test]
fn deadlock_free_circuit() {
    let o = xdi(&["deadlock", &data("circuits/fork_join.net"), "--channel", "a"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    assert!(o.out.contains("\nno deadlock\n"), "{}", o.out);
    assert!(o.out.contains("formula for a: unsat"));
    assert!(o.out.contains("fullness of st0 st1 over settled states: 00 11"));
}

#[test]
fn deadlocked_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let smt = dir.path().join("starved.smt2");
    let o = xdi(&[
        "deadlock",
        &data("circuits/fork_join_starved.net"),
        "--channel",
        "a",
        "--emit-smt",
        &smt.display().to_string(),
        "--json",
    ]);
    assert_eq!(o.code, EXIT_VIOLATED);
    let items = json(&o);
    let report = &items[0];
    assert_eq!(report["deadlock"]["kind"], "blocked_channel");
    assert_eq!(report["deadlock"]["channel"], "d");
    assert_eq!(report["formulas"][0]["satisfiable"], Value::Bool(true));
    let text = std::fs::read_to_string(smt).unwrap();
    assert!(text.contains("(set-logic QF_UF)"));
    assert!(text.trim_end().ends_with("(check-sat)"));
}

#[test]
fn deterministic_output_is_repeatable() {
    let args = ["deadlock", &data("circuits/fork_join_starved.net"), "--deterministic"];
    let a = xdi(&args);
    let b = xdi(&args);
    assert_eq!(a.code, EXIT_VIOLATED);
    assert_eq!(a.out, b.out);
    assert!(!a.out.contains("elapsed"));
}

#[test]
fn usage_and_input_errors() {
    let join = data("library/join.xdi");
    let net = data("circuits/fork_join.net");
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["labels", "/no/such/file.xdi", "--handshake", "a"], "/no/such/file.xdi:"),
        (vec!["labels", &join, "--handshake", "q"], "no handshake `q`"),
        (vec!["check", &join, "--condition", "blocked(a) <->"], "--condition: column"),
        (vec!["check", &join, "--condition", "idle(z)"], "handshake `z`"),
        (
            vec!["query", &join, "--handshake", "a", "--mode", "blocking", "--op", "g", "--env", "a.Q"],
            "--env",
        ),
        (
            vec!["query", &join, "--handshake", "a", "--mode", "blocking", "--op", "g", "--env", "c.R"],
            "not an input wire",
        ),
        (
            vec!["query", &join, "--handshake", "a", "--mode", "blocking", "--op", "g", "--start", "s42"],
            "unknown state `s42`",
        ),
        (
            vec!["deadlock", &net, "--emit-smt", "x.smt2"],
            "--emit-smt requires --channel",
        ),
        (
            vec!["deadlock", &net, "--channel", "zz"],
            "no channel or external handshake `zz`",
        ),
        (vec!["frobnicate"], "unrecognized subcommand"),
        (vec!["query", &join, "--handshake", "a", "--mode", "sideways", "--op", "g"], "sideways"),
    ];
    for (args, needle) in cases {
        let o = xdi(&args);
        assert_eq!(o.code, EXIT_ERROR, "{args:?}");
        assert!(o.err.contains(needle), "{args:?}: {}", o.err);
        assert!(o.out.is_empty(), "{args:?}: {}", o.out);
    }
}

#[test]
fn parse_errors_carry_positions() {
    let dir = tempfile::tempdir().unwrap();
    let f = temp_file(&dir, "broken.xdi", "(machine m\n  (s0 t box (((a R I) s1)))\n  (s1 nil bogus ()))");
    let o = xdi(&["validate", &f]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.err.contains("broken.xdi: 3:11:"), "{}", o.err);

    let n = temp_file(&dir, "broken.net", "(circuit c\n  (instance x nosuch))");
    let o = xdi(&["deadlock", &n]);
    assert_eq!(o.code, EXIT_ERROR);
    assert!(o.err.contains("broken.net: 2:15: unknown primitive `nosuch`"), "{}", o.err);
}

#[test]
fn help_exits_zero() {
    let o = xdi(&["--help"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.out.contains("oracle-check"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_xdi-check");
    let join = data("library/join.xdi");
    let status = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .env("XDI_CHECK_THREADS", "2")
            .output()
            .unwrap()
    };
    let ok = status(&["labels", &join, "--handshake", "a"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("blocking: s1 s3"));
    let violated = status(&["check", &join, "--condition", "blocked(a) <-> blocked(c) | idle(b)"]);
    assert_eq!(violated.status.code(), Some(1));
    let error = status(&["labels", &join]);
    assert_eq!(error.status.code(), Some(2));
    let deadlock = status(&["deadlock", &data("circuits/fork_join.net"), "--channel", "a"]);
    assert_eq!(deadlock.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&deadlock.stdout).contains("no deadlock"));
}
