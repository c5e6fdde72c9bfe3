mod common;

use std::fs;
use std::process::Command;

use common::*;
use docalc::expr::parse_expr;
use docalc::oracle::{eval_estimand, random_scm, PopEnv};

fn docalc(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_docalc")).current_dir(FIXTURE_DIR).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn sidecars_match() {
    let mut seen = 0;
    for entry in fs::read_dir(FIXTURE_DIR).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "expected") {
            let text = fs::read_to_string(&path).unwrap();
            let mut lines = text.splitn(3, '\n');
            let args: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
            let code: i32 = lines.next().unwrap().strip_prefix("exit ").unwrap().parse().unwrap();
            let want = lines.next().unwrap_or("");
            let (got_code, stdout, _) = docalc(&args);
            assert_eq!(got_code, code, "{}", path.display());
            assert_eq!(stdout.trim_end(), want.trim_end(), "{}", path.display());
            seen += 1;
        }
    }
    assert_eq!(seen, ALL_FIXTURES.len());
}

#[test]
fn identify_examples() {
    let (code, out, _) = docalc(&["identify", "--graph", "fig1b.cg", "--effect", "P(Y|do(X))"]);
    assert_eq!((code, out.trim()), (0, "Σ_w P(w) P(y | x, w)"));
    let (code, out, _) = docalc(&["identify", "--graph", "bow.cg", "--effect", "P(Y|do(X))"]);
    assert_eq!(code, 1);
    assert!(out.contains("not identifiable"), "{out}");
}

#[test]
fn transport_trace_lists_steps() {
    let (code, out, _) = docalc(&["transport", "--graph", "fig7a.cg", "--effect", "P(Y|do(X))", "--trace"]);
    assert_eq!(code, 0);
    assert!(out.contains("R1") && out.contains("R3"), "{out}");
}

#[test]
fn check_rule_reports_witness() {
    let (code, out, _) = docalc(&["check-rule", "--graph", "bow.cg", "--rule", "R2", "--bind", "Z=X;Y=Y"]);
    assert_eq!(code, 1);
    assert!(out.contains("Y <- L1 -> X"), "{out}");
    let (code, _, _) = docalc(&["check-rule", "--graph", "fig1b.cg", "--rule", "R2", "--bind", "Z=X;Y=Y;W=W"]);
    assert_eq!(code, 0);
}

#[test]
fn dsep_and_mediate() {
    assert_eq!(docalc(&["d-sep", "--graph", "chain.cg", "--query", "X _|_ Z | Y"]).0, 0);
    assert_eq!(docalc(&["d-sep", "--graph", "chain.cg", "--query", "X _|_ Z"]).0, 1);
    let (code, out, _) = docalc(&["mediate", "--graph", "fig2.cg", "--query", "X -> M -> Y"]);
    assert_eq!(code, 0, "{out}");
}

#[test]
fn synthesize_subsets() {
    let (code, out, _) = docalc(&["synthesize", "--studies", "fig8.cg", "--effect", "P(Y|do(X))", "--use", "h,i"]);
    assert_eq!(code, 0);
    assert!(out.contains("P_h(y | do(x), w)") && out.contains("P_i(w | do(x))"), "{out}");
    let (code, out, _) = docalc(&["synthesize", "--studies", "fig8.cg", "--effect", "P(Y|do(X))", "--use", "c,e,f"]);
    assert_eq!(code, 1);
    assert!(out.contains("unsynthesizable"), "{out}");
}

#[test]
fn input_errors_exit_two() {
    let (code, _, err) = docalc(&["identify", "--graph", "missing.cg", "--effect", "P(Y|do(X))"]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
    assert_eq!(docalc(&["identify", "--graph", "fig1b.cg", "--effect", "P(Y|do("]).0, 2);
    assert_eq!(docalc(&["identify", "--graph", "fig1b.cg", "--effect", "P(Q|do(X))"]).0, 2);
    assert_eq!(docalc(&["frobnicate"]).0, 2);
}

#[test]
fn eval_reads_model_file() {
    let d = fixture("fig1b");
    let m = random_scm::<f64>(&d, 7);
    let path = std::env::temp_dir().join(format!("docalc-cli-{}.json", std::process::id()));
    fs::write(&path, m.to_json()).unwrap();
    let effect = "sum{W} P(Y=1 | X=1, W) P(W)";
    let (code, out, err) = docalc(&["eval", "--scm", path.to_str().unwrap(), "--effect", effect]);
    fs::remove_file(&path).unwrap();
    assert_eq!(code, 0, "{err}");
    let want = *eval_estimand(&parse_expr(effect).unwrap(), &PopEnv::single(&m)).unwrap().number().unwrap();
    assert_eq!(out.trim().parse::<f64>().unwrap(), want);
}

#[test]
fn structured_output_is_json() {
    let (code, out, _) = docalc(&["identify", "--graph", "fig1b.cg", "--effect", "P(Y|do(X))", "--format", "structured"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v.is_object());
}
