use std::process::Command;

use mvfa_core::cli::{run, TOL_ENV};
use serde_json::Value;

fn mvfa(args: &[&str]) -> (Value, i32) {
    let out = run(std::iter::once("mvfa").chain(args.iter().copied()));
    let doc = serde_json::from_str(&out.stdout)
        .unwrap_or_else(|e| panic!("{args:?}: {e}: {}", out.stdout));
    (doc, out.code)
}

fn binary(args: &[&str], env: &[(&str, &str)]) -> (Value, i32, Vec<u8>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mvfa"));
    cmd.args(args).env_remove(TOL_ENV);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    let doc = serde_json::from_slice(&out.stdout).unwrap();
    (doc, out.status.code().unwrap(), out.stdout)
}

#[test]
fn eval_by_name_and_position() {
    let (doc, code) = mvfa(&["eval", "pow(x,y)", "--at", "x=2,y=10"]);
    assert_eq!(code, 0);
    assert_eq!(doc["value"], 1024.0);
    let (doc, _) = mvfa(&["eval", "log(x,y)", "--at", "x=8,y=2"]);
    assert_eq!(doc["value"], 3.0);
    let (doc, _) = mvfa(&["eval", "pow(add(x,a),mul(x,b))", "--at", "2,1,1"]);
    assert_eq!(doc["value"], 9.0);
    let (doc, _) = mvfa(&["eval", "C2_{1,2}(pow)", "--at", "3"]);
    assert_eq!(doc["value"], 27.0);
}

#[test]
fn eval_errors_are_json() {
    let (doc, code) = mvfa(&["eval", "div(x,y)", "--at", "x=1,y=0"]);
    assert_eq!(code, 1);
    assert_eq!(doc["error"]["kind"], "domain");
    assert_eq!(doc["error"]["location"]["node"], "div");

    let (doc, code) = mvfa(&["eval", "pow(x,", "--at", "x=1"]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["kind"], "syntax");
    assert_eq!(doc["error"]["location"]["line"], 1);

    let (doc, code) = mvfa(&["eval", "pow(x,y)", "--at", "x=1"]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["kind"], "usage");

    let (doc, code) = mvfa(&["frobnicate"]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["kind"], "usage");
}

#[test]
fn structural_commands() {
    let (doc, code) = mvfa(&["lift", "add(x,y)", "--arity", "4", "--positions", "1,4"]);
    assert_eq!(code, 0);
    assert_eq!(doc["arity"], 4);
    let (doc, _) = mvfa(&["diag", "pow", "--i", "1", "--j", "2"]);
    assert_eq!(doc["expr"], "C2_{1,2}(pow)");
    assert_eq!(doc["arity"], 1);
    let (doc, _) = mvfa(&["compose", "add", "id", "--slot", "2", "--positions", "1"]);
    assert_eq!(doc["expr"], "(add C2_2 A2_{1}(id))");
    let (doc, code) = mvfa(&["diag", "pow", "--i", "1", "--j", "1"]);
    assert_eq!(code, 1);
    assert_eq!(doc["error"]["kind"], "structural");
}

#[test]
fn invert_reports_verdict_branches_and_roots() {
    let (doc, code) = mvfa(&[
        "invert",
        "add(pow(x,3),pow(y,2))",
        "--slot",
        "2",
        "--domain",
        "-1:1,-1:1",
        "--target",
        "0.25",
        "--fixed",
        "0",
    ]);
    assert_eq!(code, 0);
    assert_eq!(doc["verdict"]["invertible"], false);
    assert_eq!(doc["branches"].as_array().unwrap().len(), 2);
    let roots: Vec<f64> = serde_json::from_value(doc["roots"].clone()).unwrap();
    assert_eq!(roots.len(), 2);
    assert!((roots[0] + 0.5).abs() < 1e-9 && (roots[1] - 0.5).abs() < 1e-9);
}

#[test]
fn solve_examples() {
    let (doc, code) = mvfa(&[
        "solve",
        "add(x,a) = c",
        "--param",
        "a=2",
        "--param",
        "c=5",
        "--domain",
        "0:10",
    ]);
    assert_eq!(code, 0);
    assert!(doc["formula"].as_str().unwrap().starts_with("I_1"));
    assert!((doc["roots"][0].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert_eq!(doc["status"], "ok");
    assert_eq!(doc["arguments"], serde_json::json!(["c", "a"]));
}

#[test]
fn solve_without_roots_still_succeeds() {
    let (doc, code) = mvfa(&["solve", "mul(x,x) = -4", "--domain", "-3:3"]);
    assert_eq!(code, 0);
    assert_eq!(doc["status"], "no-solution");
    assert_eq!(doc["roots"], serde_json::json!([]));
}

#[test]
fn solve_usage_errors() {
    let (doc, code) = mvfa(&[
        "solve",
        "add(x,a) = c",
        "--param",
        "c=5",
        "--domain",
        "0:10",
    ]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["kind"], "usage");
    let (doc, code) = mvfa(&["solve", "add(x,a) = c", "--param", "a=1", "--param", "c=5"]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["kind"], "usage");
    let (_, code) = mvfa(&["solve", "add(x,a) = c", "--param", "a", "--domain", "0:1"]);
    assert_eq!(code, 2);
    let (_, code) = mvfa(&["solve", "add(x,1) = 2", "--domain", "1:0"]);
    assert_eq!(code, 2);
}

#[test]
fn tolerance_from_environment() {
    let args = ["solve", "pow(x,x) = 27", "--domain", "1:4"];
    let (doc, code, _) = binary(&args, &[(TOL_ENV, "1e-6")]);
    assert_eq!(code, 0);
    assert!(doc["residuals"][0].as_f64().unwrap() <= 1e-6);
    let (doc, code, _) = binary(&args, &[(TOL_ENV, "lots")]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["kind"], "usage");
}

#[test]
fn kst_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rep.json");
    let path = path.to_str().unwrap();
    let args = [
        "kst",
        "decompose",
        "add(x,y)",
        "--grid",
        "33",
        "--iters",
        "50",
        "-o",
        path,
    ];
    let (doc, code, first) = binary(&args, &[]);
    assert_eq!(code, 0);
    assert_eq!(doc["outer_functions"], 5);
    assert!(doc["held_out"]["seed"].is_u64());
    let (_, _, second) = binary(&args, &[]);
    assert_eq!(first, second);

    let (doc, code) = mvfa(&["kst", "reconstruct", path, "--at", "0.5,0.5"]);
    assert_eq!(code, 0);
    assert!((doc["value"].as_f64().unwrap() - 1.0).abs() <= 1.0);
    assert_eq!(doc["clamped"], 0);

    let text =
        std::fs::read_to_string(path)
            .unwrap()
            .replacen("\"version\":1", "\"version\":99", 1);
    std::fs::write(path, text).unwrap();
    let (doc, code) = mvfa(&["kst", "reconstruct", path, "--at", "0.5,0.5"]);
    assert_eq!(code, 1);
    assert_eq!(doc["error"]["kind"], "format");
}

#[test]
fn kst_without_iterations_reports_max_of_f() {
    let (doc, code) = mvfa(&[
        "kst",
        "decompose",
        "add(x,y)",
        "--grid",
        "9",
        "--iters",
        "0",
    ]);
    assert_eq!(code, 0);
    assert_eq!(doc["final_residual"], 2.0);
    assert_eq!(doc["rep"]["history"], serde_json::json!([2.0]));
}

#[test]
fn pretty_output_is_indented() {
    let out = run(["mvfa", "--pretty", "eval", "add(x,y)", "--at", "1,2"]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.contains("\n  \"value\": 3.0"));
}
