use std::path::{Path, PathBuf};
use std::process::Command;

use kodaira_cli::{parse_spec, parse_task, run, run_all, Kind, SpecDocument, Status, Task};
use serde_json::Value;

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs")
}

fn load(name: &str) -> SpecDocument {
    parse_spec(&std::fs::read_to_string(specs().join(name)).unwrap()).unwrap()
}

fn result(tree: &Value) -> &Value {
    &tree["result"]
}

#[test]
fn jumping_scan_finds_the_jump() {
    let doc = load("jumping4d.spec");
    let task = Task::NormalBundle { at: vec![], scan: Some("x0=-1..1".into()) };
    let r = run(&task, Some(&doc), &specs());
    assert_eq!(r.status, Status::Ok);
    let types: Vec<Value> = result(&r.tree)["points"].as_array().unwrap().iter().map(|p| p["type"].clone()).collect();
    assert_eq!(types, vec![serde_json::json!([2, 0]), serde_json::json!([3, -1]), serde_json::json!([2, 0])]);
}

#[test]
fn scan_with_step_keeps_grid_order() {
    let doc = load("jumping4d.spec");
    let task = Task::NormalBundle { at: vec![], scan: Some("x0=-1/2..1/2:1/4".into()) };
    let r = run(&task, Some(&doc), &specs());
    let pts = result(&r.tree)["points"].as_array().unwrap().clone();
    let xs: Vec<&str> = pts.iter().map(|p| p["point"]["x0"].as_str().unwrap()).collect();
    assert_eq!(xs, ["-1/2", "-1/4", "0", "1/4", "1/2"]);
    assert_eq!(pts[2]["type"], serde_json::json!([3, -1]));
}

#[test]
fn lambda_on_the_deformed_space_is_obstructed() {
    let doc = load("deformed3d.spec");
    let r = run(&Task::Connection { kind: Kind::Lambda }, Some(&doc), &specs());
    assert_eq!(r.status, Status::Obstructed);
    assert_eq!(r.status.exit_code(), 2);
    let ob = &result(&r.tree)["obstruction"];
    assert_eq!(ob["tag"], "torsion");
    assert!(ob["dimension"].as_u64().unwrap() >= 1);
}

#[test]
fn flat_five_dimensional_space_is_newton_cartan() {
    let doc = load("flat5d.spec");
    for subst in [None, Some(PathBuf::from("flat5d.subst"))] {
        let r = run(&Task::VerifyNc { subst: subst.clone() }, Some(&doc), &specs());
        assert_eq!(r.status, Status::Ok, "{subst:?}: {}", r.render());
        assert_eq!(result(&r.tree)["classification"], "Newton-Cartan");
        assert_eq!(result(&r.tree)["clock_parallel"], true);
        assert_eq!(result(&r.tree)["metric_parallel"], true);
    }
}

#[test]
fn deformed_space_is_torsional() {
    let doc = load("deformed3d.spec");
    let r = run(&Task::VerifyNc { subst: None }, Some(&doc), &specs());
    assert_eq!(result(&r.tree)["classification"], "torsional Newton-Cartan");
}

#[test]
fn engine_errors_name_their_module() {
    let doc = load("deformed3d.spec");
    let r = run(&Task::Connection { kind: Kind::Xi }, Some(&doc), &specs());
    assert_eq!(r.status, Status::Error);
    assert_eq!(r.tree["error"]["module"], "connection");
}

#[test]
fn bad_points_are_reported() {
    let doc = load("jumping4d.spec");
    let r = run(&Task::NormalBundle { at: vec!["x0=1,q=2".into()], scan: None }, Some(&doc), &specs());
    assert_eq!(r.status, Status::Error);
    assert_eq!(r.tree["error"]["column"], 6);
}

#[test]
fn discriminants_need_no_spec() {
    let r = run(&Task::Discriminants, None, Path::new("."));
    assert_eq!(result(&r.tree)["reduction"]["c"], "1/27");
    assert_eq!(result(&r.tree)["reduction"]["holds"], true);
}

#[test]
fn gravity_fix_reads_the_field() {
    let doc = load("flat3d.spec");
    let task = parse_task("gravity-fix --cocycle Omega^3*lam^-2").unwrap();
    let r = run(&task, Some(&doc), &specs());
    assert_eq!(r.status, Status::Ok, "{}", r.render());
    assert_eq!(result(&r.tree)["divergence"], "0");
}

#[test]
fn run_lines_parse_like_the_command_line() {
    assert_eq!(parse_task("connection --kind torsion-xi").unwrap(), Task::Connection { kind: Kind::TorsionXi });
    assert_eq!(parse_task("global-vectors --tdeg 2").unwrap(), Task::GlobalVectors { tdeg: 2 });
    assert!(parse_task("connection --kind warped").is_err());
}

#[test]
fn reports_are_deterministic() {
    let doc = load("gibbons_hawking.spec");
    let a = run_all(&doc, &specs()).to_json();
    let b = run_all(&doc, &specs()).to_json();
    assert_eq!(a, b);
}

#[test]
fn text_rendering_comes_from_the_tree() {
    let doc = load("epsilon_family.spec");
    let r = run_all(&doc, &specs());
    let text = r.render();
    assert!(text.contains("generic_type: (1,0)"));
    assert!(text.contains("status: ok"));
}

fn kodaira(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_kodaira")).args(args).current_dir(specs()).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn exit_codes() {
    assert_eq!(kodaira(&["-s", "epsilon_family_zero.spec", "normal-bundle"]).0, 0);
    let (code, json) = kodaira(&["-s", "deformed3d.spec", "--json", "connection", "--kind", "lambda"]);
    assert_eq!(code, 2);
    let tree: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(tree["status"], "obstructed");
    assert_eq!(kodaira(&["-s", "no-such-file.spec", "lines"]).0, 1);
    assert_eq!(kodaira(&["-s", "deformed3d.spec", "connection", "--kind", "xi"]).0, 1);
}

#[test]
fn fmt_prints_the_canonical_form() {
    let (code, text) = kodaira(&["-s", "custom3d.spec", "fmt"]);
    assert_eq!(code, 0);
    assert_eq!(parse_spec(&text).unwrap(), load("custom3d.spec"));
    assert!(text.starts_with("base = [0, 1]\ndeform T += "));
}
