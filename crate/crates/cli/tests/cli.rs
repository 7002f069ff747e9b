use std::path::PathBuf;
use std::process::{Command, Output};

use qnc::conversion::{forbidden_example, random_circuit, ConvertedCircuit};
use qnc::locc::{teleport_protocol, ProtocolFile};
use qnc::network::{build_cluster, EdgeId, NetworkKind, NetworkSpec};
use qnc::random::seeded;
use serde_json::Value;

fn qnc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnc")).args(args).output().expect("spawn qnc")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json report")
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qnc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn kc_of_named_gates() {
    let o = qnc(&["kc", "swap"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["kc"], 3);
    assert_eq!(r["op_number"], 4);
    assert_eq!(json(&qnc(&["kc", "identity"]))["kc"], 0);
}

#[test]
fn kc_rejects_non_unitary() {
    let p = scratch("bad.json", r#"{"dims":[4,4],"re":[1,1,1,1,0,0,0,0,0,0,0,0,0,0,0,0],"im":[0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]}"#);
    assert_eq!(code(&qnc(&["kc", p.to_str().unwrap()])), 2);
    assert_eq!(code(&qnc(&["kc", "/nonexistent/matrix.json"])), 2);
}

#[test]
fn verify_exit_codes() {
    let o = qnc(&["verify", "butterfly", "swap", "--random-inputs", "3"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["verdict"], "implementable");
    assert!(r["min_fidelity"].as_f64().unwrap() >= 1.0 - 1e-9);

    let o = qnc(&["verify", "ladder:2", "swap"]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    assert_eq!(r["verdict"], "refused");
    assert_eq!(r["kc"], 3);

    assert_eq!(code(&qnc(&["verify", "grail", "identity", "--random-inputs", "2"])), 0);
    assert_eq!(code(&qnc(&["verify", "cluster:4,2", "swap"])), 1);
    assert_eq!(code(&qnc(&["verify", "torus", "swap"])), 2);
}

#[test]
fn verify_is_deterministic_per_seed() {
    let run = |seed: &str| qnc(&["verify", "ladder:3", "swap", "--seed", seed, "--random-inputs", "4"]).stdout;
    assert_eq!(run("11"), run("11"));
    assert_ne!(run("11"), run("12"));
}

#[test]
fn trace_checks_index() {
    let o = qnc(&["trace", "0.3", "0.2", "0.1", "0"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert!(r["steps"].as_array().unwrap().iter().all(|s| s["matches"] == true));
    let o = qnc(&["trace", "--", "-0.3", "0.2", "0.1", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&qnc(&["trace", "0", "0", "0", "4"])), 2);
}

#[test]
fn scan_small_grids() {
    let p = scratch("phi7.json", r#"{"families":[7]}"#);
    let o = qnc(&["scan-fourqubit", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["families"][0]["histogram"]["{3,3,3}"], 1);
    let p = scratch("empty.json", r#"{"families":[]}"#);
    let o = qnc(&["scan-fourqubit", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["total_points"], 0);
}

#[test]
fn text_mirrors_json() {
    let o = qnc(&["kc", "cnot", "--format", "text"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l == "kc: 1"));
    assert!(text.lines().any(|l| l == "op_number: 2"));
}

#[test]
fn convert_legal_and_illegal() {
    let circuit = random_circuit(&mut seeded(3), 3, 2, 4);
    let p = scratch("circuit.json", &serde_json::to_string(&circuit).unwrap());
    let o = qnc(&["convert", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["legal"], true);

    let bad = ConvertedCircuit::from_segments(3, vec![forbidden_example()]);
    let p = scratch("bad_circuit.json", &serde_json::to_string(&bad).unwrap());
    let o = qnc(&["convert", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["legal"], false);
}

#[test]
fn simulate_teleportation_file() {
    let net = build_cluster(1, 2).unwrap();
    let protocol = teleport_protocol(&net, &EdgeId::horizontal(1, 1)).unwrap();
    let file = ProtocolFile { network: NetworkSpec { kind: NetworkKind::Cluster, k: Some(1), n: Some(2), vertical_edges: None }, protocol, input: None };
    let p = scratch("teleport.json", &serde_json::to_string(&file).unwrap());
    let o = qnc(&["simulate", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["valid"], true);
    assert!((r["total_probability"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}
