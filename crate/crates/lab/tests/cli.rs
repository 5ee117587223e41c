use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaplygin-lab")).args(args).output().expect("spawn chaplygin-lab")
}

fn lab_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaplygin-lab")).args(args).env(key, val).output().expect("spawn chaplygin-lab")
}

fn json_of(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

const MODIFIED_TOML: &str = r#"
seed = 3

[system.custom]
name = "modified_custom"
base = ["x", "y"]
group_dim = 1
fiber = ["z"]
gamma = [["-y*x", "0"]]
g_bb = [["1", "0"], ["0", "1"]]
g_gg = [["1"]]

[region]
lo = [-2.0, -2.0]
hi = [2.0, 2.0]

[[initial_states]]
q = [1.0, 1.0]
v = [1.0, 0.5]
"#;

#[test]
fn list_systems_prints_schemas() {
    let out = lab(&["list-systems"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["mobile_robot", "two_wheeled_robot", "particle_modified", "particle_classical", "J_wheel"] {
        assert!(text.contains(name), "{name}");
    }
    let v = json_of(&lab(&["list-systems", "--json"]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["systems"].as_array().unwrap().len(), 4);
    assert_eq!(v["systems"][1]["fiber"], serde_json::json!(["x", "y", "theta"]));
}

#[test]
fn analyze_counter_example() {
    let v = json_of(&lab(&["analyze", "--system", "particle_modified"]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["measure"]["verdict"], "NoInvariantMeasure");
    assert!(v["measure"]["density"].as_array().unwrap().is_empty());
    let p = v["grid"].as_array().unwrap().iter().find(|g| g["q"] == serde_json::json!([1.0, 1.0])).unwrap();
    assert!((f(&p["beta"][1]) + 0.5).abs() < 1e-10);
    assert!(f(&p["closedness"]) >= 0.4);
}

#[test]
fn analyze_classical_tabulates_density() {
    let v = json_of(&lab(&["analyze", "--system", "particle_classical"]));
    assert_eq!(v["measure"]["verdict"], "InvariantMeasure");
    let d = v["measure"]["density"].as_array().unwrap();
    assert_eq!(d.len(), 81);
    for p in d {
        let y = f(&p["q"][1]);
        assert!((f(&p["k"]) - 1.0 / (1.0 + y * y).sqrt()).abs() < 1e-8, "{p}");
    }
}

#[test]
fn analyze_robot_is_hamiltonian_reducible() {
    let v = json_of(&lab(&["analyze", "--system", "mobile_robot", "--params", "m=3,R=0.2"]));
    assert_eq!(v["classification"]["class"], "HamiltonianReducible");
    assert_eq!(v["system"]["params"]["m"], 3.0);
    for g in v["grid"].as_array().unwrap() {
        assert!(g["beta"].as_array().unwrap().iter().all(|b| f(b).abs() < 1e-12));
        let gt = &g["reduced_metric"];
        assert!((f(&gt[1][1]) - (0.3 + 3.0 * 0.04)).abs() < 1e-12);
    }
}

#[test]
fn analyze_writes_file_with_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["analyze", "--system", "two_wheeled_robot", "--region=-1:1,-1:1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&dir.path().join("analyze.json"));
    assert_eq!(v["classification"]["class"], "GyroscopicallyForced");
    assert_eq!(v["region"]["lo"], serde_json::json!([-1.0, -1.0]));
    assert_eq!(v["grid"][0]["curvature"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_carriage_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["verify", "--system", "two_wheeled_robot", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{text}");
    let row = text.lines().find(|l| l.starts_with("oracle_deviation")).unwrap();
    assert!(row.ends_with("PASS"));
    let v = read_json(&dir.path().join("verify.json"));
    assert_eq!(v["seed"], 7);
    let c = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "oracle_deviation").unwrap();
    assert!(f(&c["value"]) <= 1e-6);
}

#[test]
fn verify_failure_exits_one() {
    let out = lab(&["verify", "--system", "particle_modified", "--step", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn simulate_classical_first_integral() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = lab(&["simulate", "--system", "particle_classical", "--t-final", "10", "--out", d]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "q1", "q2", "v1", "v2", "energy", "xdot_sqrt_1py2"]);
    let mut rows = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        assert!((r[6].parse::<f64>().unwrap() - 1.0).abs() <= 1e-8);
        rows += 1;
    }
    assert_eq!(rows, 10_001);
    let meta = read_json(&dir.path().join("trajectory.json"));
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["system"]["base"], serde_json::json!(["x", "y"]));
    assert!(meta["transport_drift"].is_null());
}

#[test]
fn simulate_with_jacobian_adds_transport() {
    let out = lab(&["simulate", "--system", "particle_classical", "--t-final", "2", "--jacobian"]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let h: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&h[5..], ["energy", "logdetJ", "xdot_sqrt_1py2", "transport"]);
    for r in rdr.records() {
        assert!(r.unwrap()[8].parse::<f64>().unwrap().abs() <= 1e-6);
    }
}

#[test]
fn outputs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let p = d.path().to_str().unwrap();
        assert_eq!(lab(&["simulate", "--system", "two_wheeled_robot", "--seed", "5", "--out", p]).status.code(), Some(0));
        assert_eq!(lab(&["analyze", "--system", "mobile_robot", "--out", p]).status.code(), Some(0));
    }
    for name in ["trajectory.csv", "trajectory.json", "analyze.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn holonomy_matches_curvature_quadrature() {
    let v = json_of(&lab(&["holonomy", "--system", "mobile_robot", "--loop", "square:0.5"]));
    assert_eq!(v["oracle"], "curvature_flux");
    assert!(f(&v["oracle_deviation"]) <= 1e-6);
    let r = 0.3;
    assert!((f(&v["displacement"][0]) - r * 0.5 * (0.5f64.cos() - 1.0)).abs() < 1e-6);
    let c = json_of(&lab(&["holonomy", "--system", "two_wheeled_robot", "--loop", "circle:0.4", "--at=-0.1,0.2"]));
    assert_eq!(c["oracle"], "refined_lift");
    assert_eq!(c["group_law"], "se2");
    assert!(f(&c["oracle_deviation"]) <= 1e-8);
}

#[test]
fn reconstruct_carriage() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["reconstruct", "--system", "two_wheeled_robot", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&dir.path().join("lift.json"));
    assert!(f(&v["max_gamma_residual"]) <= 1e-6);
    assert!(f(&v["oracle_deviation"]) <= 1e-5);
    let text = std::fs::read_to_string(dir.path().join("lift.csv")).unwrap();
    assert!(text.starts_with("t,q1,q2,v1,v2,x,y,theta,gamma_residual\n"));
}

#[test]
fn custom_toml_and_json_configs() {
    let dir = tempfile::tempdir().unwrap();
    let toml_path = dir.path().join("mod.toml");
    std::fs::write(&toml_path, MODIFIED_TOML).unwrap();
    let p = toml_path.to_str().unwrap();
    let v = json_of(&lab(&["analyze", "--config", p]));
    assert_eq!(v["system"]["name"], "modified_custom");
    assert_eq!(v["measure"]["verdict"], "NoInvariantMeasure");
    let out = lab(&["verify", "--config", p]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let json_path = dir.path().join("run.json");
    std::fs::write(&json_path, r#"{"system": {"builtin": "particle_classical"}, "integrator": {"t_final": 0.5}}"#).unwrap();
    let out = lab(&["reconstruct", "--config", json_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,q1,q2,v1,v2,z,gamma_residual\n"));
    assert!(text.lines().last().unwrap().starts_with("0.5,"));
}

#[test]
fn non_abelian_custom_skips_lift_checks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("se2.toml");
    std::fs::write(
        &path,
        r#"
[system.custom]
base = ["a"]
group_dim = 3
structure = [[1, 2, 3, 1.0], [2, 1, 3, -1.0]]
gamma = [["0.1"], ["0"], ["0.2"]]
g_bb = [["1"]]
g_gg = [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]
"#,
    )
    .unwrap();
    let out = lab(&["verify", "--config", path.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("skipped oracle checks"));
    assert_eq!(lab(&["reconstruct", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\nbuiltin = \"mobile_robot\"\ncolour = 1\n").unwrap();
    let out = lab(&["analyze", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("colour"));
    let syntax = dir.path().join("syntax.toml");
    std::fs::write(&syntax, MODIFIED_TOML.replace("\"-y*x\"", "\"-y*x +\"")).unwrap();
    let out = lab(&["analyze", "--config", syntax.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("byte 6"));
    assert_eq!(lab(&["analyze", "--system", "unicycle"]).status.code(), Some(2));
    assert_eq!(lab(&["analyze", "--system", "mobile_robot", "--params", "m=-1"]).status.code(), Some(2));
    assert_eq!(lab(&["analyze", "--system", "mobile_robot", "--params", "mass=1"]).status.code(), Some(2));
    assert_eq!(lab(&["analyze", "--system", "mobile_robot", "--region", "1,2"]).status.code(), Some(2));
    assert_eq!(lab(&["holonomy", "--system", "mobile_robot", "--loop", "hexagon:1"]).status.code(), Some(2));
    assert_eq!(lab(&["analyze", "--bogus"]).status.code(), Some(2));
    assert_eq!(lab(&["analyze"]).status.code(), Some(2));
    assert_eq!(lab_env(&["list-systems"], "CHAPLYGIN_LAB_THREADS", "many").status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_three() {
    let out = lab(&["reconstruct", "--system", "particle_modified", "--step", "0.5", "--t-final", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("too coarse"));
}

#[test]
fn thread_cap_keeps_results() {
    let a = lab_env(&["verify", "--system", "particle_modified"], "CHAPLYGIN_LAB_THREADS", "1");
    let b = lab_env(&["verify", "--system", "particle_modified"], "CHAPLYGIN_LAB_THREADS", "3");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
