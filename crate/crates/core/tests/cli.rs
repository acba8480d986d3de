use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
q = 0.5
u = [-0.8, -0.5]
a = [1.0, 0.8, 1.2]
nu = [0.0, 0.4, 0.3]
boundary = "step-bernoulli"
path = "NTNT"
levels = [2, 1]
t = 2

[schur]
q = 0.5
u = -0.7
a1 = 1.2
n = 2
t = 2
"#;

fn vertexlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vertexlab")).args(args).current_dir(dir).env_remove("VERTEXLAB_SEED").output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn usage_errors_exit_2() {
    let dir = setup();
    assert_eq!(vertexlab(&["no-such-command"], dir.path()).status.code(), Some(2));
    assert_eq!(vertexlab(&["moments"], dir.path()).status.code(), Some(2));
    assert_eq!(vertexlab(&["verify", "missing.toml"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "q = 2.0\nu=[-1]\na=[1]\nnu=[0]\n").unwrap();
    assert_eq!(vertexlab(&["sample-vertex", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn sample_vertex_is_seeded() {
    let dir = setup();
    let run = |seed: &str| vertexlab(&["sample-vertex", "--config", "model.toml", "--budget", "3", "--seed", seed], dir.path());
    let a = run("5");
    assert!(a.status.success());
    assert_eq!(a.stdout, run("5").stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("sample,N,T,h\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 4 * 3);

    let env = Command::new(env!("CARGO_BIN_EXE_vertexlab"))
        .args(["sample-vertex", "--config", "model.toml", "--budget", "3", "--seed", "6"])
        .current_dir(dir.path())
        .env("VERTEXLAB_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(env.stdout, text.as_bytes());
}

#[test]
fn writes_jsonl_trajectories_to_out_dir() {
    let dir = setup();
    let o = vertexlab(&["sample-qtasep", "--config", "model.toml", "--budget", "2", "--format", "jsonl", "--out", "res"], dir.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("res/trajectories.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2 * 5);
    assert_eq!(rows[0]["move"], "start");
    assert_eq!(rows[4]["N"], 3);
    assert_eq!(rows[4]["T"], 2);
}

#[test]
fn checks_pass_and_report() {
    let dir = setup();
    let o = vertexlab(&["couple-check", "--config", "model.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["pass"], true);

    let o = vertexlab(&["diffops-check", "--config", "model.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0));

    let o = vertexlab(&["moments", "--config", "model.toml", "--format", "jsonl"], dir.path());
    assert!(o.status.success());
    let values: Vec<f64> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["value"].as_f64().unwrap())
        .collect();
    assert_eq!(values.len(), 4);
    // nu_1 = 0, so the centered and plain moments coincide
    assert!(values.iter().all(|v| (v - values[0]).abs() < 1e-10));

    let o = vertexlab(&["schur", "--config", "model.toml"], dir.path());
    assert!(o.status.success());
    for line in String::from_utf8(o.stdout).unwrap().lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[1] - f[2]).abs() < 1e-10, "{line}");
    }
}

#[test]
fn verify_runs_a_suite_file() {
    let dir = setup();
    std::fs::write(dir.path().join("suite.toml"), "name = \"s\"\n[[checks]]\nid = \"formal_identity\"\nbudget = 3\n").unwrap();
    let o = vertexlab(&["verify", "suite.toml", "--out", "rep"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("[PASS] formal_identity"));
    assert!(dir.path().join("rep/formal_identity.json").exists());

    std::fs::write(dir.path().join("empty.toml"), "name = \"empty\"\n").unwrap();
    assert_eq!(vertexlab(&["verify", "empty.toml"], dir.path()).status.code(), Some(0));
}
