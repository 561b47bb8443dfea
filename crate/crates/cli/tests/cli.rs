use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[env]
horizon = 6

[features]
kind = "anchor"
dim = 11

[data]
episodes = 50
seed = 7

[algo]
rho = 0.05

[eval]
p0 = [0.5, 0.7]
episodes = 200
seed = 3

[sweep]
dims = [5, 9]
sizes = [20, 40]
repetitions = 2
bench_dim = 9
bench_episodes = 40
bench_repeats = 1
"#;

fn drrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drrl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = drrl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, CONFIG).unwrap();
    path.to_str().unwrap().to_string()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn collect_train_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    ok(&["collect", "-c", &cfg, "-o", &p("a.jsonl")]);
    ok(&["collect", "-c", &cfg, "-o", &p("b.jsonl")]);
    let a = std::fs::read(p("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(p("b.jsonl")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 50 * 6);

    for algo in ["drvi", "pdrvi", "rpvi", "lsvi"] {
        let policy = p(&format!("{algo}.json"));
        ok(&[
            "train", "-c", &cfg, "-d", &p("a.jsonl"), "-a", algo, "-o", &policy, "--timing", &p("t.csv"),
        ]);
        let timing = std::fs::read_to_string(p("t.csv")).unwrap();
        assert!(timing.starts_with("# config_hash="));
        assert!(data_rows(&timing)[0].starts_with(algo));
    }

    let eval = ok(&["evaluate", "-c", &cfg, "-p", &p("drvi.json")]);
    let rows = data_rows(&eval);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0.5,") && rows[1].starts_with("0.7,"));
    assert_eq!(eval, ok(&["evaluate", "-c", &cfg, "-p", &p("drvi.json")]));

    let single = ok(&["evaluate", "-c", &cfg, "-p", &p("lsvi.json"), "--p0", "0.6", "--episodes", "1"]);
    let row = data_rows(&single)[0];
    assert!(row.starts_with("0.6,") && row.ends_with(",0.0,1"), "{row}");
}

#[test]
fn header_carries_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = ok(&["oracle", "-c", &cfg]);
    let b = ok(&["oracle", "-c", &cfg, "--set", "algo.rho=0.2"]);
    let header = a.lines().next().unwrap();
    assert!(header.starts_with("# config_hash=") && header.ends_with(" seed=7"), "{header}");
    assert_ne!(header, b.lines().next().unwrap());
    assert_eq!(a.lines().nth(1).unwrap(), "state,v_robust,v_nominal");
}

#[test]
fn sweeps_write_sorted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let summary = dir.path().join("s.csv");
    let out = ok(&["error-sweep", "-c", &cfg, "--summary", summary.to_str().unwrap()]);
    let keys: Vec<(usize, usize, usize)> = data_rows(&out)
        .iter()
        .map(|r| {
            let f: Vec<&str> = r.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(keys.len(), 8);
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(data_rows(&std::fs::read_to_string(summary).unwrap()).len(), 4);

    let bench = ok(&["bench", "-c", &cfg]);
    assert_eq!(data_rows(&bench).len(), 2 + 2 * 2);
}

#[test]
fn bandit_honors_resolution() {
    let out = ok(&["bandit", "--resolution", "5"]);
    assert_eq!(out.lines().nth(1).unwrap(), "a,q_sa,q_proj,q_d");
    assert_eq!(data_rows(&out).len(), 5);
    let flat = ok(&["bandit", "--rho", "1e-6", "--resolution", "3"]);
    for row in data_rows(&flat) {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        let mean = 1.0 - v[0];
        assert!(v[1..].iter().all(|q| (q - mean).abs() < 1e-2), "{row}");
    }
}

#[test]
fn failures_are_one_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[data]\nepisodes = 5\n[algo]\nrho = 0.1\n").unwrap();
    let out = drrl(&["collect", "-c", path.to_str().unwrap(), "-o", "/dev/null"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[config]:") && err.contains("data.seed"), "{err}");

    let out = drrl(&["evaluate", "-c", path.to_str().unwrap(), "--set", "data.seed=1", "-p", "/nonexistent.json"]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[io]:"));
    assert!(!drrl(&["bandit", "--rho", "0"]).status.success());
}
