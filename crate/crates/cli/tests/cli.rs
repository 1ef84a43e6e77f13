use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nehari_cli::config::{parse_config, parse_config_str};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nehari(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nehari"))
        .args(&args[..1])
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constants_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = nehari(
        &["constants"],
        &configs().join("acceptance.toml"),
        dir.path(),
    );
    assert!(o.status.success());
    let v = json(&dir.path().join("constants.json"));
    assert_eq!(v["schema"], 1);
    for key in ["S_q", "S_pq", "delta", "c", "lambda1"] {
        assert!(v[key].as_f64().unwrap() > 0.0, "{key}");
    }
}

#[test]
fn solve_orders_energies_and_dumps_fields() {
    let dir = tempfile::tempdir().unwrap();
    let o = nehari(&["solve"], &configs().join("acceptance.toml"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("solution.json"));
    assert!(v["J_plus"].as_f64().unwrap() < 0.0);
    assert!(v["J_minus"].as_f64().unwrap() > 0.0);
    assert_eq!(v["complete"], true);
    for f in ["u_plus", "v_plus", "u_minus", "v_minus"] {
        let file = std::fs::File::open(dir.path().join(format!("{f}.txt"))).unwrap();
        let field = nehari_core::grid::read_field(std::io::BufReader::new(file)).unwrap();
        assert!(field.min() > 0.0);
    }
}

#[test]
fn classify_reports_both_initializers() {
    let dir = tempfile::tempdir().unwrap();
    let o = nehari(
        &["classify"],
        &configs().join("sign_changing.toml"),
        dir.path(),
    );
    assert!(o.status.success());
    let v = json(&dir.path().join("classify.json"));
    assert_eq!(v["plus_initializer"]["geometry"]["case"], "MinThenMax");
    assert_eq!(
        v["minus_initializer"]["geometry"]["roots"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = nehari(&["verify"], &configs().join("acceptance.toml"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("verify.json"));
    assert_eq!(v["failed_invariants"], 0);
    assert!(v["suites"].as_array().unwrap().len() >= 8);
}

#[test]
fn bad_config_gives_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "n = 21\nq = 2.5\nalpha = 2\nbeta = 2\nweight_a = \"const:1\"\nweight_b = \"const:1\"\nlambda = 1\n",
    )
    .unwrap();
    let o = nehari(&["solve"], &cfg, &dir.path().join("out"));
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["schema"], 1);
    assert_eq!(err["error"]["key"], "q");
}

#[test]
fn partial_solve_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("high.toml");
    std::fs::write(
        &cfg,
        "n = 41\nq = 1.5\nalpha = 2\nbeta = 2\nweight_a = \"const:1\"\nweight_b = \"const:1\"\nlambda_fraction = 50\n",
    )
    .unwrap();
    let o = nehari(&["solve"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "partial");
    let v = json(&dir.path().join("out/solution.json"));
    assert_eq!(v["complete"], false);
    assert_eq!(v["minus"]["converged"], false);
}

#[test]
fn weight_file_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let grid = nehari_core::Grid::new(1, 31).unwrap();
    let a = nehari_core::Field::from_fn(grid, |x, _| 1.0 - x);
    std::fs::write(
        dir.path().join("a.txt"),
        nehari_core::grid::format_field(&a),
    )
    .unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "n = 31\nq = 1.5\nalpha = 2\nbeta = 2\nweight_a = \"a.txt\"\nweight_b = \"const:1\"\nlambda_fraction = 0.5\n",
    )
    .unwrap();
    let c = parse_config(&cfg).unwrap();
    assert_eq!(c, parse_config_str(&c.echo(), Path::new("/")).unwrap());
    let o = nehari(&["solve"], &cfg, &dir.path().join("out"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(
        &cfg,
        std::fs::read_to_string(&cfg)
            .unwrap()
            .replace("n = 31", "n = 32"),
    )
    .unwrap();
    assert_eq!(
        parse_config(&cfg).unwrap_err().key.as_deref(),
        Some("weight_a")
    );
}

#[test]
fn seed_flag_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let o = nehari(
        &["constants", "--seed", "99"],
        &configs().join("acceptance.toml"),
        dir.path(),
    );
    assert!(o.status.success());
    let echoed = parse_config(&dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed.options.seed, 99);
    assert_eq!(json(&dir.path().join("constants.json"))["seed"], 99);
}

#[test]
fn repeated_runs_identical() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["classify", "constants"] {
        let a = dir.path().join(format!("{sub}1"));
        let b = dir.path().join(format!("{sub}2"));
        assert!(nehari(&[sub], &configs().join("square.toml"), &a)
            .status
            .success());
        assert!(nehari(&[sub], &configs().join("square.toml"), &b)
            .status
            .success());
        let name = format!("{sub}.json");
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap()
        );
    }
}
