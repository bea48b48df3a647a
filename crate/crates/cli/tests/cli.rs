use std::path::Path;
use std::process::{Command, Output};

fn groupsieve(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groupsieve"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}.report.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn enumerate_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = groupsieve(&["enumerate", "--preset", "lubotzky", "--k", "3", "--primes", "5"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = report(dir.path(), "enumerate");
    assert_eq!(v["result"]["order"], 120);
    assert_eq!(v["config"]["group"]["preset"], "lubotzky");
    let csv = std::fs::read_to_string(dir.path().join("enumerate.rows.csv")).unwrap();
    assert!(csv.starts_with("primes,order,"));
}

#[test]
fn bounded_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.toml");
    std::fs::write(
        &cfg,
        "name = \"b57\"\nexperiment = \"bounded\"\n[group]\npreset = \"lubotzky\"\nk = 3\nidentity = true\n\
         [primes]\nlist = [5, 7]\n[family]\nkind = \"poly-zero\"\npolynomial = \"a^2 + d^2\"\n[spectrum]\nn-max = 20\n",
    )
    .unwrap();
    let out = groupsieve(&["sieve", "--mode", "bounded", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = report(dir.path(), "b57");
    assert!((v["result"]["limit"].as_f64().unwrap() - 0.6875).abs() < 1e-15);
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 21);
    assert_eq!(v["result"]["all_pass"], true);
}

#[test]
fn invalid_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "experiment = \"bounded\"\n[group]\npreset = \"lubotzky\"\nk = 3\n[primes]\nlist = [3, 5]\n\
         [family]\nkind = \"poly-zero\"\npolynomial = \"a\"\n",
    )
    .unwrap();
    let out = groupsieve(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("prime 3") && err.contains("line 6"), "{err}");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);

    std::fs::write(&cfg, "experiment = \"enumerate\"\nbogus = 1\n").unwrap();
    let out = groupsieve(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn infeasible_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = groupsieve(
        &["enumerate", "--preset", "lubotzky", "--k", "3", "--primes", "7", "--cap", "100"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn reruns_differ_only_in_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sieve", "--mode", "small", "--preset", "lubotzky", "--k", "3", "--identity", "--family", "poly-zero",
        "--polynomial", "a^2+d^2", "--exclude", "3", "--n-grid", "4,8", "--samples", "2000", "--growth-base", "2",
        "--kappa", "1", "--seed", "5",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(groupsieve(&[&args[..], &["--workers", "1"]].concat(), a.path()).status.success());
    assert!(groupsieve(&[&args[..], &["--workers", "2"]].concat(), b.path()).status.success());
    let strip = |d: &Path| {
        let mut v = report(d, "small-sieve");
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    let csv = |d: &Path| std::fs::read(d.join("small-sieve.rows.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    drop(dir);
}

#[test]
fn subcommand_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("e.toml");
    std::fs::write(&cfg, "experiment = \"enumerate\"\n[group]\npreset = \"lubotzky\"\nk = 3\n[primes]\nlist = [5]\n").unwrap();
    let out = groupsieve(&["audit", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
