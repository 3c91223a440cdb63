use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shnl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shnl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary should spawn")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Byte compare two output directories, skipping the wall-clock manifest.
fn assert_dirs_identical(a: &Path, b: &Path) {
    let mut names: Vec<String> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for name in names {
        if name == "manifest.json" {
            continue;
        }
        let pa = a.join(&name);
        let pb = b.join(&name);
        if pa.is_dir() {
            assert_dirs_identical(&pa, &pb);
        } else {
            assert_eq!(
                fs::read(&pa).unwrap(),
                fs::read(&pb).unwrap(),
                "{name} differs between runs"
            );
        }
    }
}

const DISPERSION: &str = r#"
[domain]
sizes = [64]
lengths = [3.141592653589793]

[model]
variant = "local"
r = 0.5
gamma = 0.0
nonlinearity = "zero"

[stepper]
dt = 1e-4
t_final = 0.05

[analysis]
modes = [0, 1, 2]
"#;

#[test]
fn dispersion_test_measures_the_symbol() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", DISPERSION);
    let out = shnl(&["dispersion-test", "--config", &cfg, "--out", "d"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("d/dispersion.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mode,r,measured,predicted,rel_err");
    assert_eq!(lines.len(), 4);

    let report = read_json(&dir.path().join("d/dispersion.json"));
    assert_eq!(report["pass"], true);
    let rows = report["rows"].as_array().unwrap();
    let predicted: Vec<f64> = rows
        .iter()
        .map(|r| r["predicted"].as_f64().unwrap())
        .collect();
    assert_eq!(predicted, vec![-0.5, 0.5, -8.5]);
    for row in rows {
        assert!(row["rel_err"].as_f64().unwrap() <= 1e-6);
    }

    let manifest = read_json(&dir.path().join("d/manifest.json"));
    assert_eq!(manifest["command"], "dispersion-test");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() > 0.0);
    assert!(!dir.path().join("d/failure.json").exists());
}

#[test]
fn dispersion_failure_is_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    // an unreachable tolerance turns the pass into a reported failure
    let cfg = write_config(
        dir.path(),
        "run.toml",
        &format!("{DISPERSION}rel_tol = 1e-18\n"),
    );
    let out = shnl(&["dispersion-test", "--config", &cfg, "--out", "d"], dir.path());
    assert!(!out.status.success());
    let failure = read_json(&dir.path().join("d/failure.json"));
    assert_eq!(failure["tag"], "dispersion-failed");
    assert!(dir.path().join("d/dispersion.csv").exists());
}

const SIMULATE: &str = r#"
[domain]
sizes = [64]

[model]
variant = "one-kernel"
r = 0.1
gamma = 0.5
eps = 0.2

[initial]
kind = "random-smooth"
seed = 3
cutoff = 6
amplitude = 0.5

[stepper]
dt = 1e-3
t_final = 0.1
"#;

#[test]
fn simulate_writes_reports_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SIMULATE);

    for out_name in ["a", "b"] {
        let out = shnl(&["simulate", "--config", &cfg, "--out", out_name], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_dirs_identical(&dir.path().join("a"), &dir.path().join("b"));

    let energy = fs::read_to_string(dir.path().join("a/energy.csv")).unwrap();
    let lines: Vec<&str> = energy.lines().collect();
    assert_eq!(
        lines[0],
        "t,local_part,nonlocal_part,total,l4_bound,e_k,e_q,eq_bound_rhs"
    );
    assert_eq!(lines.len(), 102, "one energy row per step plus the start");
    // a gradient flow run must dissipate
    let totals: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(totals.windows(2).all(|w| w[1] <= w[0] + 1e-10));

    let summary = read_json(&dir.path().join("a/summary.json"));
    assert_eq!(summary["base_steps"], 100);
    assert_eq!(summary["snapshots"], 101);
    assert!(summary["bounds"]["max_h2"].as_f64().unwrap() > 0.0);

    let index = read_json(&dir.path().join("a/trajectory/index.json"));
    assert_eq!(index["times"].as_array().unwrap().len(), 101);

    // a different seed changes the numbers
    let out = shnl(
        &["simulate", "--config", &cfg, "--out", "c", "--seed", "99"],
        dir.path(),
    );
    assert!(out.status.success());
    let other = fs::read_to_string(dir.path().join("c/energy.csv")).unwrap();
    assert_ne!(energy, other);
}

#[test]
fn blowup_failure_names_step_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
[domain]
sizes = [64]

[model]
variant = "two-kernel"
r = 1.0
p = 1
q = 2
sign_convention = "as-printed"
eps = 0.3

[initial]
kind = "constant"
value = 3.0

[stepper]
scheme = "imex1"
dt = 1e-2
t_final = 2.0
"#,
    );
    let out = shnl(&["simulate", "--config", &cfg, "--out", "x"], dir.path());
    assert!(!out.status.success());
    let failure = read_json(&dir.path().join("x/failure.json"));
    assert_eq!(failure["tag"], "non-finite");
    assert!(failure["step"].as_u64().unwrap() > 0);
    assert!(failure["time"].as_f64().unwrap() > 0.0);
    // the manifest is still written for failed runs
    assert!(dir.path().join("x/manifest.json").exists());
}

#[test]
fn degenerate_sweep_reports_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
[domain]
sizes = [32]

[model]
variant = "one-kernel"
r = 0.1
gamma = 0.0
eps = 0.2

[initial]
kind = "cosine-modes"

[[initial.modes]]
k = [1]
amplitude = 0.3

[stepper]
dt = 1e-3
t_final = 0.05

[sweep]
eps_list = [0.4, 0.2]
"#,
    );
    let out = shnl(&["sweep", "--config", &cfg, "--out", "s"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "eps,norm_kind,s_or_alpha,restriction,error,status");
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[5], "ok");
        assert!(cols[4].parse::<f64>().unwrap() <= 1e-10, "{line}");
    }

    let uniform = read_json(&dir.path().join("s/uniform_bounds.json"));
    for row in uniform["rows"].as_array().unwrap() {
        assert_eq!(row["flagged"], false);
    }
}

#[test]
fn failed_sweep_rows_surface_in_the_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
[domain]
sizes = [32]

[model]
variant = "one-kernel"
eps = 0.2

[initial]
kind = "cosine-modes"

[[initial.modes]]
k = [1]
amplitude = 0.3

[stepper]
dt = 1e-3
t_final = 0.02

[sweep]
eps_list = [0.4, 0.001]
"#,
    );
    let out = shnl(&["sweep", "--config", &cfg, "--out", "s"], dir.path());
    assert!(!out.status.success());
    let failure = read_json(&dir.path().join("s/failure.json"));
    assert_eq!(failure["tag"], "sweep-rows-failed");
    assert_eq!(failure["rows"].as_array().unwrap().len(), 1);

    // the report still carries the healthy row
    let csv = fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("0.4,") && l.ends_with(",ok")));
    assert!(csv.lines().any(|l| l.starts_with("0.001,") && !l.ends_with(",ok")));
}

#[test]
fn kernel_check_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(
        dir.path(),
        "good.toml",
        r#"
[domain]
sizes = [128]

[model]
variant = "two-kernel"
p = 1
q = 2
eps = 0.2

[kernel_q]
amplitude = 0.5
"#,
    );
    let out = shnl(&["kernel-check", "--config", &good, "--out", "g"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("g/kernel_check.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["smoothing"]["admissibility"]["unit_mass"], true);
    assert_eq!(report["domination"]["pass"], true);
    assert_eq!(report["domination"]["violations"], 0);

    // doubling the smoothing amplitude breaks unit mass
    let bad = write_config(
        dir.path(),
        "bad.toml",
        r#"
[domain]
sizes = [128]

[model]
variant = "one-kernel"
eps = 0.2

[kernel]
amplitude = 2.0
"#,
    );
    let out = shnl(&["kernel-check", "--config", &bad, "--out", "b"], dir.path());
    assert!(!out.status.success());
    let report = read_json(&dir.path().join("b/kernel_check.json"));
    assert_eq!(report["pass"], false);
    assert_eq!(report["smoothing"]["admissibility"]["unit_mass"], false);
    let failure = read_json(&dir.path().join("b/failure.json"));
    assert_eq!(failure["tag"], "kernel-check-failed");
}

#[test]
fn config_gate_messages_reach_the_user() {
    let dir = tempfile::tempdir().unwrap();
    let odd_q = write_config(
        dir.path(),
        "odd.toml",
        "[domain]\nsizes = [64]\n[model]\nvariant = \"two-kernel\"\np = 1\nq = 3\neps = 0.2\n",
    );
    let out = shnl(&["simulate", "--config", &odd_q], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("even"));

    let low_gamma = write_config(
        dir.path(),
        "gamma.toml",
        "[domain]\nsizes = [64]\n[model]\nvariant = \"local\"\ngamma = -2.0\n",
    );
    let out = shnl(&["simulate", "--config", &low_gamma], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("-c_N"));

    let typo = write_config(
        dir.path(),
        "typo.toml",
        "[domain]\nsizes = [64]\n[model]\nvariant = \"local\"\n[stepper]\ndt_final = 1.0\n",
    );
    let out = shnl(&["simulate", "--config", &typo], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown field"), "{stderr}");

    let out = shnl(&["simulate"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
