//! End-to-end checks of the `qadmm` binary: file outputs, determinism,
//! exit codes and the delegation of the cost table to the library formulas.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qadmm"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qadmm-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_random(dir: &Path, seed: u64, extra: &[&str]) {
    let mut cmd = bin();
    cmd.args([
        "gen",
        "random",
        "--n",
        "10",
        "--m",
        "15",
        "--rank",
        "2",
        "--seed",
        &seed.to_string(),
        "--out",
    ])
    .arg(dir)
    .args(extra);
    run_ok(&mut cmd);
}

#[test]
fn gen_random_is_byte_deterministic() {
    let root = scratch("gen-det");
    gen_random(&root.join("a"), 7, &[]);
    gen_random(&root.join("b"), 7, &[]);
    gen_random(&root.join("c"), 8, &[]);
    let a = fs::read(root.join("a/instance.dat-s")).unwrap();
    let b = fs::read(root.join("b/instance.dat-s")).unwrap();
    let c = fs::read(root.join("c/instance.dat-s")).unwrap();
    assert_eq!(a, b, "same seed must produce identical bytes");
    assert_ne!(a, c, "different seed must produce a different instance");
    // Manifest hashes agree with the bytes.
    let ma: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("a/instance.json")).unwrap()).unwrap();
    let mb: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("b/instance.json")).unwrap()).unwrap();
    assert_eq!(ma["dat_s_sha256"], mb["dat_s_sha256"]);
}

#[test]
fn gen_maxcut_cycle_writes_instance_files() {
    let dir = scratch("gen-c5");
    let mut cmd = bin();
    cmd.args(["gen", "maxcut-cycle", "--n", "5", "--out"]).arg(&dir);
    run_ok(&mut cmd);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("instance.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "maxcut-cycle");
    assert_eq!(manifest["n"], 5);
    assert_eq!(manifest["m"], 5);
    assert!(dir.join("instance.dat-s").exists());
}

#[test]
fn solve_classical_converges_with_exit_zero() {
    let root = scratch("solve-classical");
    gen_random(&root.join("inst"), 3, &[]);
    let mut cmd = bin();
    cmd.args(["solve", "--instance"])
        .arg(root.join("inst"))
        .args(["--mode", "classical", "--k-max", "60000", "--out"])
        .arg(root.join("run"));
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(0), "expected converged exit code");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("run/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["converged"], true);
    assert!(root.join("run/trace.csv").exists());
    assert!(root.join("run/ledger.json").exists());
}

#[test]
fn solve_exhausting_k_max_exits_two() {
    let root = scratch("solve-kmax");
    gen_random(&root.join("inst"), 4, &[]);
    let mut cmd = bin();
    cmd.args(["solve", "--instance"])
        .arg(root.join("inst"))
        .args(["--mode", "classical", "--k-max", "3", "--out"])
        .arg(root.join("run"));
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn read_trace_columns(path: &Path) -> Vec<(f64, f64, f64)> {
    let mut rows = Vec::new();
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (io, ip, id) = (col("objective"), col("primal"), col("dual"));
    for record in reader.records() {
        let r = record.unwrap();
        rows.push((
            r.get(io).unwrap().parse().unwrap(),
            r.get(ip).unwrap().parse().unwrap(),
            r.get(id).unwrap().parse().unwrap(),
        ));
    }
    rows
}

#[test]
fn qadmm_with_zero_budget_and_exact_prox_reproduces_classical_trace() {
    let root = scratch("solve-equiv");
    // Wide norm bounds keep the feasible-set projections inactive, so the
    // emulated path is numerically identical to the classical scheme.
    gen_random(&root.join("inst"), 5, &["--r-slack", "2.0"]);
    let mut classical = bin();
    classical
        .args(["solve", "--instance"])
        .arg(root.join("inst"))
        .args(["--mode", "classical", "--k-max", "150", "--no-stop", "--out"])
        .arg(root.join("run-classical"));
    let mut emulated = bin();
    emulated
        .args(["solve", "--instance"])
        .arg(root.join("inst"))
        .args([
            "--mode",
            "qadmm",
            "--exact-prox",
            "--k-max",
            "150",
            "--no-stop",
            "--out",
        ])
        .arg(root.join("run-qadmm"));
    assert_eq!(classical.output().unwrap().status.code(), Some(2));
    assert_eq!(emulated.output().unwrap().status.code(), Some(2));
    let a = read_trace_columns(&root.join("run-classical/trace.csv"));
    let b = read_trace_columns(&root.join("run-qadmm/trace.csv"));
    assert_eq!(a.len(), b.len());
    for (k, (ra, rb)) in a.iter().zip(&b).enumerate() {
        assert!(
            (ra.0 - rb.0).abs() <= 1e-10
                && (ra.1 - rb.1).abs() <= 1e-10
                && (ra.2 - rb.2).abs() <= 1e-10,
            "iterate {k}: {ra:?} vs {rb:?}"
        );
    }
}

#[test]
fn solve_without_bounds_on_bare_data_file_is_a_usage_error() {
    let root = scratch("solve-bounds");
    gen_random(&root.join("inst"), 6, &[]);
    let mut cmd = bin();
    cmd.args(["solve", "--instance"])
        .arg(root.join("inst/instance.dat-s"))
        .args(["--mode", "qadmm", "--out"])
        .arg(root.join("run"));
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--r-x"));
    // With explicit bounds the same invocation runs.
    let mut cmd = bin();
    cmd.args(["solve", "--instance"])
        .arg(root.join("inst/instance.dat-s"))
        .args([
            "--mode", "qadmm", "--r-x", "1.0", "--r-y", "6.0", "--r-s", "1.0", "--k-max",
            "5", "--no-stop", "--out",
        ])
        .arg(root.join("run2"));
    assert_eq!(cmd.output().unwrap().status.code(), Some(2));
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let root = scratch("solve-mode");
    gen_random(&root.join("inst"), 2, &[]);
    let mut cmd = bin();
    cmd.args(["solve", "--instance"])
        .arg(root.join("inst"))
        .args(["--mode", "quantum-annealer", "--out"])
        .arg(root.join("run"));
    assert_eq!(cmd.output().unwrap().status.code(), Some(64));
}

#[test]
fn poly_writes_certificates_and_keeps_large_eps_cheap() {
    let dir = scratch("poly");
    let mut cmd = bin();
    cmd.args(["poly", "--eps", "0.05", "--out"]).arg(&dir);
    let out = run_ok(&mut cmd);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("eps,degree,eps_certified"));
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("poly-eps0.05.json")).unwrap())
            .unwrap();
    assert!(cert["eps_certified"].as_f64().unwrap() <= 0.1);
    assert_eq!(cert["degree"].as_u64().unwrap() + 1, cert["coefficients"].as_array().unwrap().len() as u64);

    let mut cmd = bin();
    cmd.args(["poly", "--eps", "0.5", "--out"]).arg(&dir);
    run_ok(&mut cmd);
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("poly-eps0.5.json")).unwrap())
            .unwrap();
    assert!(cert["degree"].as_u64().unwrap() <= 16);
}

#[test]
fn poly_sweep_prints_a_degree_table() {
    let dir = scratch("poly-sweep");
    let mut cmd = bin();
    cmd.args(["poly", "--sweep", "0.1,0.05", "--out"]).arg(&dir);
    let out = run_ok(&mut cmd);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let data_lines: Vec<&str> =
        stdout.lines().filter(|l| l.starts_with("0.1") || l.starts_with("0.05")).collect();
    assert_eq!(data_lines.len(), 2, "stdout: {stdout}");
}

#[test]
fn cost_single_point_delegates_to_the_library_formula() {
    let mut cmd = bin();
    cmd.args([
        "cost", "--n", "3", "--m", "4", "--s-a", "9", "--kappa-sq", "2.0", "--r-x", "1.5",
        "--r-y", "0.5", "--r-s", "2.5", "--delta", "0.25", "--eps", "0.5",
    ]);
    let out = run_ok(&mut cmd);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let mut reader = csv::Reader::from_reader(stdout.as_bytes());
    let headers = reader.headers().unwrap().clone();
    for name in ["qadmm", "classical_admm", "qmwu", "qipm"] {
        assert!(headers.iter().any(|h| h == name), "missing column {name}");
    }
    let record = reader.records().next().unwrap().unwrap();
    let col = |name: &str| -> f64 {
        let idx = headers.iter().position(|h| h == name).unwrap();
        record.get(idx).unwrap().parse().unwrap()
    };
    let expect = qadmm_core::qemul::iteration_cost(&qadmm_core::qemul::CostParams {
        n: 3,
        m: 4,
        kappa_sq: 2.0,
        r_x: 1.5,
        r_y: 0.5,
        r_s: 2.5,
        s_a: 9,
        delta_hat_y: 0.25,
        delta_y: 0.25,
        delta_s: 0.25,
        delta_x: 0.25,
        eps: 0.5,
    })
    .unwrap();
    assert_eq!(col("t_quant"), expect.t_quant);
    assert_eq!(col("t_classic"), expect.t_classic);
}

#[test]
fn compare_manifest_cross_links_child_runs() {
    let root = scratch("compare");
    gen_random(&root.join("inst"), 9, &[]);
    let mut cmd = bin();
    cmd.args(["compare", "--instance"])
        .arg(root.join("inst"))
        .args([
            "--deltas",
            "1e-1,1e-2",
            "--exact-prox",
            "--k-max-cap",
            "2000",
            "--out",
        ])
        .arg(root.join("cmp"));
    run_ok(&mut cmd);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("cmp/manifest.json")).unwrap())
            .unwrap();
    let children = manifest["children"].as_array().unwrap();
    assert_eq!(children.len(), 2);
    for child in children {
        let child_dir = root.join("cmp").join(child.as_str().unwrap());
        assert!(child_dir.join("trace.csv").exists(), "missing {}", child_dir.display());
        assert!(child_dir.join("ledger.json").exists());
    }
    assert!(root.join("cmp/summary.csv").exists());
}

#[test]
fn plot_emits_tidy_long_format() {
    let root = scratch("plot");
    gen_random(&root.join("inst"), 1, &[]);
    let mut cmd = bin();
    cmd.args(["solve", "--instance"])
        .arg(root.join("inst"))
        .args(["--mode", "classical", "--k-max", "10", "--no-stop", "--out"])
        .arg(root.join("run"));
    cmd.output().unwrap();
    let mut cmd = bin();
    cmd.args(["plot", "--trace"])
        .arg(root.join("run/trace.csv"))
        .args(["--out"])
        .arg(root.join("tidy.csv"));
    run_ok(&mut cmd);
    let mut reader = csv::Reader::from_path(root.join("tidy.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        vec!["k", "series", "value"]
    );
    let rows: Vec<_> = reader.records().collect();
    assert!(rows.len() >= 10 * 10, "expected a melted row per (k, series) pair");
}

#[test]
fn env_var_sets_the_default_output_directory() {
    let root = scratch("envvar");
    let mut cmd = bin();
    cmd.env("QADMM_OUT_DIR", root.join("from-env"))
        .args(["gen", "random", "--n", "8", "--m", "10", "--rank", "2", "--seed", "0"]);
    run_ok(&mut cmd);
    assert!(root.join("from-env/instance.dat-s").exists());
}
