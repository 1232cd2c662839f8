//! End-to-end CLI tests: exit codes, output determinism, and the canned
//! demos against the shipped input files.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latsym"))
}

fn inputs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../inputs")
        .canonicalize()
        .expect("inputs directory")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad JSON: {e}\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn algebra_check_exit_codes() {
    let toda = inputs().join("toda_algebra.json");
    let out = run(&["algebra", "check", toda.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["valid"], serde_json::json!(true));

    // an abelian algebra is valid
    let dir = tempfile::tempdir().unwrap();
    let abelian = dir.path().join("abelian_2d.json");
    std::fs::write(
        &abelian,
        r#"{"dim": 2, "basis": ["X1", "X2"], "brackets": []}"#,
    )
    .unwrap();
    let out = run(&["algebra", "check", abelian.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    // perturbing Toda's [X3,X4] target breaks Jacobi: exit 1 with indices
    let broken = dir.path().join("broken_jacobi.json");
    std::fs::write(
        &broken,
        r#"{"dim": 5, "basis": ["X1","X2","X3","X4","X5"], "brackets": [
            {"i": 2, "j": 5, "coeffs": {"1": "-2/h"}},
            {"i": 3, "j": 4, "coeffs": {"3": "1"}},
            {"i": 3, "j": 5, "coeffs": {"3": "1"}},
            {"i": 4, "j": 5, "coeffs": {"4": "-1"}}
        ]}"#,
    )
    .unwrap();
    let out = run(&["algebra", "check", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert!(v["report"]
        .as_str()
        .unwrap()
        .contains("Jacobi identity violated"));

    // unreadable file: exit 2
    let out = run(&["algebra", "check", "/nonexistent.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn adjoint_of_toda_c5() {
    let toda = inputs().join("toda_algebra.json");
    let out = run(&["algebra", "adjoint", toda.to_str().unwrap(), "-i", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    // (1,2) entry is 2/h = 6/7 at the default h = 7/3
    assert_eq!(v["matrix_at_h"][0][1], serde_json::json!("6/7"));
    assert_eq!(v["matrix_at_h"][2][2], serde_json::json!("-1"));
}

#[test]
fn aut_system_reports_the_linear_zeros() {
    let toda = inputs().join("toda_algebra.json");
    let out = run(&["aut", "system", toda.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let zeros: Vec<&str> = v["linear_zeros"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap())
        .collect();
    for b in ["b21", "b23", "b24", "b31", "b41", "b51", "b53", "b54"] {
        assert!(zeros.contains(&b), "missing {b}");
    }
    assert_eq!(zeros.len(), 8);
}

#[test]
fn aut_normalize_emits_two_toda_families() {
    let toda = inputs().join("toda_algebra.json");
    let out = run(&["aut", "normalize", toda.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["families"].as_array().unwrap().len(), 2);
}

#[test]
fn discrete_pipeline_on_files_matches_demo() {
    let dir = inputs();
    let out = run(&[
        "discrete",
        dir.join("toda_algebra.json").to_str().unwrap(),
        dir.join("toda_fields.json").to_str().unwrap(),
        dir.join("toda_equation.json").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    let displays: Vec<&str> = v["discrete"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["display"].as_str().unwrap())
        .collect();
    assert_eq!(
        displays,
        vec![
            "t -> (-1)*t, u -> u, x -> x",
            "t -> t, u -> (-1)*u, x -> (-1)*x"
        ]
    );
}

#[test]
fn verify_detects_mismatched_algebra() {
    let dir = inputs();
    let tmp = tempfile::tempdir().unwrap();
    // declare an abelian 5-dim algebra; the Toda fields recover a
    // non-abelian one, so the verify stage must fail with exit 3
    let wrong = tmp.path().join("wrong.json");
    std::fs::write(
        &wrong,
        r#"{"dim": 5, "basis": ["X1","X2","X3","X4","X5"], "brackets": []}"#,
    )
    .unwrap();
    let out = run(&[
        "verify",
        wrong.to_str().unwrap(),
        dir.join("toda_fields.json").to_str().unwrap(),
        dir.join("toda_equation.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    // and the correct declaration passes
    let out = run(&[
        "verify",
        dir.join("toda_algebra.json").to_str().unwrap(),
        dir.join("toda_fields.json").to_str().unwrap(),
        dir.join("toda_equation.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["matches_declared"], serde_json::json!(true));
}

#[test]
fn dp1_command_three_regimes() {
    let case = |a: &str, b: &str, g: &str| -> serde_json::Value {
        let out = run(&["dp1", "--alpha", a, "--beta", b, "--gamma", g]);
        assert_eq!(out.status.code(), Some(0));
        stdout_json(&out)
    };
    let v = case("1", "3", "6");
    assert_eq!(v["continuous"]["dimension"], serde_json::json!(0));
    assert_eq!(v["discrete"].as_array().unwrap().len(), 0);

    let v = case("0", "0", "6");
    assert_eq!(v["continuous"]["dimension"], serde_json::json!(4));
    assert_eq!(v["discrete"].as_array().unwrap().len(), 0);

    let v = case("1", "3", "0");
    assert_eq!(v["discrete"].as_array().unwrap().len(), 1);
    assert_eq!(
        v["discrete"][0]["display"],
        serde_json::json!("u -> (-1)*u, x -> x")
    );
    // the closed-form window-recursion residual is reported and tiny
    assert!(v["phi0_closed_form_max_residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn json_output_is_deterministic_across_runs() {
    let dir = inputs();
    let algebra = dir.join("toda_algebra.json");
    let fields = dir.join("toda_fields.json");
    let equation = dir.join("toda_equation.json");
    let args = [
        "discrete",
        algebra.to_str().unwrap(),
        fields.to_str().unwrap(),
        equation.to_str().unwrap(),
        "--seed",
        "123",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout, "same seed must give identical bytes");
}

#[test]
fn seed_env_var_overrides_flag() {
    let toda = inputs().join("toda_algebra.json");
    // the seed only affects sampling, not validity, so both run fine; this
    // checks the env var is accepted and a bad value is rejected
    let out = bin()
        .args(["algebra", "check", toda.to_str().unwrap()])
        .env("LATTICE_LIE_SEED", "777")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin()
        .args(["algebra", "check", toda.to_str().unwrap()])
        .env("LATTICE_LIE_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_file_and_text_format_renders() {
    let dir = inputs();
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("report.json");
    let out = run(&[
        "algebra",
        "check",
        dir.join("toda_algebra.json").to_str().unwrap(),
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(&target).unwrap();
    assert!(written.contains("\"valid\": true"));

    let out = run(&[
        "algebra",
        "check",
        dir.join("toda_algebra.json").to_str().unwrap(),
        "--format",
        "text",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("valid: true"));
}

#[test]
fn invalid_run_config_is_rejected() {
    let toda = inputs().join("toda_algebra.json");
    let out = run(&["algebra", "check", toda.to_str().unwrap(), "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["algebra", "check", toda.to_str().unwrap(), "--tol", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["algebra", "check", toda.to_str().unwrap(), "--h", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn demo_toda_runs_quickly_and_correctly() {
    let started = std::time::Instant::now();
    let out = run(&["demo", "toda"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["discrete"].as_array().unwrap().len(), 2);
    assert!(
        started.elapsed().as_secs() < 10,
        "demo must finish in under 10 s"
    );
}

#[test]
fn demo_dp1_covers_the_regimes() {
    let started = std::time::Instant::now();
    let out = run(&["demo", "dp1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let cases = v["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 4);
    let dims: Vec<i64> = cases
        .iter()
        .map(|c| c["continuous"]["dimension"].as_i64().unwrap())
        .collect();
    assert_eq!(dims, vec![0, 1, 4, 0]);
    assert_eq!(cases[3]["discrete"].as_array().unwrap().len(), 1);
    assert!(started.elapsed().as_secs() < 10);
}

#[test]
fn demo_volterra_reports_family_with_caveat() {
    let out = run(&["demo", "volterra"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(
        v["determining_equation"]["status"],
        serde_json::json!("underdetermined")
    );
    assert!(v["caveat"].as_str().unwrap().contains("derived"));
    let fams = v["automorphism_route"]["admissible_families"]
        .as_array()
        .unwrap();
    assert_eq!(fams.len(), 1);
    let reps = fams[0]["representatives"].as_array().unwrap();
    assert!(reps
        .iter()
        .any(|r| r["class"] == serde_json::json!("discrete")));
    assert!(reps
        .iter()
        .any(|r| r["class"] == serde_json::json!("continuous")));
}

#[test]
fn shipped_input_files_parse() {
    use latsym_core::latfield::{DifferenceSystem, LatticeVectorField};
    use latsym_core::liealg::LieAlgebra;
    let dir = inputs();
    let read = |name: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
    };
    LieAlgebra::from_json(&read("toda_algebra.json")).unwrap();
    for name in [
        "toda_equation.json",
        "dp1_equation.json",
        "volterra_equation.json",
    ] {
        DifferenceSystem::from_json(&read(name)).unwrap();
    }
    for name in ["toda_fields.json", "volterra_fields.json"] {
        for f in read(name).as_array().unwrap() {
            LatticeVectorField::from_json(f).unwrap();
        }
    }
}

#[test]
fn realize_command_reports_case_b_rejection() {
    let dir = inputs();
    let out = run(&[
        "realize",
        dir.join("toda_algebra.json").to_str().unwrap(),
        dir.join("toda_fields.json").to_str().unwrap(),
        dir.join("toda_equation.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let entries = v["realizations"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    let diagnostics: Vec<String> = entries
        .iter()
        .flat_map(|e| {
            e["diagnostics"]
                .as_array()
                .unwrap()
                .iter()
                .map(|d| d.as_str().unwrap().to_string())
        })
        .collect();
    assert!(diagnostics
        .iter()
        .any(|d| d.contains("no affine realization")));
}
