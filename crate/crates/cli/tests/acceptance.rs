//! Criterion 8 of the acceptance suite: `simulate` artifacts are
//! byte-identical across repeated runs and across thread counts for a
//! fixed seed. Also pins the CLI error contract (exit 2 with a
//! machine-parsable line on bad input).

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_backbone"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(
        &path,
        r#"{
            "mechanism": {"alpha": -1.0, "beta": 1.0, "jumps": {"type": "zero"}},
            "immigration": {"delta": 1.0, "jumps": {"type": "zero"}},
            "initial_mass": 1.0,
            "horizon": 1.0,
            "replicates": 4000,
            "seed": 1
        }"#,
    )
    .unwrap();
    path
}

fn tmp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("backbone-accept-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn criterion_8_simulate_is_byte_identical_across_runs_and_threads() {
    let dir = tmp_dir("det");
    let cfg = write_config(&dir);
    let mut outputs = Vec::new();
    for (label, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.join(label);
        let status = bin()
            .args([
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
                "simulate",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("samples.csv")).unwrap());
    }
    assert_eq!(
        outputs[0], outputs[1],
        "repeated runs must agree byte for byte"
    );
    assert_eq!(
        outputs[0], outputs[2],
        "thread counts must not change output"
    );
    println!(
        "criterion 8 PASS determinism: {} bytes identical across 2 runs and threads {{1, 4}}",
        outputs[0].len()
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn verify_passes_on_the_shipped_scenario() {
    let dir = tmp_dir("verify");
    let cfg = write_config(&dir);
    let output = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--replicates",
            "20000",
            "--threads",
            "4",
            "verify",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let summary = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary.contains("verdict: PASS"), "{summary}");
    assert!(summary.contains("# master-seed: 1"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn bad_configs_exit_2_with_machine_parsable_error() {
    let dir = tmp_dir("errors");
    // Subcritical mechanism.
    let cfg = dir.join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"mechanism": {"alpha": 1.0, "beta": 1.0, "jumps": {"type": "zero"}}}"#,
    )
    .unwrap();
    let output = bin()
        .args(["--config", cfg.to_str().unwrap(), "validate"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.starts_with("error[validation]:"), "stderr: {stderr}");

    // Missing file.
    let output = bin()
        .args([
            "--config",
            dir.join("nope.json").to_str().unwrap(),
            "validate",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error[config]:"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn sampler_capability_errors_exit_2() {
    // beta = 0 jump family: analytic layer fine, simulation unavailable.
    let dir = tmp_dir("capability");
    let cfg = dir.join("beta0.json");
    std::fs::write(
        &cfg,
        r#"{
            "mechanism": {"alpha": -1.0, "beta": 0.0,
                "jumps": {"type": "compound_exponential", "rate": 8.0, "decay": 2.0}},
            "replicates": 200
        }"#,
    )
    .unwrap();
    let ok = bin()
        .args(["--config", cfg.to_str().unwrap(), "validate"])
        .output()
        .unwrap();
    assert_eq!(
        ok.status.code(),
        Some(0),
        "analytic layer must accept beta = 0"
    );
    let out_dir = dir.join("out");
    let sim = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "simulate",
        ])
        .output()
        .unwrap();
    assert_eq!(sim.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&sim.stderr).starts_with("error[capability]:"));
    let _ = std::fs::remove_dir_all(&dir);
}
