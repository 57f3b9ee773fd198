//! End-to-end certification on jump families: the full dressed simulation
//! (branch grafts, batched immigration, jump dressing with survival
//! thinning, inversion-table excursion laws, tail aggregates) against the
//! analytic generating functional. Slower than the quadratic acceptance
//! runs, so the grids are small; thresholds stay at the 4-sigma level with
//! the documented table-budget slack.

use csbp_backbone::config::ScenarioConfig;
use csbp_backbone::verify::{joint_samples, poissonization_check, score_joint_samples};

fn scenario(json: &str) -> ScenarioConfig {
    ScenarioConfig::from_json(json).unwrap()
}

fn run_grid(cfg: &ScenarioConfig) {
    let engine = cfg.build_engine().unwrap();
    assert_eq!(engine.kernel().backend_name(), "generic-inversion");
    let samples = joint_samples(&engine, cfg.replicates, cfg.seed, 4).unwrap();
    let report = score_joint_samples(
        &engine,
        &samples,
        &cfg.r_grid,
        &cfg.theta_grid,
        cfg.seed,
        &cfg.digest(),
    )
    .unwrap();
    for row in &report.rows {
        assert!(
            row.z.abs() < 4.0 || (row.estimate - row.target).abs() < 4.0 * row.std_err + 5e-4,
            "joint z = {:.2} at (r={}, theta={}): {} vs {}",
            row.z,
            row.r,
            row.theta,
            row.estimate,
            row.target
        );
    }
    let ls = engine.solver().lambda_star();
    for &r in &cfg.r_grid {
        for &theta in &cfg.theta_grid {
            let p = poissonization_check(&samples, ls, r, theta).unwrap();
            assert!(
                p.z.abs() < 4.0 || p.mean_diff.abs() < 4.0 * p.std_err + 5e-4,
                "paired z = {:.2} at (r={r}, theta={theta})",
                p.z
            );
        }
    }
}

#[test]
fn atoms_branching_with_compound_exponential_immigration() {
    run_grid(&scenario(
        r#"{
            "mechanism": {"alpha": -0.5, "beta": 0.5, "jumps": {
                "type": "finite_atoms",
                "atoms": [{"size": 0.8, "mass": 0.5}, {"size": 2.0, "mass": 0.75}]
            }},
            "immigration": {"delta": 0.3, "jumps": {
                "type": "compound_exponential", "rate": 0.8, "decay": 2.0
            }},
            "initial_mass": 0.8,
            "horizon": 1.0,
            "r_grid": [0.3, 0.8, 1.0],
            "theta_grid": [0.0, 0.6, 1.5],
            "replicates": 15000,
            "seed": 2,
            "threads": 4,
            "kernel_tables": {"gap_columns": 24, "cdf_nodes": 130, "tail_columns": 6}
        }"#,
    ));
}

#[test]
fn compound_exponential_branching_with_drift_immigration() {
    run_grid(&scenario(
        r#"{
            "mechanism": {"alpha": -1.0, "beta": 0.4, "jumps": {
                "type": "compound_exponential", "rate": 1.2, "decay": 1.5
            }},
            "immigration": {"delta": 0.3, "jumps": {"type": "zero"}},
            "initial_mass": 1.0,
            "horizon": 1.0,
            "r_grid": [0.0, 0.5, 1.0],
            "theta_grid": [0.0, 1.0],
            "replicates": 15000,
            "seed": 2,
            "threads": 4,
            "kernel_tables": {"gap_columns": 24, "cdf_nodes": 130, "tail_columns": 6}
        }"#,
    ));
}
