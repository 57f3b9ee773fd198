//! Browser bindings for the interactive demo page: scenario diagnostics,
//! analytic curves, single-forest simulation with its dressing summary,
//! and a small-sample certification grid. Each entry point takes the same
//! JSON scenario document the CLI uses and returns JSON.

use csbp_backbone::config::ScenarioConfig;
use csbp_backbone::rng::replicate_rng;
use csbp_backbone::verify::{joint_samples, score_joint_samples};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse(config_json: &str) -> Result<ScenarioConfig, JsValue> {
    let mut cfg = ScenarioConfig::from_json(config_json).map_err(err)?;
    // Browser runs are single-threaded.
    cfg.threads = 1;
    Ok(cfg)
}

/// Mechanism diagnostics plus the backbone generators on a fine r-grid.
#[wasm_bindgen]
pub fn scenario_diagnostics(config_json: &str) -> Result<String, JsValue> {
    #[derive(Serialize)]
    struct Out {
        digest: String,
        lambda_star: f64,
        branch_rate: f64,
        immigration_rate: f64,
        immigration_enabled: bool,
        psi_prime_at_origin: f64,
        r: Vec<f64>,
        branch_generator: Vec<f64>,
        immigration_generator: Vec<f64>,
    }
    let cfg = parse(config_json)?;
    let diag = cfg.diagnostics().map_err(err)?;
    let solver = cfg.build_solver().map_err(err)?;
    let r: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    let branch_generator = r
        .iter()
        .map(|r| solver.gw_branch_generator(*r))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let immigration_generator = r
        .iter()
        .map(|r| solver.gw_immigration_generator(*r))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    serde_json::to_string(&Out {
        digest: cfg.digest(),
        lambda_star: diag.lambda_star,
        branch_rate: diag.branch_rate,
        immigration_rate: diag.immigration_rate,
        immigration_enabled: diag.immigration_enabled,
        psi_prime_at_origin: diag.psi_prime_at_origin,
        r,
        branch_generator,
        immigration_generator,
    })
    .map_err(err)
}

/// Flow curves for plotting: t -> u_t(lam) for each configured theta (and
/// the root lambda_star), plus the survival-mass curve t -> v*_t.
#[wasm_bindgen]
pub fn analytic_curves(config_json: &str, points: u32) -> Result<String, JsValue> {
    #[derive(Serialize)]
    struct Series {
        name: String,
        xs: Vec<f64>,
        ys: Vec<f64>,
    }
    #[derive(Serialize)]
    struct Out {
        lambda_star: f64,
        series: Vec<Series>,
    }
    let cfg = parse(config_json)?;
    let solver = cfg.build_solver().map_err(err)?;
    let ls = solver.lambda_star();
    let points = points.clamp(16, 400) as usize;
    let t_max = cfg.horizon;
    let ts: Vec<f64> = (0..=points)
        .map(|i| t_max * i as f64 / points as f64)
        .collect();

    let mut lams: Vec<f64> = cfg
        .theta_grid
        .iter()
        .copied()
        .filter(|l| *l > 0.0)
        .collect();
    lams.push(ls);
    lams.push(2.0 * ls);
    lams.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lams.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut series = Vec::new();
    for lam in lams {
        let ys = ts
            .iter()
            .map(|t| solver.u(*t, lam))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        series.push(Series {
            name: format!("u_t({lam:.3})"),
            xs: ts.clone(),
            ys,
        });
    }
    if solver.mechanism().beta > 0.0 {
        let xs: Vec<f64> = ts
            .iter()
            .copied()
            .filter(|t| *t >= t_max / points as f64)
            .collect();
        let ys = xs
            .iter()
            .map(|t| solver.v_star(*t))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        series.push(Series {
            name: "v*_t".to_string(),
            xs,
            ys,
        });
    }
    serde_json::to_string(&Out {
        lambda_star: ls,
        series,
    })
    .map_err(err)
}

/// One simulated backbone with its dressing outcome: the genealogy plus
/// (Z_t, Lambda_t).
#[wasm_bindgen]
pub fn simulate_forest_json(config_json: &str, seed: u64) -> Result<String, JsValue> {
    #[derive(Serialize)]
    struct Out {
        forest: csbp_backbone::sim::BackboneForest,
        z: u32,
        lambda: f64,
        lambda_star: f64,
    }
    let cfg = parse(config_json)?;
    let engine = cfg.build_engine().map_err(err)?;
    let mut rng = replicate_rng(seed, 0);
    let forest = engine.simulate_forest(&mut rng).map_err(err)?;
    let (z, lambda) = engine
        .dressing()
        .dress_and_mass(&forest, cfg.initial_mass, &mut rng)
        .map_err(err)?;
    serde_json::to_string(&Out {
        forest,
        z,
        lambda,
        lambda_star: engine.solver().lambda_star(),
    })
    .map_err(err)
}

/// Small-sample certification grid: z-scores of the empirical joint
/// functional against the analytic target on the configured (r, theta)
/// grid.
#[wasm_bindgen]
pub fn mc_verify_json(config_json: &str, replicates: u32, seed: u64) -> Result<String, JsValue> {
    let mut cfg = parse(config_json)?;
    cfg.replicates = (replicates as usize).clamp(100, 200_000);
    cfg.seed = seed;
    let engine = cfg.build_engine().map_err(err)?;
    let samples = joint_samples(&engine, cfg.replicates, cfg.seed, 1).map_err(err)?;
    let report = score_joint_samples(
        &engine,
        &samples,
        &cfg.r_grid,
        &cfg.theta_grid,
        cfg.seed,
        &cfg.digest(),
    )
    .map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}
