//! Command-line driver: scenario validation, analytic table dumps, raw
//! simulation, Monte Carlo certification and forest export.
//!
//! Exit codes: 0 success, 1 statistical failure from `verify`, 2 on
//! configuration/validation/numerical errors (reported as a single
//! machine-parsable line `error[<code>]: <message>` on stderr).

mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csbp_backbone::config::ScenarioConfig;
use csbp_backbone::verify::{
    joint_samples, poissonization_check, score_joint_samples, spine_campbell_z, PairedRow,
    ZThresholds,
};
use csbp_backbone::{Error, Result};

#[derive(Parser)]
#[command(
    name = "backbone",
    about = "Dressed Galton-Watson decomposition of supercritical branching processes \
             with immigration: simulation, analytic tables and Monte Carlo certification",
    version
)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replicate-count override.
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Worker-thread override (results are identical for any count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the scenario and print mechanism diagnostics.
    Validate,
    /// Dump the analytic grids (flow, tilt, survival mass, w, targets) as CSV.
    Analytic,
    /// Draw raw (Z, Lambda) samples and write them as CSV.
    Simulate,
    /// Full Monte Carlo certification: joint Laplace grid, Poissonization
    /// pairing and spine check, with a pass/fail verdict.
    Verify,
    /// Simulate one backbone forest and export it as line-delimited JSON.
    ExportForest,
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.replicates {
        cfg.replicates = n;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t.max(1);
    }
    cfg.check()?;
    Ok(cfg)
}

fn artifact(cli: &Cli, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", cli.out.display())))?;
    let path = cli.out.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(|e| {
        Error::Config(format!("cannot create {}: {e}", path.display()))
    })?))
}

fn flush(mut w: BufWriter<File>) -> Result<()> {
    w.flush()
        .map_err(|e| Error::Config(format!("flush failed: {e}")))
}

fn cmd_validate(cfg: &ScenarioConfig) -> Result<i32> {
    let diag = cfg.diagnostics()?;
    let solver = cfg.build_solver()?;
    println!("scenario digest : {}", cfg.digest());
    println!("lambda_star     : {:.12}", diag.lambda_star);
    println!("psi residual    : {:.3e}", diag.psi_residual);
    println!("psi'(0+)        : {:.12}", diag.psi_prime_at_origin);
    println!("branch rate q   : {:.12}", diag.branch_rate);
    println!("immigration p   : {:.12}", diag.immigration_rate);
    println!(
        "immigration     : {}",
        if diag.immigration_enabled {
            "enabled"
        } else {
            "disabled"
        }
    );
    println!("jump tail mean  : {:.12}", diag.jump_tail_mean);
    println!();
    println!("r,branch_generator,immigration_generator");
    for i in 0..=10 {
        let r = i as f64 / 10.0;
        println!(
            "{r},{},{}",
            solver.gw_branch_generator(r)?,
            solver.gw_immigration_generator(r)?
        );
    }
    Ok(0)
}

fn cmd_analytic(cli: &Cli, cfg: &ScenarioConfig) -> Result<i32> {
    let mut w = artifact(cli, "analytic.csv")?;
    output::write_analytic(&mut w, cfg, cfg.seed)?;
    flush(w)?;
    println!("wrote {}", cli.out.join("analytic.csv").display());
    Ok(0)
}

fn cmd_simulate(cli: &Cli, cfg: &ScenarioConfig) -> Result<i32> {
    let engine = cfg.build_engine()?;
    let samples = joint_samples(&engine, cfg.replicates, cfg.seed, cfg.threads)?;
    let mut w = artifact(cli, "samples.csv")?;
    output::write_samples(&mut w, cfg, cfg.seed, &samples)?;
    flush(w)?;
    println!("wrote {}", cli.out.join("samples.csv").display());
    Ok(0)
}

fn cmd_verify(cli: &Cli, cfg: &ScenarioConfig) -> Result<i32> {
    let th = ZThresholds::default();
    let started = std::time::Instant::now();
    let engine = cfg.build_engine()?;
    let digest = cfg.digest();

    let samples = joint_samples(&engine, cfg.replicates, cfg.seed, cfg.threads)?;
    let report = score_joint_samples(
        &engine,
        &samples,
        &cfg.r_grid,
        &cfg.theta_grid,
        cfg.seed,
        &digest,
    )?;

    let ls = engine.solver().lambda_star();
    let mut paired: Vec<PairedRow> = Vec::new();
    for &r in &cfg.r_grid {
        for &theta in &cfg.theta_grid {
            paired.push(poissonization_check(&samples, ls, r, theta)?);
        }
    }

    // Spine Campbell cross-check (only meaningful with immigration); uses
    // its own stream family so the joint samples stay untouched.
    let spine_z = if engine.solver().immigration().is_null() {
        None
    } else {
        Some(spine_campbell_z(
            &engine,
            1.0,
            cfg.replicates.min(100_000),
            cfg.seed.wrapping_add(0x9e3779b97f4a7c15),
            cfg.threads,
        )?)
    };

    let mut w = artifact(cli, "mc_laplace.csv")?;
    output::write_mc_report(&mut w, cfg, &report)?;
    flush(w)?;
    let mut w = artifact(cli, "poissonization.csv")?;
    output::write_paired_rows(&mut w, cfg, cfg.seed, &paired)?;
    flush(w)?;

    let joint_pass = report.passes(&th);
    let paired_max = paired.iter().fold(0.0f64, |a, p| a.max(p.z.abs()));
    let paired_above = paired.iter().filter(|p| p.z.abs() > th.warn_abs).count();
    let paired_pass =
        paired_max <= th.max_abs && paired_above as f64 / paired.len() as f64 <= th.warn_fraction;
    let spine_pass = spine_z.map(|z| z.abs() <= th.max_abs).unwrap_or(true);
    let pass = joint_pass && paired_pass && spine_pass;

    let mut w = artifact(cli, "summary.txt")?;
    output::header(&mut w, cfg, cfg.seed, "verify-summary")?;
    (|| {
        writeln!(w, "backend: {}", engine.kernel().backend_name())?;
        writeln!(
            w,
            "joint grid: {} points, max |z| = {:.3}, fraction(|z|>2) = {:.3} -> {}",
            report.rows.len(),
            report.max_abs_z(),
            report.fraction_above(th.warn_abs),
            if joint_pass { "pass" } else { "FAIL" }
        )?;
        writeln!(
            w,
            "poissonization pairing: max |z| = {paired_max:.3}, {paired_above} of {} above 2 -> {}",
            paired.len(),
            if paired_pass { "pass" } else { "FAIL" }
        )?;
        if let Some(z) = spine_z {
            writeln!(
                w,
                "spine campbell check: z = {z:.3} -> {}",
                if spine_pass { "pass" } else { "FAIL" }
            )?;
        }
        writeln!(w, "wall time: {:.1}s", started.elapsed().as_secs_f64())?;
        writeln!(
            w,
            "verdict: {}",
            if pass { "PASS" } else { "STATISTICAL FAILURE" }
        )
    })()
    .map_err(|e| Error::Config(format!("write failed: {e}")))?;
    flush(w)?;

    println!(
        "verify: joint max |z| = {:.3}, paired max |z| = {paired_max:.3}{} -> {}",
        report.max_abs_z(),
        spine_z
            .map(|z| format!(", spine z = {z:.3}"))
            .unwrap_or_default(),
        if pass { "PASS" } else { "STATISTICAL FAILURE" }
    );
    Ok(if pass { 0 } else { 1 })
}

fn cmd_export_forest(cli: &Cli, cfg: &ScenarioConfig) -> Result<i32> {
    let engine = cfg.build_engine()?;
    let mut rng = csbp_backbone::rng::replicate_rng(cfg.seed, 0);
    let forest = engine.simulate_forest(&mut rng)?;
    let mut w = artifact(cli, "forest.jsonl")?;
    writeln!(
        w,
        "{}",
        serde_json::json!({
            "record": "header",
            "scenario_digest": cfg.digest(),
            "master_seed": cfg.seed,
        })
    )
    .map_err(|e| Error::Config(format!("write failed: {e}")))?;
    forest
        .write_jsonl(&mut w)
        .map_err(|e| Error::Config(format!("write failed: {e}")))?;
    flush(w)?;
    println!("wrote {}", cli.out.join("forest.jsonl").display());
    Ok(0)
}

fn run(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Validate => cmd_validate(&cfg),
        Command::Analytic => cmd_analytic(cli, &cfg),
        Command::Simulate => cmd_simulate(cli, &cfg),
        Command::Verify => cmd_verify(cli, &cfg),
        Command::ExportForest => cmd_export_forest(cli, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
