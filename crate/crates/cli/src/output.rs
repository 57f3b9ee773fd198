//! Artifact writers. Every file starts with `#`-prefixed header lines
//! carrying the scenario digest and master seed, so any reported number is
//! reconstructible from the artifact alone. Numeric formatting uses Rust's
//! shortest round-trip float display, which is deterministic across runs
//! and thread counts.

use std::io::Write;

use csbp_backbone::config::ScenarioConfig;
use csbp_backbone::verify::{McReport, PairedRow};
use csbp_backbone::{Error, Result};

fn io_err(e: std::io::Error) -> Error {
    Error::Config(format!("write failed: {e}"))
}

pub fn header<W: Write>(w: &mut W, cfg: &ScenarioConfig, seed: u64, kind: &str) -> Result<()> {
    (|| {
        writeln!(w, "# artifact: {kind}")?;
        writeln!(w, "# scenario-digest: {}", cfg.digest())?;
        writeln!(w, "# master-seed: {seed}")?;
        writeln!(w, "# replicates: {}", cfg.replicates)
    })()
    .map_err(io_err)
}

pub fn write_samples<W: Write>(
    w: &mut W,
    cfg: &ScenarioConfig,
    seed: u64,
    samples: &[(u32, f64)],
) -> Result<()> {
    header(w, cfg, seed, "joint-samples")?;
    (|| {
        writeln!(w, "replicate,z,lambda")?;
        for (i, (z, lam)) in samples.iter().enumerate() {
            writeln!(w, "{i},{z},{lam}")?;
        }
        Ok(())
    })()
    .map_err(io_err)
}

pub fn write_mc_report<W: Write>(w: &mut W, cfg: &ScenarioConfig, report: &McReport) -> Result<()> {
    header(w, cfg, report.master_seed, "mc-joint-laplace")?;
    (|| {
        writeln!(w, "r,theta,target,estimate,stderr,z,n")?;
        for row in &report.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.r, row.theta, row.target, row.estimate, row.std_err, row.z, row.n
            )?;
        }
        Ok(())
    })()
    .map_err(io_err)
}

pub fn write_paired_rows<W: Write>(
    w: &mut W,
    cfg: &ScenarioConfig,
    seed: u64,
    rows: &[PairedRow],
) -> Result<()> {
    header(w, cfg, seed, "poissonization-pairing")?;
    (|| {
        writeln!(w, "r,theta,mean_diff,stderr,z,stderr_unpaired,n")?;
        for row in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.r, row.theta, row.mean_diff, row.std_err, row.z, row.std_err_unpaired, row.n
            )?;
        }
        Ok(())
    })()
    .map_err(io_err)
}

/// Analytic table: the flow, its tilt, the survival mass, the
/// per-individual exponent w and the joint target on the configured grids.
pub fn write_analytic<W: Write>(w: &mut W, cfg: &ScenarioConfig, seed: u64) -> Result<()> {
    let solver = cfg.build_solver()?;
    header(w, cfg, seed, "analytic-grids")?;
    writeln!(w, "t,r,theta,lam_eff,u,u_star,v_star,w,target").map_err(io_err)?;
    let ts = cfg.t_grid.clone().unwrap_or_else(|| vec![cfg.horizon]);
    for &t in &ts {
        for &r in &cfg.r_grid {
            for &theta in &cfg.theta_grid {
                let lam_eff = theta + solver.lambda_star() * (1.0 - r);
                let u = solver.u(t, lam_eff)?;
                let u_star = solver.u_star(t, theta)?;
                // Diverges at t = 0, and identically for beta = 0 families
                // (no finite survival mass).
                let v_star = if t > 0.0 {
                    match solver.v_star(t) {
                        Ok(v) => v,
                        Err(Error::SurvivalMassUndefined(_)) => f64::INFINITY,
                        Err(e) => return Err(e),
                    }
                } else {
                    f64::INFINITY
                };
                let wv = solver.w(t, r, theta)?;
                let target = solver.joint_backbone_laplace(cfg.initial_mass, t, r, theta)?;
                writeln!(
                    w,
                    "{t},{r},{theta},{lam_eff},{u},{u_star},{v_star},{wv},{target}"
                )
                .map_err(io_err)?;
            }
        }
    }
    Ok(())
}
