//! Scenario configuration: a single JSON document describing the
//! mechanism pair, the run geometry, grids, replicate counts, seeds,
//! tolerances and backend selection. Loading re-validates every
//! mechanism-level constraint; outputs carry a digest of the normalized
//! document so every reported number is reconstructible from its header.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BackendChoice, KernelOptions, TransitionKernel};
use crate::mechanisms::{
    validate, BranchingMechanism, ImmigrationMechanism, JumpMeasure, MechanismDiagnostics,
};
use crate::semigroup::{SemigroupSolver, SolverOptions};
use crate::sim::SimEngine;

fn default_horizon() -> f64 {
    1.0
}
fn default_replicates() -> usize {
    100_000
}
fn default_seed() -> u64 {
    20260808
}
fn default_threads() -> usize {
    1
}
fn default_max_population() -> usize {
    10_000_000
}
fn default_r_grid() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn default_theta_grid() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "zero_measure")]
    pub jumps: JumpMeasure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImmigrationConfig {
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "zero_measure")]
    pub jumps: JumpMeasure,
}

fn zero_measure() -> JumpMeasure {
    JumpMeasure::Zero
}

impl Default for ImmigrationConfig {
    fn default() -> Self {
        Self {
            delta: 0.0,
            jumps: JumpMeasure::Zero,
        }
    }
}

/// Numerical tolerances; the defaults keep the analytic layer orders of
/// magnitude below Monte Carlo noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceConfig {
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    /// Sup-norm budget of the inversion backend's CDF tables.
    pub eps_inv: f64,
    /// Gauss-Legendre panel order for time integrals.
    pub quad_order: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            ode_rel_tol: 1e-10,
            ode_abs_tol: 1e-12,
            eps_inv: 1e-4,
            quad_order: 16,
        }
    }
}

/// Table-geometry knobs for the inversion backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelTableConfig {
    pub tail_gap: Option<f64>,
    pub gap_columns: usize,
    pub cdf_nodes: usize,
    pub quantile_table: usize,
    pub tail_columns: usize,
}

impl Default for KernelTableConfig {
    fn default() -> Self {
        let k = KernelOptions::default();
        Self {
            tail_gap: None,
            gap_columns: k.gap_columns,
            cdf_nodes: k.cdf_nodes,
            quantile_table: k.quantile_table,
            tail_columns: k.tail_columns,
        }
    }
}

/// The complete scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub mechanism: MechanismConfig,
    #[serde(default)]
    pub immigration: ImmigrationConfig,
    /// Initial mass x >= 0.
    #[serde(default)]
    pub initial_mass: f64,
    /// Evaluation horizon t > 0.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_r_grid")]
    pub r_grid: Vec<f64>,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: Vec<f64>,
    /// Optional time grid for analytic table dumps (defaults to the
    /// horizon alone).
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default = "default_max_population")]
    pub max_population: usize,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub kernel_tables: KernelTableConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("cannot parse scenario: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Structural checks beyond mechanism validation.
    pub fn check(&self) -> Result<()> {
        if self.horizon <= 0.0 || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.initial_mass < 0.0 || !self.initial_mass.is_finite() {
            return Err(Error::Config(format!(
                "initial_mass must be >= 0, got {}",
                self.initial_mass
            )));
        }
        if self.r_grid.is_empty() || self.theta_grid.is_empty() {
            return Err(Error::Config(
                "r_grid and theta_grid must be nonempty".into(),
            ));
        }
        if self.r_grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("r_grid values must lie in [0, 1]".into()));
        }
        if self.theta_grid.iter().any(|t| *t < 0.0 || !t.is_finite()) {
            return Err(Error::Config("theta_grid values must be >= 0".into()));
        }
        if let Some(ts) = &self.t_grid {
            if ts.iter().any(|t| *t < 0.0 || !t.is_finite()) {
                return Err(Error::Config("t_grid values must be >= 0".into()));
            }
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        Ok(())
    }

    pub fn mechanism(&self) -> Result<BranchingMechanism> {
        BranchingMechanism::new(
            self.mechanism.alpha,
            self.mechanism.beta,
            self.mechanism.jumps.clone(),
        )
    }

    pub fn immigration_mechanism(&self) -> Result<ImmigrationMechanism> {
        ImmigrationMechanism::new(self.immigration.delta, self.immigration.jumps.clone())
    }

    /// Mechanism diagnostics (validates both mechanisms).
    pub fn diagnostics(&self) -> Result<MechanismDiagnostics> {
        validate(&self.mechanism()?, &self.immigration_mechanism()?)
    }

    /// The normalized document: every default made explicit, keys in a
    /// fixed order. Loading the normalized form reproduces it verbatim.
    pub fn normalized(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// FNV-1a digest of the normalized document; stamped into every
    /// artifact header. The worker-thread count is execution detail, not
    /// part of the statistical scenario, so it is excluded — artifacts
    /// must be identical across thread counts, headers included.
    pub fn digest(&self) -> String {
        let mut doc = self.normalized();
        doc.as_object_mut()
            .expect("config is an object")
            .remove("threads");
        let text = serde_json::to_string(&doc).expect("value serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            ode_rel_tol: self.tolerances.ode_rel_tol,
            ode_abs_tol: self.tolerances.ode_abs_tol,
            quad_order: self.tolerances.quad_order,
        }
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions {
            eps_inv: self.tolerances.eps_inv,
            tail_gap: self.kernel_tables.tail_gap,
            gap_columns: self.kernel_tables.gap_columns,
            cdf_nodes: self.kernel_tables.cdf_nodes,
            quantile_table: self.kernel_tables.quantile_table,
            tail_columns: self.kernel_tables.tail_columns,
            build_threads: self.threads,
            gap_grid: None,
        }
    }

    /// Build the analytic solver.
    pub fn build_solver(&self) -> Result<Arc<SemigroupSolver>> {
        Ok(Arc::new(SemigroupSolver::with_options(
            self.mechanism()?,
            self.immigration_mechanism()?,
            self.solver_options(),
        )?))
    }

    /// Build solver, kernel and simulation engine for this scenario.
    pub fn build_engine(&self) -> Result<SimEngine> {
        let solver = self.build_solver()?;
        let kernel = Arc::new(TransitionKernel::new(
            solver,
            self.backend,
            self.horizon,
            self.kernel_options(),
        )?);
        SimEngine::new(kernel, self.initial_mass, self.max_population)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "mechanism": {"alpha": -1.0, "beta": 1.0, "jumps": {"type": "zero"}},
        "immigration": {"delta": 1.0, "jumps": {"type": "zero"}},
        "initial_mass": 1.0,
        "horizon": 1.0,
        "replicates": 1000,
        "seed": 7
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ScenarioConfig::from_json(EXAMPLE).unwrap();
        assert_eq!(cfg.r_grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(cfg.threads, 1);
        assert_eq!(cfg.tolerances.ode_rel_tol, 1e-10);
        let d = cfg.diagnostics().unwrap();
        assert!((d.lambda_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_round_trips() {
        let cfg = ScenarioConfig::from_json(EXAMPLE).unwrap();
        let normalized = serde_json::to_string_pretty(&cfg.normalized()).unwrap();
        let cfg2 = ScenarioConfig::from_json(&normalized).unwrap();
        assert_eq!(cfg.digest(), cfg2.digest());
        assert_eq!(
            serde_json::to_string_pretty(&cfg2.normalized()).unwrap(),
            normalized
        );
    }

    #[test]
    fn digest_changes_with_content() {
        let cfg = ScenarioConfig::from_json(EXAMPLE).unwrap();
        let mut other = cfg.clone();
        other.seed = 8;
        assert_ne!(cfg.digest(), other.digest());
    }

    #[test]
    fn rejects_bad_grids() {
        let mut cfg = ScenarioConfig::from_json(EXAMPLE).unwrap();
        cfg.r_grid = vec![1.5];
        assert!(matches!(cfg.check(), Err(Error::Config(_))));
        cfg.r_grid = vec![];
        assert!(matches!(cfg.check(), Err(Error::Config(_))));
    }

    #[test]
    fn jump_measure_json_shapes() {
        let text = r#"{
            "mechanism": {"alpha": -0.5, "beta": 0.5, "jumps": {
                "type": "finite_atoms",
                "atoms": [{"size": 0.8, "mass": 0.5}, {"size": 2.0, "mass": 0.75}]
            }},
            "immigration": {"delta": 0.3, "jumps": {
                "type": "compound_exponential", "rate": 0.8, "decay": 2.0
            }},
            "initial_mass": 0.5,
            "horizon": 0.75
        }"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        let d = cfg.diagnostics().unwrap();
        assert!(d.lambda_star > 0.0);
        assert!(d.immigration_enabled);
    }
}
