//! Pathwise construction of the dressed backbone: simulate the
//! Galton-Watson-with-immigration skeleton, attach branch-point and
//! immigration grafts, apply the lifeline and spine dressings by
//! horizon-thinning, and return fixed-time pairs (Z_t, Lambda_t).

mod dressing;
mod forest;

use std::sync::Arc;

use rand::Rng;

use crate::error::Result;
use crate::kernels::TransitionKernel;
use crate::semigroup::SemigroupSolver;

pub use dressing::DressingEngine;
pub use forest::{
    simulate_forest, BackboneForest, BranchEvent, BranchEventSampler, ImmigrationEvent,
    ImmigrationEventSampler, Individual, Origin,
};

/// Everything needed to draw (Z_t, Lambda_t) replicates for one scenario.
pub struct SimEngine {
    solver: Arc<SemigroupSolver>,
    kernel: Arc<TransitionKernel>,
    branch: BranchEventSampler,
    immigration: Option<ImmigrationEventSampler>,
    initial_mass: f64,
    horizon: f64,
    max_population: usize,
}

impl SimEngine {
    pub fn new(
        kernel: Arc<TransitionKernel>,
        initial_mass: f64,
        max_population: usize,
    ) -> Result<Self> {
        let solver = kernel.solver().clone();
        let branch = BranchEventSampler::new(&solver)?;
        let immigration = if solver.immigration_rate() > 0.0 {
            Some(ImmigrationEventSampler::new(&solver)?)
        } else {
            None
        };
        let horizon = kernel.horizon();
        Ok(Self {
            solver,
            kernel,
            branch,
            immigration,
            initial_mass,
            horizon,
            max_population,
        })
    }

    pub fn solver(&self) -> &Arc<SemigroupSolver> {
        &self.solver
    }

    pub fn kernel(&self) -> &Arc<TransitionKernel> {
        &self.kernel
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_mass(&self) -> f64 {
        self.initial_mass
    }

    pub fn branch_sampler(&self) -> &BranchEventSampler {
        &self.branch
    }

    pub fn immigration_sampler(&self) -> Option<&ImmigrationEventSampler> {
        self.immigration.as_ref()
    }

    pub fn dressing(&self) -> DressingEngine<'_> {
        DressingEngine::new(&self.kernel)
    }

    /// Simulate one backbone genealogy.
    pub fn simulate_forest<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BackboneForest> {
        simulate_forest(
            &self.solver,
            &self.branch,
            self.immigration.as_ref(),
            self.initial_mass,
            self.horizon,
            self.max_population,
            rng,
        )
    }

    /// One joint draw (Z_t, Lambda_t).
    pub fn sample_joint<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(u32, f64)> {
        let forest = self.simulate_forest(rng)?;
        self.dressing()
            .dress_and_mass(&forest, self.initial_mass, rng)
    }

    /// The spine-dressing component alone (Campbell-formula fixture).
    pub fn sample_spine_mass<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.dressing().spine_mass(rng)
    }
}
