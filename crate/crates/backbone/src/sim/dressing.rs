//! Poissonian dressing of the backbone: turn a genealogy into the pair
//! (Z_t, Lambda_t).
//!
//! Lambda_t collects, at the horizon t:
//!
//! * the mass of an independent subcritical CSBP issued at time zero with
//!   the scenario's initial mass;
//! * one graft transition per branch and immigration event with positive
//!   seed mass;
//! * excursion dressing along every lifeline at rate 2 beta v*_{t-tau}
//!   (thinned to horizon survivors) and, when immigration is active, along
//!   the spine [0, t] at rate delta v*_{t-tau};
//! * jump dressing along lifelines at rate ∫ y e^{-l* y} Pi(dy) of
//!   proposals, each accepted with the survival probability
//!   1 - e^{-y v*_{t-tau}} and contributing a positive-conditioned
//!   transition (and the nu-driven analogue along the spine).
//!
//! Excursion intensities blow up like 1/gap at the horizon — the surviving
//! points are infinitely many with summable masses — so on
//! horizon-touching stretches the dressing within `tail_gap` is drawn as
//! one aggregate from the kernel and the point process only runs on gaps
//! above it. Interior segments (death before the horizon) keep the pure
//! point process, whose mean count only grows logarithmically in the gap
//! at the segment's end.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::kernels::{TailKind, TransitionKernel};
use crate::mechanisms::JumpMeasure;

use super::forest::BackboneForest;

/// Homogeneous proposal stream for jump dressing on one stream kind.
struct JumpStream {
    /// Proposal rate per unit lifeline length: ∫ w(y) e^{-l* y} m(dy).
    rate: f64,
    /// Seed-mass proposal: the tilted (spine) or size-biased tilted
    /// (lifeline) normalized measure.
    size_biased: bool,
    measure: JumpMeasure,
    lambda_star: f64,
}

impl JumpStream {
    fn draw_seed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.size_biased {
            self.measure
                .sample_tilted_size_biased(self.lambda_star, rng)
        } else {
            self.measure.sample_tilted(self.lambda_star, rng)
        }
    }
}

/// Immutable dressing machinery for one scenario.
pub struct DressingEngine<'k> {
    kernel: &'k TransitionKernel,
    horizon: f64,
    tail_gap: f64,
    lifeline_jumps: Option<JumpStream>,
    spine_jumps: Option<JumpStream>,
    spine_active: bool,
}

impl<'k> DressingEngine<'k> {
    pub fn new(kernel: &'k TransitionKernel) -> Self {
        let solver = kernel.solver();
        let mech = solver.mechanism();
        let imm = solver.immigration();
        let ls = solver.lambda_star();
        let lifeline_jumps = (!mech.jumps.is_zero()).then(|| JumpStream {
            rate: mech.jumps.tilted_mean(ls),
            size_biased: true,
            measure: mech.jumps.clone(),
            lambda_star: ls,
        });
        let spine_jumps = (!imm.jumps.is_zero()).then(|| JumpStream {
            rate: imm.jumps.tilted_mass(ls),
            size_biased: false,
            measure: imm.jumps.clone(),
            lambda_star: ls,
        });
        Self {
            kernel,
            horizon: kernel.horizon(),
            tail_gap: kernel.tail_gap(),
            lifeline_jumps,
            spine_jumps,
            spine_active: !imm.is_null(),
        }
    }

    /// Accepted excursion-dressing gaps on the gap interval
    /// [gap_lo, gap_hi] at intensity c v*_g, by thinning under a
    /// piecewise-constant envelope anchored at geometric breakpoints
    /// (v* decreases in the gap, so each piece is dominated by its left
    /// endpoint). Exposed for the law-level thinning tests.
    pub fn excursion_point_gaps<R: Rng + ?Sized>(
        &self,
        coeff: f64,
        gap_lo: f64,
        gap_hi: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        debug_assert!(gap_lo > 0.0);
        let mut out = Vec::new();
        let mut left = gap_lo;
        while left < gap_hi {
            let right = (2.0 * left).min(gap_hi);
            let env = coeff * self.kernel.v_star(left)?;
            let count = Poisson::new(env * (right - left))
                .map_err(|e| Error::Numerical(format!("poisson: {e}")))?
                .sample(rng) as u64;
            for _ in 0..count {
                let g = left + rng.random::<f64>() * (right - left);
                let accept = self.kernel.v_star(g)? / self.kernel.v_star(left)?;
                if rng.random::<f64>() < accept {
                    out.push(g);
                }
            }
            left = right;
        }
        Ok(out)
    }

    /// Excursion dressing mass on one lifeline/spine stretch, given as gap
    /// interval [gap_lo, gap_hi] (gap_lo = 0 means the stretch touches the
    /// horizon).
    fn excursion_mass<R: Rng + ?Sized>(
        &self,
        kind: TailKind,
        gap_lo: f64,
        gap_hi: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let coeff = self.kernel.excursion_coeff(kind);
        if coeff <= 0.0 || gap_hi <= gap_lo {
            return Ok(0.0);
        }
        let mut mass = 0.0;
        let mut pp_lo = gap_lo;
        if gap_lo == 0.0 {
            let agg_hi = self.tail_gap.min(gap_hi);
            mass += self.kernel.sample_excursion_tail(kind, agg_hi, rng)?;
            pp_lo = agg_hi;
        }
        if pp_lo < gap_hi {
            for g in self.excursion_point_gaps(coeff, pp_lo, gap_hi, rng)? {
                mass += self.kernel.sample_excursion_mass(g, rng)?;
            }
        }
        Ok(mass)
    }

    /// Jump-graft dressing mass on one stretch: homogeneous proposals at
    /// the tilted rate, survival thinning, positive-conditioned transition
    /// per acceptance.
    fn jump_mass<R: Rng + ?Sized>(
        &self,
        stream: &JumpStream,
        gap_lo: f64,
        gap_hi: f64,
        rng: &mut R,
    ) -> Result<f64> {
        if gap_hi <= gap_lo {
            return Ok(0.0);
        }
        let len = gap_hi - gap_lo;
        let count = Poisson::new(stream.rate * len)
            .map_err(|e| Error::Numerical(format!("poisson: {e}")))?
            .sample(rng) as u64;
        let mut mass = 0.0;
        for _ in 0..count {
            let g = gap_lo + rng.random::<f64>() * len;
            let y = stream.draw_seed(rng);
            let survive = -(-y * self.kernel.v_star(g)?).exp_m1();
            if rng.random::<f64>() < survive {
                mass += self.kernel.sample_transition_positive(y, g, rng)?;
            }
        }
        Ok(mass)
    }

    /// Dressing mass of one individual's lifeline [birth, death∧horizon].
    fn lifeline_mass<R: Rng + ?Sized>(
        &self,
        birth: f64,
        death: Option<f64>,
        rng: &mut R,
    ) -> Result<f64> {
        let end = death.unwrap_or(self.horizon);
        let gap_lo = self.horizon - end;
        let gap_hi = self.horizon - birth;
        let mut mass = self.excursion_mass(TailKind::Lifeline, gap_lo, gap_hi, rng)?;
        if let Some(stream) = &self.lifeline_jumps {
            mass += self.jump_mass(stream, gap_lo, gap_hi, rng)?;
        }
        Ok(mass)
    }

    /// Dressing mass of the immigration spine over the whole window.
    /// Exposed separately because it is the Campbell-formula fixture: its
    /// Laplace transform is exp(-∫_0^t phi*(u*_s(theta)) ds).
    pub fn spine_mass<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        if !self.spine_active {
            return Ok(0.0);
        }
        let mut mass = self.excursion_mass(TailKind::Spine, 0.0, self.horizon, rng)?;
        if let Some(stream) = &self.spine_jumps {
            mass += self.jump_mass(stream, 0.0, self.horizon, rng)?;
        }
        Ok(mass)
    }

    /// Dress a forest and return (Z_t, Lambda_t): the count of backbone
    /// individuals alive at the horizon and the total dressed mass,
    /// including the independent initial-mass copy.
    pub fn dress_and_mass<R: Rng + ?Sized>(
        &self,
        forest: &BackboneForest,
        initial_mass: f64,
        rng: &mut R,
    ) -> Result<(u32, f64)> {
        let mut mass = 0.0;
        if initial_mass > 0.0 {
            mass += self
                .kernel
                .sample_transition(initial_mass, self.horizon, rng)?;
        }
        for ev in &forest.branch_events {
            if ev.seed_mass > 0.0 {
                mass += self
                    .kernel
                    .sample_transition(ev.seed_mass, self.horizon - ev.time, rng)?;
            }
        }
        for ev in &forest.immigration_events {
            if ev.seed_mass > 0.0 {
                mass += self
                    .kernel
                    .sample_transition(ev.seed_mass, self.horizon - ev.time, rng)?;
            }
        }
        for ind in &forest.individuals {
            mass += self.lifeline_mass(ind.birth, ind.death, rng)?;
        }
        mass += self.spine_mass(rng)?;
        Ok((forest.alive_at_horizon(), mass))
    }
}
