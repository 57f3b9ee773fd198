//! The Galton-Watson backbone with immigration: genealogy record and
//! event-driven construction.
//!
//! Individuals reproduce at rate q = psi'(lambda_star) into n >= 2
//! offspring; the offspring count and the mass seeding the branch-point
//! graft are drawn jointly from the branch law
//!
//! ```text
//! p_n(dy) ∝ beta lambda_star^2 delta_0(dy) 1_{n=2}
//!           + (lambda_star y)^n / n! e^{-lambda_star y} Pi(dy),
//! ```
//!
//! whose total mass is lambda_star q. Immigration events arrive at rate
//! p = phi(lambda_star) and create n >= 1 new roots together with a graft
//! seed from the analogous law driven by (delta, nu). For the
//! compound-exponential family the joint law collapses to a geometric
//! offspring count with a gamma seed; finite atom measures use exact
//! discrete weights with truncated Poisson counts.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::poisson_conditioned_min;
use crate::mechanisms::{discrete_index, JumpMeasure};
use crate::semigroup::SemigroupSolver;

/// How an individual entered the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Root present at time zero.
    Initial,
    /// Created by the immigration event with this index.
    Immigrant(u32),
    /// Child of the branch event with this index.
    Branch(u32),
}

#[derive(Debug, Clone, Serialize)]
pub struct Individual {
    pub id: u32,
    /// Parent individual, `None` for roots (initial or immigrant).
    pub parent: Option<u32>,
    pub origin: Origin,
    pub birth: f64,
    /// `None` means alive at the horizon.
    pub death: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchEvent {
    pub parent: u32,
    pub time: f64,
    pub offspring: u32,
    /// Mass seeding the branch-point graft (zero for the diffusion term).
    pub seed_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImmigrationEvent {
    pub time: f64,
    pub immigrants: u32,
    pub seed_mass: f64,
}

/// Genealogical record of one simulated backbone.
#[derive(Debug, Clone, Serialize)]
pub struct BackboneForest {
    pub horizon: f64,
    pub individuals: Vec<Individual>,
    pub branch_events: Vec<BranchEvent>,
    pub immigration_events: Vec<ImmigrationEvent>,
}

impl BackboneForest {
    /// Number of individuals alive at the horizon.
    pub fn alive_at_horizon(&self) -> u32 {
        self.individuals
            .iter()
            .filter(|i| i.death.is_none())
            .count() as u32
    }

    /// Genealogy self-consistency; used by property tests and debug
    /// assertions.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.individuals.len();
        for (i, ind) in self.individuals.iter().enumerate() {
            if ind.id as usize != i {
                return Err(Error::InvariantViolation("ids must be dense".into()));
            }
            if let Some(d) = ind.death {
                if d <= ind.birth || d > self.horizon {
                    return Err(Error::InvariantViolation(format!(
                        "death {d} outside (birth, horizon] for {i}"
                    )));
                }
            }
            match (ind.parent, ind.origin) {
                (None, Origin::Initial) => {
                    if ind.birth != 0.0 {
                        return Err(Error::InvariantViolation("initial root born late".into()));
                    }
                }
                (None, Origin::Immigrant(e)) => {
                    let ev = &self.immigration_events[e as usize];
                    if ev.time != ind.birth {
                        return Err(Error::InvariantViolation(
                            "immigrant birth != event time".into(),
                        ));
                    }
                }
                (Some(p), Origin::Branch(e)) => {
                    if p as usize >= n {
                        return Err(Error::InvariantViolation("dangling parent".into()));
                    }
                    let parent = &self.individuals[p as usize];
                    if parent.death != Some(ind.birth) {
                        return Err(Error::InvariantViolation(
                            "child birth must equal parent death".into(),
                        ));
                    }
                    let ev = &self.branch_events[e as usize];
                    if ev.parent != p || ev.time != ind.birth {
                        return Err(Error::InvariantViolation(
                            "branch event inconsistent with child".into(),
                        ));
                    }
                }
                _ => {
                    return Err(Error::InvariantViolation(
                        "parent/origin combination invalid".into(),
                    ));
                }
            }
        }
        for ev in &self.branch_events {
            if ev.offspring < 2 {
                return Err(Error::InvariantViolation("offspring count < 2".into()));
            }
            let children = self
                .individuals
                .iter()
                .filter(|c| c.parent == Some(ev.parent) && c.birth == ev.time)
                .count() as u32;
            if children != ev.offspring {
                return Err(Error::InvariantViolation(format!(
                    "event lists {} offspring, forest has {children}",
                    ev.offspring
                )));
            }
        }
        for ev in &self.immigration_events {
            if ev.immigrants < 1 {
                return Err(Error::InvariantViolation("immigrant count < 1".into()));
            }
        }
        Ok(())
    }

    /// Line-delimited export: one JSON record per individual and event,
    /// preceded by a header record carrying the horizon and counts.
    pub fn write_jsonl<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "{}",
            serde_json::json!({
                "record": "forest",
                "horizon": self.horizon,
                "individuals": self.individuals.len(),
                "branch_events": self.branch_events.len(),
                "immigration_events": self.immigration_events.len(),
                "alive_at_horizon": self.alive_at_horizon(),
            })
        )?;
        for ind in &self.individuals {
            let mut v = serde_json::to_value(ind).expect("serializable");
            v["record"] = "individual".into();
            writeln!(w, "{v}")?;
        }
        for (i, ev) in self.branch_events.iter().enumerate() {
            let mut v = serde_json::to_value(ev).expect("serializable");
            v["record"] = "branch_event".into();
            v["index"] = i.into();
            writeln!(w, "{v}")?;
        }
        for (i, ev) in self.immigration_events.iter().enumerate() {
            let mut v = serde_json::to_value(ev).expect("serializable");
            v["record"] = "immigration_event".into();
            v["index"] = i.into();
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Joint (offspring count, graft seed mass) law at branch events.
pub struct BranchEventSampler {
    lambda_star: f64,
    /// Probability of the diffusion term: beta lambda_star / q.
    beta_weight: f64,
    jumps: JumpMeasure,
    /// Per-atom weights m_i (1 - e^{-l* y} - l* y e^{-l* y}) for the
    /// finite-atom family.
    atom_weights: Vec<f64>,
}

impl BranchEventSampler {
    pub fn new(solver: &SemigroupSolver) -> Result<Self> {
        let mech = solver.mechanism();
        let ls = solver.lambda_star();
        let q = solver.branch_rate();
        let beta_mass = mech.beta * ls * ls;
        let jump_mass = match &mech.jumps {
            JumpMeasure::Zero => 0.0,
            m => m.phi_integral_tilted(0.0, ls) - ls * m.tilted_mean(ls),
        };
        // Total branch measure must be lambda_star * q.
        let total = beta_mass + jump_mass;
        if ((total - ls * q) / (ls * q)).abs() > 1e-10 {
            return Err(Error::InvariantViolation(format!(
                "branch law normalization: beta + jump mass {total} != lambda_star q {}",
                ls * q
            )));
        }
        let atom_weights = match &mech.jumps {
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .map(|a| {
                    let z = ls * a.size;
                    a.mass * (1.0 - (-z).exp() * (1.0 + z))
                })
                .collect(),
            _ => Vec::new(),
        };
        Ok(Self {
            lambda_star: ls,
            beta_weight: (beta_mass / total).clamp(0.0, 1.0),
            jumps: mech.jumps.clone(),
            atom_weights,
        })
    }

    /// Draw (offspring count n >= 2, seed mass y >= 0).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(u32, f64)> {
        if self.beta_weight >= 1.0 || rng.random::<f64>() < self.beta_weight {
            return Ok((2, 0.0));
        }
        match &self.jumps {
            JumpMeasure::Zero => unreachable!("jump branch selected with zero measure"),
            JumpMeasure::CompoundExponential { decay, .. } => {
                // Joint law: n - 2 geometric with ratio l*/(l* + mu), then
                // y | n ~ Gamma(n + 1, 1 / (l* + mu)).
                let rho = self.lambda_star / (self.lambda_star + decay);
                let n = 2 + Geometric::new(1.0 - rho)
                    .map_err(|e| Error::Numerical(format!("geometric: {e}")))?
                    .sample(rng);
                let y = rand_distr::Gamma::new(n as f64 + 1.0, 1.0 / (self.lambda_star + decay))
                    .map_err(|e| Error::Numerical(format!("gamma: {e}")))?
                    .sample(rng);
                Ok((n as u32, y))
            }
            JumpMeasure::FiniteAtoms { atoms } => {
                let i = discrete_index(&self.atom_weights, rng);
                let y = atoms[i].size;
                let n = poisson_conditioned_min(self.lambda_star * y, 2, rng)?;
                Ok((n as u32, y))
            }
        }
    }
}

/// Joint (immigrant count, graft seed mass) law at immigration events.
pub struct ImmigrationEventSampler {
    lambda_star: f64,
    /// Probability of the drift term: delta lambda_star / p.
    delta_weight: f64,
    jumps: JumpMeasure,
    atom_weights: Vec<f64>,
}

impl ImmigrationEventSampler {
    pub fn new(solver: &SemigroupSolver) -> Result<Self> {
        let imm = solver.immigration();
        let ls = solver.lambda_star();
        let p = solver.immigration_rate();
        if p <= 0.0 {
            return Err(Error::Config(
                "immigration event sampler requires phi(lambda_star) > 0".into(),
            ));
        }
        let drift_mass = imm.delta * ls;
        let jump_mass = imm.jumps.phi_integral_tilted(0.0, ls);
        let total = drift_mass + jump_mass;
        if ((total - p) / p).abs() > 1e-10 {
            return Err(Error::InvariantViolation(format!(
                "immigration law normalization: {total} != p {p}"
            )));
        }
        let atom_weights = match &imm.jumps {
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .map(|a| a.mass * (-(-ls * a.size).exp_m1()))
                .collect(),
            _ => Vec::new(),
        };
        Ok(Self {
            lambda_star: ls,
            delta_weight: (drift_mass / total).clamp(0.0, 1.0),
            jumps: imm.jumps.clone(),
            atom_weights,
        })
    }

    /// Draw (immigrant count n >= 1, seed mass y >= 0).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(u32, f64)> {
        if self.delta_weight >= 1.0 || rng.random::<f64>() < self.delta_weight {
            return Ok((1, 0.0));
        }
        match &self.jumps {
            JumpMeasure::Zero => unreachable!("jump immigration selected with zero measure"),
            JumpMeasure::CompoundExponential { decay, .. } => {
                let rho = self.lambda_star / (self.lambda_star + decay);
                let n = 1 + Geometric::new(1.0 - rho)
                    .map_err(|e| Error::Numerical(format!("geometric: {e}")))?
                    .sample(rng);
                let y = rand_distr::Gamma::new(n as f64 + 1.0, 1.0 / (self.lambda_star + decay))
                    .map_err(|e| Error::Numerical(format!("gamma: {e}")))?
                    .sample(rng);
                Ok((n as u32, y))
            }
            JumpMeasure::FiniteAtoms { atoms } => {
                let i = discrete_index(&self.atom_weights, rng);
                let y = atoms[i].size;
                let n = poisson_conditioned_min(self.lambda_star * y, 1, rng)?;
                Ok((n as u32, y))
            }
        }
    }
}

/// Event-driven construction of the backbone on [0, horizon]: Poisson
/// (lambda_star x) initial roots, exponential lifetimes at rate q,
/// immigration arrivals at rate p.
pub fn simulate_forest<R: Rng + ?Sized>(
    solver: &SemigroupSolver,
    branch: &BranchEventSampler,
    immigration: Option<&ImmigrationEventSampler>,
    initial_mass: f64,
    horizon: f64,
    max_population: usize,
    rng: &mut R,
) -> Result<BackboneForest> {
    let q = solver.branch_rate();
    let p = if immigration.is_some() {
        solver.immigration_rate()
    } else {
        0.0
    };
    let mut forest = BackboneForest {
        horizon,
        individuals: Vec::new(),
        branch_events: Vec::new(),
        immigration_events: Vec::new(),
    };
    let mut alive: Vec<u32> = Vec::new();

    let spawn = |forest: &mut BackboneForest,
                 alive: &mut Vec<u32>,
                 parent: Option<u32>,
                 origin: Origin,
                 birth: f64|
     -> Result<()> {
        if forest.individuals.len() >= max_population {
            return Err(Error::Numerical(format!(
                "population guard: more than {max_population} backbone individuals \
                 (supercritical blow-up, horizon too large)"
            )));
        }
        let id = forest.individuals.len() as u32;
        forest.individuals.push(Individual {
            id,
            parent,
            origin,
            birth,
            death: None,
        });
        alive.push(id);
        Ok(())
    };

    if initial_mass > 0.0 {
        let n0 = Poisson::new(solver.lambda_star() * initial_mass)
            .map_err(|e| Error::Numerical(format!("poisson: {e}")))?
            .sample(rng) as u64;
        for _ in 0..n0 {
            spawn(&mut forest, &mut alive, None, Origin::Initial, 0.0)?;
        }
    }

    let mut now = 0.0;
    loop {
        let branch_rate = alive.len() as f64 * q;
        let total = branch_rate + p;
        if total == 0.0 {
            break;
        }
        let e: f64 = Exp1.sample(rng);
        now += e / total;
        if now >= horizon {
            break;
        }
        if rng.random::<f64>() * total < branch_rate {
            // Uniform individual dies and branches.
            let pick = rng.random_range(0..alive.len());
            let id = alive.swap_remove(pick);
            forest.individuals[id as usize].death = Some(now);
            let (n, y) = branch.sample(rng)?;
            let ev = forest.branch_events.len() as u32;
            forest.branch_events.push(BranchEvent {
                parent: id,
                time: now,
                offspring: n,
                seed_mass: y,
            });
            for _ in 0..n {
                spawn(&mut forest, &mut alive, Some(id), Origin::Branch(ev), now)?;
            }
        } else {
            let sampler = immigration.expect("positive immigration rate implies sampler");
            let (n, y) = sampler.sample(rng)?;
            let ev = forest.immigration_events.len() as u32;
            forest.immigration_events.push(ImmigrationEvent {
                time: now,
                immigrants: n,
                seed_mass: y,
            });
            for _ in 0..n {
                spawn(&mut forest, &mut alive, None, Origin::Immigrant(ev), now)?;
            }
        }
    }
    Ok(forest)
}
