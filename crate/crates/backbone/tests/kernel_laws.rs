//! Law-level validation of the graft samplers.
//!
//! The quadratic family (where every law is known in closed form) doubles
//! as the accuracy oracle for the inversion backend: the same mechanism is
//! run through both backends and the tabulated quantile function is
//! compared against the exponential closed form pointwise. Jump families
//! are then certified against the Laplace-transform oracles by Monte
//! Carlo.

use std::sync::Arc;

use csbp_backbone::kernels::{BackendChoice, KernelOptions, TailKind, TransitionKernel};
use csbp_backbone::rng::replicate_rng;
use csbp_backbone::{Atom, BranchingMechanism, ImmigrationMechanism, JumpMeasure, SemigroupSolver};

fn solver(mech: BranchingMechanism, imm: ImmigrationMechanism) -> Arc<SemigroupSolver> {
    Arc::new(SemigroupSolver::new(mech, imm).unwrap())
}

fn quadratic() -> Arc<SemigroupSolver> {
    solver(
        BranchingMechanism::new(-1.0, 1.0, JumpMeasure::Zero).unwrap(),
        ImmigrationMechanism::new(1.0, JumpMeasure::Zero).unwrap(),
    )
}

fn atoms_family() -> Arc<SemigroupSolver> {
    solver(
        BranchingMechanism::new(
            -0.5,
            0.5,
            JumpMeasure::FiniteAtoms {
                atoms: vec![
                    Atom {
                        size: 0.8,
                        mass: 0.5,
                    },
                    Atom {
                        size: 2.0,
                        mass: 0.75,
                    },
                ],
            },
        )
        .unwrap(),
        ImmigrationMechanism::new(
            0.3,
            JumpMeasure::CompoundExponential {
                rate: 0.8,
                decay: 2.0,
            },
        )
        .unwrap(),
    )
}

fn fast_opts(gaps: Vec<f64>) -> KernelOptions {
    KernelOptions {
        gap_grid: Some(gaps),
        cdf_nodes: 130,
        tail_columns: 5,
        build_threads: 4,
        ..KernelOptions::default()
    }
}

fn empirical_lt(draws: &[f64], theta: f64) -> (f64, f64) {
    let n = draws.len() as f64;
    let vals: Vec<f64> = draws.iter().map(|x| (-theta * x).exp()).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn inversion_backend_reproduces_the_exponential_quantiles() {
    // Force the generic backend onto the quadratic mechanism; the
    // excursion-mass law must come out exponential with mean b(g) to
    // within the table budget eps_inv, measured in probability units.
    let opts = fast_opts(vec![0.37, 1.0]);
    let gen =
        TransitionKernel::new(quadratic(), BackendChoice::GenericInversion, 1.0, opts).unwrap();
    for gap in [0.37, 1.0] {
        let b = 1.0 - (-gap as f64).exp();
        let mut worst: f64 = 0.0;
        for k in 1..4000 {
            let u = k as f64 / 4000.0;
            let x = gen.excursion_mass_quantile(gap, u).unwrap();
            // Map back through the exact CDF.
            let u_true = -(-x / b).exp_m1();
            worst = worst.max((u_true - u).abs());
        }
        assert!(worst < 1e-4, "gap {gap}: CDF sup error {worst:.2e}");
    }
}

#[test]
fn inversion_backend_interpolates_between_columns() {
    // For the quadratic family the mean-normalized law is exactly
    // gap-independent, so interpolation across columns must be exact up to
    // the per-column budget even far from the grid points.
    let opts = fast_opts(vec![0.2, 1.0]);
    let gen =
        TransitionKernel::new(quadratic(), BackendChoice::GenericInversion, 1.0, opts).unwrap();
    let gap = 0.55;
    let b = 1.0 - (-gap as f64).exp();
    let mut worst: f64 = 0.0;
    for k in 1..2000 {
        let u = k as f64 / 2000.0;
        let x = gen.excursion_mass_quantile(gap, u).unwrap();
        let u_true = -(-x / b).exp_m1();
        worst = worst.max((u_true - u).abs());
    }
    assert!(worst < 2e-4, "off-column CDF sup error {worst:.2e}");
}

#[test]
fn inversion_tail_aggregate_matches_gamma_closed_form() {
    let opts = fast_opts(vec![1.0]);
    let gen =
        TransitionKernel::new(quadratic(), BackendChoice::GenericInversion, 1.0, opts).unwrap();
    let eps = gen.tail_gap();
    let b = 1.0 - (-eps as f64).exp();
    // Lifeline tail is Gamma(2, b(eps)): check the sampled LT against the
    // closed form.
    let mut rng = replicate_rng(31, 0);
    let draws: Vec<f64> = (0..60_000)
        .map(|_| {
            gen.sample_excursion_tail(TailKind::Lifeline, eps, &mut rng)
                .unwrap()
        })
        .collect();
    for theta in [0.5, 1.5, 4.0] {
        let (mean, se) = empirical_lt(&draws, theta);
        let target = (1.0 + b * theta).powi(-2);
        assert!(
            (mean - target).abs() < 4.0 * se + 2e-4,
            "theta {theta}: {mean} vs {target}"
        );
    }
}

#[test]
fn jump_family_excursion_mass_matches_laplace_oracle() {
    let opts = fast_opts(vec![0.4, 1.0]);
    let k = TransitionKernel::new(atoms_family(), BackendChoice::Auto, 1.0, opts).unwrap();
    assert_eq!(k.backend_name(), "generic-inversion");
    let mut rng = replicate_rng(32, 0);
    for gap in [0.4, 1.0] {
        let draws: Vec<f64> = (0..100_000)
            .map(|_| k.sample_excursion_mass(gap, &mut rng).unwrap())
            .collect();
        for theta in [0.25, 1.0, 4.0] {
            let (mean, se) = empirical_lt(&draws, theta);
            let target = k.excursion_mass_laplace(gap, theta).unwrap();
            assert!(
                (mean - target).abs() < 4.0 * se + 2e-4,
                "gap {gap}, theta {theta}: {mean} vs {target} (se {se:.2e})"
            );
        }
    }
}

#[test]
fn jump_family_transition_matches_laplace_oracle() {
    let opts = fast_opts(vec![1.0]);
    let k = TransitionKernel::new(atoms_family(), BackendChoice::Auto, 1.0, opts).unwrap();
    let mut rng = replicate_rng(33, 0);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| k.sample_transition(1.0, 1.0, &mut rng).unwrap())
        .collect();
    for theta in [0.5, 1.0, 2.0] {
        let (mean, se) = empirical_lt(&draws, theta);
        let target = k.transition_laplace(1.0, 1.0, theta).unwrap();
        assert!(
            (mean - target).abs() < 4.0 * se + 2e-4,
            "theta {theta}: {mean} vs {target}"
        );
    }
    // Extinction atom frequency.
    let p0 = (-k.solver().v_star(1.0).unwrap()).exp();
    let zeros = draws.iter().filter(|x| **x == 0.0).count() as f64 / draws.len() as f64;
    let se = (p0 * (1.0 - p0) / draws.len() as f64).sqrt();
    assert!((zeros - p0).abs() < 4.0 * se, "atom {zeros} vs {p0}");
}

#[test]
fn conditioned_and_unconditioned_transitions_cohere() {
    // Mixing conditioned draws with zeros at the extinction probability
    // reproduces the unconditioned transform (law of total probability).
    let opts = fast_opts(vec![1.0]);
    let k = TransitionKernel::new(atoms_family(), BackendChoice::Auto, 1.0, opts).unwrap();
    let mut rng = replicate_rng(34, 0);
    let y = 1.3;
    let p0 = (-y * k.solver().v_star(1.0).unwrap()).exp();
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            if rand::Rng::random::<f64>(&mut rng) < p0 {
                0.0
            } else {
                k.sample_transition_positive(y, 1.0, &mut rng).unwrap()
            }
        })
        .collect();
    for theta in [0.5, 2.0] {
        let (mean, se) = empirical_lt(&draws, theta);
        let target = k.transition_laplace(y, 1.0, theta).unwrap();
        assert!(
            (mean - target).abs() < 4.0 * se + 2e-4,
            "theta {theta}: {mean} vs {target}"
        );
    }
}

#[test]
fn jump_family_tail_aggregate_matches_oracle() {
    let opts = fast_opts(vec![1.0]);
    let k = TransitionKernel::new(atoms_family(), BackendChoice::Auto, 1.0, opts).unwrap();
    let mut rng = replicate_rng(35, 0);
    for kind in [TailKind::Lifeline, TailKind::Spine] {
        let draws: Vec<f64> = (0..60_000)
            .map(|_| {
                k.sample_excursion_tail(kind, k.tail_gap(), &mut rng)
                    .unwrap()
            })
            .collect();
        for theta in [0.5, 2.0] {
            let (mean, se) = empirical_lt(&draws, theta);
            let target = k.excursion_tail_laplace(kind, k.tail_gap(), theta).unwrap();
            assert!(
                (mean - target).abs() < 4.0 * se + 2e-4,
                "{kind:?} theta {theta}: {mean} vs {target}"
            );
        }
    }
}

#[test]
fn ce_jump_family_also_certifies() {
    // Compound-exponential jumps with diffusion, checked at a coarser but
    // still 4-sigma level.
    let s = solver(
        BranchingMechanism::new(
            -1.0,
            0.4,
            JumpMeasure::CompoundExponential {
                rate: 1.2,
                decay: 1.5,
            },
        )
        .unwrap(),
        ImmigrationMechanism::none(),
    );
    let opts = fast_opts(vec![0.7]);
    let k = TransitionKernel::new(s, BackendChoice::Auto, 0.7, opts).unwrap();
    let mut rng = replicate_rng(36, 0);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| k.sample_transition(0.8, 0.7, &mut rng).unwrap())
        .collect();
    for theta in [0.25, 1.0, 4.0] {
        let (mean, se) = empirical_lt(&draws, theta);
        let target = k.transition_laplace(0.8, 0.7, theta).unwrap();
        assert!(
            (mean - target).abs() < 4.0 * se + 2e-4,
            "theta {theta}: {mean} vs {target}"
        );
    }
}
