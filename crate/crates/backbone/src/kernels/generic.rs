//! Inversion-table backend for jump families (beta > 0 required).
//!
//! The excursion-mass law at time gap g has Laplace-Stieltjes transform
//! 1 - u*_g(s) / v*_g, evaluable at complex s by integrating the tilted
//! flow with a complex state. Its CDF and density are recovered on an
//! adaptive node set by Fourier-series inversion, fitted with a monotone
//! Hermite cubic, and turned into a uniform inverse-CDF lookup with an
//! exponential tail extension. Columns are laid out on a log-spaced grid
//! of gaps; sampling at an off-column gap draws one uniform, inverts it in
//! the two bracketing columns after normalizing each by its exact mean
//! e^{-q g} / v*_g, and blends log-linearly. For the quadratic family the
//! normalized law is exactly gap-independent, which is the oracle used to
//! bound the interpolation bias in tests.
//!
//! The aggregated excursion dressing within `g` of the horizon
//! (LT exp(-c ∫_0^g u*_s(theta) ds), exact mean c (1 - e^{-q g}) / q) gets
//! its own column family per coefficient, built from the same machinery
//! with the flow integral carried as an extra quadrature state.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use super::{KernelOptions, TailKind};
use crate::error::{Error, Result};
use crate::mechanisms::JumpMeasure;
use crate::numerics::interp::MonotoneCubic;
use crate::numerics::laplace::EulerInversion;
use crate::numerics::ode::{integrate, OdeOptions};
use crate::semigroup::SemigroupSolver;

/// Uniform inverse-CDF lookup with an exponential tail beyond `u_max`.
#[derive(Debug, Clone)]
struct QuantileTable {
    quantiles: Vec<f64>,
    u_max: f64,
    tail_rate: f64,
}

impl QuantileTable {
    fn sample_at(&self, u: f64) -> f64 {
        let m = self.quantiles.len();
        if u >= self.u_max {
            let last = self.quantiles[m - 1];
            return last + ((1.0 - self.u_max) / (1.0 - u)).ln() / self.tail_rate;
        }
        let pos = u / self.u_max * (m - 1) as f64;
        let i = (pos as usize).min(m - 2);
        let frac = pos - i as f64;
        self.quantiles[i] + (self.quantiles[i + 1] - self.quantiles[i]) * frac
    }
}

/// One tabulated law: quantiles normalized by the exact mean at its gap.
struct Column {
    gap: f64,
    table: QuantileTable,
}

/// Log-spaced family of normalized laws indexed by gap, blended linearly
/// in log-gap at query time.
struct ColumnSet {
    columns: Vec<Column>,
}

impl ColumnSet {
    /// Quantile at level `u` for the law at `gap`, rescaled to `mean`.
    fn quantile(&self, gap: f64, mean: f64, u: f64) -> f64 {
        let cols = &self.columns;
        let first = cols.first().expect("nonempty column set");
        let last = cols.last().expect("nonempty column set");
        if gap <= first.gap {
            return mean * first.table.sample_at(u);
        }
        if gap >= last.gap {
            return mean * last.table.sample_at(u);
        }
        let idx = match cols.binary_search_by(|c| c.gap.partial_cmp(&gap).unwrap()) {
            Ok(i) => return mean * cols[i].table.sample_at(u),
            Err(i) => i,
        };
        let (a, b) = (&cols[idx - 1], &cols[idx]);
        let w = (gap.ln() - a.gap.ln()) / (b.gap.ln() - a.gap.ln());
        mean * ((1.0 - w) * a.table.sample_at(u) + w * b.table.sample_at(u))
    }
}

pub struct GenericKernel {
    alpha: f64,
    beta: f64,
    jumps: JumpMeasure,
    lambda_star: f64,
    rate_q: f64,
    tail_gap: f64,
    v_curve: MonotoneCubic,
    v_floor: f64,
    excursions: ColumnSet,
    tail_lifeline: Option<ColumnSet>,
    tail_spine: Option<ColumnSet>,
}

/// psi at a complex argument: the same closed forms as the real path,
/// analytically continued.
fn psi_complex(alpha: f64, beta: f64, jumps: &JumpMeasure, z: Complex64) -> Complex64 {
    let linear = alpha * z + beta * z * z;
    let jump = match jumps {
        JumpMeasure::Zero => Complex64::new(0.0, 0.0),
        JumpMeasure::CompoundExponential { rate, decay } => {
            let (c, mu) = (*rate, *decay);
            z * (c * mu * crate::mechanisms::int_x_exp_unit(mu) - c / (z + mu))
        }
        JumpMeasure::FiniteAtoms { atoms } => {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in atoms {
                let comp = if a.size < 1.0 {
                    z * a.size
                } else {
                    Complex64::new(0.0, 0.0)
                };
                acc += a.mass * ((-z * a.size).exp() - 1.0 + comp);
            }
            acc
        }
    };
    linear + jump
}

impl GenericKernel {
    pub(crate) fn build(
        solver: &Arc<SemigroupSolver>,
        horizon: f64,
        tail_gap: f64,
        lifeline_coeff: f64,
        spine_coeff: f64,
        opts: &KernelOptions,
    ) -> Result<Self> {
        let mech = solver.mechanism();
        let lambda_star = solver.lambda_star();
        let rate_q = solver.branch_rate();

        // Survival-mass cache: exact values at log-spaced gaps with exact
        // slopes (v* follows the tilted flow, dv/dg = -psi*(v)), so the
        // interpolant is high-order.
        let v_floor = horizon * 1e-6;
        let v_nodes = 193;
        let mut ln_g = Vec::with_capacity(v_nodes);
        let mut neg_ln_v = Vec::with_capacity(v_nodes);
        let mut neg_slopes = Vec::with_capacity(v_nodes);
        let log_span = (horizon / v_floor).ln();
        for i in 0..v_nodes {
            let g = v_floor * (log_span * i as f64 / (v_nodes - 1) as f64).exp();
            let v = solver.v_star(g)?;
            ln_g.push(g.ln());
            // ln v decreases in ln g; negate so the monotone fit sees
            // nondecreasing data. d ln v / d ln g = -g psi*(v) / v.
            neg_ln_v.push(-v.ln());
            neg_slopes.push(g * solver.tilted().psi_star(v) / v);
        }
        let v_curve =
            MonotoneCubic::with_slopes(ln_g, neg_ln_v, neg_slopes).map_err(Error::Numerical)?;

        let excursion_gaps: Vec<f64> = match &opts.gap_grid {
            Some(g) => {
                let mut g = g.clone();
                g.sort_by(|a, b| a.partial_cmp(b).unwrap());
                g.dedup();
                if g.iter()
                    .any(|&x| x <= 0.0 || !x.is_finite() || x > horizon * (1.0 + 1e-12))
                {
                    return Err(Error::Config(
                        "explicit kernel gap grid must lie in (0, horizon]".into(),
                    ));
                }
                g
            }
            None => log_grid(horizon * 1e-4, horizon, opts.gap_columns.max(2)),
        };
        // Aggregate-tail columns: upper limits spanning (0, tail_gap].
        let tail_gaps = log_grid(tail_gap * 1e-3, tail_gap, opts.tail_columns.max(3));

        let shell = Self {
            alpha: mech.alpha,
            beta: mech.beta,
            jumps: mech.jumps.clone(),
            lambda_star,
            rate_q,
            tail_gap,
            v_curve,
            v_floor,
            excursions: ColumnSet {
                columns: Vec::new(),
            },
            tail_lifeline: None,
            tail_spine: None,
        };

        // Column builds are pure and independent; distribute across
        // workers when asked (identical output for any count).
        #[derive(Clone, Copy)]
        enum Job {
            Excursion(f64),
            Tail { coeff: f64, gap: f64, spine: bool },
        }
        let mut jobs: Vec<Job> = excursion_gaps.iter().map(|g| Job::Excursion(*g)).collect();
        if lifeline_coeff > 0.0 {
            jobs.extend(tail_gaps.iter().map(|g| Job::Tail {
                coeff: lifeline_coeff,
                gap: *g,
                spine: false,
            }));
        }
        if spine_coeff > 0.0 {
            jobs.extend(tail_gaps.iter().map(|g| Job::Tail {
                coeff: spine_coeff,
                gap: *g,
                spine: true,
            }));
        }

        let threads = opts.build_threads.max(1);
        let mut outputs: Vec<Option<Result<Column>>> = Vec::new();
        outputs.resize_with(jobs.len(), || None);
        {
            let shell_ref = &shell;
            let solver_ref = solver.as_ref();
            let run = |job: Job| -> Result<Column> {
                match job {
                    Job::Excursion(g) => shell_ref.build_excursion_column(solver_ref, g, opts),
                    Job::Tail { coeff, gap, .. } => {
                        shell_ref.build_tail_column(solver_ref, coeff, gap, opts)
                    }
                }
            };
            if threads == 1 || jobs.len() < 2 {
                for (slot, job) in outputs.iter_mut().zip(jobs.iter()) {
                    *slot = Some(run(*job));
                }
            } else {
                let chunk = jobs.len().div_ceil(threads);
                std::thread::scope(|scope| {
                    for (slot_chunk, job_chunk) in outputs.chunks_mut(chunk).zip(jobs.chunks(chunk))
                    {
                        let run = &run;
                        scope.spawn(move || {
                            for (slot, job) in slot_chunk.iter_mut().zip(job_chunk.iter()) {
                                *slot = Some(run(*job));
                            }
                        });
                    }
                });
            }
        }

        let mut excursion_cols = Vec::new();
        let mut life_cols = Vec::new();
        let mut spine_cols = Vec::new();
        for (job, out) in jobs.iter().zip(outputs) {
            let col = out.expect("job slot filled")?;
            match job {
                Job::Excursion(_) => excursion_cols.push(col),
                Job::Tail { spine: false, .. } => life_cols.push(col),
                Job::Tail { spine: true, .. } => spine_cols.push(col),
            }
        }

        Ok(Self {
            excursions: ColumnSet {
                columns: excursion_cols,
            },
            tail_lifeline: (lifeline_coeff > 0.0).then_some(ColumnSet { columns: life_cols }),
            tail_spine: (spine_coeff > 0.0).then_some(ColumnSet {
                columns: spine_cols,
            }),
            ..shell
        })
    }

    fn psi_star_c(&self, z: Complex64) -> Complex64 {
        psi_complex(self.alpha, self.beta, &self.jumps, z + self.lambda_star)
    }

    fn complex_ode_opts(&self) -> OdeOptions {
        OdeOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_steps: 200_000,
        }
    }

    /// u*_gap(s) for complex s, as a 2-real-dimensional flow.
    fn u_star_complex(&self, gap: f64, s: Complex64) -> Result<Complex64> {
        let y = integrate(
            |_, y: &[f64; 2]| {
                let d = -self.psi_star_c(Complex64::new(y[0], y[1]));
                [d.re, d.im]
            },
            0.0,
            gap,
            [s.re, s.im],
            &self.complex_ode_opts(),
        )
        .map_err(|e| Error::Numerical(format!("complex flow at gap {gap}: {e}")))?;
        Ok(Complex64::new(y[0], y[1]))
    }

    /// ∫_0^gap u*_g(s) dg for complex s, carried as a quadrature state.
    fn u_star_integral_complex(&self, gap: f64, s: Complex64) -> Result<Complex64> {
        let y = integrate(
            |_, y: &[f64; 4]| {
                let u = Complex64::new(y[0], y[1]);
                let d = -self.psi_star_c(u);
                [d.re, d.im, u.re, u.im]
            },
            0.0,
            gap,
            [s.re, s.im, 0.0, 0.0],
            &self.complex_ode_opts(),
        )
        .map_err(|e| Error::Numerical(format!("complex flow integral at gap {gap}: {e}")))?;
        Ok(Complex64::new(y[2], y[3]))
    }

    pub(crate) fn v_star(&self, solver: &Arc<SemigroupSolver>, gap: f64) -> Result<f64> {
        if gap < self.v_floor {
            return solver.v_star(gap);
        }
        Ok(self.v_star_interp(gap))
    }

    fn v_star_interp(&self, gap: f64) -> f64 {
        (-self.v_curve.eval(gap.ln())).exp()
    }

    /// Exact mean of the excursion-mass law at `gap`.
    fn excursion_mean(&self, gap: f64) -> f64 {
        (-self.rate_q * gap).exp() / self.v_star_interp(gap)
    }

    /// Exact mean of the tail aggregate with upper limit `gap`.
    fn tail_mean(&self, coeff: f64, gap: f64) -> f64 {
        coeff * (-(-self.rate_q * gap).exp_m1()) / self.rate_q
    }

    /// Build the CDF/quantile table for a law given by its
    /// Laplace-Stieltjes transform, with first/second moments guiding node
    /// placement.
    fn build_table<F>(
        &self,
        lst: F,
        mean: f64,
        sd: f64,
        opts: &KernelOptions,
        label: &str,
    ) -> Result<QuantileTable>
    where
        F: Fn(Complex64) -> Result<Complex64>,
    {
        let inv = EulerInversion::default();
        let m_table = opts.quantile_table.max(256);
        let u_target = 1.0 - 1.0 / m_table as f64;

        // Find an upper node that covers the target quantile.
        let mut x_max = mean + 10.0 * sd.max(0.25 * mean);
        let mut grew = 0;
        loop {
            let f = inv.cdf_at(&lst, x_max)?;
            if f >= u_target + 2e-5 {
                break;
            }
            x_max *= 1.6;
            grew += 1;
            if grew > 60 {
                return Err(Error::Numerical(format!(
                    "{label}: CDF never reached quantile {u_target}"
                )));
            }
        }

        // Power-stretched nodes concentrate resolution near the origin
        // where these densities peak.
        let p = opts.cdf_nodes.max(24);
        let mut xs = Vec::with_capacity(p + 1);
        let mut fs = Vec::with_capacity(p + 1);
        let mut ds = Vec::with_capacity(p + 1);
        xs.push(0.0);
        fs.push(0.0);
        ds.push(0.0);
        for i in 1..=p {
            let x = x_max * ((i as f64) / p as f64).powf(2.2);
            let (f, den) = inv.cdf_density_at(&lst, x)?;
            xs.push(x);
            fs.push(f.clamp(0.0, 1.0));
            ds.push(den.max(0.0));
        }
        // Clean residual inversion noise; anything beyond noise level is a
        // genuine failure.
        let mut prev = 0.0;
        for f in fs.iter_mut() {
            if *f < prev {
                if prev - *f > 1e-6 {
                    return Err(Error::Numerical(format!(
                        "{label}: inverted CDF decreased by {:.2e}",
                        prev - *f
                    )));
                }
                *f = prev;
            }
            prev = *f;
        }
        let curve =
            MonotoneCubic::with_slopes(xs.clone(), fs.clone(), ds).map_err(Error::Numerical)?;

        let u_max = u_target.min(fs[p] - 1e-9);
        let mut quantiles = Vec::with_capacity(m_table);
        for j in 0..m_table {
            let u = u_max * j as f64 / (m_table - 1) as f64;
            quantiles.push(curve.eval_inverse(u));
        }
        // Exponential tail rate fitted on the last stretch of true nodes.
        let sp = (1.0 - fs[p - 1]).max(1e-12);
        let sq = (1.0 - fs[p]).max(1e-13);
        let tail_rate = ((sp / sq).ln() / (xs[p] - xs[p - 1])).max(1e-3 / mean.max(1e-300));
        Ok(QuantileTable {
            quantiles,
            u_max,
            tail_rate,
        })
    }

    /// Normalize a table to unit mean and wrap it as a column.
    fn into_column(gap: f64, mean: f64, table: QuantileTable) -> Column {
        Column {
            gap,
            table: QuantileTable {
                quantiles: table.quantiles.iter().map(|q| q / mean).collect(),
                u_max: table.u_max,
                tail_rate: table.tail_rate * mean,
            },
        }
    }

    fn build_excursion_column(
        &self,
        solver: &SemigroupSolver,
        gap: f64,
        opts: &KernelOptions,
    ) -> Result<Column> {
        let v = solver.v_star(gap)?;
        let mean = (-self.rate_q * gap).exp() / v;
        // Second moment from the flow's second variation:
        // E J^2 = kappa2 e^{-q g}(1 - e^{-q g}) / (q v*).
        let kappa2 = solver.tilted().second_derivative_at_origin();
        let eg = (-self.rate_q * gap).exp();
        let second = kappa2 * eg * (1.0 - eg) / (self.rate_q * v);
        let var = (second - mean * mean).max(1e-12 * mean * mean);
        let lst =
            |s: Complex64| -> Result<Complex64> { Ok(1.0 - self.u_star_complex(gap, s)? / v) };
        let table = self.build_table(
            lst,
            mean,
            var.sqrt(),
            opts,
            &format!("excursion-mass column at gap {gap}"),
        )?;
        Ok(Self::into_column(gap, mean, table))
    }

    fn build_tail_column(
        &self,
        solver: &SemigroupSolver,
        coeff: f64,
        gap: f64,
        opts: &KernelOptions,
    ) -> Result<Column> {
        let q = self.rate_q;
        let kappa2 = solver.tilted().second_derivative_at_origin();
        let e1 = -(-q * gap).exp_m1();
        let e2 = -(-2.0 * q * gap).exp_m1();
        let mean = coeff * e1 / q;
        let var = (coeff * kappa2 / q) * (e1 / q - e2 / (2.0 * q));
        let lst = |s: Complex64| -> Result<Complex64> {
            Ok((-coeff * self.u_star_integral_complex(gap, s)?).exp())
        };
        let table = self.build_table(
            lst,
            mean,
            var.sqrt(),
            opts,
            &format!("excursion tail aggregate (coefficient {coeff}, gap {gap})"),
        )?;
        Ok(Self::into_column(gap, mean, table))
    }

    pub(crate) fn sample_excursion_mass<R: Rng + ?Sized>(
        &self,
        gap: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let u: f64 = rng.random();
        self.excursion_mass_quantile(gap, u)
    }

    pub(crate) fn excursion_mass_quantile(&self, gap: f64, u: f64) -> Result<f64> {
        Ok(self.excursions.quantile(gap, self.excursion_mean(gap), u))
    }

    pub(crate) fn sample_excursion_tail<R: Rng + ?Sized>(
        &self,
        kind: TailKind,
        coeff: f64,
        g_hi: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let set = match kind {
            TailKind::Lifeline => self.tail_lifeline.as_ref(),
            TailKind::Spine => self.tail_spine.as_ref(),
        }
        .ok_or_else(|| {
            Error::Capability(format!("{kind:?} tail aggregate not built (coefficient 0)"))
        })?;
        if g_hi > self.tail_gap * (1.0 + 1e-9) {
            return Err(Error::Domain(format!(
                "tail aggregate upper limit {g_hi} exceeds tail gap {}",
                self.tail_gap
            )));
        }
        let u: f64 = rng.random();
        Ok(set.quantile(g_hi, self.tail_mean(coeff, g_hi), u))
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi / lo).ln();
    (0..n)
        .map(|i| lo * (span * i as f64 / (n - 1) as f64).exp())
        .collect()
}
