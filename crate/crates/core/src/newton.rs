//! The DACG-Newton driver: for each requested eigenpair a DACG warm start
//! followed by inexact Newton steps on the Grassmann manifold, with the
//! correction equation preconditioned by the BFGS-updated operator.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bfgs::{BfgsPreconditioner, BfgsWindow};
use crate::dacg::{dacg_minimize, DacgConfig};
use crate::deflation::{eigenresidual, DeflationBasis, EigenResidual, Orthogonalized, ProjectedJacobian};
use crate::error::{Error, Result};
use crate::ichol::IcFactor;
use crate::pcg::{solve_correction, ExitReason, PcgConfig, PcgOutcome};
use crate::sparse::{CountedMatrix, SparseMatrix};
use crate::trace::{ConvergenceTrace, Phase, RowKind, SummaryRow, Timings, TraceRow};
use crate::vector;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n_eig: usize,
    /// Outer tolerance on ‖Au - θu‖/θ.
    pub tau: f64,
    /// Outer iterations per eigenpair.
    pub itmax: usize,
    pub dacg: DacgConfig,
    /// Inner solver settings; `tau_outer` is overwritten with `tau`.
    pub pcg: PcgConfig,
    pub lfil: usize,
    pub tau_ic: f64,
    /// BFGS window length; 0 keeps the preconditioner fixed.
    pub k_max: usize,
    pub seed: u64,
    /// Keep the stored correction pairs when moving on to the next
    /// eigenpair instead of starting each level from P̂_0.
    pub keep_window_across_levels: bool,
    /// Vectors deflated from the start, for example the constant null vector
    /// of a graph Laplacian. They are not reported as eigenpairs.
    pub initial_deflation: Vec<Vec<f64>>,
    /// Optional start vector per level; levels without one start from a
    /// seeded random vector. A supplied vector is orthogonalized against the
    /// converged eigenvectors before use.
    pub start_vectors: Vec<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_eig: 20,
            tau: 1e-8,
            itmax: 100,
            dacg: DacgConfig::default(),
            pcg: PcgConfig::default(),
            lfil: 30,
            tau_ic: 1e-2,
            k_max: 5,
            seed: 20_240_917,
            keep_window_across_levels: false,
            initial_deflation: Vec::new(),
            start_vectors: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_eig == 0 {
            return Err(Error::InvalidParameter("n_eig must be at least 1".into()));
        }
        if self.n_eig + self.initial_deflation.len() > n {
            return Err(Error::InvalidParameter(format!(
                "cannot compute {} eigenpairs of a {n}x{n} matrix with {} vectors deflated",
                self.n_eig,
                self.initial_deflation.len()
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.tau_ic >= 0.0) {
            return Err(Error::InvalidParameter("tau_ic must be nonnegative".into()));
        }
        self.dacg.validate()?;
        self.inner_config().validate()
    }

    pub fn inner_config(&self) -> PcgConfig {
        PcgConfig {
            tau_outer: self.tau,
            ..self.pcg.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    pub vector: Vec<f64>,
    /// Order in which the pair was computed, starting at 1.
    pub level: usize,
    pub rel_residual: f64,
    pub converged: bool,
    pub warm_start_iterations: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub mvp_warm_start: u64,
    pub mvp_refinement: u64,
    /// Wall clock of the warm start and of the refinement phase.
    pub warm_start_time: Duration,
    pub refinement_time: Duration,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Ascending in λ.
    pub pairs: Vec<EigenPair>,
    pub trace: ConvergenceTrace,
    pub timings: Timings,
    pub fill_ratio: f64,
    pub ic_shift: f64,
    /// Correction pairs refused by the window because sᵀr was not safely
    /// negative.
    pub rejected_pairs: usize,
}

impl SolveReport {
    pub fn all_converged(&self) -> bool {
        self.pairs.iter().all(|p| p.converged)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    pub fn summary_row(&self, solver: &str, k_max: usize) -> SummaryRow {
        SummaryRow {
            solver: solver.to_string(),
            k_max,
            n_eig: self.pairs.len(),
            converged: self.pairs.iter().filter(|p| p.converged).count(),
            warm_start_iterations: self.pairs.iter().map(|p| p.warm_start_iterations).sum(),
            outer_iterations: self.pairs.iter().map(|p| p.outer_iterations).sum(),
            inner_iterations: self.pairs.iter().map(|p| p.inner_iterations).sum(),
            mvp_warm_start: self.pairs.iter().map(|p| p.mvp_warm_start).sum(),
            mvp_refinement: self.pairs.iter().map(|p| p.mvp_refinement).sum(),
            timings: self.timings,
        }
    }
}

/// State of one Newton step, handed to a [`NewtonObserver`] after the
/// correction equation has been solved and before the window is updated.
pub struct NewtonStep<'a> {
    pub matrix: &'a SparseMatrix,
    pub level: usize,
    /// 0 for the first correction of the level.
    pub outer_iter: usize,
    pub u: &'a [f64],
    pub residual: &'a EigenResidual,
    /// Q = [converged vectors, u]
    pub basis: &'a DeflationBasis,
    /// The window that defined the preconditioner of this solve.
    pub window: &'a BfgsWindow,
    pub ic: &'a IcFactor,
    pub outcome: &'a PcgOutcome,
}

pub trait NewtonObserver {
    fn on_step(&mut self, step: &NewtonStep<'_>);
}

impl NewtonObserver for () {
    fn on_step(&mut self, _: &NewtonStep<'_>) {}
}

pub fn solve_leftmost(a: &SparseMatrix, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_leftmost_observed(a, cfg, &mut ())
}

pub fn solve_leftmost_observed(
    a: &SparseMatrix,
    cfg: &SolverConfig,
    observer: &mut dyn NewtonObserver,
) -> Result<SolveReport> {
    cfg.validate(a.n())?;
    a.check_positive_diagonal()?;
    let start = Instant::now();
    let ic = IcFactor::factor(a, cfg.lfil, cfg.tau_ic)?;
    let factor_time = start.elapsed();
    let mut report = solve_with_factor(a, &ic, cfg, observer)?;
    report.timings.factorization = factor_time;
    Ok(report)
}

/// As [`solve_leftmost_observed`] with a precomputed factor; the reported
/// factorization time is zero.
pub fn solve_with_factor(
    a: &SparseMatrix,
    ic: &IcFactor,
    cfg: &SolverConfig,
    observer: &mut dyn NewtonObserver,
) -> Result<SolveReport> {
    cfg.validate(a.n())?;
    if ic.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: ic.n(),
        });
    }
    let n = a.n();
    let op = CountedMatrix::new(a);
    let mut driver = Driver {
        a,
        op: &op,
        ic,
        cfg,
        pcg: cfg.inner_config(),
        converged: DeflationBasis::from_vectors(&cfg.initial_deflation)?,
        window: BfgsWindow::new(cfg.k_max),
        trace: ConvergenceTrace::default(),
        timings: Timings::default(),
        rejected_pairs: 0,
        observer,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs: Vec<EigenPair> = Vec::with_capacity(cfg.n_eig);

    for level in 1..=cfg.n_eig {
        let mut attempt = 0;
        let pair = loop {
            let x0 = match cfg.start_vectors.get(level - 1) {
                Some(v) if attempt == 0 => v.clone(),
                _ => random_start(n, &driver.converged, &mut rng)?,
            };
            let pair = driver.level(level, &x0)?;
            let duplicate = pairs.iter().any(|p| {
                (p.lambda - pair.lambda).abs() < 1e-12 * p.lambda.abs()
                    && vector::dot(&p.vector, &pair.vector).abs() > 0.5
            });
            if duplicate && attempt < MAX_LEVEL_RETRIES {
                attempt += 1;
                log::warn!("level {level}: converged to an already accepted eigenpair; retrying with a new start vector");
                continue;
            }
            break pair;
        };
        driver.converged.push_unchecked(pair.vector.clone());
        pairs.push(pair);
    }

    pairs.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    Ok(SolveReport {
        pairs,
        trace: driver.trace,
        timings: driver.timings,
        fill_ratio: ic.fill_ratio(),
        ic_shift: ic.shift_used(),
        rejected_pairs: driver.rejected_pairs,
    })
}

const MAX_LEVEL_RETRIES: usize = 2;

struct Driver<'a, 'm> {
    a: &'m SparseMatrix,
    op: &'a CountedMatrix<'m>,
    ic: &'a IcFactor,
    cfg: &'a SolverConfig,
    pcg: PcgConfig,
    /// Q̃: initial deflation plus accepted eigenvectors.
    converged: DeflationBasis,
    window: BfgsWindow,
    trace: ConvergenceTrace,
    timings: Timings,
    rejected_pairs: usize,
    observer: &'a mut dyn NewtonObserver,
}

impl Driver<'_, '_> {
    /// Warm start and Newton iteration for one eigenpair, starting from x0.
    fn level(&mut self, level: usize, x0: &[f64]) -> Result<EigenPair> {
        let cfg = self.cfg;
        let op = self.op;
        if !cfg.keep_window_across_levels {
            self.window.clear();
        }

        let t0 = Instant::now();
        let mvp0 = op.products();
        let warm = dacg_minimize(op, self.ic, &self.converged, x0, &cfg.dacg)?;
        if !warm.converged {
            log::warn!(
                "level {level}: warm start stopped after {} iterations above tau_dacg",
                warm.iterations
            );
        }
        let mvp_warm_start = op.products() - mvp0;
        let warm_start_time = t0.elapsed();
        self.timings.warm_start += warm_start_time;

        let t1 = Instant::now();
        let mvp1 = op.products();
        let mut u = warm.u;
        let mut res = eigenresidual(op, &mut u)?;
        self.trace.push(TraceRow {
            level,
            phase: Phase::Dacg,
            kind: RowKind::Outer,
            outer_iter: warm.iterations,
            inner_iter: 0,
            cumulative_inner: 0,
            cumulative_mvp: op.products(),
            theta: res.theta,
            rel_residual: res.relative(),
            pcg_exit: None,
        });

        let mut k = 0;
        let mut inner_total = 0;
        let mut fallback_iterations = 0;
        while res.rnorm > cfg.tau * res.theta && k < cfg.itmax {
            let q = self.converged.with_column(&u);
            let mut rhs: Vec<f64> = res.r.iter().map(|v| -v).collect();
            q.project(&mut rhs);
            let jac = ProjectedJacobian::new(op, res.theta, &q);
            let pre = BfgsPreconditioner {
                window: &self.window,
                ic: self.ic,
                basis: &q,
            };
            let mvp_before = op.products();
            let outcome = solve_correction(&jac, &rhs, &pre, &self.pcg, &u, &res.au)?;
            self.observer.on_step(&NewtonStep {
                matrix: self.a,
                level,
                outer_iter: k,
                u: &u,
                residual: &res,
                basis: &q,
                window: &self.window,
                ic: self.ic,
                outcome: &outcome,
            });
            for step in outcome.trace.iter().filter(|s| !s.eigen_residual.is_nan()) {
                self.trace.push(TraceRow {
                    level,
                    phase: Phase::Newton,
                    kind: RowKind::Inner,
                    outer_iter: k,
                    inner_iter: step.iteration,
                    cumulative_inner: inner_total + step.iteration,
                    cumulative_mvp: mvp_before + step.iteration as u64,
                    theta: res.theta,
                    rel_residual: step.eigen_residual,
                    pcg_exit: None,
                });
            }
            inner_total += outcome.iterations;
            k += 1;

            if vector::norm2(&outcome.s) == 0.0 {
                // no usable correction: the Jacobian is not positive definite
                // on the complement, so finish the level by minimization
                log::warn!(
                    "level {level}: inner solve ended with {} and no correction; continuing with DACG",
                    outcome.exit_reason.as_str()
                );
                let finish = DacgConfig {
                    tau_dacg: cfg.tau,
                    ..cfg.dacg.clone()
                };
                let out = dacg_minimize(op, self.ic, &self.converged, &u, &finish)?;
                fallback_iterations += out.iterations;
                u = out.u;
                res = eigenresidual(op, &mut u)?;
                self.push_outer(level, k, inner_total, &res, Some(outcome.exit_reason));
                break;
            }

            let mut next: Vec<f64> = u.iter().zip(&outcome.s).map(|(a, b)| a + b).collect();
            if self.converged.orthogonalize(&mut next) == Orthogonalized::InSpan {
                return Err(Error::ZeroVector);
            }
            // r_k = -(right-hand side) is the residual at u_k
            let r_old: Vec<f64> = rhs.iter().map(|v| -v).collect();
            if let Err(why) = self.window.push_pair(&outcome.s, &r_old) {
                self.rejected_pairs += 1;
                log::debug!("level {level} step {k}: correction pair rejected ({why:?})");
            }
            let theta_old = res.theta;
            res = eigenresidual(op, &mut next)?;
            if level == 1 && res.theta > theta_old + 10.0 * cfg.tau * theta_old {
                log::warn!(
                    "level 1 step {k}: Rayleigh quotient increased from {theta_old:e} to {:e}",
                    res.theta
                );
            }
            u = next;
            self.push_outer(level, k, inner_total, &res, Some(outcome.exit_reason));
        }

        let ok = res.rnorm <= cfg.tau * res.theta;
        if !ok {
            log::warn!(
                "level {level}: not converged after {k} outer iterations (relative residual {:e})",
                res.relative()
            );
        }
        let refinement_time = t1.elapsed();
        self.timings.refinement += refinement_time;
        Ok(EigenPair {
            lambda: res.theta,
            rel_residual: res.relative(),
            vector: u,
            level,
            converged: ok,
            warm_start_iterations: warm.iterations + fallback_iterations,
            outer_iterations: k,
            inner_iterations: inner_total,
            mvp_warm_start,
            mvp_refinement: op.products() - mvp1,
            warm_start_time,
            refinement_time,
        })
    }

    fn push_outer(&mut self, level: usize, k: usize, inner_total: usize, res: &EigenResidual, exit: Option<ExitReason>) {
        self.trace.push(TraceRow {
            level,
            phase: Phase::Newton,
            kind: RowKind::Outer,
            outer_iter: k,
            inner_iter: 0,
            cumulative_inner: inner_total,
            cumulative_mvp: self.op.products(),
            theta: res.theta,
            rel_residual: res.relative(),
            pcg_exit: exit,
        });
    }
}

/// Uniform random start vector orthogonal to `deflate`.
pub fn random_start(n: usize, deflate: &DeflationBasis, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    for _ in 0..8 {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if deflate.orthogonalize(&mut x) == Orthogonalized::Ok {
            vector::normalize(&mut x)?;
            return Ok(x);
        }
    }
    Err(Error::ZeroVector)
}

/// Pure DACG to the full tolerance for every level; the reference the
/// Newton phase is measured against.
pub fn solve_dacg_only(a: &SparseMatrix, ic: &IcFactor, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate(a.n())?;
    let n = a.n();
    let op = CountedMatrix::new(a);
    let dcfg = DacgConfig {
        tau_dacg: cfg.tau,
        ..cfg.dacg.clone()
    };
    let mut converged = DeflationBasis::from_vectors(&cfg.initial_deflation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = ConvergenceTrace::default();
    let mut pairs = Vec::new();
    let t0 = Instant::now();
    for level in 1..=cfg.n_eig {
        let t_level = Instant::now();
        let mvp0 = op.products();
        let x0 = match cfg.start_vectors.get(level - 1) {
            Some(v) => v.clone(),
            None => random_start(n, &converged, &mut rng)?,
        };
        let out = dacg_minimize(&op, ic, &converged, &x0, &dcfg)?;
        let mvp_warm_start = op.products() - mvp0;
        for (it, theta, rel) in &out.history {
            trace.push(TraceRow {
                level,
                phase: Phase::Dacg,
                kind: RowKind::Outer,
                outer_iter: *it,
                inner_iter: 0,
                cumulative_inner: 0,
                // one product for the start vector, one per iteration, plus
                // refreshes; the per-row figure ignores refreshes
                cumulative_mvp: mvp0 + 1 + *it as u64,
                theta: *theta,
                rel_residual: *rel,
                pcg_exit: None,
            });
        }
        let rel = out.history.last().map_or(f64::NAN, |h| h.2);
        converged.push_unchecked(out.u.clone());
        pairs.push(EigenPair {
            lambda: out.theta,
            vector: out.u,
            level,
            rel_residual: rel,
            converged: out.converged,
            warm_start_iterations: out.iterations,
            outer_iterations: 0,
            inner_iterations: 0,
            mvp_warm_start,
            mvp_refinement: 0,
            warm_start_time: t_level.elapsed(),
            refinement_time: Duration::ZERO,
        });
    }
    pairs.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    Ok(SolveReport {
        pairs,
        trace,
        timings: Timings {
            warm_start: t0.elapsed(),
            ..Timings::default()
        },
        fill_ratio: ic.fill_ratio(),
        ic_shift: ic.shift_used(),
        rejected_pairs: 0,
    })
}

/// Runs the DACG-Newton solver once per window length with a shared factor
/// and seed.
pub fn run_comparison(
    a: &SparseMatrix,
    cfg: &SolverConfig,
    k_max_values: &[usize],
) -> Result<Vec<(usize, SolveReport)>> {
    cfg.validate(a.n())?;
    let start = Instant::now();
    let ic = IcFactor::factor(a, cfg.lfil, cfg.tau_ic)?;
    let factor_time = start.elapsed();
    k_max_values
        .iter()
        .map(|&k_max| {
            let run_cfg = SolverConfig {
                k_max,
                ..cfg.clone()
            };
            let mut report = solve_with_factor(a, &ic, &run_cfg, &mut ())?;
            report.timings.factorization = factor_time;
            Ok((k_max, report))
        })
        .collect()
}
