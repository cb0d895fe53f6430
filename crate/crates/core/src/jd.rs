//! Jacobi-Davidson baseline for the leftmost eigenpairs.
//!
//! A search space of m_min..m_max orthonormal vectors is kept orthogonal to
//! the converged eigenvectors. Each iteration extracts the smallest Ritz
//! pair, solves the projected correction equation with the same PCG inner
//! solver as the Newton driver and expands the space by the correction.
//! The preconditioner is the projected IC factor, optionally refined with
//! the BFGS window.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bfgs::{BfgsPreconditioner, BfgsWindow};
use crate::deflation::{DeflationBasis, EigenResidual, ProjectedJacobian};
use crate::dense::{symmetric_eigen, DenseMatrix};
use crate::error::{Error, Result};
use crate::ichol::IcFactor;
use crate::newton::{random_start, EigenPair, SolveReport};
use crate::pcg::{solve_correction, PcgConfig};
use crate::sparse::{CountedMatrix, SparseMatrix};
use crate::trace::{ConvergenceTrace, Phase, RowKind, Timings, TraceRow};
use crate::vector::{self, dot, norm2};

#[derive(Debug, Clone, PartialEq)]
pub struct JdConfig {
    pub n_eig: usize,
    pub tau: f64,
    /// Correction solves per eigenpair.
    pub itmax: usize,
    pub m_min: usize,
    pub m_max: usize,
    /// Inner solver settings; `tau_outer` is overwritten with `tau`.
    pub pcg: PcgConfig,
    pub seed: u64,
    /// Window length for BFGS updates of the correction preconditioner;
    /// 0 (the default) keeps the projected IC factor fixed.
    pub k_max: usize,
    pub initial_deflation: Vec<Vec<f64>>,
}

impl Default for JdConfig {
    fn default() -> Self {
        Self {
            n_eig: 20,
            tau: 1e-8,
            itmax: 100,
            m_min: 5,
            m_max: 10,
            pcg: PcgConfig::default(),
            seed: 20_240_917,
            k_max: 0,
            initial_deflation: Vec::new(),
        }
    }
}

impl JdConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_eig == 0 || self.n_eig + self.initial_deflation.len() > n {
            return Err(Error::InvalidParameter(format!(
                "n_eig = {} is out of range for n = {n}",
                self.n_eig
            )));
        }
        if self.m_min == 0 || self.m_max <= self.m_min {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= m_min < m_max, got m_min = {}, m_max = {}",
                self.m_min, self.m_max
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        self.pcg.validate()
    }
}

/// Orthonormal search space V together with W = AV.
struct SearchSpace {
    v: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

impl SearchSpace {
    fn len(&self) -> usize {
        self.v.len()
    }

    /// Orthonormalizes t against the converged vectors and V, then appends
    /// it. Returns false if t carries no new direction.
    fn expand(&mut self, op: &CountedMatrix<'_>, converged: &DeflationBasis, mut t: Vec<f64>) -> bool {
        let original = norm2(&t);
        if original == 0.0 {
            return false;
        }
        for _ in 0..2 {
            converged.project(&mut t);
            for vi in &self.v {
                let c = dot(vi, &t);
                vector::axpy(-c, vi, &mut t);
            }
        }
        let nt = norm2(&t);
        if nt <= 1e-12 * original {
            return false;
        }
        vector::scale(1.0 / nt, &mut t);
        let mut at = vec![0.0; t.len()];
        op.apply(&t, &mut at);
        self.v.push(t);
        self.w.push(at);
        true
    }

    fn projected_matrix(&self) -> DenseMatrix {
        let m = self.len();
        DenseMatrix::from_fn(m, m, |i, j| dot(&self.v[i], &self.w[j]))
    }

    /// Replaces (V, W) by (V Y, W Y) for the given coefficient vectors.
    fn rotate(&mut self, coefficients: &[Vec<f64>]) {
        let n = self.v.first().map_or(0, Vec::len);
        let combine = |basis: &[Vec<f64>], y: &[f64]| {
            let mut out = vec![0.0; n];
            for (b, c) in basis.iter().zip(y) {
                vector::axpy(*c, b, &mut out);
            }
            out
        };
        let v: Vec<Vec<f64>> = coefficients.iter().map(|y| combine(&self.v, y)).collect();
        let w: Vec<Vec<f64>> = coefficients.iter().map(|y| combine(&self.w, y)).collect();
        self.v = v;
        self.w = w;
    }
}

pub fn jd_solve(a: &SparseMatrix, ic: &IcFactor, cfg: &JdConfig) -> Result<SolveReport> {
    cfg.validate(a.n())?;
    if ic.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: ic.n(),
        });
    }
    let n = a.n();
    let op = CountedMatrix::new(a);
    let pcg_cfg = PcgConfig {
        tau_outer: cfg.tau,
        ..cfg.pcg.clone()
    };
    let mut converged = DeflationBasis::from_vectors(&cfg.initial_deflation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut space = SearchSpace {
        v: Vec::new(),
        w: Vec::new(),
    };
    let mut trace = ConvergenceTrace::default();
    let mut pairs = Vec::new();
    let mut window = BfgsWindow::new(cfg.k_max);
    let mut rejected_pairs = 0;
    let t0 = Instant::now();

    // cold start: m_min random directions
    let mut attempts = 0;
    while space.len() < cfg.m_min.min(n - converged.len()) && attempts < 4 * cfg.m_min {
        let x = random_start(n, &converged, &mut rng)?;
        space.expand(&op, &converged, x);
        attempts += 1;
    }

    for level in 1..=cfg.n_eig {
        window.clear();
        let t_level = Instant::now();
        let mvp0 = op.products();
        if space.len() == 0 {
            let x = random_start(n, &converged, &mut rng)?;
            space.expand(&op, &converged, x);
        }
        let mut its = 0;
        let mut inner_total = 0;
        let (res, u, ritz): (EigenResidual, Vec<f64>, Vec<Vec<f64>>) = loop {
            let eig = symmetric_eigen(&space.projected_matrix())?;
            let (u, au) = ritz_vector(&space, &eig.eigenvectors[0]);
            let res = residual_of(&u, au);
            trace.push(TraceRow {
                level,
                phase: Phase::Jd,
                kind: RowKind::Outer,
                outer_iter: its,
                inner_iter: 0,
                cumulative_inner: inner_total,
                cumulative_mvp: op.products(),
                theta: res.theta,
                rel_residual: res.relative(),
                pcg_exit: None,
            });
            if res.rnorm <= cfg.tau * res.theta || its >= cfg.itmax {
                break (res, u, eig.eigenvectors);
            }
            if space.len() >= cfg.m_max {
                space.rotate(&eig.eigenvectors[..cfg.m_min]);
            }

            let q = converged.with_column(&u);
            let mut rhs: Vec<f64> = res.r.iter().map(|x| -x).collect();
            q.project(&mut rhs);
            let jac = ProjectedJacobian::new(&op, res.theta, &q);
            let pre = BfgsPreconditioner {
                window: &window,
                ic,
                basis: &q,
            };
            let mvp_before = op.products();
            let outcome = solve_correction(&jac, &rhs, &pre, &pcg_cfg, &u, &res.au)?;
            for step in outcome.trace.iter().filter(|s| !s.eigen_residual.is_nan()) {
                trace.push(TraceRow {
                    level,
                    phase: Phase::Jd,
                    kind: RowKind::Inner,
                    outer_iter: its,
                    inner_iter: step.iteration,
                    cumulative_inner: inner_total + step.iteration,
                    cumulative_mvp: mvp_before + step.iteration as u64,
                    theta: res.theta,
                    rel_residual: step.eigen_residual,
                    pcg_exit: None,
                });
            }
            inner_total += outcome.iterations;
            its += 1;
            if cfg.k_max > 0 {
                if window.push_pair(&outcome.s, &res.r).is_err() {
                    rejected_pairs += 1;
                }
            }
            let mut t = outcome.s;
            if !space.expand(&op, &converged, t.clone()) {
                // stagnated correction: expand by the preconditioned residual
                t = vec![0.0; n];
                pre_apply(ic, &q, &res.r, &mut t);
                if !space.expand(&op, &converged, t) {
                    log::warn!("level {level}: search space cannot be expanded");
                    break (res, u, eig.eigenvectors);
                }
            }
        };

        let ok = res.rnorm <= cfg.tau * res.theta;
        if !ok {
            log::warn!(
                "level {level}: JD not converged after {its} iterations (relative residual {:e})",
                res.relative()
            );
        }
        // carry the remaining Ritz vectors over; they are orthogonal to u
        let eig = if ritz.len() == space.len() {
            ritz
        } else {
            symmetric_eigen(&space.projected_matrix())?.eigenvectors
        };
        space.rotate(&eig[1..]);

        converged.push_unchecked(u.clone());
        pairs.push(EigenPair {
            lambda: res.theta,
            rel_residual: res.relative(),
            vector: u,
            level,
            converged: ok,
            warm_start_iterations: 0,
            outer_iterations: its,
            inner_iterations: inner_total,
            mvp_warm_start: 0,
            mvp_refinement: op.products() - mvp0,
            warm_start_time: Duration::ZERO,
            refinement_time: t_level.elapsed(),
        });
    }

    pairs.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    Ok(SolveReport {
        pairs,
        trace,
        timings: Timings {
            refinement: t0.elapsed(),
            ..Timings::default()
        },
        fill_ratio: ic.fill_ratio(),
        ic_shift: ic.shift_used(),
        rejected_pairs,
    })
}

fn pre_apply(ic: &IcFactor, q: &DeflationBasis, g: &[f64], out: &mut [f64]) {
    ic.solve_into(g, out);
    q.project(out);
}

fn ritz_vector(space: &SearchSpace, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = space.v[0].len();
    let mut u = vec![0.0; n];
    let mut au = vec![0.0; n];
    for ((v, w), c) in space.v.iter().zip(&space.w).zip(y) {
        vector::axpy(*c, v, &mut u);
        vector::axpy(*c, w, &mut au);
    }
    let nu = norm2(&u);
    vector::scale(1.0 / nu, &mut u);
    vector::scale(1.0 / nu, &mut au);
    (u, au)
}

fn residual_of(u: &[f64], au: Vec<f64>) -> EigenResidual {
    let theta = dot(u, &au);
    let r: Vec<f64> = au.iter().zip(u).map(|(a, x)| a - theta * x).collect();
    EigenResidual {
        theta,
        rnorm: norm2(&r),
        r,
        au,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::dense_eigenvalues;
    use crate::generate::{generate_laplacian, LaplacianKind};

    #[test]
    fn diagonal_example() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let a = SparseMatrix::from_diagonal(&d);
        let ic = IcFactor::factor(&a, 0, 0.0).unwrap();
        let cfg = JdConfig {
            n_eig: 3,
            m_min: 2,
            m_max: 4,
            ..JdConfig::default()
        };
        let rep = jd_solve(&a, &ic, &cfg).unwrap();
        assert!(rep.all_converged());
        for (p, exact) in rep.pairs.iter().zip([1.0, 2.0, 3.0]) {
            assert!((p.lambda - exact).abs() <= 1e-10, "{}", p.lambda);
        }
    }

    #[test]
    fn grid_matches_dense() {
        let a = generate_laplacian(&LaplacianKind::Grid2d { nx: 12, ny: 12 }).unwrap();
        let ic = IcFactor::factor(&a, 30, 1e-2).unwrap();
        let exact = dense_eigenvalues(&a).unwrap();
        let cfg = JdConfig {
            n_eig: 6,
            ..JdConfig::default()
        };
        let rep = jd_solve(&a, &ic, &cfg).unwrap();
        assert!(rep.all_converged());
        for (p, e) in rep.pairs.iter().zip(&exact) {
            assert!((p.lambda - e).abs() <= 1e-8 * e, "{} vs {}", p.lambda, e);
        }
    }

    #[test]
    fn rejects_bad_window() {
        let a = SparseMatrix::identity(20);
        let ic = IcFactor::factor(&a, 0, 0.0).unwrap();
        let cfg = JdConfig {
            n_eig: 1,
            m_min: 5,
            m_max: 5,
            ..JdConfig::default()
        };
        assert!(jd_solve(&a, &ic, &cfg).is_err());
    }
}
