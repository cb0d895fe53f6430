//! Deflation-accelerated conjugate gradient (DACG): preconditioned nonlinear
//! CG minimization of the Rayleigh quotient on the orthogonal complement of
//! already converged eigenvectors.
//!
//! Each step minimizes q exactly over span{x, p} (a 2x2 Rayleigh-Ritz
//! problem), so q(x_l) never increases. One product with A per iteration;
//! A x is carried along and refreshed at every restart.

use crate::deflation::{DeflationBasis, Orthogonalized};
use crate::error::{Error, Result};
use crate::ichol::IcFactor;
use crate::sparse::CountedMatrix;
use crate::vector::{self, dot, norm2, scale};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaFormula {
    FletcherReeves,
    PolakRibiere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DacgConfig {
    /// Stop when ‖Ax - θx‖ <= tau_dacg * θ.
    pub tau_dacg: f64,
    pub itmax_dacg: usize,
    pub beta: BetaFormula,
    /// Reset the search direction to the preconditioned gradient every
    /// `restart` iterations.
    pub restart: usize,
}

impl Default for DacgConfig {
    fn default() -> Self {
        Self {
            tau_dacg: 1e-2,
            itmax_dacg: 5000,
            beta: BetaFormula::FletcherReeves,
            restart: 50,
        }
    }
}

impl DacgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_dacg > 0.0 && self.tau_dacg <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau_dacg must lie in (0, 1], got {}",
                self.tau_dacg
            )));
        }
        if self.restart == 0 {
            return Err(Error::InvalidParameter("restart must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DacgOutcome {
    /// Unit vector orthogonal to the deflation basis.
    pub u: Vec<f64>,
    pub theta: f64,
    pub iterations: usize,
    pub converged: bool,
    /// (iteration, θ, ‖Ax - θx‖/θ) per iteration, the initial point first.
    pub history: Vec<(usize, f64, f64)>,
}

pub fn dacg_minimize(
    a: &CountedMatrix<'_>,
    ic: &IcFactor,
    deflate: &DeflationBasis,
    x0: &[f64],
    cfg: &DacgConfig,
) -> Result<DacgOutcome> {
    cfg.validate()?;
    let n = a.n();
    vector::check_len(x0, n)?;
    vector::ensure_finite(x0)?;

    let mut x = x0.to_vec();
    if deflate.orthogonalize(&mut x) == Orthogonalized::InSpan {
        return Err(Error::ZeroVector);
    }
    vector::normalize(&mut x)?;

    let mut ax = vec![0.0; n];
    a.apply(&x, &mut ax);
    let mut theta = dot(&x, &ax);

    let mut grad = vec![0.0; n];
    let mut pgrad = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut ad = vec![0.0; n];
    let mut prev_grad = vec![0.0; n];
    let mut prev_dot = 0.0;
    let mut history = Vec::new();
    let mut since_restart = 0usize;

    let mut iterations = 0;
    let converged = loop {
        if since_restart >= cfg.restart {
            // refresh A x against recurrence drift
            a.apply(&x, &mut ax);
            theta = dot(&x, &ax);
            since_restart = 0;
        }
        // gradient direction g = Ax - θx; the factor 2/xᵀx cancels in β
        // and does not change the search line
        for i in 0..n {
            grad[i] = ax[i] - theta * x[i];
        }
        let rnorm = norm2(&grad);
        history.push((iterations, theta, rnorm / theta));
        if rnorm <= cfg.tau_dacg * theta {
            break true;
        }
        if iterations == cfg.itmax_dacg {
            break false;
        }

        ic.solve_into(&grad, &mut pgrad);
        deflate.project(&mut pgrad);
        let gdot = dot(&grad, &pgrad);

        let beta = if since_restart == 0 {
            0.0
        } else {
            match cfg.beta {
                BetaFormula::FletcherReeves => gdot / prev_dot,
                BetaFormula::PolakRibiere => ((gdot - dot(&prev_grad, &pgrad)) / prev_dot).max(0.0),
            }
        };
        for (pi, gi) in p.iter_mut().zip(&pgrad) {
            *pi = -gi + beta * *pi;
        }
        if beta != 0.0 && dot(&grad, &p) >= 0.0 {
            // not a descent direction
            for (pi, gi) in p.iter_mut().zip(&pgrad) {
                *pi = -gi;
            }
        }
        prev_dot = gdot;
        prev_grad.copy_from_slice(&grad);
        iterations += 1;
        since_restart += 1;

        // d = p orthonormalized against x, with A d by linearity
        a.apply(&p, &mut ap);
        let xp = dot(&x, &p);
        for i in 0..n {
            d[i] = p[i] - xp * x[i];
            ad[i] = ap[i] - xp * ax[i];
        }
        let dn = norm2(&d);
        if dn == 0.0 || !dn.is_finite() {
            break false;
        }
        scale(1.0 / dn, &mut d);
        scale(1.0 / dn, &mut ad);

        let (c1, c2, _) = smallest_ritz_2x2(theta, dot(&x, &ad), dot(&d, &ad));
        for i in 0..n {
            x[i] = c1 * x[i] + c2 * d[i];
            ax[i] = c1 * ax[i] + c2 * ad[i];
        }
        let nx = norm2(&x);
        scale(1.0 / nx, &mut x);
        scale(1.0 / nx, &mut ax);
        deflate.project(&mut x);
        theta = dot(&x, &ax);
    };

    Ok(DacgOutcome {
        u: x,
        theta,
        iterations,
        converged,
        history,
    })
}

/// Smallest eigenpair of [[a, b], [b, c]]. Returns (c1, c2, μ) with
/// c1 >= 0 and c1² + c2² = 1.
fn smallest_ritz_2x2(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        return if a <= c { (1.0, 0.0, a) } else { (0.0, 1.0, c) };
    }
    let h = 0.5 * (c - a);
    let r = h.hypot(b);
    // δ = μ - a, computed without cancellation
    let delta = if h >= 0.0 { -b * b / (h + r) } else { h - r };
    let (v1, v2) = (b.abs(), delta * b.signum());
    let nv = v1.hypot(v2);
    (v1 / nv, v2 / nv, a + delta)
}
