//! BFGS-updated preconditioners for the sequence of correction equations.
//!
//! After Newton step k the pair (s_k, r_k), correction and eigenresidual, is
//! stored and the preconditioner becomes
//!
//! ```text
//! P̂_{k+1} = -s sᵀ/(sᵀr) + (I - s rᵀ/(sᵀr)) P̂_k (I - r sᵀ/(sᵀr))
//! P_{k+1} = (I - QQᵀ) P̂_{k+1} (I - QQᵀ)
//! ```
//!
//! with P̂_0 = (LLᵀ)⁻¹ from the incomplete Cholesky factor. At most `k_max`
//! pairs are kept; the oldest is overwritten first.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::deflation::DeflationBasis;
use crate::error::Result;
use crate::ichol::IcFactor;
use crate::pcg::Preconditioner;
use crate::vector::{self, axpy, dot, norm2};

#[derive(Debug, Clone)]
pub struct CorrectionPair {
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    /// sᵀr, fixed at insertion.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRejection {
    ZeroVector,
    /// |sᵀr| <= 1e-14 ‖s‖‖r‖
    Degenerate,
    /// sᵀr >= 0; storing it would break positive definiteness.
    WrongSign,
}

#[derive(Debug, Clone)]
pub struct BfgsWindow {
    pairs: VecDeque<CorrectionPair>,
    k_max: usize,
}

impl BfgsWindow {
    pub fn new(k_max: usize) -> Self {
        Self {
            pairs: VecDeque::with_capacity(k_max),
            k_max,
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Oldest first.
    pub fn pairs(&self) -> impl DoubleEndedIterator<Item = &CorrectionPair> + ExactSizeIterator {
        self.pairs.iter()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores (s, r). A no-op when `k_max == 0`.
    pub fn push_pair(&mut self, s: &[f64], r: &[f64]) -> std::result::Result<(), PairRejection> {
        if self.k_max == 0 {
            return Ok(());
        }
        let (ns, nr) = (norm2(s), norm2(r));
        if ns == 0.0 || nr == 0.0 {
            return Err(PairRejection::ZeroVector);
        }
        let alpha = dot(s, r);
        if alpha.abs() <= 1e-14 * ns * nr {
            log::warn!("BFGS pair rejected: sᵀr = {alpha:e} is numerically zero");
            return Err(PairRejection::Degenerate);
        }
        if alpha >= 0.0 {
            log::warn!("BFGS pair rejected: sᵀr = {alpha:e} has the wrong sign");
            return Err(PairRejection::WrongSign);
        }
        self.insert(CorrectionPair {
            s: s.to_vec(),
            r: r.to_vec(),
            alpha,
        });
        Ok(())
    }

    /// Stores a pair without any sign or size check. Only for diagnostics
    /// that need to show what the checks in [`Self::push_pair`] prevent.
    pub fn push_unchecked(&mut self, s: &[f64], r: &[f64]) {
        if self.k_max == 0 {
            return;
        }
        self.insert(CorrectionPair {
            s: s.to_vec(),
            r: r.to_vec(),
            alpha: dot(s, r),
        });
    }

    fn insert(&mut self, pair: CorrectionPair) {
        if self.pairs.len() == self.k_max {
            self.pairs.pop_front();
        }
        self.pairs.push_back(pair);
    }

    /// c <- P_k g for g ⊥ Q.
    pub fn apply_into(&self, ic: &IcFactor, basis: &DeflationBasis, g: &[f64], c: &mut [f64]) {
        let mut w = g.to_vec();
        let mut a = vec![0.0; self.pairs.len()];
        for (p, a_s) in self.pairs.iter().zip(a.iter_mut()).rev() {
            *a_s = dot(&p.s, &w) / p.alpha;
            axpy(-*a_s, &p.r, &mut w);
        }
        ic.solve_into(&w, c);
        for (p, a_s) in self.pairs.iter().zip(&a) {
            let b = dot(&p.r, c) / p.alpha;
            axpy(-(a_s + b), &p.s, c);
        }
        basis.project(c);
    }

    pub fn apply_preconditioner(
        &self,
        ic: &IcFactor,
        basis: &DeflationBasis,
        g: &[f64],
    ) -> Result<Vec<f64>> {
        vector::check_len(g, ic.n())?;
        let mut c = vec![0.0; g.len()];
        self.apply_into(ic, basis, g, &mut c);
        Ok(c)
    }
}

/// The window, the initial factor and the basis bundled as a
/// [`Preconditioner`] for one correction solve.
#[derive(Debug, Clone, Copy)]
pub struct BfgsPreconditioner<'a> {
    pub window: &'a BfgsWindow,
    pub ic: &'a IcFactor,
    pub basis: &'a DeflationBasis,
}

impl Preconditioner for BfgsPreconditioner<'_> {
    fn apply(&self, g: &[f64], out: &mut [f64]) {
        self.window.apply_into(self.ic, self.basis, g, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdReport {
    pub trials: usize,
    pub failures: usize,
    /// min over trials of zᵀPz / zᵀz
    pub min_rayleigh: f64,
}

impl SpdReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Draws `trials` random z ⊥ Q and checks zᵀ P_k z > 0.
pub fn spd_probe(
    window: &BfgsWindow,
    ic: &IcFactor,
    basis: &DeflationBasis,
    trials: usize,
    seed: u64,
) -> SpdReport {
    let n = ic.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; n];
    let mut pz = vec![0.0; n];
    let mut failures = 0;
    let mut min_rayleigh = f64::INFINITY;
    for _ in 0..trials {
        z.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        basis.project(&mut z);
        let zz = dot(&z, &z);
        if zz == 0.0 {
            continue;
        }
        window.apply_into(ic, basis, &z, &mut pz);
        let q = dot(&z, &pz) / zz;
        min_rayleigh = min_rayleigh.min(q);
        if !(q > 0.0) {
            failures += 1;
        }
    }
    SpdReport {
        trials,
        failures,
        min_rayleigh,
    }
}
