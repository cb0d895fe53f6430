//! Dense reference computations: full symmetric eigendecompositions and
//! spectral diagnostics of the preconditioned Jacobians.
//!
//! Nothing here is on a solver's hot path. The routines back the tests, the
//! small Rayleigh-Ritz problems of Jacobi-Davidson and the condition-number
//! diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::bfgs::BfgsWindow;
use crate::deflation::DeflationBasis;
use crate::error::{Error, Result};
use crate::ichol::IcFactor;
use crate::sparse::SparseMatrix;

pub const DENSE_EIGEN_LIMIT: usize = 2000;
pub const SPECTRUM_LIMIT: usize = 500;

pub type DenseMatrix = DMatrix<f64>;

pub fn dense_from_sparse(a: &SparseMatrix) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(a.n(), a.n());
    for i in 0..a.n() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            m[(i, j)] = v;
        }
    }
    m
}

/// y = M x
pub fn apply(m: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// I - QQᵀ
pub fn projector(n: usize, basis: &DeflationBasis) -> DenseMatrix {
    let mut p = DenseMatrix::identity(n, n);
    for q in basis.columns() {
        let q = DVector::from_column_slice(q);
        p -= &q * q.transpose();
    }
    p
}

fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    (m + m.transpose()) * 0.5
}

#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// eigenvectors[k] belongs to eigenvalues[k]; unit norm.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Full eigendecomposition of a symmetric sparse matrix.
pub fn dense_eigen(a: &SparseMatrix) -> Result<DenseSpectrum> {
    guard(a.n(), DENSE_EIGEN_LIMIT)?;
    symmetric_eigen(&dense_from_sparse(a))
}

/// Eigenvalues only, ascending.
pub fn dense_eigenvalues(a: &SparseMatrix) -> Result<Vec<f64>> {
    guard(a.n(), DENSE_EIGEN_LIMIT)?;
    symmetric_eigenvalues(&dense_from_sparse(a))
}

fn guard(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::SizeGuard { n, limit });
    }
    Ok(())
}

/// Eigendecomposition of the symmetric part of `m`, ascending.
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<DenseSpectrum> {
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 0)
        .ok_or(Error::EigenNoConvergence(m.nrows()))?;
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    Ok(DenseSpectrum {
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        eigenvectors: order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect(),
    })
}

pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    let mut vals: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNoConvergence(m.nrows()));
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Dense P̂_0 = (L Lᵀ)⁻¹ through an explicit triangular inverse.
pub fn dense_initial_preconditioner(ic: &IcFactor) -> DenseMatrix {
    let n = ic.n();
    let l = dense_from_sparse(ic.l());
    let linv = l
        .solve_lower_triangular(&DenseMatrix::identity(n, n))
        .expect("IC factor has a positive diagonal");
    linv.transpose() * linv
}

/// Dense P_k: the initial preconditioner updated once per stored pair,
/// oldest first,
///   P̂ <- -ssᵀ/α + (I - s rᵀ/α) P̂ (I - r sᵀ/α),
/// then projected as (I - QQᵀ) P̂ (I - QQᵀ).
pub fn dense_bfgs_preconditioner(
    p0: &DenseMatrix,
    pairs: &[(Vec<f64>, Vec<f64>)],
    basis: &DeflationBasis,
) -> DenseMatrix {
    let n = p0.nrows();
    let mut p = p0.clone();
    for (s, r) in pairs {
        let s = DVector::from_column_slice(s);
        let r = DVector::from_column_slice(r);
        let alpha = s.dot(&r);
        let left = DenseMatrix::identity(n, n) - &s * r.transpose() / alpha;
        p = &left * p * left.transpose() - &s * s.transpose() / alpha;
    }
    let proj = projector(n, basis);
    &proj * p * &proj
}

#[derive(Debug, Clone)]
pub struct JacobianSpectrum {
    /// Eigenvalues of J^{1/2} P J^{1/2}, ascending, deflated zeros included.
    pub eigenvalues: Vec<f64>,
    /// Smallest eigenvalue above the zero threshold.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// λ_max / min{λ > 1e-10 λ_max}
    pub kappa: f64,
    /// max |1 - λ| over the eigenvalues above the threshold.
    pub e_norm: f64,
    /// Eigenvalues of J below -1e-12 (outside the positive definite regime),
    /// clipped to zero before the square root.
    pub negative_jacobian_eigenvalues: usize,
}

/// Spectrum of J̃ = J^{1/2} P_k J^{1/2} with J = (I-QQᵀ)(A-θI)(I-QQᵀ).
pub fn preconditioned_jacobian_spectrum(
    a: &SparseMatrix,
    theta: f64,
    basis: &DeflationBasis,
    window: &BfgsWindow,
    ic: &IcFactor,
) -> Result<JacobianSpectrum> {
    let n = a.n();
    guard(n, SPECTRUM_LIMIT)?;
    let proj = projector(n, basis);
    let shifted = dense_from_sparse(a) - DenseMatrix::identity(n, n) * theta;
    let jac = &proj * shifted * &proj;
    let eig = symmetric_eigen(&jac)?;
    let negative = eig.eigenvalues.iter().filter(|&&l| l < -1e-12).count();
    let mut jhalf = DenseMatrix::zeros(n, n);
    for (lam, v) in eig.eigenvalues.iter().zip(&eig.eigenvectors) {
        let root = lam.max(0.0).sqrt();
        if root > 0.0 {
            let v = DVector::from_column_slice(v);
            jhalf += &v * v.transpose() * root;
        }
    }

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = window.pairs().map(|p| (p.s.clone(), p.r.clone())).collect();
    let pk = dense_bfgs_preconditioner(&dense_initial_preconditioner(ic), &pairs, basis);
    let eigenvalues = symmetric_eigenvalues(&(&jhalf * pk * &jhalf))?;

    let lambda_max = eigenvalues.last().copied().unwrap_or(0.0);
    let cutoff = 1e-10 * lambda_max;
    let kept: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > cutoff).collect();
    let lambda_min = kept.first().copied().unwrap_or(f64::NAN);
    let e_norm = kept.iter().map(|l| (1.0 - l).abs()).fold(0.0, f64::max);
    Ok(JacobianSpectrum {
        kappa: lambda_max / lambda_min,
        eigenvalues,
        lambda_min,
        lambda_max,
        e_norm,
        negative_jacobian_eigenvalues: negative,
    })
}

/// ξ_j = λ_j / (λ_{j+1} - λ_j) for consecutive eigenvalues; large values
/// flag ill-conditioned correction equations.
pub fn relative_separation_reciprocals(eigenvalues: &[f64]) -> Vec<f64> {
    eigenvalues
        .windows(2)
        .map(|w| w[0] / (w[1] - w[0]))
        .collect()
}
