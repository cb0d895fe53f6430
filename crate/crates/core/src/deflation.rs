//! Orthonormal deflation bases and the projected Jacobian of the
//! correction equation.

use crate::error::{Error, Result};
use crate::sparse::CountedMatrix;
use crate::vector::{self, axpy, dot, norm2};

/// Outcome of [`DeflationBasis::orthogonalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orthogonalized {
    Ok,
    /// The input was numerically inside span(Q); the vector is left as the
    /// (tiny) remainder.
    InSpan,
}

/// Columns Q = [v_1 .. v_j, u_k] with orthonormal columns. During a level-j
/// solve the converged vectors come first and the current iterate, when
/// present, is the last column.
#[derive(Debug, Clone, Default)]
pub struct DeflationBasis {
    columns: Vec<Vec<f64>>,
}

impl DeflationBasis {
    pub fn new() -> Self {
        Self::default()
    }

    /// Orthonormalizes `vectors` in order and collects the independent ones.
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        let mut basis = Self::new();
        for v in vectors {
            let mut v = v.clone();
            if basis.orthogonalize(&mut v) == Orthogonalized::Ok {
                vector::normalize(&mut v)?;
                basis.columns.push(v);
            }
        }
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Appends a unit vector. The caller guarantees orthogonality to the
    /// current columns.
    pub fn push_unchecked(&mut self, v: Vec<f64>) {
        debug_assert!((norm2(&v) - 1.0).abs() < 1e-10);
        self.columns.push(v);
    }

    /// Orthogonalizes `v` (in place), then normalizes and appends it.
    pub fn push(&mut self, mut v: Vec<f64>) -> Result<()> {
        if self.orthogonalize(&mut v) == Orthogonalized::InSpan {
            return Err(Error::ZeroVector);
        }
        vector::normalize(&mut v)?;
        self.columns.push(v);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<Vec<f64>> {
        self.columns.pop()
    }

    /// Copy of this basis extended by one unit column.
    pub fn with_column(&self, u: &[f64]) -> Self {
        let mut b = self.clone();
        b.columns.push(u.to_vec());
        b
    }

    /// Qᵀv
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|q| dot(q, v)).collect()
    }

    /// One classical Gram-Schmidt pass: v <- v - Q(Qᵀv).
    pub fn project(&self, v: &mut [f64]) {
        let c = self.coefficients(v);
        for (q, ci) in self.columns.iter().zip(c) {
            axpy(-ci, q, v);
        }
    }

    /// Classical Gram-Schmidt with one extra pass when the norm drops by
    /// more than a factor 10.
    pub fn orthogonalize(&self, v: &mut [f64]) -> Orthogonalized {
        let before = norm2(v);
        if before == 0.0 {
            return Orthogonalized::InSpan;
        }
        if self.columns.is_empty() {
            return Orthogonalized::Ok;
        }
        self.project(v);
        let mut after = norm2(v);
        if after < 0.1 * before {
            self.project(v);
            after = norm2(v);
        }
        if after < 1e-14 * before {
            Orthogonalized::InSpan
        } else {
            Orthogonalized::Ok
        }
    }

    /// max_i |q_iᵀq_l - δ_il|
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, qi) in self.columns.iter().enumerate() {
            for (l, ql) in self.columns.iter().enumerate().skip(i) {
                let target = if i == l { 1.0 } else { 0.0 };
                worst = worst.max((dot(qi, ql) - target).abs());
            }
        }
        worst
    }
}

/// J = (I - QQᵀ)(A - θI)(I - QQᵀ), applied to vectors already orthogonal
/// to Q so that only the left projector is needed.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedJacobian<'a, 'm> {
    pub a: &'a CountedMatrix<'m>,
    pub theta: f64,
    pub basis: &'a DeflationBasis,
}

impl<'a, 'm> ProjectedJacobian<'a, 'm> {
    pub fn new(a: &'a CountedMatrix<'m>, theta: f64, basis: &'a DeflationBasis) -> Self {
        Self { a, theta, basis }
    }

    /// out <- (I - QQᵀ)(A - θI) z and az <- A z. Exactly one product with A.
    pub fn apply_with_product(&self, z: &[f64], out: &mut [f64], az: &mut [f64]) {
        self.a.apply(z, az);
        for ((o, &a), &zi) in out.iter_mut().zip(az.iter()).zip(z) {
            *o = a - self.theta * zi;
        }
        self.basis.project(out);
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        vector::check_len(z, self.a.n())?;
        let mut out = vec![0.0; z.len()];
        let mut az = vec![0.0; z.len()];
        self.apply_with_product(z, &mut out, &mut az);
        Ok(out)
    }

    /// Both projectors applied explicitly; for debugging and tests.
    pub fn apply_full(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut pz = z.to_vec();
        self.basis.project(&mut pz);
        self.apply(&pz)
    }
}

/// Eigenresidual of the normalized `u`.
#[derive(Debug, Clone)]
pub struct EigenResidual {
    pub theta: f64,
    /// A u - θ u for the normalized u.
    pub r: Vec<f64>,
    pub rnorm: f64,
    /// A u for the normalized u.
    pub au: Vec<f64>,
}

impl EigenResidual {
    /// ‖r‖ / θ
    pub fn relative(&self) -> f64 {
        self.rnorm / self.theta.abs()
    }
}

/// Normalizes `u` in place and returns θ = uᵀAu and r = Au - θu.
pub fn eigenresidual(a: &CountedMatrix<'_>, u: &mut [f64]) -> Result<EigenResidual> {
    vector::check_len(u, a.n())?;
    vector::ensure_finite(u)?;
    vector::normalize(u)?;
    let mut au = vec![0.0; u.len()];
    a.apply(u, &mut au);
    let theta = dot(u, &au);
    let r: Vec<f64> = au.iter().zip(u.iter()).map(|(a, x)| a - theta * x).collect();
    let rnorm = norm2(&r);
    Ok(EigenResidual {
        theta,
        r,
        rnorm,
        au,
    })
}
