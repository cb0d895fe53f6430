//! Leftmost eigenpairs of large sparse symmetric positive definite matrices.
//!
//! The main solver ([`newton::solve_leftmost`]) warm-starts every level with
//! a deflated Rayleigh-quotient minimization ([`dacg`]) and then runs an
//! inexact Newton iteration whose projected correction equations are solved
//! by preconditioned CG ([`pcg`]). The preconditioner starts as an incomplete
//! Cholesky factor ([`ichol`]) and is refined after every Newton step by a
//! rank-two BFGS-style update kept in a bounded window ([`bfgs`]).
//! A Jacobi-Davidson solver ([`jd`]) shares the same inner solver and serves
//! as the baseline; [`dense`] holds brute-force references and spectral
//! diagnostics.

pub mod bfgs;
pub mod dacg;
pub mod deflation;
pub mod dense;
pub mod error;
pub mod generate;
pub mod ichol;
pub mod jd;
pub mod mmio;
pub mod newton;
pub mod pcg;
pub mod sparse;
pub mod trace;
pub mod vector;

pub use error::{Error, Result};
pub use sparse::SparseMatrix;
