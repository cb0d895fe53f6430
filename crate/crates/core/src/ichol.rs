//! Dual-threshold incomplete Cholesky, IC(lfil, tau).
//!
//! Rows of L are computed left-looking. In row i an entry is dropped when
//! its unscaled value falls below `tau * ||A(i,:)||_2`; of the survivors at
//! most `lfil` off-diagonal entries of largest magnitude are kept. The pivot
//! is formed from the kept entries only. A nonpositive pivot restarts the
//! whole factorization on A + alpha*I.

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::vector::check_len;

const MAX_SHIFT_RETRIES: usize = 8;

#[derive(Debug, Clone)]
pub struct IcFactor {
    /// Lower triangular factor, diagonal stored last in each row.
    l: SparseMatrix,
    fill_ratio: f64,
    lfil: usize,
    tau_ic: f64,
    shift_used: f64,
}

impl IcFactor {
    pub fn factor(a: &SparseMatrix, lfil: usize, tau_ic: f64) -> Result<Self> {
        if !(tau_ic >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau_ic must be nonnegative, got {tau_ic}"
            )));
        }
        a.check_positive_diagonal()?;
        let max_diag = a.diagonal().into_iter().fold(0.0, f64::max);

        let mut shift = 0.0;
        let mut attempts = 0;
        let l = loop {
            match factor_rows(a, lfil, tau_ic, shift) {
                Some(l) => break l,
                None if attempts < MAX_SHIFT_RETRIES => {
                    shift = if shift == 0.0 { 1e-3 * max_diag } else { shift * 10.0 };
                    attempts += 1;
                    log::warn!("IC breakdown, restarting with diagonal shift {shift:e}");
                }
                None => {
                    return Err(Error::FactorizationBreakdown {
                        attempts,
                        last_shift: shift,
                    })
                }
            }
        };
        let fill_ratio = l.nnz() as f64 / a.lower_nnz() as f64;
        Ok(Self {
            l,
            fill_ratio,
            lfil,
            tau_ic,
            shift_used: shift,
        })
    }

    pub fn l(&self) -> &SparseMatrix {
        &self.l
    }

    pub fn n(&self) -> usize {
        self.l.n()
    }

    /// nnz(L) / nnz(tril(A)).
    pub fn fill_ratio(&self) -> f64 {
        self.fill_ratio
    }

    pub fn lfil(&self) -> usize {
        self.lfil
    }

    pub fn tau_ic(&self) -> f64 {
        self.tau_ic
    }

    pub fn shift_used(&self) -> f64 {
        self.shift_used
    }

    /// out <- (L Lᵀ)⁻¹ g
    pub fn solve_into(&self, g: &[f64], out: &mut [f64]) {
        let n = self.l.n();
        debug_assert_eq!(g.len(), n);
        out.copy_from_slice(g);
        // forward: L y = g
        for i in 0..n {
            let (cols, vals) = self.l.row(i);
            let last = cols.len() - 1;
            let mut s = out[i];
            for (&j, &v) in cols[..last].iter().zip(&vals[..last]) {
                s -= v * out[j];
            }
            out[i] = s / vals[last];
        }
        // backward: Lᵀ x = y, column-oriented sweep over the rows of L
        for i in (0..n).rev() {
            let (cols, vals) = self.l.row(i);
            let last = cols.len() - 1;
            out[i] /= vals[last];
            let xi = out[i];
            for (&j, &v) in cols[..last].iter().zip(&vals[..last]) {
                out[j] -= v * xi;
            }
        }
    }

    pub fn apply_p0(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len(g, self.n())?;
        let mut out = vec![0.0; g.len()];
        self.solve_into(g, &mut out);
        Ok(out)
    }
}

/// Returns None on a nonpositive pivot.
fn factor_rows(a: &SparseMatrix, lfil: usize, tau: f64, shift: f64) -> Option<SparseMatrix> {
    let n = a.n();
    // Columns of the finished part of L (strictly lower entries), row order.
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut diag = vec![0.0; n];

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);

    let mut work = vec![0.0; n];
    let mut in_pattern = vec![false; n];
    let mut pattern: Vec<usize> = Vec::new();
    let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
    let mut kept: Vec<(usize, f64)> = Vec::new();

    for i in 0..n {
        let (cols, vals) = a.row(i);
        let row_norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        let drop_tol = tau * row_norm;
        let mut a_ii = shift;
        for (&j, &v) in cols.iter().zip(vals) {
            if j < i {
                work[j] = v;
                in_pattern[j] = true;
                pattern.push(j);
                heap.push(Reverse(j));
            } else if j == i {
                a_ii += v;
            }
        }

        kept.clear();
        while let Some(Reverse(k)) = heap.pop() {
            let w = work[k];
            if w.abs() < drop_tol || w == 0.0 {
                continue;
            }
            let lik = w / diag[k];
            kept.push((k, lik));
            for &(j, ljk) in &columns[k] {
                // only rows of the already finished part: j < i
                if !in_pattern[j] {
                    in_pattern[j] = true;
                    work[j] = 0.0;
                    pattern.push(j);
                    heap.push(Reverse(j));
                }
                work[j] -= lik * ljk;
            }
        }
        for &j in &pattern {
            in_pattern[j] = false;
            work[j] = 0.0;
        }
        pattern.clear();

        if kept.len() > lfil {
            kept.sort_by(|x, y| y.1.abs().total_cmp(&x.1.abs()));
            kept.truncate(lfil);
        }
        kept.sort_by_key(|&(k, _)| k);

        let pivot = a_ii - kept.iter().map(|&(_, v)| v * v).sum::<f64>();
        if !(pivot > 0.0) {
            return None;
        }
        diag[i] = pivot.sqrt();
        for &(k, v) in &kept {
            col_idx.push(k);
            values.push(v);
            columns[k].push((i, v));
        }
        col_idx.push(i);
        values.push(diag[i]);
        row_ptr.push(col_idx.len());
    }
    Some(
        SparseMatrix::from_csr(n, row_ptr, col_idx, values)
            .expect("factor rows are built sorted"),
    )
}
