//! Compressed sparse row storage for symmetric matrices.
//!
//! Both triangles are stored, so a product with the matrix is a plain CSR
//! sweep. [`CountedMatrix`] wraps a matrix and tallies every product, which
//! is the cost metric reported by the solvers.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::vector::{self, check_len};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, checking the structural
    /// invariants (monotone row pointers, strictly increasing columns).
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_ptr has {} entries, expected {}",
                row_ptr.len(),
                n + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[n] != col_idx.len() || col_idx.len() != values.len() {
            return Err(Error::InvalidStructure(
                "row_ptr bounds do not match nnz".into(),
            ));
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::InvalidStructure(format!(
                    "row_ptr decreases at row {i}"
                )));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "columns not strictly increasing in row {i}"
                )));
            }
            if cols.last().is_some_and(|&c| c >= n) {
                return Err(Error::InvalidStructure(format!(
                    "column index out of range in row {i}"
                )));
            }
        }
        vector::ensure_finite(&values)?;
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Assembles from (row, col, value) triplets. Duplicates are summed and
    /// explicit zeros are kept.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidStructure(format!(
                    "entry ({i}, {j}) outside {n}x{n}"
                )));
            }
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            row.clear();
            row.extend(
                cols[counts[i]..counts[i + 1]]
                    .iter()
                    .copied()
                    .zip(vals[counts[i]..counts[i + 1]].iter().copied()),
            );
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_csr(n, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Stored entries with column <= row, diagonal included.
    pub fn lower_nnz(&self) -> usize {
        (0..self.n)
            .map(|i| self.row(i).0.iter().take_while(|&&c| c <= i).count())
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        vector::norm2(&self.values)
    }

    /// y <- A x. Pure; does not touch any counter.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &a)| a * x[j])
                .sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.n)?;
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// Checks numerical symmetry: every stored (i,j,v) has a stored (j,i,v')
    /// with |v - v'| <= tol * max(1, |v|).
    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let (tc, tv) = self.row(j);
                match tc.binary_search(&i) {
                    Ok(p) if (tv[p] - v).abs() <= tol * v.abs().max(1.0) => {}
                    _ => return Err(Error::NotSymmetric { row: i, col: j }),
                }
            }
        }
        Ok(())
    }

    /// Diagonal present and strictly positive.
    pub fn check_positive_diagonal(&self) -> Result<()> {
        for (i, d) in self.diagonal().into_iter().enumerate() {
            if d <= 0.0 {
                return Err(Error::NonPositiveDiagonal { row: i, value: d });
            }
        }
        Ok(())
    }

    /// Returns A + shift * I.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
            triplets.push((i, i, shift));
        }
        Self::from_triplets(self.n, &triplets).expect("shifted pattern is valid")
    }
}

/// Rayleigh quotient uᵀAu / uᵀu.
pub fn rayleigh_quotient(a: &SparseMatrix, u: &[f64]) -> Result<f64> {
    check_len(u, a.n())?;
    vector::ensure_finite(u)?;
    let uu = vector::dot(u, u);
    if uu == 0.0 {
        return Err(Error::ZeroVector);
    }
    let au = a.matvec(u)?;
    Ok(vector::dot(u, &au) / uu)
}

/// A borrowed matrix that counts its products with vectors.
///
/// Every product with A counts once, whoever asks for it; projector and
/// preconditioner applications are not A-products and are not counted.
#[derive(Debug)]
pub struct CountedMatrix<'a> {
    matrix: &'a SparseMatrix,
    products: Cell<u64>,
}

impl<'a> CountedMatrix<'a> {
    pub fn new(matrix: &'a SparseMatrix) -> Self {
        Self {
            matrix,
            products: Cell::new(0),
        }
    }

    pub fn matrix(&self) -> &'a SparseMatrix {
        self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.products.set(self.products.get() + 1);
        self.matrix.matvec_into(x, y);
    }

    pub fn products(&self) -> u64 {
        self.products.get()
    }
}
