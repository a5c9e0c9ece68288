//! Compressed-sparse-row matrices and the handful of kernels the solvers need.
//!
//! Column indices are kept sorted inside each row and explicit zeros produced
//! by assembly are kept, so a matrix assembled twice from the same structural
//! triplets always has the same pattern. The LU refactorization relies on that.

use std::ops::{Add, Mul};

use nalgebra::DMatrix;
use num_traits::Zero;

/// Running counts of the batched kernels, used to instrument the reduction.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct KernelStats {
    /// Sparse matrix times dense block products (permutations included).
    pub spmm: usize,
    /// Batched sparse triangular solves.
    pub spsm: usize,
}

impl KernelStats {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T = f64> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

/// Coordinate-format accumulator.
#[derive(Debug, Clone)]
pub struct Triplets<T = f64> {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Copy + Zero + Add<Output = T>> Triplets<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, rows: Vec::new(), cols: Vec::new(), vals: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: T) {
        debug_assert!(row < self.nrows && col < self.ncols, "triplet ({row},{col}) out of bounds");
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Builds the CSR matrix, summing duplicates.
    pub fn to_csr(&self) -> CsrMatrix<T> {
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.rows {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let nnz = self.vals.len();
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![T::zero(); nnz];
        let mut next = counts.clone();
        for k in 0..nnz {
            let r = self.rows[k];
            let dst = next[r];
            cols[dst] = self.cols[k];
            vals[dst] = self.vals[k];
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut data = Vec::with_capacity(nnz);
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            let (lo, hi) = (counts[i], counts[i + 1]);
            order.clear();
            order.extend(lo..hi);
            order.sort_by_key(|&k| cols[k]);
            let mut last: Option<usize> = None;
            for &k in &order {
                if last == Some(cols[k]) {
                    let end = data.len() - 1;
                    data[end] = data[end] + vals[k];
                } else {
                    indices.push(cols[k]);
                    data.push(vals[k]);
                    last = Some(cols[k]);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, data }
    }
}

impl<T: Copy + Zero + Add<Output = T> + Mul<Output = T>> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn from_raw(nrows: usize, ncols: usize, indptr: Vec<usize>, indices: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(indptr.len(), nrows + 1);
        assert_eq!(indices.len(), data.len());
        assert_eq!(*indptr.last().unwrap(), indices.len());
        for i in 0..nrows {
            let row = &indices[indptr[i]..indptr[i + 1]];
            assert!(row.windows(2).all(|w| w[0] < w[1]), "row {i} not strictly sorted");
            assert!(row.iter().all(|&j| j < ncols));
        }
        Self { nrows, ncols, indptr, indices, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `(col, value)` pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[lo..hi].iter().copied().zip(self.data[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[lo..hi].binary_search(&j) {
            Ok(k) => self.data[lo + k],
            Err(_) => T::zero(),
        }
    }

    pub fn identity(n: usize, one: T) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), data: vec![one; n] }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![T::zero(); self.nnz()];
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                let dst = next[j];
                indices[dst] = i;
                data[dst] = self.data[k];
                next[j] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, indptr: counts, indices, data }
    }

    pub fn to_triplets(&self) -> Triplets<T> {
        let mut t = Triplets::with_capacity(self.nrows, self.ncols, self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push(i, j, v);
            }
        }
        t
    }

    /// Sparse-sparse product (Gustavson). Structural products are kept even
    /// when they cancel numerically.
    pub fn matmul(&self, rhs: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!(self.ncols, rhs.nrows, "spgemm dimension mismatch");
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut marker = vec![usize::MAX; rhs.ncols];
        let mut acc = vec![T::zero(); rhs.ncols];
        let mut cols: Vec<usize> = Vec::new();
        indptr.push(0);
        for i in 0..self.nrows {
            cols.clear();
            for (k, a) in self.row(i) {
                for (j, b) in rhs.row(k) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = a * b;
                        cols.push(j);
                    } else {
                        acc[j] = acc[j] + a * b;
                    }
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: rhs.ncols, indptr, indices, data }
    }

    /// Entrywise sum of two matrices with the union pattern.
    pub fn add(&self, rhs: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz() + rhs.nnz());
        let mut data = Vec::with_capacity(self.nnz() + rhs.nnz());
        indptr.push(0);
        for i in 0..self.nrows {
            let (mut a, ae) = (self.indptr[i], self.indptr[i + 1]);
            let (mut b, be) = (rhs.indptr[i], rhs.indptr[i + 1]);
            while a < ae || b < be {
                let ja = if a < ae { self.indices[a] } else { usize::MAX };
                let jb = if b < be { rhs.indices[b] } else { usize::MAX };
                if ja == jb {
                    indices.push(ja);
                    data.push(self.data[a] + rhs.data[b]);
                    a += 1;
                    b += 1;
                } else if ja < jb {
                    indices.push(ja);
                    data.push(self.data[a]);
                    a += 1;
                } else {
                    indices.push(jb);
                    data.push(rhs.data[b]);
                    b += 1;
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, data }
    }

    pub fn map<U, F: Fn(T) -> U>(&self, f: F) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Keeps the rows listed in `rows` (in that order) and remaps columns
    /// through `colmap`; columns mapped to `None` are dropped.
    pub fn select(&self, rows: &[usize], colmap: &[Option<usize>], ncols: usize) -> CsrMatrix<T> {
        assert_eq!(colmap.len(), self.ncols);
        let mut t = Triplets::new(rows.len(), ncols);
        for (new_i, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if let Some(nj) = colmap[j] {
                    t.push(new_i, nj, v);
                }
            }
        }
        t.to_csr()
    }

    /// Scales row `i` by `s[i]`.
    pub fn scale_rows(&mut self, s: &[T]) {
        assert_eq!(s.len(), self.nrows);
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                self.data[k] = self.data[k] * s[i];
            }
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j])).collect()
    }

    /// `y = Aᵀ x`
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            for (j, v) in self.row(i) {
                y[j] = y[j] + v * xi;
            }
        }
        y
    }
}

impl CsrMatrix<f64> {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> Self {
        let mut t = Triplets::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)].abs() > drop_tol {
                    t.push(i, j, m[(i, j)]);
                }
            }
        }
        t.to_csr()
    }

    pub fn permutation(perm: &[usize]) -> Self {
        // row i picks entry perm[i]: (P b)[i] = b[perm[i]]
        let n = perm.len();
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: perm.to_vec(), data: vec![1.0; n] }
    }

    /// Sparse times dense block (SpMM), counted in `stats`.
    pub fn spmm(&self, b: &DMatrix<f64>, stats: &mut KernelStats) -> DMatrix<f64> {
        assert_eq!(self.ncols, b.nrows(), "spmm dimension mismatch");
        stats.spmm += 1;
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for c in 0..b.ncols() {
            let src = b.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..self.nrows {
                let mut acc = 0.0;
                for k in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.data[k] * src[self.indices[k]];
                }
                dst[i] = acc;
            }
        }
        out
    }

    /// Adds `d[i]` to the diagonal; the diagonal must be structurally present
    /// or the matrix is rebuilt with it.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        assert_eq!(self.nrows, self.ncols);
        assert_eq!(d.len(), self.nrows);
        let mut t = Triplets::new(self.nrows, self.nrows);
        for (i, &di) in d.iter().enumerate() {
            t.push(i, i, di);
        }
        self.add(&t.to_csr())
    }

    /// `Aᵀ diag(d) A`
    pub fn gram(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.nrows);
        let mut scaled = self.clone();
        scaled.scale_rows(d);
        self.transpose().matmul(&scaled)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn row_max_abs(&self, i: usize) -> f64 {
        self.row(i).fold(0.0_f64, |m, (_, v)| m.max(v.abs()))
    }

    /// True when the stored pattern is symmetric.
    pub fn pattern_is_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        t.indptr == self.indptr && t.indices == self.indices
    }
}
