//! Sparse LU with a fixed symbolic analysis and numeric refactorization.
//!
//! `P A Q = L U` where `Q` is a fill-reducing column order (approximate
//! minimum degree on the pattern of `A + Aᵀ`) and `P` comes from threshold
//! partial pivoting with a preference for the diagonal. Once factorized, the
//! pivot sequence is kept and later matrices with the same pattern are
//! refactorized numerically without any new pivot search, unless the fixed
//! pivot has become numerically unacceptable.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::sparse::{CsrMatrix, KernelStats};

/// Absolute pivot threshold, relative to `max(1, ‖column‖∞)`.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
/// Partial pivoting keeps the diagonal when it is within this factor of the
/// largest candidate.
const DIAGONAL_PREFERENCE: f64 = 0.1;
/// Refactorization falls back to a fresh pivot search below this ratio.
const REFACTOR_GROWTH: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LuError {
    #[error("matrix is singular: no acceptable pivot in column {column}")]
    Singular { column: usize },
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("sparsity pattern differs from the one used in the symbolic analysis")]
    PatternMismatch,
}

/// Column-compressed triangular factor.
#[derive(Debug, Clone, Default)]
struct Csc {
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    vals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// Column `k` of `A Q` is column `col_perm[k]` of `A`.
    col_perm: Vec<usize>,
    col_perm_inv: Vec<usize>,
    /// Row `k` of `P A` is row `row_perm[k]` of `A`.
    row_perm: Vec<usize>,
    row_perm_inv: Vec<usize>,
    /// Unit lower factor, diagonal stored first in each column.
    l: Csc,
    /// Upper factor, diagonal stored last in each column.
    u: Csc,
    pattern_ptr: Vec<usize>,
    pattern_idx: Vec<usize>,
    refactorizations: usize,
    pivot_searches: usize,
}

/// Per-column scratch space for the left-looking factorization.
struct Work {
    x: Vec<f64>,
    xi: Vec<usize>,
    stack: Vec<usize>,
    mark: Vec<bool>,
}

impl SparseLu {
    /// Symbolic analysis plus a first numeric factorization with pivoting.
    pub fn factorize(a: &CsrMatrix) -> Result<Self, LuError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LuError::NotSquare(a.nrows(), a.ncols()));
        }
        let col_perm = fill_reducing_order(a);
        let mut col_perm_inv = vec![0; n];
        for (k, &j) in col_perm.iter().enumerate() {
            col_perm_inv[j] = k;
        }
        let mut lu = SparseLu {
            n,
            col_perm,
            col_perm_inv,
            row_perm: Vec::new(),
            row_perm_inv: Vec::new(),
            l: Csc::default(),
            u: Csc::default(),
            pattern_ptr: a.indptr().to_vec(),
            pattern_idx: a.indices().to_vec(),
            refactorizations: 0,
            pivot_searches: 0,
        };
        lu.numeric(a, None)?;
        Ok(lu)
    }

    /// Numeric refactorization reusing the column order and pivot sequence.
    pub fn refactorize(&mut self, a: &CsrMatrix) -> Result<(), LuError> {
        if a.nrows() != self.n
            || a.indptr() != self.pattern_ptr.as_slice()
            || a.indices() != self.pattern_idx.as_slice()
        {
            return Err(LuError::PatternMismatch);
        }
        let fixed = self.row_perm.clone();
        match self.numeric(a, Some(&fixed)) {
            Ok(()) => {
                self.refactorizations += 1;
                Ok(())
            }
            Err(_) => self.numeric(a, None),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of refactorizations that reused the pivot sequence.
    pub fn refactorization_count(&self) -> usize {
        self.refactorizations
    }

    /// Number of factorizations that performed a pivot search.
    pub fn pivot_search_count(&self) -> usize {
        self.pivot_searches
    }

    pub fn row_perm(&self) -> &[usize] {
        &self.row_perm
    }

    pub fn col_perm(&self) -> &[usize] {
        &self.col_perm
    }

    /// Dense copies of `(L, U)` for inspection.
    pub fn factors_dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut l = DMatrix::zeros(n, n);
        let mut u = DMatrix::zeros(n, n);
        for j in 0..n {
            for p in self.l.colptr[j]..self.l.colptr[j + 1] {
                l[(self.l.rowind[p], j)] = self.l.vals[p];
            }
            for p in self.u.colptr[j]..self.u.colptr[j + 1] {
                u[(self.u.rowind[p], j)] = self.u.vals[p];
            }
        }
        (l, u)
    }

    pub fn factor_nnz(&self) -> (usize, usize) {
        (self.l.vals.len(), self.u.vals.len())
    }

    fn numeric(&mut self, a: &CsrMatrix, fixed_rows: Option<&[usize]>) -> Result<(), LuError> {
        let n = self.n;
        // CSR of Aᵀ is CSC of A
        let at = a.transpose();
        let (ap, ai, ax) = (at.indptr(), at.indices(), at.data());
        let mut l = Csc { colptr: Vec::with_capacity(n + 1), ..Default::default() };
        let mut u = Csc { colptr: Vec::with_capacity(n + 1), ..Default::default() };
        l.colptr.push(0);
        u.colptr.push(0);
        let mut pinv: Vec<Option<usize>> = vec![None; n];
        let mut row_perm = vec![0usize; n];
        let mut w = Work { x: vec![0.0; n], xi: Vec::with_capacity(n), stack: Vec::new(), mark: vec![false; n] };

        for k in 0..n {
            let col = self.col_perm[k];
            let colnorm = ax[ap[col]..ap[col + 1]].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            reach_and_solve(&l, &pinv, &ap[col..=col + 1], ai, ax, &mut w);

            let mut best: Option<usize> = None;
            let mut best_abs = -1.0;
            for &i in &w.xi {
                match pinv[i] {
                    None => {
                        if w.x[i].abs() > best_abs {
                            best_abs = w.x[i].abs();
                            best = Some(i);
                        }
                    }
                    Some(r) => {
                        u.rowind.push(r);
                        u.vals.push(w.x[i]);
                    }
                }
            }
            let tiny = PIVOT_TOLERANCE * colnorm.max(1.0);
            let ipiv = match fixed_rows {
                Some(rows) => {
                    let r = rows[k];
                    if pinv[r].is_some() || w.x[r].abs() <= tiny || w.x[r].abs() < REFACTOR_GROWTH * best_abs {
                        clear(&mut w);
                        return Err(LuError::Singular { column: col });
                    }
                    r
                }
                None => {
                    let Some(mut ip) = best else {
                        clear(&mut w);
                        return Err(LuError::Singular { column: col });
                    };
                    if best_abs <= tiny {
                        clear(&mut w);
                        return Err(LuError::Singular { column: col });
                    }
                    let diag = self.col_perm[k];
                    if pinv[diag].is_none() && w.mark[diag] && w.x[diag].abs() >= DIAGONAL_PREFERENCE * best_abs {
                        ip = diag;
                    }
                    ip
                }
            };
            let pivot = w.x[ipiv];
            u.rowind.push(k);
            u.vals.push(pivot);
            u.colptr.push(u.rowind.len());
            pinv[ipiv] = Some(k);
            row_perm[k] = ipiv;
            l.rowind.push(ipiv);
            l.vals.push(1.0);
            for &i in &w.xi {
                if pinv[i].is_none() {
                    l.rowind.push(i);
                    l.vals.push(w.x[i] / pivot);
                }
            }
            l.colptr.push(l.rowind.len());
            clear(&mut w);
        }
        // rows of L in pivot order
        for r in l.rowind.iter_mut() {
            *r = pinv[*r].expect("every row pivoted");
        }
        let mut row_perm_inv = vec![0; n];
        for (k, &r) in row_perm.iter().enumerate() {
            row_perm_inv[r] = k;
        }
        self.l = l;
        self.u = u;
        self.row_perm = row_perm;
        self.row_perm_inv = row_perm_inv;
        if fixed_rows.is_none() {
            self.pivot_searches += 1;
        }
        Ok(())
    }

    /// `A⁻¹ B` as `Q U⁻¹ L⁻¹ P B`: two permutation products and two batched
    /// triangular sweeps.
    pub fn solve_batch(&self, b: &DMatrix<f64>, stats: &mut KernelStats) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n);
        let p = CsrMatrix::permutation(&self.row_perm);
        let mut y = p.spmm(b, stats);
        self.lower_solve(&mut y, stats);
        self.upper_solve(&mut y, stats);
        let q = CsrMatrix::permutation(&self.col_perm_inv);
        q.spmm(&y, stats)
    }

    /// `A⁻ᵀ B` as `Pᵀ L⁻ᵀ U⁻ᵀ Qᵀ B`.
    pub fn solve_transpose_batch(&self, b: &DMatrix<f64>, stats: &mut KernelStats) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n);
        let qt = CsrMatrix::permutation(&self.col_perm);
        let mut y = qt.spmm(b, stats);
        self.upper_transpose_solve(&mut y, stats);
        self.lower_transpose_solve(&mut y, stats);
        let pt = CsrMatrix::permutation(&self.row_perm_inv);
        pt.spmm(&y, stats)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.row_perm.iter().map(|&r| b[r]).collect();
        self.lower_col(&mut y);
        self.upper_col(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &j) in self.col_perm.iter().enumerate() {
            x[j] = y[k];
        }
        x
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.col_perm.iter().map(|&j| b[j]).collect();
        self.upper_transpose_col(&mut y);
        self.lower_transpose_col(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &r) in self.row_perm.iter().enumerate() {
            x[r] = y[k];
        }
        x
    }

    fn lower_solve(&self, y: &mut DMatrix<f64>, stats: &mut KernelStats) {
        stats.spsm += 1;
        for mut c in y.column_iter_mut() {
            self.lower_col(c.as_mut_slice());
        }
    }

    fn upper_solve(&self, y: &mut DMatrix<f64>, stats: &mut KernelStats) {
        stats.spsm += 1;
        for mut c in y.column_iter_mut() {
            self.upper_col(c.as_mut_slice());
        }
    }

    fn upper_transpose_solve(&self, y: &mut DMatrix<f64>, stats: &mut KernelStats) {
        stats.spsm += 1;
        for mut c in y.column_iter_mut() {
            self.upper_transpose_col(c.as_mut_slice());
        }
    }

    fn lower_transpose_solve(&self, y: &mut DMatrix<f64>, stats: &mut KernelStats) {
        stats.spsm += 1;
        for mut c in y.column_iter_mut() {
            self.lower_transpose_col(c.as_mut_slice());
        }
    }

    fn lower_col(&self, x: &mut [f64]) {
        let l = &self.l;
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for p in l.colptr[j] + 1..l.colptr[j + 1] {
                    x[l.rowind[p]] -= l.vals[p] * xj;
                }
            }
        }
    }

    fn upper_col(&self, x: &mut [f64]) {
        let u = &self.u;
        for j in (0..self.n).rev() {
            let last = u.colptr[j + 1] - 1;
            x[j] /= u.vals[last];
            let xj = x[j];
            if xj != 0.0 {
                for p in u.colptr[j]..last {
                    x[u.rowind[p]] -= u.vals[p] * xj;
                }
            }
        }
    }

    fn upper_transpose_col(&self, x: &mut [f64]) {
        let u = &self.u;
        for j in 0..self.n {
            let last = u.colptr[j + 1] - 1;
            let mut acc = x[j];
            for p in u.colptr[j]..last {
                acc -= u.vals[p] * x[u.rowind[p]];
            }
            x[j] = acc / u.vals[last];
        }
    }

    fn lower_transpose_col(&self, x: &mut [f64]) {
        let l = &self.l;
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for p in l.colptr[j] + 1..l.colptr[j + 1] {
                acc -= l.vals[p] * x[l.rowind[p]];
            }
            x[j] = acc;
        }
    }
}

fn clear(w: &mut Work) {
    for &i in &w.xi {
        w.x[i] = 0.0;
        w.mark[i] = false;
    }
    w.xi.clear();
}

/// Sparse lower solve `L x = a(:, col)` restricted to its reach. Leaves the
/// nonzero pattern in topological order in `w.xi` and values in `w.x`.
fn reach_and_solve(l: &Csc, pinv: &[Option<usize>], span: &[usize], ai: &[usize], ax: &[f64], w: &mut Work) {
    let (lo, hi) = (span[0], span[1]);
    // depth-first search from each entry of the column, post-order
    let mut order: Vec<usize> = Vec::new();
    for p in lo..hi {
        let start = ai[p];
        if w.mark[start] {
            continue;
        }
        w.stack.push(start);
        w.mark[start] = true;
        let mut child_pos: Vec<usize> = vec![usize::MAX];
        while let Some(&node) = w.stack.last() {
            let pos = child_pos.last_mut().unwrap();
            let (cstart, cend) = match pinv[node] {
                Some(c) => (l.colptr[c] + 1, l.colptr[c + 1]),
                None => (0, 0),
            };
            if *pos == usize::MAX {
                *pos = cstart;
            }
            let mut pushed = false;
            while *pos < cend {
                let child = l.rowind[*pos];
                *pos += 1;
                if !w.mark[child] {
                    w.mark[child] = true;
                    w.stack.push(child);
                    child_pos.push(usize::MAX);
                    pushed = true;
                    break;
                }
            }
            if !pushed {
                w.stack.pop();
                child_pos.pop();
                order.push(node);
            }
        }
    }
    order.reverse();
    for p in lo..hi {
        w.x[ai[p]] = ax[p];
    }
    for &j in &order {
        if let Some(c) = pinv[j] {
            let xj = w.x[j];
            if xj != 0.0 {
                for q in l.colptr[c] + 1..l.colptr[c + 1] {
                    w.x[l.rowind[q]] -= l.vals[q] * xj;
                }
            }
        }
    }
    w.xi = order;
}

/// Approximate minimum degree on the pattern of `A + Aᵀ`.
fn fill_reducing_order(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let control = amd::Control::default();
    match amd::order(n, a.indptr(), a.indices(), &control) {
        Ok((perm, _, _)) => perm,
        Err(_) => (0..n).collect(),
    }
}
