use nalgebra::DVector;

use super::{
    stacked_hessian, stacked_ineq_jacobian, stacked_state_jacobian, KktBlocks, KktError, ReducedSystem, Regularization,
    Residuals, Step,
};
use crate::dense::{Cholesky, Inertia, SymmetricIndefinite};
use crate::lu::SparseLu;
use crate::sparse::{CsrMatrix, KernelStats, Triplets};

/// Pivots smaller than this fraction of the largest entry count as zero.
const PIVOT_TOLERANCE: f64 = 1e-16;

/// Inertia the augmented matrix must have for the step to be a descent
/// direction: `(n_u + n_x + m, n_x + m, 0)`.
pub fn augmented_inertia_target(n_u: usize, n_x: usize, m: usize) -> Inertia {
    Inertia::new(n_u + n_x + m, n_x + m, 0)
}

/// Sparse symmetric augmented matrix in the order `(u, x, s, λ, y)` with `δ`
/// added to the `(u, x)` diagonal.
pub fn assemble_augmented(blocks: &KktBlocks<'_>, delta: f64) -> CsrMatrix {
    let (n_u, n_x, m) = (blocks.n_controls(), blocks.n_states(), blocks.n_ineq());
    let nw = n_u + n_x;
    let dim = nw + m + n_x + m;
    let w = stacked_hessian(blocks.bundle);
    let g = stacked_state_jacobian(blocks.bundle);
    let a = stacked_ineq_jacobian(blocks.bundle);
    let mut t = Triplets::with_capacity(dim, dim, w.nnz() + 2 * (g.nnz() + a.nnz()) + nw + 3 * m);
    for i in 0..nw {
        for (j, v) in w.row(i) {
            t.push(i, j, v);
        }
    }
    for (i, s) in blocks.sigma_u.iter().chain(blocks.sigma_x).enumerate() {
        t.push(i, i, s + delta);
    }
    let (s0, l0, y0) = (nw, nw + m, nw + m + n_x);
    for (i, &s) in blocks.sigma_s.iter().enumerate() {
        t.push(s0 + i, s0 + i, s);
        t.push(s0 + i, y0 + i, -1.0);
        t.push(y0 + i, s0 + i, -1.0);
    }
    for i in 0..n_x {
        for (j, v) in g.row(i) {
            t.push(l0 + i, j, v);
            t.push(j, l0 + i, v);
        }
    }
    for i in 0..m {
        for (j, v) in a.row(i) {
            t.push(y0 + i, j, v);
            t.push(j, y0 + i, v);
        }
    }
    t.to_csr()
}

/// Factorized augmented system, ready to solve for any right-hand side.
pub struct AugmentedFactor {
    kind: FactorKind,
    dims: (usize, usize, usize),
    pub delta: f64,
    pub attempts: usize,
    pub inertia: Inertia,
}

enum FactorKind {
    Dense(SymmetricIndefinite),
    Sparse(SparseLu),
}

impl AugmentedFactor {
    /// Solves `K_aug p = −r`.
    pub fn solve(&self, r: &Residuals) -> Step {
        let rhs: Vec<f64> = r.stacked().iter().map(|v| -v).collect();
        let sol = match &self.kind {
            FactorKind::Dense(f) => f.solve(&DVector::from_column_slice(&rhs)).as_slice().to_vec(),
            FactorKind::Sparse(lu) => lu.solve(&rhs),
        };
        let (n_u, n_x, m) = self.dims;
        Step::from_stacked(&sol, n_u, n_x, m)
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.kind, FactorKind::Dense(_))
    }
}

/// Direct solver for the augmented system.
///
/// Up to `dense_limit` unknowns it runs a dense symmetric indefinite
/// factorization and reads the inertia off the block diagonal. Above that
/// it uses a sparse LU of the augmented matrix, with the inertia certified
/// by a Cholesky of the condensed matrix built with the same `δ`.
#[derive(Debug, Clone, Copy)]
pub struct FullSpaceSolver {
    pub dense_limit: usize,
    pub regularization: Regularization,
    pub batch_size: usize,
}

impl Default for FullSpaceSolver {
    fn default() -> Self {
        Self { dense_limit: 5000, regularization: Regularization::default(), batch_size: 256 }
    }
}

impl FullSpaceSolver {
    pub fn factor(
        &self,
        blocks: &KktBlocks<'_>,
        last_delta: f64,
        lu: Option<&SparseLu>,
        stats: &mut KernelStats,
    ) -> Result<AugmentedFactor, KktError> {
        let dims = (blocks.n_controls(), blocks.n_states(), blocks.n_ineq());
        let (n_u, n_x, m) = dims;
        let dim = n_u + 2 * n_x + 2 * m;
        let target = augmented_inertia_target(n_u, n_x, m);
        if dim <= self.dense_limit {
            let ((factor, inertia), delta, attempts) = self.regularization.run(last_delta, |delta| {
                let k = assemble_augmented(blocks, delta).to_dense();
                let f = SymmetricIndefinite::factorize(&k, PIVOT_TOLERANCE);
                let inertia = f.inertia();
                (inertia == target).then_some((f, inertia))
            })?;
            return Ok(AugmentedFactor { kind: FactorKind::Dense(factor), dims, delta, attempts, inertia });
        }

        let owned;
        let lu = match lu {
            Some(lu) => lu,
            None => {
                owned = SparseLu::factorize(&blocks.bundle.state_jac_x)?;
                &owned
            }
        };
        let (_, delta, attempts) = self.regularization.run(last_delta, |delta| {
            let su: Vec<f64> = blocks.sigma_u.iter().map(|s| s + delta).collect();
            let sx: Vec<f64> = blocks.sigma_x.iter().map(|s| s + delta).collect();
            let shifted = KktBlocks { bundle: blocks.bundle, sigma_u: &su, sigma_x: &sx, sigma_s: blocks.sigma_s };
            let reduced = ReducedSystem::new(shifted, lu, self.batch_size, stats);
            Cholesky::factorize(reduced.reduced_matrix()).map(|_| ())
        })?;
        let factor = SparseLu::factorize(&assemble_augmented(blocks, delta))?;
        Ok(AugmentedFactor { kind: FactorKind::Sparse(factor), dims, delta, attempts, inertia: target })
    }
}
