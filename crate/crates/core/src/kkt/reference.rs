//! Dense forms of the Newton systems, used to verify the production
//! pipeline. Nothing here is used by the solvers themselves.

use nalgebra::{DMatrix, DVector};

use super::{full::assemble_augmented, KktBlocks, Residuals, Step};

/// Dense augmented matrix in the order `(u, x, s, λ, y)`.
pub fn augmented_dense(blocks: &KktBlocks<'_>) -> DMatrix<f64> {
    assemble_augmented(blocks, 0.0).to_dense()
}

/// Step from a dense LU solve of the augmented system.
pub fn augmented_step(blocks: &KktBlocks<'_>, r: &Residuals) -> Step {
    let k = augmented_dense(blocks);
    let rhs = -DVector::from_vec(r.stacked());
    let sol = k.lu().solve(&rhs).expect("augmented matrix is singular");
    Step::from_stacked(sol.as_slice(), blocks.n_controls(), blocks.n_states(), blocks.n_ineq())
}

/// Dense sensitivity `S = −G_x⁻¹ G_u`.
pub fn sensitivity(blocks: &KktBlocks<'_>) -> DMatrix<f64> {
    let gx = blocks.bundle.state_jac_x.to_dense();
    -gx.lu().solve(&blocks.bundle.state_jac_u.to_dense()).expect("G_x is singular")
}

/// Reduced matrix on `(u, s, y)`:
///
/// ```text
/// [ Ŵ_uu + Σ_u  0     Â_uᵀ ]
/// [ 0           Σ_s   −I   ]
/// [ Â_u         −I    0    ]
/// ```
///
/// with `Ŵ_uu = [I; S]ᵀ [W_uu W_ux; W_xu W_xx + Σ_x] [I; S]` and
/// `Â_u = A_u + A_x S`.
pub fn reduced_dense(blocks: &KktBlocks<'_>) -> DMatrix<f64> {
    let b = blocks.bundle;
    let (n_u, n_x, m) = (blocks.n_controls(), blocks.n_states(), blocks.n_ineq());
    let s = sensitivity(blocks);
    let mut z = DMatrix::zeros(n_u + n_x, n_u);
    z.rows_mut(0, n_u).fill_with_identity();
    z.rows_mut(n_u, n_x).copy_from(&s);
    let mut w = DMatrix::zeros(n_u + n_x, n_u + n_x);
    w.view_mut((0, 0), (n_u, n_u)).copy_from(&b.hess_uu.to_dense());
    w.view_mut((0, n_u), (n_u, n_x)).copy_from(&b.hess_ux.to_dense());
    w.view_mut((n_u, 0), (n_x, n_u)).copy_from(&b.hess_xu().to_dense());
    w.view_mut((n_u, n_u), (n_x, n_x)).copy_from(&b.hess_xx.to_dense());
    for (i, sx) in blocks.sigma_x.iter().enumerate() {
        w[(n_u + i, n_u + i)] += sx;
    }
    let mut w_hat = z.transpose() * w * &z;
    for (i, su) in blocks.sigma_u.iter().enumerate() {
        w_hat[(i, i)] += su;
    }
    let a_hat = b.ineq_jac_u.to_dense() + b.ineq_jac_x.to_dense() * s;
    let dim = n_u + 2 * m;
    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n_u, n_u)).copy_from(&w_hat);
    k.view_mut((n_u + m, 0), (m, n_u)).copy_from(&a_hat);
    k.view_mut((0, n_u + m), (n_u, m)).copy_from(&a_hat.transpose());
    for i in 0..m {
        k[(n_u + i, n_u + i)] = blocks.sigma_s[i];
        k[(n_u + i, n_u + m + i)] = -1.0;
        k[(n_u + m + i, n_u + i)] = -1.0;
    }
    k
}

/// Condensed matrix `Ŵ_uu + Σ_u + Â_uᵀ Σ_s Â_u` formed densely.
pub fn condensed_dense(blocks: &KktBlocks<'_>) -> DMatrix<f64> {
    let (n_u, m) = (blocks.n_controls(), blocks.n_ineq());
    let k = reduced_dense(blocks);
    let w_hat = k.view((0, 0), (n_u, n_u)).into_owned();
    let a_hat = k.view((n_u + m, 0), (m, n_u)).into_owned();
    let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(blocks.sigma_s));
    w_hat + a_hat.transpose() * sigma * a_hat
}
