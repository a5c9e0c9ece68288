use nalgebra::{DMatrix, DVector};

use super::{assemble_condensed, reduction::batched_reduce, KktBlocks, Residuals, Step};
use crate::dense::Cholesky;
use crate::lu::SparseLu;
use crate::sparse::{CsrMatrix, KernelStats};

/// Right-hand side after eliminating the states and adjoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedRhs {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    /// `G_x⁻¹ r4`, reused by the state recovery.
    pub(crate) state_shift: Vec<f64>,
}

/// The reduced and condensed Newton system at one iterate.
///
/// Holds `K = W + AᵀΣ_sA + diag(Σ)`, the factors of `G_x` and the dense
/// reduced matrix `K̂_uu`. The reduced inequality Jacobian
/// `Â_u = A_u − A_x G_x⁻¹ G_u` is only ever applied to vectors.
pub struct ReducedSystem<'a> {
    blocks: KktBlocks<'a>,
    lu: &'a SparseLu,
    condensed: CsrMatrix,
    reduced: DMatrix<f64>,
}

impl<'a> ReducedSystem<'a> {
    /// Assembles `K` and reduces it in batches of `batch` columns.
    pub fn new(blocks: KktBlocks<'a>, lu: &'a SparseLu, batch: usize, stats: &mut KernelStats) -> Self {
        let condensed = assemble_condensed(&blocks);
        let g_u = &blocks.bundle.state_jac_u;
        let reduced = batched_reduce(&condensed, lu, g_u, &g_u.transpose(), batch, stats);
        Self { blocks, lu, condensed, reduced }
    }

    /// `K̂_uu = Ŵ_uu + Σ_u + Â_uᵀ Σ_s Â_u`, the condensed matrix.
    pub fn reduced_matrix(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    /// The sparse matrix `K` on `(u, x)`.
    pub fn condensed_sparse(&self) -> &CsrMatrix {
        &self.condensed
    }

    /// `Â_u p = A_u p − A_x G_x⁻¹ G_u p`
    pub fn reduced_jac_mul(&self, p: &[f64]) -> Vec<f64> {
        let b = self.blocks.bundle;
        let t = self.lu.solve(&b.state_jac_u.mul_vec(p));
        let ax_t = b.ineq_jac_x.mul_vec(&t);
        b.ineq_jac_u.mul_vec(p).iter().zip(&ax_t).map(|(a, c)| a - c).collect()
    }

    /// `Â_uᵀ q = A_uᵀ q − G_uᵀ G_x⁻ᵀ A_xᵀ q`
    pub fn reduced_jac_tr_mul(&self, q: &[f64]) -> Vec<f64> {
        let b = self.blocks.bundle;
        let t = self.lu.solve_transpose(&b.ineq_jac_x.tr_mul_vec(q));
        let gut = b.state_jac_u.tr_mul_vec(&t);
        b.ineq_jac_u.tr_mul_vec(q).iter().zip(&gut).map(|(a, c)| a - c).collect()
    }

    /// Eliminates `r2` and `r4`:
    /// `r̂1 = r1 − W_ux t − G_uᵀ G_x⁻ᵀ (r2 − (W_xx + Σ_x) t)`, `r̂2 = r3` and
    /// `r̂3 = r5 − A_x t`, with `t = G_x⁻¹ r4`.
    pub fn reduce_rhs(&self, r: &Residuals) -> ReducedRhs {
        let b = self.blocks.bundle;
        let t = self.lu.solve(&r.r4);
        let wxx_t = b.hess_xx.mul_vec(&t);
        let inner: Vec<f64> =
            r.r2.iter()
                .zip(&wxx_t)
                .zip(t.iter().zip(self.blocks.sigma_x))
                .map(|((r2, w), (ti, sx))| r2 - w - sx * ti)
                .collect();
        let a = self.lu.solve_transpose(&inner);
        let gut_a = b.state_jac_u.tr_mul_vec(&a);
        let wux_t = b.hess_ux.mul_vec(&t);
        let r1 = r.r1.iter().zip(&wux_t).zip(&gut_a).map(|((r1, w), g)| r1 - w - g).collect();
        let ax_t = b.ineq_jac_x.mul_vec(&t);
        let r3 = r.r5.iter().zip(&ax_t).map(|(r5, a)| r5 - a).collect();
        ReducedRhs { r1, r2: r.r3.clone(), r3, state_shift: t }
    }

    /// Solves the condensed system with a factorization of
    /// `K̂_uu (+ δI)` and recovers the full step.
    pub fn solve(&self, factor: &Cholesky, r: &Residuals) -> Step {
        let rhat = self.reduce_rhs(r);
        let pu = self.solve_control(factor, &rhat);
        let (ps, py) = self.recover_slack_dual(&pu, &rhat);
        let (px, plam) = self.recover_state_adjoint(&pu, &py, r, &rhat);
        Step { pu, px, ps, plam, py }
    }

    /// `K̂_uu p_u = −(r̂1 + Â_uᵀ(Σ_s r̂3 + r̂2))`
    pub fn solve_control(&self, factor: &Cholesky, rhat: &ReducedRhs) -> Vec<f64> {
        let q: Vec<f64> =
            self.blocks.sigma_s.iter().zip(&rhat.r3).zip(&rhat.r2).map(|((s, r3), r2)| s * r3 + r2).collect();
        let at_q = self.reduced_jac_tr_mul(&q);
        let rhs = DVector::from_iterator(rhat.r1.len(), rhat.r1.iter().zip(&at_q).map(|(a, b)| -(a + b)));
        factor.solve(&rhs).as_slice().to_vec()
    }

    /// `p_y = Σ_s(Â_u p_u + r̂3) + r̂2` and `p_s = Σ_s⁻¹(p_y − r̂2)`.
    pub fn recover_slack_dual(&self, pu: &[f64], rhat: &ReducedRhs) -> (Vec<f64>, Vec<f64>) {
        let a_pu = self.reduced_jac_mul(pu);
        let py: Vec<f64> = self
            .blocks
            .sigma_s
            .iter()
            .zip(a_pu.iter().zip(&rhat.r3))
            .zip(&rhat.r2)
            .map(|((s, (a, r3)), r2)| s * (a + r3) + r2)
            .collect();
        let ps = py.iter().zip(&rhat.r2).zip(self.blocks.sigma_s).map(|((py, r2), s)| (py - r2) / s).collect();
        (ps, py)
    }

    /// `p_x = −G_x⁻¹(r4 + G_u p_u)` and
    /// `p_λ = −G_x⁻ᵀ(r2 + A_xᵀ p_y + W_xu p_u + (W_xx + Σ_x) p_x)`.
    pub fn recover_state_adjoint(
        &self,
        pu: &[f64],
        py: &[f64],
        r: &Residuals,
        rhat: &ReducedRhs,
    ) -> (Vec<f64>, Vec<f64>) {
        let b = self.blocks.bundle;
        let gu_pu = self.lu.solve(&b.state_jac_u.mul_vec(pu));
        let px: Vec<f64> = rhat.state_shift.iter().zip(&gu_pu).map(|(t, g)| -(t + g)).collect();
        let ax_py = b.ineq_jac_x.tr_mul_vec(py);
        let wxu_pu = b.hess_ux.tr_mul_vec(pu);
        let wxx_px = b.hess_xx.mul_vec(&px);
        let rhs: Vec<f64> = (0..px.len())
            .map(|i| r.r2[i] + ax_py[i] + wxu_pu[i] + wxx_px[i] + self.blocks.sigma_x[i] * px[i])
            .collect();
        let plam = self.lu.solve_transpose(&rhs).into_iter().map(|v| -v).collect();
        (px, plam)
    }
}
