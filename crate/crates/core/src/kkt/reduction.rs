use nalgebra::DMatrix;

use crate::lu::SparseLu;
use crate::sparse::{CsrMatrix, KernelStats};

/// Computes `K̂_uu = [I; S]ᵀ K [I; S]` with `S = −G_x⁻¹ G_u` without forming
/// `S`, by sweeping blocks of `batch` identity columns.
///
/// Each block `V` costs one batched product: `Z = −G_x⁻¹(G_u V)`,
/// `[H_u; H_x] = K [V; Z]`, `Ψ = G_x⁻ᵀ H_x` and `K̂_uu V = H_u − G_uᵀ Ψ`,
/// which is seven sparse-times-dense products (permutations included) and
/// four batched triangular solves. The result is symmetrized.
pub fn batched_reduce(
    k: &CsrMatrix,
    lu: &SparseLu,
    g_u: &CsrMatrix,
    g_u_t: &CsrMatrix,
    batch: usize,
    stats: &mut KernelStats,
) -> DMatrix<f64> {
    let n_u = g_u.ncols();
    let n_x = g_u.nrows();
    assert!(batch >= 1, "batch size must be positive");
    assert_eq!(k.nrows(), n_u + n_x);
    let mut reduced = DMatrix::zeros(n_u, n_u);
    let mut start = 0;
    while start < n_u {
        let width = batch.min(n_u - start);
        let mut v = DMatrix::zeros(n_u, width);
        for j in 0..width {
            v[(start + j, j)] = 1.0;
        }
        let block = reduce_block(k, lu, g_u, g_u_t, &v, stats);
        reduced.columns_mut(start, width).copy_from(&block);
        start += width;
    }
    symmetrize(&mut reduced);
    reduced
}

/// One batched Hessian-matrix product `K̂_uu V`.
pub(crate) fn reduce_block(
    k: &CsrMatrix,
    lu: &SparseLu,
    g_u: &CsrMatrix,
    g_u_t: &CsrMatrix,
    v: &DMatrix<f64>,
    stats: &mut KernelStats,
) -> DMatrix<f64> {
    let (n_u, width) = v.shape();
    let n_x = g_u.nrows();
    let guv = g_u.spmm(v, stats);
    let z = -lu.solve_batch(&guv, stats);
    let mut stacked = DMatrix::zeros(n_u + n_x, width);
    stacked.rows_mut(0, n_u).copy_from(v);
    stacked.rows_mut(n_u, n_x).copy_from(&z);
    let h = k.spmm(&stacked, stats);
    let psi = lu.solve_transpose_batch(&h.rows(n_u, n_x).into_owned(), stats);
    h.rows(0, n_u) - g_u_t.spmm(&psi, stats)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            asym = asym.max((a - b).abs());
            let avg = 0.5 * (a + b);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    if asym > 1e-8 * scale {
        log::warn!("reduced Hessian asymmetry {asym:.2e} before symmetrization");
    }
}

/// Reference computation through the dense sensitivity `S = −G_x⁻¹ G_u`.
pub fn naive_reduce(k: &CsrMatrix, g_x: &CsrMatrix, g_u: &CsrMatrix) -> DMatrix<f64> {
    let n_u = g_u.ncols();
    let n_x = g_u.nrows();
    let lu = g_x.to_dense().lu();
    let s = -lu.solve(&g_u.to_dense()).expect("G_x is singular");
    let mut z = DMatrix::zeros(n_u + n_x, n_u);
    z.rows_mut(0, n_u).fill_with_identity();
    z.rows_mut(n_u, n_x).copy_from(&s);
    let kd = k.to_dense();
    z.transpose() * kd * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Triplets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, r: usize, c: usize, density: f64) -> CsrMatrix {
        let mut t = Triplets::new(r, c);
        for i in 0..r {
            for j in 0..c {
                if rng.gen_bool(density) {
                    t.push(i, j, rng.gen_range(-1.0..1.0));
                }
            }
        }
        t.to_csr()
    }

    fn problem(seed: u64, n_u: usize, n_x: usize) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gx = random_sparse(&mut rng, n_x, n_x, 0.2);
        gx = gx.add_diagonal(&vec![4.0; n_x]);
        let gu = random_sparse(&mut rng, n_x, n_u, 0.3);
        let b = random_sparse(&mut rng, n_u + n_x, n_u + n_x, 0.2);
        let k = b.add(&b.transpose());
        (k, gx, gu)
    }

    #[test]
    fn batch_size_does_not_change_result() {
        let (k, gx, gu) = problem(1, 13, 21);
        let lu = SparseLu::factorize(&gx).unwrap();
        let gut = gu.transpose();
        let naive = naive_reduce(&k, &gx, &gu);
        for n in [1, 4, 8, 13, 32] {
            let mut stats = KernelStats::default();
            let r = batched_reduce(&k, &lu, &gu, &gut, n, &mut stats);
            assert!((&r - &naive).amax() < 1e-10);
            let products = (13 + n - 1) / n;
            assert_eq!(stats, KernelStats { spmm: 7 * products, spsm: 4 * products });
        }
    }

    #[test]
    fn zero_sensitivity_keeps_control_block() {
        let (k, gx, _) = problem(2, 5, 7);
        let gu = CsrMatrix::zeros(7, 5);
        let lu = SparseLu::factorize(&gx).unwrap();
        let r = batched_reduce(&k, &lu, &gu, &gu.transpose(), 2, &mut KernelStats::default());
        let kd = k.to_dense();
        assert!((r - kd.view((0, 0), (5, 5))).amax() < 1e-14);
    }

    #[test]
    fn identity_hessian_gives_gram_of_sensitivity() {
        let (_, gx, gu) = problem(3, 6, 9);
        let k = CsrMatrix::identity(15, 1.0);
        let lu = SparseLu::factorize(&gx).unwrap();
        let r = batched_reduce(&k, &lu, &gu, &gu.transpose(), 3, &mut KernelStats::default());
        let s = -gx.to_dense().lu().solve(&gu.to_dense()).unwrap();
        let expected = DMatrix::<f64>::identity(6, 6) + s.transpose() * &s;
        assert!((r - expected).amax() < 1e-10);
    }
}
