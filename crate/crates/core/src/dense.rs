//! Dense symmetric factorizations used for inertia control.

use nalgebra::{DMatrix, DVector};

/// Eigenvalue sign counts `(positive, negative, zero)` of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn new(positive: usize, negative: usize, zero: usize) -> Self {
        Self { positive, negative, zero }
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Returns `None` as soon as a pivot is not strictly positive. Only the
    /// lower triangle of `a` is read.
    pub fn factorize(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut l = a.lower_triangle();
        for j in 0..n {
            for k in 0..j {
                let ljk = l[(j, k)];
                if ljk != 0.0 {
                    let (left, mut right) = l.columns_range_pair_mut(k, j);
                    let src = &left.as_slice()[j..n];
                    let dst = &mut right.as_mut_slice()[j..n];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d -= s * ljk;
                    }
                }
            }
            let pivot = l[(j, j)];
            if !(pivot > 0.0) || !pivot.is_finite() {
                return None;
            }
            let root = pivot.sqrt();
            for i in j..n {
                l[(i, j)] /= root;
            }
        }
        Some(Self { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        for j in 0..n {
            x[j] /= self.l[(j, j)];
            let xj = x[j];
            for i in j + 1..n {
                x[i] -= self.l[(i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for i in j + 1..n {
                acc -= self.l[(i, j)] * x[i];
            }
            x[j] = acc / self.l[(j, j)];
        }
        x
    }
}

/// `P A Pᵀ = L D Lᵀ` with 1x1 and 2x2 pivots (Bunch–Kaufman).
#[derive(Debug, Clone)]
pub struct SymmetricIndefinite {
    /// Unit lower factor below the diagonal, block diagonal `D` on and just
    /// below the diagonal.
    f: DMatrix<f64>,
    /// Row `i` of `P A` is row `perm[i]` of `A`.
    perm: Vec<usize>,
    /// Start index of every diagonal block and its size.
    blocks: Vec<(usize, usize)>,
    inertia: Inertia,
}

const BUNCH_KAUFMAN_ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + sqrt(17)) / 8

impl SymmetricIndefinite {
    /// Factorizes the symmetric matrix whose lower triangle is given.
    /// `zero_tol` is the relative magnitude below which a pivot counts as a
    /// zero eigenvalue.
    pub fn factorize(a: &DMatrix<f64>, zero_tol: f64) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut f = a.lower_triangle();
        let scale = f.amax().max(f64::MIN_POSITIVE);
        let tiny = zero_tol * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut blocks = Vec::new();
        let mut inertia = Inertia::new(0, 0, 0);
        let mut k = 0;
        while k < n {
            let absakk = f[(k, k)].abs();
            let (imax, colmax) =
                (k + 1..n).map(|i| (i, f[(i, k)].abs())).fold((k, 0.0), |best, c| if c.1 > best.1 { c } else { best });
            let (kstep, kp) = if absakk.max(colmax) <= tiny {
                (1, k)
            } else if absakk >= BUNCH_KAUFMAN_ALPHA * colmax {
                (1, k)
            } else {
                let mut rowmax = 0.0_f64;
                for j in k..imax {
                    rowmax = rowmax.max(f[(imax, j)].abs());
                }
                for j in imax + 1..n {
                    rowmax = rowmax.max(f[(j, imax)].abs());
                }
                if absakk >= BUNCH_KAUFMAN_ALPHA * colmax * (colmax / rowmax) {
                    (1, k)
                } else if f[(imax, imax)].abs() >= BUNCH_KAUFMAN_ALPHA * rowmax {
                    (1, imax)
                } else {
                    (2, imax)
                }
            };
            let kk = k + kstep - 1;
            if kp != kk {
                symmetric_swap(&mut f, kk, kp, k);
                if kstep == 2 {
                    let t = f[(k + 1, k)];
                    f[(k + 1, k)] = f[(kp, k)];
                    f[(kp, k)] = t;
                }
                perm.swap(kk, kp);
            }
            if kstep == 1 {
                let d = f[(k, k)];
                if d.abs() <= tiny {
                    inertia.zero += 1;
                    // leave the column untouched; solves treat this pivot as zero
                    for i in k + 1..n {
                        f[(i, k)] = 0.0;
                    }
                } else {
                    if d > 0.0 {
                        inertia.positive += 1;
                    } else {
                        inertia.negative += 1;
                    }
                    for j in k + 1..n {
                        let t = f[(j, k)] / d;
                        if t != 0.0 {
                            let (left, mut right) = f.columns_range_pair_mut(k, j);
                            let src = &left.as_slice()[j..n];
                            let dst = &mut right.as_mut_slice()[j..n];
                            for (x, s) in dst.iter_mut().zip(src) {
                                *x -= s * t;
                            }
                        }
                    }
                    for i in k + 1..n {
                        f[(i, k)] /= d;
                    }
                }
                blocks.push((k, 1));
            } else {
                let d11 = f[(k, k)];
                let d21 = f[(k + 1, k)];
                let d22 = f[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                let tr = d11 + d22;
                if det.abs() <= tiny * tiny {
                    inertia.zero += 1;
                    if tr > 0.0 {
                        inertia.positive += 1;
                    } else {
                        inertia.negative += 1;
                    }
                } else if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if tr > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                // W = [a_k a_{k+1}] D⁻¹ for the trailing rows
                let (i11, i21, i22) = (d22 / det, -d21 / det, d11 / det);
                let mut w1 = vec![0.0; n];
                let mut w2 = vec![0.0; n];
                for i in k + 2..n {
                    let (a1, a2) = (f[(i, k)], f[(i, k + 1)]);
                    w1[i] = a1 * i11 + a2 * i21;
                    w2[i] = a1 * i21 + a2 * i22;
                }
                for j in k + 2..n {
                    let (t1, t2) = (w1[j], w2[j]);
                    for i in j..n {
                        let upd = f[(i, k)] * t1 + f[(i, k + 1)] * t2;
                        f[(i, j)] -= upd;
                    }
                }
                for i in k + 2..n {
                    f[(i, k)] = w1[i];
                    f[(i, k + 1)] = w2[i];
                }
                blocks.push((k, 2));
            }
            k += kstep;
        }
        Self { f, perm, blocks, inertia }
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.f.nrows();
        let f = &self.f;
        let mut x = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        // L y = P b
        for &(k, s) in &self.blocks {
            for c in k..k + s {
                let xc = x[c];
                if xc != 0.0 {
                    for i in k + s..n {
                        x[i] -= f[(i, c)] * xc;
                    }
                }
            }
        }
        // D z = y
        for &(k, s) in &self.blocks {
            if s == 1 {
                let d = f[(k, k)];
                x[k] = if d == 0.0 { 0.0 } else { x[k] / d };
            } else {
                let (d11, d21, d22) = (f[(k, k)], f[(k + 1, k)], f[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                let (y1, y2) = (x[k], x[k + 1]);
                x[k] = (d22 * y1 - d21 * y2) / det;
                x[k + 1] = (d11 * y2 - d21 * y1) / det;
            }
        }
        // Lᵀ w = z
        for &(k, s) in self.blocks.iter().rev() {
            for c in (k..k + s).rev() {
                let mut acc = x[c];
                for i in k + s..n {
                    acc -= f[(i, c)] * x[i];
                }
                x[c] = acc;
            }
        }
        let mut out = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = x[i];
        }
        out
    }
}

/// Swaps rows/columns `r` and `p` (r < p) of the trailing symmetric matrix
/// stored in the lower triangle, including the computed part of `L` in
/// columns before `k`.
fn symmetric_swap(f: &mut DMatrix<f64>, r: usize, p: usize, k: usize) {
    let n = f.nrows();
    for c in 0..k {
        f.swap((r, c), (p, c));
    }
    for i in p + 1..n {
        f.swap((i, r), (i, p));
    }
    for j in r + 1..p {
        f.swap((j, r), (p, j));
    }
    f.swap((r, r), (p, p));
}

/// Symmetric inertia by dense eigenvalues; used as an independent check.
pub fn eigen_inertia(a: &DMatrix<f64>, zero_tol: f64) -> Inertia {
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut inertia = Inertia::new(0, 0, 0);
    for &l in eig.eigenvalues.iter() {
        if l.abs() <= zero_tol * scale {
            inertia.zero += 1;
        } else if l > 0.0 {
            inertia.positive += 1;
        } else {
            inertia.negative += 1;
        }
    }
    inertia
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &m + m.transpose()
    }

    #[test]
    fn cholesky_accepts_identity_rejects_indefinite() {
        assert!(Cholesky::factorize(&DMatrix::identity(4, 4)).is_some());
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(Cholesky::factorize(&d).is_none());
    }

    #[test]
    fn cholesky_solves_spd() {
        let m = random_symmetric(12, 1);
        let a = &m * &m + DMatrix::identity(12, 12);
        let ch = Cholesky::factorize(&a).unwrap();
        let b = DVector::from_fn(12, |i, _| i as f64);
        assert!((&a * ch.solve(&b) - b).amax() < 1e-10);
        assert!((ch.l() * ch.l().transpose() - &a).amax() < 1e-10);
    }

    #[test]
    fn bunch_kaufman_inertia_and_solve_match_eigen() {
        for seed in 0..20 {
            let a = random_symmetric(15 + seed as usize, seed);
            let bk = SymmetricIndefinite::factorize(&a, 1e-14);
            assert_eq!(bk.inertia(), eigen_inertia(&a, 1e-14), "seed {seed}");
            let b = DVector::from_fn(a.nrows(), |i, _| (i as f64).cos());
            assert!((&a * bk.solve(&b) - &b).amax() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn bunch_kaufman_kkt_with_zero_block() {
        // [[I, B], [Bᵀ, 0]] with B full column rank: inertia (n, m, 0)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, m) = (6, 3);
        let b = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        k.view_mut((0, n), (n, m)).copy_from(&b);
        k.view_mut((n, 0), (m, n)).copy_from(&b.transpose());
        let bk = SymmetricIndefinite::factorize(&k, 1e-14);
        assert_eq!(bk.inertia(), Inertia::new(n, m, 0));
    }

    #[test]
    fn singular_matrix_reports_zero() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let bk = SymmetricIndefinite::factorize(&a, 1e-12);
        assert_eq!(bk.inertia(), Inertia::new(2, 0, 1));
    }
}
