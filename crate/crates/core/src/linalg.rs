//! Small dense factorizations used by the solvers.
//!
//! Everything here is generic over [`Real`] and written for the shapes this
//! crate meets: tall thin matrices (`m` up to ~10^4, `k` up to ~10^2) and
//! small square systems.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{RepairError, Result};
use crate::randgen::RngSeed;
use crate::scalar::Real;

/// Householder QR with column pivoting, `A P = Q R`, of a tall `m x k` matrix.
#[derive(Debug, Clone)]
pub struct PivotedQr<F> {
    m: usize,
    k: usize,
    /// Householder vectors; `reflectors[j]` acts on entries `j..m`.
    reflectors: Vec<Vec<F>>,
    taus: Vec<F>,
    /// Upper triangular `k x k` factor.
    r: Array2<F>,
    /// `perm[j]` is the original column sitting at position `j`.
    perm: Vec<usize>,
}

impl<F: Real> PivotedQr<F> {
    pub fn new(a: ArrayView2<'_, F>) -> Result<Self> {
        let (m, k) = a.dim();
        if m < k || k == 0 {
            return Err(RepairError::Dimension(format!("QR needs m >= k >= 1, got {m}x{k}")));
        }
        // Column-contiguous working copy.
        let mut cols: Vec<Vec<F>> = (0..k).map(|j| a.column(j).to_vec()).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut reflectors = Vec::with_capacity(k);
        let mut taus = Vec::with_capacity(k);
        let mut r = Array2::zeros((k, k));

        for j in 0..k {
            // Pivot on the largest remaining column norm.
            let (best, _) = (j..k)
                .map(|l| (l, sq_norm(&cols[l][j..])))
                .fold((j, F::neg_infinity()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best != j {
                cols.swap(j, best);
                perm.swap(j, best);
                for row in 0..j {
                    r.swap((row, j), (row, best));
                }
            }

            let x = &cols[j][j..];
            let norm = sq_norm(x).sqrt();
            let mut v = x.to_vec();
            let (alpha, tau) = if norm == F::zero() {
                (F::zero(), F::zero())
            } else {
                let alpha = if v[0] >= F::zero() { -norm } else { norm };
                v[0] -= alpha;
                let vtv = sq_norm(&v);
                let tau = if vtv == F::zero() { F::zero() } else { F::lit(2.0) / vtv };
                (alpha, tau)
            };
            r[(j, j)] = if tau == F::zero() { cols[j][j] } else { alpha };

            for l in (j + 1)..k {
                let col = &mut cols[l][j..];
                if tau != F::zero() {
                    let s = tau * dot(&v, col);
                    for (c, vi) in col.iter_mut().zip(&v) {
                        *c -= s * *vi;
                    }
                }
                r[(j, l)] = col[0];
            }
            reflectors.push(v);
            taus.push(tau);
        }
        Ok(PivotedQr {
            m,
            k,
            reflectors,
            taus,
            r,
            perm,
        })
    }

    pub fn r(&self) -> &Array2<F> {
        &self.r
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Number of diagonal entries of `R` above `threshold` in magnitude.
    pub fn rank(&self, threshold: F) -> usize {
        (0..self.k).filter(|&j| self.r[(j, j)].abs() > threshold).count()
    }

    /// `Q^T b` (full length `m`).
    pub fn apply_qt(&self, b: ArrayView1<'_, F>) -> Array1<F> {
        let mut out = b.to_owned();
        let buf = out.as_slice_mut().expect("contiguous");
        for (j, (v, &tau)) in self.reflectors.iter().zip(&self.taus).enumerate() {
            if tau == F::zero() {
                continue;
            }
            let seg = &mut buf[j..];
            let s = tau * dot(v, seg);
            for (c, vi) in seg.iter_mut().zip(v) {
                *c -= s * *vi;
            }
        }
        out
    }

    /// `Q c` for a length-`m` vector.
    pub fn apply_q(&self, c: ArrayView1<'_, F>) -> Array1<F> {
        let mut out = c.to_owned();
        let buf = out.as_slice_mut().expect("contiguous");
        for (j, (v, &tau)) in self.reflectors.iter().zip(&self.taus).enumerate().rev() {
            if tau == F::zero() {
                continue;
            }
            let seg = &mut buf[j..];
            let s = tau * dot(v, seg);
            for (c, vi) in seg.iter_mut().zip(v) {
                *c -= s * *vi;
            }
        }
        out
    }

    /// Thin `Q` times a length-`k` vector.
    pub fn apply_thin_q(&self, c: ArrayView1<'_, F>) -> Array1<F> {
        let mut padded = Array1::zeros(self.m);
        padded.slice_mut(ndarray::s![..self.k]).assign(&c);
        self.apply_q(padded.view())
    }

    /// Orthogonal projection onto the column space of `A`.
    pub fn project(&self, b: ArrayView1<'_, F>) -> Array1<F> {
        let qtb = self.apply_qt(b);
        self.apply_thin_q(qtb.slice(ndarray::s![..self.k]))
    }

    /// Least squares solution of `A x ~ b`; requires full column rank.
    pub fn solve_least_squares(&self, b: ArrayView1<'_, F>) -> Array1<F> {
        let qtb = self.apply_qt(b);
        let z = solve_upper(&self.r, qtb.slice(ndarray::s![..self.k]));
        self.unpermute(&z)
    }

    /// Solves `R^T c = P^T y`; the minimum norm solution of `A^T x = y` is
    /// then `Q c`.
    pub fn solve_rt_permuted(&self, y: ArrayView1<'_, F>) -> Array1<F> {
        let py = Array1::from_iter(self.perm.iter().map(|&p| y[p]));
        solve_lower_transposed(&self.r, py.view())
    }

    /// `P R^{-1} c`.
    pub fn solve_r_unpermute(&self, c: ArrayView1<'_, F>) -> Array1<F> {
        let z = solve_upper(&self.r, c);
        self.unpermute(&z)
    }

    fn unpermute(&self, z: &Array1<F>) -> Array1<F> {
        let mut x = Array1::zeros(self.k);
        for (pos, &orig) in self.perm.iter().enumerate() {
            x[orig] = z[pos];
        }
        x
    }
}

#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn sq_norm<F: Real>(a: &[F]) -> F {
    dot(a, a)
}

/// Back substitution with an upper triangular matrix.
pub fn solve_upper<F: Real>(r: &Array2<F>, b: ArrayView1<'_, F>) -> Array1<F> {
    let k = b.len();
    let mut x = Array1::zeros(k);
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in (i + 1)..k {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Solves `R^T x = b` for upper triangular `R` (forward substitution).
pub fn solve_lower_transposed<F: Real>(r: &Array2<F>, b: ArrayView1<'_, F>) -> Array1<F> {
    let k = b.len();
    let mut x = Array1::zeros(k);
    for i in 0..k {
        let mut s = b[i];
        for j in 0..i {
            s -= r[(j, i)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Lower triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    l: Array2<F>,
}

impl<F: Real> Cholesky<F> {
    pub fn new(a: &Array2<F>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(RepairError::Dimension("Cholesky needs a square matrix".into()));
        }
        let mut l = Array2::zeros((n, n));
        for j in 0..n {
            let mut d = a[(j, j)];
            for p in 0..j {
                d -= l[(j, p)] * l[(j, p)];
            }
            if !(d > F::zero()) || !d.is_finite() {
                return Err(RepairError::Numerical(format!("matrix not positive definite at pivot {j}")));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: ArrayView1<'_, F>) -> Array1<F> {
        let n = b.len();
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.l[(i, j)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        let mut x = Array1::zeros(n);
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.l[(j, i)] * x[j];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }
}

/// Gaussian elimination with partial pivoting. Returns `None` when a pivot
/// falls below `pivot_tol` times the largest entry.
pub fn lu_solve<F: Real>(a: ArrayView2<'_, F>, b: ArrayView1<'_, F>, pivot_tol: F) -> Option<Array1<F>> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut x = b.to_owned();
    let scale = m.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
    if scale == F::zero() {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())?;
        if m[(piv, col)].abs() <= pivot_tol * scale {
            return None;
        }
        if piv != col {
            for c in 0..n {
                m.swap((piv, c), (col, c));
            }
            x.swap(piv, col);
        }
        for row in (col + 1)..n {
            let f = m[(row, col)] / m[(col, col)];
            if f != F::zero() {
                for c in col..n {
                    let v = m[(col, c)];
                    m[(row, c)] -= f * v;
                }
                let v = x[col];
                x[row] -= f * v;
            }
        }
    }
    Some(solve_upper(&m, x.view()))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<F: Real>(a: &Array2<F>) -> Vec<F> {
    let n = a.nrows();
    let mut m = a.clone();
    let tol = F::epsilon() * F::lit(0.5);
    for _sweep in 0..100 {
        let off: F = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: F = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= tol * tol * diag.max(F::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == F::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (F::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<F> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// Operator norm of a symmetric matrix.
pub fn symmetric_op_norm<F: Real>(a: &Array2<F>) -> F {
    symmetric_eigenvalues(a)
        .into_iter()
        .fold(F::zero(), |acc, v| acc.max(v.abs()))
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by
/// power iteration. Stops when the Rayleigh quotient changes by less than
/// `rel_tol` relative.
pub fn power_iteration<F: Real>(
    dim: usize,
    apply: impl Fn(ArrayView1<'_, F>) -> Array1<F>,
    max_iter: usize,
    rel_tol: F,
) -> F {
    let mut stream = RngSeed(0x5eed_0f_9e).stream();
    let mut v = Array1::from_shape_simple_fn(dim, || F::lit(1.0 + 0.1 * stream.standard_normal()));
    let n0 = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / n0);
    let mut lambda = F::zero();
    for _ in 0..max_iter {
        let w = apply(v.view());
        let next = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == F::zero() {
            return F::zero();
        }
        v = w.mapv(|x| x / norm);
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return next.max(lambda);
        }
        lambda = next;
    }
    lambda
}

/// Largest eigenvalue of `A^T A` for an `m x k` matrix.
pub fn gram_top_eigenvalue<F: Real>(a: ArrayView2<'_, F>) -> F {
    let k = a.ncols();
    let n = a.nrows();
    if n <= k {
        let g = a.dot(&a.t());
        power_iteration(n, |v| g.dot(&v), 10_000, F::tol(1e-12))
    } else {
        let g = a.t().dot(&a);
        power_iteration(k, |v| g.dot(&v), 10_000, F::tol(1e-12))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen::gaussian_matrix;
    use ndarray::array;

    #[test]
    fn qr_least_squares_matches_normal_equations() {
        let a = gaussian_matrix::<f64>(30, 4, 0.0, 1.0, RngSeed(2)).unwrap().entries;
        let b = Array1::from_iter((0..30).map(|i| (i as f64).sin()));
        let qr = PivotedQr::new(a.view()).unwrap();
        let x = qr.solve_least_squares(b.view());
        // gradient of the LS objective vanishes
        let g = a.t().dot(&(a.dot(&x) - &b));
        assert!(g.iter().all(|v| v.abs() < 1e-10), "{g}");
        assert_eq!(qr.rank(1e-10), 4);
    }

    #[test]
    fn qr_detects_rank_deficiency() {
        let a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let qr = PivotedQr::new(a.view()).unwrap();
        assert_eq!(qr.rank(1e-10 * 6.0), 1);
    }

    #[test]
    fn projection_is_idempotent() {
        let a = gaussian_matrix::<f64>(12, 3, 0.0, 1.0, RngSeed(4)).unwrap().entries;
        let qr = PivotedQr::new(a.view()).unwrap();
        let b = Array1::from_iter((0..12).map(|i| i as f64));
        let p1 = qr.project(b.view());
        let p2 = qr.project(p1.view());
        assert!((&p1 - &p2).iter().all(|v| v.abs() < 1e-10));
        let col = a.column(1).to_owned();
        assert!((&qr.project(col.view()) - &col).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn cholesky_and_lu_agree() {
        let a: Array2<f64> = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = array![1.0, -2.0, 0.5];
        let x1 = Cholesky::new(&a).unwrap().solve(b.view());
        let x2 = lu_solve(a.view(), b.view(), 1e-12).unwrap();
        assert!((&x1 - &x2).iter().all(|v| v.abs() < 1e-12));
        assert!(Cholesky::new(&array![[1.0, 2.0], [2.0, 1.0]]).is_err());
        assert!(lu_solve(array![[1.0, 2.0], [2.0, 4.0]].view(), array![1.0, 1.0].view(), 1e-12).is_none());
    }

    #[test]
    fn jacobi_eigenvalues_of_known_matrix() {
        let a: Array2<f64> = array![[2.0, 1.0], [1.0, 2.0]];
        let e = symmetric_eigenvalues(&a);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn power_iteration_matches_jacobi() {
        let a = gaussian_matrix::<f64>(40, 5, 0.0, 1.0, RngSeed(9)).unwrap().entries;
        let g = a.t().dot(&a);
        let top = *symmetric_eigenvalues(&g).last().unwrap();
        let est = gram_top_eigenvalue(a.view());
        assert!(((est - top) / top).abs() < 1e-8, "{est} vs {top}");
    }

    #[test]
    fn works_in_single_precision() {
        let a = array![[1.0f32, 0.0], [0.0, 2.0], [1.0, 1.0]];
        let qr = PivotedQr::new(a.view()).unwrap();
        let x = qr.solve_least_squares(array![1.0f32, 2.0, 2.0].view());
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5);
    }
}
