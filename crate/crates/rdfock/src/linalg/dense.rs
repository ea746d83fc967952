//! Dense symmetric eigenproblems by Householder reduction to tridiagonal
//! form, plus small orthonormalization utilities.

use super::tridiag::{Orthonormalization, SymTridiag};
use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2, ArrayViewMut2};

/// Accumulated Householder reflectors from a tridiagonalization.
#[derive(Debug, Clone)]
pub struct HouseholderQ {
    /// Reflector k lives in column k, rows k+1.. ; lower triangle storage.
    v: Array2<f64>,
    beta: Vec<f64>,
}

impl HouseholderQ {
    /// Replace `m` by `Q m` (apply reflectors in reverse order).
    pub fn apply_left(&self, m: &mut Array2<f64>) {
        let n = self.v.nrows();
        assert_eq!(m.nrows(), n);
        for k in (0..n.saturating_sub(2)).rev() {
            if self.beta[k] == 0.0 {
                continue;
            }
            let v = self.v.slice(s![k + 1.., k]);
            // m[k+1.., :] -= beta * v (v^T m[k+1.., :])
            let sub = m.slice(s![k + 1.., ..]);
            let w: Array1<f64> = v.dot(&sub);
            let mut sub = m.slice_mut(s![k + 1.., ..]);
            for (i, &vi) in v.iter().enumerate() {
                let f = self.beta[k] * vi;
                sub.row_mut(i).iter_mut().zip(w.iter()).for_each(|(x, &wj)| *x -= f * wj);
            }
        }
    }
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// Returns the tridiagonal matrix and, when requested, the accumulated
/// orthogonal factor with `a = Q t Q^T`.
pub fn sym_tridiagonalize(a: &Array2<f64>, want_q: bool) -> (SymTridiag, Option<HouseholderQ>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut w = a.clone();
    let mut vstore = if want_q {
        Array2::<f64>::zeros((n, n))
    } else {
        Array2::<f64>::zeros((0, 0))
    };
    let mut betas = vec![0.0f64; n];
    let mut diag = vec![0.0f64; n];
    let mut off = vec![0.0f64; n.saturating_sub(1)];

    for k in 0..n.saturating_sub(2) {
        // Householder vector for column k below the diagonal.
        let x = w.slice(s![k + 1.., k]).to_owned();
        let xnorm = x.dot(&x).sqrt();
        diag[k] = w[(k, k)];
        if xnorm == 0.0 {
            off[k] = 0.0;
            betas[k] = 0.0;
            continue;
        }
        let alpha = -xnorm.copysign(x[0]);
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.dot(&v);
        if vnorm2 == 0.0 {
            off[k] = alpha;
            betas[k] = 0.0;
            continue;
        }
        let beta = 2.0 / vnorm2;
        off[k] = alpha;
        // Symmetric rank-2 update of the trailing block:
        // A <- A - v w^T - w v^T with w = beta(Av - (beta/2)(v^T A v) v).
        let m = n - k - 1;
        let sub = w.slice(s![k + 1.., k + 1..]);
        let mut p: Array1<f64> = sub.dot(&v);
        p *= beta;
        let vp = v.dot(&p);
        let w_vec: Array1<f64> = &p - &(&v * (0.5 * beta * vp));
        {
            let mut sub = w.slice_mut(s![k + 1.., k + 1..]);
            for i in 0..m {
                let vi = v[i];
                let wi = w_vec[i];
                for j in 0..m {
                    sub[(i, j)] -= vi * w_vec[j] + wi * v[j];
                }
            }
        }
        if want_q {
            vstore.slice_mut(s![k + 1.., k]).assign(&v);
            betas[k] = beta;
        }
    }
    if n >= 2 {
        diag[n - 2] = w[(n - 2, n - 2)];
        off[n - 2] = w[(n - 1, n - 2)];
    }
    if n >= 1 {
        diag[n - 1] = w[(n - 1, n - 1)];
    }
    let q = want_q.then_some(HouseholderQ { v: vstore, beta: betas });
    (SymTridiag::new(diag, off), q)
}

/// Full symmetric eigendecomposition (ascending eigenvalues).
pub fn sym_eigen(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let (t, q) = sym_tridiagonalize(a, true);
    let (vals, mut vecs) = t.full_eigen(Orthonormalization::Clusters)?;
    q.unwrap().apply_left(&mut vecs);
    Ok((vals, vecs))
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let (t, _) = sym_tridiagonalize(a, false);
    let n = t.n();
    t.eigenvalues_by_index(0, n)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue(a: &Array2<f64>) -> f64 {
    let (t, _) = sym_tridiagonalize(a, false);
    t.eigenvalues_by_index(0, 1)[0]
}

/// (min, max) eigenvalues of a symmetric matrix.
pub fn sym_extreme_eigenvalues(a: &Array2<f64>) -> (f64, f64) {
    let (t, _) = sym_tridiagonalize(a, false);
    let n = t.n();
    let lo = t.eigenvalues_by_index(0, 1)[0];
    let hi = t.eigenvalues_by_index(n - 1, n)[0];
    (lo, hi)
}

/// Modified Gram-Schmidt (two sweeps) over the columns of `block`.
pub fn mgs_orthonormalize(block: &mut ArrayViewMut2<f64>) {
    let m = block.ncols();
    for _ in 0..2 {
        for j in 0..m {
            for i in 0..j {
                let dot = block.column(i).dot(&block.column(j));
                let prev = block.column(i).to_owned();
                block
                    .column_mut(j)
                    .iter_mut()
                    .zip(prev.iter())
                    .for_each(|(x, &p)| *x -= dot * p);
            }
            let nrm = block.column(j).dot(&block.column(j)).sqrt();
            if nrm > 0.0 {
                block.column_mut(j).mapv_inplace(|x| x / nrm);
            }
        }
    }
}

/// CholeskyQR2: orthonormalize the (well-conditioned) columns of `q` in place.
///
/// Two rounds of `q <- q R^{-1}` with `R^T R = q^T q`. For blocks that are
/// already orthonormal to a few decimal places this reaches machine-level
/// orthonormality at matmul speed.
pub fn cholesky_qr2(q: &mut Array2<f64>) -> Result<()> {
    for _ in 0..2 {
        let g = q.t().dot(&*q);
        let r = cholesky_upper(&g)?;
        right_solve_upper(q, &r);
    }
    Ok(())
}

/// Upper-triangular Cholesky factor: `g = r^T r`.
fn cholesky_upper(g: &Array2<f64>) -> Result<Array2<f64>> {
    let n = g.nrows();
    let mut r = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= r[(k, j)] * r[(k, j)];
        }
        if d <= 0.0 {
            return Err(Error::Eigensolver(
                "CholeskyQR2 given a rank-deficient block".into(),
            ));
        }
        let rjj = d.sqrt();
        r[(j, j)] = rjj;
        for i in j + 1..n {
            let mut s = g[(j, i)];
            for k in 0..j {
                s -= r[(k, j)] * r[(k, i)];
            }
            r[(j, i)] = s / rjj;
        }
    }
    Ok(r)
}

/// q <- q r^{-1} for upper-triangular r (column-wise back substitution).
fn right_solve_upper(q: &mut Array2<f64>, r: &Array2<f64>) {
    let m = q.ncols();
    for j in 0..m {
        for k in 0..j {
            let f = r[(k, j)];
            if f != 0.0 {
                let prev = q.column(k).to_owned();
                q.column_mut(j)
                    .iter_mut()
                    .zip(prev.iter())
                    .for_each(|(x, &p)| *x -= f * p);
            }
        }
        let d = r[(j, j)];
        q.column_mut(j).mapv_inplace(|x| x / d);
    }
}

/// R factor of a thin QR of `a` (n x m, n >= m), via MGS. Used for trace
/// norms of low-rank symmetric combinations: the nonzero spectrum of
/// `B S B^T` equals that of `R S R^T`.
pub fn thin_qr_r(a: &Array2<f64>) -> Array2<f64> {
    let m = a.ncols();
    let mut q = a.clone();
    let mut r = Array2::<f64>::zeros((m, m));
    for j in 0..m {
        for i in 0..j {
            let dot = q.column(i).dot(&q.column(j));
            r[(i, j)] += dot;
            let prev = q.column(i).to_owned();
            q.column_mut(j)
                .iter_mut()
                .zip(prev.iter())
                .for_each(|(x, &p)| *x -= dot * p);
        }
        // second orthogonalization pass for stability
        for i in 0..j {
            let dot = q.column(i).dot(&q.column(j));
            r[(i, j)] += dot;
            let prev = q.column(i).to_owned();
            q.column_mut(j)
                .iter_mut()
                .zip(prev.iter())
                .for_each(|(x, &p)| *x -= dot * p);
        }
        let nrm = q.column(j).dot(&q.column(j)).sqrt();
        r[(j, j)] = nrm;
        if nrm > 1e-300 {
            q.column_mut(j).mapv_inplace(|x| x / nrm);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_matrix(n: usize) -> Array2<f64> {
        // Deterministic symmetric matrix with a spread spectrum.
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let x = ((i * 31 + j * 17) % 97) as f64 / 97.0 - 0.5;
                a[(i, j)] = x;
            }
        }
        let sym = &a + &a.t();
        sym
    }

    #[test]
    fn tridiagonalization_preserves_spectrum() {
        let a = test_matrix(24);
        let vals_dense = sym_eigenvalues(&a);
        // Oracle: eigenvalues of A must satisfy det checks via trace moments.
        let tr: f64 = (0..24).map(|i| a[(i, i)]).sum();
        let tr_eig: f64 = vals_dense.iter().sum();
        assert_relative_eq!(tr, tr_eig, epsilon = 1e-10);
        let fro2: f64 = a.iter().map(|x| x * x).sum();
        let fro2_eig: f64 = vals_dense.iter().map(|x| x * x).sum();
        assert_relative_eq!(fro2, fro2_eig, max_relative = 1e-12);
    }

    #[test]
    fn dense_eigen_reconstructs_matrix() {
        let a = test_matrix(18);
        let (vals, vecs) = sym_eigen(&a).unwrap();
        let lam = Array2::from_diag(&ndarray::Array1::from(vals.clone()));
        let recon = vecs.dot(&lam).dot(&vecs.t());
        for i in 0..18 {
            for j in 0..18 {
                assert!((recon[(i, j)] - a[(i, j)]).abs() < 1e-10);
            }
        }
        // ascending order
        for w in vals.windows(2) {
            assert!(w[0] <= w[1] + 1e-14);
        }
    }

    #[test]
    fn extreme_eigenvalues_match_full_set() {
        let a = test_matrix(30);
        let vals = sym_eigenvalues(&a);
        let (lo, hi) = sym_extreme_eigenvalues(&a);
        assert_relative_eq!(lo, vals[0], max_relative = 1e-12, epsilon = 1e-13);
        assert_relative_eq!(hi, vals[29], max_relative = 1e-12, epsilon = 1e-13);
        assert_relative_eq!(sym_min_eigenvalue(&a), lo, max_relative = 1e-13, epsilon = 1e-14);
    }

    #[test]
    fn thin_qr_r_reproduces_gram() {
        let a = test_matrix(12).slice(s![.., 0..5]).to_owned();
        let r = thin_qr_r(&a);
        let g1 = a.t().dot(&a);
        let g2 = r.t().dot(&r);
        for i in 0..5 {
            for j in 0..5 {
                assert!((g1[(i, j)] - g2[(i, j)]).abs() < 1e-10);
            }
        }
    }
}
