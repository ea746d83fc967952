//! Symmetric tridiagonal eigenproblems: Sturm counts, bisection, inverse
//! iteration with cluster reorthogonalization, pivoted tridiagonal LU.

use super::SplitMix64;
use crate::error::{Error, Result};
use ndarray::Array2;

/// Symmetric tridiagonal matrix: `diag` of length n, `off` of length n-1.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// How hard to work on the orthonormality of a returned eigenvector block.
///
/// `Clusters` reorthogonalizes only within near-degenerate groups, which keeps
/// spectral subspaces and matrix functions accurate. `Global` additionally
/// polishes the entire block (CholeskyQR2) so that projectors built from it
/// are idempotent to machine precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orthonormalization {
    Clusters,
    Global,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(diag.len(), off.len() + 1, "tridiagonal shape mismatch");
        Self { diag, off }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Infinity-norm upper bound.
    pub fn norm_bound(&self) -> f64 {
        let n = self.n();
        let mut b: f64 = 0.0;
        for i in 0..n {
            let mut row = self.diag[i].abs();
            if i > 0 {
                row += self.off[i - 1].abs();
            }
            if i + 1 < n {
                row += self.off[i].abs();
            }
            b = b.max(row);
        }
        b.max(f64::MIN_POSITIVE)
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        let pad = 1e-10 * (hi - lo).abs().max(1.0);
        (lo - pad, hi + pad)
    }

    fn pivmin(&self) -> f64 {
        let mut m: f64 = 1.0;
        for &e in &self.off {
            m = m.max(e * e);
        }
        f64::MIN_POSITIVE * m
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = self.pivmin();
        let mut count = 0usize;
        let mut d = 1.0f64;
        for i in 0..self.n() {
            let off2 = if i > 0 {
                self.off[i - 1] * self.off[i - 1]
            } else {
                0.0
            };
            d = self.diag[i] - x - off2 / d;
            if d.abs() < pivmin {
                d = -pivmin;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// All eigenvalues with (0-based) indices in `ilo..ihi`, ascending.
    ///
    /// Interval subdivision shares Sturm counts between indices.
    pub fn eigenvalues_by_index(&self, ilo: usize, ihi: usize) -> Vec<f64> {
        let n = self.n();
        assert!(ihi <= n && ilo <= ihi);
        if ilo == ihi {
            return Vec::new();
        }
        let (glo, ghi) = self.spectral_bounds();
        let mut out = vec![0.0f64; ihi - ilo];
        // Work queue of (lo, hi, i0, i1): eigenvalues i0..i1 lie in (lo, hi].
        let mut queue: Vec<(f64, f64, usize, usize)> = vec![(glo, ghi, ilo, ihi)];
        let eps = f64::EPSILON;
        while let Some((mut lo, mut hi, i0, i1)) = queue.pop() {
            loop {
                let tol = 2.0 * eps * lo.abs().max(hi.abs()) + 2.0 * f64::MIN_POSITIVE;
                if hi - lo <= tol {
                    let mid = 0.5 * (lo + hi);
                    for i in i0..i1 {
                        out[i - ilo] = mid;
                    }
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let c = self.count_below(mid).clamp(i0, i1);
                if c == i0 {
                    lo = mid;
                } else if c == i1 {
                    hi = mid;
                } else {
                    queue.push((mid, hi, c, i1));
                    hi = mid;
                    // continue refining (lo, mid, i0, c)
                    queue.push((lo, hi, i0, c));
                    break;
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    /// Eigenvalues in the open window `(lo, hi)`, ascending, at most `cap`
    /// of them counted from the bottom of the window.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64, cap: Option<usize>) -> Vec<f64> {
        let i0 = self.count_below(lo);
        let i1 = self.count_below(hi);
        let i1 = match cap {
            Some(c) => i1.min(i0 + c),
            None => i1,
        };
        if i1 <= i0 {
            return Vec::new();
        }
        self.eigenvalues_by_index(i0, i1)
            .into_iter()
            .filter(|&x| x > lo && x < hi)
            .collect()
    }

    /// Pivoted LU factorization of `T - shift`.
    pub fn factor_shifted(&self, shift: f64) -> TridiagLu {
        TridiagLu::new(self, shift)
    }

    /// y = T x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// Eigenvectors for precomputed eigenvalues (ascending), by inverse
    /// iteration. Near-degenerate groups are explicitly reorthogonalized.
    pub fn eigenvectors_for(&self, lambdas: &[f64]) -> Result<Array2<f64>> {
        let n = self.n();
        let m = lambdas.len();
        let mut vecs = Array2::<f64>::zeros((n, m));
        if m == 0 {
            return Ok(vecs);
        }
        let tnorm = self.norm_bound();
        // Pairs closer than this are treated as one cluster; see module docs.
        let cluster_tol = (1e8 * f64::EPSILON * tnorm).max(1e-12);

        let mut cluster_start = 0usize;
        for j in 0..m {
            let new_cluster = j > 0 && (lambdas[j] - lambdas[j - 1]) > cluster_tol;
            if new_cluster {
                cluster_start = j;
            }
            let mut x = self.inverse_iteration(lambdas[j], j as u64, |x| {
                // Orthogonalize against the already-accepted cluster members
                // between iterations; crucial for genuinely degenerate pairs.
                for p in cluster_start..j {
                    let col = vecs.column(p);
                    let dot: f64 = col.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    for (xi, ci) in x.iter_mut().zip(col.iter()) {
                        *xi -= dot * ci;
                    }
                }
            })?;
            normalize(&mut x);
            vecs.column_mut(j).iter_mut().zip(&x).for_each(|(v, &xi)| *v = xi);
            // When the cluster closes (next lambda far away or last index),
            // run one MGS sweep over the whole cluster block.
            let cluster_end = j + 1 == m || (lambdas[j + 1] - lambdas[j]) > cluster_tol;
            if cluster_end && j > cluster_start {
                let mut block = vecs.slice_mut(ndarray::s![.., cluster_start..=j]);
                super::dense::mgs_orthonormalize(&mut block);
            }
        }
        Ok(vecs)
    }

    fn inverse_iteration<F: FnMut(&mut [f64])>(
        &self,
        lambda: f64,
        seed: u64,
        mut orthogonalize: F,
    ) -> Result<Vec<f64>> {
        let n = self.n();
        let tnorm = self.norm_bound();
        let lu = self.factor_shifted(lambda);
        let mut rng = SplitMix64::new(0x5eed ^ seed.wrapping_mul(0x9e37));
        let mut x: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        normalize(&mut x);
        let mut resid = f64::INFINITY;
        for sweep in 0..8 {
            lu.solve_in_place(&mut x);
            orthogonalize(&mut x);
            normalize(&mut x);
            if sweep >= 2 {
                let mut y = vec![0.0; n];
                self.matvec(&x, &mut y);
                resid = y
                    .iter()
                    .zip(&x)
                    .map(|(yi, xi)| (yi - lambda * xi).abs())
                    .fold(0.0f64, f64::max);
                if resid <= 64.0 * f64::EPSILON * tnorm {
                    return Ok(x);
                }
            }
        }
        if resid <= 1e-8 * tnorm {
            Ok(x)
        } else {
            Err(Error::Eigensolver(format!(
                "inverse iteration stalled at lambda={lambda:.6e}, residual {resid:.3e} (norm {tnorm:.3e})"
            )))
        }
    }

    /// Eigenpairs in the open window `(lo, hi)`; the returned block is always
    /// MGS-polished, so its orthonormality defect is at machine level.
    pub fn eigenpairs_in(
        &self,
        lo: f64,
        hi: f64,
        cap: Option<usize>,
    ) -> Result<(Vec<f64>, Array2<f64>)> {
        let vals = self.eigenvalues_in(lo, hi, cap);
        let mut vecs = self.eigenvectors_for(&vals)?;
        if vals.len() > 1 {
            super::dense::mgs_orthonormalize(&mut vecs.view_mut());
        }
        Ok((vals, vecs))
    }

    /// Complete eigendecomposition.
    pub fn full_eigen(&self, ortho: Orthonormalization) -> Result<(Vec<f64>, Array2<f64>)> {
        let n = self.n();
        let vals = self.eigenvalues_by_index(0, n);
        let mut vecs = self.eigenvectors_for(&vals)?;
        if ortho == Orthonormalization::Global {
            super::dense::cholesky_qr2(&mut vecs)?;
        }
        Ok((vals, vecs))
    }
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        for v in x.iter_mut() {
            *v /= nrm;
        }
    }
}

/// LU factorization of a shifted symmetric tridiagonal matrix with partial
/// pivoting (LAPACK dgttrf layout: one subdiagonal, two superdiagonals).
#[derive(Debug, Clone)]
pub struct TridiagLu {
    n: usize,
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn new(t: &SymTridiag, shift: f64) -> Self {
        let n = t.n();
        let mut d: Vec<f64> = t.diag.iter().map(|&v| v - shift).collect();
        let mut dl = t.off.clone();
        let mut du = t.off.clone();
        let mut du2 = vec![0.0f64; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let pivmin = t.pivmin().max(f64::MIN_POSITIVE);
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                let mut piv = d[i];
                if piv.abs() < pivmin {
                    piv = pivmin.copysign(if piv == 0.0 { 1.0 } else { piv });
                    d[i] = piv;
                }
                let fact = dl[i] / piv;
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
                if i + 2 < n {
                    du2[i] = 0.0;
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if let Some(last) = d.last_mut() {
            if last.abs() < pivmin {
                *last = pivmin.copysign(if *last == 0.0 { 1.0 } else { *last });
            }
        }
        Self {
            n,
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    /// Solve `(T - shift) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        // Guard against overflow in the back substitution: inverse iteration
        // normalizes afterwards, so a uniform rescale is harmless.
        b[n - 1] /= self.d[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
            if b[i].abs() > 1e250 {
                let s = 1e-250;
                for v in b.iter_mut() {
                    *v *= s;
                }
            }
        }
    }
}
