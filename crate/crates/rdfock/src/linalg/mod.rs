//! Deterministic dense/tridiagonal symmetric eigensolvers.
//!
//! Channel operators in this crate are symmetric tridiagonal after the
//! staggered two-component interleaving, so the workhorse is a Sturm-sequence
//! bisection solver with inverse iteration. Dense symmetric problems are
//! reduced to tridiagonal form by Householder reflections. Everything is
//! plain-f64 deterministic: no randomized pivoting, no threading inside a
//! single decomposition, fixed iteration orders.

mod dense;
mod tridiag;

pub use dense::{
    cholesky_qr2, mgs_orthonormalize, sym_eigen, sym_eigenvalues, sym_extreme_eigenvalues,
    sym_min_eigenvalue, sym_tridiagonalize, thin_qr_r, HouseholderQ,
};
pub use tridiag::{Orthonormalization, SymTridiag, TridiagLu};

/// SplitMix64: deterministic start vectors for inverse iteration.
#[derive(Debug, Clone)]
pub(crate) struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_add(0x9e3779b97f4a7c15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-0.5, 0.5).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_cancellation() {
        let mut s = KahanSum::new();
        s.add(1.0);
        for _ in 0..10_000 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-13).abs() < 1e-20);
    }

    #[test]
    fn splitmix_deterministic() {
        let mut a = SplitMix64::new(7);
        let mut b = SplitMix64::new(7);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let x = SplitMix64::new(1).next_f64();
        assert!((-0.5..0.5).contains(&x));
    }
}
