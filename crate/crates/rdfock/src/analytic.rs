//! Closed-form hydrogenic spectra and the relativistic Scott series.
//!
//! The Dirac-Coulomb gap spectrum is the Sommerfeld fine-structure formula
//! `E = (1 + kappa^2/(n_r + sqrt(k^2 - kappa^2))^2)^{-1/2}`; the Schroedinger
//! comparison levels are `-kappa^2/(2 n^2)` counted with multiplicity `2 n^2`
//! per principal shell. The Scott constant is
//! `c(kappa) = kappa^2/2 + sum_n d_n` where `d_n` pairs the two spectra
//! shell by shell with matched multiplicity.

use crate::error::{Error, Result};
use crate::linalg::KahanSum;
use crate::params::ChannelIndex;
use serde::{Deserialize, Serialize};

/// One hydrogen-like level with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydrogenLevel {
    pub model: LevelModel,
    pub principal_n: u32,
    /// Dirac only; zero marks a Schroedinger level.
    pub channel_k: i32,
    pub energy: f64,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelModel {
    Dirac,
    Schroedinger,
}

/// Sommerfeld eigenvalue of `D_kappa` in the gap, in (0, 1).
///
/// `n_r` is the radial quantum number; `(n_r = 0, k > 0)` does not exist.
pub fn sommerfeld_eigenvalue(kappa: f64, n_r: u32, k: ChannelIndex) -> Result<f64> {
    check_kappa(kappa)?;
    if n_r == 0 && k.get() > 0 {
        return Err(Error::InvalidInput(format!(
            "state (n_r=0, k={}) is inadmissible",
            k.get()
        )));
    }
    Ok(1.0 + sommerfeld_shifted(kappa, n_r, k.get()))
}

/// `E - 1`, computed without cancellation (needed deep in the Rydberg tail).
fn sommerfeld_shifted(kappa: f64, n_r: u32, k: i32) -> f64 {
    let gamma = ((k as f64) * (k as f64) - kappa * kappa).sqrt();
    let n_eff = n_r as f64 + gamma;
    let x = (kappa / n_eff) * (kappa / n_eff);
    // (1+x)^{-1/2} - 1 = expm1(-ln(1+x)/2)
    (-0.5 * x.ln_1p()).exp_m1()
}

/// Nonrelativistic comparison level `-kappa^2 / (2 n^2)`.
pub fn schroedinger_level(kappa: f64, n: u32) -> f64 {
    let n = n as f64;
    -kappa * kappa / (2.0 * n * n)
}

/// All Dirac levels of principal shell `n`: `k in {-n..-1, 1..n-1}`,
/// `n_r = n - |k|`. Multiplicities sum to `2 n^2`.
pub fn dirac_shell(kappa: f64, n: u32) -> Result<Vec<HydrogenLevel>> {
    check_kappa(kappa)?;
    if n == 0 {
        return Err(Error::InvalidInput("principal shell must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(2 * n as usize - 1);
    for k in shell_channels(n) {
        let n_r = n - k.unsigned_abs();
        let ch = ChannelIndex::new(k)?;
        out.push(HydrogenLevel {
            model: LevelModel::Dirac,
            principal_n: n,
            channel_k: k,
            energy: sommerfeld_eigenvalue(kappa, n_r, ch)?,
            multiplicity: ch.degeneracy(),
        });
    }
    Ok(out)
}

fn shell_channels(n: u32) -> impl Iterator<Item = i32> {
    let n = n as i32;
    (-n..=n - 1).filter(|&k| k != 0)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::Domain(format!(
            "kappa must satisfy 0 <= kappa < 1, got {kappa}"
        )));
    }
    Ok(())
}

/// Per-shell paired difference
/// `d_n = sum_k 2|k| (E_{n,k} - 1) + kappa^2`
/// accumulated term-wise as `2|k| [(E-1) + kappa^2/(2n^2)]` to avoid
/// cancellation at large `n`.
pub fn scott_shell_difference(kappa: f64, n: u32) -> f64 {
    let nn = n as f64;
    let schro = kappa * kappa / (2.0 * nn * nn);
    let mut acc = KahanSum::new();
    for k in shell_channels(n) {
        let n_r = n - k.unsigned_abs();
        let delta = sommerfeld_shifted(kappa, n_r, k) + schro;
        acc.add(2.0 * f64::from(k.unsigned_abs()) * delta);
    }
    acc.value()
}

/// Scott series value with a certified tail bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScottCorrection {
    pub kappa: f64,
    pub value: f64,
    pub error_bound: f64,
    pub shells_summed: u32,
    /// Fitted tail coefficients of `d_n ~ a/n^2 + b/n^3 + c/n^4`.
    pub tail_coefficients: [f64; 3],
}

/// Evaluate `c_Scott(kappa)` to the requested tail tolerance.
///
/// Shells are summed directly up to a cutoff; the remainder is extrapolated
/// from a least-squares fit of `d_n = a/n^2 + b/n^3 + c/n^4` over the top
/// half of the summed window, with the certified bound driven by the fit
/// residuals. The cutoff doubles until the bound drops below `tol`.
pub fn scott_correction(kappa: f64, tol: f64) -> Result<ScottCorrection> {
    check_kappa(kappa)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    if kappa == 0.0 {
        return Ok(ScottCorrection {
            kappa,
            value: 0.0,
            error_bound: 0.0,
            shells_summed: 0,
            tail_coefficients: [0.0; 3],
        });
    }
    const N_MAX: u32 = 1 << 16;
    let mut n0: u32 = 256;
    let mut d = Vec::<f64>::new();
    let mut partial = KahanSum::new();
    let mut summed_to = 0u32;
    loop {
        for n in summed_to + 1..=n0 {
            let dn = scott_shell_difference(kappa, n);
            d.push(dn);
            partial.add(dn);
        }
        summed_to = n0;
        let (tail, bound, coeff) = extrapolate_tail(&d, n0);
        let value = 0.5 * kappa * kappa + partial.value() + tail;
        if bound <= tol {
            return Ok(ScottCorrection {
                kappa,
                value,
                error_bound: bound,
                shells_summed: n0,
                tail_coefficients: coeff,
            });
        }
        if n0 >= N_MAX {
            return Err(Error::ToleranceNotReached {
                requested: tol,
                achieved: bound,
                partial: value,
            });
        }
        n0 *= 2;
    }
}

/// Least-squares fit of `d_n = a/n^2 + b/n^3 + c/n^4` on a window and the
/// resulting tail `sum_{n > n0} d_n`.
fn fit_tail(d: &[f64], lo: usize, hi: usize, n0: u32) -> (f64, [f64; 3]) {
    // Normal equations for the 3-parameter model.
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for n in lo..=hi {
        let x = 1.0 / n as f64;
        let basis = [x * x, x * x * x, x * x * x * x];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += basis[i] * basis[j];
            }
            atb[i] += basis[i] * d[n - 1];
        }
    }
    let coeff = solve3(ata, atb);
    let tail =
        coeff[0] * zeta_tail(2, n0) + coeff[1] * zeta_tail(3, n0) + coeff[2] * zeta_tail(4, n0);
    (tail, coeff)
}

/// Tail beyond `n0` with an empirical error bound: the model is fitted on two
/// disjoint windows and the spread of the two extrapolations, scaled by a
/// safety factor, certifies the unmodeled remainder.
fn extrapolate_tail(d: &[f64], n0: u32) -> (f64, f64, [f64; 3]) {
    let hi = n0 as usize;
    let (tail_a, coeff) = fit_tail(d, (hi / 2).max(8), hi, n0);
    let (tail_b, _) = fit_tail(d, (hi / 4).max(4), (hi / 2).max(8), n0);
    let bound = 16.0 * (tail_a - tail_b).abs() + 1e3 * f64::EPSILON * tail_a.abs();
    (tail_a, bound, coeff)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d == 0.0 {
        return [0.0; 3];
    }
    let mut out = [0.0f64; 3];
    for c in 0..3 {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        out[c] = det(m) / d;
    }
    out
}

/// `sum_{n > n0} n^{-p}` by Euler-Maclaurin.
pub fn zeta_tail(p: u32, n0: u32) -> f64 {
    let p = p as f64;
    let x = n0 as f64;
    let inv = 1.0 / x;
    inv.powf(p - 1.0) / (p - 1.0) - 0.5 * inv.powf(p)
        + p / 12.0 * inv.powf(p + 1.0)
        - p * (p + 1.0) * (p + 2.0) / 720.0 * inv.powf(p + 3.0)
}

/// Shell table row for the CLI report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScottShellRow {
    pub n: u32,
    pub d_n: f64,
    pub partial_sum: f64,
}

pub fn scott_shell_table(kappa: f64, n_max: u32) -> Result<Vec<ScottShellRow>> {
    check_kappa(kappa)?;
    let mut acc = KahanSum::new();
    let mut rows = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let dn = scott_shell_difference(kappa, n);
        acc.add(dn);
        rows.push(ScottShellRow {
            n,
            d_n: dn,
            partial_sum: 0.5 * kappa * kappa + acc.value(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ch(k: i32) -> ChannelIndex {
        ChannelIndex::new(k).unwrap()
    }

    #[test]
    fn ground_state_is_sqrt_one_minus_kappa_sq() {
        let e = sommerfeld_eigenvalue(0.5, 0, ch(-1)).unwrap();
        assert_relative_eq!(e, 0.75f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn free_limit_is_one() {
        for k in [-3, -1, 2] {
            let n_r = if k > 0 { 1 } else { 0 };
            assert_eq!(sommerfeld_eigenvalue(0.0, n_r, ch(k)).unwrap(), 1.0);
        }
    }

    #[test]
    fn excited_state_value() {
        // kappa=0.9, n_r=1, k=-1: plug into the closed form
        let e = sommerfeld_eigenvalue(0.9, 1, ch(-1)).unwrap();
        assert_relative_eq!(e, 0.84732, epsilon = 1e-5);
    }

    #[test]
    fn inadmissible_and_domain_errors() {
        assert!(sommerfeld_eigenvalue(0.5, 0, ch(1)).is_err());
        assert!(sommerfeld_eigenvalue(1.0, 0, ch(-1)).is_err());
        assert!(sommerfeld_eigenvalue(-0.1, 0, ch(-1)).is_err());
    }

    #[test]
    fn nonrelativistic_expansion() {
        // E -> 1 - kappa^2/(2 n^2) + O(kappa^4)
        let kappa = 0.01;
        for (n_r, k) in [(0u32, -1i32), (1, -1), (0, -2), (1, 1)] {
            let n = n_r + k.unsigned_abs();
            let e = sommerfeld_eigenvalue(kappa, n_r, ch(k)).unwrap();
            let nr_level = 1.0 + schroedinger_level(kappa, n);
            assert!((e - nr_level).abs() < 2.0 * kappa.powi(4));
        }
    }

    #[test]
    fn schroedinger_levels() {
        assert_eq!(schroedinger_level(1.0, 1), -0.5);
        assert_eq!(schroedinger_level(0.5, 2), -0.03125);
        assert_eq!(schroedinger_level(0.0, 7), 0.0);
    }

    #[test]
    fn shell_multiplicities_sum_to_2n_squared() {
        for n in 1..=50u32 {
            let total: u32 = dirac_shell(0.3, n)
                .unwrap()
                .iter()
                .map(|l| l.multiplicity)
                .sum();
            assert_eq!(total, 2 * n * n, "shell {n}");
        }
    }

    #[test]
    fn shell_ordering_and_interlacing() {
        // energies increase with |k| at fixed n; shells do not interleave
        let kappa = 0.9;
        let mut prev_max = 0.0f64;
        for n in 1..=8 {
            let mut levels = dirac_shell(kappa, n).unwrap();
            levels.sort_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap());
            assert!(levels.first().unwrap().energy > prev_max);
            prev_max = levels.last().unwrap().energy;
            for w in levels.windows(2) {
                assert!(w[0].channel_k.abs() <= w[1].channel_k.abs() + 1);
            }
        }
    }

    #[test]
    fn first_shell_difference_closed_form() {
        // n=1 at kappa=0.5: 2(sqrt(0.75) - 1) + 0.25
        let d1 = scott_shell_difference(0.5, 1);
        assert_relative_eq!(d1, 2.0 * (0.75f64.sqrt() - 1.0) + 0.25, epsilon = 1e-14);
        assert_relative_eq!(d1, -0.0179491924, epsilon = 1e-9);
    }

    #[test]
    fn shell_differences_decay_like_n_minus_2() {
        // d_n * n^2 approaches a constant (about -5 kappa^4 / 4)
        let kappa = 0.5;
        let r1 = scott_shell_difference(kappa, 400) * 400.0f64.powi(2);
        let r2 = scott_shell_difference(kappa, 800) * 800.0f64.powi(2);
        assert_relative_eq!(r1, r2, max_relative = 5e-3);
        assert_relative_eq!(r1, -1.25 * kappa.powi(4), max_relative = 2e-2);
    }

    #[test]
    fn scott_zero_coupling_is_zero() {
        let s = scott_correction(0.0, 1e-10).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.error_bound, 0.0);
    }

    #[test]
    fn scott_tail_bound_dominates_true_remainder() {
        // Compare the extrapolated tail at cutoff n0 against direct summation
        // from n0 to 4 n0 (plus the analytic remainder of the fitted model).
        for kappa in [0.3, 0.5, 0.9] {
            let s = scott_correction(kappa, 1e-8).unwrap();
            let n0 = s.shells_summed;
            let mut direct = KahanSum::new();
            for n in n0 + 1..=4 * n0 {
                direct.add(scott_shell_difference(kappa, n));
            }
            // model tail beyond 4 n0
            let [a, b, c] = s.tail_coefficients;
            let rest = a * zeta_tail(2, 4 * n0) + b * zeta_tail(3, 4 * n0) + c * zeta_tail(4, 4 * n0);
            let mut partial = KahanSum::new();
            for n in 1..=n0 {
                partial.add(scott_shell_difference(kappa, n));
            }
            let better = 0.5 * kappa * kappa + partial.value() + direct.value() + rest;
            assert!(
                (better - s.value).abs() <= s.error_bound.max(1e-12),
                "kappa={kappa}: |{better} - {}| > bound {}",
                s.value,
                s.error_bound
            );
        }
    }

    #[test]
    fn scott_quartic_coefficient_is_stable() {
        // |c(kappa) - kappa^2/2| / kappa^4 approaches 5/4 zeta(2) - zeta(3).
        let q: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|&k| {
                let s = scott_correction(k, 1e-10).unwrap();
                (s.value - 0.5 * k * k).abs() / k.powi(4)
            })
            .collect();
        let expect = 1.25 * std::f64::consts::PI.powi(2) / 6.0 - 1.2020569031595943;
        for &v in &q {
            assert_relative_eq!(v, expect, max_relative = 0.05);
        }
        let spread = (q.iter().cloned().fold(f64::MIN, f64::max)
            - q.iter().cloned().fold(f64::MAX, f64::min))
            / q[1];
        assert!(spread < 0.2, "quartic coefficient spread {spread}");
    }

    #[test]
    fn scott_converges_with_certified_tail_up_to_kappa_09() {
        for kappa in [0.3, 0.6, 0.9] {
            let s = scott_correction(kappa, 1e-8).unwrap();
            assert!(s.error_bound <= 1e-8);
            assert!(s.value.is_finite());
        }
    }
}
