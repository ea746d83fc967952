//! Birman-Schwinger critical couplings and spectral-gap certificates for
//! Dirac-Coulomb operators perturbed by repulsive densities.
//!
//! All Schatten and operator norms are channel-truncated with degeneracy
//! weights `2|k|`; certificates flag when the extremum lands on the cutoff
//! channel.

use crate::coulomb::{coulomb_potential, grad_potential_norms, RadialPotential};
use crate::density::RadialDensity;
use crate::discretize::assemble_channel;
use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::linalg::{sym_eigenvalues, sym_extreme_eigenvalues, Orthonormalization};
use crate::params::{ChannelIndex, NU0_LOWER_BOUND};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Proven lower-bound gap constant
/// `c_{kappa,nu} = c_kappa^2 / (1 + 2(nu + kappa)) (1 + pi/(2 c_kappa) nu nu0/(nu0 - nu))^{-2}`
/// evaluated with the proven lower bound for `nu0` (the formula increases in
/// `nu0`, so this stays a valid bound).
pub fn gap_constant_formula(c_kappa: f64, kappa: f64, nu: f64) -> Result<f64> {
    let nu0 = NU0_LOWER_BOUND;
    if !(0.0..nu0).contains(&nu) {
        return Err(Error::Domain(format!(
            "nu must satisfy 0 <= nu < {nu0}, got {nu}"
        )));
    }
    let amplification = 1.0 + std::f64::consts::FRAC_PI_2 / c_kappa * nu * nu0 / (nu0 - nu);
    Ok(c_kappa * c_kappa / (1.0 + 2.0 * (nu + kappa)) / (amplification * amplification))
}

/// Measured best constant in `c_kappa |D_0| <= |D_kappa|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CKappaMeasurement {
    pub kappa: f64,
    pub value: f64,
    pub channel_attaining_min: i32,
    pub channels_scanned: u32,
    pub at_cutoff: bool,
}

/// `min sigma(|D_0|^{-1/2} |D_kappa| |D_0|^{-1/2})` over scanned channels.
pub fn measure_c_kappa(kappa: f64, grid: &Arc<RadialGrid>, k_max: u32) -> Result<CKappaMeasurement> {
    let per: Vec<(i32, f64)> = ChannelIndex::scan(k_max)
        .par_iter()
        .map(|&k| -> Result<(i32, f64)> {
            let (lo, _) = weighted_extremes(k, kappa, None, grid)?;
            Ok((k.get(), lo))
        })
        .collect::<Result<_>>()?;
    let (channel, value) = per
        .iter()
        .cloned()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    Ok(CKappaMeasurement {
        kappa,
        value,
        channel_attaining_min: channel,
        channels_scanned: k_max,
        at_cutoff: channel.unsigned_abs() == k_max,
    })
}

/// Extreme eigenvalues of `|D_0|^{-1/2} |D_{kappa} + W| |D_0|^{-1/2}` in one
/// channel, with `W` an optional external potential.
fn weighted_extremes(
    k: ChannelIndex,
    kappa: f64,
    w: Option<&RadialPotential>,
    grid: &Arc<RadialGrid>,
) -> Result<(f64, f64)> {
    let free = assemble_channel(k, 0.0, None, grid)?;
    let op = assemble_channel(k, kappa, w, grid)?;
    let (vals0, u0) = free.matrix().full_eigen(Orthonormalization::Clusters)?;
    let (vals, u) = op.matrix().full_eigen(Orthonormalization::Clusters)?;
    // A = D0^{-1/2} U0^T U |L| U^T U0 D0^{-1/2}
    let mut g = u0.t().dot(&u);
    for (j, &v) in vals.iter().enumerate() {
        let wj = v.abs().sqrt();
        g.column_mut(j).mapv_inplace(|x| x * wj);
    }
    for (i, &v) in vals0.iter().enumerate() {
        let wi = 1.0 / v.abs().sqrt();
        g.row_mut(i).mapv_inplace(|x| x * wi);
    }
    let a = g.dot(&g.t());
    Ok(sym_extreme_eigenvalues(&a))
}

/// Critical repulsive coupling of one (kappa, density) instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalCoupling {
    pub kappa: f64,
    pub density_tag: String,
    /// `-1 / min sigma(M_rho)`; infinite when no negative eigenvalue showed
    /// up in the scan.
    pub nu0: f64,
    pub channel_attaining_min: i32,
    pub channels_scanned: u32,
    pub at_cutoff: bool,
}

/// Birman-Schwinger evaluation of `nu_0(kappa, rho)` through the operator
/// `M = sqrt(V_rho) D_kappa^{-1} sqrt(V_rho)` built channel-wise with
/// tridiagonal solves.
pub fn birman_schwinger_nu0(
    kappa: f64,
    rho: &RadialDensity,
    grid: &Arc<RadialGrid>,
    k_max: u32,
    density_tag: &str,
) -> Result<CriticalCoupling> {
    rho.matches(grid)?;
    if (rho.total_charge() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "nu0 expects a unit-charge density, got {}",
            rho.total_charge()
        )));
    }
    let v = coulomb_potential(rho, grid)?;
    let sqrt_v = interleave(&v).iter().map(|&x| x.max(0.0).sqrt()).collect::<Vec<_>>();
    let per: Vec<(i32, f64)> = ChannelIndex::scan(k_max)
        .par_iter()
        .map(|&k| -> Result<(i32, f64)> {
            let op = assemble_channel(k, kappa, None, grid)?;
            let m = birman_schwinger_matrix(op.matrix(), &sqrt_v);
            let (lo, _) = sym_extreme_eigenvalues(&m);
            Ok((k.get(), lo))
        })
        .collect::<Result<_>>()?;
    let (channel, lambda_min) = per
        .iter()
        .cloned()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let (nu0, at_cutoff) = if lambda_min < 0.0 {
        (-1.0 / lambda_min, channel.unsigned_abs() == k_max)
    } else {
        (f64::INFINITY, true)
    };
    Ok(CriticalCoupling {
        kappa,
        density_tag: density_tag.to_string(),
        nu0,
        channel_attaining_min: channel,
        channels_scanned: k_max,
        at_cutoff,
    })
}

/// Dense `sqrt(V) T^{-1} sqrt(V)` from tridiagonal solves, symmetrized.
fn birman_schwinger_matrix(t: &crate::linalg::SymTridiag, sqrt_v: &[f64]) -> Array2<f64> {
    let n = t.n();
    let lu = t.factor_shifted(0.0);
    let mut m = Array2::<f64>::zeros((n, n));
    let mut col = vec![0.0f64; n];
    for i in 0..n {
        if sqrt_v[i] == 0.0 {
            continue;
        }
        col.iter_mut().for_each(|x| *x = 0.0);
        col[i] = sqrt_v[i];
        lu.solve_in_place(&mut col);
        for j in 0..n {
            m[(j, i)] = sqrt_v[j] * col[j];
        }
    }
    // symmetrize roundoff
    let mt = m.t().to_owned();
    (&m + &mt) * 0.5
}

/// Independent crossing oracle: the smallest `nu` at which an eigenvalue of
/// `D_kappa + nu V_rho` reaches zero, located by bisection on Sturm counts.
pub fn nu0_crossing_oracle(
    kappa: f64,
    rho: &RadialDensity,
    grid: &Arc<RadialGrid>,
    k_max: u32,
    rel_tol: f64,
) -> Result<f64> {
    rho.matches(grid)?;
    let v = coulomb_potential(rho, grid)?;
    let per: Vec<f64> = ChannelIndex::scan(k_max)
        .par_iter()
        .map(|&k| -> Result<f64> {
            let base = assemble_channel(k, kappa, None, grid)?;
            let base_count = base.matrix().count_below(0.0);
            let crossed = |nu: f64| -> Result<bool> {
                let op = assemble_channel(k, kappa, Some(&v.scaled(nu)), grid)?;
                Ok(op.matrix().count_below(0.0) < base_count)
            };
            let mut hi = 1.0f64;
            while !crossed(hi)? {
                hi *= 2.0;
                if hi > 1e6 {
                    return Ok(f64::INFINITY);
                }
            }
            let mut lo = 0.0f64;
            while (hi - lo) > rel_tol * hi {
                let mid = 0.5 * (lo + hi);
                if crossed(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(f64::INFINITY, f64::min))
}

/// Measured-versus-proven gap data of one `(kappa, nu, rho)` instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapCertificate {
    pub kappa: f64,
    pub nu: f64,
    pub density_tag: String,
    /// `min sigma(|D_0|^{-1/2} |D_{kappa,nu rho}| |D_0|^{-1/2})` over channels.
    pub measured_gap_constant: f64,
    /// The proven lower bound evaluated with the measured `c_kappa`.
    pub formula_constant: f64,
    pub c_kappa_measured: f64,
    /// Largest weighted singular value; must respect `1 + 2(kappa + nu)`.
    pub measured_upper: f64,
    pub upper_bound: f64,
    pub channels_scanned: u32,
    pub at_cutoff_flag: bool,
}

/// Certify `c_{kappa,nu} |D_0| <= |D_{kappa,nu rho}| <= (1 + 2(kappa+nu)) |D_0|`
/// on the scanned channels. A measured violation of either proven inequality
/// is an error: the theorem holds, so the discretization must be at fault.
pub fn certify_gap(
    kappa: f64,
    nu: f64,
    rho: &RadialDensity,
    grid: &Arc<RadialGrid>,
    k_max: u32,
    density_tag: &str,
    c_kappa: Option<f64>,
) -> Result<GapCertificate> {
    rho.matches(grid)?;
    let c_kappa = match c_kappa {
        Some(c) => c,
        None => measure_c_kappa(kappa, grid, k_max)?.value,
    };
    let formula = gap_constant_formula(c_kappa, kappa, nu)?;
    let v = coulomb_potential(rho, grid)?.scaled(nu);
    let per: Vec<(i32, f64, f64)> = ChannelIndex::scan(k_max)
        .par_iter()
        .map(|&k| -> Result<(i32, f64, f64)> {
            let (lo, hi) = weighted_extremes(k, kappa, Some(&v), grid)?;
            Ok((k.get(), lo, hi))
        })
        .collect::<Result<_>>()?;
    let (channel, measured, _) = per
        .iter()
        .cloned()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let measured_upper = per.iter().map(|x| x.2).fold(f64::MIN, f64::max);
    let upper_bound = 1.0 + 2.0 * (kappa + nu);
    let cert = GapCertificate {
        kappa,
        nu,
        density_tag: density_tag.to_string(),
        measured_gap_constant: measured,
        formula_constant: formula,
        c_kappa_measured: c_kappa,
        measured_upper,
        upper_bound,
        channels_scanned: k_max,
        at_cutoff_flag: channel.unsigned_abs() == k_max,
    };
    if measured < formula - 1e-6 {
        return Err(Error::CertificationFailure(format!(
            "measured gap constant {measured} fell below the proven bound {formula} \
             for {density_tag} at kappa={kappa}, nu={nu}"
        )));
    }
    if measured_upper > upper_bound + 1e-6 {
        return Err(Error::CertificationFailure(format!(
            "measured upper constant {measured_upper} exceeds 1 + 2(kappa+nu) = {upper_bound} \
             for {density_tag} at kappa={kappa}, nu={nu}"
        )));
    }
    Ok(cert)
}

/// Minimum of `P_0^+ (D_0 - kappa/r) P_0^+` on the positive free subspace,
/// over the scanned channels. Must respect Tix's bound `>= 1 - kappa`.
pub fn tix_check(kappa: f64, grid: &Arc<RadialGrid>, k_max: u32) -> Result<f64> {
    if !(0.0..=NU0_LOWER_BOUND).contains(&kappa) {
        return Err(Error::Domain(format!(
            "Tix inequality applies for 0 <= kappa <= {NU0_LOWER_BOUND}, got {kappa}"
        )));
    }
    let inv_r: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(grid.midpoints())
        .flat_map(|(&rn, &rm)| [1.0 / rn, 1.0 / rm])
        .collect();
    let per: Vec<f64> = ChannelIndex::scan(k_max)
        .par_iter()
        .map(|&k| -> Result<f64> {
            let free = assemble_channel(k, 0.0, None, grid)?;
            let (vals, vecs) = free.matrix().full_eigen(Orthonormalization::Clusters)?;
            let first_pos = vals.partition_point(|&x| x < 0.0);
            let upos = vecs.slice(ndarray::s![.., first_pos..]);
            // C = Lambda_+ - kappa U_+^T diag(1/r) U_+
            let mut scaled = upos.to_owned();
            for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
                row.mapv_inplace(|x| x * inv_r[i]);
            }
            let mut c = upos.t().dot(&scaled);
            c.mapv_inplace(|x| -kappa * x);
            for (j, &lam) in vals[first_pos..].iter().enumerate() {
                c[(j, j)] += lam;
            }
            let (lo, _) = sym_extreme_eigenvalues(&c);
            Ok(lo)
        })
        .collect::<Result<_>>()?;
    let min = per.into_iter().fold(f64::INFINITY, f64::min);
    if min < (1.0 - kappa) - 1e-4 {
        return Err(Error::CertificationFailure(format!(
            "compressed minimum {min} violates Tix bound {}",
            1.0 - kappa
        )));
    }
    Ok(min)
}

/// One row of the projection-difference table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjDiffRow {
    pub scale: f64,
    pub grad_l2: f64,
    pub grad_l3: f64,
    pub l6: f64,
    pub lhs_s2: f64,
    pub lhs_s6: f64,
    pub rhs_s2: f64,
    pub rhs_s6: f64,
    pub ratio_s2: f64,
    pub ratio_s6: f64,
}

/// Channel-truncated weighted Schatten norms of
/// `1(D_kappa + V <= 0) - 1(D_kappa <= 0)` for a family of scaled external
/// potentials, against the gradient-norm right-hand sides.
///
/// `epsilon` is the exponent in the S6 weight `|D_kappa|^{-epsilon}`;
/// `l6_threshold` rejects potentials too large for the smallness regime.
pub fn projection_difference_check(
    kappa: f64,
    base_potential: &RadialPotential,
    scales: &[f64],
    grid: &Arc<RadialGrid>,
    k_max: u32,
    epsilon: f64,
    l6_threshold: f64,
) -> Result<Vec<ProjDiffRow>> {
    base_potential.matches(grid)?;
    let mut rows = Vec::with_capacity(scales.len());
    for &t in scales {
        let v = base_potential.scaled(t);
        let norms = grad_potential_norms(&v, grid)?;
        if norms.l6 > l6_threshold {
            return Err(Error::InvalidInput(format!(
                "potential at scale {t} has |V|_L6 = {} above the smallness threshold {l6_threshold}",
                norms.l6
            )));
        }
        let per: Vec<(f64, f64)> = ChannelIndex::scan(k_max)
            .par_iter()
            .map(|&k| -> Result<(f64, f64)> {
                channel_projection_difference(k, kappa, &v, grid, epsilon)
            })
            .collect::<Result<_>>()?;
        let s2_sq: f64 = per.iter().map(|x| x.0).sum();
        let s6_p6: f64 = per.iter().map(|x| x.1).sum();
        let lhs_s2 = s2_sq.sqrt();
        let lhs_s6 = s6_p6.powf(1.0 / 6.0);
        let rhs_s2 = (1.0 + norms.grad_l3) * norms.grad_l2;
        let rhs_s6 = norms.grad_l2;
        rows.push(ProjDiffRow {
            scale: t,
            grad_l2: norms.grad_l2,
            grad_l3: norms.grad_l3,
            l6: norms.l6,
            lhs_s2,
            lhs_s6,
            rhs_s2,
            rhs_s6,
            ratio_s2: lhs_s2 / rhs_s2.max(1e-300),
            ratio_s6: lhs_s6 / rhs_s6.max(1e-300),
        });
    }
    Ok(rows)
}

/// Returns `(2|k| |X|_F^2, 2|k| sum sigma^6)` for
/// `X = |D|^{1/2} Delta |D|^{-1/2}` and `Y = |D|^{1/2} Delta |D|^{-eps}`.
fn channel_projection_difference(
    k: ChannelIndex,
    kappa: f64,
    v: &RadialPotential,
    grid: &Arc<RadialGrid>,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let bare = assemble_channel(k, kappa, None, grid)?;
    let pert = assemble_channel(k, kappa, Some(v), grid)?;
    let (vals, u) = bare.matrix().full_eigen(Orthonormalization::Clusters)?;
    let (vals_v, u_v) = pert.matrix().full_eigen(Orthonormalization::Clusters)?;
    let npos = vals.partition_point(|&x| x < 0.0);
    let npos_v = vals_v.partition_point(|&x| x < 0.0);
    // Delta in the bare eigenbasis: G W G^T - diag(1 on negatives),
    // G = U^T U_V, W = negative-window selector of the perturbed operator.
    let g = u.t().dot(&u_v);
    let gneg = g.slice(ndarray::s![.., ..npos_v]);
    let mut delta = gneg.dot(&gneg.t());
    for i in 0..npos {
        delta[(i, i)] -= 1.0;
    }
    let degw = f64::from(k.degeneracy());
    // X = |L|^{1/2} Delta |L|^{-1/2} entrywise in the eigenbasis
    let mut s2 = 0.0;
    let n = vals.len();
    let mut y = delta.clone();
    for i in 0..n {
        let wi = vals[i].abs().sqrt();
        for j in 0..n {
            let x = delta[(i, j)] * wi / vals[j].abs().sqrt();
            s2 += x * x;
            y[(i, j)] = delta[(i, j)] * wi / vals[j].abs().powf(epsilon);
        }
    }
    let yt_y = y.t().dot(&y);
    let s6: f64 = sym_eigenvalues(&yt_y)
        .into_iter()
        .map(|s| s.max(0.0).powi(3))
        .sum();
    Ok((degw * s2, degw * s6))
}

fn interleave(v: &RadialPotential) -> Vec<f64> {
    v.node_values()
        .iter()
        .zip(v.mid_values())
        .flat_map(|(&a, &b)| [a, b])
        .collect()
}

/// The standard eight-density certificate suite: four shapes at two scales.
pub fn standard_density_suite() -> Vec<crate::density::DensityShape> {
    use crate::density::DensityShape::*;
    vec![
        Gaussian { scale: 0.03 },
        Gaussian { scale: 1.0 },
        Exponential { scale: 0.05 },
        Exponential { scale: 1.0 },
        UniformBall { radius: 0.1 },
        UniformBall { radius: 2.0 },
        FarShell { radius: 8.0, width: 1.0 },
        FarShell { radius: 20.0, width: 1.0 },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityShape;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;

    fn grid(m: usize, rmax: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::exponential(GridSpec::new(m, 1e-5, rmax)).unwrap())
    }

    #[test]
    fn c_kappa_free_is_one() {
        let g = grid(300, 50.0);
        let c = measure_c_kappa(0.0, &g, 2).unwrap();
        assert_relative_eq!(c.value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn c_kappa_decreases_with_coupling() {
        let g = grid(350, 60.0);
        let mut prev = 1.1;
        for kappa in [0.3, 0.5, 0.7, 0.9] {
            let c = measure_c_kappa(kappa, &g, 4).unwrap();
            assert!(c.value > 0.0 && c.value < 1.0);
            assert!(c.value < prev, "c_kappa not decreasing at {kappa}");
            assert!(!c.at_cutoff, "minimum should sit in a low channel");
            prev = c.value;
        }
    }

    #[test]
    fn c_kappa_stable_under_grid_doubling() {
        let a = measure_c_kappa(0.5, &grid(300, 60.0), 3).unwrap().value;
        let b = measure_c_kappa(0.5, &grid(600, 60.0), 3).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-4);
    }

    #[test]
    fn nu0_exceeds_proven_lower_bound() {
        let g = grid(400, 60.0);
        for shape in [
            DensityShape::Gaussian { scale: 0.5 },
            DensityShape::Exponential { scale: 1.0 },
        ] {
            let rho = shape.build(&g).unwrap();
            for kappa in [0.0, 0.5] {
                let cc = birman_schwinger_nu0(kappa, &rho, &g, 4, &shape.tag()).unwrap();
                assert!(
                    cc.nu0 >= NU0_LOWER_BOUND - 1e-3,
                    "nu0 = {} for {} at kappa {kappa}",
                    cc.nu0,
                    shape.tag()
                );
            }
        }
    }

    #[test]
    fn birman_schwinger_symmetric_at_zero_coupling() {
        // charge conjugation: spectrum of M_rho symmetric about the origin
        let g = grid(350, 60.0);
        let rho = DensityShape::Gaussian { scale: 0.5 }.build(&g).unwrap();
        let v = coulomb_potential(&rho, &g).unwrap();
        let sqrt_v: Vec<f64> = interleave(&v).iter().map(|&x| x.max(0.0).sqrt()).collect();
        let op = assemble_channel(ChannelIndex::new(-1).unwrap(), 0.0, None, &g).unwrap();
        let m = birman_schwinger_matrix(op.matrix(), &sqrt_v);
        let (lo, hi) = sym_extreme_eigenvalues(&m);
        assert_relative_eq!(lo, -hi, epsilon = 1e-8);
    }

    #[test]
    fn crossing_oracle_agrees_with_birman_schwinger() {
        let g = grid(400, 60.0);
        let rho = DensityShape::Gaussian { scale: 0.5 }.build(&g).unwrap();
        let bs = birman_schwinger_nu0(0.5, &rho, &g, 3, "gauss").unwrap();
        let oracle = nu0_crossing_oracle(0.5, &rho, &g, 3, 1e-3).unwrap();
        assert_relative_eq!(bs.nu0, oracle, max_relative = 0.01);
    }

    #[test]
    fn nu0_monotone_in_kappa() {
        // nu0(kappa, rho) >= nu0(0, rho)
        let g = grid(400, 60.0);
        let rho = DensityShape::Exponential { scale: 0.5 }.build(&g).unwrap();
        let base = birman_schwinger_nu0(0.0, &rho, &g, 3, "e").unwrap().nu0;
        for kappa in [0.3, 0.6, 0.9] {
            let v = birman_schwinger_nu0(kappa, &rho, &g, 3, "e").unwrap().nu0;
            assert!(v >= base - 1e-6, "nu0({kappa}) = {v} < nu0(0) = {base}");
        }
    }

    #[test]
    fn far_shell_probe_decouples_from_nucleus() {
        // a density far from the origin gives nu0(kappa) close to nu0(0)
        let g = grid(450, 80.0);
        let shape = DensityShape::FarShell { radius: 30.0, width: 1.0 };
        let rho = shape.build(&g).unwrap();
        let at0 = birman_schwinger_nu0(0.0, &rho, &g, 3, "shell").unwrap().nu0;
        let at05 = birman_schwinger_nu0(0.5, &rho, &g, 3, "shell").unwrap().nu0;
        assert_relative_eq!(at05, at0, max_relative = 0.05);
    }

    #[test]
    fn gap_certificate_trivial_and_generic() {
        let g = grid(350, 60.0);
        let rho = DensityShape::Gaussian { scale: 1.0 }.build(&g).unwrap();
        // kappa = 0, nu = 0: both constants are 1
        let cert = certify_gap(0.0, 0.0, &rho, &g, 2, "gauss", None).unwrap();
        assert_relative_eq!(cert.measured_gap_constant, 1.0, epsilon = 1e-9);
        assert_relative_eq!(cert.formula_constant, 1.0, epsilon = 1e-12);
        // generic instance: strict slack (the formula is not optimal)
        let cert = certify_gap(0.5, 0.3, &rho, &g, 3, "gauss", None).unwrap();
        assert!(cert.measured_gap_constant > cert.formula_constant);
        assert!(cert.measured_upper <= 1.0 + 2.0 * 0.8 + 1e-6);
    }

    #[test]
    fn tix_bound_holds() {
        let g = grid(350, 60.0);
        assert_relative_eq!(tix_check(0.0, &g, 2).unwrap(), 1.0, epsilon = 1e-9);
        let mut prev = f64::INFINITY;
        for kappa in [0.3, 0.6, 0.9] {
            let v = tix_check(kappa, &g, 3).unwrap();
            assert!(v >= (1.0 - kappa) - 1e-4, "Tix violated at {kappa}: {v}");
            assert!(v < prev, "compressed minimum should decrease in kappa");
            prev = v;
        }
        assert!(tix_check(0.95, &g, 2).is_err());
    }

    #[test]
    fn projection_difference_zero_potential() {
        let g = grid(300, 50.0);
        let zero = RadialPotential::zero(&g);
        let rows = projection_difference_check(0.5, &zero, &[1.0], &g, 2, 0.1, 0.1).unwrap();
        assert!(rows[0].lhs_s2 < 1e-10);
        assert!(rows[0].lhs_s6 < 1e-10);
    }

    #[test]
    fn projection_difference_scales_linearly() {
        let g = grid(300, 50.0);
        // bump potential shaped like a screened charge, normalized in L6
        let base = RadialPotential::from_fn(&g, |r| 0.05 * (-0.5 * r * r).exp());
        let scales = [1.0, 0.5, 0.25, 0.125];
        let rows =
            projection_difference_check(0.5, &base, &scales, &g, 2, 0.1, 0.1).unwrap();
        // log-log slope of lhs_s2 against the scale
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for r in &rows {
            let x = r.scale.ln();
            let y = r.lhs_s2.ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let n = rows.len() as f64;
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (0.9..=1.1).contains(&slope),
            "lhs_S2 scaling slope {slope} outside [0.9, 1.1]"
        );
        // ratios bounded by one constant across the family
        let rmax = rows.iter().map(|r| r.ratio_s2).fold(0.0f64, f64::max);
        let rmin = rows.iter().map(|r| r.ratio_s2).fold(f64::MAX, f64::min);
        assert!(rmax / rmin < 3.0, "ratio spread {rmin}..{rmax}");
        // oversized potential rejected
        let big = base.scaled(100.0);
        assert!(
            projection_difference_check(0.5, &big, &[1.0], &g, 2, 0.1, 0.1).is_err()
        );
    }

    #[test]
    fn resolvent_identity_on_small_instances() {
        // (A + B)^{-1} = A^{-1} - A^{-1} sqrt(B) (1 + M)^{-1} sqrt(B) A^{-1}
        let g = grid(260, 40.0);
        let rho = DensityShape::Gaussian { scale: 1.0 }.build(&g).unwrap();
        let v = coulomb_potential(&rho, &g).unwrap().scaled(0.4);
        let sqrt_v: Vec<f64> = interleave(&v).iter().map(|&x| x.max(0.0).sqrt()).collect();
        let a_op = assemble_channel(ChannelIndex::new(-1).unwrap(), 0.5, None, &g).unwrap();
        let ab_op =
            assemble_channel(ChannelIndex::new(-1).unwrap(), 0.5, Some(&v), &g).unwrap();
        let n = a_op.dim();
        let m = birman_schwinger_matrix(a_op.matrix(), &sqrt_v);
        let mut one_plus_m = m.clone();
        for i in 0..n {
            one_plus_m[(i, i)] += 1.0;
        }
        // pick a few basis directions and compare both resolvent routes
        let lu_a = a_op.matrix().factor_shifted(0.0);
        let lu_ab = ab_op.matrix().factor_shifted(0.0);
        for idx in [0usize, n / 3, n - 2] {
            let mut direct = vec![0.0; n];
            direct[idx] = 1.0;
            lu_ab.solve_in_place(&mut direct);

            let mut a_inv_e = vec![0.0; n];
            a_inv_e[idx] = 1.0;
            lu_a.solve_in_place(&mut a_inv_e);
            let rhs: Vec<f64> = (0..n).map(|i| sqrt_v[i] * a_inv_e[i]).collect();
            let sol = dense_solve(&one_plus_m, &rhs);
            let mut correction = vec![0.0; n];
            for i in 0..n {
                correction[i] = sqrt_v[i] * sol[i];
            }
            lu_a.solve_in_place(&mut correction);
            let mut worst = 0.0f64;
            for i in 0..n {
                let formula = a_inv_e[i] - correction[i];
                worst = worst.max((formula - direct[i]).abs());
            }
            let scale = direct.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
            assert!(worst <= 1e-8 * scale.max(1.0), "mismatch {worst}");
        }
    }

    fn dense_solve(a: &Array2<f64>, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if m[r][col].abs() > m[piv][col].abs() {
                    piv = r;
                }
            }
            m.swap(col, piv);
            x.swap(col, piv);
            for r in col + 1..n {
                let f = m[r][col] / m[col][col];
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for c in col + 1..n {
                s -= m[col][c] * x[c];
            }
            x[col] = s / m[col][col];
        }
        x
    }
}
