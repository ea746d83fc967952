//! Radial Coulomb transforms: the mean-field potential of a spherical
//! density, the Coulomb pairing energy, and Sobolev-type norms of radial
//! potentials.

use crate::density::RadialDensity;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, RadialGrid};
use std::f64::consts::PI;

/// Radial potential sampled on both nodes and staggered midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPotential {
    node_values: Vec<f64>,
    mid_values: Vec<f64>,
    grid_spec: GridSpec,
}

impl RadialPotential {
    pub fn zero(grid: &RadialGrid) -> Self {
        Self {
            node_values: vec![0.0; grid.n()],
            mid_values: vec![0.0; grid.n()],
            grid_spec: grid.spec(),
        }
    }

    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            node_values: grid.nodes().iter().map(|&r| f(r)).collect(),
            mid_values: grid.midpoints().iter().map(|&r| f(r)).collect(),
            grid_spec: grid.spec(),
        }
    }

    pub fn from_samples(grid: &RadialGrid, node_values: Vec<f64>, mid_values: Vec<f64>) -> Result<Self> {
        if node_values.len() != grid.n() || mid_values.len() != grid.n() {
            return Err(Error::GridMismatch("potential sample count mismatch".into()));
        }
        Ok(Self {
            node_values,
            mid_values,
            grid_spec: grid.spec(),
        })
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    pub fn mid_values(&self) -> &[f64] {
        &self.mid_values
    }

    pub fn matches(&self, grid: &RadialGrid) -> Result<()> {
        if grid.same_spec(&self.grid_spec) {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                "potential was sampled on a different grid".into(),
            ))
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            node_values: self.node_values.iter().map(|v| v * s).collect(),
            mid_values: self.mid_values.iter().map(|v| v * s).collect(),
            grid_spec: self.grid_spec,
        }
    }

    /// self + s * other
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self {
            node_values: self
                .node_values
                .iter()
                .zip(&other.node_values)
                .map(|(a, b)| a + s * b)
                .collect(),
            mid_values: self
                .mid_values
                .iter()
                .zip(&other.mid_values)
                .map(|(a, b)| a + s * b)
                .collect(),
            grid_spec: self.grid_spec,
        }
    }

    /// Max-norm distance on the union of nodes and midpoints.
    pub fn max_distance(&self, other: &Self) -> f64 {
        let a = self
            .node_values
            .iter()
            .zip(&other.node_values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        let b = self
            .mid_values
            .iter()
            .zip(&other.mid_values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        a.max(b)
    }
}

/// Mean-field potential `V(r) = 4 pi [ (1/r) int_0^r rho s^2 ds + int_r^rmax rho s ds ]`.
///
/// This is `rho * 1/|x|` without any coupling prefactor; callers apply alpha.
pub fn coulomb_potential(rho: &RadialDensity, grid: &RadialGrid) -> Result<RadialPotential> {
    rho.matches(grid)?;
    let inner: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(rho.values())
        .map(|(&r, &p)| p * r * r)
        .collect();
    let outer: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(rho.values())
        .map(|(&r, &p)| p * r)
        .collect();
    let (a, _a_tot) = grid.cumulative_primitive(0.0, &inner);
    let (b, b_tot) = grid.cumulative_primitive(0.0, &outer);
    let node_values: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| 4.0 * PI * (a[i] / r + (b_tot - b[i])))
        .collect();
    let mid_values = grid.node_to_mid(&node_values);
    RadialPotential::from_samples(grid, node_values, mid_values)
}

/// Coulomb pairing energy `D(rho1, rho2) = int rho1 (rho2 * 1/|x|)`.
///
/// Symmetrized over the two potential routes so the result is exactly
/// symmetric in its arguments.
pub fn coulomb_energy(rho1: &RadialDensity, rho2: &RadialDensity, grid: &RadialGrid) -> Result<f64> {
    rho1.matches(grid)?;
    rho2.matches(grid)?;
    let d12 = pairing_via_potential(rho1, rho2, grid)?;
    let d21 = pairing_via_potential(rho2, rho1, grid)?;
    Ok(0.5 * (d12 + d21))
}

fn pairing_via_potential(
    rho1: &RadialDensity,
    rho2: &RadialDensity,
    grid: &RadialGrid,
) -> Result<f64> {
    let v2 = coulomb_potential(rho2, grid)?;
    let integrand: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(rho1.values())
        .zip(v2.node_values())
        .map(|((&r, &p), &v)| 4.0 * PI * r * r * p * v)
        .collect();
    Ok(grid.integrate(&integrand))
}

/// Radial Sobolev data of a potential: `(|grad V|_{L2}, |grad V|_{L3}, |V|_{L6})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialNorms {
    pub grad_l2: f64,
    pub grad_l3: f64,
    pub l6: f64,
}

/// Norms of eq-class `L^p(R^3)` for a radial potential, with the gradient
/// taken by finite differences of the sampled values.
pub fn grad_potential_norms(v: &RadialPotential, grid: &RadialGrid) -> Result<PotentialNorms> {
    v.matches(grid)?;
    let dv = grid.derivative_at_nodes(v.node_values());
    let sphere = |f: &dyn Fn(usize, f64) -> f64| -> f64 {
        let vals: Vec<f64> = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| 4.0 * PI * r * r * f(i, r))
            .collect();
        grid.integrate(&vals)
    };
    let grad_l2 = sphere(&|i, _| dv[i] * dv[i]).max(0.0).sqrt();
    let grad_l3 = sphere(&|i, _| dv[i].abs().powi(3)).max(0.0).cbrt();
    let l6 = sphere(&|i, _| v.node_values()[i].powi(6)).max(0.0).powf(1.0 / 6.0);
    Ok(PotentialNorms {
        grad_l2,
        grad_l3,
        l6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;

    fn grid() -> RadialGrid {
        RadialGrid::exponential(GridSpec::new(900, 1e-4, 80.0)).unwrap()
    }

    #[test]
    fn zero_density_gives_zero_potential() {
        let g = grid();
        let v = coulomb_potential(&RadialDensity::zero(&g), &g).unwrap();
        assert!(v.node_values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_ball_reproduces_newton_theorem() {
        let g = grid();
        let rr = 2.0;
        let rho = crate::density::DensityShape::UniformBall { radius: rr }
            .build(&g)
            .unwrap();
        let v = coulomb_potential(&rho, &g).unwrap();
        for (i, &r) in g.nodes().iter().enumerate().step_by(53) {
            let exact = if r >= rr {
                1.0 / r
            } else {
                (3.0 - r * r / (rr * rr)) / (2.0 * rr)
            };
            // the sampled ball edge is resolved to one cell
            if (r - rr).abs() > 0.05 {
                assert_relative_eq!(v.node_values()[i], exact, max_relative = 1e-3);
            }
        }
    }

    #[test]
    fn hydrogenic_potential_matches_closed_form() {
        let g = grid();
        let rho = RadialDensity::hydrogenic_1s(&g).unwrap();
        let v = coulomb_potential(&rho, &g).unwrap();
        for (i, &r) in g.nodes().iter().enumerate().step_by(31) {
            let exact = 1.0 / r - (-2.0 * r).exp() * (1.0 + 1.0 / r);
            assert_relative_eq!(v.node_values()[i], exact, epsilon = 1e-10, max_relative = 1e-8);
        }
        // potential is nonnegative, non-increasing, and r V -> total charge
        let nv = v.node_values();
        assert!(nv.iter().all(|&x| x >= 0.0));
        assert!(nv.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let m = g.n() - 1;
        assert_relative_eq!(g.nodes()[m] * nv[m], 1.0, max_relative = 1e-6);
    }

    #[test]
    fn coulomb_energy_examples() {
        let g = grid();
        let zero = RadialDensity::zero(&g);
        let rho = RadialDensity::hydrogenic_1s(&g).unwrap();
        assert_eq!(coulomb_energy(&zero, &rho, &g).unwrap(), 0.0);
        // classic hydrogenic Hartree integral: D(rho_1s, rho_1s) = 5/8
        assert_relative_eq!(
            coulomb_energy(&rho, &rho, &g).unwrap(),
            0.625,
            max_relative = 1e-8
        );
        // Uniform ball: D carries no 1/2 prefactor, so the classical
        // self-energy 3/(5R) doubles to 6/(5R). Looser tolerance: the
        // sampled ball edge is discontinuous.
        let ball = crate::density::DensityShape::UniformBall { radius: 2.0 }
            .build(&g)
            .unwrap();
        assert_relative_eq!(
            coulomb_energy(&ball, &ball, &g).unwrap(),
            0.6,
            max_relative = 2e-3
        );
    }

    #[test]
    fn coulomb_energy_is_symmetric_and_positive() {
        let g = grid();
        let a = crate::density::DensityShape::Gaussian { scale: 0.7 }.build(&g).unwrap();
        let b = RadialDensity::hydrogenic_1s(&g).unwrap();
        let dab = coulomb_energy(&a, &b, &g).unwrap();
        let dba = coulomb_energy(&b, &a, &g).unwrap();
        assert_eq!(dab, dba);
        assert!(coulomb_energy(&a, &a, &g).unwrap() > 0.0);
    }

    /// Independent oracle: double radial quadrature of the 1/max(r,s) kernel
    /// with the inner integral split at the outer node.
    fn double_quadrature_oracle(rho: &RadialDensity, grid: &RadialGrid) -> f64 {
        let inner_r2: Vec<f64> = grid
            .nodes()
            .iter()
            .zip(rho.values())
            .map(|(&s, &p)| p * s * s)
            .collect();
        let inner_r1: Vec<f64> = grid
            .nodes()
            .iter()
            .zip(rho.values())
            .map(|(&s, &p)| p * s)
            .collect();
        let (a, _) = grid.cumulative_primitive(0.0, &inner_r2);
        let (b, btot) = grid.cumulative_primitive(0.0, &inner_r1);
        let outer: Vec<f64> = grid
            .nodes()
            .iter()
            .enumerate()
            .zip(rho.values())
            .map(|((i, &r), &p)| 4.0 * PI * 4.0 * PI * r * r * p * (a[i] / r + (btot - b[i])))
            .collect();
        grid.integrate(&outer)
    }

    #[test]
    fn potential_route_agrees_with_double_integral_oracle() {
        let g = grid();
        for shape in [
            crate::density::DensityShape::Gaussian { scale: 0.8 },
            crate::density::DensityShape::Exponential { scale: 1.3 },
        ] {
            let rho = shape.build(&g).unwrap();
            let via_pot = coulomb_energy(&rho, &rho, &g).unwrap();
            let via_double = double_quadrature_oracle(&rho, &g);
            assert_relative_eq!(via_pot, via_double, max_relative = 1e-8);
        }
    }

    #[test]
    fn scaling_relation_of_coulomb_energy() {
        // rho_lambda(r) = lambda^3 rho(lambda r) has D = lambda D(rho, rho).
        let g = grid();
        let lam: f64 = 1.7;
        let rho = RadialDensity::from_fn(&g, |r| (-0.5 * r * r).exp()).unwrap();
        let rho_l = RadialDensity::from_fn(&g, |r| lam.powi(3) * (-0.5 * (lam * r).powi(2)).exp())
            .unwrap();
        let d = coulomb_energy(&rho, &rho, &g).unwrap();
        let dl = coulomb_energy(&rho_l, &rho_l, &g).unwrap();
        assert_relative_eq!(dl, lam * d, max_relative = 1e-7);
    }

    #[test]
    fn grad_norms_trivial_and_truncated_coulomb() {
        let g = grid();
        let zero = RadialPotential::zero(&g);
        let n = grad_potential_norms(&zero, &g).unwrap();
        assert_eq!(n.grad_l2, 0.0);
        assert_eq!(n.grad_l3, 0.0);
        assert_eq!(n.l6, 0.0);
    }

    #[test]
    fn grad_norms_match_doubled_resolution_oracle() {
        // V of a unit Gaussian charge; oracle = same computation at 2x nodes.
        let compute = |m: usize| {
            let g = RadialGrid::exponential(GridSpec::new(m, 1e-4, 80.0)).unwrap();
            let rho = crate::density::DensityShape::Gaussian { scale: 1.0 }
                .build(&g)
                .unwrap();
            let v = coulomb_potential(&rho, &g).unwrap();
            grad_potential_norms(&v, &g).unwrap()
        };
        let coarse = compute(900);
        let fine = compute(1800);
        assert_relative_eq!(coarse.grad_l2, fine.grad_l2, max_relative = 1e-6);
        assert_relative_eq!(coarse.grad_l3, fine.grad_l3, max_relative = 1e-6);
        assert_relative_eq!(coarse.l6, fine.l6, max_relative = 1e-6);
    }
}
