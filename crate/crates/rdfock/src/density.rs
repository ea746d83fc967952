//! Radial charge densities and the test-density families used by the gap
//! certificates.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, RadialGrid};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Nonnegative spherically symmetric density sampled on grid nodes.
///
/// `total_charge` is always the node-quadrature value of `4 pi r^2 rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDensity {
    values: Vec<f64>,
    total_charge: f64,
    grid_spec: GridSpec,
}

impl RadialDensity {
    pub fn new(grid: &RadialGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "density has {} samples, grid has {} nodes",
                values.len(),
                grid.n()
            )));
        }
        let peak = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for v in values.iter_mut() {
            if *v < 0.0 {
                if *v < -1e-12 * peak.max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "density must be nonnegative, found {v}"
                    )));
                }
                *v = 0.0;
            }
        }
        let total_charge = charge_integral(grid, &values);
        Ok(Self {
            values,
            total_charge,
            grid_spec: grid.spec(),
        })
    }

    pub fn zero(grid: &RadialGrid) -> Self {
        Self {
            values: vec![0.0; grid.n()],
            total_charge: 0.0,
            grid_spec: grid.spec(),
        }
    }

    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().iter().map(|&r| f(r)).collect())
    }

    /// Rescale so the quadrature charge is exactly `charge`.
    pub fn normalized(mut self, grid: &RadialGrid, charge: f64) -> Result<Self> {
        if self.total_charge <= 0.0 {
            return Err(Error::InvalidInput(
                "cannot normalize a zero density".into(),
            ));
        }
        let s = charge / self.total_charge;
        self.values.iter_mut().for_each(|v| *v *= s);
        self.total_charge = charge_integral(grid, &self.values);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_charge(&self) -> f64 {
        self.total_charge
    }

    pub fn matches(&self, grid: &RadialGrid) -> Result<()> {
        if grid.same_spec(&self.grid_spec) {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                "density was sampled on a different grid".into(),
            ))
        }
    }

    /// Hydrogenic ground-state density `e^{-2r}/pi` (unit charge).
    pub fn hydrogenic_1s(grid: &RadialGrid) -> Result<Self> {
        Self::from_fn(grid, |r| (-2.0 * r).exp() / PI)
    }
}

fn charge_integral(grid: &RadialGrid, values: &[f64]) -> f64 {
    let integrand: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(values)
        .map(|(&r, &v)| 4.0 * PI * r * r * v)
        .collect();
    grid.integrate(&integrand)
}

/// Named unit-charge density shapes for the certificate suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DensityShape {
    Gaussian { scale: f64 },
    Exponential { scale: f64 },
    UniformBall { radius: f64 },
    FarShell { radius: f64, width: f64 },
}

impl DensityShape {
    pub fn tag(&self) -> String {
        match self {
            DensityShape::Gaussian { scale } => format!("gaussian(s={scale})"),
            DensityShape::Exponential { scale } => format!("exponential(s={scale})"),
            DensityShape::UniformBall { radius } => format!("uniform_ball(R={radius})"),
            DensityShape::FarShell { radius, width } => {
                format!("far_shell(R={radius},w={width})")
            }
        }
    }

    /// Sample the shape on `grid`, normalized to unit charge.
    pub fn build(&self, grid: &RadialGrid) -> Result<RadialDensity> {
        let raw = match *self {
            DensityShape::Gaussian { scale } => {
                RadialDensity::from_fn(grid, |r| (-0.5 * (r / scale).powi(2)).exp())?
            }
            DensityShape::Exponential { scale } => {
                RadialDensity::from_fn(grid, |r| (-r / scale).exp())?
            }
            DensityShape::UniformBall { radius } => {
                RadialDensity::from_fn(grid, |r| if r <= radius { 1.0 } else { 0.0 })?
            }
            DensityShape::FarShell { radius, width } => RadialDensity::from_fn(grid, |r| {
                if r > radius && r < radius + width {
                    // C^1 bump on [R, R+w]
                    let x = (r - radius) / width;
                    (PI * x).sin().powi(2)
                } else {
                    0.0
                }
            })?,
        };
        raw.normalized(grid, 1.0)
    }

    /// Peak of the associated Coulomb potential; a concentration measure.
    pub fn concentration(&self, grid: &RadialGrid) -> Result<f64> {
        let rho = self.build(grid)?;
        let v = crate::coulomb::coulomb_potential(&rho, grid)?;
        Ok(v.node_values().iter().fold(0.0f64, |a, &b| a.max(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> RadialGrid {
        RadialGrid::exponential(GridSpec::new(600, 1e-4, 80.0)).unwrap()
    }

    #[test]
    fn hydrogenic_density_has_unit_charge() {
        let g = grid();
        let rho = RadialDensity::hydrogenic_1s(&g).unwrap();
        assert_relative_eq!(rho.total_charge(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn zero_density_is_legal() {
        let g = grid();
        let rho = RadialDensity::zero(&g);
        assert_eq!(rho.total_charge(), 0.0);
    }

    #[test]
    fn negative_density_rejected() {
        let g = grid();
        assert!(RadialDensity::from_fn(&g, |r| 1.0 - r).is_err());
    }

    #[test]
    fn shapes_normalize_to_unit_charge() {
        let g = grid();
        for shape in [
            DensityShape::Gaussian { scale: 0.5 },
            DensityShape::Exponential { scale: 1.0 },
            DensityShape::UniformBall { radius: 2.0 },
            DensityShape::FarShell { radius: 20.0, width: 1.0 },
        ] {
            let rho = shape.build(&g).unwrap();
            assert_relative_eq!(rho.total_charge(), 1.0, max_relative = 1e-12);
            assert!(rho.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn grid_mismatch_detected() {
        let g1 = grid();
        let g2 = RadialGrid::exponential(GridSpec::new(512, 1e-4, 80.0)).unwrap();
        let rho = RadialDensity::hydrogenic_1s(&g1).unwrap();
        assert!(rho.matches(&g2).is_err());
        assert!(rho.matches(&g1).is_ok());
    }
}
