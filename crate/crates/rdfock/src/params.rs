//! Physical coupling parameters and angular channel labels.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Proven lower bound on the critical repulsive coupling: `2 / (pi/2 + 2/pi)`.
pub const NU0_LOWER_BOUND: f64 =
    2.0 / (std::f64::consts::FRAC_PI_2 + 2.0 / std::f64::consts::PI);

/// Physical inputs of one Dirac-Fock instance.
///
/// `kappa = alpha * Z` is the nuclear coupling, `nu = alpha * N` the total
/// electron coupling. Both must stay subcritical: `kappa < 1` keeps the
/// Dirac-Coulomb operator self-adjoint with a gap, `nu < NU0_LOWER_BOUND`
/// keeps the mean-field gap open for every admissible density shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub kappa: f64,
    pub alpha: f64,
    pub n_electrons: u32,
    nu: f64,
}

impl CouplingParams {
    pub fn new(kappa: f64, alpha: f64, n_electrons: u32) -> Result<Self> {
        if !(0.0..1.0).contains(&kappa) || !kappa.is_finite() {
            return Err(Error::Domain(format!(
                "kappa must satisfy 0 <= kappa < 1, got {kappa}"
            )));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
        }
        let nu = alpha * f64::from(n_electrons);
        if nu >= NU0_LOWER_BOUND {
            return Err(Error::Domain(format!(
                "nu = alpha*N = {nu} exceeds the subcritical bound {NU0_LOWER_BOUND}"
            )));
        }
        Ok(Self {
            kappa,
            alpha,
            n_electrons,
            nu,
        })
    }

    /// Neutral-atom convention: `alpha = kappa / N`, hence `nu = kappa`.
    pub fn neutral(kappa: f64, n_electrons: u32) -> Result<Self> {
        if n_electrons == 0 {
            return Err(Error::InvalidInput("neutral atom needs N >= 1".into()));
        }
        Self::new(kappa, kappa / f64::from(n_electrons), n_electrons)
    }

    /// Total electron coupling `nu = alpha * N` (stored, always consistent).
    pub fn nu(&self) -> f64 {
        self.nu
    }
}

/// Relativistic angular quantum number of a radial Dirac channel.
///
/// Nonzero integer; the channel carries `2|k|` degenerate magnetic substates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelIndex(i32);

impl ChannelIndex {
    pub fn new(k: i32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("channel index k must be nonzero".into()));
        }
        Ok(Self(k))
    }

    pub fn get(&self) -> i32 {
        self.0
    }

    pub fn degeneracy(&self) -> u32 {
        2 * self.0.unsigned_abs()
    }

    /// Orbital angular momentum of the large component.
    pub fn l_upper(&self) -> u32 {
        if self.0 > 0 {
            self.0 as u32
        } else {
            (-self.0 - 1) as u32
        }
    }

    /// Orbital angular momentum of the small component.
    pub fn l_lower(&self) -> u32 {
        if self.0 > 0 {
            (self.0 - 1) as u32
        } else {
            (-self.0) as u32
        }
    }

    /// Channels `k = -kmax..kmax` excluding zero, in ascending order.
    pub fn scan(kmax: u32) -> Vec<ChannelIndex> {
        let kmax = kmax as i32;
        (-kmax..=kmax).filter(|&k| k != 0).map(ChannelIndex).collect()
    }
}

impl std::fmt::Display for ChannelIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
