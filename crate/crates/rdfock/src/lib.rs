//! Reduced Dirac-Fock theory at desk scale.
//!
//! The crate assembles radial Dirac-Coulomb channel operators on exponentially
//! mapped grids, solves the reduced (exchange-free) Dirac-Fock self-consistent
//! field problem under the positive-spectral-subspace constraint, evaluates the
//! Thomas-Fermi energy and the relativistic Scott series, and certifies
//! spectral-gap and critical-coupling inequalities for Dirac-Coulomb operators
//! perturbed by repulsive charge densities.
//!
//! Units: `hbar = m = c = 1`. Energies are in units of `m c^2`, lengths in
//! reduced Compton wavelengths. One Hartree equals `alpha^2` in these units.

pub mod analytic;
pub mod coulomb;
pub mod density;
pub mod discretize;
pub mod error;
pub mod gap;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod mixing;
pub mod params;
pub mod scf;
pub mod tf;

pub use error::{Error, Result};
pub use params::{ChannelIndex, CouplingParams, NU0_LOWER_BOUND};
