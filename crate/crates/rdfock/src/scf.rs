//! Reduced Dirac-Fock self-consistent field solvers.
//!
//! `scf_solve` iterates the map `rho -> occupy the N lowest positive
//! eigenvalues of D_{kappa, alpha rho}` (Aufbau with a fractionally filled
//! last shell), so every accepted state satisfies the nonlinear constraint
//! `gamma P^-_{kappa,gamma} = 0` by construction. `scf_solve_projected`
//! fixes the projector at the bare Dirac-Coulomb `P_kappa^+` and solves the
//! compressed problem in an energy-truncated positive eigenbasis.
//! `retraction_theta` iterates `gamma -> P^+_{kappa,gamma} gamma
//! P^+_{kappa,gamma}` and records the X-norm contraction trace.

use crate::coulomb::{coulomb_potential, RadialPotential};
use crate::density::RadialDensity;
use crate::discretize::assemble_channel;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, RadialGrid};
use crate::linalg::{sym_eigen, thin_qr_r, Orthonormalization, SymTridiag};
use crate::mixing::AndersonMixer;
use crate::params::{ChannelIndex, CouplingParams};
use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Solver knobs shared by both SCF variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScfOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Linear mixing factor in (0, 1].
    pub mixing: f64,
    /// Anderson history depth; 0 keeps plain damped mixing.
    pub anderson_depth: usize,
    /// Channel cutoff; default is `max(8, n_max + 2)` from the largest
    /// occupied principal shell.
    pub k_max: Option<u32>,
    /// Energy cutoff of the positive basis in the projected solver.
    pub e_cut: f64,
}

impl Default for ScfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 400,
            mixing: 0.3,
            anderson_depth: 0,
            k_max: None,
            e_cut: 40.0,
        }
    }
}

/// Channel cutoff from the largest occupied principal shell.
pub fn default_k_max(n_electrons: u32) -> u32 {
    let mut capacity = 0u32;
    let mut n = 0u32;
    while capacity < n_electrons.max(1) {
        n += 1;
        capacity += 2 * n * n;
    }
    (n + 2).max(8)
}

/// One occupied orbital shell of a mean-field state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitalRecord {
    pub channel: i32,
    /// Self-consistent orbital energy `<phi|D_kappa + alpha V_rho|phi>`.
    pub eigenvalue: f64,
    /// Total electrons carried by the shell, in `[0, 2|k|]`.
    pub occupation: f64,
    /// Scaled two-component samples (interleaved nodes/midpoints).
    pub vector: Vec<f64>,
}

/// Convergence history entry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScfIteration {
    pub energy: f64,
    pub residual: f64,
}

/// Converged (or best-effort) mean-field state.
#[derive(Debug, Clone)]
pub struct MeanFieldState {
    pub params: CouplingParams,
    pub grid: Arc<RadialGrid>,
    pub orbitals: Vec<OrbitalRecord>,
    pub density: RadialDensity,
    /// `alpha (rho * 1/|x|)`, the mean-field potential of the output density.
    pub mean_field: RadialPotential,
    /// Reduced Dirac-Fock energy `sum w (mu - 1) - (alpha/2) D(rho, rho)`.
    pub energy: f64,
    /// `sum_i w_i <phi_i| alpha V_rho |phi_i>` = `alpha D(rho, rho)` in the
    /// operator-consistent discrete pairing.
    pub hartree_pairing: f64,
    pub fermi_level: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fewer bound levels than electrons: `Tr gamma < N`.
    pub saturated: bool,
    /// Some occupied eigenvalue sits within `10 tol` of the gap bottom.
    pub gap_warning: bool,
    pub projected: bool,
    pub history: Vec<ScfIteration>,
}

impl MeanFieldState {
    pub fn total_occupation(&self) -> f64 {
        self.orbitals.iter().map(|o| o.occupation).sum()
    }
}

/// Solve the self-consistent-projection problem (Aufbau on the state's own
/// mean-field operator).
pub fn scf_solve(
    params: CouplingParams,
    grid: &Arc<RadialGrid>,
    opts: &ScfOptions,
) -> Result<MeanFieldState> {
    scf_driver(params, grid, opts, None)
}

/// Fixed-projection variant: the eigenproblem is compressed to the positive
/// spectral subspace of the bare Dirac-Coulomb operator, truncated at
/// `opts.e_cut`.
pub fn scf_solve_projected(
    params: CouplingParams,
    grid: &Arc<RadialGrid>,
    opts: &ScfOptions,
) -> Result<MeanFieldState> {
    let kmax = opts.k_max.unwrap_or_else(|| default_k_max(params.n_electrons));
    let channels = ChannelIndex::scan(kmax);
    let bases: Vec<ProjectedBasis> = channels
        .par_iter()
        .map(|&k| ProjectedBasis::build(k, params.kappa, grid, opts.e_cut))
        .collect::<Result<_>>()?;
    scf_driver(params, grid, opts, Some(&bases))
}

/// Positive-energy bare-Coulomb eigenbasis of one channel, truncated.
struct ProjectedBasis {
    channel: ChannelIndex,
    values: Vec<f64>,
    /// grid-space columns (n x m)
    vectors: Array2<f64>,
}

impl ProjectedBasis {
    fn build(k: ChannelIndex, kappa: f64, grid: &Arc<RadialGrid>, e_cut: f64) -> Result<Self> {
        let op = assemble_channel(k, kappa, None, grid)?;
        let (values, vectors) = op.matrix().eigenpairs_in(0.0, e_cut, None)?;
        if values.is_empty() {
            return Err(Error::Internal(format!(
                "empty projected basis in channel {k} below e_cut {e_cut}"
            )));
        }
        Ok(Self {
            channel: k,
            values,
            vectors,
        })
    }
}

/// Candidate level produced by one channel diagonalization.
#[derive(Debug, Clone)]
struct Candidate {
    channel: ChannelIndex,
    eigenvalue: f64,
    vector: Array1<f64>,
}

fn scf_driver(
    params: CouplingParams,
    grid: &Arc<RadialGrid>,
    opts: &ScfOptions,
    projected: Option<&[ProjectedBasis]>,
) -> Result<MeanFieldState> {
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "mixing must lie in (0, 1], got {}",
            opts.mixing
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let kmax = opts.k_max.unwrap_or_else(|| default_k_max(params.n_electrons));
    let channels = ChannelIndex::scan(kmax);
    let n_target = f64::from(params.n_electrons);
    let m = grid.n();

    let mut v_mean = RadialPotential::zero(grid);
    let mut mixer = AndersonMixer::new(opts.anderson_depth, opts.mixing);
    let mut history: Vec<ScfIteration> = Vec::new();
    let mut energy_prev = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let (occupied, fermi, saturated) =
            diagonalize_and_fill(&channels, params, grid, &v_mean, projected, n_target)?;
        let density = density_from_orbitals(grid, &occupied)?;
        let v_new = coulomb_potential(&density, grid)?.scaled(params.alpha);
        // operator-consistent pairing with the new self potential
        let pairing: f64 = occupied
            .iter()
            .map(|(occ, _, _, vec)| occ * potential_expectation(vec, &v_new))
            .sum();
        let energy: f64 = occupied
            .iter()
            .map(|(occ, _, ev, _)| occ * (ev - 1.0))
            .sum::<f64>()
            - 0.5 * pairing;
        let residual = v_mean.max_distance(&v_new);
        history.push(ScfIteration { energy, residual });
        let e_change = (energy - energy_prev).abs();
        energy_prev = energy;

        if residual < opts.tol && e_change < opts.tol * energy.abs().max(1.0) {
            return Ok(finalize_state(
                params, grid, opts, occupied, fermi, saturated, density, v_new, &v_mean, pairing,
                iter + 1, history, projected.is_some(),
            ));
        }
        let flat_x: Vec<f64> = v_mean
            .node_values()
            .iter()
            .chain(v_mean.mid_values())
            .cloned()
            .collect();
        let flat_g: Vec<f64> = v_new
            .node_values()
            .iter()
            .chain(v_new.mid_values())
            .cloned()
            .collect();
        let next = mixer.next(&flat_x, &flat_g);
        v_mean = RadialPotential::from_samples(grid, next[..m].to_vec(), next[m..].to_vec())?;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: history.last().map_or(f64::NAN, |h| h.residual),
        context: format!(
            "SCF (projected={}) at kappa={}, alpha={}, N={}; energy trace tail {:?}",
            projected.is_some(),
            params.kappa,
            params.alpha,
            params.n_electrons,
            &history[history.len().saturating_sub(4)..]
                .iter()
                .map(|h| h.energy)
                .collect::<Vec<_>>()
        ),
    })
}

type Occupied = (f64, ChannelIndex, f64, Array1<f64>);

/// Diagonalize every channel in the current mean field and fill the lowest
/// positive levels with `N` electrons (uniform fractional filling of the
/// degeneracy-tied last group). Returns (occupied shells, Fermi level,
/// saturation flag).
fn diagonalize_and_fill(
    channels: &[ChannelIndex],
    params: CouplingParams,
    grid: &Arc<RadialGrid>,
    v_mean: &RadialPotential,
    projected: Option<&[ProjectedBasis]>,
    n_target: f64,
) -> Result<(Vec<Occupied>, f64, bool)> {
    let window_hi = 1.0 - 1e-10;
    let per_channel: Vec<Vec<Candidate>> = match projected {
        None => channels
            .par_iter()
            .map(|&k| -> Result<Vec<Candidate>> {
                let cap = (n_target / f64::from(k.degeneracy())).ceil() as usize + 2;
                let op = assemble_channel(k, params.kappa, Some(v_mean), grid)?;
                let (vals, vecs) = op.matrix().eigenpairs_in(1e-14, window_hi, Some(cap))?;
                Ok(vals
                    .iter()
                    .enumerate()
                    .map(|(j, &ev)| Candidate {
                        channel: k,
                        eigenvalue: ev,
                        vector: vecs.column(j).to_owned(),
                    })
                    .collect())
            })
            .collect::<Result<_>>()?,
        Some(bases) => bases
            .par_iter()
            .map(|basis| -> Result<Vec<Candidate>> {
                let cap =
                    (n_target / f64::from(basis.channel.degeneracy())).ceil() as usize + 2;
                let mb = basis.values.len();
                // compressed operator: diag(Lambda) + U^T diag(alpha V) U
                let mut scaled = basis.vectors.clone();
                for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
                    let v = if i % 2 == 0 {
                        v_mean.node_values()[i / 2]
                    } else {
                        v_mean.mid_values()[i / 2]
                    };
                    row.mapv_inplace(|x| x * v);
                }
                let mut h = basis.vectors.t().dot(&scaled);
                for i in 0..mb {
                    h[(i, i)] += basis.values[i];
                }
                let (vals, vecs) = sym_eigen(&h)?;
                let mut out = Vec::new();
                for (j, &ev) in vals.iter().enumerate() {
                    if ev > 1e-14 && ev < window_hi && out.len() < cap {
                        let y = vecs.column(j).to_owned();
                        let full = basis.vectors.dot(&y);
                        out.push(Candidate {
                            channel: basis.channel,
                            eigenvalue: ev,
                            vector: full,
                        });
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?,
    };
    let mut candidates: Vec<Candidate> = per_channel.into_iter().flatten().collect();
    candidates.sort_by(|a, b| {
        a.eigenvalue
            .partial_cmp(&b.eigenvalue)
            .unwrap()
            .then(a.channel.get().cmp(&b.channel.get()))
    });

    let mut occupied: Vec<Occupied> = Vec::new();
    let mut remaining = n_target;
    let mut fermi = 0.0f64;
    let mut idx = 0usize;
    while idx < candidates.len() && remaining > 0.0 {
        let deg = f64::from(candidates[idx].channel.degeneracy());
        if remaining >= deg - 1e-12 {
            remaining -= deg;
            fermi = candidates[idx].eigenvalue;
            let c = &candidates[idx];
            occupied.push((deg, c.channel, c.eigenvalue, c.vector.clone()));
            idx += 1;
        } else {
            // fractional last group: all levels degeneracy-tied with this one
            let tie = candidates[idx].eigenvalue;
            let mut group = vec![idx];
            let mut j = idx + 1;
            while j < candidates.len() && candidates[j].eigenvalue - tie <= 1e-9 {
                group.push(j);
                j += 1;
            }
            let group_deg: f64 = group
                .iter()
                .map(|&g| f64::from(candidates[g].channel.degeneracy()))
                .sum();
            let fill = remaining / group_deg;
            for &g in &group {
                let deg_g = f64::from(candidates[g].channel.degeneracy());
                let c = &candidates[g];
                occupied.push((fill * deg_g, c.channel, c.eigenvalue, c.vector.clone()));
            }
            fermi = tie;
            remaining = 0.0;
            idx = j;
        }
    }
    let saturated = remaining > 1e-12;
    // Fermi level: midpoint between the highest occupied and lowest unoccupied
    let fermi_mid = if idx < candidates.len() {
        0.5 * (fermi + candidates[idx].eigenvalue)
    } else {
        fermi + 1e-6
    };
    Ok((occupied, fermi_mid, saturated))
}

/// Total radial density of a set of occupied shells.
fn density_from_orbitals(grid: &RadialGrid, occupied: &[Occupied]) -> Result<RadialDensity> {
    let m = grid.n();
    let wf = grid.fd_node_widths();
    let wg = grid.fd_mid_widths();
    let mut f2_sum = vec![0.0f64; m];
    let mut g_mid = vec![0.0f64; m];
    let mut values = vec![0.0f64; m];
    for (occ, _, _, vec) in occupied {
        if *occ == 0.0 {
            continue;
        }
        for i in 0..m {
            let f = vec[2 * i] / wf[i].sqrt();
            f2_sum[i] += occ * f * f;
            g_mid[i] = vec[2 * i + 1] / wg[i].sqrt();
        }
        let g_at_nodes = grid.mid_to_node(&g_mid);
        for i in 0..m {
            values[i] += occ * g_at_nodes[i] * g_at_nodes[i];
        }
    }
    for (i, &r) in grid.nodes().iter().enumerate() {
        values[i] = (values[i] + f2_sum[i]) / (4.0 * PI * r * r);
    }
    RadialDensity::new(grid, values)
}

/// `<phi | V | phi>` in the operator's own discrete pairing.
fn potential_expectation(vec: &Array1<f64>, v: &RadialPotential) -> f64 {
    let m = v.node_values().len();
    let mut acc = 0.0;
    for i in 0..m {
        acc += vec[2 * i] * vec[2 * i] * v.node_values()[i];
        acc += vec[2 * i + 1] * vec[2 * i + 1] * v.mid_values()[i];
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn finalize_state(
    params: CouplingParams,
    grid: &Arc<RadialGrid>,
    opts: &ScfOptions,
    occupied: Vec<Occupied>,
    fermi: f64,
    saturated: bool,
    density: RadialDensity,
    v_out: RadialPotential,
    v_used: &RadialPotential,
    pairing: f64,
    iterations: usize,
    history: Vec<ScfIteration>,
    projected: bool,
) -> MeanFieldState {
    // Report self-consistent orbital energies: the operator eigenvalue with
    // the used potential swapped for the output mean field. At convergence
    // the shift is bounded by the potential residual.
    let mut orbitals = Vec::with_capacity(occupied.len());
    let mut gap_warning = false;
    let mut energy = -0.5 * pairing;
    for (occ, k, ev, vec) in occupied {
        let mu = ev - potential_expectation(&vec, v_used) + potential_expectation(&vec, &v_out);
        if mu < 10.0 * opts.tol {
            gap_warning = true;
        }
        energy += occ * (mu - 1.0);
        orbitals.push(OrbitalRecord {
            channel: k.get(),
            eigenvalue: mu,
            occupation: occ,
            vector: vec.to_vec(),
        });
    }
    MeanFieldState {
        params,
        grid: Arc::clone(grid),
        orbitals,
        density,
        mean_field: v_out,
        energy,
        hartree_pairing: pairing,
        fermi_level: fermi,
        iterations,
        converged: true,
        saturated,
        gap_warning,
        projected,
        history,
    }
}

/// Reduced Dirac-Fock energy of a state, recomputed through both routes.
///
/// Route one: `sum w (mu - 1) - (alpha/2) D-hat`. Route two:
/// `sum w (<D_kappa> - 1) + (alpha/2) D-hat`. The two agree identically at
/// self-consistency; disagreement beyond 1e-8 relative signals a corrupted
/// state.
pub fn df_energy(state: &MeanFieldState) -> Result<f64> {
    let grid = &state.grid;
    let mut pairing = 0.0f64;
    let mut sum_mu = 0.0f64;
    let mut sum_dirac = 0.0f64;
    let mut buf = vec![0.0f64; 2 * grid.n()];
    for orb in &state.orbitals {
        let k = ChannelIndex::new(orb.channel)?;
        let op = assemble_channel(k, state.params.kappa, None, grid)?;
        op.matrix().matvec(&orb.vector, &mut buf);
        let dirac: f64 = buf.iter().zip(&orb.vector).map(|(a, b)| a * b).sum();
        let vec = Array1::from(orb.vector.clone());
        let vexp = potential_expectation(&vec, &state.mean_field);
        pairing += orb.occupation * vexp;
        sum_mu += orb.occupation * (orb.eigenvalue - 1.0);
        sum_dirac += orb.occupation * (dirac - 1.0);
    }
    let e_dc = sum_mu - 0.5 * pairing;
    let e_direct = sum_dirac + 0.5 * pairing;
    let scale = e_dc.abs().max(1.0);
    if (e_dc - e_direct).abs() > 1e-8 * scale {
        return Err(Error::Internal(format!(
            "double-counting identity violated: {e_dc} vs {e_direct}"
        )));
    }
    Ok(e_dc)
}

/// Factored per-channel density-matrix surrogate: each block stores columns
/// `c_j` and per-magnetic-substate occupations `occ_j in [0, 1]`, so the
/// channel matrix is `sum_j occ_j c_j c_j^T` and full-space traces carry the
/// `2|k|` degeneracy weight.
#[derive(Debug, Clone)]
pub struct StateMatrix {
    pub blocks: Vec<StateBlock>,
}

#[derive(Debug, Clone)]
pub struct StateBlock {
    pub channel: ChannelIndex,
    /// n x r column factor.
    pub columns: Array2<f64>,
    pub occ_per_m: Vec<f64>,
}

impl StateMatrix {
    /// Group the orbitals of a mean-field state by channel.
    pub fn from_state(state: &MeanFieldState) -> Result<Self> {
        let n = 2 * state.grid.n();
        let mut blocks: Vec<StateBlock> = Vec::new();
        for orb in &state.orbitals {
            let k = ChannelIndex::new(orb.channel)?;
            let occ = orb.occupation / f64::from(k.degeneracy());
            let col = Array1::from(orb.vector.clone());
            match blocks.iter_mut().find(|b| b.channel == k) {
                Some(b) => {
                    let r = b.columns.ncols();
                    let mut grown = Array2::<f64>::zeros((n, r + 1));
                    grown.slice_mut(s![.., ..r]).assign(&b.columns);
                    grown.column_mut(r).assign(&col);
                    b.columns = grown;
                    b.occ_per_m.push(occ);
                }
                None => {
                    let mut c = Array2::<f64>::zeros((n, 1));
                    c.column_mut(0).assign(&col);
                    blocks.push(StateBlock {
                        channel: k,
                        columns: c,
                        occ_per_m: vec![occ],
                    });
                }
            }
        }
        blocks.sort_by_key(|b| b.channel.get());
        Ok(Self { blocks })
    }

    /// Full-space trace `Tr gamma`.
    pub fn trace(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                f64::from(b.channel.degeneracy())
                    * b.occ_per_m
                        .iter()
                        .enumerate()
                        .map(|(j, occ)| occ * b.columns.column(j).dot(&b.columns.column(j)))
                        .sum::<f64>()
            })
            .sum()
    }

    fn density(&self, grid: &RadialGrid) -> Result<RadialDensity> {
        let occupied: Vec<Occupied> = self
            .blocks
            .iter()
            .flat_map(|b| {
                (0..b.columns.ncols()).map(move |j| {
                    (
                        b.occ_per_m[j] * f64::from(b.channel.degeneracy()),
                        b.channel,
                        0.0,
                        b.columns.column(j).to_owned(),
                    )
                })
            })
            .collect();
        density_from_orbitals(grid, &occupied)
    }
}

/// Cached bare-operator eigendecompositions per channel.
struct ChannelCache {
    channel: ChannelIndex,
    values: Vec<f64>,
    vectors: Array2<f64>,
}

impl ChannelCache {
    fn build(k: ChannelIndex, kappa: f64, grid: &Arc<RadialGrid>) -> Result<Self> {
        let op = assemble_channel(k, kappa, None, grid)?;
        let (values, vectors) = op.matrix().full_eigen(Orthonormalization::Clusters)?;
        Ok(Self {
            channel: k,
            values,
            vectors,
        })
    }

    /// `|D_kappa|^{1/2} x` for each column of `x`.
    fn abs_sqrt_apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut t = self.vectors.t().dot(x);
        for (i, &v) in self.values.iter().enumerate() {
            let w = v.abs().sqrt();
            t.row_mut(i).mapv_inplace(|a| a * w);
        }
        self.vectors.dot(&t)
    }
}

/// Trace norm of `|D_kappa|^{1/2} gamma |D_kappa|^{1/2}` summed over channels
/// with degeneracy weights: the X-norm in which the retraction contracts.
///
/// For `gamma >= 0` the weighted operator is positive, so the trace norm is
/// the trace itself.
pub fn x_norm(gamma: &StateMatrix, kappa: f64, grid: &Arc<RadialGrid>) -> Result<f64> {
    let mut total = 0.0;
    for block in &gamma.blocks {
        let cache = ChannelCache::build(block.channel, kappa, grid)?;
        let wcols = cache.abs_sqrt_apply(&block.columns);
        let mut ch = 0.0;
        for (j, occ) in block.occ_per_m.iter().enumerate() {
            ch += occ * wcols.column(j).dot(&wcols.column(j));
        }
        total += f64::from(block.channel.degeneracy()) * ch;
    }
    Ok(total)
}

/// Retraction iteration record.
#[derive(Debug, Clone)]
pub struct RetractionTrace {
    /// X-norm distances `|T^{p+1} gamma - T^p gamma|_X`.
    pub distances: Vec<f64>,
    /// Consecutive ratios `k_p = d_{p+1} / d_p`.
    pub ratios: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `|P^- theta|_F`-type residual of the limit in the weighted metric.
    pub negative_residual: f64,
    pub limit: StateMatrix,
    pub x_norm_limit: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RetractionOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RetractionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 60,
        }
    }
}

/// Iterate `gamma -> P^+_{kappa,gamma} gamma P^+_{kappa,gamma}` until the
/// X-distance of consecutive iterates drops below `tol`.
///
/// Three consecutive non-contracting ratios abort with a divergence error
/// (the contraction theorem regime has been left).
pub fn retraction_theta(
    gamma0: &StateMatrix,
    params: CouplingParams,
    grid: &Arc<RadialGrid>,
    opts: &RetractionOptions,
) -> Result<RetractionTrace> {
    if params.alpha * gamma0.trace() > params.nu() + 1e-9 {
        return Err(Error::InvalidInput(
            "alpha Tr(gamma) exceeds the coupling budget nu".into(),
        ));
    }
    let caches: Vec<ChannelCache> = gamma0
        .blocks
        .par_iter()
        .map(|b| ChannelCache::build(b.channel, params.kappa, grid))
        .collect::<Result<_>>()?;
    let mut current = gamma0.clone();
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let mut rising = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    for p in 0..opts.max_iter {
        iterations = p + 1;
        let next = apply_t(&current, params, grid)?;
        let dist = x_distance(&caches, &current, &next)?;
        distances.push(dist);
        if distances.len() >= 2 {
            let prev = distances[distances.len() - 2];
            let k_p = if prev > 0.0 { dist / prev } else { 0.0 };
            ratios.push(k_p);
            if k_p >= 1.0 {
                rising += 1;
                if rising >= 3 {
                    return Err(Error::Divergence {
                        steps: p + 1,
                        distances,
                    });
                }
            } else {
                rising = 0;
            }
        }
        current = next;
        if dist < opts.tol {
            converged = true;
            break;
        }
    }
    let negative_residual = negative_projection_residual(&current, params, grid)?;
    let x_norm_limit = x_norm(&current, params.kappa, grid)?;
    Ok(RetractionTrace {
        distances,
        ratios,
        converged,
        iterations,
        negative_residual,
        limit: current,
        x_norm_limit,
    })
}

/// One application of `T`: project every block onto the positive subspace of
/// the state's own mean-field operator.
fn apply_t(gamma: &StateMatrix, params: CouplingParams, grid: &Arc<RadialGrid>) -> Result<StateMatrix> {
    let rho = gamma.density(grid)?;
    let v = coulomb_potential(&rho, grid)?.scaled(params.alpha);
    let blocks: Vec<StateBlock> = gamma
        .blocks
        .par_iter()
        .map(|b| -> Result<StateBlock> {
            let op = assemble_channel(b.channel, params.kappa, Some(&v), grid)?;
            let (vals, vecs) = op.matrix().full_eigen(Orthonormalization::Clusters)?;
            let first_pos = vals.partition_point(|&x| x < 0.0);
            let upos = vecs.slice(s![.., first_pos..]);
            let projected = upos.dot(&upos.t().dot(&b.columns));
            Ok(StateBlock {
                channel: b.channel,
                columns: projected,
                occ_per_m: b.occ_per_m.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(StateMatrix { blocks })
}

/// X-distance between two states sharing block structure, through the thin-QR
/// trick: the nonzero spectrum of `B S B^T` equals that of `R S R^T`.
fn x_distance(caches: &[ChannelCache], a: &StateMatrix, b: &StateMatrix) -> Result<f64> {
    let mut total = 0.0;
    for (cache, (ba, bb)) in caches.iter().zip(a.blocks.iter().zip(&b.blocks)) {
        debug_assert_eq!(cache.channel, ba.channel);
        let ra = ba.columns.ncols();
        let rb = bb.columns.ncols();
        let n = ba.columns.nrows();
        let mut stacked = Array2::<f64>::zeros((n, ra + rb));
        for (j, occ) in ba.occ_per_m.iter().enumerate() {
            let scaled = ba.columns.column(j).mapv(|x| x * occ.sqrt());
            stacked.column_mut(j).assign(&scaled);
        }
        for (j, occ) in bb.occ_per_m.iter().enumerate() {
            let scaled = bb.columns.column(j).mapv(|x| x * occ.sqrt());
            stacked.column_mut(ra + j).assign(&scaled);
        }
        let weighted = cache.abs_sqrt_apply(&stacked);
        let r = thin_qr_r(&weighted);
        // S = diag(-1 on the a-part, +1 on the b-part): difference b - a.
        // Trace norm of B S B^T equals sum |eig(R S R^T)|.
        let mut r_scaled = r.clone();
        for j in 0..ra + rb {
            let sign = if j < ra { -1.0 } else { 1.0 };
            r_scaled.column_mut(j).mapv_inplace(|x| sign * x);
        }
        let rsrt = r_scaled.dot(&r.t());
        let eigs = crate::linalg::sym_eigenvalues(&rsrt);
        let tn: f64 = eigs.iter().map(|x| x.abs()).sum();
        total += f64::from(cache.channel.degeneracy()) * tn;
    }
    Ok(total)
}

/// Weighted Frobenius residual of the negative-subspace component of the
/// state's own mean field: zero exactly at fixed points of `T`.
fn negative_projection_residual(
    gamma: &StateMatrix,
    params: CouplingParams,
    grid: &Arc<RadialGrid>,
) -> Result<f64> {
    let rho = gamma.density(grid)?;
    let v = coulomb_potential(&rho, grid)?.scaled(params.alpha);
    let mut total = 0.0;
    for b in &gamma.blocks {
        let op = assemble_channel(b.channel, params.kappa, Some(&v), grid)?;
        let (vals, vecs) = op.matrix().full_eigen(Orthonormalization::Clusters)?;
        let first_pos = vals.partition_point(|&x| x < 0.0);
        let uneg = vecs.slice(s![.., ..first_pos]);
        let mut weighted = Array2::<f64>::zeros((b.columns.nrows(), b.columns.ncols()));
        for (j, occ) in b.occ_per_m.iter().enumerate() {
            let c = b.columns.column(j).mapv(|x| x * occ.sqrt());
            weighted.column_mut(j).assign(&c);
        }
        let overlap = uneg.t().dot(&weighted);
        total += f64::from(b.channel.degeneracy()) * overlap.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(total.sqrt())
}

/// `Tr(sqrt(-Laplacian) gamma)` for the coercivity witness: channel-wise
/// radial Laplacians with the centrifugal terms of both spinor components.
pub fn sqrt_laplacian_trace(state: &MeanFieldState) -> Result<f64> {
    let grid = &state.grid;
    let gamma = StateMatrix::from_state(state)?;
    let mut total = 0.0;
    for b in &gamma.blocks {
        let lf = radial_laplacian(grid, b.channel.l_upper(), true);
        let lg = radial_laplacian(grid, b.channel.l_lower(), false);
        let (vf, uf) = lf.full_eigen(Orthonormalization::Clusters)?;
        let (vg, ug) = lg.full_eigen(Orthonormalization::Clusters)?;
        let m = grid.n();
        for (j, occ) in b.occ_per_m.iter().enumerate() {
            let col = b.columns.column(j);
            let f: Array1<f64> = (0..m).map(|i| col[2 * i]).collect();
            let g: Array1<f64> = (0..m).map(|i| col[2 * i + 1]).collect();
            let tf = &uf.t().dot(&f);
            let tg = &ug.t().dot(&g);
            let mut acc = 0.0;
            for i in 0..m {
                acc += vf[i].max(0.0).sqrt() * tf[i] * tf[i];
                acc += vg[i].max(0.0).sqrt() * tg[i] * tg[i];
            }
            total += f64::from(b.channel.degeneracy()) * occ * acc;
        }
    }
    Ok(total)
}

/// Symmetric tridiagonal `-d^2/dr^2 + l(l+1)/r^2` on nodes or midpoints with
/// Dirichlet ends.
fn radial_laplacian(grid: &RadialGrid, l: u32, on_nodes: bool) -> SymTridiag {
    let m = grid.n();
    let pts: Vec<f64> = if on_nodes {
        grid.nodes().to_vec()
    } else {
        grid.midpoints().to_vec()
    };
    let ll = f64::from(l) * f64::from(l + 1);
    let mut cell = Vec::with_capacity(m + 1);
    cell.push(pts[0]); // distance to the origin ghost
    for i in 0..m - 1 {
        cell.push(pts[i + 1] - pts[i]);
    }
    cell.push((grid.r_max() - pts[m - 1]).max(1e-12));
    let dual: Vec<f64> = (0..m).map(|i| 0.5 * (cell[i] + cell[i + 1])).collect();
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m - 1);
    for i in 0..m {
        diag.push((1.0 / cell[i] + 1.0 / cell[i + 1]) / dual[i] + ll / (pts[i] * pts[i]));
        if i + 1 < m {
            off.push(-1.0 / (cell[i + 1] * (dual[i] * dual[i + 1]).sqrt()));
        }
    }
    SymTridiag::new(diag, off)
}

/// Serializable checkpoint of a mean-field state (grid descriptor, orbitals,
/// occupations); supports CLI restarts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: CouplingParams,
    pub grid_spec: GridSpec,
    pub projected: bool,
    pub energy: f64,
    pub fermi_level: f64,
    pub iterations: usize,
    pub orbitals: Vec<OrbitalRecord>,
}

impl Checkpoint {
    pub fn from_state(state: &MeanFieldState) -> Self {
        Self {
            params: state.params,
            grid_spec: state.grid.spec(),
            projected: state.projected,
            energy: state.energy,
            fermi_level: state.fermi_level,
            iterations: state.iterations,
            orbitals: state.orbitals.clone(),
        }
    }
}
