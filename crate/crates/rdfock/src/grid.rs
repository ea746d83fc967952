//! Exponentially mapped radial grids with end-corrected quadrature.
//!
//! Nodes follow `r(t) = r0 (e^t - 1)` with uniform `t`, which clusters points
//! at the nucleus where relativistic orbitals behave like `r^(sqrt(k^2-kappa^2)-1)`,
//! while reaching large truncation radii at logarithmic cost. All integrals
//! are evaluated in the mapped variable where integrands are smooth; the node
//! weights carry Euler-Maclaurin end corrections plus extrapolated end panels
//! so that `int_0^rmax f dr` is accurate to O(h^6) for smooth `f` even though
//! neither `r = 0` nor `r = rmax` carries a sample.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Grid generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub node_count: usize,
    pub r0: f64,
    pub r_max: f64,
}

impl GridSpec {
    pub fn new(node_count: usize, r0: f64, r_max: f64) -> Self {
        Self {
            node_count,
            r0,
            r_max,
        }
    }

    /// Default origin scale for a nuclear coupling: `1e-4 sqrt(1 - kappa^2)`
    /// resolves the `r^(gamma-1)` orbital singularity of the innermost channel.
    pub fn for_coupling(kappa: f64, node_count: usize, r_max: f64) -> Self {
        let r0 = 1e-4 * (1.0 - kappa * kappa).max(1e-4).sqrt();
        Self::new(node_count, r0, r_max)
    }
}

/// Immutable radial mesh shared by densities, potentials and operators.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    spec: GridSpec,
    step: f64,
    nodes: Vec<f64>,
    node_t: Vec<f64>,
    midpoints: Vec<f64>,
    mid_t: Vec<f64>,
    weights: Vec<f64>,
    fd_node_widths: Vec<f64>,
    fd_mid_widths: Vec<f64>,
    r_max: f64,
}

impl RadialGrid {
    /// Build the grid and run the quadrature self-test (relative error below
    /// 1e-8 on `1`, `r e^-r`, `r^2 e^-r` over `[0, r_max]`).
    pub fn exponential(spec: GridSpec) -> Result<Self> {
        if spec.node_count < 32 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 32 nodes, got {}",
                spec.node_count
            )));
        }
        if !(spec.r0 > 0.0) || !(spec.r_max > spec.r0) {
            return Err(Error::InvalidInput(format!(
                "grid scales must satisfy 0 < r0 < r_max, got r0={} r_max={}",
                spec.r0, spec.r_max
            )));
        }
        let m = spec.node_count;
        let h = (spec.r_max / spec.r0).ln_1p() / (m + 1) as f64;
        let mut nodes = Vec::with_capacity(m);
        let mut node_t = Vec::with_capacity(m);
        for i in 1..=m {
            let t = i as f64 * h;
            node_t.push(t);
            nodes.push(spec.r0 * t.exp_m1());
        }
        let r_max = spec.r0 * ((m + 1) as f64 * h).exp_m1();
        let mut midpoints = Vec::with_capacity(m);
        let mut mid_t = Vec::with_capacity(m);
        for j in 0..m {
            let right = if j + 1 < m { nodes[j + 1] } else { r_max };
            let mid = 0.5 * (nodes[j] + right);
            midpoints.push(mid);
            mid_t.push((mid / spec.r0).ln_1p());
        }
        // Dual-cell widths for the staggered finite-difference scheme.
        let mut fd_mid_widths = Vec::with_capacity(m);
        for j in 0..m {
            let right = if j + 1 < m { nodes[j + 1] } else { r_max };
            fd_mid_widths.push(right - nodes[j]);
        }
        let mut fd_node_widths = Vec::with_capacity(m);
        for i in 0..m {
            let left = if i == 0 { 0.5 * nodes[0] } else { midpoints[i - 1] };
            fd_node_widths.push(midpoints[i] - left);
        }

        let weights = build_weights(&nodes, spec.r0, h)?;
        let grid = Self {
            spec,
            step: h,
            nodes,
            node_t,
            midpoints,
            mid_t,
            weights,
            fd_node_widths,
            fd_mid_widths,
            r_max,
        };
        grid.self_test()?;
        Ok(grid)
    }

    fn self_test(&self) -> Result<()> {
        let rm = self.r_max;
        let cases: [(&str, fn(f64) -> f64, f64); 3] = [
            ("1", |_r| 1.0, rm),
            ("r exp(-r)", |r| r * (-r).exp(), 1.0 - (-rm).exp() * (1.0 + rm)),
            (
                "r^2 exp(-r)",
                |r| r * r * (-r).exp(),
                2.0 - (-rm).exp() * (rm * rm + 2.0 * rm + 2.0),
            ),
        ];
        for (name, f, exact) in cases {
            let vals: Vec<f64> = self.nodes.iter().map(|&r| f(r)).collect();
            let got = self.integrate(&vals);
            let rel = ((got - exact) / exact).abs();
            if rel > 1e-8 {
                return Err(Error::QuadratureSelfTest(format!(
                    "integrand {name}: relative error {rel:.3e} (nodes={}, h={:.3e})",
                    self.spec.node_count, self.step
                )));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn fd_node_widths(&self) -> &[f64] {
        &self.fd_node_widths
    }

    pub fn fd_mid_widths(&self) -> &[f64] {
        &self.fd_mid_widths
    }

    pub fn same_spec(&self, other: &GridSpec) -> bool {
        self.spec == *other
    }

    /// `int_0^rmax f(r) dr` from node samples.
    pub fn integrate(&self, node_values: &[f64]) -> f64 {
        assert_eq!(node_values.len(), self.n(), "sample count mismatch");
        let mut acc = crate::linalg::KahanSum::new();
        for (w, v) in self.weights.iter().zip(node_values) {
            acc.add(w * v);
        }
        acc.value()
    }

    /// Cumulative primitive of a node-sampled integrand in the mapped
    /// variable: returns `P_i = int_0^{r_i} f dr` for every node plus the
    /// total through `r_max`. `f_at_origin` is the integrand value at `r = 0`
    /// times `dr/dt` there (zero for anything vanishing at the origin).
    ///
    /// Each panel integrates the degree-5 interpolant through the six nearest
    /// samples, so the cumulative sums are O(h^6) for smooth integrands.
    pub fn cumulative_primitive(&self, f_at_origin: f64, node_values: &[f64]) -> (Vec<f64>, f64) {
        let m = self.n();
        assert_eq!(node_values.len(), m);
        assert!(m >= 8);
        let h = self.step;
        // F_i = f(r(t_i)) r'(t_i) on t_0..t_M (index 0 is the origin).
        let mut f = Vec::with_capacity(m + 1);
        f.push(f_at_origin);
        for (i, v) in node_values.iter().enumerate() {
            f.push(v * (self.nodes[i] + self.spec.r0));
        }
        let stencils = panel6_stencils();
        let mut prim = Vec::with_capacity(m);
        let mut acc = crate::linalg::KahanSum::new();
        // panels [t_j, t_{j+1}] for j = 0..m, the last one extrapolated
        for j in 0..=m {
            let w = (j as isize - 2).clamp(0, m as isize - 5) as usize;
            let a = j - w;
            let st = &stencils[a];
            let mut panel = 0.0;
            for (c, fv) in st.iter().zip(&f[w..w + 6]) {
                panel += c * fv;
            }
            acc.add(h * panel);
            if j < m {
                prim.push(acc.value());
            }
        }
        (prim, acc.value())
    }

    /// Interpolate node samples onto the staggered midpoints (quartic in t).
    pub fn node_to_mid(&self, node_values: &[f64]) -> Vec<f64> {
        assert_eq!(node_values.len(), self.n());
        self.mid_t
            .iter()
            .map(|&t| lagrange_uniform(&self.node_t, node_values, self.step, t))
            .collect()
    }

    /// Interpolate midpoint samples onto the nodes.
    pub fn mid_to_node(&self, mid_values: &[f64]) -> Vec<f64> {
        assert_eq!(mid_values.len(), self.n());
        self.node_t
            .iter()
            .map(|&t| lagrange_scattered(&self.mid_t, mid_values, t))
            .collect()
    }

    /// d/dr of node samples by five-point stencils in the mapped variable.
    pub fn derivative_at_nodes(&self, node_values: &[f64]) -> Vec<f64> {
        let m = self.n();
        assert_eq!(node_values.len(), m);
        assert!(m >= 5);
        let h = self.step;
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let dt = if i >= 2 && i + 2 < m {
                (-node_values[i + 2] + 8.0 * node_values[i + 1] - 8.0 * node_values[i - 1]
                    + node_values[i - 2])
                    / (12.0 * h)
            } else {
                // one-sided five-point stencil
                let (base, s) = if i < 2 { (0usize, i as isize) } else { (m - 5, (i + 5 - m) as isize) };
                one_sided_deriv5(&node_values[base..base + 5], s, h)
            };
            out.push(dt / (self.nodes[i] + self.spec.r0));
        }
        out
    }
}

/// Derivative at offset `s` (grid units) of a quartic through 5 uniform samples.
fn one_sided_deriv5(f: &[f64], s: isize, h: f64) -> f64 {
    // Coefficients of d/ds of the Lagrange interpolant at s = 0..4.
    const TABLE: [[f64; 5]; 5] = [
        [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25],
        [-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0],
        [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
        [-1.0 / 12.0, 0.5, -1.5, 5.0 / 6.0, 0.25],
        [0.25, -4.0 / 3.0, 3.0, -4.0, 25.0 / 12.0],
    ];
    let row = &TABLE[s as usize];
    row.iter().zip(f).map(|(c, v)| c * v).sum::<f64>() / h
}

/// Cubic Lagrange interpolation on a uniform abscissa set.
fn lagrange_uniform(ts: &[f64], values: &[f64], h: f64, t: f64) -> f64 {
    let m = ts.len();
    let pos = ((t - ts[0]) / h).floor() as isize;
    let start = pos.clamp(1, m as isize - 3) as usize - 1;
    lagrange4(&ts[start..start + 4], &values[start..start + 4], t)
}

/// Cubic Lagrange interpolation on scattered (near-uniform) abscissae.
fn lagrange_scattered(ts: &[f64], values: &[f64], t: f64) -> f64 {
    let m = ts.len();
    let idx = ts.partition_point(|&x| x < t);
    let start = idx.saturating_sub(2).min(m - 4);
    lagrange4(&ts[start..start + 4], &values[start..start + 4], t)
}

fn lagrange4(x: &[f64], y: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let mut w = y[i];
        for j in 0..4 {
            if j != i {
                w *= (t - x[j]) / (x[i] - x[j]);
            }
        }
        acc += w;
    }
    acc
}

/// Quadrature weights on the interior nodes for `int_{t0}^{tM+1} F dt` where
/// `F(t) = f(r(t)) r'(t)`: trapezoid core, Euler-Maclaurin derivative
/// corrections at both interior ends, and extrapolated end panels.
fn build_weights(nodes: &[f64], r0: f64, h: f64) -> Result<Vec<f64>> {
    let m = nodes.len();
    const P: usize = 7;
    // u_i: weights in t-space applied to F(t_i), i = 1..m.
    let mut u = vec![h; m];
    u[0] = 0.5 * h;
    u[m - 1] = 0.5 * h;

    // Euler-Maclaurin: int = trapezoid + h^2/12 (F'(a) - F'(b))
    //                              - h^4/720 (F'''(a) - F'''(b))
    //                              + h^6/30240 (F^(5)(a) - F^(5)(b)).
    let d1 = derivative_stencil(P, 1)?;
    let d3 = derivative_stencil(P, 3)?;
    let d5 = derivative_stencil(P, 5)?;
    // Panel weights for int over one step beyond the sampled range
    // (nodes s = 0..P-1, integral over [-1, 0]).
    let panel = panel_stencil(P, -1.0, 0.0)?;

    // Mirrored right end: odd derivatives flip sign under reflection and so
    // do the Euler-Maclaurin signs, so the same weights apply to the
    // reversed samples.
    for j in 0..P {
        let corr = d1[j] / 12.0 - d3[j] / 720.0 + d5[j] / 30240.0;
        u[j] += h * (panel[j] + corr);
        u[m - 1 - j] += h * (panel[j] + corr);
    }
    // Convert to weights on f-samples: w_i = u_i * r'(t_i).
    Ok(u
        .iter()
        .enumerate()
        .map(|(i, ui)| ui * (nodes[i] + r0))
        .collect())
}

/// Solve for coefficients c with sum_j c_j s_j^k = rhs_k, s_j = 0..p-1.
fn moment_solve(p: usize, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut a = vec![vec![0.0f64; p]; p];
    for (k, row) in a.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = (j as f64).powi(k as i32);
        }
    }
    let mut b = rhs.to_vec();
    // Gaussian elimination with partial pivoting.
    for col in 0..p {
        let mut piv = col;
        for r in col + 1..p {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Internal("singular moment system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            for c in col..p {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; p];
    for col in (0..p).rev() {
        let mut s = b[col];
        for c in col + 1..p {
            s -= a[col][c] * x[c];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}

/// Stencil for the k-th derivative at s = 0 from samples at s = 0..p-1
/// (in grid units; divide by h^k for physical use — callers fold that in).
fn derivative_stencil(p: usize, k: usize) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0f64; p];
    rhs[k] = (1..=k).product::<usize>() as f64;
    moment_solve(p, &rhs)
}

/// Weights integrating the degree-(p-1) interpolant over [a, b] in s-units,
/// with samples at s = 0..p-1 (a, b may lie outside the sample range).
fn panel_stencil(p: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    let rhs: Vec<f64> = (0..p)
        .map(|k| (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k as f64 + 1.0))
        .collect();
    moment_solve(p, &rhs)
}

/// Six-point panel weights for unit intervals [a, a+1], a = 0..5, with
/// samples at s = 0..5. Index 5 extrapolates one step past the samples.
fn panel6_stencils() -> &'static [[f64; 6]; 6] {
    static CELL: std::sync::OnceLock<[[f64; 6]; 6]> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let mut out = [[0.0f64; 6]; 6];
        for (a, row) in out.iter_mut().enumerate() {
            let w = panel_stencil(6, a as f64, a as f64 + 1.0).expect("panel moments");
            row.copy_from_slice(&w);
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(m: usize) -> RadialGrid {
        RadialGrid::exponential(GridSpec::new(m, 1e-4, 60.0)).unwrap()
    }

    #[test]
    fn construction_passes_self_test() {
        let g = grid(400);
        assert_eq!(g.n(), 400);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes()[0] > 0.0);
        assert_relative_eq!(g.r_max(), 60.0, max_relative = 1e-12);
        // midpoints sit strictly between consecutive nodes
        for j in 0..g.n() - 1 {
            assert!(g.midpoints()[j] > g.nodes()[j] && g.midpoints()[j] < g.nodes()[j + 1]);
        }
    }

    #[test]
    fn quadrature_is_high_order() {
        // Gaussian moments: int_0^inf r^2 exp(-r^2/2) dr = sqrt(pi/2)
        let g = grid(300);
        let vals: Vec<f64> = g.nodes().iter().map(|&r| r * r * (-0.5 * r * r).exp()).collect();
        let exact = (std::f64::consts::PI / 2.0).sqrt();
        assert_relative_eq!(g.integrate(&vals), exact, max_relative = 1e-10);
    }

    #[test]
    fn cumulative_primitive_matches_closed_form() {
        let g = grid(500);
        // f = r e^{-r}: primitive int_0^r = 1 - e^{-r}(1+r)
        let vals: Vec<f64> = g.nodes().iter().map(|&r| r * (-r).exp()).collect();
        let (prim, total) = g.cumulative_primitive(0.0, &vals);
        for (i, &r) in g.nodes().iter().enumerate().step_by(37) {
            let exact = 1.0 - (-r).exp() * (1.0 + r);
            assert_relative_eq!(prim[i], exact, epsilon = 1e-10, max_relative = 1e-8);
        }
        let rm = g.r_max();
        assert_relative_eq!(total, 1.0 - (-rm).exp() * (1.0 + rm), max_relative = 1e-10);
    }

    #[test]
    fn interpolation_round_trip_is_accurate() {
        let g = grid(300);
        let f = |r: f64| (1.0 + r).ln() * (-0.3 * r).exp();
        let node_vals: Vec<f64> = g.nodes().iter().map(|&r| f(r)).collect();
        let mid = g.node_to_mid(&node_vals);
        for (j, &mj) in g.midpoints().iter().enumerate().step_by(23) {
            assert_relative_eq!(mid[j], f(mj), epsilon = 1e-6, max_relative = 1e-6);
        }
        let back = g.mid_to_node(&mid);
        for (i, &ri) in g.nodes().iter().enumerate().step_by(23) {
            assert_relative_eq!(back[i], f(ri), epsilon = 2e-6, max_relative = 2e-6);
        }
    }

    #[test]
    fn derivative_stencils_converge() {
        let g = grid(600);
        let vals: Vec<f64> = g.nodes().iter().map(|&r| (-r).exp()).collect();
        let d = g.derivative_at_nodes(&vals);
        for (i, &r) in g.nodes().iter().enumerate().step_by(41) {
            assert_relative_eq!(d[i], -(-r).exp(), epsilon = 1e-8, max_relative = 1e-7);
        }
    }

    #[test]
    fn refinement_improves_quadrature() {
        // O(h^2)-or-better contract: halving h shrinks the error markedly.
        let f = |r: f64| (-r).exp() * r.powi(3);
        let exact = 6.0; // gamma(4), tail beyond 60 negligible
        let err = |m: usize| {
            let g = grid(m);
            let vals: Vec<f64> = g.nodes().iter().map(|&r| f(r)).collect();
            (g.integrate(&vals) - exact).abs()
        };
        let e1 = err(150);
        let e2 = err(300);
        assert!(e2 < e1 / 4.0 || e2 < 1e-12, "e1={e1:.3e} e2={e2:.3e}");
    }

    #[test]
    fn small_grid_is_rejected() {
        assert!(RadialGrid::exponential(GridSpec::new(8, 1e-4, 10.0)).is_err());
        assert!(RadialGrid::exponential(GridSpec::new(64, -1.0, 10.0)).is_err());
    }
}
