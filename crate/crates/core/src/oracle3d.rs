//! Brute-force collocation of the collision operators on full3d tensor grids.
//!
//! Row i integrates K(xi_i, eta) f(eta) on a spherical product rule centred at
//! xi_i, so the 1/|xi - eta| singularity is absorbed by the Jacobian. Off-grid
//! values come from tensor Lagrange interpolation of f / G, G = exp(-alpha |xi|^2 / 2).

use std::f64::consts::PI;

use faer::Mat;

use crate::error::{KineticError, Result};
use crate::grid::{GridMode, GridRef};
use crate::linalg::RMat;
use crate::quadrature::{gauss_legendre_on, LagrangeBasis};
use crate::radial::PairKernel;

/// Spherical product rule sizes around each node.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    /// Radial panel edges from the node outwards.
    pub radial_edges: Vec<f64>,
    pub radial_points: usize,
    pub polar_points: usize,
    pub azimuthal_points: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { radial_edges: vec![0.0, 1.5, 4.0, 12.0], radial_points: 8, polar_points: 12, azimuthal_points: 16 }
    }
}

pub fn collocation_matrix(grid: &GridRef, kernel: &PairKernel, nu: &[f64]) -> Result<RMat> {
    collocation_matrix_with(grid, kernel, nu, &OracleSettings::default())
}

pub fn collocation_matrix_with(grid: &GridRef, kernel: &PairKernel, nu: &[f64], settings: &OracleSettings) -> Result<RMat> {
    let axis = grid
        .axis_nodes()
        .ok_or_else(|| KineticError::Config("collocation oracle needs a full3d grid".into()))?;
    let n = axis.len();
    let alpha = grid.alpha();
    let basis = LagrangeBasis::new(axis);
    let g = |s2: f64| (-0.5 * alpha * s2).exp();

    // relative offsets rho * omega and their weights rho^2 d(rho) d(omega), times 1/rho from K = (K v) / v
    let mut offsets: Vec<([f64; 3], f64, f64)> = Vec::new();
    let (cu, wu) = gauss_legendre_on(settings.polar_points, -1.0, 1.0);
    let m = settings.azimuthal_points;
    for win in settings.radial_edges.windows(2) {
        let (rs, wrs) = gauss_legendre_on(settings.radial_points, win[0], win[1]);
        for (&r, &wr) in rs.iter().zip(&wrs) {
            for (&u, &w_u) in cu.iter().zip(&wu) {
                let s = (1.0 - u * u).sqrt();
                for k in 0..m {
                    let p = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    let dir = [u, s * p.cos(), s * p.sin()];
                    offsets.push(([r * dir[0], r * dir[1], r * dir[2]], r, wr * r * w_u * 2.0 * PI / m as f64));
                }
            }
        }
    }

    let total = grid.len();
    let mut out = Mat::<f64>::zeros(total, total);
    let mut row = vec![0.0; total];
    let mut l = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..total {
        let xi = grid.point(i);
        let a = grid.speed(i);
        row.iter_mut().for_each(|x| *x = 0.0);
        for &(d, v, w) in &offsets {
            let eta = [xi[0] + d[0], xi[1] + d[1], xi[2] + d[2]];
            let b2 = eta[0] * eta[0] + eta[1] * eta[1] + eta[2] * eta[2];
            let c = w * kernel.times_distance(a, b2.sqrt(), v) * g(b2);
            if c == 0.0 {
                continue;
            }
            for (dim, ld) in l.iter_mut().enumerate() {
                basis.eval(eta[dim], ld);
            }
            for (ia, la) in l[0].iter().enumerate() {
                let ca = c * la;
                for (ib, lb) in l[1].iter().enumerate() {
                    let cab = ca * lb;
                    let base = (ia * n + ib) * n;
                    for (r, lc) in row[base..base + n].iter_mut().zip(&l[2]) {
                        *r += cab * lc;
                    }
                }
            }
        }
        for j in 0..total {
            out[(i, j)] = row[j] / g(grid.speed_sq(j));
        }
        out[(i, i)] -= nu[i];
    }
    Ok(out)
}

/// Orbits of the dihedral group of the square acting on (xi2, xi3), one list per orbit.
///
/// Functions invariant under rotations about the xi1 axis live in the span of orbit sums.
pub fn axial_orbits(grid: &GridRef) -> Result<Vec<Vec<usize>>> {
    if grid.mode() != GridMode::Full3d {
        return Err(KineticError::Config("axial orbits are defined on full3d grids".into()));
    }
    let n = grid.axis_nodes().map(|a| a.len()).unwrap_or(0);
    let mut out = Vec::new();
    for a in 0..n {
        for p in 0..n.div_ceil(2) {
            for q in 0..=p {
                // index distance from the far edge; p >= q, both on the lower half
                let mut members = Vec::new();
                let idx = [p, n - 1 - p];
                let jdx = [q, n - 1 - q];
                for &b in &idx {
                    for &c in &jdx {
                        members.push((b, c));
                        members.push((c, b));
                    }
                }
                members.sort_unstable();
                members.dedup();
                out.push(members.into_iter().map(|(b, c)| (a * n + b) * n + c).collect());
            }
        }
    }
    Ok(out)
}
