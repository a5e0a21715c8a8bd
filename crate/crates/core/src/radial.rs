//! Galerkin assembly of rotation-invariant kernels on axisymmetric grids.
//!
//! A kernel depending only on (|xi|, |xi_*|, |xi - xi_*|) acts on each Legendre
//! component in cos(theta) separately (Funk–Hecke). For every degree l the
//! radial action is projected onto the radial cardinals
//! `phi_j(rho) = G(rho) l_j(rho) / G(rho_j)`, `G = exp(-alpha rho^2 / 2)`, with a
//! radial Gauss rule twice as fine as the grid's.

use faer::Mat;

use crate::error::{KineticError, Result};
use crate::grid::VelocityGrid;
use crate::kernels::{ab_kernel_times_distance, ba_kernel_times_distance, bb_kernel_times_distance, collision_frequency};
use crate::quadrature::{gauss_legendre_on, legendre_table, radial_gauss, LagrangeBasis};

const INNER_TAIL_WIDTH: f64 = 6.0;
const INNER_CUTOFF_EXPONENT: f64 = 80.0;

/// Rotation-invariant kernel of one species pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairKernel {
    Bb { sigma: f64 },
    Ab { sigma: f64, mass_ratio: f64 },
    /// `order` is the Gauss order along the relative-velocity direction.
    Ba { sigma: f64, mass_ratio: f64, order: usize },
}

impl PairKernel {
    pub fn times_distance(&self, a: f64, b: f64, v: f64) -> f64 {
        match *self {
            PairKernel::Bb { sigma } => bb_kernel_times_distance(a, b, v, sigma),
            PairKernel::Ab { sigma, mass_ratio } => ab_kernel_times_distance(a, b, v, sigma, mass_ratio),
            PairKernel::Ba { sigma, mass_ratio, order } => ba_kernel_times_distance(a, b, v, sigma, mass_ratio, order),
        }
    }

    /// Multiplicative collision frequency, absent for the purely integral cross operator.
    pub fn frequency(&self, speed: f64) -> f64 {
        match *self {
            PairKernel::Bb { sigma } | PairKernel::Ab { sigma, .. } => collision_frequency(speed, sigma),
            PairKernel::Ba { .. } => 0.0,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, PairKernel::Ba { .. })
    }
}

/// Quadrature sizes of the radial assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadialSettings {
    /// Fine radial rule size as a multiple of the grid's radial count.
    pub fine_factor: usize,
    /// Gauss points in each of the three inner radial panels.
    pub inner_points: usize,
    /// Gauss points in the separation variable of the Legendre moments.
    pub moment_points: usize,
}

impl Default for RadialSettings {
    fn default() -> Self {
        Self { fine_factor: 2, inner_points: 40, moment_points: 48 }
    }
}

/// `out[l] = 2 pi / (a b) int P_l(u) K v dv`, u = (a^2 + b^2 - v^2) / (2ab), v over [|a-b|, a+b].
pub fn legendre_moments(kernel: &PairKernel, a: f64, b: f64, points: usize, out: &mut [f64]) {
    let lo = (a - b).abs().max(1e-14 * (a + b));
    let hi = a + b;
    out.iter_mut().for_each(|m| *m = 0.0);
    if hi <= 0.0 {
        return;
    }
    let mut table = vec![0.0; out.len()];
    let mut add = |v: f64, wv: f64, out: &mut [f64]| {
        let u = ((a * a + b * b - v * v) / (2.0 * a * b)).clamp(-1.0, 1.0);
        legendre_table(u, &mut table);
        let f = kernel.times_distance(a, b, v) * wv;
        for (m, p) in out.iter_mut().zip(&table) {
            *m += p * f;
        }
    };
    match kernel {
        // the separation-weighted cross kernel is smooth in v; the others have a layer at v = |a-b|
        PairKernel::Ba { .. } => {
            let (vs, ws) = gauss_legendre_on(points, lo, hi);
            for (&v, &w) in vs.iter().zip(&ws) {
                add(v, w, out);
            }
        }
        _ => {
            let (zs, ws) = gauss_legendre_on(points, lo.ln(), hi.ln());
            for (&z, &w) in zs.iter().zip(&ws) {
                let v = z.exp();
                add(v, w * v, out);
            }
        }
    }
    let scale = 2.0 * std::f64::consts::PI / (a * b);
    out.iter_mut().for_each(|m| *m *= scale);
}

/// Values of the radial cardinals at `rho`.
fn radial_cardinals(basis: &LagrangeBasis, alpha: f64, rho: f64, out: &mut [f64]) {
    basis.eval(rho, out);
    for (o, &rj) in out.iter_mut().zip(basis.nodes()) {
        *o *= (-0.5 * alpha * (rho * rho - rj * rj)).exp();
    }
}

/// Radial Galerkin blocks `B_l[i][j]`, l = 0..n_polar, including the frequency term.
pub fn radial_blocks(grid: &VelocityGrid, kernel: &PairKernel, settings: &RadialSettings) -> Result<Vec<Mat<f64>>> {
    let (radii, _) = grid.radial_rule().ok_or_else(|| {
        KineticError::Config("radial assembly needs an axisym-m0 grid".into())
    })?;
    let n_polar = grid.polar_rule().map(|(u, _)| u.len()).unwrap_or(0);
    let nr = radii.len();
    let alpha = grid.alpha();
    let basis = LagrangeBasis::new(radii);

    let (fine, fine_w) = radial_gauss(settings.fine_factor * nr, alpha)?;
    let fine_w: Vec<f64> = fine.iter().zip(&fine_w).map(|(r, w)| w * (alpha * r * r).exp()).collect();
    let mut phi_fine = vec![vec![0.0; nr]; fine.len()];
    for (row, &r) in phi_fine.iter_mut().zip(&fine) {
        radial_cardinals(&basis, alpha, r, row);
    }

    let tail = (INNER_CUTOFF_EXPONENT / alpha).sqrt();
    let mut blocks = vec![Mat::<f64>::zeros(nr, nr); n_polar];
    let mut moments = vec![0.0; n_polar];
    let mut phi_b = vec![0.0; nr];
    // kp[l][j] for the current fine node
    let mut kp = vec![vec![0.0; nr]; n_polar];
    for (q, &aq) in fine.iter().enumerate() {
        kp.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x = 0.0));
        for (lo, hi) in [(0.0, aq), (aq, aq + INNER_TAIL_WIDTH), (aq + INNER_TAIL_WIDTH, aq + tail)] {
            let (bs, ws) = gauss_legendre_on(settings.inner_points, lo, hi);
            for (&b, &wb) in bs.iter().zip(&ws) {
                legendre_moments(kernel, aq, b, settings.moment_points, &mut moments);
                radial_cardinals(&basis, alpha, b, &mut phi_b);
                let wbb = wb * b * b;
                for (kl, ml) in kp.iter_mut().zip(&moments) {
                    let c = ml * wbb;
                    for (x, p) in kl.iter_mut().zip(&phi_b) {
                        *x += c * p;
                    }
                }
            }
        }
        let nu_q = kernel.frequency(aq);
        let wq = fine_w[q];
        for (block, kl) in blocks.iter_mut().zip(&kp) {
            for i in 0..nr {
                let pi = wq * phi_fine[q][i];
                if pi == 0.0 {
                    continue;
                }
                for j in 0..nr {
                    block[(i, j)] += pi * (kl[j] - nu_q * phi_fine[q][j]);
                }
            }
        }
    }
    Ok(blocks)
}

/// Nodal matrix of the operator from its radial blocks (node index = radial * n_polar + polar).
pub fn nodal_matrix(grid: &VelocityGrid, blocks: &[Mat<f64>], symmetrize: bool) -> Result<Mat<f64>> {
    let ((_, wr), (u, wu)) = grid
        .radial_rule()
        .zip(grid.polar_rule())
        .ok_or_else(|| KineticError::Config("nodal assembly needs an axisym-m0 grid".into()))?;
    let (nr, nt) = (wr.len(), u.len());
    let mut p = vec![vec![0.0; nt]; nt];
    for (k, &uk) in u.iter().enumerate() {
        let mut col = vec![0.0; nt];
        legendre_table(uk, &mut col);
        for l in 0..nt {
            p[l][k] = col[l];
        }
    }
    let n = nr * nt;
    let mut out = Mat::<f64>::zeros(n, n);
    for (l, block) in blocks.iter().enumerate().take(nt) {
        let lf = (2 * l + 1) as f64 / 2.0;
        for i in 0..nr {
            for j in 0..nr {
                let bij = if symmetrize { 0.5 * (block[(i, j)] + block[(j, i)]) } else { block[(i, j)] };
                let r = bij / wr[i] * lf;
                if r == 0.0 {
                    continue;
                }
                for k in 0..nt {
                    let rk = r * p[l][k];
                    for kk in 0..nt {
                        out[(i * nt + k, j * nt + kk)] += rk * p[l][kk] * wu[kk];
                    }
                }
            }
        }
    }
    Ok(out)
}
