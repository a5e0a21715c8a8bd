//! Fluid modes, projections, transport coefficients and dispersion branches.
//!
//! Spectral computations run in weighted coordinates `y = W^{1/2} f`, where the
//! BB and AB operators are symmetric matrices. On full3d grids they are further
//! restricted to functions invariant under rotations about the xi1 axis (orbit
//! sums of the square's symmetry group), the sector that carries all fluid and
//! diffusion modes.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{KineticError, Result};
use crate::grid::{inner_product, GridFunction, GridMode, GridRef, Scalar};
use crate::kernels::sqrt_maxwellian;
use crate::linalg::{eigen, solve, sym_eigen, CMat, RMat};
use crate::operator::{CollisionOperator, Pair};
use crate::oracle3d::axial_orbits;
use crate::{Complex, Real};

/// Euler characteristic speeds: -sqrt(5/3), 0, sqrt(5/3).
pub fn euler_speeds() -> [f64; 3] {
    let c = (5.0f64 / 3.0).sqrt();
    [-c, 0.0, c]
}

/// Kernel component tolerated in right-hand sides of micro-space solves, relative to the rhs norm.
pub const MICRO_RHS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FluidBasis {
    /// Discretely orthonormalized chi_0, chi_1, (chi_2, chi_3 on full3d,) chi_4.
    pub chi: Vec<(usize, GridFunction)>,
    /// E_1, E_2, E_3 normalized to unit length.
    pub e: [GridFunction; 3],
    pub lambda: [f64; 3],
    /// sqrt(M_A) / ||sqrt(M_A)||.
    pub e_d: GridFunction,
    /// ||sqrt(M_A)|| before normalization.
    pub e_d_norm: f64,
}

impl FluidBasis {
    pub fn grid(&self) -> &GridRef {
        self.e_d.grid()
    }

    pub fn chi(&self, index: usize) -> Option<&GridFunction> {
        self.chi.iter().find(|(i, _)| *i == index).map(|(_, f)| f)
    }

    fn chi_or_err(&self, index: usize) -> &GridFunction {
        self.chi(index).expect("chi_0, chi_1, chi_4 exist on every grid")
    }
}

fn orthonormalize(fs: Vec<GridFunction>) -> Result<Vec<GridFunction>> {
    let mut out: Vec<GridFunction> = Vec::with_capacity(fs.len());
    for mut f in fs {
        for _ in 0..2 {
            for q in &out {
                let c = inner_product(q, &f)?;
                f = f.add_scaled(-c, q)?;
            }
        }
        let n = f.norm();
        out.push(f.scaled(1.0 / n));
    }
    Ok(out)
}

/// Builds the fluid basis on `grid` for the mass ratio m_A / m_B.
pub fn fluid_modes(grid: &GridRef, mass_ratio: f64) -> Result<FluidBasis> {
    let m = |p: [f64; 3]| sqrt_maxwellian(p, 1.0);
    let mut idx = vec![0usize, 1];
    let mut raw = vec![GridFunction::from_fn(grid, m), GridFunction::from_fn(grid, move |p| p[0] * m(p))];
    if grid.mode() == GridMode::Full3d {
        idx.extend([2, 3]);
        raw.push(GridFunction::from_fn(grid, move |p| p[1] * m(p)));
        raw.push(GridFunction::from_fn(grid, move |p| p[2] * m(p)));
    }
    idx.push(4);
    raw.push(GridFunction::from_fn(grid, move |p| {
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - 3.0) / 6f64.sqrt() * m(p)
    }));
    let chi: Vec<(usize, GridFunction)> = idx.into_iter().zip(orthonormalize(raw)?).collect();
    let get = |i: usize| chi.iter().find(|(j, _)| *j == i).map(|(_, f)| f.clone()).expect("present");
    let (c0, c1, c4) = (get(0), get(1), get(4));
    let (s32, s52, s23) = ((1.5f64).sqrt(), (2.5f64).sqrt(), (2.0f64 / 3.0).sqrt());
    let combo = |a: f64, b: f64, c: f64| -> Result<GridFunction> {
        let f = c0.scaled(a).add_scaled(b, &c1)?.add_scaled(c, &c4)?;
        let n = f.norm();
        Ok(f.scaled(1.0 / n))
    };
    let e = [combo(s32, -s52, 1.0)?, combo(-s23, 0.0, 1.0)?, combo(s32, s52, 1.0)?];
    let raw_d = GridFunction::from_fn(grid, |p| sqrt_maxwellian(p, mass_ratio));
    let e_d_norm = raw_d.norm();
    Ok(FluidBasis { chi, e, lambda: euler_speeds(), e_d: raw_d.scaled(1.0 / e_d_norm), e_d_norm })
}

/// Eigenvalues (ascending) of the matrix (chi_a, xi1 chi_b) over the axial invariants chi_0, chi_1, chi_4.
pub fn macro_speeds(basis: &FluidBasis) -> Result<[f64; 3]> {
    let fs = [basis.chi_or_err(0), basis.chi_or_err(1), basis.chi_or_err(4)];
    let xf: Vec<GridFunction> = fs.iter().map(|f| f.mul_fn(|p| p[0])).collect();
    let mut m = Mat::<f64>::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = inner_product(fs[i], &xf[j])?;
        }
    }
    let sym = Mat::from_fn(3, 3, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let (vals, _) = sym_eigen(&sym)?;
    Ok([vals[0], vals[1], vals[2]])
}

/// The 3x3 matrix (E_i, xi1 E_j).
pub fn euler_matrix(basis: &FluidBasis) -> Result<[[f64; 3]; 3]> {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = inner_product(&basis.e[i], &basis.e[j].mul_fn(|p| p[0]))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Projection {
    P0,
    P1,
    P0D,
    P1D,
}

/// Orthogonal fluid/micro projections (real or complex functions).
pub fn project<S: Scalar>(f: &GridFunction<S>, which: Projection, basis: &FluidBasis) -> Result<GridFunction<S>> {
    let macro_part = |fs: &[&GridFunction]| -> Result<GridFunction<S>> {
        let mut out = GridFunction::<S>::zeros(f.grid());
        for q in fs {
            let qs = GridFunction::new(q.grid(), q.values().iter().map(|&v| S::from_real(v)).collect())?;
            let c = inner_product(&qs, f)?;
            out = out.add_scaled(c, &qs)?;
        }
        Ok(out)
    };
    let chis: Vec<&GridFunction> = basis.chi.iter().map(|(_, q)| q).collect();
    match which {
        Projection::P0 => macro_part(&chis),
        Projection::P1 => f.add_scaled(-S::one(), &macro_part(&chis)?),
        Projection::P0D => macro_part(&[&basis.e_d]),
        Projection::P1D => f.add_scaled(-S::one(), &macro_part(&[&basis.e_d])?),
    }
}

/// An operator in weighted coordinates, optionally restricted to the axial sector.
#[derive(Debug, Clone)]
pub struct Sector {
    grid: GridRef,
    h: RMat,
    xi1: Vec<f64>,
    sqrt_w: Vec<f64>,
    orbits: Option<Vec<Vec<usize>>>,
}

impl Sector {
    /// Full weighted representation.
    pub fn new(op: &CollisionOperator) -> Self {
        let grid = op.grid().clone();
        let xi1 = (0..grid.len()).map(|i| grid.xi1(i)).collect();
        let sqrt_w = grid.weights().iter().map(|w| w.sqrt()).collect();
        Self { h: op.weighted_matrix(), grid, xi1, sqrt_w, orbits: None }
    }

    /// Axially invariant sector; identical to [`Sector::new`] on axisym-m0 grids.
    pub fn axial(op: &CollisionOperator) -> Result<Self> {
        let full = Self::new(op);
        if op.grid().mode() == GridMode::AxisymM0 {
            return Ok(full);
        }
        let orbits = axial_orbits(op.grid())?;
        let m = orbits.len();
        let h = Mat::from_fn(m, m, |a, b| {
            let mut s = 0.0;
            for &i in &orbits[a] {
                for &j in &orbits[b] {
                    s += full.h[(i, j)];
                }
            }
            s / ((orbits[a].len() * orbits[b].len()) as f64).sqrt()
        });
        let xi1 = orbits.iter().map(|o| full.xi1[o[0]]).collect();
        Ok(Self { grid: full.grid, h, xi1, sqrt_w: full.sqrt_w, orbits: Some(orbits) })
    }

    pub fn dim(&self) -> usize {
        self.xi1.len()
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn matrix(&self) -> &RMat {
        &self.h
    }

    pub fn xi1(&self) -> &[f64] {
        &self.xi1
    }

    pub fn coords(&self, f: &GridFunction) -> Vec<f64> {
        let y: Vec<f64> = f.values().iter().zip(&self.sqrt_w).map(|(v, s)| v * s).collect();
        match &self.orbits {
            None => y,
            Some(orbits) => orbits
                .iter()
                .map(|o| o.iter().map(|&i| y[i]).sum::<f64>() / (o.len() as f64).sqrt())
                .collect(),
        }
    }

    pub fn lift<S: Scalar>(&self, z: &[S]) -> Result<GridFunction<S>> {
        let mut y = vec![S::zero(); self.grid.len()];
        match &self.orbits {
            None => y.copy_from_slice(z),
            Some(orbits) => {
                for (o, &v) in orbits.iter().zip(z) {
                    let c = v.scale(1.0 / (o.len() as f64).sqrt());
                    for &i in o {
                        y[i] = c;
                    }
                }
            }
        }
        let vals = y.iter().zip(&self.sqrt_w).map(|(&v, s)| v.scale(1.0 / s)).collect();
        GridFunction::new(&self.grid, vals)
    }

    /// `-i k diag(xi1) + H`.
    pub fn generator(&self, k: f64) -> CMat {
        Mat::from_fn(self.dim(), self.dim(), |i, j| {
            let d = if i == j { Complex::new(0.0, -k * self.xi1[i]) } else { Complex::new(0.0, 0.0) };
            d + Complex::new(self.h[(i, j)], 0.0)
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn null_coords(sector: &Sector, op: &CollisionOperator, basis: &FluidBasis) -> Vec<Vec<f64>> {
    let fs: Vec<&GridFunction> = match op.pair() {
        Pair::Bb => basis.chi.iter().map(|(_, f)| f).collect(),
        Pair::Ab | Pair::Ba => vec![&basis.e_d],
    };
    let mut out: Vec<Vec<f64>> = Vec::new();
    for f in fs {
        let mut v = sector.coords(f);
        for q in &out {
            let d = dot(q, &v);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        let n = dot(&v, &v).sqrt();
        // transverse invariants vanish in the axial sector
        if n > 1e-8 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Solves Op x = rhs for x orthogonal to the kernel of Op (BB or AB).
pub fn invert_on_micro(op: &CollisionOperator, basis: &FluidBasis, rhs: &GridFunction) -> Result<GridFunction> {
    let sector = Sector::axial(op)?;
    let b = sector.coords(rhs);
    let x = invert_in_sector(&sector, &null_coords(&sector, op, basis), &b)?;
    let lifted = sector.lift(&x)?;
    if sector.orbits.is_some() {
        // data outside the axial sector are solved in full coordinates
        let off_sector = sector.lift(&b)?.add_scaled(-1.0, rhs)?.norm();
        if off_sector > 1e-12 * rhs.norm() {
            let full = Sector::new(op);
            let x = invert_in_sector(&full, &null_coords(&full, op, basis), &full.coords(rhs))?;
            return full.lift(&x);
        }
    }
    Ok(lifted)
}

fn invert_in_sector(sector: &Sector, kernel: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = sector.dim();
    let bn = dot(b, b).sqrt();
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut b = b.to_vec();
    for q in kernel {
        let c = dot(q, &b);
        if c.abs() > MICRO_RHS_TOLERANCE * bn {
            return Err(KineticError::Numerical(format!(
                "right-hand side has a kernel component {c:.3e} (norm {bn:.3e})"
            )));
        }
        b.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
    }
    let h = sector.matrix();
    let shift = h.norm_max().max(1.0);
    let a = Mat::from_fn(n, n, |i, j| h[(i, j)] - shift * kernel.iter().map(|q| q[i] * q[j]).sum::<f64>());
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = solve(&a, &rhs)?;
    let mut x: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    for q in kernel {
        let c = dot(q, &x);
        x.iter_mut().zip(q).for_each(|(v, y)| *v -= c * y);
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct TransportCoefficients {
    /// A_j = (P1 xi1 E_j, L^{-1} P1 xi1 E_j).
    pub a: [f64; 3],
    /// a_2 = -(xi1 E_D, L_AB^{-1} P1^D xi1 E_D).
    pub a2: f64,
    /// epsilon[k][j]: coefficient of E_j in the first k-derivative of the k-th fluid eigenvector.
    pub epsilon: [[Complex; 3]; 3],
    /// e_D'(0) = i L_AB^{-1} xi1 E_D.
    pub ed_prime: GridFunction<Complex>,
}

/// (A_1, A_2, A_3).
pub fn ns_coefficients(op_bb: &CollisionOperator, basis: &FluidBasis) -> Result<[f64; 3]> {
    Ok(ns_data(op_bb, basis)?.0)
}

fn ns_data(op_bb: &CollisionOperator, basis: &FluidBasis) -> Result<([f64; 3], [[Complex; 3]; 3])> {
    if op_bb.pair() != Pair::Bb {
        return Err(KineticError::Config("Navier–Stokes coefficients need the BB operator".into()));
    }
    let mut a = [0.0; 3];
    let mut sol = Vec::with_capacity(3);
    for j in 0..3 {
        let r = project(&basis.e[j].mul_fn(|p| p[0]), Projection::P1, basis)?;
        let x = invert_on_micro(op_bb, basis, &r)?;
        a[j] = inner_product(&r, &x)?;
        sol.push(x);
    }
    let mut eps = [[Complex::new(0.0, 0.0); 3]; 3];
    for k in 0..3 {
        let xs = sol[k].mul_fn(|p| p[0]);
        for j in 0..3 {
            if j != k {
                let r = inner_product(&basis.e[j], &xs)?;
                eps[k][j] = Complex::new(0.0, -r / (basis.lambda[j] - basis.lambda[k]));
            }
        }
    }
    Ok((a, eps))
}

fn diffusion_solution(op_ab: &CollisionOperator, basis: &FluidBasis) -> Result<(GridFunction, GridFunction)> {
    if op_ab.pair() != Pair::Ab {
        return Err(KineticError::Config("the diffusion coefficient needs the AB operator".into()));
    }
    let r = project(&basis.e_d.mul_fn(|p| p[0]), Projection::P1D, basis)?;
    let x = invert_on_micro(op_ab, basis, &r)?;
    Ok((r, x))
}

/// a_2 > 0.
pub fn diffusion_coefficient(op_ab: &CollisionOperator, basis: &FluidBasis) -> Result<f64> {
    let (_, x) = diffusion_solution(op_ab, basis)?;
    Ok(-inner_product(&basis.e_d.mul_fn(|p| p[0]), &x)?)
}

pub fn transport_coefficients(
    op_bb: &CollisionOperator,
    op_ab: &CollisionOperator,
    basis: &FluidBasis,
) -> Result<TransportCoefficients> {
    let (a, epsilon) = ns_data(op_bb, basis)?;
    let (_, x) = diffusion_solution(op_ab, basis)?;
    let a2 = -inner_product(&basis.e_d.mul_fn(|p| p[0]), &x)?;
    let ed_prime = x.to_complex().scaled(Complex::new(0.0, 1.0));
    Ok(TransportCoefficients { a, a2, epsilon, ed_prime })
}

/// Fitted small-k expansion of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFit {
    /// Speed c in Im sigma = -c k + O(k^3).
    pub speed: f64,
    /// A in Re sigma = A k^2 + O(k^4).
    pub second_order: f64,
    /// max |sigma - (-i c k + A k^2)| / |k|^3 over the fitted window.
    pub cubic_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralBranch {
    pub k_values: Vec<f64>,
    pub eigenvalues: Vec<Complex>,
    /// Unit eigenvectors in sector coordinates.
    pub eigenvectors: Vec<Vec<Complex>>,
    pub fitted: Option<BranchFit>,
}

fn cnorm(v: &[Complex]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn cdot(a: &[Complex], b: &[Complex]) -> Complex {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn eig_columns(g: &CMat) -> Result<(Vec<Complex>, Vec<Vec<Complex>>)> {
    let (vals, vecs) = eigen(g)?;
    let n = vals.len();
    let cols = (0..n)
        .map(|c| {
            let v: Vec<Complex> = (0..n).map(|r| vecs[(r, c)]).collect();
            let nv = cnorm(&v);
            v.into_iter().map(|z| z / nv).collect()
        })
        .collect();
    Ok((vals, cols))
}

/// Indices of the `m` eigenvalues of smallest modulus.
fn smallest(vals: &[Complex], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].norm().total_cmp(&vals[b].norm()));
    idx.truncate(m);
    idx
}

/// Tracks `n_tracked` branches emanating from the origin over the sorted positive `k_list`.
pub fn dispersion_branches(op: &CollisionOperator, k_list: &[f64], n_tracked: usize) -> Result<Vec<SpectralBranch>> {
    let sector = Sector::axial(op)?;
    sector_branches(&sector, k_list, n_tracked)
}

pub fn sector_branches(sector: &Sector, k_list: &[f64], n_tracked: usize) -> Result<Vec<SpectralBranch>> {
    if k_list.is_empty() || k_list.windows(2).any(|w| w[1] <= w[0]) || k_list[0] < 0.0 {
        return Err(KineticError::Config("k list must be non-negative and strictly increasing".into()));
    }
    let start = usize::from(k_list[0] == 0.0);
    if start == k_list.len() {
        return Err(KineticError::Config("k list needs a positive wavenumber".into()));
    }
    let k0 = k_list[start];
    let (vals, cols) = eig_columns(&sector.generator(k0))?;
    let mut picked = smallest(&vals, n_tracked);
    // order by phase speed -Im(sigma) / k
    picked.sort_by(|&a, &b| (-vals[a].im).total_cmp(&(-vals[b].im)));
    let mut branches: Vec<SpectralBranch> = picked
        .iter()
        .map(|&p| SpectralBranch {
            k_values: vec![k0],
            eigenvalues: vec![vals[p]],
            eigenvectors: vec![cols[p].clone()],
            fitted: None,
        })
        .collect();
    for &k in &k_list[start + 1..] {
        let (vals, cols) = eig_columns(&sector.generator(k))?;
        let mut taken = vec![false; vals.len()];
        for br in branches.iter_mut() {
            let prev = br.eigenvectors.last().expect("non-empty");
            let prev_val = *br.eigenvalues.last().expect("non-empty");
            let mut best: Option<(usize, f64)> = None;
            for (c, col) in cols.iter().enumerate() {
                if taken[c] {
                    continue;
                }
                let ov = cdot(prev, col).norm();
                best = match best {
                    Some((b, bo)) if ov < bo - 0.05 => Some((b, bo)),
                    Some((b, bo)) if ov < bo + 0.05 => {
                        if (vals[c] - prev_val).norm() < (vals[b] - prev_val).norm() { Some((c, ov)) } else { Some((b, bo)) }
                    }
                    _ => Some((c, ov)),
                };
            }
            let (c, ov) = best.ok_or_else(|| KineticError::Numerical("no eigenvectors".into()))?;
            if ov < 0.5 {
                return Err(KineticError::BranchAmbiguity { k, overlap: ov });
            }
            taken[c] = true;
            let phase = cdot(prev, &cols[c]);
            let rot = phase.conj() / phase.norm();
            br.k_values.push(k);
            br.eigenvalues.push(vals[c]);
            br.eigenvectors.push(cols[c].iter().map(|z| z * rot).collect());
        }
    }
    if start == 1 {
        for br in branches.iter_mut() {
            br.k_values.insert(0, 0.0);
            br.eigenvalues.insert(0, Complex::new(0.0, 0.0));
            let v = br.eigenvectors[0].clone();
            br.eigenvectors.insert(0, v);
        }
    }
    Ok(branches)
}

/// Least-squares fit of the small-k expansion over points with k <= k_fit.
pub fn fit_branch(branch: &SpectralBranch, k_fit: f64) -> Result<BranchFit> {
    let pts: Vec<(f64, Complex)> = branch
        .k_values
        .iter()
        .zip(&branch.eigenvalues)
        .filter(|(k, _)| **k > 0.0 && **k <= k_fit)
        .map(|(&k, &s)| (k, s))
        .collect();
    if pts.len() < 3 {
        return Err(KineticError::Fit("need at least 3 wavenumbers in the fit window".into()));
    }
    let ls2 = |f: &dyn Fn(f64) -> (f64, f64), y: &dyn Fn(Complex) -> f64| {
        let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(k, s) in &pts {
            let (a, b) = f(k);
            let yv = y(s);
            s11 += a * a;
            s12 += a * b;
            s22 += b * b;
            r1 += a * yv;
            r2 += b * yv;
        }
        let det = s11 * s22 - s12 * s12;
        ((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det)
    };
    let (neg_speed, _) = ls2(&|k| (k, k.powi(3)), &|s| s.im);
    let (second, _) = ls2(&|k| (k * k, k.powi(4)), &|s| s.re);
    let speed = -neg_speed;
    let cubic_bound = pts
        .iter()
        .map(|&(k, s)| (s - Complex::new(second * k * k, -speed * k)).norm() / k.powi(3))
        .fold(0.0, f64::max);
    Ok(BranchFit { speed, second_order: second, cubic_bound })
}

/// Most positive real part of the spectrum of -ik xi1 + Op, excluding the
/// `n_tracked` smallest-modulus eigenvalues when |k| <= kappa0.
pub fn spectral_gap(op: &CollisionOperator, k: f64, n_tracked: usize, kappa0: f64) -> Result<f64> {
    sector_gap(&Sector::axial(op)?, k, n_tracked, kappa0)
}

pub fn sector_gap(sector: &Sector, k: f64, n_tracked: usize, kappa0: f64) -> Result<f64> {
    let (vals, _) = eigen(&sector.generator(k))?;
    let skip = if k.abs() <= kappa0 { smallest(&vals, n_tracked) } else { Vec::new() };
    Ok((0..vals.len()).filter(|i| !skip.contains(i)).map(|i| vals[i].re).fold(f64::NEG_INFINITY, f64::max))
}

/// Small-eigenvalue window and long-wave threshold of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongWaveThreshold {
    pub delta: f64,
    pub kappa0: f64,
}

/// delta = half the k = 0 gap; kappa0 = largest k with exactly `n_tracked` eigenvalues in |sigma| < delta.
pub fn long_wave_threshold(op: &CollisionOperator, n_tracked: usize) -> Result<LongWaveThreshold> {
    let sector = Sector::axial(op)?;
    let gap0 = sector_gap(&sector, 0.0, n_tracked, 0.0_f64.max(1.0))?;
    let delta = 0.5 * gap0.abs();
    let count = |k: f64| -> Result<usize> {
        let (vals, _) = eigen(&sector.generator(k))?;
        Ok(vals.iter().filter(|s| s.norm() < delta).count())
    };
    let mut lo = 0.0;
    let mut hi = 0.1;
    let mut grow = 0;
    while count(hi)? == n_tracked {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 12 {
            return Ok(LongWaveThreshold { delta, kappa0: f64::INFINITY });
        }
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if count(mid)? == n_tracked {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(LongWaveThreshold { delta, kappa0: lo })
}

/// Second derivative at k = 0 of the single AB branch by a five-point difference with step h.
pub fn diffusion_curvature(op_ab: &CollisionOperator, h: f64) -> Result<f64> {
    let sector = Sector::axial(op_ab)?;
    let br = sector_branches(&sector, &[h, 2.0 * h], 1)?;
    let (l1, l2) = (br[0].eigenvalues[0].re, br[0].eigenvalues[1].re);
    // even branch with lambda(0) = 0
    Ok((32.0 * l1 - 2.0 * l2) / (12.0 * h * h))
}

/// Estimated mixing coefficients from tracked eigenvectors at +-h: estimate[k][j] ~ epsilon[k][j].
pub fn mixing_from_branches(op_bb: &CollisionOperator, basis: &FluidBasis, h: f64) -> Result<[[Complex; 3]; 3]> {
    let sector = Sector::axial(op_bb)?;
    let br = sector_branches(&sector, &[h], 3)?;
    let e: Vec<Vec<Complex>> =
        basis.e.iter().map(|f| sector.coords(f).into_iter().map(|x| Complex::new(x, 0.0)).collect()).collect();
    let mut out = [[Complex::new(0.0, 0.0); 3]; 3];
    for k in 0..3 {
        let v = &br[k].eigenvectors[0];
        let p = cdot(&e[k], v);
        let rot = p.conj() / p.norm();
        let v: Vec<Complex> = v.iter().map(|z| z * rot / p.norm()).collect();
        for j in 0..3 {
            if j != k {
                // the generator at -h is the conjugate one, so the odd part is i Im
                out[k][j] = Complex::new(0.0, cdot(&e[j], &v).im / h);
            }
        }
    }
    Ok(out)
}

/// Largest |(f, g)| of real functions; convenience for reports.
pub fn real_inner(f: &GridFunction<Real>, g: &GridFunction<Real>) -> Result<f64> {
    inner_product(f, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, weighted_sup_norm, GridSpec, MixtureConfig};
    use crate::operator::assemble_operator;

    fn grid(nr: usize, nt: usize) -> (MixtureConfig, GridRef) {
        let cfg = MixtureConfig::default();
        (cfg.clone(), build_grid(&cfg, GridSpec::AxisymM0 { n_radial: nr, n_polar: nt }).unwrap())
    }

    #[test]
    fn fluid_basis_is_orthonormal_with_euler_speeds() {
        let (cfg, g) = grid(8, 6);
        let b = fluid_modes(&g, cfg.mass_ratio()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = inner_product(&b.e[i], &b.e[j]).unwrap();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let s = macro_speeds(&b).unwrap();
        for (x, y) in s.iter().zip(euler_speeds()) {
            assert!((x - y).abs() < 1e-10, "{s:?}");
        }
        let m = euler_matrix(&b).unwrap();
        for i in 0..3 {
            assert!((m[i][i] - b.lambda[i]).abs() < 1e-10);
        }
        // E_2 is the printed combination, up to its normalization sqrt(3/5)
        let e2 = b.chi(0).unwrap().scaled(-(2.0f64 / 3.0).sqrt()).add_scaled(1.0, b.chi(4).unwrap()).unwrap();
        let diff = e2.scaled((0.6f64).sqrt()).add_scaled(-1.0, &b.e[1]).unwrap();
        assert!(diff.norm() < 1e-14);
        assert!((b.e_d.norm() - 1.0).abs() < 1e-14);
        assert!(weighted_sup_norm(&b.e_d) > 0.0);
    }

    #[test]
    fn equal_mass_diffusion_mode_has_unit_norm() {
        let cfg = MixtureConfig::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let g = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: 8, n_polar: 6 }).unwrap();
        let b = fluid_modes(&g, 1.0).unwrap();
        assert!((b.e_d_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projections_are_complementary() {
        let (cfg, g) = grid(8, 6);
        let b = fluid_modes(&g, cfg.mass_ratio()).unwrap();
        let f = GridFunction::from_fn(&g, |p| (1.0 + p[0] + 0.3 * p[1] * p[1]) * (-0.3 * (p[0] * p[0] + p[1] * p[1])).exp());
        let p0 = project(&f, Projection::P0, &b).unwrap();
        let p1 = project(&f, Projection::P1, &b).unwrap();
        assert!((f.norm().powi(2) - p0.norm().powi(2) - p1.norm().powi(2)).abs() < 1e-12);
        assert!(project(&b.e_d, Projection::P1D, &b).unwrap().norm() < 1e-14);
        assert!(project(&b.e_d, Projection::P0D, &b).unwrap().add_scaled(-1.0, &b.e_d).unwrap().norm() < 1e-14);
    }

    #[test]
    fn micro_inverse_and_coefficients() {
        let (cfg, g) = grid(12, 8);
        let b = fluid_modes(&g, cfg.mass_ratio()).unwrap();
        let bb = assemble_operator(Pair::Bb, &g, &cfg).unwrap();
        let ab = assemble_operator(Pair::Ab, &g, &cfg).unwrap();
        let r = project(&b.e[0].mul_fn(|p| p[0]), Projection::P1, &b).unwrap();
        let x = invert_on_micro(&bb, &b, &r).unwrap();
        assert!(bb.apply(&x).unwrap().add_scaled(-1.0, &r).unwrap().norm() < 1e-8);
        assert_eq!(invert_on_micro(&bb, &b, &GridFunction::zeros(&g)).unwrap().norm(), 0.0);
        let a = ns_coefficients(&bb, &b).unwrap();
        assert!(a.iter().all(|v| *v < 0.0));
        assert!(((a[0] - a[2]) / a[0]).abs() < 1e-8, "{a:?}");
        let a2 = diffusion_coefficient(&ab, &b).unwrap();
        assert!(a2 > 0.0);
        let bad = b.e_d.clone();
        assert!(invert_on_micro(&ab, &b, &bad).is_err());
        // e_D'(0) is odd in xi1
        let t = transport_coefficients(&bb, &ab, &b).unwrap();
        let v = t.ed_prime.values();
        let even: f64 = (0..g.len()).map(|i| (v[i] + v[g.reflect_xi1(i)]).norm()).fold(0.0, f64::max);
        assert!(even < 1e-10 * v.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn dispersion_branches_follow_the_expansion() {
        let (cfg, g) = grid(12, 8);
        let b = fluid_modes(&g, cfg.mass_ratio()).unwrap();
        let bb = assemble_operator(Pair::Bb, &g, &cfg).unwrap();
        let a = ns_coefficients(&bb, &b).unwrap();
        let ks: Vec<f64> = (0..13).map(|i| 1e-3 * 10f64.powf(i as f64 / 6.0)).collect();
        let branches = dispersion_branches(&bb, &ks, 3).unwrap();
        for (j, br) in branches.iter().enumerate() {
            let (lk, le): (Vec<f64>, Vec<f64>) = br
                .k_values
                .iter()
                .zip(&br.eigenvalues)
                .map(|(&k, &s)| (k.ln(), (s - Complex::new(a[j] * k * k, -b.lambda[j] * k)).norm().ln()))
                .unzip();
            let slope = crate::fit::linear_fit(&lk, &le).unwrap().slope;
            assert!(slope >= 2.7, "branch {j}: slope {slope}");
            for w in br.eigenvectors.windows(2) {
                assert!(cdot(&w[0], &w[1]).norm() >= 0.9);
            }
            let fit = fit_branch(br, 0.05).unwrap();
            assert!(((fit.second_order - a[j]) / a[j]).abs() <= 1e-3, "{fit:?} vs {}", a[j]);
            assert!((fit.speed - b.lambda[j]).abs() <= 1e-6);
        }
        let sector = Sector::axial(&bb).unwrap();
        for k in [0.0, 0.3, 2.0] {
            let (vals, _) = eigen(&sector.generator(k)).unwrap();
            assert!(vals.iter().all(|s| s.re <= 1e-10));
        }
    }

    #[test]
    fn diffusion_branch_and_gaps() {
        let (cfg, g) = grid(12, 8);
        let b = fluid_modes(&g, cfg.mass_ratio()).unwrap();
        let bb = assemble_operator(Pair::Bb, &g, &cfg).unwrap();
        let ab = assemble_operator(Pair::Ab, &g, &cfg).unwrap();
        let a2 = diffusion_coefficient(&ab, &b).unwrap();
        let ks: Vec<f64> = (1..=8).map(|i| 0.01 * i as f64).collect();
        let br = &dispersion_branches(&ab, &ks, 1).unwrap()[0];
        let fit = fit_branch(br, 0.08).unwrap();
        assert!(fit.speed.abs() <= 1e-6, "{fit:?}");
        let curv = diffusion_curvature(&ab, 0.05).unwrap();
        assert!((curv + 2.0 * a2).abs() <= 1e-3 * 2.0 * a2, "{curv} vs {a2}");

        // BB gap at k = 0 is the largest nonzero eigenvalue of L
        let (vals, _) = sym_eigen(Sector::axial(&bb).unwrap().matrix()).unwrap();
        let mut vals = vals.to_vec();
        vals.sort_by(|x, y| y.total_cmp(x));
        let gap0 = spectral_gap(&bb, 0.0, 3, 1.0).unwrap();
        assert!((gap0 - vals[3]).abs() <= 1e-10 && gap0 < 0.0);
        for k in [0.2, 0.7, 1.6] {
            let (p, m) = (spectral_gap(&bb, k, 3, 0.4).unwrap(), spectral_gap(&bb, -k, 3, 0.4).unwrap());
            assert!((p - m).abs() <= 1e-10, "{k}: {p} {m}");
        }

        for (op, n) in [(&bb, 3), (&ab, 1)] {
            let th = long_wave_threshold(op, n).unwrap();
            assert!(th.kappa0.is_finite() && th.kappa0 > 0.0 && th.delta > 0.0);
            let sector = Sector::axial(op).unwrap();
            let (vals, _) = eigen(&sector.generator(0.99 * th.kappa0)).unwrap();
            assert_eq!(vals.iter().filter(|s| s.norm() < th.delta).count(), n);
            let gap = spectral_gap(op, 0.5, n, th.kappa0).unwrap();
            assert!(gap < 0.0, "{gap}");
        }
    }

    #[test]
    fn mixing_coefficients_match_tracked_eigenvectors() {
        let (cfg, g) = grid(12, 8);
        let b = fluid_modes(&g, cfg.mass_ratio()).unwrap();
        let bb = assemble_operator(Pair::Bb, &g, &cfg).unwrap();
        let ab = assemble_operator(Pair::Ab, &g, &cfg).unwrap();
        let t = transport_coefficients(&bb, &ab, &b).unwrap();
        let est = mixing_from_branches(&bb, &b, 1e-3).unwrap();
        for k in 0..3 {
            for j in (0..3).filter(|&j| j != k) {
                let (e, f) = (t.epsilon[k][j], est[k][j]);
                assert!((e - f).norm() <= 1e-2 * e.norm(), "eps[{k}][{j}]: {e} vs {f}");
            }
        }
    }

    #[test]
    fn diffusion_coefficient_scales_with_cross_section() {
        let a2 = |sigma_ab: f64| {
            let cfg = MixtureConfig::new(2.0, 1.0, 1.0, sigma_ab, 1.0).unwrap();
            let g = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: 10, n_polar: 6 }).unwrap();
            let b = fluid_modes(&g, cfg.mass_ratio()).unwrap();
            diffusion_coefficient(&assemble_operator(Pair::Ab, &g, &cfg).unwrap(), &b).unwrap()
        };
        let (one, two) = (a2(1.0), a2(2.0));
        assert!((two * 4.0 - one).abs() <= 1e-6 * one, "{one} {two}");
    }
}
