//! Dense discrete collision operators `(Op f)_i = -nu_i f_i + sum_j K_ij w_j f_j`.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KineticError, Result};
use crate::grid::{inner_product, GridFunction, GridMode, GridRef, MixtureConfig, Scalar};
use crate::kernels::{nu_ab, nu_bb, sqrt_maxwellian};
use crate::linalg::{sym_eigen, RMat};
use crate::oracle3d;
use crate::radial::{nodal_matrix, radial_blocks, PairKernel, RadialSettings};

/// Largest operator dimension assembled on axisym-m0 grids.
pub const PRODUCTION_SIZE_CAP: usize = 1000;
/// Largest operator dimension assembled on full3d grids.
pub const ORACLE_SIZE_CAP: usize = 2500;
/// Default Gauss order per panel of the cross-operator inner integral.
pub const DEFAULT_ANGULAR_ORDER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pair {
    Bb,
    Ab,
    Ba,
}

impl Pair {
    pub fn tag(&self) -> u8 {
        match self {
            Pair::Bb => 0,
            Pair::Ab => 1,
            Pair::Ba => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        [Pair::Bb, Pair::Ab, Pair::Ba].into_iter().find(|p| p.tag() == tag)
    }
}

/// Representation of the cross operator's action between grid functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Radial cardinals times Legendre polynomials in cos(theta), the grid's own basis.
    #[default]
    RadialLegendre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMetadata {
    pub angular_order: Option<usize>,
    pub config_hash: String,
    pub grid_hash: String,
    /// min_i nu_i / (1 + |xi_i|); zero for the purely integral operator.
    pub nu0: f64,
}

#[derive(Debug, Clone)]
pub struct CollisionOperator {
    pair: Pair,
    grid: GridRef,
    nu: Vec<f64>,
    kernel: RMat,
    metadata: OperatorMetadata,
}

/// Quadrature and size settings for assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblySettings {
    pub radial: RadialSettings,
    pub production_cap: usize,
    pub oracle_cap: usize,
}

impl Default for AssemblySettings {
    fn default() -> Self {
        Self { radial: RadialSettings::default(), production_cap: PRODUCTION_SIZE_CAP, oracle_cap: ORACLE_SIZE_CAP }
    }
}

impl CollisionOperator {
    /// Validates and wraps raw parts.
    pub fn from_parts(pair: Pair, grid: GridRef, nu: Vec<f64>, kernel: RMat, metadata: OperatorMetadata) -> Result<Self> {
        let n = grid.len();
        if nu.len() != n || kernel.nrows() != n || kernel.ncols() != n {
            return Err(KineticError::GridMismatch);
        }
        if metadata.grid_hash != grid.id_hash() {
            return Err(KineticError::GridMismatch);
        }
        if !nu.iter().all(|v| v.is_finite()) || !kernel.norm_max().is_finite() {
            return Err(KineticError::Numerical("non-finite operator entry".into()));
        }
        Ok(Self { pair, grid, nu, kernel, metadata })
    }

    /// Wraps a nodal matrix `A` with `(Op f)_i = sum_j A_ij f_j`.
    ///
    /// For symmetric pairs the weighted form is symmetrized, so `K` is exactly symmetric.
    pub fn from_nodal(pair: Pair, grid: GridRef, nu: Vec<f64>, nodal: &RMat, metadata: OperatorMetadata) -> Result<Self> {
        let n = grid.len();
        if nodal.nrows() != n || nodal.ncols() != n || nu.len() != n {
            return Err(KineticError::GridMismatch);
        }
        let w = grid.weights();
        let kernel = match pair {
            Pair::Ba => Mat::from_fn(n, n, |i, j| nodal[(i, j)] / w[j]),
            Pair::Bb | Pair::Ab => {
                let sq: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
                let h = |i: usize, j: usize| nodal[(i, j)] * sq[i] / sq[j];
                Mat::from_fn(n, n, |i, j| {
                    let s = 0.5 * (h(i, j) + h(j, i)) + if i == j { nu[i] } else { 0.0 };
                    s / (sq[i] * sq[j])
                })
            }
        };
        Self::from_parts(pair, grid, nu, kernel, metadata)
    }

    pub fn pair(&self) -> Pair {
        self.pair
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn kernel_matrix(&self) -> &RMat {
        &self.kernel
    }

    pub fn metadata(&self) -> &OperatorMetadata {
        &self.metadata
    }

    /// `A` with `(Op f)_i = sum_j A_ij f_j`.
    pub fn nodal_matrix(&self) -> RMat {
        let w = self.grid.weights();
        Mat::from_fn(self.dim(), self.dim(), |i, j| {
            self.kernel[(i, j)] * w[j] - if i == j { self.nu[i] } else { 0.0 }
        })
    }

    /// `W^{1/2} A W^{-1/2}`, symmetric for the BB and AB pairs.
    pub fn weighted_matrix(&self) -> RMat {
        let sq: Vec<f64> = self.grid.weights().iter().map(|x| x.sqrt()).collect();
        Mat::from_fn(self.dim(), self.dim(), |i, j| {
            self.kernel[(i, j)] * sq[i] * sq[j] - if i == j { self.nu[i] } else { 0.0 }
        })
    }

    /// Same operator multiplied by `s` (the kernel and frequency scale together).
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.nu.iter_mut().for_each(|v| *v *= s);
        out.kernel = Mat::from_fn(self.dim(), self.dim(), |i, j| self.kernel[(i, j)] * s);
        out
    }

    /// `P Op P` with `P` the orthogonal projection onto the complement of `kernel`.
    ///
    /// Removes the discretization residual of the null space exactly; used for evolution.
    pub fn compress(&self, kernel: &[GridFunction]) -> Result<Self> {
        let n = self.dim();
        let sq: Vec<f64> = self.grid.weights().iter().map(|x| x.sqrt()).collect();
        let mut q: Vec<Vec<f64>> = Vec::new();
        for f in kernel {
            if !f.same_grid(&self.grid) {
                return Err(KineticError::GridMismatch);
            }
            let mut v: Vec<f64> = f.values().iter().zip(&sq).map(|(x, s)| x * s).collect();
            for _ in 0..2 {
                for u in &q {
                    let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
                }
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            q.push(v.iter().map(|x| x / nv).collect());
        }
        let p = Mat::from_fn(n, n, |i, j| {
            let s: f64 = q.iter().map(|u| u[i] * u[j]).sum();
            if i == j { 1.0 - s } else { -s }
        });
        let h = &p * self.weighted_matrix() * &p;
        let nodal = Mat::from_fn(n, n, |i, j| h[(i, j)] / sq[i] * sq[j]);
        Self::from_nodal(self.pair, self.grid.clone(), self.nu.clone(), &nodal, self.metadata.clone())
    }

    pub fn apply<S: Scalar>(&self, f: &GridFunction<S>) -> Result<GridFunction<S>> {
        if !f.same_grid(&self.grid) {
            return Err(KineticError::GridMismatch);
        }
        let w = self.grid.weights();
        let wf: Vec<S> = f.values().iter().zip(w).map(|(&v, &wj)| v.scale(wj)).collect();
        let n = self.dim();
        let mut out = vec![S::zero(); n];
        for j in 0..n {
            let col = self.kernel.col(j);
            let x = wf[j];
            for (i, o) in out.iter_mut().enumerate() {
                *o += x.scale(col[i]);
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += (-f.values()[i]).scale(self.nu[i]);
        }
        GridFunction::new(&self.grid, out)
    }
}

pub fn apply_operator<S: Scalar>(op: &CollisionOperator, f: &GridFunction<S>) -> Result<GridFunction<S>> {
    op.apply(f)
}

fn metadata(config: &MixtureConfig, grid: &GridRef, nu: &[f64], angular_order: Option<usize>) -> OperatorMetadata {
    let nu0 = (0..grid.len()).map(|i| nu[i] / (1.0 + grid.speed(i))).fold(f64::INFINITY, f64::min);
    OperatorMetadata {
        angular_order,
        config_hash: config.hash(),
        grid_hash: grid.id_hash().to_string(),
        nu0: if nu0.is_finite() { nu0 } else { 0.0 },
    }
}

fn check_size(grid: &GridRef, settings: &AssemblySettings) -> Result<()> {
    let cap = match grid.mode() {
        GridMode::AxisymM0 => settings.production_cap,
        GridMode::Full3d => settings.oracle_cap,
    };
    if grid.len() > cap {
        return Err(KineticError::TooLarge { dim: grid.len(), cap });
    }
    Ok(())
}

/// Assembles L (pair BB) or L_AB (pair AB) with default settings.
pub fn assemble_operator(pair: Pair, grid: &GridRef, config: &MixtureConfig) -> Result<CollisionOperator> {
    assemble_operator_with(pair, grid, config, &AssemblySettings::default())
}

pub fn assemble_operator_with(
    pair: Pair,
    grid: &GridRef,
    config: &MixtureConfig,
    settings: &AssemblySettings,
) -> Result<CollisionOperator> {
    config.validate()?;
    check_size(grid, settings)?;
    let kernel = match pair {
        Pair::Bb => PairKernel::Bb { sigma: config.sigma_bb },
        Pair::Ab => PairKernel::Ab { sigma: config.sigma_ab, mass_ratio: config.mass_ratio() },
        Pair::Ba => {
            return Err(KineticError::Config("the BA operator is assembled by assemble_lba".into()));
        }
    };
    let nu: Vec<f64> = grid
        .points()
        .iter()
        .map(|&p| if pair == Pair::Bb { nu_bb(p, config) } else { nu_ab(p, config) })
        .collect();
    let nodal = match grid.mode() {
        GridMode::AxisymM0 => {
            let blocks = radial_blocks(grid, &kernel, &settings.radial)?;
            nodal_matrix(grid, &blocks, true)?
        }
        GridMode::Full3d => oracle3d::collocation_matrix(grid, &kernel, &nu)?,
    };
    let meta = metadata(config, grid, &nu, None);
    CollisionOperator::from_nodal(pair, grid.clone(), nu, &nodal, meta)
}

/// Assembles the cross operator L_BA on an axisym-m0 grid.
pub fn assemble_lba(
    grid: &GridRef,
    config: &MixtureConfig,
    angular_order: usize,
    interp: Interpolation,
) -> Result<CollisionOperator> {
    assemble_lba_with(grid, config, angular_order, interp, &AssemblySettings::default())
}

pub fn assemble_lba_with(
    grid: &GridRef,
    config: &MixtureConfig,
    angular_order: usize,
    interp: Interpolation,
    settings: &AssemblySettings,
) -> Result<CollisionOperator> {
    config.validate()?;
    check_size(grid, settings)?;
    if angular_order < 2 {
        return Err(KineticError::Config(format!("angular order must be at least 2, got {angular_order}")));
    }
    let Interpolation::RadialLegendre = interp;
    if grid.mode() != GridMode::AxisymM0 {
        return Err(KineticError::Config("the BA operator is assembled on axisym-m0 grids only".into()));
    }
    let kernel = PairKernel::Ba { sigma: config.sigma_ab, mass_ratio: config.mass_ratio(), order: angular_order };
    let radial = RadialSettings { moment_points: 32, ..settings.radial };
    let blocks = radial_blocks(grid, &kernel, &radial)?;
    let nodal = nodal_matrix(grid, &blocks, false)?;
    let nu = vec![0.0; grid.len()];
    let meta = metadata(config, grid, &nu, Some(angular_order));
    CollisionOperator::from_nodal(Pair::Ba, grid.clone(), nu, &nodal, meta)
}

/// The five collision invariants chi_0..chi_4 of the background gas, those representable on the grid.
pub fn background_invariants(grid: &GridRef) -> Vec<(&'static str, GridFunction)> {
    let m = |p: [f64; 3]| sqrt_maxwellian(p, 1.0);
    let mut out = vec![
        ("chi0", GridFunction::from_fn(grid, m)),
        ("chi1", GridFunction::from_fn(grid, move |p| p[0] * m(p))),
    ];
    if grid.mode() == GridMode::Full3d {
        out.push(("chi2", GridFunction::from_fn(grid, move |p| p[1] * m(p))));
        out.push(("chi3", GridFunction::from_fn(grid, move |p| p[2] * m(p))));
    }
    out.push((
        "chi4",
        GridFunction::from_fn(grid, move |p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - 3.0) / 6f64.sqrt() * m(p)),
    ));
    out
}

/// sqrt(M_A), normalized to unit discrete norm.
pub fn diffusion_mode(grid: &GridRef, mass_ratio: f64) -> GridFunction {
    let f = GridFunction::from_fn(grid, |p| sqrt_maxwellian(p, mass_ratio));
    let n = f.norm();
    f.scaled(1.0 / n)
}

/// Candidate null vectors of the operator: collision invariants for BB, sqrt(M_A) otherwise.
pub fn null_candidates(op: &CollisionOperator, config: &MixtureConfig) -> Vec<(&'static str, GridFunction)> {
    match op.pair() {
        Pair::Bb => background_invariants(op.grid()),
        Pair::Ab | Pair::Ba => vec![("E_D", diffusion_mode(op.grid(), config.mass_ratio()))],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDiagnostics {
    /// ||Op chi|| / ||chi|| per null-space candidate.
    pub kernel_residuals: Vec<(String, f64)>,
    /// max_ij |K_ij - K_ji| sqrt(w_i w_j).
    pub symmetry_defect: f64,
    /// max over random pairs of |(Op f, g) - (f, Op g)| / (||f|| ||g||).
    pub self_adjoint_defect: f64,
    /// Minus the most positive Rayleigh quotient on the micro space.
    pub negativity_margin: f64,
    /// Largest c with (h, Op h) <= -c (h, (1 + |xi|) h) on the micro space.
    pub coercivity: f64,
    /// max over random f of |(Op f, chi)| / (||f|| ||chi||) per candidate; empty for BA.
    pub conservation_residuals: Vec<f64>,
}

/// Orthonormal (weighted coordinates) basis of the complement of the candidates.
pub(crate) fn complement_basis(grid: &GridRef, candidates: &[GridFunction]) -> Result<RMat> {
    let n = grid.len();
    let sq: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    // orthonormalize candidates in weighted coordinates
    let mut q: Vec<Vec<f64>> = Vec::new();
    for c in candidates {
        let mut v: Vec<f64> = c.values().iter().zip(&sq).map(|(x, s)| x * s).collect();
        for _ in 0..2 {
            for u in &q {
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-12 {
            q.push(v.iter().map(|x| x / nv).collect());
        }
    }
    let proj = Mat::from_fn(n, n, |i, j| {
        let s: f64 = q.iter().map(|u| u[i] * u[j]).sum();
        if i == j { 1.0 - s } else { -s }
    });
    let (vals, vecs) = sym_eigen(&proj)?;
    let keep: Vec<usize> = (0..n).filter(|&k| vals[k] > 0.5).collect();
    Ok(Mat::from_fn(n, keep.len(), |i, c| vecs[(i, keep[c])]))
}

pub fn diagnose(op: &CollisionOperator, config: &MixtureConfig, seed: u64) -> Result<OperatorDiagnostics> {
    let grid = op.grid();
    let n = op.dim();
    let candidates = null_candidates(op, config);
    let mut kernel_residuals = Vec::new();
    for (name, c) in &candidates {
        let r = op.apply(c)?;
        kernel_residuals.push((name.to_string(), r.norm() / c.norm()));
    }
    let w = grid.weights();
    let k = op.kernel_matrix();
    let mut symmetry_defect: f64 = 0.0;
    for j in 0..n {
        for i in 0..j {
            symmetry_defect = symmetry_defect.max((k[(i, j)] - k[(j, i)]).abs() * (w[i] * w[j]).sqrt());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut self_adjoint_defect: f64 = 0.0;
    for _ in 0..20 {
        let f = random_function(grid, &mut rng);
        let g = random_function(grid, &mut rng);
        let lhs = inner_product(&op.apply(&f)?, &g)?;
        let rhs = inner_product(&f, &op.apply(&g)?)?;
        self_adjoint_defect = self_adjoint_defect.max((lhs - rhs).abs() / (f.norm() * g.norm()));
    }
    let mut conservation_residuals = vec![0.0f64; if op.pair() == Pair::Ba { 0 } else { candidates.len() }];
    for _ in 0..8 {
        let f = random_function(grid, &mut rng);
        let lf = op.apply(&f)?;
        for ((_, c), r) in candidates.iter().zip(conservation_residuals.iter_mut()) {
            *r = r.max(inner_product(&lf, c)?.abs() / (f.norm() * c.norm()));
        }
    }
    let (negativity_margin, coercivity) = if op.pair() == Pair::Ba {
        (0.0, 0.0)
    } else {
        let fns: Vec<GridFunction> = candidates.into_iter().map(|(_, c)| c).collect();
        micro_bounds(op, &fns)?
    };
    Ok(OperatorDiagnostics {
        kernel_residuals,
        symmetry_defect,
        self_adjoint_defect,
        negativity_margin: negativity_margin.max(0.0),
        coercivity: coercivity.max(0.0),
        conservation_residuals,
    })
}

/// (margin, coercivity) from eigenvalues of the weighted operator on the complement of `kernel`.
pub fn micro_bounds(op: &CollisionOperator, kernel: &[GridFunction]) -> Result<(f64, f64)> {
    let grid = op.grid();
    let q = complement_basis(grid, kernel)?;
    let h = op.weighted_matrix();
    let a = q.transpose() * &h * &q;
    let a = Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let (vals, _) = sym_eigen(&a)?;
    let margin = -vals.last().copied().unwrap_or(0.0);
    // generalized problem a x = lambda b x with b = Q^T diag(1 + |xi|) Q
    let n = grid.len();
    let d: Vec<f64> = (0..n).map(|i| 1.0 + grid.speed(i)).collect();
    let b = Mat::from_fn(q.ncols(), q.ncols(), |i, j| (0..n).map(|r| q[(r, i)] * d[r] * q[(r, j)]).sum::<f64>());
    let (bv, bu) = sym_eigen(&b)?;
    let m = bv.len();
    let b_isqrt = Mat::from_fn(m, m, |i, j| (0..m).map(|k| bu[(i, k)] * bu[(j, k)] / bv[k].sqrt()).sum::<f64>());
    let c = &b_isqrt * &a * &b_isqrt;
    let c = Mat::from_fn(m, m, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let (cv, _) = sym_eigen(&c)?;
    Ok((margin, -cv.last().copied().unwrap_or(0.0)))
}

pub(crate) fn random_function(grid: &GridRef, rng: &mut impl Rng) -> GridFunction {
    // unit-variance weighted coordinates
    let vals = grid.weights().iter().map(|w| rng.random_range(-1.0..1.0) / w.sqrt()).collect();
    GridFunction::new(grid, vals).expect("finite random values")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    fn setup(nr: usize, nt: usize) -> (MixtureConfig, GridRef) {
        let cfg = MixtureConfig::default();
        let g = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: nr, n_polar: nt }).unwrap();
        (cfg, g)
    }

    #[test]
    fn bb_operator_structure() {
        let (cfg, g) = setup(10, 6);
        let op = assemble_operator(Pair::Bb, &g, &cfg).unwrap();
        let d = diagnose(&op, &cfg, 7).unwrap();
        for (name, r) in &d.kernel_residuals {
            assert!(*r < 1e-10, "{name}: {r}");
        }
        assert_eq!(d.symmetry_defect, 0.0);
        assert_eq!(d.conservation_residuals.len(), d.kernel_residuals.len());
        assert!(d.conservation_residuals.iter().all(|r| *r < 1e-10), "{:?}", d.conservation_residuals);
        assert!(d.self_adjoint_defect < 1e-11, "{}", d.self_adjoint_defect);
        assert!(d.negativity_margin > 0.5 && d.coercivity > 0.1, "{d:?}");
        assert!(op.metadata().nu0 > 0.0);
    }

    #[test]
    fn ab_operator_annihilates_diffusion_mode() {
        let (cfg, g) = setup(12, 8);
        let op = assemble_operator(Pair::Ab, &g, &cfg).unwrap();
        let d = diagnose(&op, &cfg, 3).unwrap();
        assert!(d.kernel_residuals[0].1 < 1e-5, "{:?}", d.kernel_residuals);
        assert!(d.conservation_residuals[0] < 1e-5, "{:?}", d.conservation_residuals);
        assert!(d.negativity_margin > 0.0);
    }

    #[test]
    fn apply_matches_nodal_matrix_and_is_linear() {
        let (cfg, g) = setup(6, 5);
        let op = assemble_operator(Pair::Bb, &g, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_function(&g, &mut rng);
        let h = random_function(&g, &mut rng);
        let a = op.nodal_matrix();
        let lf = op.apply(&f).unwrap();
        for i in 0..g.len() {
            let r: f64 = (0..g.len()).map(|j| a[(i, j)] * f.values()[j]).sum();
            assert!((r - lf.values()[i]).abs() < 1e-12 * (1.0 + r.abs()));
        }
        let comb = f.scaled(2.0).add_scaled(-3.0, &h).unwrap();
        let lhs = op.apply(&comb).unwrap();
        let rhs = lf.scaled(2.0).add_scaled(-3.0, &op.apply(&h).unwrap()).unwrap();
        assert!(lhs.add_scaled(-1.0, &rhs).unwrap().norm() < 1e-13 * comb.norm());
        let other = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: 7, n_polar: 5 }).unwrap();
        assert!(matches!(op.apply(&GridFunction::<f64>::zeros(&other)), Err(KineticError::GridMismatch)));
    }

    #[test]
    fn size_cap_is_enforced() {
        let (cfg, g) = setup(6, 5);
        let settings = AssemblySettings { production_cap: 20, ..Default::default() };
        assert!(matches!(
            assemble_operator_with(Pair::Bb, &g, &cfg, &settings),
            Err(KineticError::TooLarge { dim: 30, cap: 20 })
        ));
    }

    #[test]
    fn null_residuals_converge_and_forms_are_negative() {
        let cfg = MixtureConfig::default();
        for pair in [Pair::Bb, Pair::Ab] {
            let mut last: Option<Vec<f64>> = None;
            for (nr, np) in [(6, 5), (9, 7), (12, 9)] {
                let g = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: nr, n_polar: np }).unwrap();
                let op = assemble_operator(pair, &g, &cfg).unwrap();
                let r: Vec<f64> = diagnose(&op, &cfg, 1).unwrap().kernel_residuals.iter().map(|(_, r)| *r).collect();
                if let Some(prev) = &last {
                    for (a, b) in r.iter().zip(prev) {
                        assert!(*a <= 0.5 * b || *a <= 1e-12, "{pair:?} {nr}x{np}: {a} after {b}");
                    }
                }
                last = Some(r);
                let mut rng = ChaCha8Rng::seed_from_u64(nr as u64);
                for _ in 0..50 {
                    let f = random_function(&g, &mut rng);
                    assert!(inner_product(&f, &op.apply(&f).unwrap()).unwrap() <= 1e-12 * f.norm().powi(2));
                }
            }
        }
    }

    #[test]
    fn cross_operator_parity_and_compactness() {
        let cfg = MixtureConfig::default();
        let g = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: 10, n_polar: 8 }).unwrap();
        let ba = assemble_lba(&g, &cfg, 16, Interpolation::RadialLegendre).unwrap();
        assert!(ba.nu().iter().all(|v| *v == 0.0));
        let a = ba.nodal_matrix();
        let n = g.len();
        let s: Vec<usize> = (0..n).map(|i| g.reflect_xi1(i)).collect();
        let scale = a.norm_max();
        let defect = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (a[(s[i], s[j])] - a[(i, j)]).abs()).fold(0.0, f64::max);
        assert!(defect <= 1e-12 * scale, "{defect}");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_function(&g, &mut rng);
        let odd = GridFunction::new(&g, (0..n).map(|i| f.values()[i] - f.values()[s[i]]).collect()).unwrap();
        let out = ba.apply(&odd).unwrap();
        let even = (0..n).map(|i| (out.values()[i] + out.values()[s[i]]).abs()).fold(0.0, f64::max);
        assert!(even <= 1e-12 * out.values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        // singular values decay fast
        let h = ba.weighted_matrix();
        let (vals, _) = sym_eigen(&(h.transpose() * &h)).unwrap();
        let top = vals.iter().cloned().fold(0.0, f64::max);
        let bottom = vals.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
        assert!((bottom / top).sqrt() <= 1e-6, "{}", (bottom / top).sqrt());
    }
}
