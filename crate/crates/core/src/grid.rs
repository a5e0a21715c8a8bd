//! Velocity-space grids, grid functions and the L2 pairing.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{KineticError, Result};
use crate::kernels::sqrt_maxwellian;
use crate::quadrature::{gauss_hermite, gauss_legendre, radial_gauss, LagrangeBasis};
use crate::{digest_hex, Complex, Real};

/// Smallest admissible number of nodes along any coordinate.
pub const MIN_NODES_PER_AXIS: usize = 5;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Physical parameters of the A/B mixture in the normalization rho_B = RT = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub m_a: f64,
    pub m_b: f64,
    pub sigma_aa: f64,
    pub sigma_ab: f64,
    pub sigma_bb: f64,
    #[serde(default = "unit")]
    pub rho_b: f64,
    #[serde(default = "unit")]
    pub rt: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for MixtureConfig {
    /// m_A = 2, m_B = 1, all radii sums 1.
    fn default() -> Self {
        Self { m_a: 2.0, m_b: 1.0, sigma_aa: 1.0, sigma_ab: 1.0, sigma_bb: 1.0, rho_b: 1.0, rt: 1.0 }
    }
}

impl MixtureConfig {
    pub fn new(m_a: f64, m_b: f64, sigma_aa: f64, sigma_ab: f64, sigma_bb: f64) -> Result<Self> {
        let cfg = Self { m_a, m_b, sigma_aa, sigma_ab, sigma_bb, rho_b: 1.0, rt: 1.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("m_a", self.m_a),
            ("m_b", self.m_b),
            ("sigma_aa", self.sigma_aa),
            ("sigma_ab", self.sigma_ab),
            ("sigma_bb", self.sigma_bb),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(KineticError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.rho_b != 1.0 || self.rt != 1.0 {
            return Err(KineticError::Config(format!(
                "background is normalized to rho_B = RT = 1, got rho_B = {}, RT = {}",
                self.rho_b, self.rt
            )));
        }
        Ok(())
    }

    /// m_A / m_B.
    pub fn mass_ratio(&self) -> f64 {
        self.m_a / self.m_b
    }

    /// Exponent of the Gaussian weight shared by all quadrature rules.
    pub fn grid_alpha(&self) -> f64 {
        self.mass_ratio().min(1.0) / 2.0
    }

    pub fn hash(&self) -> String {
        let mut bytes = Vec::with_capacity(56);
        for v in [self.m_a, self.m_b, self.sigma_aa, self.sigma_ab, self.sigma_bb, self.rho_b, self.rt] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        digest_hex(&bytes)
    }
}

/// Grid layout and resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GridSpec {
    /// Tensor Gauss–Hermite grid in (xi1, xi2, xi3).
    Full3d { n_axis: usize },
    /// Functions of (xi1, |xi_perp|): radial Gauss nodes times Gauss–Legendre nodes in cos(theta).
    AxisymM0 { n_radial: usize, n_polar: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    Full3d,
    AxisymM0,
}

impl GridSpec {
    pub fn mode(&self) -> GridMode {
        match self {
            GridSpec::Full3d { .. } => GridMode::Full3d,
            GridSpec::AxisymM0 { .. } => GridMode::AxisymM0,
        }
    }
}

#[derive(Debug, Clone)]
enum Layout {
    Full3d { axis: Vec<f64> },
    AxisymM0 { radii: Vec<f64>, radial_weights: Vec<f64>, cosines: Vec<f64>, polar_weights: Vec<f64> },
}

/// Quadrature nodes and plain-d(xi) weights in velocity space.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    spec: GridSpec,
    alpha: f64,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    id_hash: String,
    layout: Layout,
}

pub type GridRef = Arc<VelocityGrid>;

/// Builds the grid for `spec`, with Gaussian weight exponent taken from the mixture.
pub fn build_grid(config: &MixtureConfig, spec: GridSpec) -> Result<GridRef> {
    config.validate()?;
    let alpha = config.grid_alpha();
    let grid = match spec {
        GridSpec::Full3d { n_axis } => {
            check_resolution(n_axis)?;
            let (x, w) = gauss_hermite(n_axis, alpha)?;
            let w: Vec<f64> = x.iter().zip(&w).map(|(x, w)| w * (alpha * x * x).exp()).collect();
            let mut points = Vec::with_capacity(n_axis.pow(3));
            let mut weights = Vec::with_capacity(n_axis.pow(3));
            for a in 0..n_axis {
                for b in 0..n_axis {
                    for c in 0..n_axis {
                        points.push([x[a], x[b], x[c]]);
                        weights.push(w[a] * w[b] * w[c]);
                    }
                }
            }
            VelocityGrid::finish(spec, alpha, points, weights, Layout::Full3d { axis: x })
        }
        GridSpec::AxisymM0 { n_radial, n_polar } => {
            check_resolution(n_radial)?;
            check_resolution(n_polar)?;
            let (r, wr) = radial_gauss(n_radial, alpha)?;
            let wr: Vec<f64> = r.iter().zip(&wr).map(|(r, w)| w * (alpha * r * r).exp()).collect();
            let (u, wu) = gauss_legendre::<f64>(n_polar);
            let mut points = Vec::with_capacity(n_radial * n_polar);
            let mut weights = Vec::with_capacity(n_radial * n_polar);
            for (ri, wri) in r.iter().zip(&wr) {
                for (uk, wuk) in u.iter().zip(&wu) {
                    points.push([ri * uk, ri * (1.0 - uk * uk).sqrt(), 0.0]);
                    weights.push(TWO_PI * wri * wuk);
                }
            }
            let layout = Layout::AxisymM0 { radii: r, radial_weights: wr, cosines: u, polar_weights: wu };
            VelocityGrid::finish(spec, alpha, points, weights, layout)
        }
    };
    Ok(Arc::new(grid))
}

fn check_resolution(n: usize) -> Result<()> {
    if n < MIN_NODES_PER_AXIS {
        return Err(KineticError::Resolution { got: n, min: MIN_NODES_PER_AXIS });
    }
    Ok(())
}

impl VelocityGrid {
    fn finish(spec: GridSpec, alpha: f64, points: Vec<[f64; 3]>, weights: Vec<f64>, layout: Layout) -> Self {
        let mut bytes = Vec::with_capacity(32 * points.len() + 32);
        bytes.extend_from_slice(format!("{spec:?}").as_bytes());
        bytes.extend_from_slice(&alpha.to_le_bytes());
        for (p, w) in points.iter().zip(&weights) {
            for c in p {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        let id_hash = digest_hex(&bytes);
        Self { spec, alpha, points, weights, id_hash, layout }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn mode(&self) -> GridMode {
        self.spec.mode()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Gaussian weight exponent of the underlying rules.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Cartesian node; for axisym-m0 grids this is (xi1, r, 0).
    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn xi1(&self, i: usize) -> f64 {
        self.points[i][0]
    }

    pub fn speed_sq(&self, i: usize) -> f64 {
        let p = self.points[i];
        p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
    }

    pub fn speed(&self, i: usize) -> f64 {
        self.speed_sq(i).sqrt()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same nodes and weights (by content hash).
    pub fn same(&self, other: &VelocityGrid) -> bool {
        std::ptr::eq(self, other) || self.id_hash == other.id_hash
    }

    pub fn id_hash(&self) -> &str {
        &self.id_hash
    }

    /// Radial nodes and plain rho^2 d(rho) weights (axisym-m0 only).
    pub fn radial_rule(&self) -> Option<(&[f64], &[f64])> {
        match &self.layout {
            Layout::AxisymM0 { radii, radial_weights, .. } => Some((radii, radial_weights)),
            Layout::Full3d { .. } => None,
        }
    }

    /// Polar cosine nodes and weights (axisym-m0 only).
    pub fn polar_rule(&self) -> Option<(&[f64], &[f64])> {
        match &self.layout {
            Layout::AxisymM0 { cosines, polar_weights, .. } => Some((cosines, polar_weights)),
            Layout::Full3d { .. } => None,
        }
    }

    /// One-dimensional Gauss–Hermite nodes (full3d only).
    pub fn axis_nodes(&self) -> Option<&[f64]> {
        match &self.layout {
            Layout::Full3d { axis } => Some(axis),
            Layout::AxisymM0 { .. } => None,
        }
    }

    /// Index of the node mirrored by xi1 -> -xi1.
    pub fn reflect_xi1(&self, i: usize) -> usize {
        match self.spec {
            GridSpec::AxisymM0 { n_polar, .. } => {
                let (ir, k) = (i / n_polar, i % n_polar);
                ir * n_polar + (n_polar - 1 - k)
            }
            GridSpec::Full3d { n_axis } => {
                let a = i / (n_axis * n_axis);
                let rest = i % (n_axis * n_axis);
                (n_axis - 1 - a) * n_axis * n_axis + rest
            }
        }
    }

    /// Evaluates the grid representation of nodal `values` at an arbitrary velocity.
    ///
    /// Axisym-m0 functions are G(rho) p(rho) q(cos theta) with G = exp(-alpha rho^2 / 2);
    /// full3d functions are G(xi) times a tensor polynomial.
    pub fn evaluate(&self, values: &[f64], xi: [f64; 3]) -> f64 {
        let g = |s2: f64| (-0.5 * self.alpha * s2).exp();
        match &self.layout {
            Layout::AxisymM0 { radii, cosines, .. } => {
                let rho = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
                let u = if rho > 0.0 { xi[0] / rho } else { 0.0 };
                let rb = LagrangeBasis::new(radii);
                let ub = LagrangeBasis::new(cosines);
                let mut lr = vec![0.0; radii.len()];
                let mut lu = vec![0.0; cosines.len()];
                rb.eval(rho, &mut lr);
                ub.eval(u, &mut lu);
                let np = cosines.len();
                let mut acc = 0.0;
                for (i, (&li, &ri)) in lr.iter().zip(radii.iter()).enumerate() {
                    let scale = li * g(rho * rho) / g(ri * ri);
                    let row: f64 = lu.iter().zip(&values[i * np..(i + 1) * np]).map(|(a, b)| a * b).sum();
                    acc += scale * row;
                }
                acc
            }
            Layout::Full3d { axis } => {
                let basis = LagrangeBasis::new(axis);
                let n = axis.len();
                let mut l = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                for (d, ld) in l.iter_mut().enumerate() {
                    basis.eval(xi[d], ld);
                }
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            let i = (a * n + b) * n + c;
                            acc += l[0][a] * l[1][b] * l[2][c] * values[i] / g(self.speed_sq(i));
                        }
                    }
                }
                acc * g(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2])
            }
        }
    }
}

/// Field of grid values: `f64` or complex.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
    + 'static
{
    fn conj(self) -> Self;
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn scale(self, s: f64) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for Real {
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex {
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex::new(x, 0.0)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Raw point values of a velocity distribution on a grid.
#[derive(Debug, Clone)]
pub struct GridFunction<S = Real> {
    grid: GridRef,
    values: Vec<S>,
}

impl<S: Scalar> GridFunction<S> {
    pub fn new(grid: &GridRef, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(KineticError::Numerical(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(KineticError::Numerical(format!("non-finite grid value at node {i}")));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &GridRef) -> Self {
        Self { grid: grid.clone(), values: vec![S::zero(); grid.len()] }
    }

    pub fn from_fn(grid: &GridRef, f: impl Fn([f64; 3]) -> S) -> Self {
        Self { grid: grid.clone(), values: grid.points().iter().map(|&p| f(p)).collect() }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &GridRef) -> bool {
        self.grid.same(other)
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(v, w)| w * v.modulus().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, s: S) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| s * v).collect() }
    }

    /// self + a * other.
    pub fn add_scaled(&self, a: S, other: &Self) -> Result<Self> {
        if !self.same_grid(other.grid()) {
            return Err(KineticError::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| x + a * y).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// Pointwise product with a real function of the node.
    pub fn mul_fn(&self, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(self.grid.points())
            .map(|(&v, &p)| v.scale(f(p)))
            .collect();
        Self { grid: self.grid.clone(), values }
    }
}

impl GridFunction<Real> {
    pub fn to_complex(&self) -> GridFunction<Complex> {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|&v| Complex::new(v, 0.0)).collect() }
    }
}

/// Discrete L2 pairing sum_i w_i conj(f_i) g_i.
pub fn inner_product<S: Scalar>(f: &GridFunction<S>, g: &GridFunction<S>) -> Result<S> {
    if !f.same_grid(g.grid()) {
        return Err(KineticError::GridMismatch);
    }
    let mut acc = S::zero();
    for ((&a, &b), &w) in f.values.iter().zip(&g.values).zip(f.grid.weights()) {
        acc += (a.conj() * b).scale(w);
    }
    Ok(acc)
}

/// max_i |f_i| (1 + |xi_i|)^3.
pub fn weighted_sup_norm<S: Scalar>(f: &GridFunction<S>) -> f64 {
    f.values
        .iter()
        .enumerate()
        .map(|(i, v)| v.modulus() * (1.0 + f.grid.speed(i)).powi(3))
        .fold(0.0, f64::max)
}

/// Removes the components along xi2 sqrt(M_B) and xi3 sqrt(M_B).
///
/// Axisym-m0 functions carry no such components and are returned unchanged.
pub fn restrict_subspace<S: Scalar>(f: &GridFunction<S>) -> Result<GridFunction<S>> {
    if f.grid.mode() == GridMode::AxisymM0 {
        return Ok(f.clone());
    }
    let mut out = f.clone();
    for axis in [1usize, 2] {
        let dir = GridFunction::<S>::from_fn(&f.grid, |p| S::from_real(p[axis] * sqrt_maxwellian(p, 1.0)));
        let nrm2 = dir.norm().powi(2);
        let c = inner_product(&dir, &out)?;
        out = out.add_scaled(-c.scale(1.0 / nrm2), &dir)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::maxwellian;
    use proptest::prelude::*;

    fn default_grid(spec: GridSpec) -> GridRef {
        build_grid(&MixtureConfig::default(), spec).unwrap()
    }

    #[test]
    fn full3d_maxwellian_mass_and_odd_moment() {
        let g = default_grid(GridSpec::Full3d { n_axis: 9 });
        let m = GridFunction::from_fn(&g, |p| maxwellian(p, 1.0));
        let mass: f64 = m.values().iter().zip(g.weights()).map(|(v, w)| v * w).sum();
        assert!((mass - 1.0).abs() < 1e-12, "{mass}");
        let odd: f64 = (0..g.len()).map(|i| g.weights()[i] * g.xi1(i) * m.values()[i]).sum();
        assert!(odd.abs() < 1e-14, "{odd}");
    }

    #[test]
    fn axisym_second_moment() {
        let g = default_grid(GridSpec::AxisymM0 { n_radial: 32, n_polar: 16 });
        let s: f64 = (0..g.len()).map(|i| g.weights()[i] * g.xi1(i).powi(2) * maxwellian(g.point(i), 1.0)).sum();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn moments_up_to_degree_four() {
        // int xi1^a |xi|^2b M_B for the closed forms of a unit Gaussian
        for spec in [GridSpec::Full3d { n_axis: 7 }, GridSpec::AxisymM0 { n_radial: 8, n_polar: 6 }] {
            let g = default_grid(spec);
            let q = |f: &dyn Fn([f64; 3]) -> f64| -> f64 {
                (0..g.len()).map(|i| g.weights()[i] * f(g.point(i)) * maxwellian(g.point(i), 1.0)).sum()
            };
            let s2 = |p: [f64; 3]| p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            let cases: [(&dyn Fn([f64; 3]) -> f64, f64); 6] = [
                (&|_| 1.0, 1.0),
                (&|p| p[0], 0.0),
                (&|p| p[0] * p[0], 1.0),
                (&|p| s2(p), 3.0),
                (&|p| p[0].powi(4), 3.0),
                (&|p| s2(p) * s2(p), 15.0),
            ];
            for (f, exact) in cases {
                assert!((q(f) - exact).abs() < 1e-10, "{spec:?}: {} vs {exact}", q(f));
            }
        }
    }

    #[test]
    fn rejects_coarse_grids_and_bad_parameters() {
        let cfg = MixtureConfig::default();
        assert!(matches!(build_grid(&cfg, GridSpec::Full3d { n_axis: 4 }), Err(KineticError::Resolution { .. })));
        assert!(MixtureConfig::new(-1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        let mut bad = cfg.clone();
        bad.rt = 2.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sup_norm_examples() {
        let g = default_grid(GridSpec::AxisymM0 { n_radial: 6, n_polar: 5 });
        let f = GridFunction::from_fn(&g, |p| (1.0 + (p[0] * p[0] + p[1] * p[1]).sqrt()).powi(-3));
        assert!((weighted_sup_norm(&f) - 1.0).abs() < 1e-14);
        assert_eq!(weighted_sup_norm(&GridFunction::<f64>::zeros(&g)), 0.0);
    }

    #[test]
    fn restriction_removes_transverse_momentum() {
        let g = default_grid(GridSpec::Full3d { n_axis: 7 });
        let chi2 = GridFunction::from_fn(&g, |p| p[1] * sqrt_maxwellian(p, 1.0));
        assert!(restrict_subspace(&chi2).unwrap().norm() < 1e-14);
        let chi4 = GridFunction::from_fn(&g, |p| {
            (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - 3.0) / 6f64.sqrt() * sqrt_maxwellian(p, 1.0)
        });
        let r = restrict_subspace(&chi4).unwrap();
        assert!(r.add_scaled(-1.0, &chi4).unwrap().norm() < 1e-15);
        // an axisymmetric function lifted to the Cartesian grid is already restricted
        let lifted = GridFunction::from_fn(&g, |p| {
            let perp = (p[1] * p[1] + p[2] * p[2]).sqrt();
            (1.0 + p[0] + perp * perp) * sqrt_maxwellian(p, 2.0)
        });
        let r = restrict_subspace(&lifted).unwrap();
        assert!(r.add_scaled(-1.0, &lifted).unwrap().norm() < 1e-14);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = default_grid(GridSpec::AxisymM0 { n_radial: 6, n_polar: 5 });
        let b = default_grid(GridSpec::AxisymM0 { n_radial: 7, n_polar: 5 });
        let f = GridFunction::<f64>::zeros(&a);
        let g = GridFunction::<f64>::zeros(&b);
        assert!(matches!(inner_product(&f, &g), Err(KineticError::GridMismatch)));
    }

    #[test]
    fn m0_evaluation_reproduces_nodes_and_gaussians() {
        let g = default_grid(GridSpec::AxisymM0 { n_radial: 10, n_polar: 6 });
        let f = GridFunction::from_fn(&g, |p| (1.0 + p[0]) * sqrt_maxwellian(p, 1.0));
        assert!((g.evaluate(f.values(), g.point(7)) - f.values()[7]).abs() < 1e-14);
        let xi = [0.3, 0.8, -0.4];
        let exact = (1.0 + xi[0]) * sqrt_maxwellian(xi, 1.0);
        assert!((g.evaluate(f.values(), xi) - exact).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn pairing_is_positive_and_conjugate_symmetric(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let g = default_grid(GridSpec::AxisymM0 { n_radial: 6, n_polar: 5 });
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || GridFunction::new(&g, (0..g.len())
                .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()).unwrap();
            let f = draw();
            let h = draw();
            let fh = inner_product(&f, &h).unwrap();
            let hf = inner_product(&h, &f).unwrap();
            prop_assert!((fh - hf.conj()).norm() < 1e-12);
            let ff = inner_product(&f, &f).unwrap();
            prop_assert!(ff.re > 0.0 && ff.im.abs() < 1e-14);
        }

        #[test]
        fn restriction_is_an_orthogonal_projection(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let g = default_grid(GridSpec::Full3d { n_axis: 5 });
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || GridFunction::new(&g, (0..g.len())
                .map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()).unwrap();
            let f = draw();
            let h = draw();
            let pf = restrict_subspace(&f).unwrap();
            let ppf = restrict_subspace(&pf).unwrap();
            prop_assert!(ppf.add_scaled(-1.0, &pf).unwrap().norm() < 1e-12 * f.norm());
            let ph = restrict_subspace(&h).unwrap();
            let lhs = inner_product(&pf, &h).unwrap();
            let rhs = inner_product(&f, &ph).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * f.norm() * h.norm());
        }
    }
}
