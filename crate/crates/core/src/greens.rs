//! Green's-function evolution of the linearized equations on a periodic spatial box.
//!
//! Data are smooth compactly supported bumps in x times a velocity profile. The solution is
//! propagated exactly per Fourier mode by matrix exponentials of `-i k xi1 + Op`.

use faer::Mat;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{KineticError, Result};
use crate::fit::{
    classify_tail, fit_gaussians, linear_fit, power_law, GaussianFit, LinearFit, TailClass,
};
use crate::grid::{inner_product, GridFunction, GridRef};
use crate::linalg::{expm, CMat};
use crate::operator::{CollisionOperator, Pair};
use crate::spectral::{project, FluidBasis, Projection};
use crate::{Complex, Real};

/// Largest tolerated spectrum of the datum at the cutoff wavenumber, relative to its peak.
pub const ALIASING_TOLERANCE: f64 = 1e-8;

/// Uniform periodic grid x_j = -X + j dx on [-X, X).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub half_length: f64,
    pub n: usize,
}

impl SpatialGrid {
    pub fn new(half_length: f64, n: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 1.0) || n < 8 {
            return Err(KineticError::Config(format!("spatial grid needs X > 1 and >= 8 nodes (X={half_length}, n={n})")));
        }
        Ok(Self { half_length, n })
    }

    /// Smallest even node count with spacing at most `max_dx`.
    pub fn with_spacing(half_length: f64, max_dx: f64) -> Result<Self> {
        if !(max_dx.is_finite() && max_dx > 0.0) {
            return Err(KineticError::Config(format!("invalid spacing {max_dx}")));
        }
        let n = (2.0 * half_length / max_dx).ceil() as usize;
        Self::new(half_length, n + n % 2)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Wavenumber of FFT index `m` (negative frequencies in the upper half).
    pub fn k(&self, m: usize) -> f64 {
        let dk = std::f64::consts::PI / self.half_length;
        if m <= self.n / 2 { m as f64 * dk } else { (m as f64 - self.n as f64) * dk }
    }

    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.dx()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Physical,
    Fourier,
}

/// Values over (x or k) x velocity, stored row-major by spatial index.
#[derive(Debug, Clone)]
pub struct SpatialField {
    space: SpatialGrid,
    grid: GridRef,
    t: f64,
    representation: Representation,
    values: Vec<Complex>,
    /// Pair whose evolution produced the field, if any.
    pub pair: Option<Pair>,
    /// Whether the micro projection was applied to the datum before evolution.
    pub right_projected: bool,
}

impl SpatialField {
    pub fn new(space: SpatialGrid, grid: &GridRef, t: f64, representation: Representation, values: Vec<Complex>) -> Result<Self> {
        if values.len() != space.n * grid.len() {
            return Err(KineticError::GridMismatch);
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(KineticError::Numerical("non-finite field value".into()));
        }
        Ok(Self { space, grid: grid.clone(), t, representation, values, pair: None, right_projected: false })
    }

    pub fn zeros(space: SpatialGrid, grid: &GridRef, representation: Representation) -> Self {
        let values = vec![Complex::new(0.0, 0.0); space.n * grid.len()];
        Self { space, grid: grid.clone(), t: 0.0, representation, values, pair: None, right_projected: false }
    }

    pub fn space(&self) -> &SpatialGrid {
        &self.space
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn values(&self) -> &[Complex] {
        &self.values
    }

    /// Velocity values at spatial (or spectral) index `j`.
    pub fn node(&self, j: usize) -> &[Complex] {
        let nv = self.grid.len();
        &self.values[j * nv..(j + 1) * nv]
    }

    pub fn node_function(&self, j: usize) -> GridFunction<Complex> {
        GridFunction::new(&self.grid, self.node(j).to_vec()).expect("finite values of matching length")
    }

    /// Real part at node `j`.
    pub fn node_real(&self, j: usize) -> GridFunction<Real> {
        GridFunction::new(&self.grid, self.node(j).iter().map(|c| c.re).collect()).expect("finite values")
    }

    /// Largest imaginary part relative to the largest modulus (physical form).
    pub fn imag_residue(&self) -> f64 {
        let big = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if big == 0.0 {
            return 0.0;
        }
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max) / big
    }

    /// Squared L^2_{x,xi} norm; in Fourier form via the discrete Parseval identity.
    pub fn norm_sq(&self) -> f64 {
        let w = self.grid.weights();
        let s: f64 = self.values.chunks(w.len()).map(|c| c.iter().zip(w).map(|(v, wi)| wi * v.norm_sqr()).sum::<f64>()).sum();
        match self.representation {
            Representation::Physical => self.space.dx() * s,
            Representation::Fourier => self.space.dx() * s / self.space.n as f64,
        }
    }

    fn transformed(&self, inverse: bool) -> Self {
        let n = self.space.n;
        let nv = self.grid.len();
        let mut planner = FftPlanner::<f64>::new();
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let mut out = vec![Complex::new(0.0, 0.0); n * nv];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let scale = if inverse { 1.0 / n as f64 } else { 1.0 };
        for i in 0..nv {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = self.values[j * nv + i];
            }
            fft.process(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                out[j * nv + i] = b * scale;
            }
        }
        let mut f = self.clone();
        f.values = out;
        f.representation = if inverse { Representation::Physical } else { Representation::Fourier };
        f
    }

    pub fn to_fourier(&self) -> Self {
        match self.representation {
            Representation::Fourier => self.clone(),
            Representation::Physical => self.transformed(false),
        }
    }

    pub fn to_physical(&self) -> Self {
        match self.representation {
            Representation::Physical => self.clone(),
            Representation::Fourier => self.transformed(true),
        }
    }

    /// Integral over x of (phi, field(x)) for a real velocity weight function.
    pub fn moment(&self, phi: &GridFunction) -> Result<Complex> {
        let f = self.to_fourier();
        let phic = phi.to_complex();
        let zero = f.node_function(0);
        Ok(inner_product(&phic, &zero)? * self.space.dx())
    }
}

/// Compactly supported bump exp(p - p/(1 - x^2)) with peak 1 at x = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub sharpness: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Self { sharpness: 24.0 }
    }
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        let s = 1.0 - x * x;
        if s <= 0.0 {
            return 0.0;
        }
        (self.sharpness - self.sharpness / s).exp()
    }
}

/// Separable initial datum bump(x) * profile(xi).
#[derive(Debug, Clone)]
pub struct Datum {
    pub bump: Bump,
    pub profile: GridFunction,
}

impl Datum {
    pub fn new(bump: Bump, profile: GridFunction) -> Self {
        Self { bump, profile }
    }

    pub fn at(&self, x: f64) -> GridFunction {
        self.profile.scaled(self.bump.eval(x))
    }

    pub fn field(&self, space: SpatialGrid) -> SpatialField {
        let grid = self.profile.grid();
        let mut values = Vec::with_capacity(space.n * grid.len());
        for j in 0..space.n {
            let b = self.bump.eval(space.x(j));
            values.extend(self.profile.values().iter().map(|v| Complex::new(b * v, 0.0)));
        }
        SpatialField::new(space, grid, 0.0, Representation::Physical, values).expect("finite datum")
    }

    pub fn projected(&self, which: Projection, basis: &FluidBasis) -> Result<Self> {
        Ok(Self { bump: self.bump, profile: project(&self.profile, which, basis)? })
    }
}

/// Spectrum of a field at the cutoff wavenumber relative to its peak (per-k L^2_xi norms).
pub fn aliasing_ratio(field: &SpatialField) -> f64 {
    let f = field.to_fourier();
    let w = f.grid.weights();
    let norm = |m: usize| f.node(m).iter().zip(w).map(|(v, wi)| wi * v.norm_sqr()).sum::<f64>().sqrt();
    let peak = (0..f.space.n).map(norm).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    norm(f.space.n / 2) / peak
}

pub fn check_aliasing(field: &SpatialField) -> Result<()> {
    let r = aliasing_ratio(field);
    if r > ALIASING_TOLERANCE {
        return Err(KineticError::Aliasing(r));
    }
    Ok(())
}

fn sqrt_weights(grid: &GridRef) -> Vec<f64> {
    grid.weights().iter().map(|w| w.sqrt()).collect()
}

/// `-i k diag(xi1) + Op` in weighted coordinates.
pub fn weighted_generator(op: &CollisionOperator, k: f64) -> CMat {
    let h = op.weighted_matrix();
    let grid = op.grid();
    Mat::from_fn(op.dim(), op.dim(), |i, j| {
        let d = if i == j { Complex::new(0.0, -k * grid.xi1(i)) } else { Complex::new(0.0, 0.0) };
        d + Complex::new(h[(i, j)], 0.0)
    })
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(KineticError::Config(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn mat_vec(m: &CMat, v: &[Complex]) -> Vec<Complex> {
    let mut out = vec![Complex::new(0.0, 0.0); m.nrows()];
    for (j, &x) in v.iter().enumerate() {
        if x == Complex::new(0.0, 0.0) {
            continue;
        }
        let col = m.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * x;
        }
    }
    out
}

/// exp((-i k xi1 + Op) t) applied to one Fourier coefficient.
pub fn propagate_fourier(op: &CollisionOperator, k: f64, t: f64, fhat: &GridFunction<Complex>) -> Result<GridFunction<Complex>> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(fhat.clone());
    }
    if !k.is_finite() {
        return Err(KineticError::Config(format!("non-finite wavenumber {k}")));
    }
    if !fhat.same_grid(op.grid()) {
        return Err(KineticError::GridMismatch);
    }
    let sq = sqrt_weights(op.grid());
    let y: Vec<Complex> = fhat.values().iter().zip(&sq).map(|(v, s)| v * s).collect();
    let g = weighted_generator(op, k);
    let e = expm(&Mat::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * t))?;
    let out = mat_vec(&e, &y);
    GridFunction::new(op.grid(), out.iter().zip(&sq).map(|(v, s)| v / s).collect())
}

fn check_ladder(times: &[f64]) -> Result<()> {
    for &t in times {
        check_time(t)?;
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KineticError::Config("time ladder must be non-empty and strictly increasing".into()));
    }
    Ok(())
}

/// Evolves Fourier data mode by mode: y_m(t) = exp(G(k_m) t) y_m(0) for every ladder time.
///
/// `data[d]` is laid out `[m * dim + i]` in the coordinates of `generator`. Propagators
/// are reused along the ladder by squaring when a time doubles, and the negative wavenumbers
/// take the complex conjugate propagator. Modes outside `band` evolve to zero.
pub(crate) fn evolve_modes(
    space: &SpatialGrid,
    times: &[f64],
    dim: usize,
    generator: &dyn Fn(f64) -> CMat,
    data: &[Vec<Complex>],
    band: Option<&[bool]>,
) -> Result<Vec<Vec<Vec<Complex>>>> {
    check_ladder(times)?;
    let n = space.n;
    if data.iter().any(|d| d.len() != n * dim) || band.is_some_and(|b| b.len() != n) {
        return Err(KineticError::GridMismatch);
    }
    let zero = Complex::new(0.0, 0.0);
    let mut out = vec![vec![vec![zero; n * dim]; times.len()]; data.len()];
    for m in 0..=n / 2 {
        let partner = (n - m) % n;
        let active = |idx: usize| band.is_none_or(|b| b[idx]);
        let (use_m, use_p) = (active(m), active(partner));
        if !use_m && !use_p {
            continue;
        }
        let g = generator(space.k(m));
        let mut e: Option<CMat> = None;
        let mut prev = 0.0;
        for (ti, &t) in times.iter().enumerate() {
            let step = |dt: f64| -> Result<CMat> {
                if dt == 0.0 {
                    return Ok(Mat::from_fn(dim, dim, |i, j| if i == j { Complex::new(1.0, 0.0) } else { zero }));
                }
                expm(&Mat::from_fn(dim, dim, |i, j| g[(i, j)] * dt))
            };
            let next = match &e {
                None => step(t)?,
                Some(cur) if prev > 0.0 && ((t - 2.0 * prev) / t).abs() < 1e-14 => cur * cur,
                Some(cur) => cur * step(t - prev)?,
            };
            for (d, datum) in data.iter().enumerate() {
                if use_m {
                    let y = mat_vec(&next, &datum[m * dim..(m + 1) * dim]);
                    out[d][ti][m * dim..(m + 1) * dim].copy_from_slice(&y);
                }
                if partner != m && use_p {
                    let conj: Vec<Complex> = datum[partner * dim..(partner + 1) * dim].iter().map(|v| v.conj()).collect();
                    let y = mat_vec(&next, &conj);
                    for (o, v) in out[d][ti][partner * dim..(partner + 1) * dim].iter_mut().zip(y) {
                        *o = v.conj();
                    }
                }
            }
            e = Some(next);
            prev = t;
        }
    }
    Ok(out)
}

/// Tags each FFT index as long wave (|k| <= kappa0) or short wave.
pub fn longwave_shortwave_split(space: &SpatialGrid, kappa0: f64) -> Vec<bool> {
    (0..space.n).map(|m| space.k(m).abs() <= kappa0).collect()
}

/// Which spectral band of the evolution to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Full,
    Long,
    Short,
}

fn band_mask(space: &SpatialGrid, band: Band, kappa0: f64) -> Option<Vec<bool>> {
    match band {
        Band::Full => None,
        Band::Long => Some(longwave_shortwave_split(space, kappa0)),
        Band::Short => Some(longwave_shortwave_split(space, kappa0).into_iter().map(|b| !b).collect()),
    }
}

/// Evolves several physical fields with `op`, returning Fourier fields per datum and time.
pub fn evolve_fields_fourier(
    op: &CollisionOperator,
    fields: &[SpatialField],
    times: &[f64],
    band: Band,
    kappa0: f64,
) -> Result<Vec<Vec<SpatialField>>> {
    let Some(first) = fields.first() else {
        return Ok(Vec::new());
    };
    let space = first.space;
    let grid = op.grid();
    let sq = sqrt_weights(grid);
    let dim = op.dim();
    let mut data = Vec::with_capacity(fields.len());
    for f in fields {
        if f.space != space || !f.grid.same(grid) {
            return Err(KineticError::GridMismatch);
        }
        check_aliasing(f)?;
        let four = f.to_fourier();
        let y: Vec<Complex> = four.values.chunks(dim).flat_map(|c| c.iter().zip(&sq).map(|(v, s)| v * s)).collect();
        data.push(y);
    }
    let mask = band_mask(&space, band, kappa0);
    let gen = |k: f64| weighted_generator(op, k);
    let evolved = evolve_modes(&space, times, dim, &gen, &data, mask.as_deref())?;
    let mut out = Vec::with_capacity(fields.len());
    for (f, per_time) in fields.iter().zip(evolved) {
        let mut row = Vec::with_capacity(times.len());
        for (&t, y) in times.iter().zip(per_time) {
            let vals: Vec<Complex> = y.chunks(dim).flat_map(|c| c.iter().zip(&sq).map(|(v, s)| v / s)).collect();
            let mut field = SpatialField::new(space, grid, t, Representation::Fourier, vals)?;
            field.pair = Some(op.pair());
            field.right_projected = f.right_projected;
            row.push(field);
        }
        out.push(row);
    }
    Ok(out)
}

/// Physical solution fields of the datum at the requested times.
pub fn greens_profile(op: &CollisionOperator, datum: &Datum, space: SpatialGrid, times: &[f64]) -> Result<Vec<SpatialField>> {
    let fields = evolve_fields_fourier(op, &[datum.field(space)], times, Band::Full, 0.0)?;
    Ok(fields.into_iter().next().unwrap_or_default().iter().map(SpatialField::to_physical).collect())
}

/// Damped free transport xi -> exp(-nu(xi) t) g_in(x - xi1 t, xi).
pub fn particle_term(op: &CollisionOperator, datum: &Datum, x: f64, t: f64) -> Result<GridFunction> {
    check_time(t)?;
    let grid = op.grid();
    if !datum.profile.same_grid(grid) {
        return Err(KineticError::GridMismatch);
    }
    let vals = (0..grid.len())
        .map(|i| (-op.nu()[i] * t).exp() * datum.bump.eval(x - grid.xi1(i) * t) * datum.profile.values()[i])
        .collect();
    GridFunction::new(grid, vals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileVariant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "P1-left")]
    P1Left,
    #[serde(rename = "P1-right")]
    P1Right,
    #[serde(rename = "P1-both")]
    P1Both,
    /// |(E, g(x))| for fluid mode E_j (index 0..3), or E_D (index 0) for cross-species fields.
    #[serde(rename = "mode-projected")]
    ModeProjected(usize),
}

impl ProfileVariant {
    pub fn label(&self) -> String {
        match self {
            Self::Full => "full".into(),
            Self::P1Left => "P1-left".into(),
            Self::P1Right => "P1-right".into(),
            Self::P1Both => "P1-both".into(),
            Self::ModeProjected(j) => format!("mode-projected-{}", j + 1),
        }
    }

    pub fn needs_right_projection(&self) -> bool {
        matches!(self, Self::P1Right | Self::P1Both)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Self::Full,
            "P1-left" => Self::P1Left,
            "P1-right" => Self::P1Right,
            "P1-both" => Self::P1Both,
            other => match other.strip_prefix("mode-projected-").and_then(|j| j.parse::<usize>().ok()) {
                Some(j) if (1..=3).contains(&j) => Self::ModeProjected(j - 1),
                _ => return Err(KineticError::Config(format!("unknown profile variant `{other}`"))),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub t: f64,
    pub variant: ProfileVariant,
    pub x: Vec<f64>,
    pub norms: Vec<f64>,
}

impl ProfileCurve {
    pub fn peak(&self) -> (f64, f64) {
        let (j, v) = self.norms.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (j, &v)| if v > a.1 { (j, v) } else { a });
        (self.x[j], v)
    }
}

fn micro_projection(pair: Option<Pair>) -> Projection {
    match pair {
        Some(Pair::Ab) | Some(Pair::Ba) => Projection::P1D,
        _ => Projection::P1,
    }
}

/// Per-x L^2_xi norms of a physical field after the variant's left projection.
pub fn profile_norms(field: &SpatialField, variant: ProfileVariant, basis: &FluidBasis) -> Result<ProfileCurve> {
    if field.representation != Representation::Physical {
        return Err(KineticError::Config("profile norms need a physical field".into()));
    }
    if variant.needs_right_projection() != field.right_projected {
        return Err(KineticError::Config(format!(
            "variant {} requires a datum {}projected before evolution",
            variant.label(),
            if field.right_projected { "not " } else { "" }
        )));
    }
    let micro = micro_projection(field.pair);
    let cross = micro == Projection::P1D;
    let mode = match variant {
        ProfileVariant::ModeProjected(j) if cross && j == 0 => Some(&basis.e_d),
        ProfileVariant::ModeProjected(j) if !cross && j < 3 => Some(&basis.e[j]),
        ProfileVariant::ModeProjected(j) => {
            return Err(KineticError::Config(format!("no fluid mode {} for this operator", j + 1)))
        }
        _ => None,
    };
    let mode_c = mode.map(|m| m.to_complex());
    let mut norms = Vec::with_capacity(field.space.n);
    for j in 0..field.space.n {
        let g = field.node_function(j);
        let v = match variant {
            ProfileVariant::Full | ProfileVariant::P1Right => g.norm(),
            ProfileVariant::P1Left | ProfileVariant::P1Both => project(&g, micro, basis)?.norm(),
            ProfileVariant::ModeProjected(_) => inner_product(mode_c.as_ref().expect("mode set"), &g)?.norm(),
        };
        norms.push(v);
    }
    Ok(ProfileCurve { t: field.t, variant, x: field.space.xs(), norms })
}

/// Evolves the datum (and its micro projection when needed) and returns one curve per variant and time.
pub fn evolve_variants(
    op: &CollisionOperator,
    basis: &FluidBasis,
    datum: &Datum,
    space: SpatialGrid,
    times: &[f64],
    variants: &[ProfileVariant],
) -> Result<Vec<Vec<ProfileCurve>>> {
    let plain = datum.field(space);
    let mut right = datum.projected(micro_projection(Some(op.pair())), basis)?.field(space);
    right.right_projected = true;
    let need_right = variants.iter().any(|v| v.needs_right_projection());
    let inputs = if need_right { vec![plain, right] } else { vec![plain] };
    let evolved = evolve_fields_fourier(op, &inputs, times, Band::Full, 0.0)?;
    let physical: Vec<Vec<SpatialField>> = evolved.iter().map(|r| r.iter().map(SpatialField::to_physical).collect()).collect();
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        let src = &physical[usize::from(v.needs_right_projection())];
        out.push(src.iter().map(|f| profile_norms(f, *v, basis)).collect::<Result<Vec<_>>>()?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumpTrack {
    pub speed: f64,
    /// One Gaussian fit per ladder time.
    pub fits: Vec<GaussianFit>,
    /// Log-log slope of the fitted heights in t.
    pub decay: Option<LinearFit>,
    /// max_t |center - speed t|.
    pub max_offset: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub times: Vec<f64>,
    pub humps: Vec<HumpTrack>,
    /// Regressions of ln(norm) against |x| + t along rays outside the Mach region.
    pub outside_mach: Vec<RayFit>,
    /// Tail after the fastest hump at the last time.
    pub tail: Option<TailClass>,
    pub notes: Vec<String>,
}

/// Values below this fraction of the profile maximum are treated as roundoff.
pub const PROFILE_FLOOR: f64 = 1e-12;
/// Rays x = +-r c t sampled outside the Mach region, as multiples r of the fastest speed.
pub const MACH_RAYS: [f64; 3] = [2.0, 2.25, 2.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayFit {
    /// x / (c t) along the ray, signed.
    pub ratio: f64,
    pub fit: LinearFit,
}

/// ln(norm) at `x` by log-linear interpolation, if both neighbours exceed `floor`.
fn log_norm_at(p: &ProfileCurve, x: f64, floor: f64) -> Option<f64> {
    let j = p.x.partition_point(|v| *v <= x);
    if j == 0 || j >= p.x.len() {
        return None;
    }
    let (a, b) = (p.norms[j - 1], p.norms[j]);
    if a <= floor || b <= floor {
        return None;
    }
    let s = (x - p.x[j - 1]) / (p.x[j] - p.x[j - 1]);
    Some((1.0 - s) * a.ln() + s * b.ln())
}

fn ray_fits(profiles: &[ProfileCurve], c: f64, notes: &mut Vec<String>) -> Vec<RayFit> {
    let mut out = Vec::new();
    for r in MACH_RAYS.iter().flat_map(|r| [-r, *r]) {
        let (mut s, mut y) = (Vec::new(), Vec::new());
        for p in profiles {
            let x = r * c * p.t;
            let limit = p.x.last().copied().unwrap_or(0.0).min(-p.x[0]) - 2.0;
            let top = p.norms.iter().cloned().fold(0.0, f64::max);
            if x.abs() <= limit {
                if let Some(v) = log_norm_at(p, x, PROFILE_FLOOR * top) {
                    s.push(x.abs() + p.t);
                    y.push(v);
                }
            }
        }
        if s.len() >= 3 {
            if let Ok(fit) = linear_fit(&s, &y) {
                out.push(RayFit { ratio: r, fit });
            }
        } else {
            notes.push(format!("ray x = {r} c t has {} usable times", s.len()));
        }
    }
    out
}

/// Gaussian hump fits at the given speeds plus outside-cone and tail regressions.
pub fn fit_waves(profiles: &[ProfileCurve], speeds: &[f64]) -> Result<FitReport> {
    if profiles.len() < 4 {
        return Err(KineticError::Fit(format!("need >= 4 times, got {}", profiles.len())));
    }
    let times: Vec<f64> = profiles.iter().map(|p| p.t).collect();
    let (t_lo, t_hi) = (times.iter().cloned().fold(f64::INFINITY, f64::min), times.iter().cloned().fold(0.0, f64::max));
    if !(t_lo > 0.0 && t_hi >= 4.0 * t_lo) {
        return Err(KineticError::Fit("time ladder must span a factor >= 4".into()));
    }
    let mut sorted: Vec<f64> = speeds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let c = sorted.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    let mut notes = Vec::new();
    let mut per_time: Vec<Vec<GaussianFit>> = Vec::new();
    for p in profiles {
        let t = p.t;
        let spread = 4.0 * (1.0 + t).sqrt() + 2.0;
        let (lo, hi) = (sorted[0] * t - spread, sorted[sorted.len() - 1] * t + spread);
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            p.x.iter().zip(&p.norms).filter(|(x, _)| **x >= lo && **x <= hi).map(|(x, y)| (*x, *y)).unzip();
        let start: Vec<GaussianFit> = sorted
            .iter()
            .map(|s| {
                let j = p.x.partition_point(|x| *x < s * t).min(p.x.len() - 1);
                GaussianFit { center: s * t, height: p.norms[j].max(1e-300), width: (1.0 + t).sqrt(), residual: 0.0 }
            })
            .collect();
        match fit_gaussians(&xs, &ys, &start) {
            Ok(f) => per_time.push(f),
            Err(e) => {
                notes.push(format!("hump fit at t={t}: {e}"));
                per_time.push(Vec::new());
            }
        }
    }
    let mut humps = Vec::new();
    for (si, &s) in sorted.iter().enumerate() {
        let fits: Vec<GaussianFit> = per_time.iter().filter_map(|f| f.get(si).copied()).collect();
        let mut resolved = fits.len() == profiles.len() && fits.iter().all(|f| f.height > 0.0);
        for (f, t) in per_time.iter().zip(&times) {
            for (nj, other) in f.iter().enumerate() {
                if nj != si && f.len() > si {
                    let sep = (other.center - f[si].center).abs();
                    if sep < 1.5 * (other.width + f[si].width) {
                        resolved = false;
                        notes.push(format!("hump at speed {s} overlaps a neighbour at t={t}"));
                    }
                }
            }
        }
        let decay = if resolved {
            let heights: Vec<f64> = fits.iter().map(|f| f.height).collect();
            power_law(&times, &heights).ok()
        } else {
            None
        };
        let max_offset = fits.iter().zip(&times).map(|(f, t)| (f.center - s * t).abs()).fold(0.0, f64::max);
        humps.push(HumpTrack { speed: s, fits, decay, max_offset, resolved });
    }

    let outside_mach = if c > 0.0 { ray_fits(profiles, c, &mut notes) } else { Vec::new() };

    // tail beyond the fastest hump at the last time
    let last = profiles.last().expect("len >= 4");
    let tail = humps.last().and_then(|h| h.fits.last()).and_then(|f| {
        let top = last.norms.iter().cloned().fold(0.0, f64::max);
        let start = f.center + 3.0 * f.width;
        let stop = (2.0 * c * last.t).max(start + 4.0 * f.width);
        let (xs, ys): (Vec<f64>, Vec<f64>) = last
            .x
            .iter()
            .zip(&last.norms)
            .filter(|(x, y)| **x >= start && **x <= stop && **y > PROFILE_FLOOR * top)
            .map(|(x, y)| (*x, *y))
            .unzip();
        classify_tail(&xs, &ys).ok()
    });
    Ok(FitReport { times, humps, outside_mach, tail, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec, MixtureConfig};
    use crate::kernels::sqrt_maxwellian;
    use crate::operator::{assemble_operator, random_function};
    use crate::spectral::fluid_modes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (MixtureConfig, CollisionOperator, FluidBasis) {
        let cfg = MixtureConfig::default();
        let grid = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: 8, n_polar: 6 }).unwrap();
        let op = assemble_operator(Pair::Bb, &grid, &cfg).unwrap();
        let basis = fluid_modes(&grid, cfg.mass_ratio()).unwrap();
        (cfg, op, basis)
    }

    fn complex_random(grid: &GridRef, rng: &mut ChaCha8Rng) -> GridFunction<Complex> {
        let re = random_function(grid, rng);
        let im = random_function(grid, rng);
        GridFunction::new(grid, re.values().iter().zip(im.values()).map(|(a, b)| Complex::new(*a, *b)).collect()).unwrap()
    }

    #[test]
    fn propagation_is_a_contraction_semigroup() {
        let (_, op, _) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let k = rng.random_range(-3.0..3.0);
            let f = complex_random(op.grid(), &mut rng);
            let out = propagate_fourier(&op, k, 1.7, &f).unwrap();
            assert!(out.norm() <= f.norm() + 1e-10);
        }
        let f = complex_random(op.grid(), &mut rng);
        let same = propagate_fourier(&op, 0.4, 0.0, &f).unwrap();
        assert!(same.add_scaled(Complex::new(-1.0, 0.0), &f).unwrap().norm() == 0.0);
        let two = propagate_fourier(&op, 0.4, 0.8, &propagate_fourier(&op, 0.4, 0.5, &f).unwrap()).unwrap();
        let one = propagate_fourier(&op, 0.4, 1.3, &f).unwrap();
        assert!(two.add_scaled(Complex::new(-1.0, 0.0), &one).unwrap().norm() <= 1e-9 * f.norm());
        assert!(propagate_fourier(&op, 0.4, f64::NAN, &f).is_err());
    }

    #[test]
    fn bump_spectrum_guard() {
        let (_, op, _) = setup();
        let profile = GridFunction::from_fn(op.grid(), |p| sqrt_maxwellian(p, 1.0));
        let datum = Datum::new(Bump::default(), profile);
        assert!(check_aliasing(&datum.field(SpatialGrid::with_spacing(8.0, 0.055).unwrap())).is_ok());
        assert!(matches!(
            check_aliasing(&datum.field(SpatialGrid::with_spacing(8.0, 0.2).unwrap())),
            Err(KineticError::Aliasing(_))
        ));
    }

    #[test]
    fn evolution_invariants() {
        let (_, op, basis) = setup();
        let grid = op.grid();
        // profile even in xi1
        let profile = GridFunction::from_fn(grid, |p| (1.0 + p[0] * p[0] + 0.3 * p[1] * p[1]) * sqrt_maxwellian(p, 1.0));
        let datum = Datum::new(Bump::default(), profile);
        let space = SpatialGrid::with_spacing(12.0, 0.055).unwrap();
        let times = [0.5, 1.0, 2.0, 3.0];
        let fields = greens_profile(&op, &datum, space, &times).unwrap();
        let init = datum.field(space);
        let mut prev = init.norm_sq();
        // Parseval on the datum
        assert!((init.to_fourier().norm_sq() - prev).abs() <= 1e-10 * prev);
        for f in &fields {
            assert!(f.imag_residue() <= 1e-10);
            let four = f.to_fourier();
            assert!((four.norm_sq() - f.norm_sq()).abs() <= 1e-10 * f.norm_sq());
            assert!(f.norm_sq() <= prev * (1.0 + 1e-12));
            prev = f.norm_sq();
            let curve = profile_norms(f, ProfileVariant::Full, &basis).unwrap();
            let n = space.n;
            // x_j and x_{n-j} are mirror images (x_0 = -X has no partner)
            for j in 1..n {
                let (a, b) = (curve.norms[j], curve.norms[n - j]);
                assert!((a - b).abs() <= 1e-9 * a.max(b).max(1e-300) + 1e-14, "{a} {b}");
            }
        }
        // particle part: identity at t = 0, finite speed, and smooth remainder
        let g0 = particle_term(&op, &datum, 0.3, 0.0).unwrap();
        assert_eq!(g0.values(), datum.at(0.3).values());
        let vmax = (0..grid.len()).map(|i| grid.xi1(i).abs()).fold(0.0, f64::max);
        let t = 1.0;
        assert!(particle_term(&op, &datum, 1.0 + t * vmax + 0.01, t).unwrap().norm() == 0.0);
        let zero = SpatialField::zeros(space, grid, Representation::Physical);
        assert!(profile_norms(&zero, ProfileVariant::Full, &basis).unwrap().norms.iter().all(|v| *v == 0.0));
        assert!(profile_norms(&zero, ProfileVariant::P1Right, &basis).is_err());
    }

    #[test]
    fn band_split_is_a_partition() {
        let (_, op, _) = setup();
        let profile = GridFunction::from_fn(op.grid(), |p| (1.0 + p[0]) * sqrt_maxwellian(p, 1.0));
        let datum = Datum::new(Bump::default(), profile);
        let space = SpatialGrid::with_spacing(10.0, 0.055).unwrap();
        let f = [datum.field(space)];
        let times = [1.0, 2.0];
        let full = evolve_fields_fourier(&op, &f, &times, Band::Full, 0.5).unwrap();
        let long = evolve_fields_fourier(&op, &f, &times, Band::Long, 0.5).unwrap();
        let short = evolve_fields_fourier(&op, &f, &times, Band::Short, 0.5).unwrap();
        for t in 0..2 {
            for ((a, b), c) in full[0][t].values().iter().zip(long[0][t].values()).zip(short[0][t].values()) {
                assert_eq!(*a, b + c);
            }
        }
    }

    #[test]
    fn fit_recovers_synthetic_waves() {
        let speeds = [-1.29, 0.0, 1.29];
        let x: Vec<f64> = (0..4000).map(|j| -200.0 + 0.1 * j as f64).collect();
        let profiles: Vec<ProfileCurve> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&t: &f64| {
                let norms = x
                    .iter()
                    .map(|&xv| {
                        speeds.iter().map(|s| t.powf(-0.5) * (-(xv - s * t).powi(2) / (2.0 * (1.0 + t))).exp()).sum::<f64>()
                    })
                    .collect();
                ProfileCurve { t, variant: ProfileVariant::Full, x: x.clone(), norms }
            })
            .collect();
        let rep = fit_waves(&profiles, &speeds).unwrap();
        for h in &rep.humps {
            let d = h.decay.unwrap().slope;
            assert!((d + 0.5).abs() < 0.01, "{d}");
        }
        assert!(fit_waves(&profiles[..3], &speeds).is_err());
    }
}
