//! The two-species system: species A relaxes against the background by L_AB and drives
//! species B through L_BA, which evolves under L.
//!
//! Per wavenumber the generator is block lower-triangular,
//! `[[-i k xi1 + L_AB, 0], [L_BA, -i k xi1 + L]]`, and is propagated by one block exponential.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KineticError, Result};
use crate::fit::{linear_fit, power_law, LinearFit};
use crate::greens::{
    check_aliasing, evolve_modes, fit_waves, profile_norms, weighted_generator, FitReport, ProfileCurve, ProfileVariant,
    Representation, SpatialField,
};
use crate::grid::{inner_product, GridFunction, MixtureConfig};
use crate::kernels::sqrt_maxwellian;
use crate::linalg::{expm, inverse, CMat};
use crate::operator::{random_function, CollisionOperator, Pair};
use crate::spectral::{euler_speeds, invert_on_micro, FluidBasis};
use crate::Complex;

/// The three operators of the system on one velocity grid.
#[derive(Debug, Clone)]
pub struct CoupledOperators {
    pub ab: CollisionOperator,
    pub bb: CollisionOperator,
    pub ba: CollisionOperator,
}

impl CoupledOperators {
    pub fn new(ab: CollisionOperator, bb: CollisionOperator, ba: CollisionOperator) -> Result<Self> {
        if ab.pair() != Pair::Ab || bb.pair() != Pair::Bb || ba.pair() != Pair::Ba {
            return Err(KineticError::Config("operators must be (AB, BB, BA)".into()));
        }
        if !ab.grid().same(bb.grid()) || !ab.grid().same(ba.grid()) {
            return Err(KineticError::GridMismatch);
        }
        Ok(Self { ab, bb, ba })
    }

    pub fn dim(&self) -> usize {
        self.ab.dim()
    }

    /// Same system with the coupling L_BA set to zero.
    pub fn decoupled(&self) -> Result<Self> {
        let n = self.dim();
        let ba = CollisionOperator::from_parts(
            Pair::Ba,
            self.ba.grid().clone(),
            vec![0.0; n],
            Mat::zeros(n, n),
            self.ba.metadata().clone(),
        )?;
        Ok(Self { ab: self.ab.clone(), bb: self.bb.clone(), ba })
    }

    /// Variant whose discrete invariants are exact, for long-time evolution.
    ///
    /// L_AB and L are compressed onto the complements of their null spaces. L_BA is
    /// replaced by `(I - P0) L_BA P1D` plus a fluid part fixed by requiring
    /// `m_A (L_AB f, phi sqrt M_A) + m_B (L_BA f, phi sqrt M_B) = 0` for phi in {1, xi, |xi|^2},
    /// with the B-mass part zero.
    pub fn conservative(&self, basis: &FluidBasis, config: &MixtureConfig) -> Result<Self> {
        let grid = self.ab.grid().clone();
        let n = grid.len();
        let w = grid.weights();
        let ab = self.ab.compress(std::slice::from_ref(&basis.e_d))?;
        let chis: Vec<GridFunction> = basis.chi.iter().map(|(_, f)| f.clone()).collect();
        let bb = self.bb.compress(&chis)?;
        let a_ab = ab.nodal_matrix();
        let a_ba = self.ba.nodal_matrix();
        let ed = basis.e_d.values();
        // right P1D: A (I - e e^T W)
        let ae: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a_ba[(i, j)] * ed[j]).sum()).collect();
        let right = Mat::from_fn(n, n, |i, j| a_ba[(i, j)] - ae[i] * ed[j] * w[j]);
        // left (I - P0)
        let mut core = right;
        for chi in &chis {
            let c = chi.values();
            let row: Vec<f64> = (0..n).map(|j| (0..n).map(|i| c[i] * w[i] * core[(i, j)]).sum()).collect();
            core = Mat::from_fn(n, n, |i, j| core[(i, j)] - c[i] * row[j]);
        }
        let mu = config.mass_ratio();
        let invariant = |index: usize, p: [f64; 3], m: f64| -> f64 {
            let phi = match index {
                0 => 1.0,
                1..=3 => p[index - 1],
                _ => p[0] * p[0] + p[1] * p[1] + p[2] * p[2],
            };
            phi * sqrt_maxwellian(p, m)
        };
        let r = chis.len();
        // targets t_b(f) = -(m_A/m_B) (L_AB f, phi_b sqrt M_A) as row vectors; zero for mass
        let mut targets = Mat::<f64>::zeros(r, n);
        let mut gram = Mat::<f64>::zeros(r, r);
        for (b, (idx, _)) in basis.chi.iter().enumerate() {
            let phi_a: Vec<f64> = (0..n).map(|i| invariant(*idx, grid.point(i), mu)).collect();
            let phi_b: Vec<f64> = (0..n).map(|i| invariant(*idx, grid.point(i), 1.0)).collect();
            if *idx != 0 {
                for j in 0..n {
                    targets[(b, j)] = -mu * (0..n).map(|i| w[i] * phi_a[i] * a_ab[(i, j)]).sum::<f64>();
                }
            }
            for (a, chi) in chis.iter().enumerate() {
                gram[(b, a)] = (0..n).map(|i| w[i] * phi_b[i] * chi.values()[i]).sum();
            }
        }
        let ell = inverse(&gram)? * &targets;
        let nodal = Mat::from_fn(n, n, |i, j| {
            core[(i, j)] + chis.iter().enumerate().map(|(a, chi)| chi.values()[i] * ell[(a, j)]).sum::<f64>()
        });
        let ba = CollisionOperator::from_nodal(Pair::Ba, grid, vec![0.0; n], &nodal, self.ba.metadata().clone())?;
        Ok(Self { ab, bb, ba })
    }

    /// Block generator in weighted coordinates.
    pub fn block_generator(&self, k: f64) -> CMat {
        let n = self.dim();
        let a = weighted_generator(&self.ab, k);
        let b = weighted_generator(&self.bb, k);
        let c = self.ba.weighted_matrix();
        Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => a[(i, j)],
            (true, false) => Complex::new(0.0, 0.0),
            (false, true) => Complex::new(c[(i - n, j)], 0.0),
            (false, false) => b[(i - n, j - n)],
        })
    }
}

/// Species A and B perturbations at one time.
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub g: SpatialField,
    pub h: SpatialField,
    pub t: f64,
    pub config_hash: String,
}

fn weighted_fourier(field: &SpatialField) -> Vec<Complex> {
    let sq: Vec<f64> = field.grid().weights().iter().map(|w| w.sqrt()).collect();
    let f = field.to_fourier();
    f.values().chunks(sq.len()).flat_map(|c| c.iter().zip(&sq).map(|(v, s)| v * s).collect::<Vec<_>>()).collect()
}

fn unweighted_field(field: &SpatialField, t: f64, y: &[Complex], pair: Pair) -> Result<SpatialField> {
    let sq: Vec<f64> = field.grid().weights().iter().map(|w| w.sqrt()).collect();
    let vals = y.chunks(sq.len()).flat_map(|c| c.iter().zip(&sq).map(|(v, s)| v / s).collect::<Vec<_>>()).collect();
    let mut f = SpatialField::new(*field.space(), field.grid(), t, Representation::Fourier, vals)?;
    f.pair = Some(pair);
    Ok(f.to_physical())
}

/// Evolves (g_in, h_in) exactly per Fourier mode and returns physical states at `times`.
///
/// g is propagated by L_AB alone, so it does not depend on h_in at all.
pub fn solve_coupled(
    ops: &CoupledOperators,
    g_in: &SpatialField,
    h_in: &SpatialField,
    times: &[f64],
    config_hash: &str,
) -> Result<Vec<CoupledState>> {
    let grid = ops.ab.grid();
    if !g_in.grid().same(grid) || !h_in.grid().same(grid) || g_in.space() != h_in.space() {
        return Err(KineticError::GridMismatch);
    }
    check_aliasing(g_in)?;
    check_aliasing(h_in)?;
    let space = *g_in.space();
    let n = ops.dim();
    let yg = weighted_fourier(g_in);
    let yh = weighted_fourier(h_in);
    let gen_a = |k: f64| weighted_generator(&ops.ab, k);
    let g_out = evolve_modes(&space, times, n, &gen_a, std::slice::from_ref(&yg), None)?.remove(0);
    let mut joint = Vec::with_capacity(2 * n * space.n);
    for m in 0..space.n {
        joint.extend_from_slice(&yg[m * n..(m + 1) * n]);
        joint.extend_from_slice(&yh[m * n..(m + 1) * n]);
    }
    let gen = |k: f64| ops.block_generator(k);
    let joint_out = evolve_modes(&space, times, 2 * n, &gen, &[joint], None)?.remove(0);
    let mut out = Vec::with_capacity(times.len());
    for ((&t, yg_t), y) in times.iter().zip(g_out).zip(joint_out) {
        let yh_t: Vec<Complex> = y.chunks(2 * n).flat_map(|c| c[n..].to_vec()).collect();
        out.push(CoupledState {
            g: unweighted_field(g_in, t, &yg_t, Pair::Ab)?,
            h: unweighted_field(h_in, t, &yh_t, Pair::Bb)?,
            t,
            config_hash: config_hash.to_string(),
        });
    }
    Ok(out)
}

/// B-component at time t of the single-mode solution started from (g0, 0), by the block exponential.
pub fn block_source_response(ops: &CoupledOperators, k: f64, t: f64, g0: &GridFunction<Complex>) -> Result<GridFunction<Complex>> {
    let n = ops.dim();
    let sq: Vec<f64> = ops.ab.grid().weights().iter().map(|w| w.sqrt()).collect();
    let g = ops.block_generator(k);
    let e = expm(&Mat::from_fn(2 * n, 2 * n, |i, j| g[(i, j)] * t))?;
    let y: Vec<Complex> = g0.values().iter().zip(&sq).map(|(v, s)| v * s).collect();
    let vals = (0..n).map(|i| (0..n).map(|j| e[(n + i, j)] * y[j]).sum::<Complex>() / sq[i]).collect();
    GridFunction::new(ops.ab.grid(), vals)
}

/// The same quantity by Duhamel's formula int_0^t e^{B(t-s)} L_BA e^{A s} g0 ds, composite Simpson.
pub fn duhamel_source_response(
    ops: &CoupledOperators,
    k: f64,
    t: f64,
    g0: &GridFunction<Complex>,
    intervals: usize,
) -> Result<GridFunction<Complex>> {
    if intervals < 2 || intervals % 2 != 0 {
        return Err(KineticError::Config("Simpson's rule needs an even number of intervals".into()));
    }
    let n = ops.dim();
    let sq: Vec<f64> = ops.ab.grid().weights().iter().map(|w| w.sqrt()).collect();
    let dt = t / intervals as f64;
    let scaled = |m: CMat| Mat::from_fn(n, n, |i, j| m[(i, j)] * dt);
    let ea = expm(&scaled(weighted_generator(&ops.ab, k)))?;
    let eb = expm(&scaled(weighted_generator(&ops.bb, k)))?;
    let c = crate::linalg::to_complex(&ops.ba.weighted_matrix());
    // Horner form: acc_j = e^{B dt} acc_{j-1} + w_j C e^{A s_j} g0, so acc_N = sum_j w_j e^{B(t - s_j)} C e^{A s_j} g0
    let y: Vec<Complex> = g0.values().iter().zip(&sq).map(|(v, s)| v * s).collect();
    let mut state = Mat::from_fn(n, 1, |i, _| y[i]);
    let mut acc = Mat::<Complex>::zeros(n, 1);
    for j in 0..=intervals {
        let wj = if j == 0 || j == intervals {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        if j > 0 {
            acc = &eb * &acc;
            state = &ea * &state;
        }
        let src = &c * &state;
        acc += Mat::from_fn(n, 1, |i, _| src[(i, 0)] * (wj * dt / 3.0));
    }
    GridFunction::new(ops.ab.grid(), (0..n).map(|i| acc[(i, 0)] / sq[i]).collect())
}

/// ||L_BA E_D|| for the unit diffusion mode E_D.
pub fn cancellation_residual(op_ba: &CollisionOperator, basis: &FluidBasis) -> Result<f64> {
    Ok(op_ba.apply(&basis.e_d)?.norm())
}

/// Largest singular value of the operator on L^2_xi.
pub fn operator_norm(op: &CollisionOperator) -> Result<f64> {
    let h = op.weighted_matrix();
    let g = h.transpose() * &h;
    let g = Mat::from_fn(g.nrows(), g.ncols(), |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    let (vals, _) = crate::linalg::sym_eigen(&g)?;
    Ok(vals.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub cancellation_residual: f64,
    /// The residual divided by the operator norm of L_BA.
    pub relative_cancellation: f64,
    pub e2_coefficient: f64,
    /// |c_1| and |c_3|.
    pub e13_coefficients: [f64; 2],
    pub oddness_defect: f64,
    /// Regression of the log in-cone residual against sqrt(t), once measured.
    pub sqrt_t_tail: Option<LinearFit>,
}

fn odd_part(f: &GridFunction) -> GridFunction {
    let g = f.grid();
    let vals = (0..g.len()).map(|i| 0.5 * (f.values()[i] - f.values()[g.reflect_xi1(i)])).collect();
    GridFunction::new(g, vals).expect("finite")
}

fn even_part(f: &GridFunction) -> GridFunction {
    let g = f.grid();
    let vals = (0..g.len()).map(|i| 0.5 * (f.values()[i] + f.values()[g.reflect_xi1(i)])).collect();
    GridFunction::new(g, vals).expect("finite")
}

/// Resonance coefficients c_j = (E_j, L_BA L_AB^{-1} P1D xi1 E_D) and the oddness defect of L_BA L_AB^{-1}.
pub fn resonance_coefficients(ab: &CollisionOperator, ba: &CollisionOperator, basis: &FluidBasis, seed: u64) -> Result<ResonanceReport> {
    let residual = cancellation_residual(ba, basis)?;
    let norm = operator_norm(ba)?;
    let src = basis.e_d.mul_fn(|p| p[0]);
    let src = src.add_scaled(-inner_product(&basis.e_d, &src)?, &basis.e_d)?;
    let v = ba.apply(&invert_on_micro(ab, basis, &src)?)?;
    let c: Vec<f64> = basis.e.iter().map(|e| inner_product(e, &v).map(f64::abs)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oddness: f64 = 0.0;
    let mut trials = vec![basis.e_d.mul_fn(|p| p[0])];
    for _ in 0..8 {
        trials.push(odd_part(&random_function(ab.grid(), &mut rng)));
    }
    for f in trials {
        let out = ba.apply(&invert_on_micro(ab, basis, &f)?)?;
        oddness = oddness.max(even_part(&out).norm() / f.norm());
    }
    Ok(ResonanceReport {
        cancellation_residual: residual,
        relative_cancellation: residual / norm.max(f64::MIN_POSITIVE),
        e2_coefficient: c[1],
        e13_coefficients: [c[0], c[2]],
        oddness_defect: oddness,
        sqrt_t_tail: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationIdentity {
    /// max |m_A (L_AB f, phi sqrt M_A) + m_B (L_BA f, phi sqrt M_B)| / (m_A ||f|| ||phi sqrt M_A||).
    pub mass_weighted: f64,
    /// Same without the masses: ((L_AB + sqrt(M_B)/sqrt(M_A) L_BA) f, phi sqrt M_A).
    pub literal: f64,
    /// Nodes dropped because M_A underflows.
    pub excluded_nodes: usize,
}

/// Residual of the cross-species conservation identity over trial functions.
pub fn conservation_identity_residual(
    ab: &CollisionOperator,
    ba: &CollisionOperator,
    config: &MixtureConfig,
    trials: &[GridFunction],
) -> Result<ConservationIdentity> {
    let grid = ab.grid();
    let mu = config.mass_ratio();
    let n = grid.len();
    let keep: Vec<bool> = (0..n).map(|i| sqrt_maxwellian(grid.point(i), mu).powi(2) >= 1e-300).collect();
    let excluded_nodes = keep.iter().filter(|k| !**k).count();
    let w = grid.weights();
    let phis: [fn([f64; 3]) -> f64; 3] = [|_| 1.0, |p| p[0], |p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2]];
    let (mut weighted, mut literal) = (0.0f64, 0.0f64);
    for f in trials {
        let la = ab.apply(f)?;
        let lb = ba.apply(f)?;
        for phi in phis {
            let mut sa = 0.0;
            let mut sb = 0.0;
            let mut na = 0.0;
            for i in (0..n).filter(|&i| keep[i]) {
                let p = grid.point(i);
                let ma = sqrt_maxwellian(p, mu);
                // (sqrt(M_B)/sqrt(M_A)) (L_BA f) phi sqrt(M_A), evaluated nodewise
                let ratio = sqrt_maxwellian(p, 1.0) / ma;
                sa += w[i] * la.values()[i] * phi(p) * ma;
                sb += w[i] * ratio * lb.values()[i] * phi(p) * ma;
                na += w[i] * (phi(p) * ma).powi(2);
            }
            let scale = f.norm() * na.sqrt();
            weighted = weighted.max((config.m_a * sa + config.m_b * sb).abs() / (config.m_a * scale));
            literal = literal.max((sa + sb).abs() / scale);
        }
    }
    Ok(ConservationIdentity { mass_weighted: weighted, literal, excluded_nodes })
}

/// Deterministic random trial functions for identity checks.
pub fn trial_functions(grid: &crate::grid::GridRef, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_function(grid, &mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedQuantities {
    pub t: f64,
    /// int (g, sqrt M_A) dx.
    pub a_mass: f64,
    /// int [m_A (g, xi1 sqrt M_A) + m_B (h, xi1 sqrt M_B)] dx.
    pub momentum: f64,
    /// int [m_A (g, |xi|^2 sqrt M_A) + m_B (h, |xi|^2 sqrt M_B)] dx.
    pub energy: f64,
}

pub fn conserved_quantities(state: &CoupledState, config: &MixtureConfig) -> Result<ConservedQuantities> {
    let grid = state.g.grid();
    let mu = config.mass_ratio();
    let f = |phi: fn([f64; 3]) -> f64, m: f64| GridFunction::from_fn(grid, move |p| phi(p) * sqrt_maxwellian(p, m));
    let one: fn([f64; 3]) -> f64 = |_| 1.0;
    let x1: fn([f64; 3]) -> f64 = |p| p[0];
    let e: fn([f64; 3]) -> f64 = |p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    let a_mass = state.g.moment(&f(one, mu))?.re;
    let momentum = config.m_a * state.g.moment(&f(x1, mu))?.re + config.m_b * state.h.moment(&f(x1, 1.0))?.re;
    let energy = config.m_a * state.g.moment(&f(e, mu))?.re + config.m_b * state.h.moment(&f(e, 1.0))?.re;
    Ok(ConservedQuantities { t: state.t, a_mass, momentum, energy })
}

/// Largest drift of each conserved quantity relative to its initial value.
pub fn conservation_drift(initial: &ConservedQuantities, ledger: &[ConservedQuantities]) -> [f64; 3] {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let mut out = [0.0f64; 3];
    for q in ledger {
        out[0] = out[0].max(rel(q.a_mass, initial.a_mass));
        out[1] = out[1].max(rel(q.momentum, initial.momentum));
        out[2] = out[2].max(rel(q.energy, initial.energy));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainTheoremReport {
    /// Species A: single hump at speed 0.
    pub g: FitReport,
    /// Species B: humps at the three Euler speeds.
    pub h: FitReport,
    /// max over |x| <= 2 c t of | ||h|| - sum of fitted Gaussians |, per time.
    pub in_cone_residual: Vec<f64>,
    /// Regression of ln(in-cone residual) against sqrt(t).
    pub in_cone_sqrt_t: Option<LinearFit>,
    /// Log-log slope of the in-cone residual.
    pub in_cone_power: Option<LinearFit>,
    pub resonance: ResonanceReport,
    pub flags: Vec<String>,
}

pub fn profiles(states: &[CoupledState], basis: &FluidBasis) -> Result<(Vec<ProfileCurve>, Vec<ProfileCurve>)> {
    let mut g = Vec::new();
    let mut h = Vec::new();
    for s in states {
        g.push(profile_norms(&s.g, ProfileVariant::Full, basis)?);
        h.push(profile_norms(&s.h, ProfileVariant::Full, basis)?);
    }
    Ok((g, h))
}

/// Fits the hump structure of both species along the ladder and measures the in-cone residual.
pub fn verify_main_theorem(states: &[CoupledState], basis: &FluidBasis, resonance: ResonanceReport) -> Result<MainTheoremReport> {
    let (gp, hp) = profiles(states, basis)?;
    let speeds = euler_speeds();
    let g = fit_waves(&gp, &[0.0])?;
    let h = fit_waves(&hp, &speeds)?;
    let mut flags = Vec::new();
    let c = speeds[2];
    let mut in_cone_residual = Vec::new();
    for (p, ti) in hp.iter().zip(0..) {
        let fits: Vec<_> = h.humps.iter().filter_map(|hump| hump.fits.get(ti)).collect();
        if fits.len() != 3 {
            flags.push(format!("missing hump fits at t={}", p.t));
            continue;
        }
        let r = p
            .x
            .iter()
            .zip(&p.norms)
            .filter(|(x, _)| x.abs() <= 2.0 * c * p.t)
            .map(|(x, v)| (v - fits.iter().map(|f| f.eval(*x)).sum::<f64>()).abs())
            .fold(0.0, f64::max);
        in_cone_residual.push(r);
    }
    let times: Vec<f64> = hp.iter().map(|p| p.t).collect();
    let (in_cone_sqrt_t, in_cone_power) = if in_cone_residual.len() == times.len() && in_cone_residual.iter().all(|r| *r > 0.0) {
        let st: Vec<f64> = times.iter().map(|t| t.sqrt()).collect();
        let lr: Vec<f64> = in_cone_residual.iter().map(|r| r.ln()).collect();
        (linear_fit(&st, &lr).ok(), power_law(&times, &in_cone_residual).ok())
    } else {
        (None, None)
    };
    for (name, rep) in [("g", &g), ("h", &h)] {
        for hump in &rep.humps {
            if !hump.resolved {
                flags.push(format!("{name}: hump at speed {} unresolved", hump.speed));
            }
        }
    }
    let mut resonance = resonance;
    resonance.sqrt_t_tail = in_cone_sqrt_t;
    Ok(MainTheoremReport { g, h, in_cone_residual, in_cone_sqrt_t, in_cone_power, resonance, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{Bump, Datum, SpatialGrid};
    use crate::grid::{build_grid, GridRef, GridSpec};
    use crate::operator::{assemble_lba, assemble_operator, Interpolation};
    use crate::spectral::fluid_modes;

    fn setup(nr: usize, np: usize) -> (MixtureConfig, GridRef, CoupledOperators, FluidBasis) {
        let cfg = MixtureConfig::default();
        let grid = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: nr, n_polar: np }).unwrap();
        let ab = assemble_operator(Pair::Ab, &grid, &cfg).unwrap();
        let bb = assemble_operator(Pair::Bb, &grid, &cfg).unwrap();
        let ba = assemble_lba(&grid, &cfg, 16, Interpolation::RadialLegendre).unwrap();
        let basis = fluid_modes(&grid, cfg.mass_ratio()).unwrap();
        (cfg, grid.clone(), CoupledOperators::new(ab, bb, ba).unwrap(), basis)
    }

    #[test]
    fn cross_species_identities() {
        let (cfg, grid, ops, basis) = setup(12, 8);
        let rep = resonance_coefficients(&ops.ab, &ops.ba, &basis, 1).unwrap();
        assert!(rep.relative_cancellation <= 1e-5, "{rep:?}");
        assert!(rep.e2_coefficient <= 1e-6 * (rep.e13_coefficients[0] + rep.e13_coefficients[1] + 1e-12), "{rep:?}");
        assert!(rep.e13_coefficients[0] > 10.0 * rep.e2_coefficient);
        assert!(rep.oddness_defect <= 1e-6);
        let trials = trial_functions(&grid, 4, 2);
        let id = conservation_identity_residual(&ops.ab, &ops.ba, &cfg, &trials).unwrap();
        assert!(id.mass_weighted <= 1e-5, "{id:?}");
        // rank-one algebra: L_BA f - L_BA P1D f = (f, E_D) L_BA E_D
        let f = &trials[0];
        let p1 = crate::spectral::project(f, crate::spectral::Projection::P1D, &basis).unwrap();
        let diff = ops.ba.apply(f).unwrap().add_scaled(-1.0, &ops.ba.apply(&p1).unwrap()).unwrap().norm();
        let bound = rep.cancellation_residual * inner_product(f, &basis.e_d).unwrap().abs();
        assert!(diff <= bound * (1.0 + 1e-8) + 1e-15);
    }

    #[test]
    fn cross_identities_converge() {
        let cfg = MixtureConfig::default();
        let grid = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: 10, n_polar: 8 }).unwrap();
        let basis = fluid_modes(&grid, cfg.mass_ratio()).unwrap();
        let mut last: Option<f64> = None;
        for order in [2, 4, 8, 16] {
            let ba = assemble_lba(&grid, &cfg, order, Interpolation::RadialLegendre).unwrap();
            let r = cancellation_residual(&ba, &basis).unwrap();
            let floor = 1e-5 * operator_norm(&ba).unwrap();
            if let Some(prev) = last {
                assert!(r <= 0.5 * prev || r <= floor, "order {order}: {r} after {prev}");
            }
            last = Some(r);
        }
        let residual = |nr: usize, np: usize| {
            let (cfg, grid, ops, _) = setup(nr, np);
            let trials = trial_functions(&grid, 4, 3);
            conservation_identity_residual(&ops.ab, &ops.ba, &cfg, &trials).unwrap().mass_weighted
        };
        let (coarse, fine) = (residual(6, 6), residual(10, 8));
        assert!(fine < coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn conservative_variant_is_exact() {
        let (cfg, grid, ops, basis) = setup(12, 8);
        let cons = ops.conservative(&basis, &cfg).unwrap();
        assert!(cons.ba.apply(&basis.e_d).unwrap().norm() <= 1e-13);
        assert!(cons.ab.apply(&basis.e_d).unwrap().norm() <= 1e-13);
        let id = conservation_identity_residual(&cons.ab, &cons.ba, &cfg, &trial_functions(&grid, 3, 5)).unwrap();
        assert!(id.mass_weighted <= 1e-12, "{id:?}");
        // the correction is of the size of the discretization error
        let (a, b) = (cons.ba.nodal_matrix(), ops.ba.nodal_matrix());
        let change = Mat::from_fn(grid.len(), grid.len(), |i, j| a[(i, j)] - b[(i, j)]).norm_max();
        assert!(change <= 1e-3 * b.norm_max(), "{change}");
    }

    #[test]
    fn block_exponential_matches_duhamel() {
        let (cfg, grid, ops, basis) = setup(8, 6);
        let ops = ops.conservative(&basis, &cfg).unwrap();
        let g0 = GridFunction::from_fn(&grid, |p| (1.0 + 0.5 * p[0]) * sqrt_maxwellian(p, cfg.mass_ratio())).to_complex();
        for k in [0.13, 0.71, 1.9] {
            let a = block_source_response(&ops, k, 10.0, &g0).unwrap();
            let err: Vec<f64> = [64, 128, 256, 512]
                .iter()
                .map(|&m| {
                    let b = duhamel_source_response(&ops, k, 10.0, &g0, m).unwrap();
                    a.add_scaled(Complex::new(-1.0, 0.0), &b).unwrap().norm() / a.norm()
                })
                .collect();
            // Simpson converges at fourth order to the exponential
            for w in err.windows(2).take(2) {
                assert!((12.0..20.0).contains(&(w[0] / w[1])), "k={k} {err:?}");
            }
            assert!(err[3] <= 1e-7, "k={k} {err:?}");
        }
        assert!(duhamel_source_response(&ops, 0.5, 1.0, &g0, 3).is_err());
    }

    #[test]
    fn decoupled_system_and_triangularity() {
        let (cfg, grid, ops, basis) = setup(8, 6);
        let ops = ops.conservative(&basis, &cfg).unwrap();
        let space = SpatialGrid::with_spacing(12.0, 0.055).unwrap();
        let ga = Datum::new(Bump::default(), GridFunction::from_fn(&grid, |p| sqrt_maxwellian(p, cfg.mass_ratio()))).field(space);
        let hb = Datum::new(Bump::default(), GridFunction::from_fn(&grid, |p| p[0] * sqrt_maxwellian(p, 1.0))).field(space);
        let zero = SpatialField::zeros(space, &grid, Representation::Physical);
        let times = [1.0, 2.0];
        let free = solve_coupled(&ops.decoupled().unwrap(), &ga, &hb, &times, "").unwrap();
        let bb_only = crate::greens::evolve_fields_fourier(&ops.bb, &[hb.clone()], &times, crate::greens::Band::Full, 0.0).unwrap();
        for (s, f) in free.iter().zip(&bb_only[0]) {
            let p = f.to_physical();
            let err = s.h.values().iter().zip(p.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err <= 1e-12, "{err}");
        }
        let with_h = solve_coupled(&ops, &ga, &hb, &times, "").unwrap();
        let without_h = solve_coupled(&ops, &ga, &zero, &times, "").unwrap();
        for (a, b) in with_h.iter().zip(&without_h) {
            assert_eq!(a.g.values(), b.g.values());
        }
        // conservation along the evolution
        let init = CoupledState { g: ga.clone(), h: hb.clone(), t: 0.0, config_hash: String::new() };
        let q0 = conserved_quantities(&init, &cfg).unwrap();
        let ledger: Vec<_> = with_h.iter().map(|s| conserved_quantities(s, &cfg).unwrap()).collect();
        let drift = conservation_drift(&q0, &ledger);
        assert!(drift.iter().all(|d| *d <= 1e-10), "{drift:?}");
    }
}
