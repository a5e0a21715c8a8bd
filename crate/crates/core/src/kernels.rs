//! Pointwise hard-sphere collision frequencies and kernels.
//!
//! Angular integrals use the measure dn = dOmega / pi on the hemisphere,
//! so that the loss rate of a particle against a unit Maxwellian is the
//! printed collision frequency. Radial helpers return `K * |xi - xi_*|`,
//! which is smooth across the diagonal.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{KineticError, Result};
use crate::grid::MixtureConfig;
use crate::quadrature::gauss_legendre_on;

const SMALL_SPEED: f64 = 1e-6;

/// Mass ratio within which the cross gain kernel is taken in its equal-mass closed form.
const EQUAL_MASS_EPS: f64 = 1e-10;

fn norm_sq(x: [f64; 3]) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

fn distance(x: [f64; 3], y: [f64; 3]) -> f64 {
    norm_sq([x[0] - y[0], x[1] - y[1], x[2] - y[2]]).sqrt()
}

/// (2 pi)^{-3/4} exp(-mass_ratio |xi|^2 / 4); `mass_ratio = 1` gives sqrt(M_B).
pub fn sqrt_maxwellian(xi: [f64; 3], mass_ratio: f64) -> f64 {
    (2.0 * PI).powf(-0.75) * (-0.25 * mass_ratio * norm_sq(xi)).exp()
}

pub fn maxwellian(xi: [f64; 3], mass_ratio: f64) -> f64 {
    sqrt_maxwellian(xi, mass_ratio).powi(2)
}

/// Hard-sphere collision frequency at speed `s` for radii sum `sigma`.
pub fn collision_frequency(s: f64, sigma: f64) -> f64 {
    let pre = sigma * sigma / (2.0 * PI).sqrt();
    if s < SMALL_SPEED {
        return pre * 4.0 * (1.0 + s * s / 6.0);
    }
    let integral = (PI / 2.0).sqrt() * libm::erf(s / 2f64.sqrt());
    pre * (2.0 * (-0.5 * s * s).exp() + 2.0 * (s + 1.0 / s) * integral)
}

pub fn nu_bb(xi: [f64; 3], config: &MixtureConfig) -> f64 {
    collision_frequency(norm_sq(xi).sqrt(), config.sigma_bb)
}

/// Cross collision frequency: the single-species one rescaled by (sigma_AB / sigma_BB)^2.
pub fn nu_ab(xi: [f64; 3], config: &MixtureConfig) -> f64 {
    (config.sigma_ab / config.sigma_bb).powi(2) * nu_bb(xi, config)
}

/// `K_BB * v` for speeds a = |xi|, b = |xi_*| and separation v = |xi - xi_*|.
pub fn bb_kernel_times_distance(a: f64, b: f64, v: f64, sigma: f64) -> f64 {
    let gain = 2.0 * (-(a * a - b * b).powi(2) / (8.0 * v * v) - v * v / 8.0).exp();
    let loss = 0.5 * v * v * (-(a * a + b * b) / 4.0).exp();
    sigma * sigma / (PI * (2.0 * PI).sqrt()) * (gain - loss)
}

/// `k_AB * v`; `mass_ratio` is m_A / m_B.
pub fn ab_kernel_times_distance(a: f64, b: f64, v: f64, sigma: f64, mass_ratio: f64) -> f64 {
    let mu = mass_ratio;
    let e = -(b * b - a * a).powi(2) / (8.0 * v * v) - mu * mu * v * v / 8.0;
    sigma * sigma / (8.0 * PI).sqrt() * (1.0 + mu).powi(2) / (2.0 * PI) * e.exp()
}

fn check_off_diagonal(xi: [f64; 3], xi_star: [f64; 3]) -> Result<f64> {
    let v = distance(xi, xi_star);
    if v == 0.0 {
        return Err(KineticError::DiagonalSingularity);
    }
    Ok(v)
}

/// Single-species kernel K(xi, xi_*).
pub fn kernel_bb(xi: [f64; 3], xi_star: [f64; 3], config: &MixtureConfig) -> Result<f64> {
    let v = check_off_diagonal(xi, xi_star)?;
    let (a, b) = (norm_sq(xi).sqrt(), norm_sq(xi_star).sqrt());
    Ok(bb_kernel_times_distance(a, b, v, config.sigma_bb) / v)
}

/// Cross kernel k_AB(xi, xi_*) of the A-species operator.
pub fn kernel_ab(xi: [f64; 3], xi_star: [f64; 3], config: &MixtureConfig) -> Result<f64> {
    let v = check_off_diagonal(xi, xi_star)?;
    let (a, b) = (norm_sq(xi).sqrt(), norm_sq(xi_star).sqrt());
    Ok(ab_kernel_times_distance(a, b, v, config.sigma_ab, config.mass_ratio()) / v)
}

/// Kernel of f -> L_BA f, the B-species response to an A perturbation.
pub fn kernel_ba(xi: [f64; 3], xi_star: [f64; 3], config: &MixtureConfig, order: usize) -> Result<f64> {
    let v = check_off_diagonal(xi, xi_star)?;
    let (a, b) = (norm_sq(xi).sqrt(), norm_sq(xi_star).sqrt());
    Ok(ba_kernel_times_distance(a, b, v, config.sigma_ab, config.mass_ratio(), order) / v)
}

/// `(gain - loss) * v` for the cross operator L_BA; `order` is the Gauss order per
/// panel of the inner integral along the relative-velocity direction.
///
/// With c = 2 m_B / (m_A + m_B) and kappa = c / (1 - c), the gain part is
/// sqrt(M_B(a)) / ((1-c)^2 sqrt(M_A(b))) * 2 (2 pi)^{-3/2} v
///   * int_0^1 x exp(-(mu/2)(b^2 + 2 kappa v x^2 b_par + kappa^2 v^2 x^2)) I_0(mu kappa v x sqrt(1-x^2) b_perp) dx,
/// where b_par, b_perp are the components of xi_* along and across xi_* - xi.
pub fn ba_kernel_times_distance(a: f64, b: f64, v: f64, sigma: f64, mass_ratio: f64, order: usize) -> f64 {
    let mu = mass_ratio;
    let s2 = sigma * sigma;
    let loss = s2 * (2.0 * PI).powf(-1.5) * (-a * a / 4.0 - mu * b * b / 4.0).exp() * v;
    let gain = if (mu - 1.0).abs() < EQUAL_MASS_EPS {
        ab_kernel_times_distance(a, b, v, sigma, 1.0) / v
    } else {
        ba_gain(a, b, v, s2, mu, order)
    };
    (gain - loss) * v
}

fn ba_gain(a: f64, b: f64, v: f64, s2: f64, mu: f64, order: usize) -> f64 {
    let c = 2.0 / (mu + 1.0);
    let kappa = c / (1.0 - c);
    let b_par = (b * b - a * a + v * v) / (2.0 * v);
    let b_perp = (b * b - b_par * b_par).max(0.0).sqrt();
    let x_split = (6.0 / (kappa.abs() * v * mu.sqrt())).min(1.0);
    let mut panels = vec![(0.0, x_split)];
    if x_split < 1.0 {
        panels.push((x_split, 1.0));
    }
    let mut integral = 0.0;
    for (lo, hi) in panels {
        let (xs, ws) = gauss_legendre_on(order, lo, hi);
        for (&x, &w) in xs.iter().zip(&ws) {
            let z = mu * kappa.abs() * v * x * (1.0 - x * x).max(0.0).sqrt() * b_perp;
            let expo = mu * b * b / 4.0 - a * a / 4.0
                - 0.5 * mu * (b * b + 2.0 * kappa * v * x * x * b_par + kappa * kappa * v * v * x * x)
                + z;
            integral += w * x * expo.exp() * i0e(z);
        }
    }
    s2 * (2.0 * PI).powf(-1.5) / (1.0 - c).powi(2) * 2.0 * v * integral
}

/// Largest argument handled by the trapezoidal rule; beyond it the asymptotic series is used.
const I0E_SERIES_FROM: f64 = 30.0;

fn cosine_tables() -> &'static Vec<Vec<f64>> {
    static TABLES: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLES.get_or_init(|| {
        let max_m = trapezoid_points(I0E_SERIES_FROM);
        (0..=max_m)
            .map(|m| (0..=m).map(|j| (PI * j as f64 / m.max(1) as f64).cos() - 1.0).collect())
            .collect()
    })
}

fn trapezoid_points(z: f64) -> usize {
    12 + (6.0 * z.sqrt()).ceil() as usize
}

/// Exponentially scaled modified Bessel function exp(-z) I_0(z) for z >= 0.
pub fn i0e(z: f64) -> f64 {
    let z = z.abs();
    if z <= I0E_SERIES_FROM {
        // (1/pi) int_0^pi exp(z (cos p - 1)) dp; the trapezoidal rule is spectrally accurate here
        let m = trapezoid_points(z);
        let tab = &cosine_tables()[m];
        let mut acc = 0.5 * (1.0 + (z * tab[m]).exp());
        for t in &tab[1..m] {
            acc += (z * t).exp();
        }
        acc / m as f64
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            term *= (2.0 * kf - 1.0).powi(2) / (8.0 * kf * z);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum / (2.0 * PI * z).sqrt()
    }
}
