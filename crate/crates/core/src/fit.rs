//! Curve fits for wave profiles: Gaussian humps, power laws and exponential tails.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{KineticError, Result};
use crate::linalg::solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Root-mean-square residual.
    pub rms: f64,
    pub points: usize,
}

/// Ordinary least squares y = slope x + intercept.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(KineticError::Fit(format!("linear fit needs >= 2 paired points, got {}", x.len().min(y.len()))));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(KineticError::Fit("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, r2, rms: (sse / n).sqrt(), points: x.len() })
}

/// Exponent p of y ~ t^p by regression in log-log coordinates.
pub fn power_law(t: &[f64], y: &[f64]) -> Result<LinearFit> {
    if y.iter().chain(t).any(|v| *v <= 0.0) {
        return Err(KineticError::Fit("power-law fit needs positive data".into()));
    }
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lt, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub center: f64,
    pub height: f64,
    /// Standard deviation.
    pub width: f64,
    /// RMS residual over the fitted window relative to the height.
    pub residual: f64,
}

impl GaussianFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.height * (-(x - self.center).powi(2) / (2.0 * self.width * self.width)).exp()
    }
}

/// Levenberg–Marquardt fit of h exp(-(x-c)^2 / (2 w^2)) to samples.
pub fn fit_gaussian(x: &[f64], y: &[f64]) -> Result<GaussianFit> {
    if x.len() != y.len() || x.len() < 4 {
        return Err(KineticError::Fit("Gaussian fit needs >= 4 points".into()));
    }
    // moment-based start
    let total: f64 = y.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(KineticError::Fit("Gaussian fit needs a positive hump".into()));
    }
    let c0 = x.iter().zip(y).map(|(a, b)| a * b.max(0.0)).sum::<f64>() / total;
    let var = x.iter().zip(y).map(|(a, b)| (a - c0).powi(2) * b.max(0.0)).sum::<f64>() / total;
    let h0 = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let start = GaussianFit { center: c0, height: h0, width: var.sqrt().max(1e-6), residual: 0.0 };
    Ok(fit_gaussians(x, y, &[start])?.remove(0))
}

/// Joint Levenberg–Marquardt fit of a sum of Gaussians from the given starting humps.
///
/// Every returned fit carries the RMS residual of the whole sum relative to its own height.
pub fn fit_gaussians(x: &[f64], y: &[f64], start: &[GaussianFit]) -> Result<Vec<GaussianFit>> {
    let np = 3 * start.len();
    if x.len() != y.len() || x.len() < np + 1 || start.is_empty() {
        return Err(KineticError::Fit(format!("{} points cannot determine {} Gaussians", x.len(), start.len())));
    }
    let mut p: Vec<f64> = start.iter().flat_map(|g| [g.height, g.center, g.width.abs().max(1e-9)]).collect();
    let model = |p: &[f64], a: f64| -> f64 {
        p.chunks(3).map(|q| q[0] * (-(a - q[1]).powi(2) / (2.0 * q[2] * q[2])).exp()).sum()
    };
    let sse = |p: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| (b - model(p, *a)).powi(2)).sum() };
    let mut lambda = 1e-3;
    let mut cur = sse(&p);
    let mut row = vec![0.0; np];
    for _ in 0..500 {
        let mut jtj = Mat::<f64>::zeros(np, np);
        let mut jtr = Mat::<f64>::zeros(np, 1);
        for (&a, &b) in x.iter().zip(y) {
            let r = b - model(&p, a);
            for (q, j) in p.chunks(3).zip(row.chunks_mut(3)) {
                let d = a - q[1];
                let e = (-d * d / (2.0 * q[2] * q[2])).exp();
                j[0] = e;
                j[1] = q[0] * e * d / (q[2] * q[2]);
                j[2] = q[0] * e * d * d / q[2].powi(3);
            }
            for r_ in 0..np {
                jtr[(r_, 0)] += row[r_] * r;
                for c in 0..np {
                    jtj[(r_, c)] += row[r_] * row[c];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let a = Mat::from_fn(np, np, |i, j| if i == j { jtj[(i, j)] * (1.0 + lambda) + 1e-300 } else { jtj[(i, j)] });
            let step = match solve(&a, &jtr) {
                Ok(s) if s.norm_max().is_finite() => s,
                _ => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(i, v)| if i % 3 == 2 { (v + step[(i, 0)]).abs().max(1e-9) } else { v + step[(i, 0)] })
                .collect();
            let s = sse(&trial);
            if s < cur {
                let rel = (cur - s) / cur.max(1e-300);
                p = trial;
                cur = s;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let rms = (cur / x.len() as f64).sqrt();
    Ok(p.chunks(3)
        .map(|q| GaussianFit { center: q[1], height: q[0], width: q[2], residual: rms / q[0].abs().max(1e-300) })
        .collect())
}

/// Spatial decay class of a profile tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum TailClass {
    Exponential { rate: f64, r2: f64 },
    Algebraic { power: f64, r2: f64 },
    Inconclusive { r2_exponential: f64, r2_algebraic: f64 },
}

/// Margin by which one regression's R^2 must beat the other.
const TAIL_MARGIN: f64 = 0.02;

/// Compares log-linear and log-log regressions of a positive tail.
pub fn classify_tail(x: &[f64], y: &[f64]) -> Result<TailClass> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(&a, &b)| (a, b)).collect();
    if pts.len() < 4 {
        return Err(KineticError::Fit("tail classification needs >= 4 positive points".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let e = linear_fit(&xs, &ly)?;
    let a = linear_fit(&lx, &ly)?;
    Ok(if e.r2 > a.r2 + TAIL_MARGIN {
        TailClass::Exponential { rate: -e.slope, r2: e.r2 }
    } else if a.r2 > e.r2 + TAIL_MARGIN {
        TailClass::Algebraic { power: a.slope, r2: a.r2 }
    } else {
        TailClass::Inconclusive { r2_exponential: e.r2, r2_algebraic: a.r2 }
    })
}

/// Indices of strict local maxima.
pub fn local_maxima(y: &[f64]) -> Vec<usize> {
    (1..y.len().saturating_sub(1)).filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1]).collect()
}
