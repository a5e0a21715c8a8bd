//! One-dimensional quadrature rules and polynomial bases.
//!
//! Gauss–Legendre rules and Legendre tables are generic over the float type;
//! rules built from a Jacobi matrix eigen-solve (half-range radial Gauss,
//! Gauss–Hermite) are `f64` only.

use faer::{Mat, Side};
use num_traits::{Float, FloatConst, FromPrimitive};

use crate::error::{KineticError, Result};

const NEWTON_MAX_ITERS: usize = 100;

/// Panels used to discretize the radial weight before the Stieltjes procedure.
const STIELTJES_PANELS: usize = 40;
const STIELTJES_PANEL_POINTS: usize = 40;

fn cst<T: FromPrimitive>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in float type")
}

/// Gauss–Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre<T: Float + FloatConst + FromPrimitive>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut x = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let nt: T = cst(n as f64);
    let tol = T::epsilon() * cst(4.0);
    for i in 0..n.div_ceil(2) {
        let mut z = (T::PI() * (cst::<T>(i as f64) + cst(0.75)) / (nt + cst(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..NEWTON_MAX_ITERS {
            let (p, pm1) = legendre_pair(n, z);
            dp = nt * (z * p - pm1) / (z * z - T::one());
            let dz = p / dp;
            z = z - dz;
            if dz.abs() <= tol {
                let (p, pm1) = legendre_pair(n, z);
                dp = nt * (z * p - pm1) / (z * z - T::one());
                break;
            }
        }
        let wi = cst::<T>(2.0) / ((T::one() - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = T::zero();
    }
    (x, w)
}

/// (P_n(z), P_{n-1}(z)) by the three-term recurrence.
fn legendre_pair<T: Float + FromPrimitive>(n: usize, z: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = z;
    if n == 0 {
        return (p0, T::zero());
    }
    for l in 1..n {
        let lf: T = cst(l as f64);
        let p2 = ((lf + lf + T::one()) * z * p1 - lf * p0) / (lf + T::one());
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre::<f64>(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    (x.iter().map(|&t| c + h * t).collect(), w.iter().map(|&t| h * t).collect())
}

/// Fills `out[l] = P_l(u)` for l = 0..out.len().
pub fn legendre_table<T: Float + FromPrimitive>(u: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    out[0] = T::one();
    if out.len() > 1 {
        out[1] = u;
    }
    for l in 1..out.len().saturating_sub(1) {
        let lf: T = cst(l as f64);
        out[l + 1] = ((lf + lf + T::one()) * u * out[l] - lf * out[l - 1]) / (lf + T::one());
    }
}

/// Gauss rule from recurrence coefficients (Golub–Welsch).
fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    let jac = Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    });
    let evd = jac
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| KineticError::Numerical(format!("Jacobi matrix eigen-solve: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let nodes: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let weights: Vec<f64> = (0..n).map(|i| mu0 * u[(0, i)] * u[(0, i)]).collect();
    Ok((nodes, weights))
}

/// Gauss rule on [0, inf) for the weight rho^2 exp(-alpha rho^2).
///
/// The recurrence is obtained by the discretized Stieltjes procedure on a
/// composite Gauss–Legendre rule, so nodes of all polynomial degrees (not
/// only even ones) are produced.
pub fn radial_gauss(n: usize, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || alpha <= 0.0 {
        return Err(KineticError::Config(format!(
            "radial rule needs n > 0 and alpha > 0 (got n = {n}, alpha = {alpha})"
        )));
    }
    let cutoff = ((2 * n + 100) as f64 / alpha).sqrt();
    let (px, pw) = gauss_legendre::<f64>(STIELTJES_PANEL_POINTS);
    let h = cutoff / STIELTJES_PANELS as f64;
    let mut xs = Vec::with_capacity(STIELTJES_PANELS * STIELTJES_PANEL_POINTS);
    let mut ws = Vec::with_capacity(xs.capacity());
    for p in 0..STIELTJES_PANELS {
        let a = p as f64 * h;
        for (t, wt) in px.iter().zip(&pw) {
            let x = a + 0.5 * h * (t + 1.0);
            xs.push(x);
            ws.push(0.5 * h * wt * x * x * (-alpha * x * x).exp());
        }
    }
    let mu0: f64 = ws.iter().sum();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut p_prev = vec![0.0; xs.len()];
    let mut p: Vec<f64> = vec![1.0 / mu0.sqrt(); xs.len()];
    for k in 0..n {
        let a_k: f64 = xs.iter().zip(&ws).zip(&p).map(|((x, w), q)| w * x * q * q).sum();
        diag[k] = a_k;
        if k + 1 < n {
            let b_prev = if k > 0 { off[k - 1] } else { 0.0 };
            let q: Vec<f64> = (0..xs.len())
                .map(|i| (xs[i] - a_k) * p[i] - b_prev * p_prev[i])
                .collect();
            let b_k = q.iter().zip(&ws).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
            off[k] = b_k;
            p_prev = std::mem::replace(&mut p, q.iter().map(|v| v / b_k).collect());
        }
    }
    golub_welsch(&diag, &off, mu0)
}

/// Gauss–Hermite rule for the weight exp(-alpha x^2) on the real line.
pub fn gauss_hermite(n: usize, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / (2.0 * alpha)).sqrt()).collect();
    let (mut x, w) = golub_welsch(&diag, &off, (std::f64::consts::PI / alpha).sqrt())?;
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

/// Lagrange cardinal polynomials on a fixed node set.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
    denom: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(nodes: &[f64]) -> Self {
        let denom = nodes
            .iter()
            .enumerate()
            .map(|(j, &xj)| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, &xk)| xj - xk)
                    .product()
            })
            .collect();
        Self { nodes: nodes.to_vec(), denom }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Writes l_j(x) for every node j into `out`; exact (0/1) at the nodes.
    pub fn eval(&self, x: f64, out: &mut [f64]) {
        let n = self.nodes.len();
        if let Some(hit) = self.nodes.iter().position(|&t| t == x) {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[hit] = 1.0;
            return;
        }
        let mut prefix = 1.0;
        for j in 0..n {
            out[j] = prefix;
            prefix *= x - self.nodes[j];
        }
        let mut suffix = 1.0;
        for j in (0..n).rev() {
            out[j] *= suffix / self.denom[j];
            suffix *= x - self.nodes[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre::<f64>(7);
        for deg in 0..14 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
    }

    #[test]
    fn legendre_rule_in_single_precision() {
        let (x, w) = gauss_legendre::<f32>(5);
        let q: f32 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((q - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn radial_rule_reproduces_half_range_moments() {
        let alpha = 0.5;
        let (x, w) = radial_gauss(10, alpha).unwrap();
        // int_0^inf rho^(2+m) exp(-alpha rho^2) = Gamma((m+3)/2) / (2 alpha^((m+3)/2))
        let gamma_half = |k: usize| -> f64 {
            // Gamma(k/2)
            let mut g = if k % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
            let mut s = if k % 2 == 0 { 1.0 } else { 0.5 };
            while s < k as f64 / 2.0 - 0.25 {
                g *= s;
                s += 1.0;
            }
            g
        };
        for m in 0..19 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(m as i32)).sum();
            let exact = gamma_half(m + 3) / (2.0 * alpha.powf((m as f64 + 3.0) / 2.0));
            assert!(((q - exact) / exact).abs() < 1e-12, "moment {m}: {q} vs {exact}");
        }
    }

    #[test]
    fn hermite_rule_reproduces_gaussian_moments() {
        let (x, w) = gauss_hermite(9, 0.5).unwrap();
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        let s = (2.0 * std::f64::consts::PI).sqrt();
        assert!((m0 - s).abs() < 1e-13);
        assert!((m2 - s).abs() < 1e-13);
        assert!((m4 - 3.0 * s).abs() < 1e-12);
    }

    #[test]
    fn lagrange_cardinals_partition_unity() {
        let (x, _) = gauss_legendre_on(8, 0.0, 3.0);
        let basis = LagrangeBasis::new(&x);
        let mut out = vec![0.0; 8];
        basis.eval(1.234, &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        basis.eval(x[3], &mut out);
        assert_eq!(out[3], 1.0);
        assert_eq!(out[4], 0.0);
        let cubic = |t: f64| 1.0 - 2.0 * t + 0.5 * t.powi(3);
        basis.eval(2.2, &mut out);
        let interp: f64 = out.iter().zip(&x).map(|(l, &t)| l * cubic(t)).sum();
        assert!((interp - cubic(2.2)).abs() < 1e-12);
    }
}
