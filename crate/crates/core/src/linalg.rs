//! Dense linear algebra helpers on top of faer.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};

use crate::error::{KineticError, Result};
use crate::Complex;

pub type RMat = Mat<f64>;
pub type CMat = Mat<Complex>;

/// Symmetric eigen-decomposition, eigenvalues ascending.
pub fn sym_eigen(a: &RMat) -> Result<(Vec<f64>, RMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| KineticError::Numerical(format!("symmetric eigensolve: {e:?}")))?;
    let s = evd.S();
    Ok(((0..a.nrows()).map(|i| s[i]).collect(), evd.U().to_owned()))
}

/// General complex eigen-decomposition (unsorted).
pub fn eigen(a: &CMat) -> Result<(Vec<Complex>, CMat)> {
    let evd = a.eigen().map_err(|e| KineticError::Numerical(format!("eigensolve: {e:?}")))?;
    let s = evd.S();
    Ok(((0..a.nrows()).map(|i| s[i]).collect(), evd.U().to_owned()))
}

fn check_finite_c(m: &CMat, what: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(KineticError::Numerical(format!("{what}: non-finite entry")));
            }
        }
    }
    Ok(())
}

pub fn inverse(a: &RMat) -> Result<RMat> {
    let inv = a.partial_piv_lu().inverse();
    if inv.norm_max().is_finite() {
        Ok(inv)
    } else {
        Err(KineticError::Numerical("singular matrix".into()))
    }
}

/// Solves a x = b for several right-hand sides.
pub fn solve(a: &RMat, b: &RMat) -> Result<RMat> {
    let x = a.partial_piv_lu().solve(b);
    if x.norm_max().is_finite() {
        Ok(x)
    } else {
        Err(KineticError::Numerical("singular linear solve".into()))
    }
}

pub fn to_complex(a: &RMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| Complex::new(a[(i, j)], 0.0))
}

fn scaled(a: &CMat, s: f64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by degree-13 Padé scaling and squaring.
pub fn expm(a: &CMat) -> Result<CMat> {
    check_finite_c(a, "matrix exponential input")?;
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = scaled(a, 0.5f64.powi(squarings));
    let id = CMat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = PADE13;
    let comb = |c6: f64, c4: f64, c2: f64| &(&scaled(&a6, c6) + &scaled(&a4, c4)) + &scaled(&a2, c2);
    let u_inner = &(&a6 * &comb(b[13], b[11], b[9])) + &(&comb(b[7], b[5], b[3]) + &scaled(&id, b[1]));
    let u = &a * &u_inner;
    let v = &(&a6 * &comb(b[12], b[10], b[8])) + &(&comb(b[6], b[4], b[2]) + &scaled(&id, b[0]));
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..squarings {
        r = &r * &r;
    }
    check_finite_c(&r, "matrix exponential")?;
    Ok(r)
}
