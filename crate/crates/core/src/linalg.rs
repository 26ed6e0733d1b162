//! Dense complex helpers on top of `faer`.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};

use crate::error::{Error, Result};

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: c64 = c64 { re: 1.0, im: 0.0 };

pub(crate) fn real(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn adjoint(m: &Mat<c64>) -> Mat<c64> {
    m.adjoint().to_owned()
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

pub fn max_abs(a: &Mat<c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max(a[(i, j)].norm());
        }
    }
    worst
}

pub fn hermiticity_error(a: &Mat<c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows() - 1) {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(a + a†) / 2`
pub fn hermitize(a: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn trace(a: &Mat<c64>) -> c64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// Kronecker product `a ⊗ b`; the first factor is the slow index.
pub fn kron(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    let mut out = Mat::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    add_kron(&mut out, ONE, a, b);
    out
}

/// `dst += alpha * (a ⊗ b)`, skipping exact zeros of `a`.
pub fn add_kron(dst: &mut Mat<c64>, alpha: c64, a: &Mat<c64>, b: &Mat<c64>) {
    let (br, bc) = (b.nrows(), b.ncols());
    for ja in 0..a.ncols() {
        for ia in 0..a.nrows() {
            let s = a[(ia, ja)];
            if s == ZERO {
                continue;
            }
            let s = s * alpha;
            for jb in 0..bc {
                for ib in 0..br {
                    let v = b[(ib, jb)];
                    if v != ZERO {
                        dst[(ia * br + ib, ja * bc + jb)] += s * v;
                    }
                }
            }
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix (ascending eigenvalues).
pub fn hermitian_eigen(a: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let h = hermitize(a);
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver: {e:?}")))?;
    let values = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(a: &Mat<c64>) -> Result<Vec<f64>> {
    hermitize(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver: {e:?}")))
}

/// Principal square root of a positive semidefinite Hermitian matrix.
/// Eigenvalues below zero (numerical noise) are clipped.
pub fn psd_sqrt(a: &Mat<c64>) -> Result<Mat<c64>> {
    let (vals, vecs) = hermitian_eigen(a)?;
    let n = vals.len();
    let roots: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    Ok(Mat::from_fn(n, n, |i, j| {
        let mut acc = ZERO;
        for k in 0..n {
            acc += vecs[(i, k)] * roots[k] * vecs[(j, k)].conj();
        }
        acc
    }))
}

pub fn inverse(a: &Mat<c64>) -> Mat<c64> {
    let n = a.nrows();
    a.partial_piv_lu().solve(Mat::<c64>::identity(n, n))
}

fn one_norm(a: &Mat<c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &Mat<c64>) -> f64 {
    a.norm_l2()
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant (Higham 2005 coefficients).
pub fn expm(a: &Mat<c64>) -> Result<Mat<c64>> {
    const B: [f64; 14] = [
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
    const THETA_13: f64 = 5.371920351148152;

    let n = a.nrows();
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::Numerical("expm of a non-finite matrix".into()));
    }
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * faer::Scale(real(0.5f64.powi(squarings)));
    let id = Mat::<c64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let s = |c: f64| faer::Scale(real(c));

    let inner_u = &a6 * (&a6 * s(B[13]) + &a4 * s(B[11]) + &a2 * s(B[9]));
    let u_poly = inner_u + &a6 * s(B[7]) + &a4 * s(B[5]) + &a2 * s(B[3]) + &id * s(B[1]);
    let u = &scaled * u_poly;
    let inner_v = &a6 * (&a6 * s(B[12]) + &a4 * s(B[10]) + &a2 * s(B[8]));
    let v = inner_v + &a6 * s(B[6]) + &a4 * s(B[4]) + &a2 * s(B[2]) + &id * s(B[0]);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !r.norm_l2().is_finite() {
        return Err(Error::Numerical("expm produced non-finite entries".into()));
    }
    Ok(r)
}
