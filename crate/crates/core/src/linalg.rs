//! Dense complex helpers.
//!
//! nalgebra's complex GEMM is a scalar loop; the hot products here are split
//! into real GEMMs, which go through the blocked kernels.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub fn split(a: &CMat) -> (RMat, RMat) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

pub fn join(re: &RMat, im: &RMat) -> CMat {
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

/// `a * b`.
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    mul_split(&ar, &ai, &br, &bi)
}

pub fn mul_split(ar: &RMat, ai: &RMat, br: &RMat, bi: &RMat) -> CMat {
    let re = ar * br - ai * bi;
    let im = ar * bi + ai * br;
    join(&re, &im)
}

/// `aᴴ * b`.
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    adjoint_mul_split(&ar, &ai, &br, &bi)
}

pub fn adjoint_mul_split(ar: &RMat, ai: &RMat, br: &RMat, bi: &RMat) -> CMat {
    let re = ar.tr_mul(br) + ai.tr_mul(bi);
    let im = ar.tr_mul(bi) - ai.tr_mul(br);
    join(&re, &im)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (p, q) = (b.nrows(), b.ncols());
    CMat::from_fn(a.nrows() * p, a.ncols() * q, |i, j| a[(i / p, j / q)] * b[(i % p, j % q)])
}

pub fn frobenius_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn expj(phase: f64) -> Complex64 {
    let (s, c) = phase.sin_cos();
    Complex64::new(c, s)
}
