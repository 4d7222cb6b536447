//! Small dense complex matrices and flat row-major kernels used by the
//! time steppers.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Builds a matrix from real row-major entries.
pub fn real_matrix(k: usize, entries: &[f64]) -> CMatrix {
    assert_eq!(entries.len(), k * k);
    CMatrix::from_fn(k, k, |i, j| c(entries[i * k + j], 0.0))
}

pub fn max_abs_entry(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_zero(m: &CMatrix) -> bool {
    m.iter().all(|z| *z == ZERO)
}

/// Row-major flattening.
pub fn flatten_into(m: &CMatrix, out: &mut [Complex64]) {
    let k = m.nrows();
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = m[(i, j)];
        }
    }
}

/// `out += m * v` for a flat row-major `k x k` matrix.
#[inline]
pub fn matvec_acc(k: usize, m: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    for i in 0..k {
        let row = &m[i * k..(i + 1) * k];
        let mut s = out[i];
        for j in 0..k {
            s += row[j] * v[j];
        }
        out[i] = s;
    }
}

/// 1-norm condition estimate; infinite for singular input.
pub fn condition_estimate(m: &CMatrix) -> f64 {
    let norm1 = |a: &CMatrix| {
        (0..a.ncols())
            .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match m.clone().try_inverse() {
        Some(inv) => norm1(m) * norm1(&inv),
        None => f64::INFINITY,
    }
}
