//! Second-order finite-difference stencils on node-major `[node][component]`
//! rows. Periodic rows wrap; line rows use one-sided second-order formulas
//! at the two end nodes.

use num_complex::Complex64;

use crate::linalg::ZERO;

#[inline]
fn idx(i: isize, nx: usize) -> usize {
    i.rem_euclid(nx as isize) as usize
}

/// `∂_x` of `row` into `out`.
pub fn d1(row: &[Complex64], nx: usize, k: usize, dx: f64, periodic: bool, out: &mut [Complex64]) {
    let inv = 1.0 / (2.0 * dx);
    for i in 0..nx {
        for c in 0..k {
            let at = |j: usize| row[j * k + c];
            let v = if periodic {
                at(idx(i as isize + 1, nx)) - at(idx(i as isize - 1, nx))
            } else if i == 0 {
                -3.0 * at(0) + 4.0 * at(1) - at(2)
            } else if i == nx - 1 {
                3.0 * at(nx - 1) - 4.0 * at(nx - 2) + at(nx - 3)
            } else {
                at(i + 1) - at(i - 1)
            };
            out[i * k + c] = v * inv;
        }
    }
}

/// `∂_x²` of `row` into `out`.
pub fn d2(row: &[Complex64], nx: usize, k: usize, dx: f64, periodic: bool, out: &mut [Complex64]) {
    let inv = 1.0 / (dx * dx);
    for i in 0..nx {
        for c in 0..k {
            let at = |j: usize| row[j * k + c];
            let v = if periodic {
                at(idx(i as isize + 1, nx)) - 2.0 * at(i) + at(idx(i as isize - 1, nx))
            } else if i == 0 {
                2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)
            } else if i == nx - 1 {
                2.0 * at(nx - 1) - 5.0 * at(nx - 2) + 4.0 * at(nx - 3) - at(nx - 4)
            } else {
                at(i + 1) - 2.0 * at(i) + at(i - 1)
            };
            out[i * k + c] = v * inv;
        }
    }
}

/// Fourth difference `δ⁴` (undivided) into `out`; zero within two nodes of
/// a line boundary.
pub fn delta4(row: &[Complex64], nx: usize, k: usize, periodic: bool, out: &mut [Complex64]) {
    for i in 0..nx {
        for c in 0..k {
            let v = if periodic {
                let at = |o: isize| row[idx(i as isize + o, nx) * k + c];
                at(2) - 4.0 * at(1) + 6.0 * at(0) - 4.0 * at(-1) + at(-2)
            } else if i < 2 || i + 2 >= nx {
                ZERO
            } else {
                let at = |j: usize| row[j * k + c];
                at(i + 2) - 4.0 * at(i + 1) + 6.0 * at(i) - 4.0 * at(i - 1) + at(i - 2)
            };
            out[i * k + c] = v;
        }
    }
}

/// Weights `(level, weight)` of the first time derivative at level `j`.
pub fn time_d1(j: usize, nt: usize, dt: f64) -> [(usize, f64); 3] {
    let h = 1.0 / (2.0 * dt);
    if j == 0 {
        [(0, -3.0 * h), (1, 4.0 * h), (2, -h)]
    } else if j == nt - 1 {
        [(nt - 1, 3.0 * h), (nt - 2, -4.0 * h), (nt - 3, h)]
    } else {
        [(j + 1, h), (j - 1, -h), (j, 0.0)]
    }
}

/// Weights of the second time derivative at level `j`.
pub fn time_d2(j: usize, nt: usize, dt: f64) -> [(usize, f64); 4] {
    let h = 1.0 / (dt * dt);
    if j == 0 {
        [(0, 2.0 * h), (1, -5.0 * h), (2, 4.0 * h), (3, -h)]
    } else if j == nt - 1 {
        [(nt - 1, 2.0 * h), (nt - 2, -5.0 * h), (nt - 3, 4.0 * h), (nt - 4, -h)]
    } else {
        [(j + 1, h), (j, -2.0 * h), (j - 1, h), (j, 0.0)]
    }
}
