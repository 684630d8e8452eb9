//! Small closed-form helpers for 2x2 real matrices.

use nalgebra::{Complex, Matrix2};

/// Eigenvalues of a 2x2 real matrix.
pub fn eigenvalues2(m: &Matrix2<f64>) -> [Complex<f64>; 2] {
    let half_tr = 0.5 * m.trace();
    let det = m.determinant();
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = if half_tr >= 0.0 {
            half_tr + r
        } else {
            half_tr - r
        };
        let small = if big != 0.0 { det / big } else { half_tr - r };
        [Complex::new(big, 0.0), Complex::new(small, 0.0)]
    } else {
        let i = (-disc).sqrt();
        [Complex::new(half_tr, i), Complex::new(half_tr, -i)]
    }
}

pub fn spectral_radius2(m: &Matrix2<f64>) -> f64 {
    let [a, b] = eigenvalues2(m);
    a.norm().max(b.norm())
}

/// 2-norm condition number via singular values.
pub fn condition2(m: &Matrix2<f64>) -> f64 {
    let s = m.singular_values();
    let (hi, lo) = (s.max(), s.min());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_and_complex_spectra() {
        let m = Matrix2::new(2.0, 0.0, 0.0, -3.0);
        assert_eq!(spectral_radius2(&m), 3.0);
        let rot = Matrix2::new(0.0, -0.5, 0.5, 0.0);
        assert!((spectral_radius2(&rot) - 0.5).abs() < 1e-15);
        let nil = Matrix2::new(1.0, 1.0, -1.0, -1.0);
        assert!(spectral_radius2(&nil) < 1e-12);
        assert!(condition2(&Matrix2::new(1.0, 2.0, 2.0, 4.0)) > 1e15);
    }
}
