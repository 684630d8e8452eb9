//! General matrix exponential by scaling and squaring of a truncated Taylor
//! series. Serves as the numerical cross-check for the closed-form flow maps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_TERMS: usize = 40;

/// `exp(M t)` for a small dense matrix.
pub fn mat_exp_series(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidParams(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !t.is_finite() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let n = m.nrows();
    let scaled = m * t;
    // infinity norm (max row sum)
    let norm = (0..n)
        .map(|i| scaled.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    let mut squarings = 0u32;
    let mut s = norm;
    while s > 1.0 {
        s /= 2.0;
        squarings += 1;
    }
    let x = scaled / 2f64.powi(squarings as i32);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=MAX_TERMS {
        term = &term * &x / k as f64;
        result += &term;
        if term.amax() <= f64::EPSILON * 1e-3 * result.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gives_identity() {
        let e = mat_exp_series(&DMatrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal_case() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.7, -2.3]));
        let e = mat_exp_series(&m, 1.0).unwrap();
        assert!((e[(0, 0)] - 0.7f64.exp()).abs() < 1e-14 * 0.7f64.exp());
        assert!((e[(1, 1)] - (-2.3f64).exp()).abs() < 1e-13 * (-2.3f64).exp());
        assert_eq!(e[(0, 1)], 0.0);
        assert_eq!(e[(1, 0)], 0.0);
    }

    #[test]
    fn rotation_generator() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let th = 1.3;
        let e = mat_exp_series(&m, th).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        assert!((e - expected).amax() < 1e-14);
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(mat_exp_series(&m, 1.0), Err(Error::NonFinite(_))));
        assert!(mat_exp_series(&DMatrix::zeros(2, 3), 1.0).is_err());
    }
}
