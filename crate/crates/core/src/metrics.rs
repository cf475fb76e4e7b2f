//! Fraction of variance unexplained.

use crate::error::{check_dim, Error, Result};
use crate::linalg::DenseMatrix;

const DEGENERATE: f64 = 1e-12;

/// Pooled, mean-centered FVU: `sum_n |y_n - ŷ_n|^2 / sum_n |y_n - ȳ|^2` with
/// `ȳ` the mean of the reference outputs `y`. A constant reference gives 0 if
/// the prediction matches it and `+inf` otherwise.
pub fn fvu(predicted: &DenseMatrix, reference: &DenseMatrix) -> Result<f64> {
    check_dim("fvu sample count", reference.rows(), predicted.rows())?;
    check_dim("fvu output dimension", reference.cols(), predicted.cols())?;
    let n = reference.rows();
    if n == 0 {
        return Err(Error::InvalidInput("fvu needs at least one sample".into()));
    }
    let d = reference.cols();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, y) in mean.iter_mut().zip(reference.row(i)) {
            *m += y;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for ((y, p), m) in reference.row(i).iter().zip(predicted.row(i)).zip(&mean) {
            num += (y - p) * (y - p);
            den += (y - m) * (y - m);
        }
    }
    Ok(fvu_ratio(num, den))
}

/// The ratio with the degenerate-denominator convention applied.
pub fn fvu_ratio(num: f64, den: f64) -> f64 {
    if !num.is_finite() {
        return f64::INFINITY;
    }
    if den < DEGENERATE {
        if num < DEGENERATE {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let y = m(&[&[1.0, 2.0], &[-1.0, 0.5], &[3.0, 3.0]]);
        assert_eq!(fvu(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn mean_predictor_is_one() {
        let y = m(&[&[1.0, 2.0], &[3.0, 0.0]]);
        let mean = m(&[&[2.0, 1.0], &[2.0, 1.0]]);
        assert!((fvu(&mean, &y).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_right_half_mean_is_half() {
        let y = m(&[&[1.0], &[-1.0], &[2.0], &[-2.0]]);
        let p = m(&[&[1.0], &[-1.0], &[0.0], &[0.0]]);
        // reference variance 10, error 8 -> 0.8; symmetric halves of equal energy give 0.5
        assert!((fvu(&p, &y).unwrap() - 0.8).abs() < 1e-15);
        let y = m(&[&[1.0], &[-1.0], &[1.0], &[-1.0]]);
        let p = m(&[&[1.0], &[-1.0], &[0.0], &[0.0]]);
        assert!((fvu(&p, &y).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_reference() {
        let y = m(&[&[1.0], &[1.0]]);
        assert_eq!(fvu(&y, &y).unwrap(), 0.0);
        assert_eq!(fvu(&m(&[&[0.0], &[1.0]]), &y).unwrap(), f64::INFINITY);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        assert!(fvu(&m(&[&[1.0]]), &m(&[&[1.0], &[2.0]])).is_err());
    }
}
