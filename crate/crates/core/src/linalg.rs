use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Weighted least squares via QR of the row-scaled design.
///
/// Returns the `k × m` coefficient matrix for the `m` response columns.
pub(crate) fn weighted_least_squares(
    design: &DMatrix<f64>,
    response: &DMatrix<f64>,
    weights: Option<&[f64]>,
) -> Result<DMatrix<f64>> {
    let (n, k) = design.shape();
    if n < k {
        return Err(Error::RankDeficientDesign);
    }
    let mut a = design.clone();
    let mut b = response.clone();
    if let Some(w) = weights {
        for (i, &wi) in w.iter().enumerate() {
            let s = wi.sqrt();
            a.row_mut(i).scale_mut(s);
            b.row_mut(i).scale_mut(s);
        }
    }
    let qr = a.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if diag_max == 0.0 || r.diagonal().iter().any(|d| d.abs() <= 1e-10 * diag_max) {
        return Err(Error::RankDeficientDesign);
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb).ok_or(Error::RankDeficientDesign)
}

/// Design matrix `[1, a, b]` for the given rows.
pub(crate) fn intercept_design(a: &DMatrix<f64>, b: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let k = 1 + a.ncols() + b.ncols();
    DMatrix::from_fn(rows.len(), k, |r, c| {
        let i = rows[r];
        if c == 0 {
            1.0
        } else if c <= a.ncols() {
            a[(i, c - 1)]
        } else {
            b[(i, c - 1 - a.ncols())]
        }
    })
}

/// Type-7 sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exact_fit() {
        let d = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DMatrix::from_column_slice(4, 1, &[1.0, 3.0, 5.0, 7.0]);
        let b = weighted_least_squares(&d, &y, Some(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!((b[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((b[(1, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(weighted_least_squares(&d, &y, None), Err(Error::RankDeficientDesign)));
    }

    #[test]
    fn type7_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&s, 0.1) - 1.3).abs() < 1e-12);
    }
}
