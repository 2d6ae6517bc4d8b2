//! Householder-QR least squares with a reciprocal-condition guard.

use nalgebra::{DMatrix, DVector, Dyn, QR};

use crate::error::{ImputeError, Result};

/// Reciprocal condition threshold on the triangular factor; below it a fit is
/// reported singular instead of being pseudo-inverted.
pub const RCOND_THRESHOLD: f64 = 1e-10;

/// Factorization `A = QR` of a tall design matrix with full column rank.
pub(crate) struct LeastSquares {
    qr: QR<f64, Dyn, Dyn>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    pub(crate) fn new(a: DMatrix<f64>, label: &str) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows < cols {
            return Err(ImputeError::SingularFit {
                model: label.to_string(),
                reason: format!("{rows} observations for {cols} coefficients"),
            });
        }
        let qr = a.qr();
        let r = qr.r();
        let diag = r.diagonal().map(f64::abs);
        let (lo, hi) = (diag.min(), diag.max());
        let rcond = lo / hi;
        if hi.is_nan() || hi <= 0.0 || rcond.is_nan() || rcond < RCOND_THRESHOLD {
            return Err(ImputeError::SingularFit {
                model: label.to_string(),
                reason: format!(
                    "reciprocal condition estimate {:.3e}",
                    if hi > 0.0 { lo / hi } else { 0.0 }
                ),
            });
        }
        Ok(Self { qr, r })
    }

    pub(crate) fn cols(&self) -> usize {
        self.r.ncols()
    }

    /// argmin_b ||A b - y||.
    pub(crate) fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut qty = y.clone();
        self.qr.q_tr_mul(&mut qty);
        let head = qty.rows(0, self.cols()).into_owned();
        self.r
            .solve_upper_triangular(&head)
            .expect("triangular factor checked non-singular")
    }

    /// (A'A)^{-1} v.
    pub(crate) fn gram_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let z = self
            .r
            .tr_solve_upper_triangular(v)
            .expect("triangular factor checked non-singular");
        self.r
            .solve_upper_triangular(&z)
            .expect("triangular factor checked non-singular")
    }

    /// v' (A'A)^{-1} v.
    pub(crate) fn gram_quadratic(&self, v: &DVector<f64>) -> f64 {
        self.r
            .tr_solve_upper_triangular(v)
            .expect("triangular factor checked non-singular")
            .norm_squared()
    }
}
