//! Small dense-matrix helpers on top of `nalgebra`. Parameter dimensions here
//! are tiny (p <= 2 for the shipped families) so everything goes through SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition number threshold above which a matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::NAN;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a square matrix, failing with [`Error::Singular`] when the
/// condition number exceeds [`MAX_CONDITION`] or entries are non-finite.
pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} has non-finite entries")));
    }
    let condition = condition_number(m);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition,
        });
    }
    m.clone().try_inverse().ok_or(Error::Singular {
        what: what.to_string(),
        condition,
    })
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky of `m + jitter * I` succeeds.
pub fn is_psd(m: &DMatrix<f64>, jitter: f64) -> bool {
    let n = m.nrows();
    let scale = m.diagonal().iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
    let shifted = symmetrize(m) + DMatrix::identity(n, n) * (jitter * scale.max(f64::MIN_POSITIVE));
    shifted.cholesky().is_some()
}

/// Numerical rank using singular values relative to the largest one.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * max).count()
}

/// `xᵀ A x`.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * a * x)[(0, 0)]
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

/// Serde adapter writing a matrix as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(super::from_rows(&rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(inverse(&m, "m"), Err(Error::Singular { .. })));
        assert_eq!(rank(&m, 1e-10), 1);
    }

    #[test]
    fn psd_check() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(is_psd(&m, 1e-12));
        let n = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(!is_psd(&n, 1e-12));
    }
}
