use nalgebra::{Cholesky, SymmetricEigen};
use ndarray::{Array2, ArrayView2};

use super::linalg::{from_na, to_na};
use crate::error::{Error, Result};

/// Largest accepted condition number of `MᵀM`.
pub const MAX_CONDITION: f64 = 1e12;

/// Condition number of `MᵀM` from its eigenvalues (∞ when singular).
pub fn gram_condition(m: ArrayView2<'_, f64>) -> f64 {
    let gram = to_na(m.t().dot(&m).view());
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Moore–Penrose pseudoinverse `(MᵀM)⁻¹Mᵀ` of a full-column-rank `L × P`
/// matrix, via Cholesky on the `P × P` normal matrix.
pub fn pseudoinverse(m: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if m.ncols() == 0 || m.nrows() < m.ncols() {
        return Err(Error::invalid(format!(
            "pseudoinverse needs a tall matrix, got {} x {}",
            m.nrows(),
            m.ncols()
        )));
    }
    let condition = gram_condition(m);
    if !(condition < MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let gram = to_na(m.t().dot(&m).view());
    let chol = Cholesky::new(gram).ok_or(Error::RankDeficient { condition })?;
    let q = chol.solve(&to_na(m.t()));
    Ok(from_na(&q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn orthonormal_columns_give_transpose() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = array![[s, 0.0], [s, 0.0], [0.0, 1.0]];
        let q = pseudoinverse(m.view()).unwrap();
        for (a, b) in q.iter().zip(m.t().iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_column() {
        let m = array![[1.0], [2.0], [2.0]];
        let q = pseudoinverse(m.view()).unwrap();
        for (a, b) in q.iter().zip([1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_deficient_reports_condition() {
        let m = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        assert!(matches!(pseudoinverse(m.view()), Err(Error::RankDeficient { .. })));
    }
}
