use super::Matrix;
use crate::error::{ensure, Error, Result};
use nalgebra::DMatrix;

/// Relative singular-value cutoff used by the minimum-norm solve.
const SVD_RTOL: f64 = 1e-12;

fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
    // nalgebra stores column-major; its transpose's storage is our row-major layout
    let t = m.transpose();
    Matrix::from_vec(m.nrows(), m.ncols(), t.as_slice().to_vec()).expect("shape preserved")
}

/// Least-squares solve of `A X ≈ B` through a thin SVD of `A`.
///
/// With `lambda > 0` this is the ridge solution `(AᵀA + λI)⁻¹AᵀB`, computed as
/// `V diag(σ / (σ² + λ)) Uᵀ B`. With `lambda == 0` singular values at or below
/// `max(N, D) · σmax · 1e-12` are dropped, giving the minimum-norm solution.
pub fn solve_least_squares(a: &Matrix, b: &Matrix, lambda: f64) -> Result<Matrix> {
    ensure!(
        a.rows() == b.rows(),
        Dimension,
        "A has {} rows but B has {}",
        a.rows(),
        b.rows()
    );
    ensure!(
        lambda >= 0.0 && lambda.is_finite(),
        InvalidArgument,
        "ridge lambda must be finite and >= 0, got {lambda}"
    );
    ensure!(a.is_finite(), Numerical, "least-squares design matrix is not finite");
    ensure!(b.is_finite(), Numerical, "least-squares targets are not finite");
    let (n, d) = a.shape();
    let k = b.cols();
    if n == 0 || d == 0 {
        return Ok(Matrix::zeros(d, k));
    }

    let svd = to_nalgebra(a).svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not return Vᵀ".into()))?;
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let tol = n.max(d) as f64 * sigma_max * SVD_RTOL;

    let factors: Vec<f64> = sigma
        .iter()
        .map(|&s| {
            if lambda > 0.0 {
                s / (s * s + lambda)
            } else if s > tol {
                1.0 / s
            } else {
                0.0
            }
        })
        .collect();

    // X = V · diag(factors) · (Uᵀ B)
    let mut ut_b = u.transpose() * to_nalgebra(b);
    for (i, f) in factors.iter().enumerate() {
        ut_b.row_mut(i).scale_mut(*f);
    }
    let x = v_t.transpose() * ut_b;
    let out = from_nalgebra(&x);
    ensure!(out.is_finite(), Numerical, "least-squares solution is not finite");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    #[test]
    fn identity_system() {
        let x = solve_least_squares(
            &Matrix::identity(2),
            &Matrix::column(&[1.0, 2.0]),
            0.0,
        )
        .unwrap();
        assert!(x.max_abs_diff(&Matrix::column(&[1.0, 2.0])) < 1e-14);
    }

    #[test]
    fn overdetermined_single_column_is_mean() {
        let a = Matrix::column(&[1.0, 1.0]);
        let x = solve_least_squares(&a, &Matrix::column(&[0.0, 2.0]), 0.0).unwrap();
        assert_eq!(x.shape(), (1, 1));
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ridge_on_identity_halves() {
        let x = solve_least_squares(&Matrix::identity(2), &Matrix::column(&[1.0, 1.0]), 1.0)
            .unwrap();
        assert!(x.max_abs_diff(&Matrix::column(&[0.5, 0.5])) < 1e-14);
    }

    #[test]
    fn zero_design_gives_zero_solution() {
        let x = solve_least_squares(&Matrix::zeros(3, 2), &Matrix::filled(3, 4, 1.0), 0.0)
            .unwrap();
        assert_eq!(x, Matrix::zeros(2, 4));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            solve_least_squares(&Matrix::zeros(3, 2), &Matrix::zeros(2, 1), 0.0),
            Err(Error::Dimension(_))
        ));
        assert!(solve_least_squares(&Matrix::zeros(3, 2), &Matrix::zeros(3, 1), -1.0).is_err());
    }

    #[test]
    fn underdetermined_gives_minimum_norm() {
        // x1 + x2 = 2 -> minimum-norm solution (1, 1)
        let a = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let x = solve_least_squares(&a, &Matrix::column(&[2.0]), 0.0).unwrap();
        assert!(x.max_abs_diff(&Matrix::column(&[1.0, 1.0])) < 1e-12);
    }

    #[test]
    fn rank_deficient_truncates() {
        // duplicated column: minimum-norm splits the weight evenly
        let a = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let b = Matrix::column(&[2.0, 4.0, 6.0]);
        let x = solve_least_squares(&a, &b, 0.0).unwrap();
        assert!(x.max_abs_diff(&Matrix::column(&[1.0, 1.0])) < 1e-10);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let mut rng = Rng::new(11);
        let a = rng.normal_matrix(12, 5, 0.0, 1.0);
        let b = rng.normal_matrix(12, 3, 0.0, 1.0);
        let lambda = 0.7;
        let x = solve_least_squares(&a, &b, lambda).unwrap();
        // (AᵀA + λI) X == AᵀB
        let at = a.transpose();
        let lhs = at
            .matmul(&a)
            .unwrap()
            .add(&Matrix::identity(5).scale(lambda))
            .unwrap()
            .matmul(&x)
            .unwrap();
        let rhs = at.matmul(&b).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }
}
