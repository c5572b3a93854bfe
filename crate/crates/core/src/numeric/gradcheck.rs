use super::Matrix;
use crate::error::{ensure, Error, Result};

/// Central-difference gradient of `f` at `theta`.
pub fn finite_diff_grad<F>(mut f: F, theta: &Matrix, eps: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    ensure!(eps > 0.0, InvalidArgument, "finite-difference step must be > 0");
    let mut probe = theta.clone();
    let mut grad = Matrix::zeros(theta.rows(), theta.cols());
    for i in 0..theta.as_slice().len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - eps;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numerical(format!(
                "objective not finite when perturbing coordinate {i}"
            )));
        }
        grad.as_mut_slice()[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Slice form of [`finite_diff_grad`] for flat parameter vectors.
pub fn finite_diff_slice<F>(mut f: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let m = Matrix::column(theta);
    finite_diff_grad(|p| f(p.as_slice()), &m, eps).map(Matrix::into_vec)
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-12)`: relative disagreement of two gradients.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let g = finite_diff_grad(|x| x[(0, 0)].powi(2), &Matrix::filled(1, 1, 3.0), 1e-5).unwrap();
        assert!((g[(0, 0)] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff_grad(|_| 4.2, &Matrix::filled(3, 2, 1.0), 1e-5).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn product_gradient() {
        let theta = Matrix::from_rows(&[[2.0, 5.0]]).unwrap();
        let g = finite_diff_grad(|x| x[(0, 0)] * x[(0, 1)], &theta, 1e-5).unwrap();
        assert!((g[(0, 0)] - 5.0).abs() < 1e-7);
        assert!((g[(0, 1)] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_eps_and_nonfinite() {
        assert!(finite_diff_grad(|_| 0.0, &Matrix::zeros(1, 1), 0.0).is_err());
        assert!(matches!(
            finite_diff_grad(|x| 1.0 / x[(0, 0)].abs().min(0.0), &Matrix::zeros(1, 1), 1e-5),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn relative_error_scale_free() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        let e = relative_error(&[1e6, 0.0], &[1e6 + 1.0, 0.0]);
        assert!(e < 1e-6);
    }
}
