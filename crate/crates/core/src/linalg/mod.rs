//! Dense real linear algebra: matrices, non-symmetric eigenvalues,
//! finite-difference Jacobians and definiteness tests via quadratic forms.

mod eigen;
mod matrix;
mod spectrum;

pub use eigen::eigenvalues;
pub use matrix::Matrix;
pub use num_complex::Complex64;
pub use spectrum::{Quotient, Spectrum};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinAlgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has zero dimension")]
    Empty,
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("QR iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid finite-difference scale {scale}")]
    InvalidScale { scale: f64 },
}

/// Default central-difference step scale, cube root of machine epsilon.
pub fn default_fd_scale() -> f64 {
    f64::EPSILON.cbrt()
}

/// Central-difference Jacobian of `field` at `x`.
///
/// Column `j` is `(field(x + d e_j) - field(x - d e_j)) / 2d` with
/// `d = scale * max(1, |x_j|)`. The field is evaluated `2 n` times.
pub fn fd_jacobian<F>(mut field: F, x: &[f64], scale: f64) -> Result<Matrix, LinAlgError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(LinAlgError::InvalidScale { scale });
    }
    let n = x.len();
    if n == 0 {
        return Err(LinAlgError::Empty);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinAlgError::NonFinite {
            context: "fd_jacobian input",
        });
    }
    let mut probe = x.to_vec();
    let mut out: Option<Matrix> = None;
    for j in 0..n {
        let xj = x[j];
        let delta = scale * xj.abs().max(1.0);
        let plus = xj + delta;
        let minus = xj - delta;
        probe[j] = plus;
        let fp = field(&probe);
        probe[j] = minus;
        let fm = field(&probe);
        probe[j] = xj;
        if fp.len() != fm.len() {
            return Err(LinAlgError::DimMismatch {
                expected: fp.len(),
                got: fm.len(),
            });
        }
        let m = match &mut out {
            Some(m) => {
                if m.rows() != fp.len() {
                    return Err(LinAlgError::DimMismatch {
                        expected: m.rows(),
                        got: fp.len(),
                    });
                }
                m
            }
            None => {
                out = Some(Matrix::zeros(fp.len(), n));
                out.as_mut().unwrap()
            }
        };
        let denom = plus - minus;
        for i in 0..fp.len() {
            let v = (fp[i] - fm[i]) / denom;
            if !v.is_finite() {
                return Err(LinAlgError::NonFinite {
                    context: "fd_jacobian field evaluation",
                });
            }
            m[(i, j)] = v;
        }
    }
    Ok(out.expect("n >= 1"))
}

/// Definiteness classification of the quadratic form `w -> w^T M w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    Definite,
    Semidefinite,
    Indefinite,
}

/// Scale-aware default tolerance for definiteness tests.
pub fn default_definiteness_tol(m: &Matrix) -> f64 {
    1e-9 * m.fro_norm()
}

/// Tests whether `w^T M w < 0` for all `w != 0`.
///
/// For non-symmetric `M` the quadratic form only sees the symmetric part
/// `(M + M^T)/2`, so the decision reduces to the sign of its largest
/// eigenvalue: below `-tol` is definite, within `tol` of zero is
/// semidefinite, above `tol` is indefinite.
pub fn is_negative_definite(m: &Matrix, tol: f64) -> Result<Definiteness, LinAlgError> {
    if !m.is_square() {
        return Err(LinAlgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    debug_assert!(tol >= 0.0);
    let spec = eigenvalues(&m.symmetric_part())?;
    let max_eig = spec.max_real();
    if max_eig < -tol {
        Ok(Definiteness::Definite)
    } else if max_eig <= tol {
        Ok(Definiteness::Semidefinite)
    } else {
        Ok(Definiteness::Indefinite)
    }
}

/// Smallest singular value, the square root of the smallest eigenvalue of
/// `M^T M`.
pub fn min_singular_value(m: &Matrix) -> Result<f64, LinAlgError> {
    if !m.is_square() {
        return Err(LinAlgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let gram = m.transpose().matmul(m);
    let spec = eigenvalues(&gram)?;
    let min_eig = spec
        .eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min);
    Ok(min_eig.max(0.0).sqrt())
}

/// All singular values in ascending order (eigenvalues of `M^T M`).
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>, LinAlgError> {
    if !m.is_square() {
        return Err(LinAlgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let gram = m.transpose().matmul(m);
    let spec = eigenvalues(&gram)?;
    let mut sv: Vec<f64> = spec
        .eigenvalues()
        .iter()
        .map(|l| l.re.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_jacobian_of_linear_field_recovers_matrix() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[-0.5, 3.0]]);
        let a2 = a.clone();
        let j = fd_jacobian(move |x| a2.matvec(x), &[0.3, -0.7], default_fd_scale()).unwrap();
        assert!(j.max_abs_diff(&a) < 1e-8);
    }

    #[test]
    fn fd_jacobian_of_constant_field_is_zero() {
        let j = fd_jacobian(|_| vec![1.0, 2.0, 3.0], &[0.1, 0.2], default_fd_scale()).unwrap();
        assert_eq!(j.max_abs(), 0.0);
        assert_eq!((j.rows(), j.cols()), (3, 2));
    }

    #[test]
    fn fd_jacobian_of_rotation_field() {
        let j = fd_jacobian(
            |x| vec![x[1], -x[0]],
            &[1.7, -2.4],
            default_fd_scale(),
        )
        .unwrap();
        let expect = Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(j.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn fd_jacobian_rejects_non_finite_field() {
        let r = fd_jacobian(|_| vec![f64::NAN], &[1.0], default_fd_scale());
        assert!(matches!(r, Err(LinAlgError::NonFinite { .. })));
    }

    #[test]
    fn fd_jacobian_rejects_bad_scale() {
        let r = fd_jacobian(|x| x.to_vec(), &[1.0], 0.0);
        assert!(matches!(r, Err(LinAlgError::InvalidScale { .. })));
    }

    #[test]
    fn antisymmetric_is_semidefinite() {
        let m = Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let tol = default_definiteness_tol(&m);
        assert_eq!(
            is_negative_definite(&m, tol).unwrap(),
            Definiteness::Semidefinite
        );
    }

    #[test]
    fn negative_diagonal_is_definite() {
        let m = Matrix::diagonal(&[-1.0, -1.0]);
        let tol = default_definiteness_tol(&m);
        assert_eq!(
            is_negative_definite(&m, tol).unwrap(),
            Definiteness::Definite
        );
    }

    #[test]
    fn shear_with_large_offdiagonal_is_indefinite() {
        // Symmetric part has eigenvalues -1 +- 1.5.
        let m = Matrix::from_rows(&[&[-1.0, 3.0], &[0.0, -1.0]]);
        let tol = default_definiteness_tol(&m);
        assert_eq!(
            is_negative_definite(&m, tol).unwrap(),
            Definiteness::Indefinite
        );
    }

    #[test]
    fn min_singular_value_examples() {
        assert!((min_singular_value(&Matrix::identity(4)).unwrap() - 1.0).abs() < 1e-12);
        assert!((min_singular_value(&Matrix::diagonal(&[2.0, 5.0])).unwrap() - 2.0).abs() < 1e-12);
        let rot = Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!((min_singular_value(&rot).unwrap() - 1.0).abs() < 1e-12);
    }
}
