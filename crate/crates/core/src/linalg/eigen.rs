//! Eigenvalues of general real square matrices.
//!
//! The pipeline is the classic EISPACK one: Parlett-Reinsch balancing,
//! Householder reduction to upper Hessenberg form, then Francis double-shift
//! QR iteration on the Hessenberg matrix. Only eigenvalues are computed, no
//! eigenvectors. Balancing uses exact powers of the radix, so it is a
//! similarity transform that leaves the spectrum unchanged while improving
//! the conditioning of badly scaled inputs.

use num_complex::Complex64;

use super::matrix::Matrix;
use super::spectrum::Spectrum;
use super::LinAlgError;

/// Subdiagonal entries below `DEFLATION_TOL * ||H||_F` are treated as zero.
const DEFLATION_TOL: f64 = 1e-12;

/// Total QR sweep budget is `MAX_SWEEPS_PER_EIG * n`.
const MAX_SWEEPS_PER_EIG: usize = 30;

/// Computes all eigenvalues (with multiplicity) of a real square matrix.
///
/// Complex eigenvalues of real input come out in exact conjugate pairs.
pub fn eigenvalues(m: &Matrix) -> Result<Spectrum, LinAlgError> {
    if !m.is_square() {
        return Err(LinAlgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if m.rows() == 0 {
        return Err(LinAlgError::Empty);
    }
    if !m.is_finite() {
        return Err(LinAlgError::NonFinite {
            context: "eigenvalue input",
        });
    }
    let mut work = m.clone();
    balance_in_place(&mut work);
    hessenberg_in_place(&mut work);
    let eig = hqr(&mut work)?;
    Ok(Spectrum::from_eigenvalues(eig))
}

/// Parlett-Reinsch balancing: diagonal similarity scaling by radix powers
/// until row and column norms are roughly equal.
fn balance_in_place(a: &mut Matrix) {
    let n = a.rows();
    const RADIX: f64 = 2.0;
    const SQRDX: f64 = RADIX * RADIX;
    loop {
        let mut last = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                let mut cs = c;
                while cs < g {
                    f *= RADIX;
                    cs *= SQRDX;
                }
                g = r * RADIX;
                while cs > g {
                    f /= RADIX;
                    cs /= SQRDX;
                }
                if (cs + r) / f < 0.95 * s {
                    last = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
        if last {
            break;
        }
    }
}

/// Householder reduction to upper Hessenberg form (in place, similarity).
fn hessenberg_in_place(a: &mut Matrix) {
    let n = a.rows();
    if n < 3 {
        return;
    }
    let mut u = vec![0.0; n];
    for k in 0..n - 2 {
        let mut scale = 0.0;
        for i in k + 1..n {
            scale += a[(i, k)].abs();
        }
        if scale == 0.0 {
            continue;
        }
        let mut h = 0.0;
        for i in k + 1..n {
            u[i] = a[(i, k)] / scale;
            h += u[i] * u[i];
        }
        let f = u[k + 1];
        let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
        h -= f * g;
        u[k + 1] = f - g;
        // ||u||^2 == 2h, so P = I - u u^T / h is the reflector.
        for j in k..n {
            let mut s = 0.0;
            for i in k + 1..n {
                s += u[i] * a[(i, j)];
            }
            s /= h;
            for i in k + 1..n {
                a[(i, j)] -= s * u[i];
            }
        }
        for i in 0..n {
            let mut s = 0.0;
            for j in k + 1..n {
                s += a[(i, j)] * u[j];
            }
            s /= h;
            for j in k + 1..n {
                a[(i, j)] -= s * u[j];
            }
        }
        a[(k + 1, k)] = scale * g;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

fn sign(magnitude: f64, sign_of: f64) -> f64 {
    if sign_of >= 0.0 {
        magnitude.abs()
    } else {
        -magnitude.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix. Destroys `h`.
fn hqr(h: &mut Matrix) -> Result<Vec<Complex64>, LinAlgError> {
    let n = h.rows();
    let mut eig = vec![Complex64::new(0.0, 0.0); n];
    let tol = (DEFLATION_TOL * h.fro_norm()).max(f64::MIN_POSITIVE);
    let max_total = MAX_SWEEPS_PER_EIG * n;
    let mut total_its = 0usize;
    let mut t = 0.0;
    let mut nn = n as isize - 1;
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            let nnu = nn as usize;
            // Look for a single small subdiagonal element.
            let mut l = nnu;
            while l >= 1 {
                if h[(l, l - 1)].abs() <= tol {
                    h[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = h[(nnu, nnu)];
            if l == nnu {
                // One real root found.
                eig[nnu] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = h[(nnu - 1, nnu - 1)];
            let mut w = h[(nnu, nnu - 1)] * h[(nnu - 1, nnu)];
            if l == nnu - 1 {
                // Two roots from the trailing 2x2 block.
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + sign(z, p);
                    let e1 = x + z;
                    let e2 = if z != 0.0 { x - w / z } else { e1 };
                    eig[nnu - 1] = Complex64::new(e1, 0.0);
                    eig[nnu] = Complex64::new(e2, 0.0);
                } else {
                    eig[nnu - 1] = Complex64::new(x + p, z);
                    eig[nnu] = Complex64::new(x + p, -z);
                }
                nn -= 2;
                break;
            }
            if total_its >= max_total {
                return Err(LinAlgError::NoConvergence { sweeps: total_its });
            }
            if its > 0 && its % 10 == 0 {
                // Exceptional shift.
                t += x;
                for i in 0..=nnu {
                    let d = h[(i, i)];
                    h[(i, i)] = d - x;
                }
                let s = h[(nnu, nnu - 1)].abs() + h[(nnu - 1, nnu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total_its += 1;
            // Form the shifted column and look for two consecutive small
            // subdiagonal elements.
            let mut m = nnu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = h[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - rr - ss;
                r = h[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nnu {
                h[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }
            // Double QR sweep on rows l..=nn, columns m..=nn.
            for k in m..nnu {
                let mut xnorm = 0.0;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if k != nnu - 1 { h[(k + 2, k - 1)] } else { 0.0 };
                    xnorm = p.abs() + q.abs() + r.abs();
                    if xnorm != 0.0 {
                        p /= xnorm;
                        q /= xnorm;
                        r /= xnorm;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                } else {
                    h[(k, k - 1)] = -s * xnorm;
                }
                p += s;
                let px = p / s;
                let py = q / s;
                let pz = r / s;
                q /= p;
                r /= p;
                for j in k..=nnu {
                    let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                    if k != nnu - 1 {
                        pp += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= pp * pz;
                    }
                    h[(k + 1, j)] -= pp * py;
                    h[(k, j)] -= pp * px;
                }
                let mmin = nnu.min(k + 3);
                for i in l..=mmin {
                    let mut pp = px * h[(i, k)] + py * h[(i, k + 1)];
                    if k != nnu - 1 {
                        pp += pz * h[(i, k + 2)];
                        h[(i, k + 2)] -= pp * r;
                    }
                    h[(i, k + 1)] -= pp * q;
                    let v = h[(i, k)];
                    h[(i, k)] = v - pp;
                }
            }
        }
    }
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rotation_matrix_has_unit_imaginary_pair() {
        let m = Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let spec = eigenvalues(&m).unwrap();
        let mut eigs = spec.sorted();
        eigs.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!(close(eigs[0].re, 0.0, 1e-14) && close(eigs[0].im, -1.0, 1e-14));
        assert!(close(eigs[1].re, 0.0, 1e-14) && close(eigs[1].im, 1.0, 1e-14));
        assert!(spec.quotient_q().is_infinite());
    }

    #[test]
    fn identity_eigenvalues_are_ones() {
        let spec = eigenvalues(&Matrix::identity(3)).unwrap();
        for l in spec.eigenvalues() {
            assert!(close(l.re, 1.0, 1e-14) && close(l.im, 0.0, 1e-14));
        }
    }

    #[test]
    fn diagonal_eigenvalues() {
        let spec = eigenvalues(&Matrix::diagonal(&[-1.0, -2.0])).unwrap();
        let eigs = spec.sorted();
        assert!(close(eigs[0].re, -2.0, 1e-14));
        assert!(close(eigs[1].re, -1.0, 1e-14));
        assert_eq!(spec.max_real(), eigs[1].re);
    }

    #[test]
    fn single_entry_matrix() {
        let spec = eigenvalues(&Matrix::from_vec(1, 1, vec![4.5])).unwrap();
        assert_eq!(spec.eigenvalues()[0], Complex64::new(4.5, 0.0));
    }

    #[test]
    fn non_square_is_rejected() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            eigenvalues(&m),
            Err(LinAlgError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(
            eigenvalues(&Matrix::zeros(0, 0)),
            Err(LinAlgError::Empty)
        ));
    }

    #[test]
    fn non_finite_is_rejected() {
        let m = Matrix::from_vec(1, 1, vec![f64::NAN]);
        assert!(matches!(
            eigenvalues(&m),
            Err(LinAlgError::NonFinite { .. })
        ));
    }

    #[test]
    fn badly_scaled_matrix_survives_balancing() {
        // Similarity-scaled rotation: D [[0,1],[-1,0]] D^-1 with D = diag(1e8, 1e-8).
        let m = Matrix::from_rows(&[&[0.0, 1e16], &[-1e-16, 0.0]]);
        let spec = eigenvalues(&m).unwrap();
        let mut eigs = spec.sorted();
        eigs.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!(close(eigs[1].im, 1.0, 1e-10));
        assert!(close(eigs[1].re, 0.0, 1e-10));
    }

    #[test]
    fn trace_matches_eigenvalue_sum_on_fixed_matrix() {
        let m = Matrix::from_rows(&[
            &[0.3, -1.2, 0.7, 2.0],
            &[1.1, 0.4, -0.6, 0.2],
            &[-0.5, 0.9, -1.0, 0.3],
            &[2.2, -0.1, 0.8, 0.6],
        ]);
        let spec = eigenvalues(&m).unwrap();
        let sum: Complex64 = spec.eigenvalues().iter().sum();
        assert!(close(sum.re, m.trace(), 1e-10));
        assert!(close(sum.im, 0.0, 1e-10));
    }
}
