//! Shared test oracles, independent of the library's eigenvalue path.
//!
//! Eigenvalues are cross-checked against the roots of the characteristic
//! polynomial: coefficients from the Faddeev-LeVerrier recurrence (matrix
//! products and traces only), roots from Durand-Kerner iteration. Neither
//! touches the QR code.

#![allow(dead_code)]

use gamedyn::linalg::{Complex64, Matrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Monic characteristic polynomial coefficients `[1, c1, ..., cn]` of a
/// square matrix, via the Faddeev-LeVerrier recurrence.
pub fn char_poly(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    assert!(a.is_square() && n >= 1);
    let mut coeffs = vec![1.0];
    let mut m = a.clone();
    for k in 1..=n {
        let c = -m.trace() / k as f64;
        coeffs.push(c);
        if k < n {
            let mut shifted = m;
            for i in 0..n {
                shifted[(i, i)] += c;
            }
            m = a.matmul(&shifted);
        }
    }
    coeffs
}

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        acc = acc * z + c;
    }
    acc
}

/// All roots of a monic real polynomial by Durand-Kerner iteration.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    assert!(n >= 1);
    // Radius bound on the roots, used to scale the start points.
    let scale = 1.0
        + coeffs[1..]
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| scale * seed.powu(k as u32 + 1))
        .collect();
    for _ in 0..1000 {
        let mut max_step = 0.0_f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            let delta = horner(coeffs, z[i]) / denom;
            z[i] -= delta;
            max_step = max_step.max(delta.norm());
        }
        if max_step < 1e-14 * scale {
            break;
        }
    }
    z
}

/// Best max-distance over all pairings of two equal-length eigenvalue
/// multisets; exact (exhaustive over permutations), so only for small n.
pub fn optimal_matching_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    assert!(n <= 8, "exhaustive matching is factorial in n");
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let d = a
            .iter()
            .zip(p.iter().map(|&j| &b[j]))
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()));
        if d < best {
            best = d;
        }
    });
    best
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Greedy nearest matching distance; adequate for well-separated spectra.
pub fn greedy_matching_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    for x in a {
        let mut best = f64::INFINITY;
        let mut best_j = 0;
        for (j, y) in b.iter().enumerate() {
            if !used[j] {
                let d = (x - y).norm();
                if d < best {
                    best = d;
                    best_j = j;
                }
            }
        }
        used[best_j] = true;
        worst = worst.max(best);
    }
    worst
}

/// Random orthogonal matrix as a product of Householder reflectors.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut q = Matrix::identity(n);
    for _ in 0..n {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        if norm2 < 1e-12 {
            continue;
        }
        // q <- (I - 2 v v^T / ||v||^2) q
        let refl = Matrix::from_fn(n, n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - 2.0 * v[i] * v[j] / norm2
        });
        q = refl.matmul(&q);
    }
    q
}
