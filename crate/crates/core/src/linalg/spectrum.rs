//! Eigenvalue multisets and the derived stability statistics.

use num_complex::Complex64;

/// Maximum imaginary-to-real quotient |Im λ / Re λ| over a spectrum.
///
/// A purely imaginary eigenvalue makes the quotient unbounded; that case is
/// kept as a distinguished variant instead of a float sentinel because the
/// step-size bound degenerates there and callers must handle it explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quotient {
    Finite(f64),
    Infinite,
}

impl Quotient {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Quotient::Infinite)
    }

    /// Finite value, or `f64::INFINITY` for the unbounded case.
    pub fn as_f64(&self) -> f64 {
        match self {
            Quotient::Finite(v) => *v,
            Quotient::Infinite => f64::INFINITY,
        }
    }
}

/// Eigenvalue multiset of a real square matrix together with the quantities
/// that control fixed-point iteration stability: the largest real part, the
/// spectral radius and the imaginary-to-real quotient.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<Complex64>,
    max_real: f64,
    spectral_radius: f64,
    quotient_q: Quotient,
}

impl Spectrum {
    /// Panics on an empty eigenvalue list.
    pub fn from_eigenvalues(eigenvalues: Vec<Complex64>) -> Self {
        assert!(!eigenvalues.is_empty(), "empty spectrum");
        let max_real = eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let spectral_radius = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let mut q = 0.0_f64;
        let mut infinite = false;
        for l in &eigenvalues {
            if l.re == 0.0 {
                if l.im != 0.0 {
                    infinite = true;
                }
                // re == im == 0 contributes 0
            } else {
                q = q.max((l.im / l.re).abs());
            }
        }
        let quotient_q = if infinite {
            Quotient::Infinite
        } else {
            Quotient::Finite(q)
        };
        Self {
            eigenvalues,
            max_real,
            spectral_radius,
            quotient_q,
        }
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_real(&self) -> f64 {
        self.max_real
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn quotient_q(&self) -> Quotient {
        self.quotient_q
    }

    /// Eigenvalues sorted by (re, im); useful for multiset comparisons.
    pub fn sorted(&self) -> Vec<Complex64> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        });
        v
    }
}
