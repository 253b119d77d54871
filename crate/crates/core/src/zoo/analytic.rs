//! Closed-form games with constant field Jacobians.

use crate::autodiff::{Tape, Var};
use crate::game::{FieldEval, GameState, TwoPlayerGame};
use crate::linalg::Matrix;

use super::ZooError;

/// The zero-sum game `f(phi, theta) = phi^T M theta`.
///
/// Its field is `v(x) = B x` with the antisymmetric-block system matrix
/// `B = [[0, M], [-M^T, 0]]`; the spectrum of `B` sits on the imaginary
/// axis, the canonical hard case for simultaneous gradient ascent.
#[derive(Debug, Clone)]
pub struct BilinearGame {
    coupling: Matrix,
}

impl BilinearGame {
    pub fn new(coupling: Matrix) -> Self {
        assert!(coupling.rows() >= 1 && coupling.cols() >= 1);
        Self { coupling }
    }

    /// The scalar game `f = phi * theta`.
    pub fn scalar() -> Self {
        Self::new(Matrix::identity(1))
    }

    /// `f = phi^T theta` in the given dimension.
    pub fn identity(dim: usize) -> Self {
        Self::new(Matrix::identity(dim))
    }

    pub fn phi_dim(&self) -> usize {
        self.coupling.rows()
    }

    pub fn theta_dim(&self) -> usize {
        self.coupling.cols()
    }

    pub fn dim(&self) -> usize {
        self.phi_dim() + self.theta_dim()
    }

    /// `B = [[0, M], [-M^T, 0]]` so that `v(x) = B x`.
    pub fn system_matrix(&self) -> Matrix {
        let (p, q) = (self.phi_dim(), self.theta_dim());
        let mut b = Matrix::zeros(p + q, p + q);
        b.insert_block(0, p, &self.coupling);
        b.insert_block(p, 0, &self.coupling.transpose().scale(-1.0));
        b
    }

    /// Exact field, independent of any differentiation machinery.
    pub fn analytic_field(&self, state: &GameState) -> Result<FieldEval, ZooError> {
        if state.len() != self.dim() || state.split() != self.phi_dim() {
            return Err(ZooError::Shape {
                context: format!(
                    "state of length {} (split {}) against bilinear game of dims ({}, {})",
                    state.len(),
                    state.split(),
                    self.phi_dim(),
                    self.theta_dim()
                ),
            });
        }
        Ok(FieldEval::from_vec(
            self.system_matrix().matvec(state.as_slice()),
        ))
    }

    pub fn game(&self) -> TwoPlayerGame {
        let m = self.coupling.clone();
        TwoPlayerGame::zero_sum(
            move |tape: &Tape, phi: &[Var], theta: &[Var]| bilinear_form(tape, &m, phi, theta),
            self.phi_dim(),
            self.theta_dim(),
        )
    }
}

/// The zero-sum game
/// `f = -(a/2) ||phi||^2 + phi^T M theta + (b/2) ||theta||^2`.
///
/// The field is `v(x) = B x` with `B = [[-aI, M], [-M^T, -bI]]`; the origin
/// is a local Nash equilibrium exactly when `a > 0` and `b > 0`.
#[derive(Debug, Clone)]
pub struct QuadraticGame {
    pub a: f64,
    pub b: f64,
    coupling: Matrix,
}

impl QuadraticGame {
    pub fn new(a: f64, b: f64, coupling: Matrix) -> Self {
        assert!(coupling.rows() >= 1 && coupling.cols() >= 1);
        assert!(a.is_finite() && b.is_finite());
        Self { a, b, coupling }
    }

    pub fn phi_dim(&self) -> usize {
        self.coupling.rows()
    }

    pub fn theta_dim(&self) -> usize {
        self.coupling.cols()
    }

    pub fn dim(&self) -> usize {
        self.phi_dim() + self.theta_dim()
    }

    /// `B = [[-aI, M], [-M^T, -bI]]` so that `v(x) = B x`.
    pub fn system_matrix(&self) -> Matrix {
        let (p, q) = (self.phi_dim(), self.theta_dim());
        let mut b = Matrix::zeros(p + q, p + q);
        b.insert_block(0, 0, &Matrix::identity(p).scale(-self.a));
        b.insert_block(0, p, &self.coupling);
        b.insert_block(p, 0, &self.coupling.transpose().scale(-1.0));
        b.insert_block(p, p, &Matrix::identity(q).scale(-self.b));
        b
    }

    pub fn analytic_field(&self, state: &GameState) -> Result<FieldEval, ZooError> {
        if state.len() != self.dim() || state.split() != self.phi_dim() {
            return Err(ZooError::Shape {
                context: format!(
                    "state of length {} (split {}) against quadratic game of dims ({}, {})",
                    state.len(),
                    state.split(),
                    self.phi_dim(),
                    self.theta_dim()
                ),
            });
        }
        Ok(FieldEval::from_vec(
            self.system_matrix().matvec(state.as_slice()),
        ))
    }

    pub fn game(&self) -> TwoPlayerGame {
        let m = self.coupling.clone();
        let (a, b) = (self.a, self.b);
        TwoPlayerGame::zero_sum(
            move |tape: &Tape, phi: &[Var], theta: &[Var]| {
                let cross = bilinear_form(tape, &m, phi, theta);
                let phi_sq: Vec<Var> = phi.iter().map(|v| v.square()).collect();
                let theta_sq: Vec<Var> = theta.iter().map(|v| v.square()).collect();
                cross + tape.sum(&phi_sq) * (-a / 2.0) + tape.sum(&theta_sq) * (b / 2.0)
            },
            self.phi_dim(),
            self.theta_dim(),
        )
    }
}

fn bilinear_form(tape: &Tape, m: &Matrix, phi: &[Var], theta: &[Var]) -> Var {
    assert_eq!(phi.len(), m.rows());
    assert_eq!(theta.len(), m.cols());
    let mut terms = Vec::with_capacity(phi.len());
    for (i, p) in phi.iter().enumerate() {
        let mut row: Option<Var> = None;
        for (j, t) in theta.iter().enumerate() {
            let c = m[(i, j)];
            if c == 0.0 {
                continue;
            }
            let term = t * c;
            row = Some(match row {
                Some(acc) => acc + term,
                None => term,
            });
        }
        if let Some(row) = row {
            terms.push(p * row);
        }
    }
    tape.sum(&terms)
}
