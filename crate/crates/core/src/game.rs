//! Smooth two-player games and their associated gradient vector field.
//!
//! A game is a pair of utility functions `f(phi, theta)` and `g(phi, theta)`
//! that the two players maximize over their own parameter blocks. The
//! associated field `v(x) = (grad_phi f, grad_theta g)` drives every
//! iteration in [`crate::optim`]; its Jacobian `v'(x)` drives the
//! diagnostics in [`crate::analysis`]. Zero-sum games store only `f` and
//! derive `g = -f`, which makes the zero-sum invariant unbreakable.

use std::sync::Arc;

use thiserror::Error;

use crate::autodiff::{self, AdError, Tape, Var};
use crate::linalg::{self, fd_jacobian, Definiteness, LinAlgError, Matrix};

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error("split {split} out of range for state of length {len}")]
    InvalidSplit { split: usize, len: usize },
    #[error("state shape ({len}, split {split}) does not match game ({expected_len}, split {expected_split})")]
    ShapeMismatch {
        len: usize,
        split: usize,
        expected_len: usize,
        expected_split: usize,
    },
    #[error("operation requires a zero-sum game")]
    NotZeroSum,
    #[error("invalid consensus weight gamma = {gamma}; must be finite and >= 0")]
    InvalidGamma { gamma: f64 },
}

/// A point in the joint parameter space, partitioned into the two players'
/// blocks: the first `split` entries belong to player one (phi), the rest to
/// player two (theta).
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    x: Vec<f64>,
    split: usize,
}

impl GameState {
    pub fn new(x: Vec<f64>, split: usize) -> Result<Self, GameError> {
        if split == 0 || split >= x.len() {
            return Err(GameError::InvalidSplit { split, len: x.len() });
        }
        Ok(Self { x, split })
    }

    pub fn from_parts(phi: &[f64], theta: &[f64]) -> Self {
        assert!(!phi.is_empty() && !theta.is_empty());
        let mut x = phi.to_vec();
        x.extend_from_slice(theta);
        Self {
            x,
            split: phi.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn phi(&self) -> &[f64] {
        &self.x[..self.split]
    }

    pub fn theta(&self) -> &[f64] {
        &self.x[self.split..]
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }

    /// Same partition, new coordinates. Panics on length mismatch.
    pub fn with_x(&self, x: Vec<f64>) -> Self {
        assert_eq!(x.len(), self.x.len());
        Self {
            x,
            split: self.split,
        }
    }
}

/// A scalar utility recorded as a differentiable expression of the two
/// player blocks.
pub trait UtilityExpr: Send + Sync {
    fn build(&self, tape: &Tape, phi: &[Var], theta: &[Var]) -> Var;
}

impl<F> UtilityExpr for F
where
    F: Fn(&Tape, &[Var], &[Var]) -> Var + Send + Sync,
{
    fn build(&self, tape: &Tape, phi: &[Var], theta: &[Var]) -> Var {
        self(tape, phi, theta)
    }
}

/// The gradient field evaluated at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval {
    pub v: Vec<f64>,
    pub norm: f64,
}

impl FieldEval {
    pub(crate) fn from_vec(v: Vec<f64>) -> Self {
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        Self { v, norm }
    }
}

/// A differentiable two-player game over a fixed parameter partition.
///
/// Immutable after construction; evaluations are reentrant.
#[derive(Clone)]
pub struct TwoPlayerGame {
    f: Arc<dyn UtilityExpr>,
    g: Option<Arc<dyn UtilityExpr>>,
    phi_dim: usize,
    theta_dim: usize,
}

impl std::fmt::Debug for TwoPlayerGame {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("TwoPlayerGame")
            .field("phi_dim", &self.phi_dim)
            .field("theta_dim", &self.theta_dim)
            .field("zero_sum", &self.is_zero_sum())
            .finish()
    }
}

impl TwoPlayerGame {
    /// Zero-sum game: player two's utility is `-f` by construction.
    pub fn zero_sum<U>(f: U, phi_dim: usize, theta_dim: usize) -> Self
    where
        U: UtilityExpr + 'static,
    {
        Self {
            f: Arc::new(f),
            g: None,
            phi_dim,
            theta_dim,
        }
    }

    pub fn general<U1, U2>(f: U1, g: U2, phi_dim: usize, theta_dim: usize) -> Self
    where
        U1: UtilityExpr + 'static,
        U2: UtilityExpr + 'static,
    {
        Self {
            f: Arc::new(f),
            g: Some(Arc::new(g)),
            phi_dim,
            theta_dim,
        }
    }

    pub fn is_zero_sum(&self) -> bool {
        self.g.is_none()
    }

    pub fn phi_dim(&self) -> usize {
        self.phi_dim
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn dim(&self) -> usize {
        self.phi_dim + self.theta_dim
    }

    pub fn split(&self) -> usize {
        self.phi_dim
    }

    pub fn check_state(&self, state: &GameState) -> Result<(), GameError> {
        if state.len() != self.dim() || state.split() != self.phi_dim {
            return Err(GameError::ShapeMismatch {
                len: state.len(),
                split: state.split(),
                expected_len: self.dim(),
                expected_split: self.phi_dim,
            });
        }
        Ok(())
    }

    fn build_f(&self, tape: &Tape, phi: &[Var], theta: &[Var]) -> Var {
        self.f.build(tape, phi, theta)
    }

    fn build_g(&self, tape: &Tape, phi: &[Var], theta: &[Var]) -> Var {
        match &self.g {
            Some(g) => g.build(tape, phi, theta),
            None => -self.f.build(tape, phi, theta),
        }
    }
}

/// Both utility values at a state.
pub fn utilities(game: &TwoPlayerGame, state: &GameState) -> Result<(f64, f64), GameError> {
    game.check_state(state)?;
    let tape = Tape::new();
    let xs = tape.inputs(state.as_slice());
    let (phi, theta) = xs.split_at(game.split());
    let f = game.build_f(&tape, phi, theta);
    let fv = f.value();
    let gv = match &game.g {
        Some(g) => g.build(&tape, phi, theta).value(),
        None => -fv,
    };
    if !fv.is_finite() || !gv.is_finite() {
        return Err(GameError::Ad(AdError::NonFinite {
            context: "utility value",
        }));
    }
    Ok((fv, gv))
}

/// Builds the field `v = (grad_phi f, grad_theta g)` as differentiable tape
/// expressions, so callers can differentiate through it.
fn build_field_vars(game: &TwoPlayerGame, tape: &Tape, xs: &[Var]) -> Result<Vec<Var>, GameError> {
    let split = game.split();
    let (phi, theta) = xs.split_at(split);
    let f = game.build_f(tape, phi, theta);
    match &game.g {
        None => {
            // g = -f: one reverse pass gives both blocks.
            let gf = tape.grad_vars(&f, xs)?;
            let mut v: Vec<Var> = gf[..split].to_vec();
            v.extend(gf[split..].iter().map(|c| -c));
            Ok(v)
        }
        Some(g) => {
            let mut v = tape.grad_vars(&f, phi)?;
            let gexpr = g.build(tape, phi, theta);
            v.extend(tape.grad_vars(&gexpr, theta)?);
            Ok(v)
        }
    }
}

/// The associated gradient vector field `v(x)` at a state.
pub fn gradient_field(game: &TwoPlayerGame, state: &GameState) -> Result<FieldEval, GameError> {
    game.check_state(state)?;
    let tape = Tape::new();
    let xs = tape.inputs(state.as_slice());
    let split = game.split();
    let (phi, theta) = xs.split_at(split);
    let f = game.build_f(&tape, phi, theta);
    let v = match &game.g {
        None => {
            let mut gf = tape.grad(&f, &xs)?;
            for c in gf[split..].iter_mut() {
                *c = -*c;
            }
            gf
        }
        Some(g) => {
            let mut v = tape.grad(&f, phi)?;
            let gexpr = g.build(&tape, phi, theta);
            v.extend(tape.grad(&gexpr, theta)?);
            v
        }
    };
    Ok(FieldEval::from_vec(v))
}

/// The field of a game recorded once at a reference state, re-evaluable at
/// nearby points. This is the workhorse behind finite-difference Jacobians:
/// the tape structure is input-independent (branches live inside node
/// semantics), so re-evaluation matches fresh recording bit for bit.
pub struct RecordedField {
    tape: Tape,
    xs: Vec<Var>,
    field: Vec<Var>,
    loss: Var,
}

impl RecordedField {
    pub fn record(game: &TwoPlayerGame, state: &GameState) -> Result<Self, GameError> {
        game.check_state(state)?;
        let tape = Tape::new();
        let xs = tape.inputs(state.as_slice());
        let field = build_field_vars(game, &tape, &xs)?;
        let loss = autodiff::half_squared_norm(&tape, &field);
        Ok(Self {
            tape,
            xs,
            field,
            loss,
        })
    }

    pub fn dim(&self) -> usize {
        self.xs.len()
    }

    /// v(x).
    pub fn eval_field(&self, x: &[f64]) -> Result<Vec<f64>, GameError> {
        self.tape.reevaluate(x)?;
        Ok(self.field.iter().map(|c| c.value()).collect())
    }

    /// (v, grad L, w) with `w = v - gamma * grad L` and `L = 1/2 ||v||^2`.
    pub fn eval_consensus(
        &self,
        x: &[f64],
        gamma: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), GameError> {
        self.tape.reevaluate(x)?;
        let v: Vec<f64> = self.field.iter().map(|c| c.value()).collect();
        let gl = self.tape.grad(&self.loss, &self.xs)?;
        let w: Vec<f64> = v.iter().zip(&gl).map(|(a, b)| a - gamma * b).collect();
        Ok((v, gl, w))
    }

    /// Smallest |relu input| seen at the current evaluation point, if the
    /// recorded expressions contain relu nodes.
    pub fn min_relu_margin(&self) -> Option<f64> {
        self.tape.min_abs_relu_input()
    }
}

/// The consensus field components at a state: the raw field `v`, the
/// regularizer gradient `grad L = v'(x)^T v(x)` obtained by double
/// backpropagation, and the modified field `w = v - gamma * grad L`.
#[derive(Debug, Clone)]
pub struct ConsensusFieldEval {
    pub v: FieldEval,
    pub grad_l: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn consensus_field(
    game: &TwoPlayerGame,
    state: &GameState,
    gamma: f64,
) -> Result<ConsensusFieldEval, GameError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(GameError::InvalidGamma { gamma });
    }
    let recorded = RecordedField::record(game, state)?;
    let (v, grad_l, w) = recorded.eval_consensus(state.as_slice(), gamma)?;
    Ok(ConsensusFieldEval {
        v: FieldEval::from_vec(v),
        grad_l,
        w,
    })
}

struct ConsensusUtility {
    base: TwoPlayerGame,
    gamma: f64,
    player_one: bool,
}

impl UtilityExpr for ConsensusUtility {
    fn build(&self, tape: &Tape, phi: &[Var], theta: &[Var]) -> Var {
        let base_util = if self.player_one {
            self.base.build_f(tape, phi, theta)
        } else {
            self.base.build_g(tape, phi, theta)
        };
        let xs: Vec<Var> = phi.iter().chain(theta.iter()).cloned().collect();
        match build_field_vars(&self.base, tape, &xs) {
            Ok(field) => {
                let l = autodiff::half_squared_norm(tape, &field);
                base_util - l * self.gamma
            }
            // Poison value; surfaces as a domain error at gradient time.
            Err(_) => tape.constant(f64::NAN),
        }
    }
}

/// The modified game with utilities `f - gamma L` and `g - gamma L`,
/// `L = 1/2 ||v||^2`. Its gradient field is `w = v - gamma grad L`; its
/// stationary points coincide with those of `v`. The result is generally
/// not zero-sum even when the base game is.
pub fn consensus_modified_game(
    game: &TwoPlayerGame,
    gamma: f64,
) -> Result<TwoPlayerGame, GameError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(GameError::InvalidGamma { gamma });
    }
    let f = ConsensusUtility {
        base: game.clone(),
        gamma,
        player_one: true,
    };
    let g = ConsensusUtility {
        base: game.clone(),
        gamma,
        player_one: false,
    };
    Ok(TwoPlayerGame::general(
        f,
        g,
        game.phi_dim(),
        game.theta_dim(),
    ))
}

/// How the field Jacobian `v'(x)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMethod {
    /// Central differences of the autodiff field (the default route).
    AutodiffFd,
    /// Central differences of a central-difference gradient field; fully
    /// independent of the reverse-mode code and used as its oracle.
    Fd,
}

/// Central-difference gradient field: every component of `v` is itself a
/// central difference of the utility values.
fn fd_field(game: &TwoPlayerGame, state: &GameState, scale: f64) -> Result<Vec<f64>, GameError> {
    let n = state.len();
    let split = state.split();
    let x = state.as_slice();
    let mut probe = x.to_vec();
    let mut v = vec![0.0; n];
    for j in 0..n {
        let xj = x[j];
        let delta = scale * xj.abs().max(1.0);
        let plus = xj + delta;
        let minus = xj - delta;
        probe[j] = plus;
        let up = utilities(game, &state.with_x(probe.clone()))?;
        probe[j] = minus;
        let um = utilities(game, &state.with_x(probe.clone()))?;
        probe[j] = xj;
        let denom = plus - minus;
        v[j] = if j < split {
            (up.0 - um.0) / denom
        } else {
            (up.1 - um.1) / denom
        };
    }
    Ok(v)
}

/// Jacobian `v'(x)` of the gradient field at a state.
pub fn jacobian(
    game: &TwoPlayerGame,
    state: &GameState,
    method: JacobianMethod,
) -> Result<Matrix, GameError> {
    game.check_state(state)?;
    match method {
        JacobianMethod::AutodiffFd => {
            let recorded = RecordedField::record(game, state)?;
            let j = fd_jacobian(
                |x| {
                    recorded
                        .eval_field(x)
                        .unwrap_or_else(|_| vec![f64::NAN; state.len()])
                },
                state.as_slice(),
                linalg::default_fd_scale(),
            )?;
            Ok(j)
        }
        JacobianMethod::Fd => {
            // Second differences of utility values need a larger step:
            // eps^(1/4) balances truncation against rounding noise.
            let scale = f64::EPSILON.powf(0.25);
            let mut failure = None;
            let j = fd_jacobian(
                |x| match fd_field(game, &state.with_x(x.to_vec()), scale) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        vec![f64::NAN; state.len()]
                    }
                },
                state.as_slice(),
                scale,
            );
            match (j, failure) {
                (Ok(j), None) => Ok(j),
                (_, Some(e)) => Err(e),
                (Err(e), None) => Err(e.into()),
            }
        }
    }
}

/// Largest violation of the zero-sum block structure of a field Jacobian:
/// the diagonal blocks must be symmetric (they are Hessians) and the
/// off-diagonal blocks must satisfy `bottom-left = -(top-right)^T`.
pub fn zero_sum_structure_residual(j: &Matrix, split: usize) -> f64 {
    assert!(j.is_square() && split < j.rows());
    let n = j.rows();
    let mut worst = 0.0_f64;
    for i in 0..split {
        for k in 0..split {
            worst = worst.max((j[(i, k)] - j[(k, i)]).abs());
        }
    }
    for i in split..n {
        for k in split..n {
            worst = worst.max((j[(i, k)] - j[(k, i)]).abs());
        }
    }
    for i in split..n {
        for k in 0..split {
            worst = worst.max((j[(i, k)] + j[(k, i)]).abs());
        }
    }
    worst
}

/// Outcome of the local Nash test at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NashClassification {
    /// Stationary with strictly definite curvature for both players.
    NashCertified,
    /// Either not stationary at the given tolerance, or a player's Hessian
    /// strictly violates the second-order sign conditions.
    NotNash,
    /// Semidefinite boundary; certification is impossible from curvature.
    Inconclusive,
}

/// Local Nash test for zero-sum games.
///
/// Certifies when `||v|| <= tol` and `grad^2_phi f` is negative definite
/// while `grad^2_theta f` is positive definite (then `v'` is negative
/// definite and the point is a local Nash equilibrium). Semidefinite
/// boundary cases are never certified. A residual above `tol` means the
/// point is measurably non-stationary, hence not an interior local Nash
/// equilibrium.
pub fn local_nash_check(
    game: &TwoPlayerGame,
    state: &GameState,
    tol: f64,
) -> Result<NashClassification, GameError> {
    if !game.is_zero_sum() {
        return Err(GameError::NotZeroSum);
    }
    let field = gradient_field(game, state)?;
    if field.norm > tol {
        return Ok(NashClassification::NotNash);
    }
    let j = jacobian(game, state, JacobianMethod::AutodiffFd)?;
    let s = game.split();
    let n = j.rows();
    let phi_hess = j.submatrix(0, s, 0, s);
    // Zero-sum structure: the bottom-right block is -grad^2_theta f.
    let theta_hess = j.submatrix(s, n, s, n).scale(-1.0);
    let phi_tol = linalg::default_definiteness_tol(&phi_hess).max(1e-12);
    let theta_tol = linalg::default_definiteness_tol(&theta_hess).max(1e-12);
    let phi_class = linalg::is_negative_definite(&phi_hess, phi_tol)?;
    // Positive definiteness of H is negative definiteness of -H.
    let theta_class = linalg::is_negative_definite(&theta_hess.scale(-1.0), theta_tol)?;
    if phi_class == Definiteness::Definite && theta_class == Definiteness::Definite {
        return Ok(NashClassification::NashCertified);
    }
    if phi_class == Definiteness::Indefinite || theta_class == Definiteness::Indefinite {
        return Ok(NashClassification::NotNash);
    }
    Ok(NashClassification::Inconclusive)
}

/// Per-player curvature report, available for any game (including
/// non-zero-sum ones, where no Nash certification is possible).
#[derive(Debug, Clone)]
pub struct StationarityReport {
    pub residual: f64,
    pub phi_hessian: Matrix,
    pub theta_hessian: Matrix,
    /// Definiteness of `grad^2_phi f` (a maximizer wants negative).
    pub phi_class: Definiteness,
    /// Definiteness of `grad^2_theta g` (a maximizer wants negative).
    pub theta_class: Definiteness,
}

pub fn stationarity_report(
    game: &TwoPlayerGame,
    state: &GameState,
) -> Result<StationarityReport, GameError> {
    game.check_state(state)?;
    let field = gradient_field(game, state)?;
    let split = game.split();
    let theta_fixed = state.theta().to_vec();
    let phi_fixed = state.phi().to_vec();
    let game_phi = game.clone();
    let phi_hessian = fd_jacobian(
        move |phi| {
            let st = GameState::from_parts(phi, &theta_fixed);
            match gradient_field(&game_phi, &st) {
                Ok(f) => f.v[..split].to_vec(),
                Err(_) => vec![f64::NAN; split],
            }
        },
        state.phi(),
        linalg::default_fd_scale(),
    )?;
    let game_theta = game.clone();
    let theta_dim = game.theta_dim();
    let theta_hessian = fd_jacobian(
        move |theta| {
            let st = GameState::from_parts(&phi_fixed, theta);
            match gradient_field(&game_theta, &st) {
                Ok(f) => f.v[split..].to_vec(),
                Err(_) => vec![f64::NAN; theta_dim],
            }
        },
        state.theta(),
        linalg::default_fd_scale(),
    )?;
    let phi_class =
        linalg::is_negative_definite(&phi_hessian, linalg::default_definiteness_tol(&phi_hessian))?;
    let theta_class = linalg::is_negative_definite(
        &theta_hessian,
        linalg::default_definiteness_tol(&theta_hessian),
    )?;
    Ok(StationarityReport {
        residual: field.norm,
        phi_hessian,
        theta_hessian,
        phi_class,
        theta_class,
    })
}
