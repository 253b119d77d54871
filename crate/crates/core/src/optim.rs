//! The fixed-point iteration family `F(x) = x + h G(x)` over two-player
//! games: simultaneous and alternating gradient ascent, consensus
//! optimization, the discriminator-only smoothing variant, momentum,
//! gradient rescaling and generic preconditioning.
//!
//! Every step rule is a pure function from explicit state to the next
//! state; training loops own the state. That keeps fixed-point tests and
//! finite-difference Jacobians of the step map trivial.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::game::{
    self, consensus_field, consensus_modified_game, gradient_field, GameError, GameState,
    TwoPlayerGame,
};
use crate::linalg::{Matrix, Spectrum};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid hyperparameter {name} = {value}")]
    InvalidHyperParam { name: &'static str, value: f64 },
    #[error("eigenvalue {re}{im:+}i has non-negative real part; no positive stable step exists")]
    UnstableEigenvalue { re: f64, im: f64 },
    #[error("batch of {got} gradient samples is too small; need at least {required}")]
    BatchTooSmall { got: usize, required: usize },
    #[error("gradient samples have inconsistent lengths")]
    RaggedBatch,
    #[error("preconditioner is {rows}x{cols}, expected {expected}x{expected}")]
    PreconditionerShape {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("non-finite state produced by step")]
    NonFiniteState,
}

fn check_h(h: f64) -> Result<(), OptimError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(OptimError::InvalidHyperParam { name: "h", value: h })
    }
}

fn check_gamma(gamma: f64) -> Result<(), OptimError> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(OptimError::InvalidHyperParam {
            name: "gamma",
            value: gamma,
        })
    }
}

fn finite_state(state: GameState) -> Result<GameState, OptimError> {
    if state.is_finite() {
        Ok(state)
    } else {
        Err(OptimError::NonFiniteState)
    }
}

/// Iterate with momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub x: GameState,
    pub m: Vec<f64>,
}

impl MomentumState {
    /// Zero initial momentum.
    pub fn at_rest(x: GameState) -> Self {
        let m = vec![0.0; x.len()];
        Self { x, m }
    }
}

/// Iterate with gradient-magnitude accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledState {
    pub x: GameState,
    pub beta: f64,
}

impl RescaledState {
    pub fn new(x: GameState, beta: f64) -> Self {
        assert!(beta >= 0.0, "beta must be non-negative");
        Self { x, beta }
    }

    pub fn fresh(x: GameState) -> Self {
        Self::new(x, 0.0)
    }
}

/// One step of simultaneous gradient ascent: `x <- x + h v(x)`, both blocks
/// updated from the same pre-step iterate (the explicit Euler step on the
/// gradient flow).
pub fn simga_step(game: &TwoPlayerGame, state: &GameState, h: f64) -> Result<GameState, OptimError> {
    check_h(h)?;
    let field = gradient_field(game, state)?;
    let x: Vec<f64> = state
        .as_slice()
        .iter()
        .zip(&field.v)
        .map(|(xi, vi)| xi + h * vi)
        .collect();
    finite_state(state.with_x(x))
}

/// One step of alternating gradient ascent: phi is updated first, then theta
/// using the already-updated phi. The composition of the two half-steps
/// differs from [`simga_step`] at order h^2.
pub fn altga_step(game: &TwoPlayerGame, state: &GameState, h: f64) -> Result<GameState, OptimError> {
    check_h(h)?;
    let split = state.split();
    let first = gradient_field(game, state)?;
    let mut x = state.as_slice().to_vec();
    for i in 0..split {
        x[i] += h * first.v[i];
    }
    let mid = state.with_x(x);
    let second = gradient_field(game, &mid)?;
    let mut x = mid.as_slice().to_vec();
    for i in split..x.len() {
        x[i] += h * second.v[i];
    }
    finite_state(state.with_x(x))
}

/// One step of consensus optimization: `x <- x + h (v(x) - gamma grad L(x))`
/// with `L = 1/2 ||v||^2`. Equivalent to [`simga_step`] on the modified game
/// from [`consensus_modified_game`].
pub fn consensus_step(
    game: &TwoPlayerGame,
    state: &GameState,
    h: f64,
    gamma: f64,
) -> Result<GameState, OptimError> {
    check_h(h)?;
    check_gamma(gamma)?;
    let eval = consensus_field(game, state, gamma)?;
    let x: Vec<f64> = state
        .as_slice()
        .iter()
        .zip(&eval.w)
        .map(|(xi, wi)| xi + h * wi)
        .collect();
    finite_state(state.with_x(x))
}

/// Smoothing variant: the `-gamma L` penalty is applied to player two only.
/// phi follows `grad_phi f`, theta follows `grad_theta (g - gamma L)`, both
/// from the pre-step iterate.
pub fn smoothing_step(
    game: &TwoPlayerGame,
    state: &GameState,
    h: f64,
    gamma: f64,
) -> Result<GameState, OptimError> {
    check_h(h)?;
    check_gamma(gamma)?;
    let split = state.split();
    let eval = consensus_field(game, state, gamma)?;
    let x: Vec<f64> = state
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            if i < split {
                xi + h * eval.v.v[i]
            } else {
                xi + h * eval.w[i]
            }
        })
        .collect();
    finite_state(state.with_x(x))
}

/// One momentum step with friction `gamma`:
/// `x <- x + h m`, `m <- m + h (v(x) - gamma m)`, both from pre-step values.
pub fn momentum_step(
    game: &TwoPlayerGame,
    state: &MomentumState,
    h: f64,
    momentum_gamma: f64,
) -> Result<MomentumState, OptimError> {
    check_h(h)?;
    if !(momentum_gamma >= 0.0 && momentum_gamma.is_finite()) {
        return Err(OptimError::InvalidHyperParam {
            name: "momentum_gamma",
            value: momentum_gamma,
        });
    }
    let field = gradient_field(game, &state.x)?;
    let x: Vec<f64> = state
        .x
        .as_slice()
        .iter()
        .zip(&state.m)
        .map(|(xi, mi)| xi + h * mi)
        .collect();
    let m: Vec<f64> = state
        .m
        .iter()
        .zip(&field.v)
        .map(|(mi, vi)| mi + h * (vi - momentum_gamma * mi))
        .collect();
    if m.iter().any(|c| !c.is_finite()) {
        return Err(OptimError::NonFiniteState);
    }
    Ok(MomentumState {
        x: finite_state(state.x.with_x(x))?,
        m,
    })
}

/// One rescaled step (the scalar form of the adaptive-magnitude updates used
/// by RMSProp-style optimizers):
/// `x <- x + h / sqrt(beta + eps) v(x)`, `beta <- (1-alpha) beta + alpha ||v(x)||^2`,
/// both updates from pre-step values.
pub fn rescaled_step(
    game: &TwoPlayerGame,
    state: &RescaledState,
    h: f64,
    alpha: f64,
    epsilon: f64,
) -> Result<RescaledState, OptimError> {
    check_h(h)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(OptimError::InvalidHyperParam {
            name: "alpha",
            value: alpha,
        });
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(OptimError::InvalidHyperParam {
            name: "epsilon",
            value: epsilon,
        });
    }
    let field = gradient_field(game, &state.x)?;
    let scale = h / (state.beta + epsilon).sqrt();
    let x: Vec<f64> = state
        .x
        .as_slice()
        .iter()
        .zip(&field.v)
        .map(|(xi, vi)| xi + scale * vi)
        .collect();
    let beta = (1.0 - alpha) * state.beta + alpha * field.norm * field.norm;
    if !beta.is_finite() {
        return Err(OptimError::NonFiniteState);
    }
    Ok(RescaledState {
        x: finite_state(state.x.with_x(x))?,
        beta,
    })
}

/// One generic preconditioned step `x <- x + h A(x) v(x)`.
///
/// With `A(x) = I - gamma v'(x)^T` this reproduces consensus optimization.
/// The caller guarantees `A(x)` is invertible at the evaluated states; that
/// is what makes fixed points coincide with stationary points of `v`.
pub fn preconditioned_step<P>(
    game: &TwoPlayerGame,
    state: &GameState,
    h: f64,
    mut precond: P,
) -> Result<GameState, OptimError>
where
    P: FnMut(&GameState) -> Matrix,
{
    check_h(h)?;
    let field = gradient_field(game, state)?;
    let a = precond(state);
    let n = state.len();
    if a.rows() != n || a.cols() != n {
        return Err(OptimError::PreconditionerShape {
            rows: a.rows(),
            cols: a.cols(),
            expected: n,
        });
    }
    let av = a.matvec(&field.v);
    let x: Vec<f64> = state
        .as_slice()
        .iter()
        .zip(&av)
        .map(|(xi, gi)| xi + h * gi)
        .collect();
    finite_state(state.with_x(x))
}

/// Recommended fraction of [`max_stable_step`] for practical runs; the bound
/// itself is an open supremum.
pub const SAFE_STEP_FACTOR: f64 = 0.9;

/// Supremum of step sizes `h` for which `I + h A` has spectral radius below
/// one, given the spectrum of `A`:
/// `h* = min over eigenvalues of 2 |Re| / (Re^2 + Im^2)`.
///
/// Requires every eigenvalue to have strictly negative real part; otherwise
/// no positive step is stable and an error is returned.
pub fn max_stable_step(spec: &Spectrum) -> Result<f64, OptimError> {
    let mut h = f64::INFINITY;
    for l in spec.eigenvalues() {
        if l.re >= 0.0 {
            return Err(OptimError::UnstableEigenvalue { re: l.re, im: l.im });
        }
        let a = -l.re;
        h = h.min(2.0 * a / (a * a + l.im * l.im));
    }
    Ok(h)
}

/// How a mini-batch estimate of `L(x) = 1/2 ||v(x)||^2` is formed from
/// per-sample gradient estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// `1/2 ||mean||^2`; biased upward by `tr(Cov) / (2B)`.
    Naive,
    /// Naive estimate minus `1/(2B-2)` times the divisor-B sample variance;
    /// unbiased for i.i.d. samples. Requires `B >= 2`.
    Debiased,
}

/// Mini-batch estimate of the consensus penalty from `B` gradient samples.
pub fn minibatch_penalty(grad_samples: &[Vec<f64>], mode: PenaltyMode) -> Result<f64, OptimError> {
    let b = grad_samples.len();
    let required = match mode {
        PenaltyMode::Naive => 1,
        PenaltyMode::Debiased => 2,
    };
    if b < required {
        return Err(OptimError::BatchTooSmall { got: b, required });
    }
    let dim = grad_samples[0].len();
    if grad_samples.iter().any(|s| s.len() != dim) {
        return Err(OptimError::RaggedBatch);
    }
    let mut mean = vec![0.0; dim];
    for s in grad_samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= b as f64;
    }
    let naive = 0.5 * mean.iter().map(|m| m * m).sum::<f64>();
    match mode {
        PenaltyMode::Naive => Ok(naive),
        PenaltyMode::Debiased => {
            // Divisor-B per-coordinate variance paired with 1/(2B-2); this
            // pairing is what makes the estimator unbiased.
            let mut var_sum = 0.0;
            for s in grad_samples {
                for (m, v) in mean.iter().zip(s) {
                    let d = v - m;
                    var_sum += d * d;
                }
            }
            var_sum /= b as f64;
            Ok(naive - var_sum / (2.0 * b as f64 - 2.0))
        }
    }
}

/// Hyperparameters shared by the step rules. Not every rule reads every
/// field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Step size.
    pub h: f64,
    /// Consensus weight.
    pub gamma: f64,
    /// Rescaling mixing factor, in (0, 1).
    pub alpha: f64,
    /// Rescaling floor inside the square root.
    pub epsilon: f64,
    /// Momentum friction.
    pub momentum_gamma: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            h: 0.01,
            gamma: 1.0,
            alpha: 0.1,
            epsilon: 1e-8,
            momentum_gamma: 0.9,
        }
    }
}

/// The step rules by name, used for dispatch in experiment harnesses and
/// fixed-point analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    SimGa,
    AltGa,
    Consensus,
    Smoothing,
    Momentum,
    Rescaled,
    /// Rescaled steps on the consensus-modified field; the composite used
    /// for RMSProp-style training runs.
    RescaledConsensus,
}

impl RuleKind {
    pub const ALL: [RuleKind; 7] = [
        RuleKind::SimGa,
        RuleKind::AltGa,
        RuleKind::Consensus,
        RuleKind::Smoothing,
        RuleKind::Momentum,
        RuleKind::Rescaled,
        RuleKind::RescaledConsensus,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RuleKind::SimGa => "simga",
            RuleKind::AltGa => "altga",
            RuleKind::Consensus => "consensus",
            RuleKind::Smoothing => "smoothing",
            RuleKind::Momentum => "momentum",
            RuleKind::Rescaled => "rescaled",
            RuleKind::RescaledConsensus => "rescaled-consensus",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown optimizer {s:?}"))
    }
}

/// A step rule with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rule {
    pub kind: RuleKind,
    pub params: HyperParams,
}

/// State for a generic training loop over any rule.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Simple(GameState),
    Momentum(MomentumState),
    Rescaled(RescaledState),
}

impl OptimizerState {
    pub fn x(&self) -> &GameState {
        match self {
            OptimizerState::Simple(x) => x,
            OptimizerState::Momentum(s) => &s.x,
            OptimizerState::Rescaled(s) => &s.x,
        }
    }

    /// Auxiliary state (momentum buffer, accumulator) appended to x.
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            OptimizerState::Simple(x) => x.as_slice().to_vec(),
            OptimizerState::Momentum(s) => {
                let mut f = s.x.as_slice().to_vec();
                f.extend_from_slice(&s.m);
                f
            }
            OptimizerState::Rescaled(s) => {
                let mut f = s.x.as_slice().to_vec();
                f.push(s.beta);
                f
            }
        }
    }
}

impl Rule {
    pub fn new(kind: RuleKind, params: HyperParams) -> Self {
        Self { kind, params }
    }

    /// Initial loop state at `x0` with auxiliary state at rest.
    pub fn init_state(&self, x0: GameState) -> OptimizerState {
        match self.kind {
            RuleKind::Momentum => OptimizerState::Momentum(MomentumState::at_rest(x0)),
            RuleKind::Rescaled | RuleKind::RescaledConsensus => {
                OptimizerState::Rescaled(RescaledState::fresh(x0))
            }
            _ => OptimizerState::Simple(x0),
        }
    }

    /// Dimension of the flattened loop state for a game of dimension `n`.
    pub fn flat_dim(&self, n: usize) -> usize {
        match self.kind {
            RuleKind::Momentum => 2 * n,
            RuleKind::Rescaled | RuleKind::RescaledConsensus => n + 1,
            _ => n,
        }
    }

    pub fn unflatten(
        &self,
        game: &TwoPlayerGame,
        flat: &[f64],
    ) -> Result<OptimizerState, OptimError> {
        let n = game.dim();
        let split = game.split();
        let state = |x: &[f64]| GameState::new(x.to_vec(), split).map_err(OptimError::Game);
        match self.kind {
            RuleKind::Momentum => {
                if flat.len() != 2 * n {
                    return Err(OptimError::InvalidHyperParam {
                        name: "flat state length",
                        value: flat.len() as f64,
                    });
                }
                Ok(OptimizerState::Momentum(MomentumState {
                    x: state(&flat[..n])?,
                    m: flat[n..].to_vec(),
                }))
            }
            RuleKind::Rescaled | RuleKind::RescaledConsensus => {
                if flat.len() != n + 1 {
                    return Err(OptimError::InvalidHyperParam {
                        name: "flat state length",
                        value: flat.len() as f64,
                    });
                }
                Ok(OptimizerState::Rescaled(RescaledState {
                    x: state(&flat[..n])?,
                    beta: flat[n],
                }))
            }
            _ => {
                if flat.len() != n {
                    return Err(OptimError::InvalidHyperParam {
                        name: "flat state length",
                        value: flat.len() as f64,
                    });
                }
                Ok(OptimizerState::Simple(state(flat)?))
            }
        }
    }

    /// One step of the rule.
    pub fn step(
        &self,
        game: &TwoPlayerGame,
        state: &OptimizerState,
    ) -> Result<OptimizerState, OptimError> {
        let p = &self.params;
        match (self.kind, state) {
            (RuleKind::SimGa, OptimizerState::Simple(x)) => {
                Ok(OptimizerState::Simple(simga_step(game, x, p.h)?))
            }
            (RuleKind::AltGa, OptimizerState::Simple(x)) => {
                Ok(OptimizerState::Simple(altga_step(game, x, p.h)?))
            }
            (RuleKind::Consensus, OptimizerState::Simple(x)) => Ok(OptimizerState::Simple(
                consensus_step(game, x, p.h, p.gamma)?,
            )),
            (RuleKind::Smoothing, OptimizerState::Simple(x)) => Ok(OptimizerState::Simple(
                smoothing_step(game, x, p.h, p.gamma)?,
            )),
            (RuleKind::Momentum, OptimizerState::Momentum(s)) => Ok(OptimizerState::Momentum(
                momentum_step(game, s, p.h, p.momentum_gamma)?,
            )),
            (RuleKind::Rescaled, OptimizerState::Rescaled(s)) => Ok(OptimizerState::Rescaled(
                rescaled_step(game, s, p.h, p.alpha, p.epsilon)?,
            )),
            (RuleKind::RescaledConsensus, OptimizerState::Rescaled(s)) => {
                let modified = consensus_modified_game(game, p.gamma)?;
                Ok(OptimizerState::Rescaled(rescaled_step(
                    &modified, s, p.h, p.alpha, p.epsilon,
                )?))
            }
            _ => Err(OptimError::InvalidHyperParam {
                name: "state kind does not match rule",
                value: f64::NAN,
            }),
        }
    }

    /// One step on the flattened state; the map whose Jacobian the
    /// fixed-point diagnostics differentiate.
    pub fn flat_step(&self, game: &TwoPlayerGame, flat: &[f64]) -> Result<Vec<f64>, OptimError> {
        let state = self.unflatten(game, flat)?;
        Ok(self.step(game, &state)?.flatten())
    }

    /// Norm of the field this rule actually follows (the consensus-modified
    /// one for the composite rules, the raw field otherwise).
    pub fn effective_field_norm(
        &self,
        game: &TwoPlayerGame,
        state: &GameState,
    ) -> Result<f64, OptimError> {
        match self.kind {
            RuleKind::Consensus | RuleKind::RescaledConsensus => {
                let eval = game::consensus_field(game, state, self.params.gamma)?;
                Ok(eval.w.iter().map(|c| c * c).sum::<f64>().sqrt())
            }
            _ => Ok(gradient_field(game, state)?.norm),
        }
    }
}
