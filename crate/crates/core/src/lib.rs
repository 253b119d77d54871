//! Tools for finding and analyzing local Nash equilibria of smooth
//! two-player games.
//!
//! The crate is organized around the gradient vector field of a game: the
//! stacked per-player gradients `v(x) = (grad_phi f, grad_theta g)`. It
//! provides
//!
//! - [`linalg`]: dense matrices, eigenvalues of non-symmetric matrices and
//!   finite-difference Jacobians,
//! - [`autodiff`]: tape-based reverse-mode differentiation that can also
//!   differentiate through gradients (double backpropagation),
//! - [`game`]: the two-player game abstraction, its field and Jacobian, the
//!   consensus-modified game and local Nash tests,
//! - [`optim`]: the fixed-point iteration family (simultaneous and
//!   alternating gradient ascent, consensus, momentum, gradient rescaling,
//!   generic preconditioning) plus the spectral step-size bound,
//! - [`analysis`]: convergence diagnostics based on the spectrum of the
//!   iteration Jacobian,
//! - [`zoo`]: closed-form benchmark games and a small mixture-of-Gaussians
//!   GAN for end-to-end experiments.

pub mod analysis;
pub mod autodiff;
pub mod game;
pub mod linalg;
pub mod optim;
pub mod zoo;
