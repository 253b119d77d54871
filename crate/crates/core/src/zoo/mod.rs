//! Benchmark game zoo: closed-form analytic games whose fields and Jacobians
//! are known exactly (oracles for everything else), and a small
//! mixture-of-Gaussians GAN built from fully connected relu networks with
//! selectable divergence objectives.

mod analytic;
mod mlp;
mod mog;
mod snapshot;

pub use analytic::{BilinearGame, QuadraticGame};
pub use mlp::{init_params, mlp_forward, mlp_forward_vars, MlpArch, MlpParams};
pub use mog::{
    mode_coverage, sample_target, DivergenceObjective, GanSpec, MogStepEval, MogTarget,
    MogTrainer, Stream,
};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotManifest};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ZooError {
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
    #[error("shape mismatch: {context}")]
    Shape { context: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot: {reason}")]
    BadSnapshot { reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
