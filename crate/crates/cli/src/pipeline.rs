//! Execution pipelines: training runs, spectrum exports and hyperparameter
//! sweeps. All outputs are deterministic functions of (config, seed).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gamedyn::analysis::{
    self, fit_rate_from_errors, spectrum_histogram_export, spectrum_rows_to_csv, AnalysisError,
};
use gamedyn::game::{GameError, GameState, TwoPlayerGame};
use gamedyn::linalg::Matrix;
use gamedyn::optim::{OptimError, Rule, RuleKind};
use gamedyn::zoo::{
    mode_coverage, read_snapshot, write_snapshot, BilinearGame, GanSpec, MlpArch, MogTarget,
    MogTrainer, QuadraticGame, Stream, ZooError,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::{GameName, RunConfig};
use crate::output::{self, TrajectoryRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("snapshot shape ({len}, split {split}) does not match game ({expected_len}, split {expected_split})")]
    SnapshotShape {
        len: usize,
        split: usize,
        expected_len: usize,
        expected_split: usize,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Field norm beyond which a run is declared divergent and stopped.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Band around a unit per-step factor inside which a run counts as marginal.
const MARGINAL_FACTOR_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Converged,
    Marginal,
    Diverged,
}

/// Summary of one run, written as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub steps_run: u64,
    pub initial_field_norm: f64,
    pub final_field_norm: f64,
    /// Least-squares per-step factor of the field norm over the recorded
    /// trajectory; absent when it cannot be computed.
    pub field_norm_factor: Option<f64>,
    /// Per-step contraction factor toward the known equilibrium (analytic
    /// games only, and only when the trajectory decreases).
    pub fitted_rate: Option<f64>,
    pub mode_coverage: Option<usize>,
    pub diverged_at_step: Option<u64>,
}

/// The game a run trains, with the batch machinery for the stochastic one.
enum Driver {
    Analytic {
        game: TwoPlayerGame,
        x0: GameState,
    },
    Mog {
        spec: GanSpec,
        trainer: MogTrainer,
        x0: GameState,
    },
}

impl Driver {
    fn from_config(config: &RunConfig) -> Driver {
        match config.game {
            GameName::Bilinear => {
                let analytic = BilinearGame::identity(config.dim);
                Driver::Analytic {
                    x0: default_x0(config, analytic.dim()),
                    game: analytic.game(),
                }
            }
            GameName::Quadratic => {
                let analytic = QuadraticGame::new(
                    config.quad_a,
                    config.quad_b,
                    Matrix::identity(config.dim),
                );
                Driver::Analytic {
                    x0: default_x0(config, analytic.dim()),
                    game: analytic.game(),
                }
            }
            GameName::Mog => {
                let spec = gan_spec(config, config.batch);
                let trainer = MogTrainer::new(spec.clone(), config.seed);
                let x0 = spec.init_state(config.seed);
                Driver::Mog { spec, trainer, x0 }
            }
        }
    }

    fn x0(&self) -> GameState {
        match self {
            Driver::Analytic { x0, .. } => x0.clone(),
            Driver::Mog { x0, .. } => x0.clone(),
        }
    }

    fn snapshot_layers(&self) -> Vec<(usize, usize)> {
        match self {
            Driver::Analytic { .. } => Vec::new(),
            Driver::Mog { spec, .. } => {
                let mut layers = spec.gen_arch.weight_shapes();
                layers.extend(spec.disc_arch.weight_shapes());
                layers
            }
        }
    }
}

/// The mixture-of-Gaussians setup named by a config, with an explicit batch
/// size (training and evaluation use different ones).
pub fn gan_spec(config: &RunConfig, batch: usize) -> GanSpec {
    GanSpec::new(
        MlpArch::with_hidden(config.latent_dim, config.hidden_layers, config.hidden_units, 2),
        MlpArch::with_hidden(2, config.hidden_layers, config.hidden_units, 1),
        config.objective,
        MogTarget::new(config.modes, config.sigma),
        batch,
    )
}

fn default_x0(config: &RunConfig, dim: usize) -> GameState {
    let split = dim / 2;
    match &config.x0 {
        Some(x) => GameState::new(x.clone(), split).expect("validated at parse"),
        None => {
            // phi block at ones, theta block at zeros.
            let mut x = vec![1.0; split];
            x.extend(vec![0.0; dim - split]);
            GameState::new(x, split).expect("dim >= 2")
        }
    }
}

/// Per-rule loop state for the mixture-of-Gaussians fast path.
struct MogLoopState {
    x: Vec<f64>,
    m: Vec<f64>,
    beta: f64,
}

/// One training step against the reusable evaluator; the update formulas
/// mirror the canonical rules in [`gamedyn::optim`] exactly (cross-checked
/// in the test suite).
fn mog_step(
    trainer: &MogTrainer,
    rule: &Rule,
    state: &mut MogLoopState,
    step: u64,
) -> Result<(f64, f64, f64), PipelineError> {
    let p = rule.params;
    let gamma_needed = match rule.kind {
        RuleKind::Consensus | RuleKind::Smoothing | RuleKind::RescaledConsensus => p.gamma,
        _ => 0.0,
    };
    let eval = trainer.eval(&state.x, step, gamma_needed)?;
    let split = trainer.spec().split();
    match rule.kind {
        RuleKind::SimGa => {
            for (xi, vi) in state.x.iter_mut().zip(&eval.v) {
                *xi += p.h * vi;
            }
        }
        RuleKind::AltGa => {
            for (xi, vi) in state.x.iter_mut().take(split).zip(&eval.v) {
                *xi += p.h * vi;
            }
            let second = trainer.eval(&state.x, step, 0.0)?;
            for (xi, vi) in state.x.iter_mut().zip(&second.v).skip(split) {
                *xi += p.h * vi;
            }
        }
        RuleKind::Consensus => {
            for (xi, wi) in state.x.iter_mut().zip(&eval.w) {
                *xi += p.h * wi;
            }
        }
        RuleKind::Smoothing => {
            for (i, xi) in state.x.iter_mut().enumerate() {
                let dir = if i < split { eval.v[i] } else { eval.w[i] };
                *xi += p.h * dir;
            }
        }
        RuleKind::Momentum => {
            for (xi, mi) in state.x.iter_mut().zip(&state.m) {
                *xi += p.h * mi;
            }
            for (mi, vi) in state.m.iter_mut().zip(&eval.v) {
                *mi += p.h * (vi - p.momentum_gamma * *mi);
            }
        }
        RuleKind::Rescaled => {
            let scale = p.h / (state.beta + p.epsilon).sqrt();
            for (xi, vi) in state.x.iter_mut().zip(&eval.v) {
                *xi += scale * vi;
            }
            state.beta = (1.0 - p.alpha) * state.beta + p.alpha * eval.v_norm * eval.v_norm;
        }
        RuleKind::RescaledConsensus => {
            let scale = p.h / (state.beta + p.epsilon).sqrt();
            for (xi, wi) in state.x.iter_mut().zip(&eval.w) {
                *xi += scale * wi;
            }
            state.beta = (1.0 - p.alpha) * state.beta + p.alpha * eval.w_norm * eval.w_norm;
        }
    }
    Ok((eval.v_norm, eval.f, eval.g))
}

/// Outcome of `run`: the summary plus everything tests want to inspect
/// without re-reading files.
pub struct RunOutcome {
    pub summary: RunSummary,
    pub records: Vec<TrajectoryRecord>,
    pub final_state: GameState,
    pub out_dir: PathBuf,
}

/// Executes a training run and writes `trajectory.csv`, requested spectrum
/// CSVs, the final parameter snapshot and `summary.json` into the output
/// directory.
pub fn run(config: &RunConfig) -> Result<RunOutcome, PipelineError> {
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let driver = Driver::from_config(config);
    let rule = config.rule();
    let x0 = driver.x0();

    let mut records: Vec<TrajectoryRecord> = Vec::new();
    let mut distance_trace: Vec<f64> = Vec::new();
    let mut diverged_at: Option<u64> = None;
    let started = Instant::now();

    // Generic loop state; the analytic path drives the canonical rule
    // implementation, the stochastic path the reusable evaluator.
    let mut analytic_state = rule.init_state(x0.clone());
    let mut mog_state = MogLoopState {
        x: x0.as_slice().to_vec(),
        m: vec![0.0; x0.len()],
        beta: 0.0,
    };

    let mut steps_run = 0u64;
    let mut step = 0u64;
    loop {
        // Current iterate.
        let x_now: Vec<f64> = match &driver {
            Driver::Analytic { .. } => analytic_state.x().as_slice().to_vec(),
            Driver::Mog { .. } => mog_state.x.clone(),
        };
        if x_now.iter().any(|c| !c.is_finite()) {
            diverged_at = Some(step);
            break;
        }
        let state_now = x0.with_x(x_now.clone());

        // Diagnostics at record points and at the very end.
        let record_now = step % config.record_every == 0 || step == config.steps;
        let mut field_norm_now = None;
        if record_now {
            let (field_norm, f, g, coverage) = match &driver {
                Driver::Analytic { game, .. } => {
                    let fe = gamedyn::game::gradient_field(game, &state_now)?;
                    let utils = gamedyn::game::utilities(game, &state_now)?;
                    (fe.norm, utils.0, utils.1, None)
                }
                Driver::Mog { spec, trainer, .. } => {
                    let eval = trainer.eval(&mog_state.x, step, 0.0)?;
                    let samples = spec.generator_samples(
                        &mog_state.x[..spec.split()],
                        config.coverage_samples,
                        &mut Stream::Coverage(step).rng(config.seed),
                    );
                    let cov = mode_coverage(&samples, &spec.target, config.radius_multiplier);
                    (eval.v_norm, eval.f, eval.g, Some(cov))
                }
            };
            field_norm_now = Some(field_norm);
            records.push(TrajectoryRecord {
                step,
                field_norm,
                player1_utility: f,
                player2_utility: g,
                mode_coverage: coverage,
                wall_ms: started.elapsed().as_millis() as u64,
            });
            distance_trace.push(
                x_now.iter().map(|c| c * c).sum::<f64>().sqrt(),
            );
        }

        // Requested spectrum exports.
        if config.spectrum_points.contains(&step) {
            export_spectra(config, &driver, &state_now, &out_dir, step)?;
        }

        // Divergence detection before stepping further.
        if let Some(norm) = field_norm_now {
            if !norm.is_finite() || norm > DIVERGENCE_LIMIT {
                diverged_at = Some(step);
                break;
            }
        }
        if step == config.steps {
            break;
        }

        // One step. A non-finite blowup inside the step marks the run
        // divergent with the partial trajectory kept.
        let step_result: Result<(), PipelineError> = match &driver {
            Driver::Analytic { game, .. } => match rule.step(game, &analytic_state) {
                Ok(next) => {
                    analytic_state = next;
                    Ok(())
                }
                Err(OptimError::NonFiniteState) => {
                    diverged_at = Some(step);
                    break;
                }
                Err(e) => Err(e.into()),
            },
            Driver::Mog { trainer, .. } => match mog_step(trainer, &rule, &mut mog_state, step) {
                Ok(_) => Ok(()),
                Err(PipelineError::Game(GameError::Ad(_))) => {
                    diverged_at = Some(step);
                    break;
                }
                Err(e) => Err(e),
            },
        };
        step_result?;
        step += 1;
        steps_run = step;
    }

    let initial_field_norm = records.first().map(|r| r.field_norm).unwrap_or(f64::NAN);
    let final_field_norm = records.last().map(|r| r.field_norm).unwrap_or(f64::NAN);

    // Per-step factor of the field norm over the recorded trajectory.
    let field_norm_factor = fit_factor_per_step(&records);
    let status = if diverged_at.is_some() {
        RunStatus::Diverged
    } else {
        match field_norm_factor {
            Some(f) if f > 1.0 + MARGINAL_FACTOR_BAND => RunStatus::Diverged,
            Some(f) if f < 1.0 - MARGINAL_FACTOR_BAND => RunStatus::Converged,
            Some(_) => RunStatus::Marginal,
            None => {
                if final_field_norm < 1e-12 {
                    RunStatus::Converged
                } else {
                    RunStatus::Marginal
                }
            }
        }
    };

    // Contraction rate toward the origin (the analytic games' equilibrium).
    let fitted_rate = match &driver {
        Driver::Analytic { .. } => fit_rate_from_errors(&distance_trace)
            .ok()
            .map(|per_record| per_record.powf(1.0 / config.record_every as f64)),
        Driver::Mog { .. } => None,
    };

    let mode_cov = records.last().and_then(|r| r.mode_coverage);
    let summary = RunSummary {
        status,
        steps_run,
        initial_field_norm,
        final_field_norm,
        field_norm_factor,
        fitted_rate,
        mode_coverage: mode_cov,
        diverged_at_step: diverged_at,
    };

    // Emit files.
    write_file(&out_dir.join("trajectory.csv"), &output::trajectory_csv(&records)?)?;
    let final_x = match &driver {
        Driver::Analytic { .. } => analytic_state.x().as_slice().to_vec(),
        Driver::Mog { .. } => mog_state.x.clone(),
    };
    // Snapshots hold raw parameter bytes; non-finite blowups keep the last
    // finite-checked iterate semantics of the loop above.
    write_snapshot(
        &out_dir,
        "snapshot",
        x0.split(),
        driver.snapshot_layers(),
        &final_x,
    )?;
    write_file(&out_dir.join("summary.json"), &output::summary_json(&summary))?;

    Ok(RunOutcome {
        summary,
        records,
        final_state: x0.with_x(final_x),
        out_dir,
    })
}

fn fit_factor_per_step(records: &[TrajectoryRecord]) -> Option<f64> {
    if records.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.field_norm.is_finite() && r.field_norm > 0.0)
        .map(|r| (r.step as f64, r.field_norm.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let kx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ky = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &pts {
        num += (x - kx) * (y - ky);
        den += (x - kx) * (x - kx);
    }
    if den == 0.0 {
        return None;
    }
    Some((num / den).exp())
}

fn export_spectra(
    config: &RunConfig,
    driver: &Driver,
    state: &GameState,
    out_dir: &Path,
    step: u64,
) -> Result<(), PipelineError> {
    let eval_game = spectrum_game(config, driver);
    let spec_v = analysis::field_spectrum(&eval_game, state, 0.0)?;
    let rows = spectrum_histogram_export(&spec_v, config.clip_real);
    write_file(
        &out_dir.join(format!("spectrum_v_{step}.csv")),
        &spectrum_rows_to_csv(&rows)?,
    )?;
    if config.gamma > 0.0 {
        let spec_w = analysis::field_spectrum(&eval_game, state, config.gamma)?;
        let rows = spectrum_histogram_export(&spec_w, config.clip_real);
        write_file(
            &out_dir.join(format!("spectrum_w_{step}.csv")),
            &spectrum_rows_to_csv(&rows)?,
        )?;
    }
    Ok(())
}

/// The game spectra are computed on: the run's game for analytic setups, a
/// fixed evaluation batch (its own stream, `eval_batch` samples) for the
/// stochastic one.
fn spectrum_game(config: &RunConfig, driver: &Driver) -> TwoPlayerGame {
    match driver {
        Driver::Analytic { game, .. } => game.clone(),
        Driver::Mog { .. } => gan_spec(config, config.eval_batch).eval_game(config.seed),
    }
}

/// Writes one spectrum CSV for a config, optionally at a saved snapshot.
pub fn spectrum(
    config: &RunConfig,
    snapshot_path: Option<&Path>,
) -> Result<PathBuf, PipelineError> {
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let driver = Driver::from_config(config);
    let state = match snapshot_path {
        None => driver.x0(),
        Some(path) => {
            let (manifest, values) = read_snapshot(path)?;
            let x0 = driver.x0();
            if manifest.len != x0.len() || manifest.split != x0.split() {
                return Err(PipelineError::SnapshotShape {
                    len: manifest.len,
                    split: manifest.split,
                    expected_len: x0.len(),
                    expected_split: x0.split(),
                });
            }
            x0.with_x(values)
        }
    };
    let eval_game = spectrum_game(config, &driver);
    let spec = analysis::field_spectrum(&eval_game, &state, config.gamma)?;
    let rows = spectrum_histogram_export(&spec, config.clip_real);
    let path = out_dir.join("spectrum.csv");
    write_file(&path, &spectrum_rows_to_csv(&rows)?)?;
    Ok(path)
}

/// The sweep axis: which hyperparameter the values replace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    H,
    Gamma,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h" => Ok(SweepAxis::H),
            "gamma" => Ok(SweepAxis::Gamma),
            other => Err(format!("unknown sweep axis {other:?} (expected h or gamma)")),
        }
    }
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub aggregate_path: PathBuf,
}

pub struct SweepRow {
    pub value: f64,
    pub status: RunStatus,
    pub final_field_norm: f64,
    pub fitted_rate: Option<f64>,
}

fn derived_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the base/index pair.
    let mut z = base ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the base config once per value of the chosen axis, each with a
/// derived seed and its own subdirectory, and writes `aggregate.csv`.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<SweepOutcome, PipelineError> {
    assert!(!values.is_empty(), "sweep needs at least one value");
    fs::create_dir_all(&base.out_dir).map_err(|source| PipelineError::Io {
        path: base.out_dir.clone(),
        source,
    })?;
    let mut rows = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let mut config = base.clone();
        match axis {
            SweepAxis::H => config.h = value,
            SweepAxis::Gamma => config.gamma = value,
        }
        config.seed = derived_seed(base.seed, i as u64);
        config.out_dir = base.out_dir.join(format!("run-{i:03}"));
        let outcome = run(&config)?;
        rows.push(SweepRow {
            value,
            status: outcome.summary.status,
            final_field_norm: outcome.summary.final_field_norm,
            fitted_rate: outcome.summary.fitted_rate,
        });
    }
    let aggregate_path = base.out_dir.join("aggregate.csv");
    write_file(&aggregate_path, &output::aggregate_csv(&rows)?)?;
    Ok(SweepOutcome {
        rows,
        aggregate_path,
    })
}
