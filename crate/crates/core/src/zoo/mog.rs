//! Mixture-of-Gaussians GAN: a two-player game between a small generator
//! network and a critic network, with frozen mini-batches so every game
//! instance is a deterministic function of (parameters, seed, counter).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::game::{GameState, TwoPlayerGame, UtilityExpr};

use super::mlp::{init_params, mlp_forward, mlp_forward_vars, MlpArch};

/// Target distribution: a ring of Gaussian modes on the unit circle at
/// angles `2 pi k / modes`, each with isotropic standard deviation `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct MogTarget {
    pub modes: usize,
    pub sigma: f64,
}

impl MogTarget {
    pub fn new(modes: usize, sigma: f64) -> Self {
        assert!(modes >= 1);
        assert!(sigma >= 0.0 && sigma.is_finite());
        Self { modes, sigma }
    }

    /// Eight modes with sigma 1e-2.
    pub fn ring8() -> Self {
        Self::new(8, 1e-2)
    }

    pub fn mode_centers(&self) -> Vec<[f64; 2]> {
        (0..self.modes)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / self.modes as f64;
                [angle.cos(), angle.sin()]
            })
            .collect()
    }
}

/// Draws `n` points: a uniformly chosen mode plus independent Gaussian noise
/// per coordinate.
pub fn sample_target(target: &MogTarget, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let centers = target.mode_centers();
    (0..n)
        .map(|_| {
            let c = centers[rng.gen_range(0..centers.len())];
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            [c[0] + target.sigma * dx, c[1] + target.sigma * dy]
        })
        .collect()
}

/// Number of target modes that have at least one sample within
/// `radius_multiplier * sigma * sqrt(2 ln n)` of their center.
///
/// The radius is the expected extreme deviation of `n` Gaussian draws, so
/// exact target samples cover every mode with high probability at
/// `radius_multiplier = 1`; the count is monotone in the multiplier.
pub fn mode_coverage(samples: &[[f64; 2]], target: &MogTarget, radius_multiplier: f64) -> usize {
    assert!(radius_multiplier > 0.0);
    if samples.is_empty() {
        return 0;
    }
    let radius = radius_multiplier * target.sigma * (2.0 * (samples.len() as f64).ln()).sqrt();
    target
        .mode_centers()
        .iter()
        .filter(|c| {
            samples.iter().any(|s| {
                let dx = s[0] - c[0];
                let dy = s[1] - c[1];
                (dx * dx + dy * dy).sqrt() <= radius
            })
        })
        .count()
}

/// Which utilities the two players maximize, as a function of the critic
/// logit `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceObjective {
    /// Zero-sum: the critic maximizes
    /// `E_p[log sigmoid(t)] + E_q[log sigmoid(-t)]`, the generator its
    /// negation.
    MinimaxJs,
    /// The critic as above; the generator maximizes `E_q[log sigmoid(t)]`.
    /// Not a zero-sum game.
    NonSaturating,
    /// Zero-sum with identity output transforms: the critic maximizes
    /// `E_q[t] - E_p[t]`, the generator minimizes it.
    Indicator,
}

impl DivergenceObjective {
    pub const ALL: [DivergenceObjective; 3] = [
        DivergenceObjective::MinimaxJs,
        DivergenceObjective::NonSaturating,
        DivergenceObjective::Indicator,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DivergenceObjective::MinimaxJs => "minimax-js",
            DivergenceObjective::NonSaturating => "non-saturating",
            DivergenceObjective::Indicator => "indicator",
        }
    }

    pub fn is_zero_sum(&self) -> bool {
        !matches!(self, DivergenceObjective::NonSaturating)
    }
}

impl fmt::Display for DivergenceObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DivergenceObjective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DivergenceObjective::ALL
            .iter()
            .find(|o| o.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown objective {s:?}"))
    }
}

/// Purpose tags for counter-derived random streams, so one run seed yields
/// independent, reproducible streams for initialization, per-step batches,
/// evaluation batches and coverage sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Batch(u64),
    Eval,
    Coverage(u64),
}

impl Stream {
    fn id(self) -> u64 {
        const TAG_SHIFT: u32 = 56;
        match self {
            Stream::Init => 0,
            Stream::Batch(counter) => (1 << TAG_SHIFT) | (counter & ((1 << TAG_SHIFT) - 1)),
            Stream::Eval => 2 << TAG_SHIFT,
            Stream::Coverage(counter) => (3 << TAG_SHIFT) | (counter & ((1 << TAG_SHIFT) - 1)),
        }
    }

    pub fn rng(self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.id());
        rng
    }
}

/// Architecture and sampling setup of the mixture-of-Gaussians GAN. The
/// joint parameter vector is the generator's parameters followed by the
/// critic's.
#[derive(Debug, Clone, PartialEq)]
pub struct GanSpec {
    pub gen_arch: MlpArch,
    pub disc_arch: MlpArch,
    pub objective: DivergenceObjective,
    pub target: MogTarget,
    pub batch: usize,
}

impl GanSpec {
    pub fn new(
        gen_arch: MlpArch,
        disc_arch: MlpArch,
        objective: DivergenceObjective,
        target: MogTarget,
        batch: usize,
    ) -> Self {
        assert_eq!(gen_arch.output_dim(), 2, "generator must produce 2d points");
        assert_eq!(disc_arch.input_dim(), 2, "critic must consume 2d points");
        assert_eq!(disc_arch.output_dim(), 1, "critic must produce one logit");
        assert!(batch >= 1);
        Self {
            gen_arch,
            disc_arch,
            objective,
            target,
            batch,
        }
    }

    /// 4 hidden layers of 16 units per net, 16d latent code, 8 modes,
    /// batch 64.
    pub fn paper(objective: DivergenceObjective) -> Self {
        Self::new(
            MlpArch::with_hidden(16, 4, 16, 2),
            MlpArch::with_hidden(2, 4, 16, 1),
            objective,
            MogTarget::ring8(),
            64,
        )
    }

    /// Desk-scale preset: 2 hidden layers of 8 units, 4 modes, batch 64.
    pub fn small(objective: DivergenceObjective) -> Self {
        Self::new(
            MlpArch::with_hidden(16, 2, 8, 2),
            MlpArch::with_hidden(2, 2, 8, 1),
            objective,
            MogTarget::new(4, 1e-2),
            64,
        )
    }

    pub fn latent_dim(&self) -> usize {
        self.gen_arch.input_dim()
    }

    /// Generator parameter count; the split of the joint state.
    pub fn split(&self) -> usize {
        self.gen_arch.param_count()
    }

    pub fn dim(&self) -> usize {
        self.gen_arch.param_count() + self.disc_arch.param_count()
    }

    /// Seeded initial joint state (generator then critic).
    pub fn init_state(&self, seed: u64) -> GameState {
        let mut rng = Stream::Init.rng(seed);
        let mut x = init_params(&self.gen_arch, &mut rng);
        x.extend(init_params(&self.disc_arch, &mut rng));
        GameState::new(x, self.split()).expect("non-empty parameter blocks")
    }

    /// The game induced by one frozen mini-batch. Utilities are Monte-Carlo
    /// estimates over `batch` real samples and `batch` latent codes drawn
    /// from the stream `(seed, counter)`; the result is a deterministic,
    /// bit-reproducible function of the parameters.
    pub fn game_at(&self, seed: u64, counter: u64) -> TwoPlayerGame {
        let mut rng = Stream::Batch(counter).rng(seed);
        let real = sample_target(&self.target, self.batch, &mut rng);
        let latents: Vec<Vec<f64>> = (0..self.batch)
            .map(|_| {
                (0..self.latent_dim())
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        self.game_from_batch(real, latents)
    }

    /// The game induced by the dedicated evaluation stream: a fixed batch
    /// independent of every training batch, for spectra and summaries.
    pub fn eval_game(&self, seed: u64) -> TwoPlayerGame {
        let mut rng = Stream::Eval.rng(seed);
        let real = sample_target(&self.target, self.batch, &mut rng);
        let latents: Vec<Vec<f64>> = (0..self.batch)
            .map(|_| {
                (0..self.latent_dim())
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        self.game_from_batch(real, latents)
    }

    /// The game induced by an explicit batch; exposed so tests can build
    /// degenerate configurations (e.g. identical real and fake inputs).
    pub fn game_from_batch(
        &self,
        real: Vec<[f64; 2]>,
        latents: Vec<Vec<f64>>,
    ) -> TwoPlayerGame {
        assert_eq!(real.len(), latents.len());
        assert!(latents.iter().all(|z| z.len() == self.latent_dim()));
        let make = |player_one: bool| GanUtility {
            gen_arch: self.gen_arch.clone(),
            disc_arch: self.disc_arch.clone(),
            objective: self.objective,
            real: real.clone(),
            latents: latents.clone(),
            player_one,
        };
        let (p, q) = (self.gen_arch.param_count(), self.disc_arch.param_count());
        if self.objective.is_zero_sum() {
            TwoPlayerGame::zero_sum(make(true), p, q)
        } else {
            TwoPlayerGame::general(make(true), make(false), p, q)
        }
    }

    /// `n` generator outputs; depends only on the generator block and the
    /// supplied rng, never on the critic.
    pub fn generator_samples(
        &self,
        gen_params: &[f64],
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<[f64; 2]> {
        assert_eq!(gen_params.len(), self.gen_arch.param_count());
        (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..self.latent_dim())
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let out = mlp_forward(&self.gen_arch, gen_params, &z);
                [out[0], out[1]]
            })
            .collect()
    }
}

/// Critic logits on the real batch and on the generator pushforward of the
/// latent batch, as tape expressions. Shared by the per-step frozen games
/// and the reusable trainer so both compute identical values.
fn critic_logits(
    tape: &Tape,
    gen_arch: &MlpArch,
    disc_arch: &MlpArch,
    gen: &[Var],
    disc: &[Var],
    real: &[Var],
    latents: &[Var],
) -> (Vec<Var>, Vec<Var>) {
    let latent_dim = gen_arch.input_dim();
    let t_real: Vec<Var> = real
        .chunks_exact(2)
        .map(|x| mlp_forward_vars(tape, disc_arch, disc, x).remove(0))
        .collect();
    let t_fake: Vec<Var> = latents
        .chunks_exact(latent_dim)
        .map(|z| {
            let point = mlp_forward_vars(tape, gen_arch, gen, z);
            mlp_forward_vars(tape, disc_arch, disc, &point).remove(0)
        })
        .collect();
    (t_real, t_fake)
}

fn mean(tape: &Tape, terms: &[Var]) -> Var {
    tape.sum(terms) * (1.0 / terms.len() as f64)
}

/// Utility of one player given the critic logits.
fn objective_utility(
    tape: &Tape,
    objective: DivergenceObjective,
    player_one: bool,
    t_real: &[Var],
    t_fake: &[Var],
) -> Var {
    match (objective, player_one) {
        (DivergenceObjective::MinimaxJs, _) => {
            // Stored as the generator's (player one) utility; the critic's
            // is the negation via the zero-sum constructor.
            let real_terms: Vec<Var> = t_real.iter().map(|t| t.log_sigmoid()).collect();
            let fake_terms: Vec<Var> = t_fake.iter().map(|t| (-t).log_sigmoid()).collect();
            -(mean(tape, &real_terms) + mean(tape, &fake_terms))
        }
        (DivergenceObjective::Indicator, _) => {
            // Generator maximizes E_p[t] - E_q[t]; critic the negation.
            mean(tape, t_real) - mean(tape, t_fake)
        }
        (DivergenceObjective::NonSaturating, true) => {
            let terms: Vec<Var> = t_fake.iter().map(|t| t.log_sigmoid()).collect();
            mean(tape, &terms)
        }
        (DivergenceObjective::NonSaturating, false) => {
            let real_terms: Vec<Var> = t_real.iter().map(|t| t.log_sigmoid()).collect();
            let fake_terms: Vec<Var> = t_fake.iter().map(|t| (-t).log_sigmoid()).collect();
            mean(tape, &real_terms) + mean(tape, &fake_terms)
        }
    }
}

struct GanUtility {
    gen_arch: MlpArch,
    disc_arch: MlpArch,
    objective: DivergenceObjective,
    real: Vec<[f64; 2]>,
    latents: Vec<Vec<f64>>,
    player_one: bool,
}

impl UtilityExpr for GanUtility {
    fn build(&self, tape: &Tape, phi: &[Var], theta: &[Var]) -> Var {
        let real: Vec<Var> = self
            .real
            .iter()
            .flat_map(|x| x.iter())
            .map(|&c| tape.constant(c))
            .collect();
        let latents: Vec<Var> = self
            .latents
            .iter()
            .flat_map(|z| z.iter())
            .map(|&c| tape.constant(c))
            .collect();
        let (t_real, t_fake) = critic_logits(
            tape,
            &self.gen_arch,
            &self.disc_arch,
            phi,
            theta,
            &real,
            &latents,
        );
        objective_utility(tape, self.objective, self.player_one, &t_real, &t_fake)
    }
}

/// One evaluation of the training field at a parameter point and batch.
#[derive(Debug, Clone)]
pub struct MogStepEval {
    /// The raw field `v` over the joint parameters.
    pub v: Vec<f64>,
    pub v_norm: f64,
    /// `grad L` (empty when evaluated with `gamma = 0`).
    pub grad_l: Vec<f64>,
    /// `w = v - gamma grad L` (equal to `v` when `gamma = 0`).
    pub w: Vec<f64>,
    pub w_norm: f64,
    /// Player utilities at the point.
    pub f: f64,
    pub g: f64,
    /// Smallest |relu input| over the batch, a smoothness margin.
    pub relu_margin: f64,
}

/// Reusable field evaluator for training loops.
///
/// The expression graph of the mini-batch field depends only on the
/// architectures, objective and batch size, not on the sample values, so it
/// is recorded once with the samples as tape inputs and re-evaluated per
/// step. Results are bit-identical to rebuilding the frozen game each step
/// up to the shared construction order.
pub struct MogTrainer {
    spec: GanSpec,
    seed: u64,
    tape: Tape,
    dim: usize,
    param_vars: Vec<Var>,
    field: Vec<Var>,
    loss: Var,
    f_expr: Var,
    g_expr: Option<Var>,
}

impl MogTrainer {
    pub fn new(spec: GanSpec, seed: u64) -> Self {
        let tape = Tape::new();
        let dim = spec.dim();
        let split = spec.split();
        // Placeholder values; every evaluation overwrites all inputs.
        let param_vars = tape.inputs(&vec![0.0; dim]);
        let real_vars = tape.inputs(&vec![0.0; 2 * spec.batch]);
        let latent_vars = tape.inputs(&vec![0.0; spec.batch * spec.latent_dim()]);
        let (phi, theta) = param_vars.split_at(split);

        // Mirror the construction order of the frozen per-step games: the
        // player-one utility, its reverse pass, then (for non-zero-sum
        // objectives) the player-two utility and its reverse pass.
        let (t_real, t_fake) = critic_logits(
            &tape,
            &spec.gen_arch,
            &spec.disc_arch,
            phi,
            theta,
            &real_vars,
            &latent_vars,
        );
        let f_expr = objective_utility(&tape, spec.objective, true, &t_real, &t_fake);
        let (field, g_expr) = if spec.objective.is_zero_sum() {
            let gf = tape
                .grad_vars(&f_expr, &param_vars)
                .expect("finite at placeholder inputs");
            let mut field: Vec<Var> = gf[..split].to_vec();
            field.extend(gf[split..].iter().map(|c| -c));
            (field, None)
        } else {
            let mut field = tape
                .grad_vars(&f_expr, phi)
                .expect("finite at placeholder inputs");
            let g_expr = objective_utility(&tape, spec.objective, false, &t_real, &t_fake);
            field.extend(
                tape.grad_vars(&g_expr, theta)
                    .expect("finite at placeholder inputs"),
            );
            (field, Some(g_expr))
        };
        let loss = crate::autodiff::half_squared_norm(&tape, &field);
        Self {
            spec,
            seed,
            tape,
            dim,
            param_vars,
            field,
            loss,
            f_expr,
            g_expr,
        }
    }

    pub fn spec(&self) -> &GanSpec {
        &self.spec
    }

    /// Draws the batch for `counter` exactly as [`GanSpec::game_at`] does.
    fn batch_values(&self, counter: u64) -> Vec<f64> {
        let mut rng = Stream::Batch(counter).rng(self.seed);
        let real = sample_target(&self.spec.target, self.spec.batch, &mut rng);
        let mut values = Vec::with_capacity(2 * self.spec.batch + self.spec.batch * self.spec.latent_dim());
        for p in &real {
            values.extend_from_slice(p);
        }
        for _ in 0..self.spec.batch * self.spec.latent_dim() {
            values.push(rng.sample::<f64, _>(StandardNormal));
        }
        values
    }

    /// Evaluates the field (and for `gamma > 0` the consensus-modified
    /// field) at `params` on the mini-batch derived from `counter`.
    pub fn eval(
        &self,
        params: &[f64],
        counter: u64,
        gamma: f64,
    ) -> Result<MogStepEval, crate::game::GameError> {
        assert_eq!(params.len(), self.dim);
        let mut inputs = params.to_vec();
        inputs.extend(self.batch_values(counter));
        self.tape.reevaluate(&inputs).map_err(crate::game::GameError::Ad)?;
        let v: Vec<f64> = self.field.iter().map(|c| c.value()).collect();
        if v.iter().any(|c| !c.is_finite()) {
            return Err(crate::game::GameError::Ad(
                crate::autodiff::AdError::NonFinite {
                    context: "field value",
                },
            ));
        }
        let v_norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let (grad_l, w) = if gamma > 0.0 {
            let gl = self
                .tape
                .grad(&self.loss, &self.param_vars)
                .map_err(crate::game::GameError::Ad)?;
            let w: Vec<f64> = v.iter().zip(&gl).map(|(a, b)| a - gamma * b).collect();
            (gl, w)
        } else {
            (Vec::new(), v.clone())
        };
        let w_norm = w.iter().map(|c| c * c).sum::<f64>().sqrt();
        let f = self.f_expr.value();
        let g = match &self.g_expr {
            Some(g) => g.value(),
            None => -f,
        };
        let relu_margin = self.tape.min_abs_relu_input().unwrap_or(f64::INFINITY);
        Ok(MogStepEval {
            v,
            v_norm,
            grad_l,
            w,
            w_norm,
            f,
            g,
            relu_margin,
        })
    }
}
