//! Structural invariants of game fields and Jacobians, including on the
//! mixture-of-Gaussians GAN.

mod common;

use common::rng;
use gamedyn::game::{
    self, consensus_field, gradient_field, jacobian, zero_sum_structure_residual, GameState,
    JacobianMethod, RecordedField,
};
use gamedyn::linalg::{self, is_negative_definite, Matrix};
use gamedyn::zoo::{DivergenceObjective, GanSpec, QuadraticGame};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn zero_sum_block_structure_on_quadratic_games() {
    let mut rng = rng(21);
    for _ in 0..10 {
        let p = rng.gen_range(1..=3);
        let q = rng.gen_range(1..=3);
        let m = Matrix::from_fn(p, q, |_, _| rng.gen_range(-1.0..1.0));
        let game = QuadraticGame::new(rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), m);
        let x: Vec<f64> = (0..p + q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let state = GameState::new(x, p).unwrap();
        let j = jacobian(&game.game(), &state, JacobianMethod::AutodiffFd).unwrap();
        let res = zero_sum_structure_residual(&j, p);
        assert!(res < 1e-5 * (1.0 + j.max_abs()), "residual {res:.3e}");
    }
}

#[test]
fn zero_sum_block_structure_on_minimax_gan() {
    let spec = GanSpec::small(DivergenceObjective::MinimaxJs);
    let state = spec.init_state(3);
    let game = spec.game_at(3, 0);
    assert!(game.is_zero_sum());
    let j = jacobian(&game, &state, JacobianMethod::AutodiffFd).unwrap();
    let res = zero_sum_structure_residual(&j, spec.split());
    assert!(res < 1e-5 * (1.0 + j.max_abs()), "residual {res:.3e}");
}

#[test]
fn consensus_field_matches_modified_game_on_gan() {
    let spec = GanSpec::small(DivergenceObjective::NonSaturating);
    let state = spec.init_state(5);
    let game = spec.game_at(5, 0);
    let gamma = 0.5;
    let direct = consensus_field(&game, &state, gamma).unwrap();
    let modified = game::consensus_modified_game(&game, gamma).unwrap();
    let via_game = gradient_field(&modified, &state).unwrap();
    let scale = 1.0 + direct.v.norm;
    for (a, b) in direct.w.iter().zip(&via_game.v) {
        assert!((a - b).abs() < 1e-8 * scale, "{a} vs {b}");
    }
}

#[test]
fn fixed_points_of_w_coincide_with_stationary_points() {
    // ||w - v|| <= gamma ||v'|| ||v||, so near a stationary point both
    // fields vanish together.
    let mut rng = rng(33);
    let m = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let analytic = QuadraticGame::new(1.0, 1.0, m);
    let game = analytic.game();
    let gamma = 2.0;
    let jnorm = analytic.system_matrix().fro_norm();
    for scale in [1e-3, 1e-6, 1e-9] {
        let x: Vec<f64> = (0..4).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let state = GameState::new(x, 2).unwrap();
        let eval = consensus_field(&game, &state, gamma).unwrap();
        let wnorm = eval.w.iter().map(|c| c * c).sum::<f64>().sqrt();
        let bound = gamma * jnorm * eval.v.norm * 1.001 + 1e-15;
        assert!(
            (wnorm - eval.v.norm).abs() <= bound,
            "scale {scale}: |w|={wnorm:.3e} |v|={:.3e}",
            eval.v.norm
        );
    }
}

#[test]
fn gan_gradients_match_finite_differences() {
    // Relu networks are only piecewise smooth; points are redrawn until all
    // preactivations clear a margin that the FD probes cannot cross.
    let spec = GanSpec::small(DivergenceObjective::NonSaturating);
    let game = spec.game_at(17, 0);
    let mut accepted = 0;
    let mut attempt = 0;
    while accepted < 3 {
        attempt += 1;
        assert!(attempt < 40, "could not find smooth sample points");
        let state = spec.init_state(100 + attempt);
        let recorded = RecordedField::record(&game, &state).unwrap();
        if recorded.min_relu_margin().unwrap_or(1.0) < 1e-4 {
            continue;
        }
        accepted += 1;
        let v = gradient_field(&game, &state).unwrap();
        // Central differences of the utility values, player by player.
        let x = state.as_slice();
        let scale = linalg::default_fd_scale();
        let mut worst = 0.0_f64;
        for j in 0..x.len() {
            let delta = scale * x[j].abs().max(1.0);
            let mut probe = x.to_vec();
            probe[j] = x[j] + delta;
            let up = game::utilities(&game, &state.with_x(probe.clone())).unwrap();
            probe[j] = x[j] - delta;
            let um = game::utilities(&game, &state.with_x(probe)).unwrap();
            let denom = (x[j] + delta) - (x[j] - delta);
            let fd = if j < state.split() {
                (up.0 - um.0) / denom
            } else {
                (up.1 - um.1) / denom
            };
            worst = worst.max((v.v[j] - fd).abs() / (1.0 + v.v[j].abs().max(fd.abs())));
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst:.3e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn definiteness_sees_only_the_symmetric_part(
        entries in proptest::collection::vec(-2.0f64..2.0, 9),
    ) {
        let m = Matrix::from_vec(3, 3, entries);
        let tol = linalg::default_definiteness_tol(&m);
        let full = is_negative_definite(&m, tol).unwrap();
        let sym = is_negative_definite(&m.symmetric_part(), tol).unwrap();
        prop_assert_eq!(full, sym);
    }
}
