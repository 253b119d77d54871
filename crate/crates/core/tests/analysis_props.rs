//! Diagnostics invariants: predicted versus fitted convergence rates,
//! closed-form consensus spectra, the quotient bound over a random family,
//! and the attraction-implies-convergence property.

mod common;

use common::*;
use gamedyn::analysis::{
    classify_fixed_point, field_spectrum, fit_convergence_rate, quotient_bound_check,
    FixedPointClass,
};
use gamedyn::game::GameState;
use gamedyn::linalg::{eigenvalues, Matrix};
use gamedyn::optim::{HyperParams, Rule, RuleKind};
use gamedyn::zoo::{BilinearGame, QuadraticGame};
use rand::Rng;

fn rule(kind: RuleKind, h: f64, gamma: f64) -> Rule {
    Rule::new(
        kind,
        HyperParams {
            h,
            gamma,
            ..HyperParams::default()
        },
    )
}

#[test]
fn predicted_rate_matches_fitted_rate_on_linear_games() {
    // Consensus on the scalar bilinear game contracts at exactly sqrt(1/2)
    // per step for gamma = 1, h = 1/2.
    let game = BilinearGame::scalar().game();
    let origin = GameState::new(vec![0.0, 0.0], 1).unwrap();
    let r = rule(RuleKind::Consensus, 0.5, 1.0);
    let report = classify_fixed_point(&r, &game, &origin, 1e-9).unwrap();
    assert_eq!(report.classification, FixedPointClass::Attracting);

    let mut s = GameState::new(vec![1.0, 0.0], 1).unwrap();
    let mut trajectory = vec![s.as_slice().to_vec()];
    for _ in 0..40 {
        s = gamedyn::optim::consensus_step(&game, &s, 0.5, 1.0).unwrap();
        trajectory.push(s.as_slice().to_vec());
    }
    let fitted = fit_convergence_rate(&trajectory, &[0.0, 0.0]).unwrap();
    assert!((fitted - report.predicted_rate).abs() < 0.02);
    assert!((fitted - 0.5_f64.sqrt()).abs() < 0.01);
}

#[test]
fn predicted_rate_matches_fitted_rate_on_quadratic_simga() {
    let mut rng = rng(8);
    let m = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let analytic = QuadraticGame::new(1.0, 0.8, m);
    let game = analytic.game();
    let spec = eigenvalues(&analytic.system_matrix()).unwrap();
    let h = 0.9 * gamedyn::optim::max_stable_step(&spec).unwrap();
    let r = rule(RuleKind::SimGa, h, 0.0);
    let origin = GameState::new(vec![0.0; 4], 2).unwrap();
    let report = classify_fixed_point(&r, &game, &origin, 1e-9).unwrap();
    assert_eq!(report.classification, FixedPointClass::Attracting);

    let mut s = GameState::new(vec![0.6, -0.3, 0.2, 0.5], 2).unwrap();
    let mut trajectory = vec![s.as_slice().to_vec()];
    for _ in 0..400 {
        s = gamedyn::optim::simga_step(&game, &s, h).unwrap();
        trajectory.push(s.as_slice().to_vec());
    }
    let fitted = fit_convergence_rate(&trajectory, &[0.0; 4]).unwrap();
    assert!(
        (fitted - report.predicted_rate).abs() < 0.02,
        "fitted {fitted} vs predicted {}",
        report.predicted_rate
    );
}

#[test]
fn consensus_spectrum_matches_closed_form_on_constant_jacobians() {
    // For a linear field v = Bx the modified field has the constant
    // Jacobian B - gamma B^T B.
    let mut rng = rng(9);
    for _ in 0..5 {
        let m = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let analytic = QuadraticGame::new(0.7, 1.1, m);
        let game = analytic.game();
        let b = analytic.system_matrix();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let state = GameState::new(x, 2).unwrap();
        for gamma in [0.0, 0.5, 2.0] {
            let got = field_spectrum(&game, &state, gamma).unwrap();
            let closed = b.sub(&b.transpose().matmul(&b).scale(gamma));
            let expected = eigenvalues(&closed).unwrap();
            let d = optimal_matching_distance(got.eigenvalues(), expected.eigenvalues());
            assert!(d < 1e-6, "gamma={gamma}: distance {d:.3e}");
        }
    }
}

#[test]
fn quotient_bound_holds_on_shifted_gram_family() {
    // A = -(P^T P + I) + antisymmetric noise: negative definite symmetric
    // part, comfortably invertible.
    let mut rng = rng(10);
    for _ in 0..10 {
        let n = rng.gen_range(2..=5);
        let p = random_matrix(n, &mut rng);
        let sym = p.transpose().matmul(&p).add(&Matrix::identity(n)).scale(-1.0);
        let mut anti = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = rng.gen_range(-1.0..1.0);
                anti[(i, j)] = v;
                anti[(j, i)] = -v;
            }
        }
        let a = sym.add(&anti);
        let mut last_q = f64::INFINITY;
        for gamma in [0.1, 1.0, 10.0] {
            let report = quotient_bound_check(&a, gamma).unwrap();
            assert!(report.holds, "gamma={gamma}: q exceeded the bound");
            let q = report.q_observed.as_f64();
            assert!(
                q <= report.bound_weak + 1e-9,
                "gamma={gamma}: {q} vs {}",
                report.bound_weak
            );
            assert!(q <= last_q + 1e-9, "q increased at gamma={gamma}");
            last_q = q;
            if let Some(c) = report.c_hat_sampled {
                assert!(c >= 0.0);
            }
        }
    }
}

#[test]
fn attracting_classification_implies_empirical_convergence() {
    let mut rng = rng(11);
    let analytic = QuadraticGame::new(1.2, 0.9, Matrix::from_fn(2, 2, |_, _| rng.gen_range(-0.5..0.5)));
    let game = analytic.game();
    let spec = eigenvalues(&analytic.system_matrix()).unwrap();
    let h = 0.5 * gamedyn::optim::max_stable_step(&spec).unwrap();
    let r = rule(RuleKind::SimGa, h, 0.0);
    let origin = GameState::new(vec![0.0; 4], 2).unwrap();
    let report = classify_fixed_point(&r, &game, &origin, 1e-9).unwrap();
    assert_eq!(report.classification, FixedPointClass::Attracting);
    let rate = report.predicted_rate;
    let budget = (10.0 * (1.0 / (1.0 - rate)).ceil() * (1e3_f64).ln()).ceil() as usize;

    // Random perturbation of norm 1e-3.
    let mut delta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm: f64 = delta.iter().map(|c| c * c).sum::<f64>().sqrt();
    for d in delta.iter_mut() {
        *d *= 1e-3 / norm;
    }
    let mut s = GameState::new(delta, 2).unwrap();
    let mut converged = false;
    for _ in 0..budget {
        s = gamedyn::optim::simga_step(&game, &s, h).unwrap();
        let dist: f64 = s.as_slice().iter().map(|c| c * c).sum::<f64>().sqrt();
        if dist < 1e-6 {
            converged = true;
            break;
        }
    }
    assert!(converged, "no convergence within {budget} steps");
}
