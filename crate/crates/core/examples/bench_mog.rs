//! Rough timing of the mixture-of-Gaussians training path.

use gamedyn::zoo::{DivergenceObjective, GanSpec, MogTrainer};
use std::time::Instant;

fn main() {
    let spec = GanSpec::small(DivergenceObjective::NonSaturating);
    println!("dim = {}", spec.dim());
    let state = spec.init_state(0);
    let trainer = MogTrainer::new(spec.clone(), 0);
    let mut x = state.as_slice().to_vec();
    let t0 = Instant::now();
    let n_steps = 200u64;
    for step in 0..n_steps {
        let eval = trainer.eval(&x, step, 1.0).unwrap();
        for (xi, wi) in x.iter_mut().zip(&eval.w) {
            *xi += 1e-3 * wi;
        }
    }
    let dt = t0.elapsed();
    println!("{} steps in {:?} ({:?}/step)", n_steps, dt, dt / n_steps as u32);

    let game = spec.game_at(0, 999);
    let s = state.with_x(x);
    let t0 = Instant::now();
    let j = gamedyn::analysis::field_jacobian(&game, &s, 1.0).unwrap();
    println!("w-jacobian {}x{} in {:?}", j.rows(), j.cols(), t0.elapsed());
    let t0 = Instant::now();
    let spec_eig = gamedyn::linalg::eigenvalues(&j).unwrap();
    println!("eigen in {:?}, max re {}", t0.elapsed(), spec_eig.max_real());
}
