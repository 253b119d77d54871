//! Late-phase taper via epsilon at fixed gamma.

use gamedyn::analysis::field_spectrum;
use gamedyn::linalg::singular_values;
use gamedyn::zoo::*;

fn main() {
    let spec = GanSpec::new(
        MlpArch::with_hidden(16, 2, 8, 2),
        MlpArch::with_hidden(2, 2, 8, 1),
        DivergenceObjective::Indicator,
        MogTarget::new(4, 1e-2),
        256,
    );
    let alpha = 0.1;
    for (gamma, h, eps) in [
        (1.25, 3e-3, 0.09),
        (1.25, 3e-3, 0.25),
        (1.25, 4e-3, 0.25),
        (1.5, 3e-3, 0.25),
        (1.5, 4e-3, 0.25),
    ] {
        let mut line = format!("g={gamma} h={h:.1e} eps={eps}: ");
        let mut pass = 0;
        let mut shift_pass = 0;
        for seed in 0..5u64 {
            let trainer = MogTrainer::new(spec.clone(), seed);
            let state0 = spec.init_state(seed);
            let mut x = state0.as_slice().to_vec();
            let mut beta = 0.0f64;
            let mut v0 = 0.0;
            let mut vlast = 0.0;
            for step in 0..2000u64 {
                let e = trainer.eval(&x, step, gamma).unwrap();
                if step == 0 { v0 = e.v_norm; }
                vlast = e.v_norm;
                let scale = h / (beta + eps).sqrt();
                for (xi, wi) in x.iter_mut().zip(&e.w) { *xi += scale * wi; }
                beta = (1.0 - alpha) * beta + alpha * e.w_norm * e.w_norm;
            }
            let samples = spec.generator_samples(&x[..spec.split()], 4096, &mut Stream::Coverage(2000).rng(seed));
            let cov = mode_coverage(&samples, &spec.target, 2.0);
            let ok = vlast < 0.1 * v0 && cov >= 3;
            if ok { pass += 1; }
            let state0 = spec.init_state(seed);
            let st = state0.with_x(x);
            let game = spec.eval_game(seed);
            let jv = gamedyn::analysis::field_jacobian(&game, &st, 0.0).unwrap();
            let sv = gamedyn::linalg::eigenvalues(&jv).unwrap();
            let sw = field_spectrum(&game, &st, gamma).unwrap();
            let svals = singular_values(&jv).unwrap();
            let smax = svals.last().copied().unwrap();
            let smin = svals.iter().copied().find(|s| *s > 1e-8 * smax).unwrap_or(0.0);
            let sok = sw.max_real() <= sv.max_real() - 0.1 * gamma * smin * smin;
            if sok { shift_pass += 1; }
            line += &format!("[s{seed} r={:.2} c={cov} sh={}] ", vlast / v0, if sok {1} else {0});
        }
        println!("{line} pass={pass}/5 shift={shift_pass}/5");
    }
}
