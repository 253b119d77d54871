//! Convergence diagnostics for fixed-point iterations over games: spectral
//! classification of fixed points, spectra of the raw and consensus-modified
//! fields, the imaginary-to-real quotient bound, and empirical rate fitting.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{gradient_field, GameError, GameState, RecordedField, TwoPlayerGame};
use crate::linalg::{
    self, eigenvalues, fd_jacobian, Definiteness, LinAlgError, Matrix, Quotient, Spectrum,
};
use crate::optim::{OptimError, Rule};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error("need at least {required} trajectory points with decreasing error, got {got}")]
    TooFewPoints { got: usize, required: usize },
    #[error("trajectory tail is not decreasing; refusing to fit a convergence rate")]
    NonMonotone,
    #[error("gamma must be positive and finite, got {gamma}")]
    InvalidGamma { gamma: f64 },
    #[error("matrix is numerically singular (min singular value {rho:.3e})")]
    Singular { rho: f64 },
    #[error("symmetric part is not negative semidefinite")]
    NotNegativeSemidefinite,
    #[error("malformed spectrum CSV: {reason}")]
    MalformedCsv { reason: String },
    #[error("non-finite value cannot be written to CSV")]
    NonFiniteCsvValue,
}

/// Classification band around spectral radius 1; within it the linear theory
/// cannot distinguish attraction from repulsion under FD noise.
pub const MARGINAL_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPointClass {
    Attracting,
    RepellingOrSaddle,
    Marginal,
}

/// Spectral report on a step map `F` at a candidate fixed point.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    /// `||v(x)||` at the point.
    pub residual: f64,
    /// Whether the residual is below the caller's tolerance.
    pub is_fixed: bool,
    /// Spectrum of the Jacobian of the flattened step map.
    pub step_jacobian_spectrum: Spectrum,
    pub classification: FixedPointClass,
    /// Spectral radius of `F'`; the asymptotic per-step error factor when
    /// attracting.
    pub predicted_rate: f64,
}

/// Classifies a fixed point of a step rule by the spectrum of the
/// finite-difference Jacobian of the composite step map (including any
/// auxiliary state such as momentum buffers).
///
/// If `||v(state)|| > tol` the report is still produced but flagged
/// non-fixed. For rescaled rules the FD probe perturbs the accumulator
/// around zero, so `epsilon` must exceed the FD step (about `1e-5`) for the
/// square root to stay real.
pub fn classify_fixed_point(
    rule: &Rule,
    game: &TwoPlayerGame,
    state: &GameState,
    tol: f64,
) -> Result<FixedPointReport, AnalysisError> {
    let residual = gradient_field(game, state)?.norm;
    let is_fixed = residual <= tol;
    let flat = rule.init_state(state.clone()).flatten();
    let mut failure: Option<OptimError> = None;
    let j = fd_jacobian(
        |x| match rule.flat_step(game, x) {
            Ok(next) => next,
            Err(e) => {
                failure = Some(e);
                vec![f64::NAN; flat.len()]
            }
        },
        &flat,
        linalg::default_fd_scale(),
    );
    let j = match (j, failure) {
        (Ok(j), None) => j,
        (_, Some(e)) => return Err(e.into()),
        (Err(e), None) => return Err(e.into()),
    };
    let spectrum = eigenvalues(&j)?;
    let radius = spectrum.spectral_radius();
    let classification = if (radius - 1.0).abs() < MARGINAL_BAND {
        FixedPointClass::Marginal
    } else if radius < 1.0 {
        FixedPointClass::Attracting
    } else {
        FixedPointClass::RepellingOrSaddle
    };
    Ok(FixedPointReport {
        residual,
        is_fixed,
        step_jacobian_spectrum: spectrum,
        classification,
        predicted_rate: radius,
    })
}

/// Spectrum of the field Jacobian at a state: of `v'(x)` for `gamma = 0`,
/// of `w'(x)` with `w = v - gamma grad L` for `gamma > 0`. Both are obtained
/// by central differences over the autodiff field.
pub fn field_spectrum(
    game: &TwoPlayerGame,
    state: &GameState,
    gamma: f64,
) -> Result<Spectrum, AnalysisError> {
    let j = field_jacobian(game, state, gamma)?;
    Ok(eigenvalues(&j)?)
}

/// The FD Jacobian behind [`field_spectrum`], exposed for callers that need
/// the matrix itself.
pub fn field_jacobian(
    game: &TwoPlayerGame,
    state: &GameState,
    gamma: f64,
) -> Result<Matrix, AnalysisError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(AnalysisError::InvalidGamma { gamma });
    }
    let recorded = RecordedField::record(game, state)?;
    let n = state.len();
    let j = fd_jacobian(
        |x| {
            let res = if gamma == 0.0 {
                recorded.eval_field(x)
            } else {
                recorded.eval_consensus(x, gamma).map(|(_, _, w)| w)
            };
            res.unwrap_or_else(|_| vec![f64::NAN; n])
        },
        state.as_slice(),
        linalg::default_fd_scale(),
    )?;
    Ok(j)
}

/// Report on the imaginary-to-real quotient of `A - gamma A^T A`.
#[derive(Debug, Clone)]
pub struct QuotientBoundReport {
    pub gamma: f64,
    /// Max |Im/Re| over the spectrum of `A - gamma A^T A`.
    pub q_observed: Quotient,
    /// Smallest singular value of `A` (the lower bound on `|Av|/|v|`).
    pub rho: f64,
    /// `1 / (2 rho^2 gamma)`; the bound with the sphere constant relaxed
    /// to zero.
    pub bound_weak: f64,
    pub holds: bool,
    /// Monte-Carlo estimate of the unit-sphere constant, informational
    /// only; `None` when no sampled denominator was nonzero.
    pub c_hat_sampled: Option<f64>,
}

const C_HAT_SAMPLES: usize = 10_000;

/// Hermitian quadratic form `conj(v)^T M v` of a real matrix; returned as a
/// complex number (real for symmetric `M`, imaginary for antisymmetric `M`).
fn quad_form(m: &Matrix, v: &[Complex64]) -> Complex64 {
    let n = v.len();
    let mut out = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        out += v[i].conj() * row;
    }
    out
}

/// Checks the quotient bound `q(gamma) <= 1 / (2 rho^2 gamma)` for a matrix
/// with negative-semidefinite symmetric part.
///
/// The sphere constant `c >= 0` is dropped from the denominator (a valid
/// relaxation); a sampled estimate of `c` is reported for information but
/// never used in the pass/fail flag.
pub fn quotient_bound_check(a: &Matrix, gamma: f64) -> Result<QuotientBoundReport, AnalysisError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(AnalysisError::InvalidGamma { gamma });
    }
    if !a.is_square() {
        return Err(AnalysisError::LinAlg(LinAlgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        }));
    }
    let defin = linalg::is_negative_definite(a, linalg::default_definiteness_tol(a))?;
    if defin == Definiteness::Indefinite {
        return Err(AnalysisError::NotNegativeSemidefinite);
    }
    let rho = linalg::min_singular_value(a)?;
    if rho <= 1e-12 * (1.0 + a.fro_norm()) {
        return Err(AnalysisError::Singular { rho });
    }
    let modified = a.sub(&a.transpose().matmul(a).scale(gamma));
    let spec = eigenvalues(&modified)?;
    let q_observed = spec.quotient_q();
    let bound_weak = 1.0 / (2.0 * rho * rho * gamma);
    let holds = q_observed.as_f64() <= bound_weak * (1.0 + 1e-12) + 1e-12;

    // Sampled estimate of the sphere constant.
    let sym = a.symmetric_part();
    let anti = a.sub(&sym);
    let n = a.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut c_hat: Option<f64> = None;
    for _ in 0..C_HAT_SAMPLES {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        for c in v.iter_mut() {
            *c /= norm;
        }
        // Factor 2 restores A - A^T from the stored (A - sym(A)).
        let num = quad_form(&sym, &v).norm() * 2.0;
        let den = quad_form(&anti, &v).norm() * 2.0;
        if den > 1e-14 {
            let ratio = num / den;
            c_hat = Some(match c_hat {
                Some(cur) => cur.min(ratio),
                None => ratio,
            });
        }
    }
    Ok(QuotientBoundReport {
        gamma,
        q_observed,
        rho,
        bound_weak,
        holds,
        c_hat_sampled: c_hat,
    })
}

const MIN_FIT_POINTS: usize = 10;

/// Least-squares per-step error factor from a sequence of positive errors.
///
/// Requires at least ten points and an overall decreasing trend (the last
/// quarter must lie strictly below the first quarter); oscillation within
/// that envelope is fine, which matters for complex contraction rates.
pub fn fit_rate_from_errors(errors: &[f64]) -> Result<f64, AnalysisError> {
    let mut usable = errors.len();
    for (i, e) in errors.iter().enumerate() {
        if !(e.is_finite() && *e > 0.0) {
            usable = i;
            break;
        }
    }
    let errors = &errors[..usable];
    let n = errors.len();
    if n < MIN_FIT_POINTS {
        return Err(AnalysisError::TooFewPoints {
            got: n,
            required: MIN_FIT_POINTS,
        });
    }
    let quarter = (n / 4).max(1);
    let head_min = errors[..quarter].iter().cloned().fold(f64::INFINITY, f64::min);
    let tail_max = errors[n - quarter..]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if tail_max >= head_min {
        return Err(AnalysisError::NonMonotone);
    }
    let logs: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k_mean = (n as f64 - 1.0) / 2.0;
    let y_mean = logs.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, y) in logs.iter().enumerate() {
        let dk = k as f64 - k_mean;
        num += dk * (y - y_mean);
        den += dk * dk;
    }
    Ok((num / den).exp())
}

/// Per-step convergence factor of a trajectory toward a known target,
/// fitted on `log ||x_k - target||`.
pub fn fit_convergence_rate(
    trajectory: &[Vec<f64>],
    target: &[f64],
) -> Result<f64, AnalysisError> {
    let errors: Vec<f64> = trajectory
        .iter()
        .map(|x| {
            x.iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    fit_rate_from_errors(&errors)
}

/// One exported eigenvalue row.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub re: f64,
    pub im: f64,
    pub clipped: bool,
}

/// Rows for each eigenvalue; real parts below `clip_real` are replaced by
/// the threshold and flagged (used to keep scatter plots readable when a
/// few eigenvalues sit far to the left).
pub fn spectrum_histogram_export(spec: &Spectrum, clip_real: Option<f64>) -> Vec<SpectrumRow> {
    spec.eigenvalues()
        .iter()
        .map(|l| match clip_real {
            Some(clip) if l.re < clip => SpectrumRow {
                re: clip,
                im: l.im,
                clipped: true,
            },
            _ => SpectrumRow {
                re: l.re,
                im: l.im,
                clipped: false,
            },
        })
        .collect()
}

/// Formats a float with 17 significant digits, enough for a lossless
/// round-trip through text.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes rows under the schema `re,im,clipped` (header included,
/// LF line endings). Non-finite values are rejected.
pub fn spectrum_rows_to_csv(rows: &[SpectrumRow]) -> Result<String, AnalysisError> {
    let mut out = String::from("re,im,clipped\n");
    for r in rows {
        if !r.re.is_finite() || !r.im.is_finite() {
            return Err(AnalysisError::NonFiniteCsvValue);
        }
        out.push_str(&format_float(r.re));
        out.push(',');
        out.push_str(&format_float(r.im));
        out.push(',');
        out.push(if r.clipped { '1' } else { '0' });
        out.push('\n');
    }
    Ok(out)
}

/// Parses the `re,im,clipped` schema back; the inverse of
/// [`spectrum_rows_to_csv`].
pub fn spectrum_rows_from_csv(text: &str) -> Result<Vec<SpectrumRow>, AnalysisError> {
    let mut lines = text.lines();
    match lines.next() {
        Some("re,im,clipped") => {}
        other => {
            return Err(AnalysisError::MalformedCsv {
                reason: format!("bad header {other:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields.next().ok_or_else(|| AnalysisError::MalformedCsv {
                reason: format!("row {i}: missing {name}"),
            })
        };
        let re: f64 = next("re")?
            .parse()
            .map_err(|e| AnalysisError::MalformedCsv {
                reason: format!("row {i}: {e}"),
            })?;
        let im: f64 = next("im")?
            .parse()
            .map_err(|e| AnalysisError::MalformedCsv {
                reason: format!("row {i}: {e}"),
            })?;
        let clipped = match next("clipped")? {
            "0" => false,
            "1" => true,
            other => {
                return Err(AnalysisError::MalformedCsv {
                    reason: format!("row {i}: bad clipped flag {other:?}"),
                })
            }
        };
        if fields.next().is_some() {
            return Err(AnalysisError::MalformedCsv {
                reason: format!("row {i}: too many fields"),
            });
        }
        rows.push(SpectrumRow { re, im, clipped });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Var};
    use crate::optim::{HyperParams, RuleKind};

    fn bilinear() -> TwoPlayerGame {
        TwoPlayerGame::zero_sum(
            |_: &Tape, phi: &[Var], theta: &[Var]| &phi[0] * &theta[0],
            1,
            1,
        )
    }

    fn state(x: &[f64]) -> GameState {
        GameState::new(x.to_vec(), 1).unwrap()
    }

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
    fn simga_on_bilinear_origin_is_repelling() {
        let g = bilinear();
        let r = rule(RuleKind::SimGa, 0.1, 0.0);
        let report = classify_fixed_point(&r, &g, &state(&[0.0, 0.0]), 1e-9).unwrap();
        assert!(report.is_fixed);
        assert_eq!(report.classification, FixedPointClass::RepellingOrSaddle);
        assert!((report.predicted_rate - 1.01_f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn consensus_on_bilinear_origin_is_attracting() {
        let g = bilinear();
        let r = rule(RuleKind::Consensus, 0.5, 1.0);
        let report = classify_fixed_point(&r, &g, &state(&[0.0, 0.0]), 1e-9).unwrap();
        assert!(report.is_fixed);
        assert_eq!(report.classification, FixedPointClass::Attracting);
        assert!((report.predicted_rate - 0.5_f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn non_fixed_point_is_flagged() {
        let g = bilinear();
        let r = rule(RuleKind::SimGa, 0.1, 0.0);
        let report = classify_fixed_point(&r, &g, &state(&[1.0, 0.0]), 1e-9).unwrap();
        assert!(!report.is_fixed);
        assert!(report.residual > 0.9);
    }

    #[test]
    fn field_spectrum_of_bilinear() {
        let g = bilinear();
        let spec = field_spectrum(&g, &state(&[0.3, -0.7]), 0.0).unwrap();
        let mut eigs = spec.sorted();
        eigs.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((eigs[1] - Complex64::new(0.0, 1.0)).norm() < 1e-8);
        assert!((eigs[0] - Complex64::new(0.0, -1.0)).norm() < 1e-8);
    }

    #[test]
    fn consensus_spectrum_of_bilinear() {
        let g = bilinear();
        let spec = field_spectrum(&g, &state(&[0.3, -0.7]), 1.0).unwrap();
        let mut eigs = spec.sorted();
        eigs.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((eigs[1] - Complex64::new(-1.0, 1.0)).norm() < 1e-7);
        assert!((eigs[0] - Complex64::new(-1.0, -1.0)).norm() < 1e-7);
    }

    #[test]
    fn potential_game_spectrum_is_real() {
        let util = |_: &Tape, phi: &[Var], theta: &[Var]| {
            let sq: Vec<Var> = phi.iter().chain(theta.iter()).map(|v| v.square()).collect();
            phi[0].tape().sum(&sq) * (-0.5)
        };
        let g = TwoPlayerGame::general(util, util, 1, 1);
        let spec = field_spectrum(&g, &state(&[0.2, 0.8]), 0.0).unwrap();
        for l in spec.eigenvalues() {
            assert!(l.im.abs() < 1e-6);
        }
    }

    #[test]
    fn quotient_bound_symmetric_matrix() {
        let report = quotient_bound_check(&Matrix::identity(3).scale(-1.0), 2.0).unwrap();
        assert_eq!(report.q_observed, Quotient::Finite(0.0));
        assert!(report.holds);
        assert!((report.rho - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quotient_bound_rotation_plus_identity() {
        // A = -I + 0.1 N: q(gamma) = 0.1 / (1 + 1.01 gamma), rho^2 = 1.01.
        let a = Matrix::from_rows(&[&[-1.0, 0.1], &[-0.1, -1.0]]);
        let mut last_q = f64::INFINITY;
        for gamma in [0.1, 1.0, 10.0] {
            let report = quotient_bound_check(&a, gamma).unwrap();
            let expected = 0.1 / (1.0 + 1.01 * gamma);
            let q = report.q_observed.as_f64();
            assert!((q - expected).abs() < 1e-9, "gamma={gamma}: {q} vs {expected}");
            assert!(report.holds);
            assert!(q <= last_q + 1e-12);
            last_q = q;
        }
    }

    #[test]
    fn quotient_bound_rejects_bad_inputs() {
        assert!(matches!(
            quotient_bound_check(&Matrix::identity(2).scale(-1.0), 0.0),
            Err(AnalysisError::InvalidGamma { .. })
        ));
        assert!(matches!(
            quotient_bound_check(&Matrix::identity(2), 1.0),
            Err(AnalysisError::NotNegativeSemidefinite)
        ));
        assert!(matches!(
            quotient_bound_check(&Matrix::zeros(2, 2), 1.0),
            Err(AnalysisError::Singular { .. })
        ));
    }

    #[test]
    fn fit_rate_exact_geometric() {
        let errors: Vec<f64> = (0..20).map(|k| 0.9_f64.powi(k)).collect();
        let rate = fit_rate_from_errors(&errors).unwrap();
        assert!((rate - 0.9).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_rejects_short_and_flat() {
        assert!(matches!(
            fit_rate_from_errors(&[1.0; 5]),
            Err(AnalysisError::TooFewPoints { .. })
        ));
        assert!(matches!(
            fit_rate_from_errors(&[1.0; 20]),
            Err(AnalysisError::NonMonotone)
        ));
        let growing: Vec<f64> = (0..20).map(|k| 1.1_f64.powi(k)).collect();
        assert!(matches!(
            fit_rate_from_errors(&growing),
            Err(AnalysisError::NonMonotone)
        ));
    }

    #[test]
    fn fit_rate_tolerates_oscillating_decay() {
        let errors: Vec<f64> = (0..40)
            .map(|k| 0.8_f64.powi(k) * if k % 2 == 0 { 1.0 } else { 1.3 })
            .collect();
        let rate = fit_rate_from_errors(&errors).unwrap();
        assert!((rate - 0.8).abs() < 0.02);
    }

    #[test]
    fn fit_convergence_rate_on_trajectory() {
        let trajectory: Vec<Vec<f64>> = (0..15)
            .map(|k| vec![0.7_f64.powi(k), 0.0])
            .collect();
        let rate = fit_convergence_rate(&trajectory, &[0.0, 0.0]).unwrap();
        assert!((rate - 0.7).abs() < 1e-10);
    }

    #[test]
    fn export_rows_and_clipping() {
        let spec = Spectrum::from_eigenvalues(vec![
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ]);
        let rows = spectrum_histogram_export(&spec, None);
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| !r.clipped && r.re == 0.0));

        let spec = Spectrum::from_eigenvalues(vec![
            Complex64::new(-100.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ]);
        let rows = spectrum_histogram_export(&spec, Some(-10.0));
        assert_eq!(rows[0], SpectrumRow { re: -10.0, im: 0.0, clipped: true });
        assert_eq!(rows[1], SpectrumRow { re: -1.0, im: 0.0, clipped: false });
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let rows = vec![
            SpectrumRow {
                re: -1.234567890123456e-7,
                im: std::f64::consts::PI,
                clipped: false,
            },
            SpectrumRow {
                re: -10.0,
                im: -0.1 + 0.2,
                clipped: true,
            },
        ];
        let csv = spectrum_rows_to_csv(&rows).unwrap();
        let parsed = spectrum_rows_from_csv(&csv).unwrap();
        assert_eq!(rows.len(), parsed.len());
        for (a, b) in rows.iter().zip(&parsed) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
            assert_eq!(a.clipped, b.clipped);
        }
    }

    #[test]
    fn csv_rejects_non_finite() {
        let rows = vec![SpectrumRow {
            re: f64::NAN,
            im: 0.0,
            clipped: false,
        }];
        assert!(matches!(
            spectrum_rows_to_csv(&rows),
            Err(AnalysisError::NonFiniteCsvValue)
        ));
    }
}
