//! Inverse causal pipeline: multilinear projection of observations back into
//! the causal factor spaces, rank-1 factor extraction, recognition readout,
//! and piecewise-model projection with gating.
//!
//! The projection applies the pseudoinverse of the core's mode-0 unfolding to
//! the centered observation (the only dimensionally consistent reading of the
//! transpose-mode product) and tensorizes the result in rank coordinates.
//! When the core unfolding is rank-deficient — hidden layers wider than the
//! input — the pseudoinverse returns the minimum-norm response.

use ndarray::Array1;
use rayon::prelude::*;

use crate::error::{Result, TfaError};
use crate::factorization::CausalModel;
use crate::linalg::{pseudoinverse, truncated_svd, SidePolicy};
use crate::tensor::{outer_rank1, DataTensor, ModeMatrix};

/// Threshold under which the response tensor is flagged degenerate instead of
/// normalized (unit representations are undefined at zero response).
const DEGENERATE_RTOL: f64 = 1e-12;

const CP_MAX_ITERS: usize = 200;
const CP_FIT_TOL: f64 = 1e-10;

/// Rank-1 extraction strategy for the response tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank1Method {
    /// Alternating normalized contractions to convergence.
    AlsCp,
    /// Leading left singular vector of every unfolding, then one refinement
    /// pass.
    MModeSvdLeading,
}

/// Per-mode recognition readout.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FactorLabel {
    /// Nearest training row of the mode matrix.
    pub index: usize,
    /// Absolute cosine similarity against that row.
    pub cosine: f64,
}

/// Outcome of one multilinear projection.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// Response tensor `ℛ` in rank coordinates (`R̃_1 × … × R̃_M`).
    pub response: DataTensor,
    /// Unit per-mode representations `r̂_m`.
    pub reps: Vec<Array1<f64>>,
    /// Amplitude of the best rank-1 fit `⟨ℛ, r̂_1∘…∘r̂_M⟩`.
    pub scale: f64,
    /// `‖ℛ − scale·r̂_1∘…∘r̂_M‖_F`.
    pub residual: f64,
    /// Per-mode nearest training row and cosine.
    pub labels: Vec<FactorLabel>,
    /// Set when the response is numerically zero and the representations are
    /// undefined.
    pub degenerate: bool,
}

/// Projects one observation into the causal factor spaces.
pub fn multilinear_project(
    model: &CausalModel,
    d_test: &Array1<f64>,
    method: Rank1Method,
) -> Result<ProjectionResult> {
    let i0 = model.measurement_dim();
    if d_test.len() != i0 {
        return Err(TfaError::ShapeMismatch(format!(
            "observation has length {} but the model measures {}",
            d_test.len(),
            i0
        )));
    }
    if model.factors.is_empty() {
        return Err(TfaError::InvalidArgument("model has no trained factors".into()));
    }
    let centered = d_test - &model.mean;
    let t0 = model.core.unfold(0)?;
    let pinv = pseudoinverse(&t0)?;
    let response_vec = pinv.dot(&centered);
    let response = DataTensor::from_values(model.ranks.clone(), response_vec.to_vec())?;

    let response_norm = response.frobenius_norm();
    let pinv_norm = pinv.iter().map(|v| v * v).sum::<f64>().sqrt();
    let obs_norm = centered.dot(&centered).sqrt();
    if response_norm <= DEGENERATE_RTOL * (1.0 + pinv_norm * obs_norm) {
        let reps: Vec<Array1<f64>> = model.ranks.iter().map(|&r| Array1::zeros(r)).collect();
        let labels = vec![FactorLabel { index: 0, cosine: 0.0 }; model.ranks.len()];
        return Ok(ProjectionResult {
            response,
            reps,
            scale: 0.0,
            residual: 0.0,
            labels,
            degenerate: true,
        });
    }

    let (reps, scale) = rank1_approximate(&response, method)?;
    let rank1 = outer_rank1(&reps)?.scale(scale);
    let residual = response.sub(&rank1)?.frobenius_norm();
    let labels = reps
        .iter()
        .zip(&model.factors)
        .map(|(rep, factor)| {
            let (index, cosine) = classify_factor(rep, factor)?;
            Ok(FactorLabel { index, cosine })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionResult { response, reps, scale, residual, labels, degenerate: false })
}

/// Best rank-1 fit of a tensor by unit vectors plus an amplitude.
///
/// Signs are deterministic: each vector's largest-magnitude entry is positive
/// except that the last vector flips, if needed, to keep the amplitude
/// nonnegative (the rank-1 tensor is invariant under paired flips).
pub fn rank1_approximate(r: &DataTensor, method: Rank1Method) -> Result<(Vec<Array1<f64>>, f64)> {
    if r.frobenius_norm() == 0.0 {
        return Err(TfaError::InvalidArgument(
            "rank-1 approximation of the zero tensor is undefined".into(),
        ));
    }
    let modes = r.ndim();
    let mut reps: Vec<Array1<f64>> = Vec::with_capacity(modes);
    if modes == 1 {
        let v = Array1::from_vec(r.values().to_vec());
        let norm = v.dot(&v).sqrt();
        let mut unit = v / norm;
        fix_vector_signs(&mut unit);
        let scale = contraction_scale(r, std::slice::from_ref(&unit))?;
        return Ok(settle_amplitude(vec![unit], scale));
    }
    for mode in 0..modes {
        let unfolded = r.unfold(mode)?;
        let svd = truncated_svd(&unfolded, 1, SidePolicy::Auto)?;
        reps.push(svd.u.column(0).to_owned());
    }
    let passes = match method {
        Rank1Method::MModeSvdLeading => 1,
        Rank1Method::AlsCp => CP_MAX_ITERS,
    };
    let mut fit_prev = f64::NEG_INFINITY;
    for _ in 0..passes {
        for mode in 0..modes {
            // contracted modes keep their position at extent 1, so the
            // leftover buffer reads off as the mode's fiber directly
            let mut contracted = r.clone();
            for (j, rep) in reps.iter().enumerate() {
                if j != mode {
                    contracted = contracted.mode_contract(rep, j)?;
                }
            }
            let v = Array1::from_vec(contracted.values().to_vec());
            let norm = v.dot(&v).sqrt();
            if norm > 0.0 {
                reps[mode] = v / norm;
            }
        }
        let fit = contraction_scale(r, &reps)?.abs();
        if (fit - fit_prev).abs() <= CP_FIT_TOL * fit.max(1.0) {
            break;
        }
        fit_prev = fit;
    }
    for rep in reps.iter_mut() {
        fix_vector_signs(rep);
    }
    let scale = contraction_scale(r, &reps)?;
    let (reps, scale) = settle_amplitude(reps, scale);
    Ok((reps, scale))
}

/// `⟨r, v_1∘…∘v_M⟩` via chained contractions.
fn contraction_scale(r: &DataTensor, reps: &[Array1<f64>]) -> Result<f64> {
    let mut t = r.clone();
    for (j, rep) in reps.iter().enumerate() {
        t = t.mode_contract(rep, j)?;
    }
    Ok(t.values()[0])
}

/// Largest-magnitude entry positive (ties to the first index).
fn fix_vector_signs(v: &mut Array1<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Flips the last vector if needed so the amplitude is nonnegative.
fn settle_amplitude(mut reps: Vec<Array1<f64>>, scale: f64) -> (Vec<Array1<f64>>, f64) {
    if scale < 0.0 {
        if let Some(last) = reps.last_mut() {
            last.mapv_inplace(|x| -x);
        }
        return (reps, -scale);
    }
    (reps, scale)
}

/// Nearest factor row by absolute cosine; ties break to the lowest index.
pub fn classify_factor(rep: &Array1<f64>, factor: &ModeMatrix) -> Result<(usize, f64)> {
    if rep.len() != factor.rank() {
        return Err(TfaError::ShapeMismatch(format!(
            "representation has length {} but the factor rank is {}",
            rep.len(),
            factor.rank()
        )));
    }
    let rep_norm = rep.dot(rep).sqrt();
    if rep_norm == 0.0 {
        return Err(TfaError::InvalidArgument("cannot classify a zero representation".into()));
    }
    let mut best = (0usize, -1.0f64);
    for i in 0..factor.extent() {
        let row = factor.entries.row(i);
        let row_norm = row.dot(&row).sqrt();
        let cosine = if row_norm > 0.0 {
            (row.dot(rep) / (row_norm * rep_norm)).abs()
        } else {
            0.0
        };
        if cosine > best.1 {
            best = (i, cosine);
        }
    }
    Ok(best)
}

/// Several regime-specific models whose candidate solutions are gated.
#[derive(Debug, Clone)]
pub struct PiecewiseEnsemble {
    pub models: Vec<CausalModel>,
}

impl PiecewiseEnsemble {
    pub fn new(models: Vec<CausalModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(TfaError::InvalidArgument("ensemble needs at least one model".into()));
        }
        let i0 = models[0].measurement_dim();
        for m in &models {
            if m.measurement_dim() != i0 {
                return Err(TfaError::ShapeMismatch(format!(
                    "ensemble members measure {} and {} dimensions",
                    i0,
                    m.measurement_dim()
                )));
            }
        }
        Ok(PiecewiseEnsemble { models })
    }
}

/// One ensemble member's projection plus its gate score.
#[derive(Debug, Clone)]
pub struct GatedCandidate {
    pub model_index: usize,
    pub result: ProjectionResult,
    /// Reconstruction likelihood `−‖d − synth(nearest rows)‖²`; degenerate
    /// responses score `−∞`.
    pub gate_score: f64,
}

/// Projects through every regime model and gates by reconstruction
/// likelihood with the representations snapped to their nearest training
/// rows. All candidates come back for audit; ties go to the lower index.
pub fn piecewise_project(
    ensemble: &PiecewiseEnsemble,
    d_test: &Array1<f64>,
    method: Rank1Method,
) -> Result<(usize, Vec<GatedCandidate>)> {
    let candidates: Vec<GatedCandidate> = ensemble
        .models
        .par_iter()
        .enumerate()
        .map(|(model_index, model)| {
            let result = multilinear_project(model, d_test, method)?;
            let gate_score = if result.degenerate {
                f64::NEG_INFINITY
            } else {
                let rows: Vec<usize> = result.labels.iter().map(|l| l.index).collect();
                let recon = model.synthesize_from_rows(&rows)?;
                let diff = d_test - &recon;
                -diff.dot(&diff)
            };
            Ok(GatedCandidate { model_index, result, gate_score })
        })
        .collect::<Result<_>>()?;
    let mut chosen = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.gate_score > candidates[chosen].gate_score {
            chosen = i;
        }
    }
    Ok((chosen, candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::test_support::multilinear_data;
    use crate::factorization::{Schedule, TrainingReport};
    use crate::kernels::KernelSpec;
    use crate::linalg::orthonormalize_columns;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn model_from_parts(core: DataTensor, factors: Vec<Array2<f64>>) -> CausalModel {
        let i0 = core.dims()[0];
        let ranks: Vec<usize> = core.dims()[1..].to_vec();
        CausalModel {
            core,
            factors: factors
                .into_iter()
                .enumerate()
                .map(|(k, f)| ModeMatrix::new(k + 1, f))
                .collect(),
            mean: Array1::zeros(i0),
            ranks,
            kernels: vec![KernelSpec::Linear; 2],
            report: TrainingReport {
                schedule: Schedule::Sequential,
                engine: "svd".into(),
                iterations: 0,
                converged: true,
                final_cost: 0.0,
                cost_trace: vec![],
            },
        }
    }

    fn synthetic_model(i0: usize, extents: &[usize], ranks: &[usize], seed: u64) -> CausalModel {
        let (data, _, factors) = multilinear_data(i0, extents, ranks, seed);
        let mode_factors: Vec<ModeMatrix> = factors
            .iter()
            .enumerate()
            .map(|(k, f)| ModeMatrix::new(k + 1, f.clone()))
            .collect();
        let core =
            crate::factorization::compute_extended_core(&data, &mode_factors, &crate::factorization::CoreMethod::Direct)
                .unwrap();
        model_from_parts(core, factors)
    }

    #[test]
    fn projection_recovers_training_labels_exactly() {
        let model = synthetic_model(12, &[4, 3], &[2, 2], 110);
        for i1 in 0..4 {
            for i2 in 0..3 {
                let obs = model.synthesize_from_rows(&[i1, i2]).unwrap();
                let res = multilinear_project(&model, &obs, Rank1Method::AlsCp).unwrap();
                assert!(!res.degenerate);
                assert_eq!(res.labels[0].index, i1);
                assert_eq!(res.labels[1].index, i2);
                assert!(res.labels[0].cosine >= 1.0 - 1e-8);
                assert!(res.labels[1].cosine >= 1.0 - 1e-8);
            }
        }
    }

    #[test]
    fn mean_observation_is_degenerate() {
        let mut model = synthetic_model(10, &[3, 3], &[2, 2], 111);
        model.mean = arr1(&[0.5; 10]);
        let res = multilinear_project(&model, &model.mean.clone(), Rank1Method::AlsCp).unwrap();
        assert!(res.degenerate);
        assert!(res.response.frobenius_norm() <= 1e-12);
        assert_eq!(res.scale, 0.0);
    }

    #[test]
    fn noisy_projection_keeps_labels() {
        let model = synthetic_model(16, &[4, 4], &[2, 2], 112);
        let mut rng = ChaCha8Rng::seed_from_u64(112);
        let mut hits = 0;
        let trials = 100;
        for _ in 0..trials {
            let i1 = rng.random_range(0..4);
            let i2 = rng.random_range(0..4);
            let clean = model.synthesize_from_rows(&[i1, i2]).unwrap();
            let norm = clean.dot(&clean).sqrt();
            let noise = Array1::from_iter((0..16).map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }));
            let noise_unit = &noise / noise.dot(&noise).sqrt();
            let noisy = &clean + &(noise_unit * (0.01 * norm));
            let res = multilinear_project(&model, &noisy, Rank1Method::AlsCp).unwrap();
            if res.labels[0].index == i1 && res.labels[1].index == i2 && res.labels[0].cosine >= 0.99 {
                hits += 1;
            }
        }
        assert!(hits * 100 >= trials * 95, "only {hits}/{trials} correct");
    }

    #[test]
    fn forward_inverse_consistency_for_arbitrary_unit_reps() {
        let model = synthetic_model(14, &[4, 3], &[3, 2], 113);
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        for _ in 0..20 {
            let reps: Vec<Array1<f64>> = model
                .ranks
                .iter()
                .map(|&r| {
                    let v = Array1::from_iter((0..r).map(|_| rng.random::<f64>() * 2.0 - 1.0));
                    let n = v.dot(&v).sqrt();
                    v / n
                })
                .collect();
            let obs = model.synthesize(&reps).unwrap();
            let res = multilinear_project(&model, &obs, Rank1Method::AlsCp).unwrap();
            for (est, truth) in res.reps.iter().zip(&reps) {
                let cos = est.dot(truth).abs();
                assert!(cos >= 1.0 - 1e-8, "cosine {cos}");
            }
            // the signed rank-1 reconstruction matches the response
            let rank1 = outer_rank1(&res.reps).unwrap().scale(res.scale);
            let err = res.response.sub(&rank1).unwrap().frobenius_norm();
            assert!(err <= 1e-8 * res.response.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn wide_core_returns_minimum_norm_response() {
        // ∏R̃ = 9 > I_0 = 6: underdetermined, response must lie in the row
        // space of the core unfolding
        let model = synthetic_model(6, &[4, 4], &[3, 3], 114);
        let mut rng = ChaCha8Rng::seed_from_u64(114);
        let obs = Array1::from_iter((0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0));
        let res = multilinear_project(&model, &obs, Rank1Method::AlsCp).unwrap();
        let t0 = model.core.unfold(0).unwrap();
        let pinv = pseudoinverse(&t0).unwrap();
        let projector = pinv.dot(&t0); // onto the row space
        let r_vec = Array1::from_vec(res.response.values().to_vec());
        let projected = projector.dot(&r_vec);
        let err = (&projected - &r_vec).dot(&(&projected - &r_vec)).sqrt();
        assert!(err <= 1e-8 * r_vec.dot(&r_vec).sqrt());
    }

    #[test]
    fn exact_rank1_tensor_is_recovered() {
        let a = arr1(&[0.6, 0.8]);
        let b = arr1(&[1.0 / 3.0f64.sqrt(); 3]);
        let c = arr1(&[0.28, -0.96]);
        let r = outer_rank1(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let (reps, scale) = rank1_approximate(&r, Rank1Method::AlsCp).unwrap();
        assert_abs_diff_eq!(scale, 1.0, epsilon = 1e-10);
        for (est, truth) in reps.iter().zip([&a, &b, &c]) {
            assert!(est.dot(truth).abs() >= 1.0 - 1e-10);
        }
        let recon = outer_rank1(&reps).unwrap().scale(scale);
        assert!(r.sub(&recon).unwrap().frobenius_norm() <= 1e-10);
    }

    #[test]
    fn matrix_rank1_residual_is_second_singular_value() {
        // 2×2 tensor with singular values (3, 1): Eckart–Young gives
        // residual exactly 1
        let mut rng = ChaCha8Rng::seed_from_u64(115);
        let q1 = orthonormalize_columns(&Array2::from_shape_fn((2, 2), |_| rng.random::<f64>() - 0.5));
        let q2 = orthonormalize_columns(&Array2::from_shape_fn((2, 2), |_| rng.random::<f64>() - 0.5));
        let mut s = Array2::zeros((2, 2));
        s[[0, 0]] = 3.0;
        s[[1, 1]] = 1.0;
        let m = q1.dot(&s).dot(&q2.t());
        let r = DataTensor::from_values(vec![2, 2], m.t().iter().cloned().collect()).unwrap();
        let (reps, scale) = rank1_approximate(&r, Rank1Method::AlsCp).unwrap();
        let recon = outer_rank1(&reps).unwrap().scale(scale);
        let residual = r.sub(&recon).unwrap().frobenius_norm();
        assert_abs_diff_eq!(residual, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(scale, 3.0, epsilon = 1e-8);
    }

    #[test]
    fn both_methods_agree_on_near_rank1_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(116);
        for _ in 0..10 {
            let a = Array1::from_iter((0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0));
            let b = Array1::from_iter((0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0));
            let c = Array1::from_iter((0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0));
            let clean = outer_rank1(&[a, b, c]).unwrap();
            let norm = clean.frobenius_norm();
            let noise_vals: Vec<f64> = (0..clean.values().len())
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect();
            let noise = DataTensor::from_values(clean.dims().to_vec(), noise_vals).unwrap();
            let noise_scaled = noise.scale(0.1 * norm / noise.frobenius_norm());
            let perturbed = clean.add(&noise_scaled).unwrap();
            let (als, _) = rank1_approximate(&perturbed, Rank1Method::AlsCp).unwrap();
            let (lead, _) = rank1_approximate(&perturbed, Rank1Method::MModeSvdLeading).unwrap();
            for (x, y) in als.iter().zip(&lead) {
                assert!(x.dot(y).abs() >= 1.0 - 1e-6);
            }
        }
    }

    #[test]
    fn rank1_of_zero_tensor_errors() {
        let z = DataTensor::zeros(vec![2, 2]).unwrap();
        assert!(rank1_approximate(&z, Rank1Method::AlsCp).is_err());
    }

    #[test]
    fn classify_matches_rows_and_signs() {
        let factor = ModeMatrix::new(1, Array2::eye(3));
        let (idx, cos) = classify_factor(&arr1(&[0.0, 1.0, 0.0]), &factor).unwrap();
        assert_eq!((idx, cos), (1, 1.0));
        let (idx, cos) = classify_factor(&arr1(&[0.0, -1.0, 0.0]), &factor).unwrap();
        assert_eq!(idx, 1);
        assert_abs_diff_eq!(cos, 1.0, epsilon = 1e-15);
        // midway between two orthogonal rows: lower index wins at 1/√2
        let (idx, cos) = classify_factor(&arr1(&[1.0, 1.0, 0.0]), &factor).unwrap();
        assert_eq!(idx, 0);
        assert_abs_diff_eq!(cos, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        // scale invariance
        let (idx, _) = classify_factor(&arr1(&[0.0, 0.0, -7.0]), &factor).unwrap();
        assert_eq!(idx, 2);
        assert!(classify_factor(&arr1(&[0.0, 0.0, 0.0]), &factor).is_err());
    }

    #[test]
    fn single_model_ensemble_equals_plain_projection() {
        let model = synthetic_model(10, &[3, 3], &[2, 2], 117);
        let obs = model.synthesize_from_rows(&[2, 1]).unwrap();
        let direct = multilinear_project(&model, &obs, Rank1Method::AlsCp).unwrap();
        let ensemble = PiecewiseEnsemble::new(vec![model]).unwrap();
        let (chosen, candidates) = piecewise_project(&ensemble, &obs, Rank1Method::AlsCp).unwrap();
        assert_eq!(chosen, 0);
        assert_eq!(candidates.len(), 1);
        assert_eq!(candidates[0].result.labels[0].index, direct.labels[0].index);
        assert_eq!(candidates[0].result.labels[1].index, direct.labels[1].index);
    }

    #[test]
    fn gating_selects_the_generating_regime() {
        let model_a = synthetic_model(16, &[4, 3], &[2, 2], 118);
        let model_b = synthetic_model(16, &[4, 3], &[2, 2], 119);
        let ensemble = PiecewiseEnsemble::new(vec![model_a.clone(), model_b]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(120);
        let mut hits = 0;
        let trials = 200;
        for _ in 0..trials {
            let i1 = rng.random_range(0..4);
            let i2 = rng.random_range(0..3);
            let clean = model_a.synthesize_from_rows(&[i1, i2]).unwrap();
            let norm = clean.dot(&clean).sqrt();
            let noise = Array1::from_iter((0..16).map(|_| rng.random::<f64>() - 0.5));
            let noisy = &clean + &(&noise / noise.dot(&noise).sqrt() * (0.01 * norm));
            let (chosen, _) = piecewise_project(&ensemble, &noisy, Rank1Method::AlsCp).unwrap();
            if chosen == 0 {
                hits += 1;
            }
        }
        assert!(hits * 100 >= trials * 95, "regime A chosen only {hits}/{trials}");
    }

    #[test]
    fn equidistant_tie_breaks_to_lower_index() {
        let model = synthetic_model(10, &[3, 3], &[2, 2], 121);
        let ensemble = PiecewiseEnsemble::new(vec![model.clone(), model.clone()]).unwrap();
        let obs = model.synthesize_from_rows(&[0, 0]).unwrap();
        let (chosen, candidates) = piecewise_project(&ensemble, &obs, Rank1Method::AlsCp).unwrap();
        assert_eq!(chosen, 0);
        assert_eq!(candidates.len(), 2);
        assert_eq!(candidates[0].gate_score, candidates[1].gate_score);
    }

    #[test]
    fn ensemble_rejects_mixed_measurement_dims() {
        let a = synthetic_model(10, &[3, 3], &[2, 2], 122);
        let b = synthetic_model(12, &[3, 3], &[2, 2], 123);
        assert!(PiecewiseEnsemble::new(vec![a, b]).is_err());
    }
}
