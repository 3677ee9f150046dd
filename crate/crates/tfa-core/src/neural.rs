//! Hebbian autoencoder subspace learner — a drop-in replacement for the SVD
//! step — and the tensor-autoencoder fit of the extended core.
//!
//! Each neuron is trained by the deflation rule
//! `Δv_r = η·(X − V_{r−1}V_{r−1}ᵀX)·(Xᵀv_r)` followed by renormalization, so
//! neuron `r` converges to the r-th left singular direction of `X` once
//! neurons `1..r−1` have settled. The per-neuron scale estimate `‖Xᵀv_r‖`
//! recovers the matching singular value.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TfaError};
use crate::factorization::ModeSubspace;
use crate::linalg::{ensure_finite, orthonormalize_columns};
use crate::tensor::{multi_indices, DataTensor, ModeMatrix};

/// Gradient flavor for the Hebbian updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    /// Full-matrix updates.
    Batch,
    /// One column per update, sampled without replacement each epoch.
    Stochastic,
}

/// Parameters for Hebbian training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HebbianConfig {
    /// Learning rate; `None` picks `0.01/‖X‖²_F` (the update rule leaves the
    /// gradient unnormalized, so stability hinges on this scale).
    pub eta: Option<f64>,
    /// Maximum passes per neuron.
    pub epochs: usize,
    /// Threshold on the post-normalization weight change `‖v̂(t+1) − v(t)‖`;
    /// convergence needs three consecutive epochs below it.
    pub tol: f64,
    pub seed: u64,
    pub mode: GradientMode,
}

impl Default for HebbianConfig {
    fn default() -> Self {
        HebbianConfig { eta: None, epochs: 5000, tol: 1e-7, seed: 0, mode: GradientMode::Batch }
    }
}

const DIVERGENCE_GUARD: f64 = 1e6;
const CONSECUTIVE_CONVERGED: usize = 3;

/// Trains `r` neurons spanning the top-`r` left singular subspace of `x`.
///
/// Columns come back unit-norm, mutually orthogonal at convergence tolerance
/// (not machine precision), in deflation order.
pub fn hebbian_subspace(x: &Array2<f64>, r: usize, cfg: &HebbianConfig) -> Result<Array2<f64>> {
    hebbian_subspace_with_scales(x, r, cfg).map(|(v, _)| v)
}

/// Same as [`hebbian_subspace`] but also returns the per-neuron singular-value
/// estimates `‖Xᵀv_r‖`.
pub fn hebbian_subspace_with_scales(
    x: &Array2<f64>,
    r: usize,
    cfg: &HebbianConfig,
) -> Result<(Array2<f64>, Array1<f64>)> {
    ensure_finite(x, "hebbian_subspace input")?;
    let (n, p) = x.dim();
    if r == 0 || r > n.min(p) {
        return Err(TfaError::InvalidArgument(format!(
            "rank {} not in 1..={} for a {}×{} matrix",
            r,
            n.min(p),
            n,
            p
        )));
    }
    if cfg.epochs == 0 {
        return Err(TfaError::InvalidArgument("epochs must be at least 1".into()));
    }
    let fro_sq: f64 = x.iter().map(|v| v * v).sum();
    let eta = cfg.eta.unwrap_or(0.01 / fro_sq.max(f64::MIN_POSITIVE));
    if eta <= 0.0 {
        return Err(TfaError::InvalidArgument("eta must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut basis = Array2::zeros((n, r));
    let mut scales = Array1::zeros(r);
    for neuron in 0..r {
        let mut v = random_unit_vector(n, &mut rng);
        let mut consecutive = 0usize;
        match cfg.mode {
            GradientMode::Batch => {
                for _ in 0..cfg.epochs {
                    let code = x.t().dot(&v);
                    let drive = x.dot(&code);
                    let dv = deflated(&drive, &basis, neuron) * eta;
                    let change = apply_update(&mut v, &dv)?;
                    if change < cfg.tol {
                        consecutive += 1;
                        if consecutive == CONSECUTIVE_CONVERGED {
                            break;
                        }
                    } else {
                        consecutive = 0;
                    }
                }
            }
            GradientMode::Stochastic => {
                let mut order: Vec<usize> = (0..p).collect();
                for _ in 0..cfg.epochs {
                    order.shuffle(&mut rng);
                    let mut max_change: f64 = 0.0;
                    for &j in &order {
                        let col = x.column(j);
                        let code = col.dot(&v);
                        let drive = col.to_owned() * code;
                        let dv = deflated(&drive, &basis, neuron) * eta;
                        max_change = max_change.max(apply_update(&mut v, &dv)?);
                    }
                    if max_change < cfg.tol {
                        consecutive += 1;
                        if consecutive == CONSECUTIVE_CONVERGED {
                            break;
                        }
                    } else {
                        consecutive = 0;
                    }
                }
            }
        }
        scales[neuron] = x.t().dot(&v).dot(&x.t().dot(&v)).sqrt();
        basis.column_mut(neuron).assign(&v);
    }
    Ok((basis, scales))
}

/// Removes the span of the first `count` basis columns from `drive`.
fn deflated(drive: &Array1<f64>, basis: &Array2<f64>, count: usize) -> Array1<f64> {
    let mut out = drive.clone();
    for j in 0..count {
        let col = basis.column(j);
        let proj = col.dot(&out);
        out.scaled_add(-proj, &col);
    }
    out
}

/// Applies `v ← (v + Δv)/‖v + Δv‖` with the divergence guard; returns the
/// post-normalization weight change `‖v̂ − v‖`.
fn apply_update(v: &mut Array1<f64>, dv: &Array1<f64>) -> Result<f64> {
    let candidate = &*v + dv;
    let norm = candidate.dot(&candidate).sqrt();
    if norm > DIVERGENCE_GUARD {
        return Err(TfaError::Divergence(
            "hebbian weight norm exploded; retry with a smaller eta".into(),
        ));
    }
    if norm == 0.0 {
        return Ok(0.0);
    }
    let next = candidate / norm;
    let change = (&next - &*v).dot(&(&next - &*v)).sqrt();
    *v = next;
    Ok(change)
}

fn random_unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v = Array1::from_iter((0..n).map(|_| rng.random::<f64>() - 0.5));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// ALS mode step backed by Hebbian training; the learned columns are polished
/// by Gram–Schmidt so downstream projections see an exactly orthonormal basis
/// (the span is unchanged).
pub(crate) struct HebbianStep {
    cfg: HebbianConfig,
}

impl HebbianStep {
    pub fn new(cfg: HebbianConfig) -> Self {
        HebbianStep { cfg }
    }
}

impl ModeSubspace for HebbianStep {
    fn compute(&self, x_m: &DataTensor, mode: usize, rank: usize, _iteration: usize) -> Result<Array2<f64>> {
        let unfolded = x_m.unfold(mode)?;
        let learned = hebbian_subspace(&unfolded, rank, &self.cfg)?;
        Ok(orthonormalize_columns(&learned))
    }

    fn name(&self) -> &'static str {
        "hebbian"
    }
}

/// Fits the extended core as a linear decoder against the frozen code
/// `(U_M ⊗ … ⊗ U_1)ᵀ`: batch mode solves the least-squares problem in closed
/// form, stochastic mode streams one observation at a time.
pub fn core_via_autoencoder(
    d: &DataTensor,
    factors: &[ModeMatrix],
    cfg: &HebbianConfig,
) -> Result<DataTensor> {
    let m = d.ndim() - 1;
    if factors.len() != m {
        return Err(TfaError::ShapeMismatch(format!(
            "{} factors for {} causal modes",
            factors.len(),
            m
        )));
    }
    for f in factors {
        if f.extent() != d.dims()[f.mode] {
            return Err(TfaError::ShapeMismatch(format!(
                "factor for mode {} has {} rows but the extent is {}",
                f.mode,
                f.extent(),
                d.dims()[f.mode]
            )));
        }
    }
    let ranks: Vec<usize> = factors.iter().map(|f| f.rank()).collect();
    let code_len: usize = ranks.iter().product();
    let observations = d.unfold(0)?;
    let n_obs = observations.ncols();
    // code column per factor combination, enumerated in unfold(·, 0) order
    let mut code = Array2::zeros((code_len, n_obs));
    let combo_dims: Vec<usize> = d.dims()[1..].to_vec();
    for (col, combo) in multi_indices(&combo_dims).enumerate() {
        for (row, rho) in multi_indices(&ranks).enumerate() {
            let mut prod = 1.0;
            for (k, (&i, &r)) in combo.iter().zip(&rho).enumerate() {
                prod *= factors[k].entries[[i, r]];
            }
            code[[row, col]] = prod;
        }
    }
    let decoder = match cfg.mode {
        GradientMode::Batch => {
            let code_pinv = crate::linalg::pseudoinverse(&code)?;
            observations.dot(&code_pinv)
        }
        GradientMode::Stochastic => {
            let i0 = d.dims()[0];
            let max_code_sq = (0..n_obs)
                .map(|j| {
                    let c = code.column(j);
                    c.dot(&c)
                })
                .fold(0.0f64, f64::max);
            if max_code_sq == 0.0 {
                return DataTensor::fold(&Array2::zeros((i0, code_len)), 0, &core_dims(d, &ranks));
            }
            let eta = cfg.eta.unwrap_or(1.0 / max_code_sq);
            let mut theta: Array2<f64> = Array2::zeros((i0, code_len));
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut order: Vec<usize> = (0..n_obs).collect();
            let mut consecutive = 0usize;
            'epochs: for _ in 0..cfg.epochs {
                order.shuffle(&mut rng);
                let mut max_step: f64 = 0.0;
                for &j in &order {
                    let k = code.column(j);
                    let err = &observations.column(j) - &theta.dot(&k);
                    let step_norm = eta * err.dot(&err).sqrt() * k.dot(&k).sqrt();
                    max_step = max_step.max(step_norm);
                    if step_norm > DIVERGENCE_GUARD {
                        return Err(TfaError::Divergence(
                            "decoder update exploded; retry with a smaller eta".into(),
                        ));
                    }
                    for (row, &e) in err.iter().enumerate() {
                        for (colk, &kv) in k.iter().enumerate() {
                            theta[[row, colk]] += eta * e * kv;
                        }
                    }
                }
                if max_step < cfg.tol {
                    consecutive += 1;
                    if consecutive == CONSECUTIVE_CONVERGED {
                        break 'epochs;
                    }
                } else {
                    consecutive = 0;
                }
            }
            theta
        }
    };
    DataTensor::fold(&decoder, 0, &core_dims(d, &ranks))
}

fn core_dims(d: &DataTensor, ranks: &[usize]) -> Vec<usize> {
    let mut dims = vec![d.dims()[0]];
    dims.extend_from_slice(ranks);
    dims
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::test_support::multilinear_data;
    use crate::factorization::{compute_extended_core, CoreMethod};
    use crate::linalg::{max_principal_angle, truncated_svd, SidePolicy};
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn gapped_matrix(n: usize, p: usize, spectrum: &[f64], seed: u64) -> Array2<f64> {
        use rand::prelude::*;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        let b = Array2::from_shape_fn((p, p), |_| rng.random::<f64>() * 2.0 - 1.0);
        let u = orthonormalize_columns(&a);
        let v = orthonormalize_columns(&b);
        let mut s = Array2::zeros((n, p));
        for (i, &sv) in spectrum.iter().enumerate() {
            s[[i, i]] = sv;
        }
        u.dot(&s).dot(&v.t())
    }

    #[test]
    fn single_neuron_finds_dominant_axis() {
        // x = e₁·[1,1,1,1]
        let x = arr2(&[
            [1.0, 1.0, 1.0, 1.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]);
        let cfg = HebbianConfig { eta: Some(0.05), ..Default::default() };
        let v = hebbian_subspace(&x, 1, &cfg).unwrap();
        assert!(v[[0, 0]].abs() >= 1.0 - 1e-6);
        for i in 1..4 {
            assert!(v[[i, 0]].abs() <= 1e-6);
        }
    }

    #[test]
    fn equal_singular_values_span_the_same_plane() {
        let x = gapped_matrix(6, 12, &[2.0, 2.0, 0.1], 60);
        let cfg = HebbianConfig::default();
        let v = hebbian_subspace(&x, 2, &cfg).unwrap();
        let svd = truncated_svd(&x, 2, SidePolicy::Auto).unwrap();
        assert!(max_principal_angle(&v, &svd.u).unwrap() <= 1e-3);
    }

    #[test]
    fn matches_svd_subspace_on_gapped_spectrum() {
        let x = gapped_matrix(10, 40, &[3.0, 2.4, 1.9, 0.3, 0.2, 0.1], 61);
        let cfg = HebbianConfig::default();
        let v = hebbian_subspace(&x, 3, &cfg).unwrap();
        let svd = truncated_svd(&x, 3, SidePolicy::Auto).unwrap();
        assert!(max_principal_angle(&v, &svd.u).unwrap() <= 1e-3);
        // columns unit-norm and near-orthogonal at convergence tolerance
        for j in 0..3 {
            assert_abs_diff_eq!(v.column(j).dot(&v.column(j)), 1.0, epsilon = 1e-10);
            for k in 0..j {
                assert!(v.column(j).dot(&v.column(k)).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn stochastic_mode_matches_svd_subspace() {
        let x = gapped_matrix(8, 20, &[3.0, 2.2, 0.2], 62);
        let cfg = HebbianConfig { mode: GradientMode::Stochastic, ..Default::default() };
        let v = hebbian_subspace(&x, 2, &cfg).unwrap();
        let svd = truncated_svd(&x, 2, SidePolicy::Auto).unwrap();
        assert!(max_principal_angle(&v, &svd.u).unwrap() <= 1e-3);
    }

    #[test]
    fn deflation_matches_joint_training() {
        let x = gapped_matrix(8, 16, &[3.0, 2.3, 1.8, 0.2], 63);
        let cfg = HebbianConfig::default();
        let joint = hebbian_subspace(&x, 3, &cfg).unwrap();
        // train two, then one more on the same data
        let two = hebbian_subspace(&x, 2, &cfg).unwrap();
        let mut grown = Array2::zeros((8, 3));
        grown.slice_mut(ndarray::s![.., ..2]).assign(&two);
        let third = hebbian_subspace(&x, 3, &cfg).unwrap();
        grown.column_mut(2).assign(&third.column(2));
        assert!(max_principal_angle(&joint, &grown).unwrap() <= 1e-3);
    }

    #[test]
    fn seeded_runs_are_bitwise_reproducible() {
        let x = gapped_matrix(6, 10, &[2.0, 1.0], 64);
        let cfg = HebbianConfig { epochs: 200, ..Default::default() };
        let a = hebbian_subspace(&x, 2, &cfg).unwrap();
        let b = hebbian_subspace(&x, 2, &cfg).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn oversized_eta_reports_divergence() {
        let x = gapped_matrix(5, 8, &[3.0, 1.0], 65);
        let cfg = HebbianConfig { eta: Some(1e9), epochs: 50, ..Default::default() };
        match hebbian_subspace(&x, 1, &cfg) {
            Err(TfaError::Divergence(msg)) => assert!(msg.contains("eta")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn scale_estimates_track_singular_values() {
        let x = gapped_matrix(8, 14, &[2.0, 1.5, 1.0], 66);
        let cfg = HebbianConfig { epochs: 10000, ..Default::default() };
        let (_, scales) = hebbian_subspace_with_scales(&x, 3, &cfg).unwrap();
        for (est, truth) in scales.iter().zip(&[2.0, 1.5, 1.0]) {
            assert_abs_diff_eq!(est, truth, epsilon = 1e-2);
        }
    }

    #[test]
    fn batch_autoencoder_core_equals_direct_core() {
        let (data, _, truth) = multilinear_data(8, &[3, 3], &[2, 2], 67);
        let factors: Vec<ModeMatrix> = truth
            .iter()
            .enumerate()
            .map(|(k, f)| ModeMatrix::new(k + 1, f.clone()))
            .collect();
        let direct = compute_extended_core(&data, &factors, &CoreMethod::Direct).unwrap();
        let fitted = core_via_autoencoder(&data, &factors, &HebbianConfig::default()).unwrap();
        for (a, b) in fitted.values().iter().zip(direct.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn streaming_autoencoder_core_approaches_direct_core() {
        let (data, _, truth) = multilinear_data(6, &[3, 3], &[2, 2], 68);
        let factors: Vec<ModeMatrix> = truth
            .iter()
            .enumerate()
            .map(|(k, f)| ModeMatrix::new(k + 1, f.clone()))
            .collect();
        let direct = compute_extended_core(&data, &factors, &CoreMethod::Direct).unwrap();
        let cfg = HebbianConfig {
            mode: GradientMode::Stochastic,
            epochs: 3000,
            tol: 1e-9,
            ..Default::default()
        };
        let fitted = core_via_autoencoder(&data, &factors, &cfg).unwrap();
        let err: f64 = fitted
            .values()
            .iter()
            .zip(direct.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-3, "stream-vs-batch core error {err}");
    }

    #[test]
    fn zero_data_gives_zero_core() {
        let d = DataTensor::zeros(vec![4, 2, 2]).unwrap();
        let factors = vec![
            ModeMatrix::new(1, Array2::eye(2)),
            ModeMatrix::new(2, Array2::eye(2)),
        ];
        for mode in [GradientMode::Batch, GradientMode::Stochastic] {
            let cfg = HebbianConfig { mode, epochs: 10, ..Default::default() };
            let core = core_via_autoencoder(&d, &factors, &cfg).unwrap();
            assert!(core.values().iter().all(|&v| v == 0.0));
        }
    }
}
