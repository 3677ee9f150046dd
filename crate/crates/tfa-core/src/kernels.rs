//! Kernel functions, the kernelized mode covariance, and the K-MPCA / K-MICA
//! trainers with a cumulant-based ICA rotation.
//!
//! The mode-`m` covariance generalizes `X_[m]·X_[m]ᵀ` by replacing every inner
//! product between measurement fibers with a kernel evaluation, summed over
//! all co-indices of the other causal modes. The linear kernel keeps the exact
//! matrix-product path, so kernelized training with all-linear kernels runs
//! the very same floating-point operations as plain MPCA.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TfaError};
use crate::factorization::{
    model_from_outcome, run_als, CausalModel, DriverConfig, ModeSubspace, TrainingConfig,
};
use crate::linalg::{fix_column_signs, pseudoinverse, symmetric_eigen};
use crate::neural::HebbianStep;
use crate::tensor::{multi_indices, DataTensor};

/// Kernel families (symmetric; all but the sigmoid are positive semi-definite).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `K(u, v) = uᵀv` — does not warp the feature space.
    Linear,
    /// `K(u, v) = (uᵀv)^d`
    PolynomialHomogeneous { degree: u32 },
    /// `K(u, v) = (uᵀv + 1)^d`
    PolynomialAffine { degree: u32 },
    /// `K(u, v) = tanh(α·uᵀv + β)` — may produce an indefinite Gram matrix.
    Sigmoid { alpha: f64, beta: f64 },
    /// `K(u, v) = exp(−‖u − v‖² / 2σ²)`
    Rbf { sigma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::PolynomialHomogeneous { degree } | KernelSpec::PolynomialAffine { degree } => {
                if *degree == 0 {
                    return Err(TfaError::InvalidArgument("polynomial degree must be at least 1".into()));
                }
            }
            KernelSpec::Rbf { sigma } => {
                if !(*sigma > 0.0) {
                    return Err(TfaError::InvalidArgument("rbf sigma must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }
}

/// Evaluates the kernel on a pair of equal-length vectors.
pub fn kernel_eval(spec: &KernelSpec, u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(TfaError::ShapeMismatch(format!(
            "kernel arguments have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    spec.validate()?;
    Ok(kernel_eval_unchecked(spec, u, v))
}

fn kernel_eval_unchecked(spec: &KernelSpec, u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    match spec {
        KernelSpec::Linear => u.dot(&v),
        KernelSpec::PolynomialHomogeneous { degree } => u.dot(&v).powi(*degree as i32),
        KernelSpec::PolynomialAffine { degree } => (u.dot(&v) + 1.0).powi(*degree as i32),
        KernelSpec::Sigmoid { alpha, beta } => (alpha * u.dot(&v) + beta).tanh(),
        KernelSpec::Rbf { sigma } => {
            let mut dist_sq = 0.0;
            for (a, b) in u.iter().zip(v.iter()) {
                let d = a - b;
                dist_sq += d * d;
            }
            (-dist_sq / (2.0 * sigma * sigma)).exp()
        }
    }
}

/// Kernelized mode-`m` covariance: entry `(j, k)` sums
/// `K(d_{…j…}, d_{…k…})` over every co-index of the other causal modes.
///
/// Mode 0 is the measurement mode and has no kernel covariance. The linear
/// kernel takes the exact `unfold·unfoldᵀ` path.
pub fn kernel_mode_covariance(x: &DataTensor, mode: usize, spec: &KernelSpec) -> Result<Array2<f64>> {
    if mode == 0 {
        return Err(TfaError::InvalidArgument(
            "mode 0 is the measurement mode and has no kernel covariance".into(),
        ));
    }
    mode_covariance(x, mode, spec)
}

/// Covariance shared with the measurement mode (linear only), used by the
/// full-HOSVD testing path.
pub(crate) fn mode_covariance(x: &DataTensor, mode: usize, spec: &KernelSpec) -> Result<Array2<f64>> {
    if mode >= x.ndim() {
        return Err(TfaError::ModeOutOfRange { mode, modes: x.ndim() });
    }
    spec.validate()?;
    if spec.is_linear() {
        let unfolded = x.unfold(mode)?;
        return Ok(unfolded.dot(&unfolded.t()));
    }
    let dims = x.dims();
    let i0 = dims[0];
    let extent = dims[mode];
    let strides: Vec<usize> = (0..dims.len())
        .map(|m| dims[..m].iter().product())
        .collect();
    let co_dims: Vec<usize> = dims
        .iter()
        .enumerate()
        .filter(|&(n, _)| n != 0 && n != mode)
        .map(|(_, &d)| d)
        .collect();
    let co_combos: Vec<Vec<usize>> = multi_indices(&co_dims).collect();
    let values = x.values();
    let fiber = |j: usize, co: &[usize]| -> ArrayView1<'_, f64> {
        let mut base = j * strides[mode];
        let mut c = 0;
        for n in 1..dims.len() {
            if n != mode {
                base += co[c] * strides[n];
                c += 1;
            }
        }
        ArrayView1::from(&values[base..base + i0])
    };
    // write-partitioned by rows; each row sums its co-index terms in a fixed
    // order so the result is independent of thread timing
    let rows: Vec<Vec<f64>> = (0..extent)
        .into_par_iter()
        .map(|j| {
            let mut row = vec![0.0; extent - j];
            for co in &co_combos {
                let fj = fiber(j, co);
                for k in j..extent {
                    row[k - j] += kernel_eval_unchecked(spec, fj, fiber(k, co));
                }
            }
            row
        })
        .collect();
    let mut cov = Array2::zeros((extent, extent));
    for (j, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let k = j + off;
            cov[[j, k]] = v;
            cov[[k, j]] = v;
        }
    }
    Ok(cov)
}

/// Opt-in cache for kernel covariances keyed by `(mode, iteration)`.
///
/// The trainers recompute the covariance on the current `X_m` every sweep;
/// embedders that re-read the same sweep's covariance can share one of these.
#[derive(Default)]
pub struct CovarianceCache {
    inner: Mutex<HashMap<(usize, usize), Arc<Array2<f64>>>>,
}

impl CovarianceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute<F>(&self, mode: usize, iteration: usize, compute: F) -> Result<Arc<Array2<f64>>>
    where
        F: FnOnce() -> Result<Array2<f64>>,
    {
        let mut guard = self.inner.lock().expect("covariance cache poisoned");
        if let Some(hit) = guard.get(&(mode, iteration)) {
            return Ok(Arc::clone(hit));
        }
        let value = Arc::new(compute()?);
        guard.insert((mode, iteration), Arc::clone(&value));
        Ok(value)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("covariance cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Eigenvectors of the (kernel) mode covariance, ordered by eigenvalue.
/// Negative eigenvalues (possible for the sigmoid kernel) are clipped to zero
/// with a warning; they carry no usable energy.
pub(crate) fn covariance_eigenbasis(
    cov: &Array2<f64>,
    rank: usize,
    warn_indefinite: bool,
) -> Array2<f64> {
    let (vals, vecs) = symmetric_eigen(cov);
    if warn_indefinite {
        let trace: f64 = (0..cov.nrows()).map(|i| cov[[i, i]]).sum();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 * trace.abs().max(1.0) {
            log::warn!(
                "indefinite kernel covariance (min eigenvalue {min:.3e}); clipping negatives to zero"
            );
        }
    }
    let mut u = vecs.slice(ndarray::s![.., ..rank]).to_owned();
    fix_column_signs(&mut u, None);
    u
}

/// ALS mode step: kernel covariance of the current `X_m`, then its leading
/// eigenvectors. With a linear kernel this is exactly the M-mode SVD step.
pub(crate) struct KernelEigenStep<'a> {
    specs: &'a [KernelSpec],
    cache: Option<&'a CovarianceCache>,
}

impl<'a> KernelEigenStep<'a> {
    pub fn new(specs: &'a [KernelSpec]) -> Self {
        KernelEigenStep { specs, cache: None }
    }

    pub fn with_cache(specs: &'a [KernelSpec], cache: &'a CovarianceCache) -> Self {
        KernelEigenStep { specs, cache: Some(cache) }
    }

    fn spec_for(&self, mode: usize) -> &KernelSpec {
        if mode == 0 {
            &KernelSpec::Linear
        } else {
            &self.specs[mode - 1]
        }
    }
}

impl ModeSubspace for KernelEigenStep<'_> {
    fn compute(&self, x_m: &DataTensor, mode: usize, rank: usize, iteration: usize) -> Result<Array2<f64>> {
        let spec = self.spec_for(mode);
        let cov = match self.cache {
            Some(cache) => {
                let arc = cache.get_or_compute(mode, iteration, || mode_covariance(x_m, mode, spec))?;
                arc.as_ref().clone()
            }
            None => mode_covariance(x_m, mode, spec)?,
        };
        let warn = matches!(spec, KernelSpec::Sigmoid { .. });
        Ok(covariance_eigenbasis(&cov, rank, warn))
    }

    fn name(&self) -> &'static str {
        "svd"
    }
}

fn validate_kernel_setup(d: &DataTensor, cfg: &TrainingConfig, specs: &[KernelSpec]) -> Result<()> {
    let m = d.ndim().saturating_sub(1);
    if specs.len() != m {
        return Err(TfaError::InvalidArgument(format!(
            "{} kernel specs for {} causal modes",
            specs.len(),
            m
        )));
    }
    for spec in specs {
        spec.validate()?;
    }
    if matches!(cfg.engine, crate::factorization::SubspaceEngine::Hebbian(_))
        && specs.iter().any(|s| !s.is_linear())
    {
        return Err(TfaError::InvalidArgument(
            "the hebbian engine supports linear kernels only".into(),
        ));
    }
    Ok(())
}

/// Kernel multilinear PCA: the M-mode SVD with every mode covariance replaced
/// by its kernelized form. All-linear kernels reproduce `m_mode_svd` exactly
/// (same code path). Nonlinear-kernel models support analysis and projection
/// but not measurement-space synthesis (the pre-image problem is not solved).
pub fn k_mpca(d: &DataTensor, cfg: &TrainingConfig, specs: &[KernelSpec]) -> Result<CausalModel> {
    validate_kernel_setup(d, cfg, specs)?;
    let driver = DriverConfig {
        ranks: &cfg.ranks,
        schedule: cfg.schedule,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
    };
    match &cfg.engine {
        crate::factorization::SubspaceEngine::Svd => {
            let step = KernelEigenStep::new(specs);
            let outcome = run_als(d, &driver, &step)?;
            model_from_outcome(d, &cfg.ranks, cfg.schedule, "svd", specs.to_vec(), &step, outcome)
        }
        crate::factorization::SubspaceEngine::Hebbian(hcfg) => {
            let step = HebbianStep::new(hcfg.clone());
            let outcome = run_als(d, &driver, &step)?;
            model_from_outcome(d, &cfg.ranks, cfg.schedule, "hebbian", specs.to_vec(), &step, outcome)
        }
    }
}

/// K-MPCA with a shared covariance cache (opt-in; keyed by iteration).
pub fn k_mpca_cached(
    d: &DataTensor,
    cfg: &TrainingConfig,
    specs: &[KernelSpec],
    cache: &CovarianceCache,
) -> Result<CausalModel> {
    validate_kernel_setup(d, cfg, specs)?;
    let driver = DriverConfig {
        ranks: &cfg.ranks,
        schedule: cfg.schedule,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
    };
    let step = KernelEigenStep::with_cache(specs, cache);
    let outcome = run_als(d, &driver, &step)?;
    model_from_outcome(d, &cfg.ranks, cfg.schedule, "svd", specs.to_vec(), &step, outcome)
}

// ---------------------------------------------------------------------------
// ICA rotation (K-MICA branch)
// ---------------------------------------------------------------------------

/// Independent components of one mode: `C = U·W⁻¹` with the rotation `W`.
#[derive(Debug, Clone)]
pub struct FactorComponents {
    /// Independent components `C_m = U_m·W_m⁻¹`.
    pub c: Array2<f64>,
    /// Orthogonal rotation maximizing the kurtosis contrast.
    pub w: Array2<f64>,
    /// The underlying orthonormal basis.
    pub u: Array2<f64>,
    /// False when the fixed point hit the sweep cap (identity rotation
    /// returned) or the coordinates could not be whitened.
    pub converged: bool,
}

const ICA_MAX_SWEEPS: usize = 500;
const ICA_TOL: f64 = 1e-12;

/// Rotates an orthonormal mode basis so the whitened coordinates maximize the
/// sum of squared fourth-order cumulants (kurtosis), via fixed-point
/// iteration with symmetric decorrelation.
///
/// `x_unfolded` is the matrixized tensor whose left basis is `u`; its whitened
/// codes `√P·Σ⁺·Uᵀ·X` feed the contrast. The returned components satisfy
/// `C·W = U`, so the spanned subspace never changes.
pub fn ica_rotation(u: &Array2<f64>, x_unfolded: &Array2<f64>) -> Result<FactorComponents> {
    if u.nrows() != x_unfolded.nrows() {
        return Err(TfaError::ShapeMismatch(format!(
            "basis has {} rows but the unfolded data has {}",
            u.nrows(),
            x_unfolded.nrows()
        )));
    }
    let r = u.ncols();
    let p = x_unfolded.ncols();
    let codes = u.t().dot(x_unfolded); // Σ·Vᵀ, rows have norm σ_r
    let mut sigma = vec![0.0; r];
    for i in 0..r {
        let row = codes.row(i);
        sigma[i] = row.dot(&row).sqrt();
    }
    let smax = sigma.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 || sigma.iter().any(|&s| s <= smax * 1e-12) {
        // degenerate spectrum: whitening undefined, keep the basis as-is
        return Ok(FactorComponents {
            c: u.clone(),
            w: Array2::eye(r),
            u: u.clone(),
            converged: false,
        });
    }
    let mut z = codes;
    let scale = (p as f64).sqrt();
    for i in 0..r {
        let s = sigma[i];
        z.row_mut(i).mapv_inplace(|v| v * scale / s);
    }
    // deterministic symmetry-breaking start
    let mut w = Array2::eye(r);
    for i in 0..r {
        for j in 0..r {
            w[[i, j]] += 0.01 / (1.0 + (i + 2 * j) as f64);
        }
    }
    w = symmetric_decorrelate(&w);
    let mut converged = false;
    for _ in 0..ICA_MAX_SWEEPS {
        let s = w.dot(&z);
        let g = s.mapv(|v| v * v * v);
        let mut w_new = g.dot(&z.t()) / (p as f64) - &(w.clone() * 3.0);
        w_new = symmetric_decorrelate(&w_new);
        let overlap = w_new.dot(&w.t());
        let drift = (0..r)
            .map(|i| (1.0 - overlap[[i, i]].abs()).abs())
            .fold(0.0f64, f64::max);
        w = w_new;
        if drift < ICA_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Ok(FactorComponents {
            c: u.clone(),
            w: Array2::eye(r),
            u: u.clone(),
            converged: false,
        });
    }
    let c = u.dot(&w.t()); // W is orthogonal, so W⁻¹ = Wᵀ
    Ok(FactorComponents { c, w, u: u.clone(), converged: true })
}

/// `W ← (W·Wᵀ)^{-1/2}·W`.
fn symmetric_decorrelate(w: &Array2<f64>) -> Array2<f64> {
    let gram = w.dot(&w.t());
    let (vals, vecs) = symmetric_eigen(&gram);
    let vmax = vals.iter().cloned().fold(0.0f64, f64::max);
    let mut inv_sqrt = Array2::zeros(gram.dim());
    for (i, &l) in vals.iter().enumerate() {
        let clipped = l.max(vmax * 1e-14);
        if clipped > 0.0 {
            inv_sqrt[[i, i]] = 1.0 / clipped.sqrt();
        }
    }
    vecs.dot(&inv_sqrt).dot(&vecs.t()).dot(w)
}

/// ALS mode step for K-MICA: eigenbasis followed by the kurtosis rotation.
/// Projections use the pseudoinverse of the rotated components.
pub(crate) struct KernelIcaStep<'a> {
    specs: &'a [KernelSpec],
    last: Mutex<Vec<Option<FactorComponents>>>,
}

impl<'a> KernelIcaStep<'a> {
    pub fn new(specs: &'a [KernelSpec], modes: usize) -> Self {
        KernelIcaStep { specs, last: Mutex::new(vec![None; modes]) }
    }

    pub fn into_components(self) -> Vec<Option<FactorComponents>> {
        self.last.into_inner().expect("ica component store poisoned")
    }
}

impl ModeSubspace for KernelIcaStep<'_> {
    fn compute(&self, x_m: &DataTensor, mode: usize, rank: usize, _iteration: usize) -> Result<Array2<f64>> {
        let spec = &self.specs[mode - 1];
        let cov = mode_covariance(x_m, mode, spec)?;
        let warn = matches!(spec, KernelSpec::Sigmoid { .. });
        let u = covariance_eigenbasis(&cov, rank, warn);
        let unfolded = x_m.unfold(mode)?;
        let components = ica_rotation(&u, &unfolded)?;
        let c = components.c.clone();
        self.last.lock().expect("ica component store poisoned")[mode - 1] = Some(components);
        Ok(c)
    }

    fn projector(&self, factor: &Array2<f64>) -> Result<Array2<f64>> {
        pseudoinverse(factor)
    }

    fn name(&self) -> &'static str {
        "svd"
    }
}

/// Kernel multilinear ICA: K-MPCA with a cumulant rotation after every
/// eigen step. Returns the model (factors are the independent components
/// `C_m`) plus the final per-mode rotations.
pub fn k_mica(
    d: &DataTensor,
    cfg: &TrainingConfig,
    specs: &[KernelSpec],
) -> Result<(CausalModel, Vec<Option<FactorComponents>>)> {
    validate_kernel_setup(d, cfg, specs)?;
    if matches!(cfg.engine, crate::factorization::SubspaceEngine::Hebbian(_)) {
        return Err(TfaError::InvalidArgument(
            "k_mica requires the svd engine (the rotation needs the eigen spectrum)".into(),
        ));
    }
    let m = d.ndim() - 1;
    let driver = DriverConfig {
        ranks: &cfg.ranks,
        schedule: cfg.schedule,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
    };
    let step = KernelIcaStep::new(specs, m);
    let outcome = run_als(d, &driver, &step)?;
    let model = model_from_outcome(d, &cfg.ranks, cfg.schedule, "svd", specs.to_vec(), &step, outcome)?;
    Ok((model, step.into_components()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::test_support::multilinear_data;
    use crate::factorization::{m_mode_svd, SubspaceEngine};
    use crate::linalg::max_principal_angle;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, Array1};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: &[usize], seed: u64) -> DataTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let values = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        DataTensor::from_values(dims.to_vec(), values).unwrap()
    }

    #[test]
    fn linear_kernel_is_dot_product() {
        let u = arr1(&[1.0, 2.0]);
        let v = arr1(&[3.0, 4.0]);
        assert_eq!(kernel_eval(&KernelSpec::Linear, u.view(), v.view()).unwrap(), 11.0);
    }

    #[test]
    fn rbf_kernel_is_one_at_zero_distance() {
        let u = arr1(&[0.3, -2.5, 7.0]);
        for sigma in [0.1, 1.0, 10.0] {
            let k = kernel_eval(&KernelSpec::Rbf { sigma }, u.view(), u.view()).unwrap();
            assert_abs_diff_eq!(k, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn affine_polynomial_hand_value() {
        let u = arr1(&[1.0, 0.0]);
        let v = arr1(&[1.0, 1.0]);
        let k = kernel_eval(&KernelSpec::PolynomialAffine { degree: 2 }, u.view(), v.view()).unwrap();
        assert_eq!(k, 4.0);
    }

    #[test]
    fn kernel_eval_rejects_length_mismatch() {
        let u = arr1(&[1.0]);
        let v = arr1(&[1.0, 2.0]);
        assert!(kernel_eval(&KernelSpec::Linear, u.view(), v.view()).is_err());
    }

    #[test]
    fn kernel_specs_serialize_with_kind_and_params() {
        let json = serde_json::to_string(&KernelSpec::Rbf { sigma: 1.5 }).unwrap();
        assert_eq!(json, r#"{"kind":"rbf","params":{"sigma":1.5}}"#);
        let json = serde_json::to_string(&KernelSpec::Linear).unwrap();
        assert_eq!(json, r#"{"kind":"linear"}"#);
        let back: KernelSpec = serde_json::from_str(r#"{"kind":"rbf","params":{"sigma":1.5}}"#).unwrap();
        assert_eq!(back, KernelSpec::Rbf { sigma: 1.5 });
    }

    #[test]
    fn linear_covariance_equals_gram_exactly() {
        let x = random_tensor(&[4, 3, 2], 70);
        let cov = kernel_mode_covariance(&x, 1, &KernelSpec::Linear).unwrap();
        let unfolded = x.unfold(1).unwrap();
        let gram = unfolded.dot(&unfolded.t());
        assert!(cov.iter().zip(gram.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn covariance_rejects_mode_zero() {
        let x = random_tensor(&[4, 3, 2], 71);
        assert!(kernel_mode_covariance(&x, 0, &KernelSpec::Linear).is_err());
    }

    #[test]
    fn rbf_covariance_matches_brute_force() {
        let x = random_tensor(&[2, 2, 2], 72);
        let spec = KernelSpec::Rbf { sigma: 1.0 };
        let cov = kernel_mode_covariance(&x, 1, &spec).unwrap();
        // exhaustive double loop straight off the summation formula
        let mut expect = Array2::zeros((2, 2));
        for j in 0..2 {
            for k in 0..2 {
                for i2 in 0..2 {
                    let fj: Array1<f64> = (0..2).map(|i0| x.get(&[i0, j, i2])).collect();
                    let fk: Array1<f64> = (0..2).map(|i0| x.get(&[i0, k, i2])).collect();
                    expect[[j, k]] += kernel_eval(&spec, fj.view(), fk.view()).unwrap();
                }
            }
        }
        for (a, b) in cov.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_sums_self_kernel_values() {
        let x = random_tensor(&[3, 2, 4], 73);
        let spec = KernelSpec::Rbf { sigma: 2.0 };
        let cov = kernel_mode_covariance(&x, 1, &spec).unwrap();
        // K(f, f) = 1 summed over the 4 co-indices of mode 2
        for j in 0..2 {
            assert_abs_diff_eq!(cov[[j, j]], 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn psd_kernels_have_nonnegative_spectra() {
        let x = random_tensor(&[4, 3, 3], 74);
        for spec in [
            KernelSpec::Linear,
            KernelSpec::PolynomialHomogeneous { degree: 2 },
            KernelSpec::PolynomialAffine { degree: 3 },
            KernelSpec::Rbf { sigma: 0.8 },
        ] {
            let cov = kernel_mode_covariance(&x, 2, &spec).unwrap();
            let (vals, _) = symmetric_eigen(&cov);
            let trace: f64 = (0..3).map(|i| cov[[i, i]]).sum();
            for &l in vals.iter() {
                assert!(l >= -1e-10 * trace, "kernel {spec:?} eigenvalue {l}");
            }
        }
    }

    #[test]
    fn all_linear_kernels_reproduce_mpca_bitwise() {
        let (data, _, _) = multilinear_data(6, &[4, 3], &[2, 2], 75);
        let cfg = TrainingConfig::new(vec![2, 2]);
        let mpca = m_mode_svd(&data, &cfg).unwrap();
        let kernels = vec![KernelSpec::Linear, KernelSpec::Linear];
        let kernel_model = k_mpca(&data, &cfg, &kernels).unwrap();
        assert_eq!(mpca.report.final_cost.to_bits(), kernel_model.report.final_cost.to_bits());
        for (a, b) in mpca.factors.iter().zip(&kernel_model.factors) {
            assert!(a
                .entries
                .iter()
                .zip(b.entries.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for (a, b) in mpca.core.values().iter().zip(kernel_model.core.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn full_rank_linear_kmpca_reconstructs() {
        let d = random_tensor(&[4, 3, 2], 76);
        let cfg = TrainingConfig::new(vec![3, 2]);
        let model = k_mpca(&d, &cfg, &[KernelSpec::Linear, KernelSpec::Linear]).unwrap();
        assert!(model.report.final_cost <= 1e-10);
    }

    #[test]
    fn hebbian_engine_rejects_nonlinear_kernels() {
        let d = random_tensor(&[4, 3, 2], 77);
        let cfg = TrainingConfig::new(vec![2, 2])
            .with_engine(SubspaceEngine::Hebbian(crate::neural::HebbianConfig::default()));
        let specs = vec![KernelSpec::Rbf { sigma: 1.0 }, KernelSpec::Linear];
        assert!(k_mpca(&d, &cfg, &specs).is_err());
    }

    #[test]
    fn covariance_cache_hits_by_iteration_key() {
        let x = random_tensor(&[3, 4, 2], 78);
        let cache = CovarianceCache::new();
        let first = cache
            .get_or_compute(1, 0, || mode_covariance(&x, 1, &KernelSpec::Linear))
            .unwrap();
        let second = cache
            .get_or_compute(1, 0, || panic!("must hit the cache"))
            .unwrap();
        assert!(Arc::ptr_eq(&first, &second));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn rbf_concentrates_energy_on_warped_data() {
        // per-mode cubic warp puts the factor values on a nonlinear curve;
        // the rbf leading eigenvalue should capture at least the linear
        // kernel's share of its spectrum
        let (data, _, _) = multilinear_data(6, &[8, 3], &[2, 2], 79);
        let warped = {
            let mut t = data.clone();
            let vals: Vec<f64> = t.values().iter().map(|&v| v + v * v * v).collect();
            t = DataTensor::from_values(t.dims().to_vec(), vals).unwrap();
            t
        };
        let lin = kernel_mode_covariance(&warped, 1, &KernelSpec::Linear).unwrap();
        let rbf = kernel_mode_covariance(&warped, 1, &KernelSpec::Rbf { sigma: 1.0 }).unwrap();
        let share = |cov: &Array2<f64>| {
            let (vals, _) = symmetric_eigen(cov);
            let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
            vals[0].max(0.0) / total.max(f64::MIN_POSITIVE)
        };
        assert!(share(&rbf) >= share(&lin) - 1e-12);
    }

    #[test]
    fn ica_preserves_subspace_and_orthogonality() {
        let x = random_tensor(&[6, 5, 4], 80).unfold(1).unwrap();
        let svd = crate::linalg::truncated_svd(&x, 3, crate::linalg::SidePolicy::Auto).unwrap();
        let comp = ica_rotation(&svd.u, &x).unwrap();
        // W orthogonal
        let wtw = comp.w.t().dot(&comp.w);
        let defect: f64 = wtw
            .indexed_iter()
            .map(|((i, j), &v)| {
                let target = if i == j { 1.0 } else { 0.0 };
                (v - target) * (v - target)
            })
            .sum::<f64>()
            .sqrt();
        assert!(defect <= 1e-8);
        // C·W = U
        let back = comp.c.dot(&comp.w);
        for (a, b) in back.iter().zip(comp.u.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        assert!(max_principal_angle(&comp.c, &comp.u).unwrap() <= 1e-8);
    }

    #[test]
    fn gaussian_inputs_keep_consistency() {
        // rotationally invariant contrast: accept whatever W comes back,
        // the components must still satisfy C·W = U
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let x = Array2::from_shape_fn((4, 400), |_| {
            // Box–Muller
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let svd = crate::linalg::truncated_svd(&x, 2, crate::linalg::SidePolicy::Auto).unwrap();
        let comp = ica_rotation(&svd.u, &x).unwrap();
        let back = comp.c.dot(&comp.w);
        for (a, b) in back.iter().zip(comp.u.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn recovers_uniform_sources_mixed_by_rotation() {
        let mut ok = 0;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let p = 2000;
            let sources = Array2::from_shape_fn((2, p), |_| rng.random::<f64>() * 2.0 - 1.0);
            let phi: f64 = 0.6;
            let mixing = ndarray::arr2(&[[phi.cos(), -phi.sin()], [phi.sin(), phi.cos()]]);
            let x = mixing.dot(&sources);
            let svd = crate::linalg::truncated_svd(&x, 2, crate::linalg::SidePolicy::Auto).unwrap();
            let comp = ica_rotation(&svd.u, &x).unwrap();
            assert!(comp.converged);
            // recovered sources = W · whitened codes; compare against truth
            let codes = comp.u.t().dot(&x);
            let mut z = codes;
            for i in 0..2 {
                let norm = z.row(i).dot(&z.row(i)).sqrt();
                z.row_mut(i).mapv_inplace(|v| v * (p as f64).sqrt() / norm);
            }
            let recovered = comp.w.dot(&z);
            let mut best = 0.0f64;
            for i in 0..2 {
                for j in 0..2 {
                    let ri = recovered.row(i);
                    let sj = sources.row(j);
                    let corr = ri.dot(&sj)
                        / (ri.dot(&ri).sqrt() * sj.dot(&sj).sqrt());
                    best = best.max(corr.abs());
                }
            }
            if best >= 0.95 {
                ok += 1;
            }
        }
        assert!(ok >= 4, "unmixing succeeded only {ok}/5 times");
    }

    #[test]
    fn kmica_factors_span_kmpca_subspaces() {
        let (data, _, _) = multilinear_data(6, &[4, 4], &[2, 2], 82);
        let cfg = TrainingConfig::new(vec![2, 2]);
        let mpca = k_mpca(&data, &cfg, &[KernelSpec::Linear, KernelSpec::Linear]).unwrap();
        let (mica, comps) = k_mica(&data, &cfg, &[KernelSpec::Linear, KernelSpec::Linear]).unwrap();
        for (a, b) in mpca.factors.iter().zip(&mica.factors) {
            assert!(max_principal_angle(&a.entries, &b.entries).unwrap() <= 1e-6);
        }
        assert!(comps.iter().all(|c| c.is_some()));
    }
}
