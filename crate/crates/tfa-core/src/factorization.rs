//! M-mode SVD / MPCA training with parallel, asynchronous, and sequential
//! alternating-least-squares schedules, extended-core computation, cost
//! evaluation, and forward synthesis.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TfaError};
use crate::kernels::{KernelEigenStep, KernelSpec};
use crate::neural::{core_via_autoencoder, HebbianConfig, HebbianStep};
use crate::tensor::{DataTensor, ModeMatrix};

/// Order in which the per-mode least-squares subproblems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// One mode at a time, each reprojection using the freshest factors
    /// (exact alternating least squares; cost is monotone nonincreasing).
    Sequential,
    /// All modes per iteration from the previous iteration's factors, with a
    /// barrier before publication.
    Parallel,
    /// No barrier: each mode updates its working tensor incrementally from
    /// the latest published factors, staleness bounded to one iteration.
    #[serde(rename = "async")]
    Asynchronous,
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Schedule::Sequential => "sequential",
            Schedule::Parallel => "parallel",
            Schedule::Asynchronous => "async",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Schedule {
    type Err = TfaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Schedule::Sequential),
            "parallel" => Ok(Schedule::Parallel),
            "async" | "asynchronous" => Ok(Schedule::Asynchronous),
            other => Err(TfaError::InvalidArgument(format!(
                "unknown schedule '{other}' (expected sequential|parallel|async)"
            ))),
        }
    }
}

/// Subspace learner used for each mode update.
#[derive(Debug, Clone)]
pub enum SubspaceEngine {
    /// Eigen-decomposition of the mode covariance (the closed-form path).
    Svd,
    /// Hebbian autoencoder neurons trained by gradient descent.
    Hebbian(HebbianConfig),
}

impl SubspaceEngine {
    pub fn name(&self) -> &'static str {
        match self {
            SubspaceEngine::Svd => "svd",
            SubspaceEngine::Hebbian(_) => "hebbian",
        }
    }
}

/// Training parameters for the forward factorization.
#[derive(Debug, Clone)]
pub struct TrainingConfig {
    /// Target ranks `R̃_1..R̃_M` for the causal-factor modes.
    pub ranks: Vec<usize>,
    pub schedule: Schedule,
    pub max_iters: usize,
    /// Convergence threshold on the relative cost change.
    pub tol: f64,
    /// Orthonormality penalty weights, diagnostic only (training enforces
    /// orthonormality structurally).
    pub lambda: Vec<f64>,
    pub engine: SubspaceEngine,
}

impl TrainingConfig {
    pub fn new(ranks: Vec<usize>) -> Self {
        TrainingConfig {
            ranks,
            schedule: Schedule::Sequential,
            max_iters: 100,
            tol: 1e-8,
            lambda: Vec::new(),
            engine: SubspaceEngine::Svd,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_engine(mut self, engine: SubspaceEngine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Provenance recorded with a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingReport {
    pub schedule: Schedule,
    pub engine: String,
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub cost_trace: Vec<f64>,
}

/// Trained multilinear factor model: extended core, one basis per causal
/// factor, and the centering vector of the training observations.
#[derive(Debug, Clone)]
pub struct CausalModel {
    /// Extended core of dims `I_0 × R̃_1 × … × R̃_M`; its mode-0 unfolding is
    /// the synthesis operator.
    pub core: DataTensor,
    /// Factor matrices for modes `1..=M`.
    pub factors: Vec<ModeMatrix>,
    /// Mean vector subtracted from every training observation.
    pub mean: Array1<f64>,
    pub ranks: Vec<usize>,
    /// Per-mode kernels used during training (all linear for plain MPCA).
    pub kernels: Vec<KernelSpec>,
    pub report: TrainingReport,
}

impl CausalModel {
    /// Number of causal factor modes `M`.
    pub fn num_factor_modes(&self) -> usize {
        self.factors.len()
    }

    /// Measurement dimension `I_0`.
    pub fn measurement_dim(&self) -> usize {
        self.core.dims()[0]
    }

    /// Reconstructs one observation from per-mode representations, adding the
    /// stored mean.
    pub fn synthesize(&self, reps: &[Array1<f64>]) -> Result<Array1<f64>> {
        let raw = synthesize(&self.core, reps)?;
        Ok(raw + &self.mean)
    }

    /// Synthesizes from training rows `(i_1, …, i_M)`.
    pub fn synthesize_from_rows(&self, rows: &[usize]) -> Result<Array1<f64>> {
        if rows.len() != self.factors.len() {
            return Err(TfaError::ShapeMismatch(format!(
                "{} row indices for {} factor modes",
                rows.len(),
                self.factors.len()
            )));
        }
        let reps: Vec<Array1<f64>> = rows
            .iter()
            .zip(&self.factors)
            .map(|(&i, f)| f.representation(i))
            .collect();
        self.synthesize(&reps)
    }
}

/// Synthesis without a mean: `unfold(core, 0)·(û_M ⊗ … ⊗ û_1)`, evaluated as
/// chained mode contractions.
pub fn synthesize(core: &DataTensor, reps: &[Array1<f64>]) -> Result<Array1<f64>> {
    let m = core.ndim() - 1;
    if reps.len() != m {
        return Err(TfaError::ShapeMismatch(format!(
            "{} representations for {} causal modes",
            reps.len(),
            m
        )));
    }
    let mut t = core.clone();
    for (k, rep) in reps.iter().enumerate() {
        let mode = k + 1;
        if rep.len() != core.dims()[mode] {
            return Err(TfaError::ShapeMismatch(format!(
                "representation for mode {} has length {} but the core rank is {}",
                mode,
                rep.len(),
                core.dims()[mode]
            )));
        }
        t = t.mode_contract(rep, mode)?;
    }
    Ok(Array1::from_vec(t.values().to_vec()))
}

/// Eq.-style cost: `‖D − T ×_1 U_1 … ×_M U_M‖_F + Σ_m λ_m·‖U_mᵀU_m − I‖_F`.
pub fn cost_evaluate(d: &DataTensor, model: &CausalModel, lambda: &[f64]) -> Result<f64> {
    let mut recon = model.core.clone();
    for f in &model.factors {
        recon = recon.mode_multiply(&f.entries, f.mode)?;
    }
    let residual = d.sub(&recon)?.frobenius_norm();
    let mut penalty = 0.0;
    for (k, f) in model.factors.iter().enumerate() {
        let weight = lambda.get(k).copied().unwrap_or(0.0);
        if weight != 0.0 {
            penalty += weight * f.orthonormality_defect();
        }
    }
    Ok(residual + penalty)
}

/// How the extended core is obtained from data and fixed factors.
#[derive(Debug, Clone)]
pub enum CoreMethod {
    /// `𝒯 = 𝒟 ×_1 U_1ᵀ … ×_M U_Mᵀ`, exact.
    Direct,
    /// Least-squares decoder fit against the frozen Kronecker code.
    TensorAutoencoder(HebbianConfig),
}

/// Computes the extended core for orthonormal factors.
pub fn compute_extended_core(
    d: &DataTensor,
    factors: &[ModeMatrix],
    method: &CoreMethod,
) -> Result<DataTensor> {
    for f in factors {
        if f.mode == 0 || f.mode >= d.ndim() {
            return Err(TfaError::ModeOutOfRange { mode: f.mode, modes: d.ndim() });
        }
        if f.extent() != d.dims()[f.mode] {
            return Err(TfaError::ShapeMismatch(format!(
                "factor for mode {} has {} rows but the extent is {}",
                f.mode,
                f.extent(),
                d.dims()[f.mode]
            )));
        }
    }
    match method {
        CoreMethod::Direct => {
            let mut t = d.clone();
            for f in factors {
                t = t.mode_multiply(&f.entries.t().to_owned(), f.mode)?;
            }
            Ok(t)
        }
        CoreMethod::TensorAutoencoder(cfg) => core_via_autoencoder(d, factors, cfg),
    }
}

// ---------------------------------------------------------------------------
// ALS driver shared by the MPCA, kernel, and hierarchical trainers
// ---------------------------------------------------------------------------

/// One mode-update strategy: given the partially projected tensor `X_m`,
/// produce the `I_m × R̃_m` factor matrix.
pub(crate) trait ModeSubspace: Sync {
    fn compute(&self, x_m: &DataTensor, mode: usize, rank: usize, iteration: usize) -> Result<Array2<f64>>;

    /// Matrix applied when projecting data onto this factor (`Uᵀ` for
    /// orthonormal factors, the pseudoinverse in general).
    fn projector(&self, factor: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(factor.t().to_owned())
    }

    fn name(&self) -> &'static str;
}

pub(crate) struct DriverConfig<'a> {
    pub ranks: &'a [usize],
    pub schedule: Schedule,
    pub max_iters: usize,
    pub tol: f64,
}

pub(crate) struct AlsOutcome {
    pub factors: Vec<Array2<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub cost_trace: Vec<f64>,
}

struct FactorSlot {
    factor: Array2<f64>,
    projector: Array2<f64>,
    version: usize,
}

pub(crate) fn validate_ranks(d: &DataTensor, ranks: &[usize]) -> Result<()> {
    if d.ndim() < 2 {
        return Err(TfaError::InvalidArgument(
            "training data needs a measurement mode and at least one causal mode".into(),
        ));
    }
    let m = d.ndim() - 1;
    if ranks.len() != m {
        return Err(TfaError::InvalidArgument(format!(
            "ranks lists {} entries but the tensor has {} causal modes",
            ranks.len(),
            m
        )));
    }
    for (k, &r) in ranks.iter().enumerate() {
        let mode = k + 1;
        if r == 0 || r > d.dims()[mode] {
            return Err(TfaError::InvalidArgument(format!(
                "ranks[{k}] = {r} is outside 1..={} for mode {mode}",
                d.dims()[mode]
            )));
        }
    }
    Ok(())
}

fn project_except(
    d: &DataTensor,
    slots: &[FactorSlot],
    skip_mode: usize,
) -> Result<DataTensor> {
    let mut t = d.clone();
    for (k, slot) in slots.iter().enumerate() {
        let mode = k + 1;
        if mode == skip_mode {
            continue;
        }
        t = t.mode_multiply(&slot.projector, mode)?;
    }
    Ok(t)
}

fn residual_cost(d: &DataTensor, slots: &[FactorSlot]) -> Result<f64> {
    let mut t = d.clone();
    for (k, slot) in slots.iter().enumerate() {
        t = t.mode_multiply(&slot.projector, k + 1)?;
    }
    let mut recon = t;
    for (k, slot) in slots.iter().enumerate() {
        recon = recon.mode_multiply(&slot.factor, k + 1)?;
    }
    Ok(d.sub(&recon)?.frobenius_norm())
}

pub(crate) fn run_als(
    d: &DataTensor,
    cfg: &DriverConfig,
    step: &dyn ModeSubspace,
) -> Result<AlsOutcome> {
    validate_ranks(d, cfg.ranks)?;
    if cfg.tol <= 0.0 {
        return Err(TfaError::InvalidArgument("tol must be positive".into()));
    }
    if cfg.max_iters == 0 {
        return Err(TfaError::InvalidArgument("max_iters must be at least 1".into()));
    }
    let m = d.ndim() - 1;
    let mut slots: Vec<FactorSlot> = (0..m)
        .map(|k| {
            let factor = crate::linalg::identity_truncated(d.dims()[k + 1], cfg.ranks[k]);
            let projector = factor.t().to_owned();
            FactorSlot { factor, projector, version: 0 }
        })
        .collect();

    // Asynchronous bookkeeping: each mode keeps its own working tensor plus
    // the factor versions already folded into it.
    let mut async_x: Vec<DataTensor> = Vec::new();
    let mut async_folded: Vec<Vec<(usize, Array2<f64>)>> = Vec::new();
    if cfg.schedule == Schedule::Asynchronous {
        for k in 0..m {
            async_x.push(project_except(d, &slots, k + 1)?);
            async_folded.push(
                slots
                    .iter()
                    .map(|s| (s.version, s.factor.clone()))
                    .collect(),
            );
        }
    }

    let mut cost_trace = vec![residual_cost(d, &slots)?];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        match cfg.schedule {
            Schedule::Sequential => {
                for k in 0..m {
                    let mode = k + 1;
                    let x = project_except(d, &slots, mode)?;
                    let factor = step.compute(&x, mode, cfg.ranks[k], iterations)?;
                    let projector = step.projector(&factor)?;
                    slots[k] = FactorSlot { factor, projector, version: slots[k].version + 1 };
                }
            }
            Schedule::Parallel => {
                let updated: Vec<Result<Array2<f64>>> = (0..m)
                    .into_par_iter()
                    .map(|k| {
                        let mode = k + 1;
                        let x = project_except(d, &slots, mode)?;
                        step.compute(&x, mode, cfg.ranks[k], iterations)
                    })
                    .collect();
                for (k, factor) in updated.into_iter().enumerate() {
                    let factor = factor?;
                    let projector = step.projector(&factor)?;
                    slots[k] = FactorSlot { factor, projector, version: slots[k].version + 1 };
                }
            }
            Schedule::Asynchronous => {
                for k in 0..m {
                    let mode = k + 1;
                    // Fold in every newer published factor with the
                    // incremental correction X ×_n (P_n(new)·U_n(old)).
                    for (n, slot) in slots.iter().enumerate() {
                        if n == k {
                            continue;
                        }
                        let (seen, ref old_factor) = async_folded[k][n];
                        if seen != slot.version {
                            let correction = slot.projector.dot(old_factor);
                            async_x[k] = async_x[k].mode_multiply(&correction, n + 1)?;
                            async_folded[k][n] = (slot.version, slot.factor.clone());
                        }
                    }
                    let factor = step.compute(&async_x[k], mode, cfg.ranks[k], iterations)?;
                    let projector = step.projector(&factor)?;
                    slots[k] = FactorSlot { factor, projector, version: slots[k].version + 1 };
                }
            }
        }
        let cost = residual_cost(d, &slots)?;
        let prev = *cost_trace.last().expect("trace seeded with the initial cost");
        cost_trace.push(cost);
        if (prev - cost).abs() <= cfg.tol * prev.max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(AlsOutcome {
        factors: slots.into_iter().map(|s| s.factor).collect(),
        iterations,
        converged,
        cost_trace,
    })
}

pub(crate) fn model_from_outcome(
    d: &DataTensor,
    ranks: &[usize],
    schedule: Schedule,
    engine_name: &str,
    kernels: Vec<KernelSpec>,
    step: &dyn ModeSubspace,
    outcome: AlsOutcome,
) -> Result<CausalModel> {
    let factors: Vec<ModeMatrix> = outcome
        .factors
        .iter()
        .enumerate()
        .map(|(k, f)| ModeMatrix::new(k + 1, f.clone()))
        .collect();
    let mut core = d.clone();
    for (k, f) in outcome.factors.iter().enumerate() {
        core = core.mode_multiply(&step.projector(f)?, k + 1)?;
    }
    let mean = match d.centering() {
        Some(c) => Array1::from_vec(c.to_vec()),
        None => Array1::zeros(d.dims()[0]),
    };
    let final_cost = *outcome.cost_trace.last().expect("nonempty trace");
    Ok(CausalModel {
        core,
        factors,
        mean,
        ranks: ranks.to_vec(),
        kernels,
        report: TrainingReport {
            schedule,
            engine: engine_name.to_string(),
            iterations: outcome.iterations,
            converged: outcome.converged,
            final_cost,
            cost_trace: outcome.cost_trace,
        },
    })
}

/// Trains an MPCA model by the M-mode SVD (Alg.-style alternating updates).
///
/// The data is expected to be centered; mode 0 is never factored — the model
/// keeps the extended core instead of a measurement basis.
pub fn m_mode_svd(d: &DataTensor, cfg: &TrainingConfig) -> Result<CausalModel> {
    let m = d.ndim().saturating_sub(1);
    let kernels = vec![KernelSpec::Linear; m];
    let driver = DriverConfig {
        ranks: &cfg.ranks,
        schedule: cfg.schedule,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
    };
    match &cfg.engine {
        SubspaceEngine::Svd => {
            let step = KernelEigenStep::new(&kernels);
            let outcome = run_als(d, &driver, &step)?;
            model_from_outcome(d, &cfg.ranks, cfg.schedule, "svd", kernels.clone(), &step, outcome)
        }
        SubspaceEngine::Hebbian(hcfg) => {
            let step = HebbianStep::new(hcfg.clone());
            let outcome = run_als(d, &driver, &step)?;
            model_from_outcome(d, &cfg.ranks, cfg.schedule, "hebbian", kernels.clone(), &step, outcome)
        }
    }
}

/// Full HOSVD including the measurement mode, for checking against the
/// literal algorithm output `𝒵` with `𝒯 = 𝒵 ×_0 U_0`.
pub fn full_hosvd(
    d: &DataTensor,
    ranks_with_mode0: &[usize],
    max_iters: usize,
    tol: f64,
) -> Result<(DataTensor, Vec<ModeMatrix>)> {
    if ranks_with_mode0.len() != d.ndim() {
        return Err(TfaError::InvalidArgument(format!(
            "expected {} ranks including mode 0, got {}",
            d.ndim(),
            ranks_with_mode0.len()
        )));
    }
    for (mode, (&r, &extent)) in ranks_with_mode0.iter().zip(d.dims()).enumerate() {
        if r == 0 || r > extent {
            return Err(TfaError::InvalidArgument(format!(
                "ranks[{mode}] = {r} is outside 1..={extent}"
            )));
        }
    }
    let specs = vec![KernelSpec::Linear; d.ndim()];
    let step = KernelEigenStep::new(&specs);
    let mut factors: Vec<Array2<f64>> = d
        .dims()
        .iter()
        .zip(ranks_with_mode0)
        .map(|(&extent, &r)| crate::linalg::identity_truncated(extent, r))
        .collect();
    let mut prev_cost = f64::INFINITY;
    for iteration in 0..max_iters {
        for mode in 0..d.ndim() {
            let mut x = d.clone();
            for (n, f) in factors.iter().enumerate() {
                if n != mode {
                    x = x.mode_multiply(&f.t().to_owned(), n)?;
                }
            }
            factors[mode] = step.compute(&x, mode, ranks_with_mode0[mode], iteration)?;
        }
        let mut z = d.clone();
        for (n, f) in factors.iter().enumerate() {
            z = z.mode_multiply(&f.t().to_owned(), n)?;
        }
        let mut recon = z;
        for (n, f) in factors.iter().enumerate() {
            recon = recon.mode_multiply(f, n)?;
        }
        let cost = d.sub(&recon)?.frobenius_norm();
        if (prev_cost - cost).abs() <= tol * prev_cost.max(1.0) {
            break;
        }
        prev_cost = cost;
    }
    let mut z = d.clone();
    for (n, f) in factors.iter().enumerate() {
        z = z.mode_multiply(&f.t().to_owned(), n)?;
    }
    let mode_matrices = factors
        .into_iter()
        .enumerate()
        .map(|(mode, f)| ModeMatrix::new(mode, f))
        .collect();
    Ok((z, mode_matrices))
}

// ---------------------------------------------------------------------------
// ALS state exposed for the per-schedule update formulas
// ---------------------------------------------------------------------------

/// Snapshot of an ALS iteration: the working tensors `X_m` from the previous
/// iteration and the factor sets at `t` and `t−1`.
#[derive(Debug, Clone)]
pub struct AlsState {
    pub data: DataTensor,
    /// `x[m−1]` is `X_m` as of iteration `t−1`.
    pub x: Vec<DataTensor>,
    pub current: Vec<ModeMatrix>,
    pub previous: Vec<ModeMatrix>,
    pub iteration: usize,
}

impl AlsState {
    /// Builds a state whose `X_m` tensors are the exact projections under the
    /// previous factors.
    pub fn new(
        data: DataTensor,
        previous: Vec<ModeMatrix>,
        current: Vec<ModeMatrix>,
        iteration: usize,
    ) -> Result<Self> {
        let m = data.ndim() - 1;
        if previous.len() != m || current.len() != m {
            return Err(TfaError::ShapeMismatch(format!(
                "expected {m} factors per iterate"
            )));
        }
        let mut x = Vec::with_capacity(m);
        for mode in 1..=m {
            let mut t = data.clone();
            for f in &previous {
                if f.mode != mode {
                    t = t.mode_multiply(&f.entries.t().to_owned(), f.mode)?;
                }
            }
            x.push(t);
        }
        Ok(AlsState { data, x, current, previous, iteration })
    }
}

/// Evaluates one schedule's update formula for `X_m`.
///
/// * parallel — full reprojection of the data under the previous factors;
/// * asynchronous — incremental correction `X_m(t−1) ×_n U_nᵀ(t)·U_n(t−1)`;
/// * sequential — chained `(X_{m−1} ×_{m−1} U_{m−1}ᵀ(t)) ×_m U_m(t−1)`.
///
/// The three agree (to roundoff) once the factors have converged; away from a
/// fixed point the incremental and chained forms are the paper's cheaper
/// approximations.
pub fn als_update_x(state: &AlsState, mode: usize, schedule: Schedule) -> Result<DataTensor> {
    let m = state.data.ndim() - 1;
    if mode == 0 || mode > m {
        return Err(TfaError::ModeOutOfRange { mode, modes: m + 1 });
    }
    let k = mode - 1;
    match schedule {
        Schedule::Parallel => {
            let mut t = state.data.clone();
            for f in &state.previous {
                if f.mode != mode {
                    t = t.mode_multiply(&f.entries.t().to_owned(), f.mode)?;
                }
            }
            Ok(t)
        }
        Schedule::Asynchronous => {
            let mut t = state.x[k].clone();
            for n in 1..=m {
                if n == mode {
                    continue;
                }
                let correction = state.current[n - 1]
                    .entries
                    .t()
                    .dot(&state.previous[n - 1].entries);
                t = t.mode_multiply(&correction, n)?;
            }
            Ok(t)
        }
        Schedule::Sequential => {
            if mode == 1 {
                let mut t = state.data.clone();
                for f in &state.previous {
                    if f.mode != 1 {
                        t = t.mode_multiply(&f.entries.t().to_owned(), f.mode)?;
                    }
                }
                return Ok(t);
            }
            let prev_mode = mode - 1;
            let chained = state.x[prev_mode - 1]
                .mode_multiply(&state.current[prev_mode - 1].entries.t().to_owned(), prev_mode)?;
            chained.mode_multiply(&state.previous[k].entries, mode)
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::linalg::orthonormalize_columns;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Exactly multilinear data `T ×_1 U_1 … ×_M U_M` from seeded random
    /// orthonormal factors; returns (data, core, factors).
    pub fn multilinear_data(
        i0: usize,
        extents: &[usize],
        ranks: &[usize],
        seed: u64,
    ) -> (DataTensor, DataTensor, Vec<Array2<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![i0];
        dims.extend_from_slice(ranks);
        let n: usize = dims.iter().product();
        let core_values: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let core = DataTensor::from_values(dims, core_values).unwrap();
        let mut factors = Vec::new();
        let mut data = core.clone();
        for (k, (&extent, &rank)) in extents.iter().zip(ranks).enumerate() {
            let raw = Array2::from_shape_fn((extent, rank), |_| rng.random::<f64>() * 2.0 - 1.0);
            let q = orthonormalize_columns(&raw);
            data = data.mode_multiply(&q, k + 1).unwrap();
            factors.push(q);
        }
        (data, core, factors)
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::multilinear_data;
    use super::*;
    use crate::linalg::{max_principal_angle, truncated_svd, SidePolicy};
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: &[usize], seed: u64) -> DataTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let values = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        DataTensor::from_values(dims.to_vec(), values).unwrap()
    }

    #[test]
    fn recovers_generating_subspaces_on_exact_data() {
        let (data, _, truth) = multilinear_data(8, &[5, 4], &[3, 2], 40);
        let cfg = TrainingConfig::new(vec![3, 2]);
        let model = m_mode_svd(&data, &cfg).unwrap();
        assert!(model.report.final_cost <= 1e-9);
        for (f, t) in model.factors.iter().zip(&truth) {
            assert!(max_principal_angle(&f.entries, t).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn full_rank_training_reconstructs_exactly() {
        let d = random_tensor(&[4, 3, 3], 41);
        let cfg = TrainingConfig::new(vec![3, 3]);
        let model = m_mode_svd(&d, &cfg).unwrap();
        assert!(model.report.final_cost <= 1e-10);
        assert!(cost_evaluate(&d, &model, &[]).unwrap() <= 1e-10);
    }

    #[test]
    fn single_mode_reduces_to_matrix_pca() {
        let d = random_tensor(&[6, 10], 42);
        let cfg = TrainingConfig::new(vec![3]);
        let model = m_mode_svd(&d, &cfg).unwrap();
        let direct = truncated_svd(&d.unfold(1).unwrap(), 3, SidePolicy::Auto).unwrap();
        assert!(max_principal_angle(&model.factors[0].entries, &direct.u).unwrap() <= 1e-8);
    }

    #[test]
    fn factors_stay_orthonormal() {
        let d = random_tensor(&[5, 4, 4], 43);
        let cfg = TrainingConfig::new(vec![2, 3]);
        let model = m_mode_svd(&d, &cfg).unwrap();
        for f in &model.factors {
            assert!(f.orthonormality_defect() <= 1e-8);
        }
    }

    #[test]
    fn rank_exceeding_extent_is_rejected() {
        let d = random_tensor(&[4, 3, 3], 44);
        let cfg = TrainingConfig::new(vec![4, 2]);
        let err = m_mode_svd(&d, &cfg).unwrap_err();
        assert!(err.to_string().contains("ranks[0]"));
    }

    #[test]
    fn schedules_reach_equal_cost_on_synthetic_data() {
        let (data, _, _) = multilinear_data(10, &[5, 4, 3], &[3, 2, 2], 45);
        let mut costs = Vec::new();
        for schedule in [Schedule::Sequential, Schedule::Parallel, Schedule::Asynchronous] {
            let cfg = TrainingConfig::new(vec![3, 2, 2]).with_schedule(schedule);
            let model = m_mode_svd(&data, &cfg).unwrap();
            assert!(model.report.converged);
            costs.push(model.report.final_cost);
        }
        for c in &costs {
            assert!((c - costs[0]).abs() <= 1e-6);
        }
    }

    #[test]
    fn sequential_cost_is_monotone_on_random_data() {
        let d = random_tensor(&[6, 5, 4], 46);
        let cfg = TrainingConfig::new(vec![2, 2]).with_max_iters(20);
        let model = m_mode_svd(&d, &cfg).unwrap();
        let trace = &model.report.cost_trace;
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "cost increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn identity_factors_make_core_equal_data() {
        let d = random_tensor(&[3, 2, 2], 47);
        let factors = vec![
            ModeMatrix::new(1, ndarray::Array2::eye(2)),
            ModeMatrix::new(2, ndarray::Array2::eye(2)),
        ];
        let core = compute_extended_core(&d, &factors, &CoreMethod::Direct).unwrap();
        assert_eq!(core.values(), d.values());
    }

    #[test]
    fn orthonormal_full_rank_core_inverts_synthesis() {
        let (data, _, truth) = multilinear_data(5, &[4, 3], &[4, 3], 48);
        let factors: Vec<ModeMatrix> = truth
            .iter()
            .enumerate()
            .map(|(k, f)| ModeMatrix::new(k + 1, f.clone()))
            .collect();
        let core = compute_extended_core(&data, &factors, &CoreMethod::Direct).unwrap();
        let mut recon = core;
        for f in &factors {
            recon = recon.mode_multiply(&f.entries, f.mode).unwrap();
        }
        for (a, b) in recon.values().iter().zip(data.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_core_cost_is_data_norm() {
        let d = random_tensor(&[4, 3, 2], 49);
        let cfg = TrainingConfig::new(vec![2, 2]);
        let mut model = m_mode_svd(&d, &cfg).unwrap();
        model.core = DataTensor::zeros(model.core.dims().to_vec()).unwrap();
        let cost = cost_evaluate(&d, &model, &[]).unwrap();
        assert_abs_diff_eq!(cost, d.frobenius_norm(), epsilon = 1e-12);
    }

    #[test]
    fn synthesize_matches_kronecker_form() {
        let (_, core, _) = multilinear_data(6, &[4, 3], &[2, 3], 50);
        let u1 = arr1(&[0.6, -0.8]);
        let u2 = arr1(&[0.2, 0.5, -0.7]);
        let direct = synthesize(&core, &[u1.clone(), u2.clone()]).unwrap();
        let u1m = u1.view().insert_axis(ndarray::Axis(1)).to_owned();
        let u2m = u2.view().insert_axis(ndarray::Axis(1)).to_owned();
        let kron = crate::tensor::kronecker(&u2m, &u1m);
        let via_kron = core.unfold(0).unwrap().dot(&kron);
        for (a, b) in direct.iter().zip(via_kron.column(0)) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn synthesize_is_linear_per_mode() {
        let (data, _, _) = multilinear_data(5, &[4, 3], &[2, 2], 51);
        let cfg = TrainingConfig::new(vec![2, 2]);
        let model = m_mode_svd(&data, &cfg).unwrap();
        let a = model.factors[0].representation(0);
        let b = model.factors[0].representation(1);
        let other = model.factors[1].representation(2);
        let mix = &a * 0.3 + &b * 0.7;
        let left = model.synthesize(&[mix, other.clone()]).unwrap();
        let ya = model.synthesize(&[a, other.clone()]).unwrap();
        let yb = model.synthesize(&[b, other]).unwrap();
        let expect = &ya * 0.3 + &yb * 0.7;
        for (x, y) in left.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_reps_synthesize_to_mean() {
        let (data, _, _) = multilinear_data(5, &[4, 3], &[2, 2], 52);
        let (centered, mean) = data.center_observations();
        let cfg = TrainingConfig::new(vec![2, 2]);
        let model = m_mode_svd(&centered, &cfg).unwrap();
        let out = model
            .synthesize(&[Array1::zeros(2), Array1::zeros(2)])
            .unwrap();
        for (x, y) in out.iter().zip(mean.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn training_rows_reproduce_observations() {
        let (data, _, _) = multilinear_data(6, &[3, 3], &[2, 2], 53);
        let cfg = TrainingConfig::new(vec![2, 2]);
        let model = m_mode_svd(&data, &cfg).unwrap();
        let obs = model.synthesize_from_rows(&[1, 2]).unwrap();
        // compare against the training fiber at (i_1, i_2) = (1, 2)
        let i0 = data.dims()[0];
        let base = (1 + 3 * 2) * i0;
        for (k, v) in obs.iter().enumerate() {
            assert_abs_diff_eq!(v, &data.values()[base + k], epsilon = 1e-8);
        }
    }

    #[test]
    fn als_update_first_iteration_identity_factors() {
        let d = random_tensor(&[3, 3, 3], 54);
        let eye = vec![
            ModeMatrix::new(1, ndarray::Array2::eye(3)),
            ModeMatrix::new(2, ndarray::Array2::eye(3)),
        ];
        let state = AlsState::new(d.clone(), eye.clone(), eye, 0).unwrap();
        let x1 = als_update_x(&state, 1, Schedule::Parallel).unwrap();
        assert_eq!(x1.values(), d.values());
    }

    #[test]
    fn async_update_is_noop_at_fixed_point() {
        let (data, _, _) = multilinear_data(6, &[4, 4], &[2, 2], 55);
        let cfg = TrainingConfig::new(vec![2, 2]);
        let model = m_mode_svd(&data, &cfg).unwrap();
        let factors = model.factors.clone();
        let state = AlsState::new(data, factors.clone(), factors, 1).unwrap();
        for mode in 1..=2 {
            let updated = als_update_x(&state, mode, Schedule::Asynchronous).unwrap();
            for (a, b) in updated.values().iter().zip(state.x[mode - 1].values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sequential_chain_matches_full_reprojection_on_multilinear_data() {
        let (data, _, truth) = multilinear_data(6, &[4, 3, 3], &[2, 2, 2], 56);
        let factors: Vec<ModeMatrix> = truth
            .iter()
            .enumerate()
            .map(|(k, f)| ModeMatrix::new(k + 1, f.clone()))
            .collect();
        let state = AlsState::new(data, factors.clone(), factors, 1).unwrap();
        for mode in 2..=3 {
            let chained = als_update_x(&state, mode, Schedule::Sequential).unwrap();
            let full = als_update_x(&state, mode, Schedule::Parallel).unwrap();
            for (a, b) in chained.values().iter().zip(full.values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn full_hosvd_relates_core_and_mode0_basis() {
        let d = random_tensor(&[4, 3, 3], 57);
        let (z, factors) = full_hosvd(&d, &[4, 3, 3], 50, 1e-10).unwrap();
        // T = Z ×_0 U_0 must reproduce D when multiplied out over all modes
        let t = z.mode_multiply(&factors[0].entries, 0).unwrap();
        let mut recon = t;
        for f in &factors[1..] {
            recon = recon.mode_multiply(&f.entries, f.mode).unwrap();
        }
        for (a, b) in recon.values().iter().zip(d.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }
}
