//! Constrained cluster-based PCA, incremental M-mode Block SVD over a merge
//! tree, and part-based permutation/segmentation.
//!
//! A cluster is the set of observations with every causal factor fixed but
//! one; mode `m` has `N_m = ∏_{n≠m, n≥1} I_n` of them. Because the unfolding
//! orders columns measurement-fastest, each cluster occupies a contiguous
//! column block, so the hierarchical paths operate on plain column ranges and
//! reproduce the direct computation exactly when nothing is truncated.

use std::sync::Mutex;
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;

use crate::error::{Result, TfaError};
use crate::factorization::{
    model_from_outcome, run_als, CausalModel, DriverConfig, ModeSubspace, SubspaceEngine,
    TrainingConfig,
};
use crate::kernels::KernelSpec;
use crate::linalg::{
    finalize_block, merge_pair, scale_columns, truncated_svd, BlockFactor, SidePolicy,
    TruncatedSvd,
};
use crate::neural::hebbian_subspace_with_scales;
use crate::tensor::{multi_indices, DataTensor};

/// Numbering of the clusters of one mode: a bijection between co-indices
/// `(i_1, …, i_{m−1}, i_{m+1}, …, i_M)` and `0..N_m`, remaining modes in
/// increasing order with the lowest varying fastest.
#[derive(Debug, Clone)]
pub struct ClusterIndex {
    pub mode: usize,
    co_extents: Vec<usize>,
}

impl ClusterIndex {
    pub fn new(dims: &[usize], mode: usize) -> Result<Self> {
        if mode == 0 {
            return Err(TfaError::InvalidArgument(
                "mode 0 is the measurement mode and has no clusters".into(),
            ));
        }
        if mode >= dims.len() {
            return Err(TfaError::ModeOutOfRange { mode, modes: dims.len() });
        }
        let co_extents = dims
            .iter()
            .enumerate()
            .filter(|&(n, _)| n != 0 && n != mode)
            .map(|(_, &d)| d)
            .collect();
        Ok(ClusterIndex { mode, co_extents })
    }

    pub fn cluster_count(&self) -> usize {
        self.co_extents.iter().product()
    }

    pub fn number(&self, co_index: &[usize]) -> usize {
        let mut n = 0;
        let mut stride = 1;
        for (i, extent) in co_index.iter().zip(&self.co_extents) {
            n += i * stride;
            stride *= extent;
        }
        n
    }

    pub fn co_index(&self, mut n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.co_extents.len());
        for &extent in &self.co_extents {
            out.push(n % extent);
            n /= extent;
        }
        out
    }
}

/// Splits the tensor into its `N_m` cluster matrices, each `I_0 × I_m`,
/// ordered by the cluster numbering.
pub fn cluster_matrices(d: &DataTensor, mode: usize) -> Result<Vec<Array2<f64>>> {
    let index = ClusterIndex::new(d.dims(), mode)?;
    let unfolded = d.unfold(mode)?;
    let i0 = d.dims()[0];
    let count = index.cluster_count();
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        // cluster n is the contiguous column block [n·I_0, (n+1)·I_0)
        let block = unfolded.slice(s![.., n * i0..(n + 1) * i0]);
        out.push(block.t().to_owned());
    }
    Ok(out)
}

/// Result of a constrained cluster-based PCA: one shared basis plus the
/// per-cluster rotations that align every cluster's representation with it.
#[derive(Debug, Clone)]
pub struct ClusterPca {
    /// Shared mode basis `U_m`.
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    /// Per-cluster rotation blocks `W^{(n)}`.
    pub rotations: Vec<Array2<f64>>,
    /// Per-cluster right bases `V^{(n)}` from the individual PCAs.
    pub bases: Vec<Array2<f64>>,
}

/// Concurrent per-cluster PCAs rotated so the mode representation is
/// cluster-invariant: cluster `n` satisfies
/// `D^{(n)} ≈ U·diag(s)·(V^{(n)}·W^{(n)})ᵀ`.
///
/// Clusters are `I_m × P_n` (mode-m matrixized) and share their row count.
pub fn constrained_cluster_pca(clusters: &[Array2<f64>], rank: usize) -> Result<ClusterPca> {
    if clusters.is_empty() {
        return Err(TfaError::InvalidArgument("no clusters given".into()));
    }
    let rows = clusters[0].nrows();
    for c in clusters {
        if c.nrows() != rows {
            return Err(TfaError::ShapeMismatch(format!(
                "cluster row counts differ: {} vs {}",
                c.nrows(),
                rows
            )));
        }
    }
    let per_cluster: Vec<TruncatedSvd> = clusters
        .par_iter()
        .map(|c| truncated_svd(c, c.nrows().min(c.ncols()), SidePolicy::Auto))
        .collect::<Result<_>>()?;
    let total_rank: usize = per_cluster.iter().map(|svd| svd.s.len()).sum();
    if rank > rows.min(total_rank) {
        return Err(TfaError::InvalidArgument(format!(
            "rank {} exceeds the shared dimension {}",
            rank,
            rows.min(total_rank)
        )));
    }
    let mut stacked = Array2::zeros((rows, total_rank));
    let mut offset = 0;
    for svd in &per_cluster {
        let cols = svd.s.len();
        stacked
            .slice_mut(s![.., offset..offset + cols])
            .assign(&scale_columns(&svd.u, &svd.s));
        offset += cols;
    }
    let merged = truncated_svd(&stacked, rank, SidePolicy::Auto)?;
    let mut rotations = Vec::with_capacity(per_cluster.len());
    let mut bases = Vec::with_capacity(per_cluster.len());
    let mut offset = 0;
    for svd in per_cluster {
        let cols = svd.s.len();
        rotations.push(merged.v.slice(s![offset..offset + cols, ..]).to_owned());
        bases.push(svd.v);
        offset += cols;
    }
    Ok(ClusterPca { u: merged.u, s: merged.s, rotations, bases })
}

/// Per-node truncation policy inside the merge tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRank {
    /// No truncation anywhere: the hierarchy is exactly the direct SVD.
    Full,
    /// Keep `final rank + margin` directions per node.
    Margin(usize),
}

impl NodeRank {
    fn cap(&self, final_rank: usize, available: usize) -> usize {
        match self {
            NodeRank::Full => available,
            NodeRank::Margin(margin) => (final_rank + margin).min(available),
        }
    }
}

/// Tree shape and leaf grouping for the hierarchical trainers.
#[derive(Debug, Clone)]
pub struct HierarchyConfig {
    /// Clusters (or parts) per leaf.
    pub leaf_size: usize,
    pub node_rank: NodeRank,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig { leaf_size: 1, node_rank: NodeRank::Margin(2) }
    }
}

/// One analyzed tree node: leaves sit at level 0, each merge round adds one.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NodeRecord {
    pub iteration: usize,
    pub mode: usize,
    pub level: usize,
    pub index: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub micros: u128,
}

/// Per-node cost log, recorded so the merge-depth and cost claims can be
/// examined rather than assumed.
#[derive(Debug, Clone, Default)]
pub struct HierarchyTrace {
    pub records: Vec<NodeRecord>,
}

impl HierarchyTrace {
    pub fn node_count(&self) -> usize {
        self.records.len()
    }

    /// Greatest merge level seen for a mode in one iteration.
    pub fn max_level(&self, iteration: usize, mode: usize) -> usize {
        self.records
            .iter()
            .filter(|r| r.iteration == iteration && r.mode == mode)
            .map(|r| r.level)
            .max()
            .unwrap_or(0)
    }

    pub fn leaf_count(&self, iteration: usize, mode: usize) -> usize {
        self.records
            .iter()
            .filter(|r| r.iteration == iteration && r.mode == mode && r.level == 0)
            .count()
    }
}

/// Engine for analyzing each leaf block (merges stay closed-form).
#[derive(Clone)]
enum LeafEngine {
    Svd,
    Hebbian(crate::neural::HebbianConfig),
}

impl LeafEngine {
    fn from_training(engine: &SubspaceEngine) -> Self {
        match engine {
            SubspaceEngine::Svd => LeafEngine::Svd,
            SubspaceEngine::Hebbian(cfg) => LeafEngine::Hebbian(cfg.clone()),
        }
    }

    /// Column-flavor leaf factorization: `(U, s)` of a wide `I_m × P` block.
    fn factor_columns(&self, block: &Array2<f64>, cap: usize) -> Result<(Array2<f64>, Array1<f64>)> {
        match self {
            LeafEngine::Svd => {
                let svd = truncated_svd(block, cap, SidePolicy::GramLeft)?;
                Ok((svd.u, svd.s))
            }
            LeafEngine::Hebbian(cfg) => {
                let (u, scales) = hebbian_subspace_with_scales(block, cap, cfg)?;
                Ok((crate::linalg::orthonormalize_columns(&u), scales))
            }
        }
    }

    /// Row-flavor leaf factorization for the part-based (stacked) blocks.
    fn factor_rows(&self, block: &Array2<f64>, cap: Option<usize>, row_start: usize) -> Result<BlockFactor> {
        match self {
            LeafEngine::Svd => BlockFactor::from_block(block, cap, row_start),
            LeafEngine::Hebbian(cfg) => {
                let full = block.nrows().min(block.ncols());
                let r = cap.unwrap_or(full).min(full);
                let (u, _) = hebbian_subspace_with_scales(block, r, cfg)?;
                let u = crate::linalg::orthonormalize_columns(&u);
                let sv = u.t().dot(block);
                Ok(BlockFactor { u, sv, rows: row_start..row_start + block.nrows() })
            }
        }
    }
}

struct TraceSink {
    records: Mutex<Vec<NodeRecord>>,
}

impl TraceSink {
    fn new() -> Self {
        TraceSink { records: Mutex::new(Vec::new()) }
    }

    fn push(&self, record: NodeRecord) {
        self.records.lock().expect("trace poisoned").push(record);
    }

    fn into_trace(self) -> HierarchyTrace {
        let mut records = self.records.into_inner().expect("trace poisoned");
        records.sort_by_key(|r| (r.iteration, r.mode, r.level, r.index));
        HierarchyTrace { records }
    }
}

/// ALS mode step that computes `U_m` through a balanced binary merge tree
/// over the mode's cluster matrices.
struct ClusterTreeStep {
    leaf_size: usize,
    node_rank: NodeRank,
    engine: LeafEngine,
    trace: TraceSink,
}

impl ModeSubspace for ClusterTreeStep {
    fn compute(&self, x_m: &DataTensor, mode: usize, rank: usize, iteration: usize) -> Result<Array2<f64>> {
        let unfolded = x_m.unfold(mode)?;
        let i0 = x_m.dims()[0];
        let n_clusters = unfolded.ncols() / i0;
        if self.leaf_size == 0 {
            return Err(TfaError::InvalidArgument("leaf size must be at least 1".into()));
        }
        if self.leaf_size > n_clusters {
            return Err(TfaError::InvalidArgument(format!(
                "leaf size {} is larger than the cluster count {} of mode {}",
                self.leaf_size, n_clusters, mode
            )));
        }
        let leaf_cols = self.leaf_size * i0;
        let ranges: Vec<(usize, usize)> = (0..unfolded.ncols())
            .step_by(leaf_cols)
            .map(|start| (start, (start + leaf_cols).min(unfolded.ncols())))
            .collect();
        // leaves analyzed concurrently, merged level by level
        let mut level: Vec<(Array2<f64>, Array1<f64>)> = ranges
            .par_iter()
            .enumerate()
            .map(|(index, &(start, end))| {
                let clock = Instant::now();
                let block = unfolded.slice(s![.., start..end]).to_owned();
                let cap = self.node_rank.cap(rank, block.nrows().min(block.ncols()));
                let out = self.engine.factor_columns(&block, cap)?;
                self.trace.push(NodeRecord {
                    iteration,
                    mode,
                    level: 0,
                    index,
                    rows: block.nrows(),
                    cols: block.ncols(),
                    rank: cap,
                    micros: clock.elapsed().as_micros(),
                });
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut depth = 0;
        while level.len() > 1 {
            depth += 1;
            let pairs: Vec<Vec<(Array2<f64>, Array1<f64>)>> =
                level.chunks(2).map(|c| c.to_vec()).collect();
            level = pairs
                .into_par_iter()
                .enumerate()
                .map(|(index, mut pair)| {
                    if pair.len() == 1 {
                        return Ok(pair.pop().expect("odd node carried up"));
                    }
                    let clock = Instant::now();
                    let (ua, sa) = &pair[0];
                    let (ub, sb) = &pair[1];
                    let mut stacked = Array2::zeros((ua.nrows(), sa.len() + sb.len()));
                    stacked.slice_mut(s![.., ..sa.len()]).assign(&scale_columns(ua, sa));
                    stacked.slice_mut(s![.., sa.len()..]).assign(&scale_columns(ub, sb));
                    let cap = self
                        .node_rank
                        .cap(rank, stacked.nrows().min(stacked.ncols()));
                    let svd = truncated_svd(&stacked, cap, SidePolicy::GramLeft)?;
                    self.trace.push(NodeRecord {
                        iteration,
                        mode,
                        level: depth,
                        index,
                        rows: stacked.nrows(),
                        cols: stacked.ncols(),
                        rank: cap,
                        micros: clock.elapsed().as_micros(),
                    });
                    Ok((svd.u, svd.s))
                })
                .collect::<Result<_>>()?;
        }
        let (u, _) = level.pop().expect("reduction leaves one node");
        if u.ncols() < rank {
            return Err(TfaError::InvalidArgument(format!(
                "per-node truncation left only {} directions (need {})",
                u.ncols(),
                rank
            )));
        }
        Ok(u.slice(s![.., ..rank]).to_owned())
    }

    fn name(&self) -> &'static str {
        "block-tree"
    }
}

/// M-mode SVD whose per-mode SVD step runs over a block tree of the mode's
/// clusters. With `NodeRank::Full` the result matches [`m_mode_svd`]
/// exactly; the returned trace records per-node dimensions and wall time.
///
/// [`m_mode_svd`]: crate::factorization::m_mode_svd
pub fn incremental_block_m_mode_svd(
    d: &DataTensor,
    cfg: &TrainingConfig,
    hier: &HierarchyConfig,
) -> Result<(CausalModel, HierarchyTrace)> {
    let step = ClusterTreeStep {
        leaf_size: hier.leaf_size,
        node_rank: hier.node_rank,
        engine: LeafEngine::from_training(&cfg.engine),
        trace: TraceSink::new(),
    };
    let driver = DriverConfig {
        ranks: &cfg.ranks,
        schedule: cfg.schedule,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
    };
    let outcome = run_als(d, &driver, &step)?;
    let kernels = vec![KernelSpec::Linear; cfg.ranks.len()];
    let model = model_from_outcome(d, &cfg.ranks, cfg.schedule, "block-tree", kernels, &step, outcome)?;
    Ok((model, step.trace.into_trace()))
}

// ---------------------------------------------------------------------------
// Part-based permutation / segmentation
// ---------------------------------------------------------------------------

/// Measurement permutation and hard part assignment.
///
/// `perm[i] = j` reads "permuted row `i` takes original measurement `j`";
/// `part_of` assigns post-permutation positions to parts (`None` = filtered
/// out). Matches the `H_m·P·D_[m]ᵀ` composition order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartSegmentation {
    pub perm: Vec<usize>,
    pub part_of: Vec<Option<usize>>,
    pub part_count: usize,
}

impl PartSegmentation {
    /// Identity permutation with a single part covering all measurements.
    pub fn identity(measurements: usize) -> Self {
        PartSegmentation {
            perm: (0..measurements).collect(),
            part_of: vec![Some(0); measurements],
            part_count: 1,
        }
    }

    pub fn validate(&self, measurements: usize) -> Result<()> {
        if self.perm.len() != measurements || self.part_of.len() != measurements {
            return Err(TfaError::ShapeMismatch(format!(
                "segmentation sized for {} measurements, data has {}",
                self.perm.len(),
                measurements
            )));
        }
        let mut seen = vec![false; measurements];
        for &j in &self.perm {
            if j >= measurements || seen[j] {
                return Err(TfaError::InvalidArgument(
                    "permutation is not a bijection over the measurements".into(),
                ));
            }
            seen[j] = true;
        }
        if self.part_count == 0 {
            return Err(TfaError::InvalidArgument("at least one part is required".into()));
        }
        let mut sizes = vec![0usize; self.part_count];
        for assigned in self.part_of.iter().flatten() {
            if *assigned >= self.part_count {
                return Err(TfaError::InvalidArgument(format!(
                    "part id {} out of range 0..{}",
                    assigned, self.part_count
                )));
            }
            sizes[*assigned] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(TfaError::InvalidArgument(format!("part {empty} is empty")));
        }
        Ok(())
    }

    /// Post-permutation positions of each part, ascending.
    fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.part_count];
        for (pos, assigned) in self.part_of.iter().enumerate() {
            if let Some(p) = assigned {
                members[*p].push(pos);
            }
        }
        members
    }
}

/// Applies `H_m·P` to `D_[m]ᵀ`: permutes the measurement rows and splits them
/// into per-part blocks (rows keep the co-index-major order of the unfolding,
/// so identity inputs reproduce `D_[m]ᵀ` verbatim).
pub fn part_based_reorder(
    d: &DataTensor,
    seg: &PartSegmentation,
    mode: usize,
) -> Result<Vec<Array2<f64>>> {
    if mode == 0 || mode >= d.ndim() {
        return Err(TfaError::ModeOutOfRange { mode, modes: d.ndim() });
    }
    let i0 = d.dims()[0];
    seg.validate(i0)?;
    let unfolded = d.unfold(mode)?; // I_m × (I_0·N), columns (i_0 fast, co asc)
    let cols = unfolded.ncols();
    let co_count = cols / i0;
    let members = seg.members();
    let mut blocks = Vec::with_capacity(seg.part_count);
    for part in &members {
        let mut block = Array2::zeros((part.len() * co_count, d.dims()[mode]));
        for (row_out, idx) in (0..co_count)
            .flat_map(|c| part.iter().map(move |&pos| (c, pos)))
            .enumerate()
        {
            let (c, pos) = idx;
            let source_col = c * i0 + seg.perm[pos];
            block.row_mut(row_out).assign(&unfolded.column(source_col));
        }
        blocks.push(block);
    }
    Ok(blocks)
}

/// ALS mode step: per-part factorization of the permuted `X_[m]ᵀ` row blocks
/// merged by the block-SVD identity; `U_m` is the shared right basis.
struct PartTreeStep<'a> {
    segs: &'a [PartSegmentation],
    node_rank: NodeRank,
    engine: LeafEngine,
    trace: TraceSink,
}

impl PartTreeStep<'_> {
    fn truncate(&self, mut bf: BlockFactor, rank: usize) -> BlockFactor {
        let cap = self.node_rank.cap(rank, bf.sv.nrows());
        if cap < bf.sv.nrows() {
            bf.u = bf.u.slice(s![.., ..cap]).to_owned();
            bf.sv = bf.sv.slice(s![..cap, ..]).to_owned();
        }
        bf
    }
}

impl ModeSubspace for PartTreeStep<'_> {
    fn compute(&self, x_m: &DataTensor, mode: usize, rank: usize, iteration: usize) -> Result<Array2<f64>> {
        let seg = &self.segs[mode - 1];
        let blocks = part_based_reorder(x_m, seg, mode)?;
        let mut row_start = 0;
        let mut level: Vec<BlockFactor> = Vec::with_capacity(blocks.len());
        for (index, block) in blocks.iter().enumerate() {
            let clock = Instant::now();
            let cap = match self.node_rank {
                NodeRank::Full => None,
                NodeRank::Margin(margin) => Some(rank + margin),
            };
            let bf = self.engine.factor_rows(block, cap, row_start)?;
            self.trace.push(NodeRecord {
                iteration,
                mode,
                level: 0,
                index,
                rows: block.nrows(),
                cols: block.ncols(),
                rank: bf.sv.nrows(),
                micros: clock.elapsed().as_micros(),
            });
            row_start += block.nrows();
            level.push(bf);
        }
        let mut depth = 0;
        while level.len() > 1 {
            depth += 1;
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            let mut iter = level.into_iter();
            let mut index = 0;
            while let Some(a) = iter.next() {
                match iter.next() {
                    Some(b) => {
                        let clock = Instant::now();
                        let rows = a.sv.nrows() + b.sv.nrows();
                        let cols = a.sv.ncols();
                        let merged = self.truncate(merge_pair(a, b)?, rank);
                        self.trace.push(NodeRecord {
                            iteration,
                            mode,
                            level: depth,
                            index,
                            rows,
                            cols,
                            rank: merged.sv.nrows(),
                            micros: clock.elapsed().as_micros(),
                        });
                        next.push(merged);
                    }
                    None => next.push(a),
                }
                index += 1;
            }
            level = next;
        }
        let root = level.pop().expect("reduction leaves one node");
        if root.sv.nrows() < rank {
            return Err(TfaError::InvalidArgument(format!(
                "per-node truncation left only {} directions (need {})",
                root.sv.nrows(),
                rank
            )));
        }
        // the stacked matrix is X_[m]ᵀ (rows permuted), so the shared right
        // basis is the mode factor
        let svd = finalize_block(root, rank)?;
        let mut u = svd.v;
        crate::linalg::fix_column_signs(&mut u, None);
        Ok(u)
    }

    fn name(&self) -> &'static str {
        "part-tree"
    }
}

/// M-mode SVD trained through part-based hierarchies: one segmentation per
/// causal mode. With `NodeRank::Full` and full-coverage segments the model
/// matches the whole-data computation.
pub fn part_based_m_mode_svd(
    d: &DataTensor,
    cfg: &TrainingConfig,
    segs: &[PartSegmentation],
    node_rank: NodeRank,
) -> Result<(CausalModel, HierarchyTrace)> {
    let m = d.ndim().saturating_sub(1);
    if segs.len() != m {
        return Err(TfaError::InvalidArgument(format!(
            "{} segmentations for {} causal modes",
            segs.len(),
            m
        )));
    }
    for seg in segs {
        seg.validate(d.dims()[0])?;
    }
    let step = PartTreeStep {
        segs,
        node_rank,
        engine: LeafEngine::from_training(&cfg.engine),
        trace: TraceSink::new(),
    };
    let driver = DriverConfig {
        ranks: &cfg.ranks,
        schedule: cfg.schedule,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
    };
    let outcome = run_als(d, &driver, &step)?;
    let kernels = vec![KernelSpec::Linear; cfg.ranks.len()];
    let model = model_from_outcome(d, &cfg.ranks, cfg.schedule, "part-tree", kernels, &step, outcome)?;
    Ok((model, step.trace.into_trace()))
}

/// Exhaustive check that the cluster numbering is a bijection (test helper,
/// also used by the acceptance suite).
pub fn cluster_numbering_is_bijection(dims: &[usize], mode: usize) -> Result<bool> {
    let index = ClusterIndex::new(dims, mode)?;
    let count = index.cluster_count();
    let mut seen = vec![false; count];
    let co_extents: Vec<usize> = dims
        .iter()
        .enumerate()
        .filter(|&(n, _)| n != 0 && n != mode)
        .map(|(_, &d)| d)
        .collect();
    for co in multi_indices(&co_extents) {
        let n = index.number(&co);
        if n >= count || seen[n] || index.co_index(n) != co {
            return Ok(false);
        }
        seen[n] = true;
    }
    Ok(seen.iter().all(|&s| s))
}
