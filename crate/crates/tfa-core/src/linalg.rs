//! Truncated SVD via the smaller-side covariance trick, Moore–Penrose
//! pseudoinverse, and the block-SVD merge behind all hierarchical computation.
//!
//! The SVD is computed by eigen-decomposing whichever Gram matrix (`A·Aᵀ` or
//! `AᵀA`) is smaller and recovering the other side as `A·V·Σ⁺` / `Aᵀ·U·Σ⁺`.
//! The symmetric eigen-decomposition is an in-house cyclic Jacobi sweep: at
//! the matrix sizes this toolkit targets it is accurate to near machine
//! precision and fully deterministic, which the sign convention below turns
//! into bitwise-reproducible factors.

use ndarray::{s, Array1, Array2};

use crate::error::{Result, TfaError};

/// Relative cutoff under which singular values are treated as zero when
/// inverting.
pub const DEFAULT_PINV_RTOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Rank-`r` factorization `A ≈ U·diag(s)·Vᵀ` with `s` nonincreasing.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

impl TruncatedSvd {
    /// `U·diag(s)·Vᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = scale_columns(&self.u, &self.s);
        scaled.dot(&self.v.t())
    }
}

/// Which Gram matrix to eigen-decompose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SidePolicy {
    /// Pick the smaller dimension automatically.
    Auto,
    /// Decompose `A·Aᵀ`; right factors recovered as `Aᵀ·U·Σ⁺`.
    GramLeft,
    /// Decompose `AᵀA`; left factors recovered as `A·V·Σ⁺`.
    GramRight,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in nonincreasing order with matching eigenvector
/// columns. Ties keep the pre-sort (deterministic) order.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let fro = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if fro == 0.0 {
        return (Array1::zeros(n), v);
    }
    let stop = fro * 1e-15;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if (2.0 * off).sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= stop / (n as f64) {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    // avoid overflow in theta²; limit of the exact formula
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - sn * mkq;
                    m[[k, q]] = sn * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - sn * mqk;
                    m[[q, k]] = sn * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let vals = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vecs = Array2::zeros((n, n));
    for (out_col, &in_col) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, out_col]] = v[[row, in_col]];
        }
    }
    (vals, vecs)
}

/// Truncated SVD of `a` at rank `r`.
///
/// Sign convention: the largest-magnitude entry of every left singular vector
/// is positive (first such entry wins ties), so identical input yields
/// bitwise-identical factors.
pub fn truncated_svd(a: &Array2<f64>, r: usize, policy: SidePolicy) -> Result<TruncatedSvd> {
    let (n, p) = a.dim();
    ensure_finite(a, "truncated_svd input")?;
    if r == 0 || r > n.min(p) {
        return Err(TfaError::InvalidArgument(format!(
            "rank {} not in 1..={} for a {}×{} matrix",
            r,
            n.min(p),
            n,
            p
        )));
    }
    let side = match policy {
        SidePolicy::Auto => {
            if n <= p {
                SidePolicy::GramLeft
            } else {
                SidePolicy::GramRight
            }
        }
        other => other,
    };
    let (mut u, s, mut v) = match side {
        SidePolicy::GramLeft => {
            let gram = a.dot(&a.t());
            let (vals, vecs) = symmetric_eigen(&gram);
            let u = vecs.slice(s![.., ..r]).to_owned();
            let sv = singular_from_eigen(&vals, r);
            let v = recover_other_side(&a.t().to_owned(), &u, &sv);
            (u, sv, v)
        }
        SidePolicy::GramRight => {
            let gram = a.t().dot(a);
            let (vals, vecs) = symmetric_eigen(&gram);
            let v = vecs.slice(s![.., ..r]).to_owned();
            let sv = singular_from_eigen(&vals, r);
            let u = recover_other_side(a, &v, &sv);
            (u, sv, v)
        }
        SidePolicy::Auto => unreachable!(),
    };
    fix_column_signs(&mut u, Some(&mut v));
    Ok(TruncatedSvd { u, s, v })
}

fn singular_from_eigen(vals: &Array1<f64>, r: usize) -> Array1<f64> {
    Array1::from_iter(vals.iter().take(r).map(|&l| l.max(0.0).sqrt()))
}

/// Recovers the non-eigen side: column j is `aᵀ·u_j / s_j`, with exhausted
/// directions (zero singular values) completed to an orthonormal set.
fn recover_other_side(at: &Array2<f64>, basis: &Array2<f64>, s: &Array1<f64>) -> Array2<f64> {
    let rows = at.nrows();
    let r = basis.ncols();
    let mut out = Array2::zeros((rows, r));
    let cutoff = s.iter().cloned().fold(0.0f64, f64::max) * 1e-13;
    for j in 0..r {
        if s[j] > cutoff && s[j] > 0.0 {
            let col = at.dot(&basis.column(j)) / s[j];
            out.column_mut(j).assign(&col);
        } else {
            let col = complete_orthonormal_column(&out, j);
            out.column_mut(j).assign(&col);
        }
    }
    out
}

/// Deterministic fill-in: the canonical basis vector with the largest residual
/// after projecting out the first `filled` columns, re-orthogonalized twice.
fn complete_orthonormal_column(partial: &Array2<f64>, filled: usize) -> Array1<f64> {
    let rows = partial.nrows();
    let mut best_k = 0;
    let mut best_norm = -1.0;
    for k in 0..rows {
        let mut w = Array1::zeros(rows);
        w[k] = 1.0;
        for j in 0..filled {
            let col = partial.column(j);
            let proj = col.dot(&w);
            w = &w - &(&col * proj);
        }
        let norm = w.dot(&w).sqrt();
        if norm > best_norm {
            best_norm = norm;
            best_k = k;
        }
    }
    let mut w = Array1::zeros(rows);
    w[best_k] = 1.0;
    for _ in 0..2 {
        for j in 0..filled {
            let col = partial.column(j);
            let proj = col.dot(&w);
            w = &w - &(&col * proj);
        }
    }
    let norm = w.dot(&w).sqrt();
    if norm > 0.0 {
        w / norm
    } else {
        w
    }
}

/// Flips columns so the largest-magnitude entry of each `u` column is
/// positive; the paired `v` column flips with it.
pub fn fix_column_signs(u: &mut Array2<f64>, mut v: Option<&mut Array2<f64>>) {
    for j in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..u.nrows() {
            let a = u[[i, j]].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u[[best, j]] < 0.0 {
            for i in 0..u.nrows() {
                u[[i, j]] = -u[[i, j]];
            }
            if let Some(vm) = v.as_deref_mut() {
                for i in 0..vm.nrows() {
                    vm[[i, j]] = -vm[[i, j]];
                }
            }
        }
    }
}

/// Moore–Penrose pseudoinverse with the default relative tolerance.
pub fn pseudoinverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    pseudoinverse_with_tol(a, DEFAULT_PINV_RTOL)
}

/// Moore–Penrose pseudoinverse; singular values at or below
/// `rtol × σ_max` are treated as zero.
pub fn pseudoinverse_with_tol(a: &Array2<f64>, rtol: f64) -> Result<Array2<f64>> {
    ensure_finite(a, "pseudoinverse input")?;
    let (n, p) = a.dim();
    let full = n.min(p);
    let svd = truncated_svd(a, full, SidePolicy::Auto)?;
    let smax = svd.s.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = smax * rtol;
    let mut inv_s = Array1::zeros(full);
    for (j, &sv) in svd.s.iter().enumerate() {
        if sv > cutoff && sv > 0.0 {
            inv_s[j] = 1.0 / sv;
        }
    }
    let scaled = scale_columns(&svd.v, &inv_s);
    Ok(scaled.dot(&svd.u.t()))
}

/// One block of a vertically stacked matrix: `u` spans the block rows and
/// `sv = S·Vᵀ` carries its representation in shared column space.
#[derive(Debug, Clone)]
pub struct BlockFactor {
    pub u: Array2<f64>,
    pub sv: Array2<f64>,
    pub rows: std::ops::Range<usize>,
}

impl BlockFactor {
    /// Factors one data block at the given rank (`None` = full rank, exact).
    pub fn from_block(a: &Array2<f64>, rank: Option<usize>, row_start: usize) -> Result<BlockFactor> {
        let full = a.nrows().min(a.ncols());
        let r = rank.unwrap_or(full).min(full);
        let svd = truncated_svd(a, r, SidePolicy::Auto)?;
        let sv = scale_rows(&svd.v.t().to_owned(), &svd.s);
        Ok(BlockFactor { u: svd.u, sv, rows: row_start..row_start + a.nrows() })
    }
}

/// Merges per-block factors into the truncated SVD of the vertically stacked
/// matrix (balanced binary reduction; exact when no block was truncated).
///
/// Each pairwise merge SVDs the stacked `S·Vᵀ` blocks and rotates the block
/// bases by the full `W`, so all blocks end up sharing one `V`.
pub fn block_svd_merge(blocks: &[BlockFactor], r: usize) -> Result<TruncatedSvd> {
    if blocks.is_empty() {
        return Err(TfaError::InvalidArgument("block merge needs at least one block".into()));
    }
    let cols = blocks[0].sv.ncols();
    let mut expected_start = blocks[0].rows.start;
    for b in blocks {
        if b.sv.ncols() != cols {
            return Err(TfaError::ShapeMismatch(format!(
                "block column counts differ: {} vs {}",
                b.sv.ncols(),
                cols
            )));
        }
        if b.rows.start != expected_start {
            return Err(TfaError::ShapeMismatch(
                "block row ranges do not tile the stacked matrix".into(),
            ));
        }
        expected_start = b.rows.end;
    }
    let mut level: Vec<BlockFactor> = blocks.to_vec();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut iter = level.into_iter();
        while let Some(a) = iter.next() {
            match iter.next() {
                Some(b) => next.push(merge_pair(a, b)?),
                None => next.push(a),
            }
        }
        level = next;
    }
    let root = level.pop().expect("reduction leaves one node");
    finalize_block(root, r)
}

pub(crate) fn merge_pair(a: BlockFactor, b: BlockFactor) -> Result<BlockFactor> {
    let ra = a.sv.nrows();
    let rb = b.sv.nrows();
    let cols = a.sv.ncols();
    let mut stacked = Array2::zeros((ra + rb, cols));
    stacked.slice_mut(s![..ra, ..]).assign(&a.sv);
    stacked.slice_mut(s![ra.., ..]).assign(&b.sv);
    let rank = (ra + rb).min(cols);
    let svd = truncated_svd(&stacked, rank, SidePolicy::Auto)?;
    // u = diag(U_A, U_B) · W with the full rotation, not just its diagonal blocks
    let w_top = svd.u.slice(s![..ra, ..]).to_owned();
    let w_bot = svd.u.slice(s![ra.., ..]).to_owned();
    let rows_a = a.u.nrows();
    let rows_b = b.u.nrows();
    let mut u = Array2::zeros((rows_a + rows_b, rank));
    u.slice_mut(s![..rows_a, ..]).assign(&a.u.dot(&w_top));
    u.slice_mut(s![rows_a.., ..]).assign(&b.u.dot(&w_bot));
    let sv = scale_rows(&svd.v.t().to_owned(), &svd.s);
    Ok(BlockFactor { u, sv, rows: a.rows.start..b.rows.end })
}

pub(crate) fn finalize_block(root: BlockFactor, r: usize) -> Result<TruncatedSvd> {
    let avail = root.sv.nrows();
    if r > avail {
        return Err(TfaError::InvalidArgument(format!(
            "requested rank {} exceeds merged rank {}",
            r, avail
        )));
    }
    // sv = S·Vᵀ with V orthonormal, so row norms are the singular values.
    let mut s = Array1::zeros(r);
    let mut v = Array2::zeros((root.sv.ncols(), r));
    for j in 0..r {
        let row = root.sv.row(j);
        let norm = row.dot(&row).sqrt();
        s[j] = norm;
        if norm > 0.0 {
            v.column_mut(j).assign(&(&row / norm));
        } else {
            let col = complete_orthonormal_column(&v, j);
            v.column_mut(j).assign(&col);
        }
    }
    let mut u = root.u.slice(s![.., ..r]).to_owned();
    fix_column_signs(&mut u, Some(&mut v));
    Ok(TruncatedSvd { u, s, v })
}

/// Principal angles (radians, nondecreasing) between the column spans.
///
/// Uses the sine formulation `sin θ_i = σ_i((I − QaQaᵀ)·Qb)`, which stays
/// accurate for the near-zero angles the equivalence tests assert on (the
/// cosine route bottoms out near `√ε ≈ 1.5e-8`).
pub fn principal_angles(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array1<f64>> {
    if a.nrows() != b.nrows() {
        return Err(TfaError::ShapeMismatch(format!(
            "subspaces live in different ambient dimensions: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormalize_columns(a);
    let qb = orthonormalize_columns(b);
    let resid = &qb - &qa.dot(&qa.t().dot(&qb));
    let r = resid.nrows().min(resid.ncols());
    let svd = truncated_svd(&resid, r, SidePolicy::Auto)?;
    let mut angles: Vec<f64> = svd.s.iter().map(|&sn| sn.clamp(0.0, 1.0).asin()).collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(Array1::from_vec(angles))
}

/// Largest principal angle; 0 when the spans coincide.
pub fn max_principal_angle(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let angles = principal_angles(a, b)?;
    Ok(angles.iter().cloned().fold(0.0f64, f64::max))
}

/// Modified Gram–Schmidt with a second pass; assumes independent columns.
pub fn orthonormalize_columns(a: &Array2<f64>) -> Array2<f64> {
    let mut q = a.clone();
    let cols = q.ncols();
    for j in 0..cols {
        for _ in 0..2 {
            for k in 0..j {
                let proj = q.column(k).dot(&q.column(j));
                let prev = q.column(k).to_owned();
                let mut col = q.column_mut(j);
                col.scaled_add(-proj, &prev);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if norm > 0.0 {
            q.column_mut(j).mapv_inplace(|x| x / norm);
        }
    }
    q
}

/// First `rank` columns of the `extent × extent` identity (ALS initialization).
pub fn identity_truncated(extent: usize, rank: usize) -> Array2<f64> {
    let mut m = Array2::zeros((extent, rank));
    for j in 0..rank.min(extent) {
        m[[j, j]] = 1.0;
    }
    m
}

pub(crate) fn scale_columns(a: &Array2<f64>, s: &Array1<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for (j, &f) in s.iter().enumerate() {
        out.column_mut(j).mapv_inplace(|x| x * f);
    }
    out
}

pub(crate) fn scale_rows(a: &Array2<f64>, s: &Array1<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for (i, &f) in s.iter().enumerate() {
        out.row_mut(i).mapv_inplace(|x| x * f);
    }
    out
}

pub(crate) fn ensure_finite(a: &Array2<f64>, what: &str) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(TfaError::NonFinite(what.into()));
    }
    Ok(())
}
