//! Dense tensor container and the multilinear primitives built on it.
//!
//! A [`DataTensor`] is an `(M+1)`-way array in a fixed linear layout with the
//! mode-0 index varying fastest. Mode 0 is the measurement mode (vectorized
//! observations); modes `1..=M` index causal factors. Unfolding orders the
//! remaining modes by increasing mode number with the lowest-numbered mode
//! varying fastest, which makes `unfold(·, 0)` a plain reinterpretation of the
//! value buffer and pins the Kronecker order `U_M ⊗ … ⊗ U_1` used in synthesis.

use ndarray::{Array1, Array2, ShapeBuilder};

use crate::error::{Result, TfaError};

/// Dense real tensor of vectorized observations.
///
/// `values[p]` holds the entry at multi-index `(i_0, …, i_M)` with
/// `p = i_0 + I_0·(i_1 + I_1·(i_2 + …))`. The optional `centering` vector is
/// the mode-0 mean subtracted from every observation fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
    centering: Option<Vec<f64>>,
}

/// Per-mode basis matrix; rows are the factor-value representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatrix {
    /// Mode this matrix factors (1-based for causal factors, 0 = measurement).
    pub mode: usize,
    /// `I_m × R̃_m` entries; columns orthonormal after MPCA-style training.
    pub entries: Array2<f64>,
}

impl ModeMatrix {
    pub fn new(mode: usize, entries: Array2<f64>) -> Self {
        ModeMatrix { mode, entries }
    }

    /// Number of columns `R̃_m`.
    pub fn rank(&self) -> usize {
        self.entries.ncols()
    }

    /// Mode extent `I_m`.
    pub fn extent(&self) -> usize {
        self.entries.nrows()
    }

    /// Row `i` as the representation of factor value `i`.
    pub fn representation(&self, i: usize) -> Array1<f64> {
        self.entries.row(i).to_owned()
    }

    /// `‖UᵀU − I‖_F`, the orthonormality defect of the columns.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.entries.t().dot(&self.entries);
        let r = gram.nrows();
        let mut sum = 0.0;
        for i in 0..r {
            for j in 0..r {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = gram[[i, j]] - target;
                sum += d * d;
            }
        }
        sum.sqrt()
    }
}

impl DataTensor {
    /// Builds a tensor from extents and values in layout order (mode 0 fastest).
    pub fn from_values(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(TfaError::InvalidArgument("tensor needs at least one mode".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(TfaError::InvalidArgument("every mode extent must be at least 1".into()));
        }
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(TfaError::ShapeMismatch(format!(
                "value buffer holds {} entries but dims {:?} require {}",
                values.len(),
                dims,
                expected
            )));
        }
        Ok(DataTensor { dims, values, centering: None })
    }

    /// All-zero tensor with the given extents.
    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        Self::from_values(dims, vec![0.0; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of modes including the measurement mode (`M + 1`).
    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn centering(&self) -> Option<&[f64]> {
        self.centering.as_deref()
    }

    pub(crate) fn set_centering(&mut self, mean: Option<Vec<f64>>) {
        self.centering = mean;
    }

    /// Stride of `mode` in the linear layout.
    fn stride(&self, mode: usize) -> usize {
        self.dims[..mode].iter().product()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.linear_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let p = self.linear_index(index);
        self.values[p] = value;
    }

    fn linear_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut p = 0;
        let mut stride = 1;
        for (i, &extent) in index.iter().zip(&self.dims) {
            debug_assert!(*i < extent);
            p += i * stride;
            stride *= extent;
        }
        p
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise difference `self − other`.
    pub fn sub(&self, other: &DataTensor) -> Result<DataTensor> {
        if self.dims != other.dims {
            return Err(TfaError::ShapeMismatch(format!(
                "cannot subtract dims {:?} from {:?}",
                other.dims, self.dims
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        DataTensor::from_values(self.dims.clone(), values)
    }

    pub fn add(&self, other: &DataTensor) -> Result<DataTensor> {
        if self.dims != other.dims {
            return Err(TfaError::ShapeMismatch(format!(
                "cannot add dims {:?} to {:?}",
                other.dims, self.dims
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        DataTensor::from_values(self.dims.clone(), values)
    }

    pub fn scale(&self, factor: f64) -> DataTensor {
        let values = self.values.iter().map(|v| v * factor).collect();
        DataTensor { dims: self.dims.clone(), values, centering: None }
    }

    /// Matrixizes the tensor along `mode`: shape `I_m × ∏_{n≠m} I_n`.
    ///
    /// Column `c` enumerates the remaining modes in increasing mode number,
    /// lowest varying fastest: `c = Σ_{k≠m} i_k · ∏_{l<k, l≠m} I_l`.
    pub fn unfold(&self, mode: usize) -> Result<Array2<f64>> {
        if mode >= self.dims.len() {
            return Err(TfaError::ModeOutOfRange { mode, modes: self.dims.len() });
        }
        let rows = self.dims[mode];
        let cols = self.values.len() / rows;
        if mode == 0 {
            // Mode 0 is fastest, so the buffer already is the column-major
            // I_0 × (rest) matrix.
            let mat = Array2::from_shape_vec((rows, cols).f(), self.values.clone())
                .expect("buffer length was validated at construction");
            return Ok(mat);
        }
        let stride = self.stride(mode);
        let outer = stride * rows;
        let mut out = Array2::zeros((rows, cols));
        for (p, &v) in self.values.iter().enumerate() {
            let row = (p / stride) % rows;
            let col = (p % stride) + (p / outer) * stride;
            out[[row, col]] = v;
        }
        Ok(out)
    }

    /// Inverse of [`unfold`](Self::unfold): rebuilds the tensor with extents `dims`.
    pub fn fold(mat: &Array2<f64>, mode: usize, dims: &[usize]) -> Result<DataTensor> {
        if mode >= dims.len() {
            return Err(TfaError::ModeOutOfRange { mode, modes: dims.len() });
        }
        let rows = dims[mode];
        let cols: usize = dims.iter().enumerate().filter(|&(k, _)| k != mode).map(|(_, &d)| d).product();
        if mat.nrows() != rows || mat.ncols() != cols {
            return Err(TfaError::ShapeMismatch(format!(
                "matrix {}×{} does not fold into dims {:?} along mode {}",
                mat.nrows(),
                mat.ncols(),
                dims,
                mode
            )));
        }
        let mut t = DataTensor::zeros(dims.to_vec())?;
        let stride = t.stride(mode);
        let outer = stride * rows;
        for ((row, col), &v) in mat.indexed_iter() {
            let p = (col % stride) + row * stride + (col / stride) * outer;
            t.values[p] = v;
        }
        Ok(t)
    }

    /// Mode-`m` product: every mode-`m` fiber is multiplied by `a`.
    ///
    /// Realized as `fold(a · unfold(t, m), m, dims')` where `dims'` replaces
    /// `I_m` with the row count of `a`.
    pub fn mode_multiply(&self, a: &Array2<f64>, mode: usize) -> Result<DataTensor> {
        if mode >= self.dims.len() {
            return Err(TfaError::ModeOutOfRange { mode, modes: self.dims.len() });
        }
        if a.ncols() != self.dims[mode] {
            return Err(TfaError::ShapeMismatch(format!(
                "matrix with {} columns cannot multiply mode {} of extent {}",
                a.ncols(),
                mode,
                self.dims[mode]
            )));
        }
        let unfolded = self.unfold(mode)?;
        let product = a.dot(&unfolded);
        let mut dims = self.dims.clone();
        dims[mode] = a.nrows();
        DataTensor::fold(&product, mode, &dims)
    }

    /// Contracts `mode` with a vector (the `×_m ûᵀ` product); the mode extent
    /// becomes 1.
    pub fn mode_contract(&self, v: &Array1<f64>, mode: usize) -> Result<DataTensor> {
        let row = v.view().insert_axis(ndarray::Axis(0)).to_owned();
        self.mode_multiply(&row, mode)
    }

    /// Centers the mode-0 fibers across all factor-index combinations.
    ///
    /// Returns the centered tensor (with the mean recorded in `centering`) and
    /// the mean vector itself.
    pub fn center_observations(&self) -> (DataTensor, Array1<f64>) {
        let i0 = self.dims[0];
        let count = self.values.len() / i0;
        let mut mean = vec![0.0; i0];
        for c in 0..count {
            let base = c * i0;
            for (i, m) in mean.iter_mut().enumerate() {
                *m += self.values[base + i];
            }
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
        let mut values = self.values.clone();
        for c in 0..count {
            let base = c * i0;
            for (i, m) in mean.iter().enumerate() {
                values[base + i] -= m;
            }
        }
        let centered = DataTensor {
            dims: self.dims.clone(),
            values,
            centering: Some(mean.clone()),
        };
        (centered, Array1::from_vec(mean))
    }

    /// Maximum absolute mode-0 fiber mean; 0 for perfectly centered data.
    pub fn centering_defect(&self) -> f64 {
        let i0 = self.dims[0];
        let count = self.values.len() / i0;
        let mut worst: f64 = 0.0;
        for i in 0..i0 {
            let mut sum = 0.0;
            for c in 0..count {
                sum += self.values[c * i0 + i];
            }
            worst = worst.max((sum / count as f64).abs());
        }
        worst
    }
}

/// Kronecker product `a ⊗ b`: block `(i, j)` equals `a[i, j]·b`.
pub fn kronecker(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let scale = a[[i, j]];
            for k in 0..rb {
                for l in 0..cb {
                    out[[i * rb + k, j * cb + l]] = scale * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Outer product `v_1 ∘ v_2 ∘ … ∘ v_M`: entry `(i_1, …, i_M) = ∏_m v_m[i_m]`.
pub fn outer_rank1(vectors: &[Array1<f64>]) -> Result<DataTensor> {
    if vectors.is_empty() {
        return Err(TfaError::InvalidArgument("outer product of zero vectors".into()));
    }
    if vectors.iter().any(|v| v.is_empty()) {
        return Err(TfaError::InvalidArgument("outer product with an empty vector".into()));
    }
    let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    let total: usize = dims.iter().product();
    let mut values = Vec::with_capacity(total);
    let mut index = vec![0usize; dims.len()];
    for _ in 0..total {
        let mut prod = 1.0;
        for (m, &i) in index.iter().enumerate() {
            prod *= vectors[m][i];
        }
        values.push(prod);
        // advance the multi-index, first mode fastest
        for (i, d) in index.iter_mut().zip(&dims) {
            *i += 1;
            if *i < *d {
                break;
            }
            *i = 0;
        }
    }
    DataTensor::from_values(dims, values)
}

/// Iterator over all multi-indices of `dims`, first mode fastest (layout order).
pub fn multi_indices(dims: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = dims.iter().product();
    let mut index = vec![0usize; dims.len()];
    let mut emitted = 0usize;
    std::iter::from_fn(move || {
        if emitted == total {
            return None;
        }
        let out = index.clone();
        emitted += 1;
        for (i, d) in index.iter_mut().zip(dims) {
            *i += 1;
            if *i < *d {
                break;
            }
            *i = 0;
        }
        Some(out)
    })
}
