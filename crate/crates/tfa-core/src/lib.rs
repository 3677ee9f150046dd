//! Multilinear (tensor) factor analysis toolkit.
//!
//! The forward pipeline factors a data tensor of vectorized, centered
//! observations into one basis per causal factor plus an extended core that
//! governs their interaction (M-mode SVD / MPCA, kernelized variants, Hebbian
//! subspace learners, and hierarchical block computation). The inverse
//! pipeline multilinearly projects new observations back into the causal
//! factor spaces, optionally through a gated ensemble of piecewise models.

pub mod error;
pub mod factorization;
pub mod hierarchy;
pub mod inverse;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod neural;
pub mod synth;
pub mod tensor;

pub use error::{Result, TfaError};
pub use factorization::{CausalModel, Schedule, SubspaceEngine, TrainingConfig};
pub use kernels::KernelSpec;
pub use tensor::{DataTensor, ModeMatrix};
