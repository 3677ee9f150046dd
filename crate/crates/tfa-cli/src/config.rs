//! Config-file schemas and flag parsing. Every file is schema-validated up
//! front; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use tfa_core::error::{Result, TfaError};
use tfa_core::kernels::KernelSpec;
use tfa_core::neural::HebbianConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMethod {
    /// Plain M-mode SVD / MPCA.
    #[default]
    Mpca,
    /// Kernelized multilinear PCA.
    Kmpca,
    /// Kernelized multilinear ICA (kurtosis rotation each sweep).
    Kmica,
    /// Incremental M-mode Block SVD over a cluster tree.
    Block,
    /// Part-based hierarchy from segmentation files.
    Parts,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyFileConfig {
    pub leaf_size: usize,
    /// Oversampling margin on per-node ranks; absent means no truncation.
    #[serde(default)]
    pub margin: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationFileConfig {
    /// CSV with `measurement_index,part_id` rows.
    pub segmentation: String,
    /// CSV with `from_index,to_index` rows; identity when absent.
    #[serde(default)]
    pub permutation: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfigFile {
    /// Path to the `.mten` training tensor.
    pub input: String,
    pub ranks: Vec<usize>,
    #[serde(default)]
    pub method: TrainMethod,
    #[serde(default)]
    pub schedule: Option<String>,
    #[serde(default)]
    pub engine: Option<String>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Per-mode kernels for the kernelized methods.
    #[serde(default)]
    pub kernels: Option<Vec<KernelSpec>>,
    #[serde(default)]
    pub hebbian: Option<HebbianConfig>,
    #[serde(default)]
    pub hierarchy: Option<HierarchyFileConfig>,
    /// One entry per causal mode for the part-based method.
    #[serde(default)]
    pub segmentation: Option<Vec<SegmentationFileConfig>>,
    /// Center the input before training (default true; idempotent).
    #[serde(default)]
    pub center: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRunConfig {
    pub label: String,
    /// Absent = flat (direct) training; present = cluster-tree leaf size.
    #[serde(default)]
    pub leaf_size: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfigFile {
    pub input: String,
    pub ranks: Vec<usize>,
    #[serde(default)]
    pub runs: Vec<BenchRunConfig>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

/// Parses a per-mode kernel override like `2=rbf:sigma=1.0`.
pub fn parse_kernel_flag(flag: &str) -> Result<(usize, KernelSpec)> {
    let (mode_str, rest) = flag
        .split_once('=')
        .ok_or_else(|| TfaError::InvalidArgument(format!("kernel flag '{flag}' needs m=kind")))?;
    let mode: usize = mode_str
        .trim()
        .parse()
        .map_err(|_| TfaError::InvalidArgument(format!("bad mode in kernel flag '{flag}'")))?;
    if mode == 0 {
        return Err(TfaError::InvalidArgument(
            "mode 0 is the measurement mode and takes no kernel".into(),
        ));
    }
    let mut pieces = rest.split(':');
    let kind = pieces.next().unwrap_or("").trim();
    let mut params = std::collections::BTreeMap::new();
    for piece in pieces {
        let (key, value) = piece.split_once('=').ok_or_else(|| {
            TfaError::InvalidArgument(format!("kernel parameter '{piece}' needs key=value"))
        })?;
        let value: f64 = value.trim().parse().map_err(|_| {
            TfaError::InvalidArgument(format!("bad number in kernel parameter '{piece}'"))
        })?;
        params.insert(key.trim().to_string(), value);
    }
    let take = |params: &std::collections::BTreeMap<String, f64>, key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| TfaError::InvalidArgument(format!("kernel '{kind}' needs {key}=…")))
    };
    let spec = match kind {
        "linear" => KernelSpec::Linear,
        "poly" | "polynomial-homogeneous" => {
            KernelSpec::PolynomialHomogeneous { degree: take(&params, "degree")? as u32 }
        }
        "poly-affine" | "polynomial-affine" => {
            KernelSpec::PolynomialAffine { degree: take(&params, "degree")? as u32 }
        }
        "sigmoid" => KernelSpec::Sigmoid { alpha: take(&params, "alpha")?, beta: take(&params, "beta")? },
        "rbf" => KernelSpec::Rbf { sigma: take(&params, "sigma")? },
        other => {
            return Err(TfaError::InvalidArgument(format!(
                "unknown kernel kind '{other}' (linear|poly|poly-affine|sigmoid|rbf)"
            )))
        }
    };
    spec.validate()?;
    Ok((mode, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_flag_parses_kinds_and_params() {
        assert_eq!(parse_kernel_flag("1=linear").unwrap(), (1, KernelSpec::Linear));
        assert_eq!(
            parse_kernel_flag("2=rbf:sigma=1.5").unwrap(),
            (2, KernelSpec::Rbf { sigma: 1.5 })
        );
        assert_eq!(
            parse_kernel_flag("3=poly:degree=2").unwrap(),
            (3, KernelSpec::PolynomialHomogeneous { degree: 2 })
        );
        assert!(parse_kernel_flag("0=linear").is_err());
        assert!(parse_kernel_flag("1=rbf").is_err());
        assert!(parse_kernel_flag("nonsense").is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let json = r#"{"input":"x.mten","ranks":[2],"surprise":1}"#;
        assert!(serde_json::from_str::<TrainConfigFile>(json).is_err());
    }
}
