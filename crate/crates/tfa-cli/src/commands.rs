//! Command implementations. Each returns `Ok(exit_code)` so `main` owns the
//! process exit; reports carry the timings, model artifacts stay timing-free
//! so reruns are bitwise identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use serde::Serialize;

use tfa_core::error::{Result, TfaError};
use tfa_core::factorization::{
    cost_evaluate, m_mode_svd, CausalModel, Schedule, SubspaceEngine, TrainingConfig,
};
use tfa_core::hierarchy::{
    incremental_block_m_mode_svd, part_based_m_mode_svd, HierarchyConfig, HierarchyTrace,
    NodeRank, PartSegmentation,
};
use tfa_core::inverse::{
    multilinear_project, piecewise_project, PiecewiseEnsemble, ProjectionResult, Rank1Method,
};
use tfa_core::io;
use tfa_core::kernels::{k_mica, k_mpca, KernelSpec};
use tfa_core::linalg::max_principal_angle;
use tfa_core::neural::HebbianConfig;
use tfa_core::synth::{generate_all, SynthSpec};

use crate::config::{BenchConfigFile, TrainConfigFile, TrainMethod};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NON_CONVERGENCE: i32 = 4;

pub fn exit_code_for(err: &TfaError) -> i32 {
    match err {
        TfaError::Io(_) | TfaError::Format(_) => EXIT_IO,
        TfaError::Divergence(_) => EXIT_NON_CONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(config: &Path, out: &Path, seed: Option<u64>) -> Result<i32> {
    let mut spec: SynthSpec = read_config(config)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate()?;
    fs::create_dir_all(out)?;
    let outputs = generate_all(&spec)?;
    let single = outputs.len() == 1;
    for (r, regime) in outputs.iter().enumerate() {
        let (data_name, truth_name) = if single {
            ("data.mten".to_string(), "truth".to_string())
        } else {
            (format!("data_{r}.mten"), format!("truth_{r}"))
        };
        io::write_mten(&out.join(data_name), &regime.data)?;
        io::save_model(&out.join(truth_name), &regime.truth)?;
    }
    fs::write(out.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
    println!("wrote {} regime(s) under {}", outputs.len(), out.display());
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainOverrides {
    pub schedule: Option<Schedule>,
    pub engine: Option<String>,
    pub seed: Option<u64>,
    pub kernels: Vec<(usize, KernelSpec)>,
}

#[derive(Serialize)]
struct TrainReportFile {
    method: TrainMethod,
    schedule: Schedule,
    engine: String,
    iterations: usize,
    converged: bool,
    final_cost: f64,
    cost_trace: Vec<f64>,
    wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    hierarchy_nodes: Option<usize>,
}

fn build_training_config(
    file: &TrainConfigFile,
    overrides: &TrainOverrides,
) -> Result<TrainingConfig> {
    let mut cfg = TrainingConfig::new(file.ranks.clone());
    if let Some(s) = &file.schedule {
        cfg.schedule = s.parse()?;
    }
    if let Some(s) = overrides.schedule {
        cfg.schedule = s;
    }
    if let Some(iters) = file.max_iters {
        cfg.max_iters = iters;
    }
    if let Some(tol) = file.tol {
        cfg.tol = tol;
    }
    let engine_name = overrides
        .engine
        .clone()
        .or_else(|| file.engine.clone())
        .unwrap_or_else(|| "svd".into());
    cfg.engine = match engine_name.as_str() {
        "svd" => SubspaceEngine::Svd,
        "hebbian" => {
            let mut hcfg = file.hebbian.clone().unwrap_or_default();
            if let Some(seed) = overrides.seed {
                hcfg.seed = seed;
            }
            SubspaceEngine::Hebbian(hcfg)
        }
        other => {
            return Err(TfaError::InvalidArgument(format!(
                "unknown engine '{other}' (svd|hebbian)"
            )))
        }
    };
    Ok(cfg)
}

fn resolve_kernels(
    file: &TrainConfigFile,
    overrides: &TrainOverrides,
    modes: usize,
) -> Result<Vec<KernelSpec>> {
    let mut kernels = match &file.kernels {
        Some(list) => {
            if list.len() != modes {
                return Err(TfaError::InvalidArgument(format!(
                    "kernels lists {} entries for {} causal modes",
                    list.len(),
                    modes
                )));
            }
            list.clone()
        }
        None => vec![KernelSpec::Linear; modes],
    };
    for (mode, spec) in &overrides.kernels {
        if *mode > modes {
            return Err(TfaError::InvalidArgument(format!(
                "kernel flag names mode {mode} but the data has {modes} causal modes"
            )));
        }
        kernels[mode - 1] = spec.clone();
    }
    Ok(kernels)
}

fn load_segmentations(
    file: &TrainConfigFile,
    config_dir: &Path,
    measurements: usize,
    modes: usize,
) -> Result<Vec<PartSegmentation>> {
    let specs = file.segmentation.as_ref().ok_or_else(|| {
        TfaError::InvalidArgument("the parts method needs per-mode segmentation files".into())
    })?;
    if specs.len() != modes {
        return Err(TfaError::InvalidArgument(format!(
            "{} segmentation entries for {} causal modes",
            specs.len(),
            modes
        )));
    }
    let mut out = Vec::with_capacity(specs.len());
    for entry in specs {
        let mut seg = io::read_segmentation(&config_dir.join(&entry.segmentation), measurements)?;
        if let Some(perm) = &entry.permutation {
            seg.perm = io::read_permutation(&config_dir.join(perm), measurements)?;
        }
        seg.validate(measurements)?;
        out.push(seg);
    }
    Ok(out)
}

pub fn cmd_train(config: &Path, out: &Path, overrides: &TrainOverrides) -> Result<i32> {
    let file: TrainConfigFile = read_config(config)?;
    let config_dir = config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let raw = io::read_mten(&config_dir.join(&file.input))?;
    let data = if file.center.unwrap_or(true) {
        raw.center_observations().0
    } else {
        raw
    };
    let cfg = build_training_config(&file, overrides)?;
    let modes = data.ndim() - 1;
    let clock = Instant::now();
    let (model, trace): (CausalModel, Option<HierarchyTrace>) = match file.method {
        TrainMethod::Mpca => {
            let kernels = resolve_kernels(&file, overrides, modes)?;
            if kernels.iter().all(|k| k.is_linear()) {
                (m_mode_svd(&data, &cfg)?, None)
            } else {
                (k_mpca(&data, &cfg, &kernels)?, None)
            }
        }
        TrainMethod::Kmpca => {
            let kernels = resolve_kernels(&file, overrides, modes)?;
            (k_mpca(&data, &cfg, &kernels)?, None)
        }
        TrainMethod::Kmica => {
            let kernels = resolve_kernels(&file, overrides, modes)?;
            let (model, _components) = k_mica(&data, &cfg, &kernels)?;
            (model, None)
        }
        TrainMethod::Block => {
            let hier_file = file.hierarchy.as_ref().ok_or_else(|| {
                TfaError::InvalidArgument("the block method needs a hierarchy section".into())
            })?;
            let hier = HierarchyConfig {
                leaf_size: hier_file.leaf_size,
                node_rank: match hier_file.margin {
                    Some(margin) => NodeRank::Margin(margin),
                    None => NodeRank::Full,
                },
            };
            let (model, trace) = incremental_block_m_mode_svd(&data, &cfg, &hier)?;
            (model, Some(trace))
        }
        TrainMethod::Parts => {
            let segs = load_segmentations(&file, &config_dir, data.dims()[0], modes)?;
            let node_rank = match file.hierarchy.as_ref().and_then(|h| h.margin) {
                Some(margin) => NodeRank::Margin(margin),
                None => NodeRank::Full,
            };
            let (model, trace) = part_based_m_mode_svd(&data, &cfg, &segs, node_rank)?;
            (model, Some(trace))
        }
    };
    let wall_ms = clock.elapsed().as_secs_f64() * 1e3;

    io::save_model(out, &model)?;
    let report = TrainReportFile {
        method: file.method,
        schedule: model.report.schedule,
        engine: model.report.engine.clone(),
        iterations: model.report.iterations,
        converged: model.report.converged,
        final_cost: model.report.final_cost,
        cost_trace: model.report.cost_trace.clone(),
        wall_ms,
        hierarchy_nodes: trace.as_ref().map(|t| t.node_count()),
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    if let Some(trace) = &trace {
        fs::write(out.join("trace.json"), serde_json::to_string_pretty(&trace.records)?)?;
    }
    println!(
        "trained {:?} model: {} iterations, final cost {:.3e}, wall {:.1} ms",
        file.method, model.report.iterations, model.report.final_cost, wall_ms
    );
    if !model.report.converged {
        eprintln!("warning: did not converge within max_iters; artifacts hold the best iterate");
        return Ok(EXIT_NON_CONVERGENCE);
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct LabelJson {
    mode: usize,
    index: usize,
    cosine: f64,
}

#[derive(Serialize)]
struct ProjectionJson {
    degenerate: bool,
    scale: f64,
    residual: f64,
    labels: Vec<LabelJson>,
    reps: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CandidateJson {
    model: String,
    gate_score: f64,
    projection: ProjectionJson,
}

#[derive(Serialize)]
struct EnsembleJson {
    chosen: usize,
    chosen_model: String,
    candidates: Vec<CandidateJson>,
}

fn projection_json(res: &ProjectionResult) -> ProjectionJson {
    ProjectionJson {
        degenerate: res.degenerate,
        scale: res.scale,
        residual: res.residual,
        labels: res
            .labels
            .iter()
            .enumerate()
            .map(|(k, l)| LabelJson { mode: k + 1, index: l.index, cosine: l.cosine })
            .collect(),
        reps: res.reps.iter().map(|r| r.to_vec()).collect(),
    }
}

fn parse_method(name: &str) -> Result<Rank1Method> {
    match name {
        "als-cp" => Ok(Rank1Method::AlsCp),
        "m-mode-svd" => Ok(Rank1Method::MModeSvdLeading),
        other => Err(TfaError::InvalidArgument(format!(
            "unknown rank-1 method '{other}' (als-cp|m-mode-svd)"
        ))),
    }
}

pub fn cmd_project(
    model_dir: Option<&Path>,
    ensemble_manifest: Option<&Path>,
    input: &Path,
    method: &str,
    out: Option<&Path>,
) -> Result<i32> {
    let method = parse_method(method)?;
    let observation: Array1<f64> = io::read_vector_csv(input)?;
    let json = match (model_dir, ensemble_manifest) {
        (Some(dir), None) => {
            let model = io::load_model(dir)?;
            let res = multilinear_project(&model, &observation, method)?;
            serde_json::to_string_pretty(&projection_json(&res))?
        }
        (None, Some(manifest_path)) => {
            let manifest = io::read_manifest(manifest_path)?;
            let base = manifest_path.parent().unwrap_or(Path::new("."));
            let models: Vec<CausalModel> = manifest
                .models
                .iter()
                .map(|p| io::load_model(&base.join(p)))
                .collect::<Result<_>>()?;
            let ensemble = PiecewiseEnsemble::new(models)?;
            let (chosen, candidates) = piecewise_project(&ensemble, &observation, method)?;
            let out = EnsembleJson {
                chosen,
                chosen_model: manifest.models[chosen].clone(),
                candidates: candidates
                    .iter()
                    .map(|c| CandidateJson {
                        model: manifest.models[c.model_index].clone(),
                        gate_score: c.gate_score,
                        projection: projection_json(&c.result),
                    })
                    .collect(),
            };
            serde_json::to_string_pretty(&out)?
        }
        _ => {
            return Err(TfaError::InvalidArgument(
                "give exactly one of --model or --ensemble".into(),
            ))
        }
    };
    match out {
        Some(path) => fs::write(path, &json)?,
        None => println!("{json}"),
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

pub fn cmd_bench(config: &Path, out: &Path) -> Result<i32> {
    let file: BenchConfigFile = read_config(config)?;
    let config_dir = config.parent().unwrap_or(Path::new("."));
    let data = io::read_mten(&config_dir.join(&file.input))?
        .center_observations()
        .0;
    let mut cfg = TrainingConfig::new(file.ranks.clone());
    if let Some(iters) = file.max_iters {
        cfg.max_iters = iters;
    }
    let mut rows: Vec<String> = Vec::new();
    let mut flat: Option<CausalModel> = None;
    for run in &file.runs {
        match run.leaf_size {
            None => {
                let clock = Instant::now();
                let model = m_mode_svd(&data, &cfg)?;
                let micros = clock.elapsed().as_micros();
                for mode in 1..data.ndim() {
                    rows.push(format!("{},{},1,{},0", run.label, mode, micros));
                }
                flat = Some(model);
            }
            Some(leaf_size) => {
                let hier = HierarchyConfig { leaf_size, node_rank: NodeRank::Full };
                let (model, trace) = incremental_block_m_mode_svd(&data, &cfg, &hier)?;
                let reference = match &flat {
                    Some(m) => m.clone(),
                    None => m_mode_svd(&data, &cfg)?,
                };
                for mode in 1..data.ndim() {
                    let nodes = trace
                        .records
                        .iter()
                        .filter(|r| r.mode == mode)
                        .count();
                    let micros: u128 = trace
                        .records
                        .iter()
                        .filter(|r| r.mode == mode)
                        .map(|r| r.micros)
                        .sum();
                    let angle = max_principal_angle(
                        &model.factors[mode - 1].entries,
                        &reference.factors[mode - 1].entries,
                    )?;
                    rows.push(format!("{},{},{},{},{:e}", run.label, mode, nodes, micros, angle));
                }
            }
        }
    }
    let mut csv = String::from("path,mode,nodes,wall_micros,max_angle_vs_flat\n");
    for row in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(out, csv)?;
    println!("wrote benchmark table to {}", out.display());
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

pub fn cmd_inspect(model_dir: &Path) -> Result<i32> {
    let model = io::load_model(model_dir)?;
    #[derive(Serialize)]
    struct InspectJson {
        measurement_dim: usize,
        factor_extents: Vec<usize>,
        ranks: Vec<usize>,
        kernels: Vec<KernelSpec>,
        schedule: Schedule,
        engine: String,
        iterations: usize,
        converged: bool,
        final_cost: f64,
    }
    let info = InspectJson {
        measurement_dim: model.measurement_dim(),
        factor_extents: model.factors.iter().map(|f| f.extent()).collect(),
        ranks: model.ranks.clone(),
        kernels: model.kernels.clone(),
        schedule: model.report.schedule,
        engine: model.report.engine.clone(),
        iterations: model.report.iterations,
        converged: model.report.converged,
        final_cost: model.report.final_cost,
    };
    println!("{}", serde_json::to_string_pretty(&info)?);
    Ok(EXIT_OK)
}

/// Round-trip helper shared by the tests: cost of a saved model against a
/// saved tensor.
pub fn model_cost_on(model_dir: &Path, data_path: &Path) -> Result<f64> {
    let model = io::load_model(model_dir)?;
    let data = io::read_mten(data_path)?.center_observations().0;
    cost_evaluate(&data, &model, &[])
}
