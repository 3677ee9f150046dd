//! File formats: the `.mten` binary tensor, CSV matrices/vectors, model
//! directories, and segmentation/permutation tables.
//!
//! `.mten` layout: magic `MTEN1\0`, little-endian u32 mode count, one u32
//! extent per mode, then f64 entries in layout order (mode 0 fastest).
//! CSV matrices carry a `rows,cols` header line, the two counts, then the
//! values row-major; floats print in shortest round-trip form so rereading
//! reproduces the exact bits.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TfaError};
use crate::factorization::{CausalModel, TrainingReport};
use crate::hierarchy::PartSegmentation;
use crate::kernels::KernelSpec;
use crate::tensor::{DataTensor, ModeMatrix};

const MTEN_MAGIC: &[u8; 6] = b"MTEN1\0";

pub fn write_mten(path: &Path, t: &DataTensor) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MTEN_MAGIC)?;
    w.write_all(&(t.ndim() as u32).to_le_bytes())?;
    for &d in t.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mten(path: &Path) -> Result<DataTensor> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MTEN_MAGIC {
        return Err(TfaError::Format(format!(
            "{} is not an .mten file (bad magic)",
            path.display()
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let modes = u32::from_le_bytes(buf4) as usize;
    if modes == 0 {
        return Err(TfaError::Format("tensor with zero modes".into()));
    }
    let mut dims = Vec::with_capacity(modes);
    for _ in 0..modes {
        r.read_exact(&mut buf4)?;
        dims.push(u32::from_le_bytes(buf4) as usize);
    }
    let count: usize = dims.iter().product();
    let mut values = Vec::with_capacity(count);
    let mut buf8 = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf8)?;
        values.push(f64::from_le_bytes(buf8));
    }
    if r.read(&mut buf8)? != 0 {
        return Err(TfaError::Format("trailing bytes after tensor payload".into()));
    }
    DataTensor::from_values(dims, values)
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "rows,cols")?;
    writeln!(w, "{},{}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[[i, j]])).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| TfaError::Format("empty matrix file".into()))??;
    if header.trim() != "rows,cols" {
        return Err(TfaError::Format(format!(
            "expected 'rows,cols' header in {}",
            path.display()
        )));
    }
    let dims_line = lines
        .next()
        .ok_or_else(|| TfaError::Format("missing matrix dimensions".into()))??;
    let mut parts = dims_line.trim().split(',');
    let rows: usize = parse_field(parts.next(), "rows")?;
    let cols: usize = parse_field(parts.next(), "cols")?;
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| TfaError::Format(format!("matrix ends after {i} data rows")))??;
        let mut fields = line.trim().split(',');
        for j in 0..cols {
            let field = fields
                .next()
                .ok_or_else(|| TfaError::Format(format!("row {i} has fewer than {cols} values")))?;
            out[[i, j]] = field.trim().parse::<f64>().map_err(|e| {
                TfaError::Format(format!("bad float '{field}' at ({i},{j}): {e}"))
            })?;
        }
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    field
        .ok_or_else(|| TfaError::Format(format!("missing {name} field")))?
        .trim()
        .parse::<T>()
        .map_err(|_| TfaError::Format(format!("bad {name} field")))
}

pub fn write_vector_csv(path: &Path, v: &Array1<f64>) -> Result<()> {
    let m = v.view().insert_axis(ndarray::Axis(1)).to_owned();
    write_matrix_csv(path, &m)
}

pub fn read_vector_csv(path: &Path) -> Result<Array1<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(TfaError::Format(format!(
            "{} holds a {}×{} matrix, expected a column vector",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.column(0).to_owned())
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    ranks: Vec<usize>,
    kernels: Vec<KernelSpec>,
    report: TrainingReport,
}

/// Writes a model directory: `core.mten`, `factor_<m>.csv` per mode,
/// `mean.csv`, and `meta.json`.
pub fn save_model(dir: &Path, model: &CausalModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_mten(&dir.join("core.mten"), &model.core)?;
    for f in &model.factors {
        write_matrix_csv(&dir.join(format!("factor_{}.csv", f.mode)), &f.entries)?;
    }
    write_vector_csv(&dir.join("mean.csv"), &model.mean)?;
    let meta = ModelMeta {
        ranks: model.ranks.clone(),
        kernels: model.kernels.clone(),
        report: model.report.clone(),
    };
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(dir.join("meta.json"), json)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<CausalModel> {
    let meta: ModelMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let core = read_mten(&dir.join("core.mten"))?;
    if core.ndim() != meta.ranks.len() + 1 {
        return Err(TfaError::Format(format!(
            "core has {} modes but meta lists {} ranks",
            core.ndim(),
            meta.ranks.len()
        )));
    }
    let mut factors = Vec::with_capacity(meta.ranks.len());
    for m in 1..=meta.ranks.len() {
        let entries = read_matrix_csv(&dir.join(format!("factor_{m}.csv")))?;
        factors.push(ModeMatrix::new(m, entries));
    }
    let mean = read_vector_csv(&dir.join("mean.csv"))?;
    if mean.len() != core.dims()[0] {
        return Err(TfaError::Format(format!(
            "mean length {} does not match the measurement dimension {}",
            mean.len(),
            core.dims()[0]
        )));
    }
    Ok(CausalModel {
        core,
        factors,
        mean,
        ranks: meta.ranks,
        kernels: meta.kernels,
        report: meta.report,
    })
}

/// Segmentation table: `measurement_index,part_id` rows (post-permutation
/// positions); unlisted measurements are filtered out.
pub fn write_segmentation(path: &Path, seg: &PartSegmentation) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "measurement_index,part_id")?;
    for (pos, assigned) in seg.part_of.iter().enumerate() {
        if let Some(p) = assigned {
            writeln!(w, "{pos},{p}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a segmentation for `measurements` rows with an identity permutation;
/// combine with [`read_permutation`] to fill the `perm` field.
pub fn read_segmentation(path: &Path, measurements: usize) -> Result<PartSegmentation> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| TfaError::Format("empty segmentation file".into()))??;
    if header.trim() != "measurement_index,part_id" {
        return Err(TfaError::Format("expected 'measurement_index,part_id' header".into()));
    }
    let mut part_of = vec![None; measurements];
    let mut max_part = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.trim().split(',');
        let idx: usize = parse_field(fields.next(), "measurement_index")?;
        let part: usize = parse_field(fields.next(), "part_id")?;
        if idx >= measurements {
            return Err(TfaError::Format(format!(
                "measurement index {idx} out of range 0..{measurements}"
            )));
        }
        part_of[idx] = Some(part);
        max_part = max_part.max(part);
    }
    let seg = PartSegmentation {
        perm: (0..measurements).collect(),
        part_of,
        part_count: max_part + 1,
    };
    seg.validate(measurements)?;
    Ok(seg)
}

/// Permutation table: `from_index,to_index` rows meaning "original row
/// `from` lands at position `to`".
pub fn write_permutation(path: &Path, perm: &[usize]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "from_index,to_index")?;
    for (to, from) in perm.iter().enumerate() {
        writeln!(w, "{from},{to}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_permutation(path: &Path, measurements: usize) -> Result<Vec<usize>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| TfaError::Format("empty permutation file".into()))??;
    if header.trim() != "from_index,to_index" {
        return Err(TfaError::Format("expected 'from_index,to_index' header".into()));
    }
    let mut perm = vec![usize::MAX; measurements];
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.trim().split(',');
        let from: usize = parse_field(fields.next(), "from_index")?;
        let to: usize = parse_field(fields.next(), "to_index")?;
        if from >= measurements || to >= measurements {
            return Err(TfaError::Format(format!(
                "permutation entry {from}->{to} out of range 0..{measurements}"
            )));
        }
        if perm[to] != usize::MAX {
            return Err(TfaError::Format(format!("position {to} assigned twice")));
        }
        perm[to] = from;
    }
    if perm.iter().any(|&p| p == usize::MAX) {
        return Err(TfaError::Format("permutation does not cover every position".into()));
    }
    Ok(perm)
}

/// Ensemble manifest: a JSON list of model directories.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub models: Vec<String>,
}

pub fn read_manifest(path: &Path) -> Result<EnsembleManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_manifest(path: &Path, manifest: &EnsembleManifest) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}
