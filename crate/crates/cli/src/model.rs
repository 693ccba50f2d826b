//! Persistence of a trained reduced model as a directory of artifacts.
//!
//! Layout: `model.toml` (metadata), `basis.bin` (N_h x N transformation),
//! `reduced_a_<l>.bin` / `reduced_b_<m>.bin` (projected affine components),
//! `singular_values.csv`, `basis_meta.toml`, `samples.csv`,
//! `samples_meta.toml`, and `manifest.toml` written by the offline driver.

use crate::config::Problem;
use parevp::pod::{read_basis_matrix, write_basis_matrix};
use parevp::rom::ReducedModel;
use parevp::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MODEL_FILE: &str = "model.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub problem: Problem,
    pub mesh_n: usize,
    pub n_dof: usize,
    pub basis_size: usize,
    pub n_e: usize,
    pub eps_tol: f64,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub scheme: String,
    pub seed: Option<u64>,
    pub n_samples: usize,
    pub n_a_components: usize,
    pub n_b_components: usize,
}

/// Per-stage wall-clock times in milliseconds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub assembly_ms: f64,
    pub fem_solves_ms: f64,
    pub pod_ms: f64,
    pub projection_ms: f64,
    pub persist_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub meta: ModelMeta,
    pub snapshot_cols: usize,
    pub pod_rank: usize,
    pub solver_max_iterations: usize,
    pub solver_worst_residual: f64,
    pub artifacts: Vec<String>,
    pub timings: StageTimings,
}

/// Write through a temporary file in the same directory, then rename, so a
/// crash never leaves a half-written artifact behind.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("bad artifact path {}", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    write(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_toml<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    atomic_write(path, |tmp| {
        std::fs::write(tmp, &text)?;
        Ok(())
    })
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = crate::config::read_with_path(path)?;
    toml::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Persist the projected components and transformation matrix. Returns the
/// artifact file names written here (relative to `dir`).
pub fn save_model(dir: &Path, meta: &ModelMeta, model: &ReducedModel) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut artifacts = Vec::new();

    write_toml(meta, &dir.join(MODEL_FILE))?;
    artifacts.push(MODEL_FILE.to_string());

    atomic_write(&dir.join("basis.bin"), |tmp| {
        write_basis_matrix(&model.basis, tmp)
    })?;
    artifacts.push("basis.bin".to_string());

    for (l, comp) in model.a_components.iter().enumerate() {
        let name = format!("reduced_a_{l}.bin");
        atomic_write(&dir.join(&name), |tmp| write_basis_matrix(comp, tmp))?;
        artifacts.push(name);
    }
    for (m, comp) in model.b_components.iter().enumerate() {
        let name = format!("reduced_b_{m}.bin");
        atomic_write(&dir.join(&name), |tmp| write_basis_matrix(comp, tmp))?;
        artifacts.push(name);
    }
    Ok(artifacts)
}

pub fn load_model(dir: &Path) -> Result<(ReducedModel, ModelMeta)> {
    let meta: ModelMeta = read_toml(&dir.join(MODEL_FILE))?;
    let kind = meta.problem.kind();
    let (theta_a, theta_b) = kind.thetas();
    if theta_a.len() != meta.n_a_components || theta_b.len() != meta.n_b_components {
        return Err(Error::Format {
            path: dir.join(MODEL_FILE).display().to_string(),
            reason: format!(
                "component counts ({}, {}) do not match problem {}",
                meta.n_a_components,
                meta.n_b_components,
                meta.problem.name()
            ),
        });
    }

    let basis = read_basis_matrix(&dir.join("basis.bin"))?;
    let read_components = |prefix: &str, count: usize| -> Result<Vec<_>> {
        (0..count)
            .map(|i| {
                let m = read_basis_matrix(&dir.join(format!("{prefix}_{i}.bin")))?;
                if m.nrows() != meta.basis_size || m.ncols() != meta.basis_size {
                    return Err(Error::Format {
                        path: dir.join(format!("{prefix}_{i}.bin")).display().to_string(),
                        reason: format!(
                            "expected {n} x {n} reduced component, found {} x {}",
                            m.nrows(),
                            m.ncols(),
                            n = meta.basis_size
                        ),
                    });
                }
                Ok(m)
            })
            .collect()
    };

    let model = ReducedModel {
        a_components: read_components("reduced_a", meta.n_a_components)?,
        b_components: read_components("reduced_b", meta.n_b_components)?,
        theta_a,
        theta_b,
        parameter_dim: kind.parameter_dim(),
        kind,
        basis,
    };
    if model.basis.ncols() != meta.basis_size || model.basis.nrows() != meta.n_dof {
        return Err(Error::Format {
            path: dir.join("basis.bin").display().to_string(),
            reason: format!(
                "basis is {} x {}, metadata says {} x {}",
                model.basis.nrows(),
                model.basis.ncols(),
                meta.n_dof,
                meta.basis_size
            ),
        });
    }
    Ok((model, meta))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}
