//! Snapshot matrix construction and POD basis extraction by SVD with the
//! cumulative singular-value energy criterion.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigensolve::{fix_sign, EigenSolution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnProvenance {
    pub sample_index: usize,
    pub eigen_index: usize,
}

#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub matrix: DMatrix<f64>,
    pub provenance: Vec<ColumnProvenance>,
    pub eigvecs_per_sample: usize,
}

impl SnapshotMatrix {
    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Columns are the first `n_e` eigenvectors of each solution, sample-major.
/// Snapshots are Euclidean-renormalized so no sample dominates the SVD.
pub fn build_snapshot_matrix(
    solutions: &[EigenSolution],
    n_e: usize,
) -> Result<SnapshotMatrix> {
    if solutions.is_empty() || n_e == 0 {
        return Err(Error::InvalidArgument(
            "need at least one solution and one eigenvector per sample".into(),
        ));
    }
    let n_h = solutions[0].pairs[0].vector.len();
    let mut matrix = DMatrix::zeros(n_h, n_e * solutions.len());
    let mut provenance = Vec::with_capacity(n_e * solutions.len());
    for (s, sol) in solutions.iter().enumerate() {
        if sol.pairs.len() < n_e {
            return Err(Error::InsufficientData(format!(
                "sample {s} carries {} eigenpairs, need {n_e}",
                sol.pairs.len()
            )));
        }
        for e in 0..n_e {
            let v = &sol.pairs[e].vector;
            if v.len() != n_h {
                return Err(Error::InvalidArgument(format!(
                    "sample {s} eigenvector length {} does not match {n_h}",
                    v.len()
                )));
            }
            let norm = v.norm();
            if norm == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "zero snapshot column at sample {s}, eigenvector {e}"
                )));
            }
            matrix.set_column(s * n_e + e, &(v / norm));
            provenance.push(ColumnProvenance {
                sample_index: s,
                eigen_index: e,
            });
        }
    }
    Ok(SnapshotMatrix {
        matrix,
        provenance,
        eigvecs_per_sample: n_e,
    })
}

#[derive(Debug, Clone)]
pub struct PodBasis {
    /// N_h x N transformation matrix, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Retained singular values sigma_1..sigma_N.
    pub singular_values: Vec<f64>,
    /// All singular values above the numerical-rank cutoff.
    pub spectrum: Vec<f64>,
    pub rank: usize,
    pub discarded_energy: f64,
    pub eps_tol: f64,
}

impl PodBasis {
    pub fn n(&self) -> usize {
        self.basis.ncols()
    }
}

fn numerical_rank(sigma: &[f64], nrows: usize, ncols: usize) -> usize {
    if sigma.is_empty() || sigma[0] == 0.0 {
        return 0;
    }
    let cutoff = nrows.max(ncols) as f64 * f64::EPSILON * sigma[0];
    sigma.iter().take_while(|&&s| s > cutoff).count()
}

/// Smallest N with sum_{i<=N} sigma_i^2 / sum_{i<=r} sigma_i^2 >= 1 - eps.
fn energy_truncation(sigma: &[f64], rank: usize, eps_tol: f64) -> (usize, f64) {
    let total: f64 = sigma[..rank].iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (i, &s) in sigma[..rank].iter().enumerate() {
        acc += s * s;
        if acc / total >= 1.0 - eps_tol {
            return (i + 1, 1.0 - acc / total);
        }
    }
    (rank, 0.0)
}

fn truncate(
    mut vectors: Vec<DVector<f64>>,
    sigma: Vec<f64>,
    rank: usize,
    eps_tol: f64,
    n_h: usize,
) -> PodBasis {
    let (n, discarded) = energy_truncation(&sigma, rank, eps_tol);
    vectors.truncate(n);
    let mut basis = DMatrix::zeros(n_h, n);
    for (j, v) in vectors.iter_mut().enumerate() {
        fix_sign(v);
        basis.set_column(j, v);
    }
    PodBasis {
        basis,
        singular_values: sigma[..n].to_vec(),
        spectrum: sigma[..rank].to_vec(),
        rank,
        discarded_energy: discarded,
        eps_tol,
    }
}

/// POD basis by thin SVD of the snapshot matrix.
pub fn pod_basis(snapshots: &SnapshotMatrix, eps_tol: f64) -> Result<PodBasis> {
    validate_eps(eps_tol)?;
    let s = &snapshots.matrix;
    if s.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument("all-zero snapshot matrix".into()));
    }
    let svd = s.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rank = numerical_rank(&sigma, s.nrows(), s.ncols());
    let vectors: Vec<DVector<f64>> = order[..rank]
        .iter()
        .map(|&i| u.column(i).into_owned())
        .collect();
    Ok(truncate(vectors, sigma, rank, eps_tol, s.nrows()))
}

/// Same basis through the Gram matrix S^T S, preferable when N_h >> n_k.
/// Left singular vectors are recovered as S v_i / sigma_i and then
/// re-orthonormalized to scrub the amplification of small singular values.
pub fn pod_basis_via_gram(snapshots: &SnapshotMatrix, eps_tol: f64) -> Result<PodBasis> {
    validate_eps(eps_tol)?;
    let s = &snapshots.matrix;
    if s.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument("all-zero snapshot matrix".into()));
    }
    let gram = s.transpose() * s;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let sigma: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    // The Gram matrix squares the conditioning, so the rank cutoff is
    // applied to its eigenvalues sigma^2, not to sigma itself.
    let lambda_cutoff =
        s.nrows().max(s.ncols()) as f64 * f64::EPSILON * sigma.first().map_or(0.0, |s| s * s);
    let rank = sigma
        .iter()
        .take_while(|&&sv| sv * sv > lambda_cutoff)
        .count();
    let mut vectors: Vec<DVector<f64>> = order[..rank]
        .iter()
        .zip(&sigma)
        .map(|(&i, &sv)| s * eig.eigenvectors.column(i) / sv)
        .collect();
    // one modified Gram-Schmidt pass; spans are untouched
    for j in 0..vectors.len() {
        for i in 0..j {
            let proj = vectors[i].dot(&vectors[j]);
            let vi = vectors[i].clone();
            vectors[j] -= proj * vi;
        }
        let norm = vectors[j].norm();
        vectors[j] /= norm;
    }
    Ok(truncate(vectors, sigma, rank, eps_tol, s.nrows()))
}

fn validate_eps(eps_tol: f64) -> Result<()> {
    if !(eps_tol > 0.0 && eps_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy tolerance must lie in (0, 1), got {eps_tol}"
        )));
    }
    Ok(())
}

/// Binary layout for the transformation matrix: row count and column count
/// as u64 little-endian, then column-major f64 little-endian entries.
pub fn write_basis_matrix(basis: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 8 * basis.len());
    out.write_all(&(basis.nrows() as u64).to_le_bytes())?;
    out.write_all(&(basis.ncols() as u64).to_le_bytes())?;
    for j in 0..basis.ncols() {
        for i in 0..basis.nrows() {
            out.write_all(&basis[(i, j)].to_le_bytes())?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_basis_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header)?;
    let nrows = u64::from_le_bytes(header[..8].try_into().unwrap()) as usize;
    let ncols = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    if payload.len() != 8 * nrows * ncols {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!(
                "expected {} payload bytes for {nrows}x{ncols}, found {}",
                8 * nrows * ncols,
                payload.len()
            ),
        });
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    let mut chunks = payload.chunks_exact(8);
    for j in 0..ncols {
        for i in 0..nrows {
            m[(i, j)] = f64::from_le_bytes(chunks.next().unwrap().try_into().unwrap());
        }
    }
    Ok(m)
}

pub fn write_singular_values_csv(basis: &PodBasis, path: &Path) -> Result<()> {
    let mut out = String::from("index,sigma\n");
    for (i, s) in basis.spectrum.iter().enumerate() {
        out.push_str(&format!("{},{:.17e}\n", i + 1, s));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Sidecar record for a persisted basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisMeta {
    pub eps_tol: f64,
    pub n: usize,
    pub rank: usize,
    pub n_samples: usize,
    pub eigvecs_per_sample: usize,
    pub snapshot_normalization: String,
}

pub fn write_basis_meta(meta: &BasisMeta, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(meta).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}
