//! Galerkin projection of the affine components onto the POD basis and the
//! online reduced eigensolve, plus FEM-vs-ROM error bookkeeping.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eigensolve::{dense_generalized_eig, EigenSolution};
use crate::mesh_fem::{AffineOperator, ProblemKind, Theta};
use crate::pod::PodBasis;

#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// V^T A_l V, dense N x N symmetric.
    pub a_components: Vec<DMatrix<f64>>,
    pub b_components: Vec<DMatrix<f64>>,
    pub theta_a: Vec<Theta>,
    pub theta_b: Vec<Theta>,
    pub parameter_dim: usize,
    pub kind: ProblemKind,
    /// Transformation matrix used for lifting, N_h x N.
    pub basis: DMatrix<f64>,
}

impl ReducedModel {
    pub fn n(&self) -> usize {
        self.basis.ncols()
    }

    fn check_admissible(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.parameter_dim {
            return Err(Error::InvalidArgument(format!(
                "parameter has length {}, model expects {}",
                mu.len(),
                self.parameter_dim
            )));
        }
        match self.kind {
            ProblemKind::Laplacian => Ok(()),
            ProblemKind::TwoParam | ProblemKind::ThreeParam => {
                if mu[0] == 0.0 || mu[0].abs() >= 1.42 {
                    return Err(Error::Domain(format!(
                        "mu_1 = {} violates mu_1 in (-1.42, 1.42) \\ {{0}}",
                        mu[0]
                    )));
                }
                if mu[1] == 0.0 {
                    return Err(Error::Domain("mu_2 must be nonzero".into()));
                }
                Ok(())
            }
        }
    }

    /// Dense (A_N(mu), B_N(mu)) from the projected components.
    pub fn evaluate(&self, mu: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_admissible(mu)?;
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for (theta, comp) in self.theta_a.iter().zip(&self.a_components) {
            a += theta.eval(mu) * comp;
        }
        let mut b = DMatrix::zeros(n, n);
        for (theta, comp) in self.theta_b.iter().zip(&self.b_components) {
            b += theta.eval(mu) * comp;
        }
        Ok((a, b))
    }
}

#[derive(Debug, Clone)]
pub struct RomResult {
    pub mu: Vec<f64>,
    pub reduced_values: Vec<f64>,
    /// Lifted eigenvectors V u_N, one column per reported eigenvalue.
    pub lifted_vectors: DMatrix<f64>,
    pub fem_values: Option<Vec<f64>>,
    pub relative_errors: Option<Vec<f64>>,
}

/// Project every affine component onto the basis; projections are
/// symmetrized to scrub roundoff.
pub fn project_operators(op: &AffineOperator, basis: &PodBasis) -> Result<ReducedModel> {
    if basis.basis.nrows() != op.dim() {
        return Err(Error::InvalidArgument(format!(
            "basis has {} rows, operator dimension is {}",
            basis.basis.nrows(),
            op.dim()
        )));
    }
    let v = &basis.basis;
    let project = |m: &crate::sparse::CsrMatrix| {
        let mv = m.matmul_dense(v);
        let reduced = v.transpose() * mv;
        0.5 * (&reduced + reduced.transpose())
    };
    Ok(ReducedModel {
        a_components: op.a_components.iter().map(&project).collect(),
        b_components: op.b_components.iter().map(&project).collect(),
        theta_a: op.theta_a.clone(),
        theta_b: op.theta_b.clone(),
        parameter_dim: op.parameter_dim,
        kind: op.kind,
        basis: v.clone(),
    })
}

/// Solve the reduced problem at one parameter and lift the eigenvectors.
pub fn online_solve(model: &ReducedModel, mu: &[f64], k: usize) -> Result<RomResult> {
    if k > model.n() {
        return Err(Error::InvalidArgument(format!(
            "reduced space too small for requested eigencount ({k} > {})",
            model.n()
        )));
    }
    let (a, b) = model.evaluate(mu)?;
    let solution = match dense_generalized_eig(&a, &b) {
        Ok(s) => s,
        Err(Error::Definiteness(_)) => {
            // roundoff can push the reduced mass slightly indefinite at
            // extreme theta ratios; nudge the diagonal and retry once
            let shift = 1e-14 * b.trace() / model.n() as f64;
            eprintln!(
                "warning: reduced B(mu) at {mu:?} lost definiteness; regularizing diagonal by {shift:.3e}"
            );
            let regularized = &b + DMatrix::identity(model.n(), model.n()) * shift;
            dense_generalized_eig(&a, &regularized)?
        }
        Err(e) => return Err(e),
    };
    let reduced_values: Vec<f64> = solution.pairs[..k].iter().map(|p| p.value).collect();
    let mut lifted = DMatrix::zeros(model.basis.nrows(), k);
    for (c, pair) in solution.pairs[..k].iter().enumerate() {
        lifted.set_column(c, &(&model.basis * &pair.vector));
    }
    Ok(RomResult {
        mu: mu.to_vec(),
        reduced_values,
        lifted_vectors: lifted,
        fem_values: None,
        relative_errors: None,
    })
}

/// Attach FEM reference values and relative errors |l_h - l_N| / l_h.
pub fn attach_reference(result: &mut RomResult, fem_values: &[f64]) {
    let errors = result
        .reduced_values
        .iter()
        .zip(fem_values)
        .map(|(rom, fem)| (fem - rom).abs() / fem.abs())
        .collect();
    result.fem_values = Some(fem_values[..result.reduced_values.len()].to_vec());
    result.relative_errors = Some(errors);
}

/// FEM solve + ROM solve + relative errors for each test point, in input
/// order. Solver errors are annotated with the offending point.
pub fn evaluate_test_suite<F>(
    model: &ReducedModel,
    fem_reference: F,
    test_points: &[Vec<f64>],
    k: usize,
) -> Result<Vec<RomResult>>
where
    F: Fn(&[f64], usize) -> Result<EigenSolution>,
{
    let mut out = Vec::with_capacity(test_points.len());
    for point in test_points {
        let annotate = |e: Error| match e {
            Error::SolverFailure { .. } | Error::Definiteness(_) | Error::Domain(_) => {
                Error::Domain(format!("at test point {point:?}: {e}"))
            }
            other => other,
        };
        let fem = fem_reference(point, k).map_err(annotate)?;
        let mut result = online_solve(model, point, k).map_err(annotate)?;
        attach_reference(&mut result, &fem.values());
        out.push(result);
    }
    Ok(out)
}

/// Experiment identification attached to every exported row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTag {
    pub scheme: String,
    pub seed: Option<u64>,
    pub n_basis: usize,
}

/// One row per (test point, eigenvalue index), mirroring the error tables.
pub fn write_results_csv(results: &[RomResult], tag: &RunTag, path: &Path) -> Result<()> {
    let dim = results.first().map_or(0, |r| r.mu.len());
    let mut out = String::from("scheme,seed,N,");
    for d in 0..dim {
        out.push_str(&format!("mu{d},"));
    }
    out.push_str("eigen_index,lambda_fem,lambda_rom,rel_error\n");
    for r in results {
        for (i, &rom) in r.reduced_values.iter().enumerate() {
            out.push_str(&tag.scheme);
            out.push(',');
            match tag.seed {
                Some(s) => out.push_str(&s.to_string()),
                None => out.push_str(""),
            }
            out.push_str(&format!(",{},", tag.n_basis));
            for &m in &r.mu {
                out.push_str(&format!("{m:.17e},"));
            }
            let fem = r.fem_values.as_ref().map(|v| v[i]);
            let err = r.relative_errors.as_ref().map(|v| v[i]);
            out.push_str(&format!(
                "{},{},{rom:.10},{}\n",
                i + 1,
                fem.map_or(String::new(), |v| format!("{v:.10}")),
                err.map_or(String::new(), |v| format!("{v:.6e}"))
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
