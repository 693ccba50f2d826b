//! Offline training, online evaluation, figure data, and scheme comparison.

use crate::config::{Problem, ResolvedConfig, SamplePlan};
use crate::model::{
    atomic_write, manifest_path, save_model, write_toml, ModelMeta, RunManifest, StageTimings,
};
use parevp::eigensolve::{smallest_eigenpairs, EigenSolution, SolverConfig};
use parevp::mesh_fem::{
    assemble_problem_three_param, assemble_problem_two_param, build_structured_mesh,
    AffineOperator, FemSpace,
};
use parevp::pod::{
    build_snapshot_matrix, pod_basis, write_basis_meta, write_singular_values_csv, BasisMeta,
    PodBasis,
};
use parevp::rom::{
    attach_reference, online_solve, project_operators, write_results_csv, ReducedModel,
    RomResult, RunTag,
};
use parevp::sampling::{
    lhs_sample, random_sample, smolyak_cc_sample, uniform_tensor_sample, write_sample_csv,
    write_sample_meta, SampleMeta, SampleSet, Scheme,
};
use parevp::{Error, Result};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Wrap a non-I/O failure with the offline stage that raised it.
fn stage_err(stage: &str, e: Error) -> Error {
    match e {
        Error::Io(_) | Error::Format { .. } => e,
        other => Error::Domain(format!("stage '{stage}': {other}")),
    }
}

pub fn assemble_operator(problem: Problem, mesh_n: usize) -> Result<(FemSpace, AffineOperator)> {
    let space = FemSpace::new(build_structured_mesh(mesh_n)?);
    let op = match problem {
        Problem::TwoParam => assemble_problem_two_param(&space),
        Problem::ThreeParam => assemble_problem_three_param(&space),
    };
    Ok((space, op))
}

/// The 13-point "uniform" layout in 2D: a 3x3 tensor grid plus the centers
/// of its four cells, sorted lexicographically like a plain tensor grid.
fn uniform_centered_13(intervals: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let axis = |&(lo, hi): &(f64, f64)| [lo, lo * 0.5 + hi * 0.5, hi];
    let centers = |&(lo, hi): &(f64, f64)| [lo * 0.75 + hi * 0.25, lo * 0.25 + hi * 0.75];
    let (xs, ys) = (axis(&intervals[0]), axis(&intervals[1]));
    let (cx, cy) = (centers(&intervals[0]), centers(&intervals[1]));
    let mut points: Vec<Vec<f64>> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| vec![x, y]))
        .chain(cx.iter().flat_map(|&x| cy.iter().map(move |&y| vec![x, y])))
        .collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points
}

pub fn draw_samples(rc: &ResolvedConfig) -> Result<SampleSet> {
    let bx = rc.parameter_box();
    match &rc.plan {
        SamplePlan::Random { n, seed } => random_sample(&bx, *n, *seed),
        SamplePlan::Lhs { n, seed } => lhs_sample(&bx, *n, *seed),
        SamplePlan::UniformTensor { counts } => uniform_tensor_sample(&bx, counts),
        SamplePlan::UniformCentered13 => Ok(SampleSet {
            points: uniform_centered_13(&rc.intervals),
            meta: SampleMeta {
                scheme: Scheme::Uniform,
                seed: None,
                counts: None,
                level: None,
            },
        }),
        SamplePlan::Smolyak { level } => smolyak_cc_sample(&bx, *level),
    }
}

/// FEM eigensolves at every sample, concurrently over a bounded pool.
/// Results come back in sample order regardless of scheduling.
pub fn fem_solutions(
    op: &AffineOperator,
    points: &[Vec<f64>],
    n_eigs: usize,
    threads: Option<usize>,
) -> Result<Vec<EigenSolution>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let solver = SolverConfig::default();
    pool.install(|| {
        points
            .par_iter()
            .map(|mu| {
                let (a, b) = op.evaluate(mu)?;
                let mut sol = smallest_eigenpairs(&a, &b, n_eigs, &solver)?;
                sol.mu = Some(mu.clone());
                Ok(sol)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Domain(format!("FEM solve failed: {e}")))
    })
}

pub struct OfflineArtifacts {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub model: ReducedModel,
    pub basis: PodBasis,
    pub samples: SampleSet,
}

pub fn run_offline(rc: &ResolvedConfig) -> Result<OfflineArtifacts> {
    let t0 = Instant::now();
    let (space, op) = assemble_operator(rc.problem, rc.mesh_n).map_err(|e| stage_err("assembly", e))?;
    let assembly_ms = t0.elapsed().as_secs_f64() * 1e3;
    run_offline_with(rc, &space, &op, assembly_ms)
}

/// Offline pipeline over a pre-assembled operator (shared across configs
/// that differ only in sampling scheme).
pub fn run_offline_with(
    rc: &ResolvedConfig,
    space: &FemSpace,
    op: &AffineOperator,
    assembly_ms: f64,
) -> Result<OfflineArtifacts> {
    let t_total = Instant::now();

    let samples = draw_samples(rc).map_err(|e| stage_err("sampling", e))?;
    for p in &samples.points {
        op.check_admissible(p)
            .map_err(|e| stage_err("sampling", Error::Domain(format!("sample {p:?}: {e}"))))?;
    }

    let t = Instant::now();
    let solutions = fem_solutions(op, &samples.points, rc.n_e, rc.threads)
        .map_err(|e| stage_err("fem_solves", e))?;
    let fem_solves_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let snapshots =
        build_snapshot_matrix(&solutions, rc.n_e).map_err(|e| stage_err("snapshots", e))?;
    let basis = pod_basis(&snapshots, rc.eps_tol).map_err(|e| stage_err("pod", e))?;
    let pod_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let model = project_operators(op, &basis).map_err(|e| stage_err("projection", e))?;
    let projection_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let meta = ModelMeta {
        problem: rc.problem,
        mesh_n: rc.mesh_n,
        n_dof: space.n_dof,
        basis_size: basis.n(),
        n_e: rc.n_e,
        eps_tol: rc.eps_tol,
        box_lower: rc.intervals.iter().map(|i| i.0).collect(),
        box_upper: rc.intervals.iter().map(|i| i.1).collect(),
        scheme: rc.plan.scheme().to_string(),
        seed: rc.plan.seed(),
        n_samples: samples.len(),
        n_a_components: model.a_components.len(),
        n_b_components: model.b_components.len(),
    };
    let mut artifacts = save_model(&rc.output_dir, &meta, &model)?;

    atomic_write(&rc.output_dir.join("samples.csv"), |tmp| {
        write_sample_csv(&samples, tmp)
    })?;
    artifacts.push("samples.csv".to_string());
    atomic_write(&rc.output_dir.join("samples_meta.toml"), |tmp| {
        write_sample_meta(&samples.meta, tmp)
    })?;
    artifacts.push("samples_meta.toml".to_string());
    atomic_write(&rc.output_dir.join("singular_values.csv"), |tmp| {
        write_singular_values_csv(&basis, tmp)
    })?;
    artifacts.push("singular_values.csv".to_string());
    atomic_write(&rc.output_dir.join("basis_meta.toml"), |tmp| {
        write_basis_meta(
            &BasisMeta {
                eps_tol: rc.eps_tol,
                n: basis.n(),
                rank: basis.rank,
                n_samples: samples.len(),
                eigvecs_per_sample: rc.n_e,
                snapshot_normalization: "euclidean unit columns".to_string(),
            },
            tmp,
        )
    })?;
    artifacts.push("basis_meta.toml".to_string());
    let persist_ms = t.elapsed().as_secs_f64() * 1e3;

    for name in &artifacts {
        let path = rc.output_dir.join(name);
        if !path.is_file() {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: "artifact missing after write".to_string(),
            });
        }
    }

    let manifest = RunManifest {
        meta,
        snapshot_cols: snapshots.n_cols(),
        pod_rank: basis.rank,
        solver_max_iterations: solutions
            .iter()
            .map(|s| s.diagnostics.iterations)
            .max()
            .unwrap_or(0),
        solver_worst_residual: solutions
            .iter()
            .flat_map(|s| s.diagnostics.residuals.iter().copied())
            .fold(0.0, f64::max),
        artifacts,
        timings: StageTimings {
            assembly_ms,
            fem_solves_ms,
            pod_ms,
            projection_ms,
            persist_ms,
            total_ms: assembly_ms + t_total.elapsed().as_secs_f64() * 1e3,
        },
    };
    write_toml(&manifest, &manifest_path(&rc.output_dir))?;

    Ok(OfflineArtifacts {
        dir: rc.output_dir.clone(),
        manifest,
        model,
        basis,
        samples,
    })
}

/// Solve the reduced problem at each point; FEM reference values are
/// computed only when requested. Returns the results and the CSV path.
pub fn run_online(
    model_dir: &Path,
    points: &[Vec<f64>],
    k: usize,
    with_reference: bool,
    out: Option<&Path>,
) -> Result<(Vec<RomResult>, PathBuf)> {
    let (model, meta) = crate::model::load_model(model_dir)?;

    let mut results = Vec::with_capacity(points.len());
    for p in points {
        let r = online_solve(&model, p, k)
            .map_err(|e| Error::Domain(format!("at test point {p:?}: {e}")))?;
        results.push(r);
    }

    if with_reference && k > 0 && !points.is_empty() {
        let (_, op) = assemble_operator(meta.problem, meta.mesh_n)?;
        let solutions = fem_solutions(&op, points, k, None)?;
        for (r, sol) in results.iter_mut().zip(&solutions) {
            attach_reference(r, &sol.values());
        }
    }

    let tag = RunTag {
        scheme: meta.scheme.clone(),
        seed: meta.seed,
        n_basis: meta.basis_size,
    };
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| model_dir.join("online_results.csv"));
    atomic_write(&path, |tmp| write_results_csv(&results, &tag, tmp))?;
    Ok((results, path))
}

fn write_points_csv(points: &[Vec<f64>], path: &Path) -> Result<()> {
    let dim = points.first().map_or(0, |p| p.len());
    let mut out = String::new();
    let header: Vec<String> = (0..dim).map(|d| format!("dim{d}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in points {
        let row: Vec<String> = p.iter().map(|x| format!("{x:.17e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Training and test point CSVs for external plotting.
pub fn emit_figure_data(rc: &ResolvedConfig) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(&rc.output_dir)?;
    let samples = draw_samples(rc)?;
    let training = rc.output_dir.join("training_points.csv");
    let test = rc.output_dir.join("test_points.csv");
    atomic_write(&training, |tmp| write_sample_csv(&samples, tmp))?;
    atomic_write(&test, |tmp| write_points_csv(&rc.test_points, tmp))?;
    Ok((training, test))
}

/// One row of the scheme-comparison summary.
#[derive(Debug, Clone)]
pub struct SchemeSummary {
    pub scheme: String,
    pub n_samples: usize,
    pub basis_size: usize,
    pub worst_rel_error: f64,
    pub geomean_rel_error: f64,
}

/// Run each config's offline pipeline, evaluate the shared test suite, and
/// summarize per-scheme worst-case and geometric-mean relative error.
pub fn compare_schemes(rcs: &[ResolvedConfig]) -> Result<(Vec<SchemeSummary>, String)> {
    let first = rcs
        .first()
        .ok_or_else(|| Error::InvalidArgument("compare needs at least one config".into()))?;
    for rc in rcs {
        if rc.problem != first.problem
            || rc.mesh_n != first.mesh_n
            || rc.intervals != first.intervals
            || rc.n_e != first.n_e
            || rc.k != first.k
            || rc.test_points != first.test_points
        {
            return Err(Error::InvalidArgument(
                "compare configs must agree on problem, mesh, box, n_e, k, and test points"
                    .into(),
            ));
        }
    }

    let t0 = Instant::now();
    let (space, op) = assemble_operator(first.problem, first.mesh_n)?;
    let assembly_ms = t0.elapsed().as_secs_f64() * 1e3;
    let references = fem_solutions(&op, &first.test_points, first.k, first.threads)?;

    let mut summaries = Vec::with_capacity(rcs.len());
    for rc in rcs {
        let artifacts = run_offline_with(rc, &space, &op, assembly_ms)?;
        let mut errors = Vec::new();
        for (p, reference) in first.test_points.iter().zip(&references) {
            let mut r = online_solve(&artifacts.model, p, rc.k)
                .map_err(|e| Error::Domain(format!("at test point {p:?}: {e}")))?;
            attach_reference(&mut r, &reference.values());
            errors.extend(r.relative_errors.unwrap());
        }
        let worst = errors.iter().copied().fold(0.0, f64::max);
        let geomean = if errors.is_empty() {
            0.0
        } else {
            let log_sum: f64 = errors.iter().map(|e| e.max(1e-16).ln()).sum();
            (log_sum / errors.len() as f64).exp()
        };
        summaries.push(SchemeSummary {
            scheme: rc.plan.scheme().to_string(),
            n_samples: artifacts.samples.len(),
            basis_size: artifacts.basis.n(),
            worst_rel_error: worst,
            geomean_rel_error: geomean,
        });
    }

    let mut csv = String::from("scheme,n_samples,N,worst_rel_error,geomean_rel_error\n");
    for s in &summaries {
        csv.push_str(&format!(
            "{},{},{},{:.6e},{:.6e}\n",
            s.scheme, s.n_samples, s.basis_size, s.worst_rel_error, s.geomean_rel_error
        ));
    }
    Ok((summaries, csv))
}
