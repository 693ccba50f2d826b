//! TOML experiment configuration and its validated, fully-defaulted form.

use parevp::mesh_fem::ProblemKind;
use parevp::sampling::{ParameterBox, Scheme};
use parevp::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable naming the directory under which relative output
/// paths are resolved. Unset means the current working directory.
pub const OUTPUT_ROOT_ENV: &str = "PAREVP_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    TwoParam,
    ThreeParam,
}

impl Problem {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Problem::TwoParam => ProblemKind::TwoParam,
            Problem::ThreeParam => ProblemKind::ThreeParam,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind().parameter_dim()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Problem::TwoParam => "two_param",
            Problem::ThreeParam => "three_param",
        }
    }

    pub fn default_intervals(&self) -> Vec<(f64, f64)> {
        match self {
            Problem::TwoParam => vec![(0.1, 1.4), (0.1, 1.4)],
            Problem::ThreeParam => vec![(0.1, 1.4), (0.1, 1.4), (1.0, 8.0)],
        }
    }

    /// Benchmark test points: a tensor grid in the parameter box.
    pub fn default_test_points(&self) -> Vec<Vec<f64>> {
        match self {
            Problem::TwoParam => [0.3, 0.7, 1.2]
                .iter()
                .flat_map(|&m1| [0.4, 1.1].iter().map(move |&m2| vec![m1, m2]))
                .collect(),
            Problem::ThreeParam => [2.0, 6.0]
                .iter()
                .flat_map(|&m3| {
                    [0.4, 1.1].iter().flat_map(move |&m1| {
                        [0.4, 1.1].iter().map(move |&m2| vec![m1, m2, m3])
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub scheme: Scheme,
    /// Point count for random/lhs, or 13 for the special 2D uniform layout.
    pub n: Option<usize>,
    /// Per-dimension counts for uniform tensor grids.
    pub counts: Option<Vec<usize>>,
    /// Smolyak sparse-grid level.
    pub level: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodSpec {
    #[serde(default = "default_eps_tol")]
    pub eps_tol: f64,
    #[serde(default = "default_n_e")]
    pub n_e: usize,
}

fn default_eps_tol() -> f64 {
    1e-8
}

fn default_n_e() -> usize {
    1
}

impl Default for PodSpec {
    fn default() -> Self {
        PodSpec {
            eps_tol: default_eps_tol(),
            n_e: default_n_e(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSpec {
    #[serde(default = "default_k")]
    pub k: usize,
    pub test_points: Option<Vec<Vec<f64>>>,
    /// Allow k > n_e (downgrades the load-time error to a warning).
    #[serde(default)]
    pub force_k: bool,
}

fn default_k() -> usize {
    1
}

impl Default for OnlineSpec {
    fn default() -> Self {
        OnlineSpec {
            k: default_k(),
            test_points: None,
            force_k: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Worker-pool size for offline FEM solves; default = available cores.
    pub threads: Option<usize>,
    /// CI-scale profile: mesh defaults to n=50 instead of n=100.
    #[serde(default)]
    pub fast: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub mesh_n: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub parameter_box: Option<BoxSpec>,
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub pod: PodSpec,
    #[serde(default)]
    pub online: OnlineSpec,
    #[serde(default)]
    pub run: RunSpec,
}

/// Concrete sampling plan after validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SamplePlan {
    Random { n: usize, seed: u64 },
    Lhs { n: usize, seed: u64 },
    UniformTensor { counts: Vec<usize> },
    /// 13-point 2D uniform layout: 3x3 tensor grid plus the 4 cell centers.
    UniformCentered13,
    Smolyak { level: usize },
}

impl SamplePlan {
    pub fn scheme(&self) -> Scheme {
        match self {
            SamplePlan::Random { .. } => Scheme::Random,
            SamplePlan::Lhs { .. } => Scheme::Lhs,
            SamplePlan::UniformTensor { .. } | SamplePlan::UniformCentered13 => Scheme::Uniform,
            SamplePlan::Smolyak { .. } => Scheme::Smolyak,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            SamplePlan::Random { seed, .. } | SamplePlan::Lhs { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub problem: Problem,
    pub mesh_n: usize,
    pub intervals: Vec<(f64, f64)>,
    pub plan: SamplePlan,
    pub eps_tol: f64,
    pub n_e: usize,
    pub k: usize,
    pub test_points: Vec<Vec<f64>>,
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
}

impl ResolvedConfig {
    pub fn parameter_box(&self) -> ParameterBox {
        // Intervals were validated during resolution.
        ParameterBox::new(self.intervals.clone()).expect("validated intervals")
    }
}

/// Read a text file, tagging I/O failures with the path.
pub fn read_with_path(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Resolve a path against the output root unless it is already absolute.
pub fn resolve_output_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        output_root().join(path)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Format {
            path: origin.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = read_with_path(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Validate and fill defaults. `fallback_output` names the output
    /// directory when the config does not; relative paths resolve against
    /// the output root.
    pub fn resolve(self, fallback_output: &Path) -> Result<ResolvedConfig> {
        let dim = self.problem.dim();
        let intervals = match &self.parameter_box {
            None => self.problem.default_intervals(),
            Some(spec) => {
                if spec.lower.len() != dim || spec.upper.len() != dim {
                    return Err(Error::InvalidArgument(format!(
                        "parameter box must have {dim} components for problem {}",
                        self.problem.name()
                    )));
                }
                spec.lower.iter().copied().zip(spec.upper.iter().copied()).collect()
            }
        };
        for &(lo, hi) in &intervals {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate parameter interval [{lo}, {hi}]"
                )));
            }
        }

        let mesh_n = self.mesh_n.unwrap_or(if self.run.fast { 50 } else { 100 });
        if mesh_n < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh_n = {mesh_n} is below the minimum of 2"
            )));
        }

        let eps_tol = self.pod.eps_tol;
        if !(eps_tol > 0.0 && eps_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eps_tol = {eps_tol} must lie in (0, 1)"
            )));
        }
        let n_e = self.pod.n_e;
        if n_e == 0 {
            return Err(Error::InvalidArgument("n_e must be at least 1".into()));
        }
        let k = self.online.k;
        if k > n_e {
            if self.online.force_k {
                eprintln!(
                    "warning: k = {k} exceeds n_e = {n_e}; reduced accuracy expected for higher eigenvalues"
                );
            } else {
                return Err(Error::InvalidArgument(format!(
                    "k = {k} exceeds n_e = {n_e}; set online.force_k = true to override"
                )));
            }
        }

        let test_points = self
            .online
            .test_points
            .clone()
            .unwrap_or_else(|| self.problem.default_test_points());
        for p in &test_points {
            if p.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "test point {p:?} has {} components, expected {dim}",
                    p.len()
                )));
            }
            let inside = p
                .iter()
                .zip(&intervals)
                .all(|(x, &(lo, hi))| *x >= lo && *x <= hi);
            if !inside {
                return Err(Error::InvalidArgument(format!(
                    "test point {p:?} lies outside the parameter box"
                )));
            }
        }

        let plan = match self.sampling.scheme {
            Scheme::Random | Scheme::Lhs => {
                let n = self.sampling.n.ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "sampling.n is required for scheme {}",
                        self.sampling.scheme
                    ))
                })?;
                if n == 0 {
                    return Err(Error::InvalidArgument("sampling.n must be positive".into()));
                }
                if self.sampling.scheme == Scheme::Random {
                    SamplePlan::Random { n, seed: self.sampling.seed }
                } else {
                    SamplePlan::Lhs { n, seed: self.sampling.seed }
                }
            }
            Scheme::Uniform => match (&self.sampling.counts, self.sampling.n) {
                (Some(counts), _) => {
                    if counts.len() != dim {
                        return Err(Error::InvalidArgument(format!(
                            "sampling.counts must have {dim} entries"
                        )));
                    }
                    SamplePlan::UniformTensor { counts: counts.clone() }
                }
                (None, Some(13)) if dim == 2 => SamplePlan::UniformCentered13,
                (None, Some(n)) => {
                    return Err(Error::InvalidArgument(format!(
                        "uniform sampling needs per-dimension counts; n = {n} has no tensor layout here"
                    )));
                }
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "uniform sampling needs sampling.counts (or n = 13 in 2D)".into(),
                    ));
                }
            },
            Scheme::Smolyak => {
                let level = self.sampling.level.ok_or_else(|| {
                    Error::InvalidArgument("sampling.level is required for scheme smolyak".into())
                })?;
                SamplePlan::Smolyak { level }
            }
        };

        let output_dir = resolve_output_path(
            self.output_dir.as_deref().unwrap_or(fallback_output),
        );

        Ok(ResolvedConfig {
            problem: self.problem,
            mesh_n,
            intervals,
            plan,
            eps_tol,
            n_e,
            k,
            test_points,
            threads: self.run.threads,
            output_dir,
        })
    }
}

/// Load and resolve in one step; the default output directory is the config
/// file's stem with an `.out` suffix.
pub fn load_config(path: &Path) -> Result<ResolvedConfig> {
    let cfg = ExperimentConfig::load(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    cfg.resolve(&PathBuf::from(format!("{stem}.out")))
}
