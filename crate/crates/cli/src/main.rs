use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use parevp::sampling::read_points_csv;
use parevp::{Error, Result};
use parevp_cli::config::{load_config, resolve_output_path};
use parevp_cli::model::{atomic_write, manifest_path};
use parevp_cli::pipeline;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "parevp", version, about = "Reduced-order modeling for parametric PDE eigenvalue problems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a reduced model: sample, solve, compress, project, persist.
    Offline {
        /// Experiment configuration (TOML).
        config: PathBuf,
    },
    /// Evaluate a persisted model at parameter points.
    Online {
        /// Model directory written by `offline`.
        model: PathBuf,
        /// CSV of parameter points (header row, one point per line).
        #[arg(long)]
        points: PathBuf,
        /// Number of eigenvalues to report per point.
        #[arg(short)]
        k: usize,
        /// Skip the FEM reference solves (no error columns).
        #[arg(long)]
        no_reference: bool,
        /// Write the results CSV here instead of into the model directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit training/test point CSVs for plotting.
    Figure {
        config: PathBuf,
    },
    /// Run several configs differing only in sampling scheme and summarize.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Offline { config } => {
            let rc = load_config(&config)?;
            let artifacts = pipeline::run_offline(&rc)?;
            let m = &artifacts.manifest;
            println!(
                "trained {} model: {} samples, snapshot rank {}, basis size {}",
                m.meta.scheme, m.meta.n_samples, m.pod_rank, m.meta.basis_size
            );
            println!("manifest: {}", manifest_path(&artifacts.dir).display());
        }
        Cmd::Online {
            model,
            points,
            k,
            no_reference,
            out,
        } => {
            let pts = read_points_csv(&points)?;
            let (_, csv_path) =
                pipeline::run_online(&model, &pts, k, !no_reference, out.as_deref())?;
            print!("{}", std::fs::read_to_string(&csv_path)?);
        }
        Cmd::Figure { config } => {
            let rc = load_config(&config)?;
            let (training, test) = pipeline::emit_figure_data(&rc)?;
            println!("{}", training.display());
            println!("{}", test.display());
        }
        Cmd::Compare { configs } => {
            let rcs = configs
                .iter()
                .map(|p| load_config(p))
                .collect::<Result<Vec<_>>>()?;
            let (_, csv) = pipeline::compare_schemes(&rcs)?;
            let path = resolve_output_path(std::path::Path::new("compare_summary.csv"));
            atomic_write(&path, |tmp| {
                std::fs::write(tmp, &csv)?;
                Ok(())
            })?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Format { .. } => 2,
        _ => 1,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
