//! Batch front end: simulate, cluster, fit, compare.
//!
//! Exit codes: 0 success, 2 input or validation problem, 3 numerical
//! failure. Set `UNDERCOUNT_THREADS` to run that many chains concurrently.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use undercount::model::MechanismKind;
use undercount::pipeline::{
    run_cluster, run_compare, run_fit_pipeline, run_simulate, FitRequest,
};
use undercount::synthetic::SimDesign;
use undercount::Error;

#[derive(Parser)]
#[command(
    name = "undercount",
    version,
    about = "Correct underreporting bias in areal disease-count data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Clustering,
    Pogit,
}

impl From<ModelArg> for MechanismKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Clustering => MechanismKind::Clustering,
            ModelArg::Pogit => MechanismKind::Pogit,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (areas.csv, adjacency.csv, truth.json).
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// TOML design file; defaults to the built-in design.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Override the design seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Ward-linkage quality clustering of indicator columns.
    Cluster {
        /// CSV with area_id plus indicator columns (a full areas file works;
        /// its q* columns are used).
        #[arg(long)]
        indicators: PathBuf,
        /// Number of quality groups.
        #[arg(long)]
        k: usize,
        /// Output CSV (area_id,cluster_label); a merge-height report is
        /// written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Cluster the raw columns without standardizing them first.
        #[arg(long)]
        no_standardize: bool,
    },
    /// Fit a model and write draws, summaries, score and manifest.
    Fit {
        /// Reporting mechanism.
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Areas CSV (area_id,y,n_pop,covariates,w,q*).
        #[arg(long)]
        areas: PathBuf,
        /// Adjacency CSV (area_a,area_b).
        #[arg(long)]
        adjacency: PathBuf,
        /// Explicit cluster assignments (area_id,cluster_label).
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Derive this many quality clusters from the indicator columns.
        #[arg(long)]
        k: Option<usize>,
        /// TOML configuration ([model], [sampler]).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Use the published iteration budget (3,000,000 iterations,
        /// 1,000,000 burn-in, lag 3,000) instead of the desk-scale default.
        #[arg(long)]
        paper_protocol: bool,
    },
    /// Compare two completed runs by LPML.
    Compare {
        /// First run directory.
        run_a: PathBuf,
        /// Second run directory.
        run_b: PathBuf,
    },
}

fn threads_from_env() -> usize {
    std::env::var("UNDERCOUNT_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn run(cli: Cli) -> undercount::Result<()> {
    match cli.command {
        Command::Simulate { out, design, seed } => {
            let mut design = match design {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    toml::from_str::<SimDesign>(&text).map_err(|e| Error::Parse {
                        path,
                        row: 0,
                        message: format!("invalid design: {}", e.message()),
                    })?
                }
                None => SimDesign::default(),
            };
            if let Some(seed) = seed {
                design.seed = seed;
            }
            let (areas, adjacency) = run_simulate(&design, &out)?;
            println!(
                "simulated {} areas ({}x{} lattice, seed {})",
                design.n_areas(),
                design.rows,
                design.cols,
                design.seed
            );
            println!("wrote {}", areas.display());
            println!("wrote {}", adjacency.display());
            println!("wrote {}", out.join("truth.json").display());
        }
        Command::Cluster {
            indicators,
            k,
            out,
            no_standardize,
        } => {
            let outcome = run_cluster(&indicators, k, &out, !no_standardize)?;
            println!(
                "clustered {} areas into {} groups (sizes: {:?})",
                outcome.clustering.membership().n_areas(),
                outcome.clustering.k(),
                outcome.clustering.sizes()
            );
            println!("wrote {}", outcome.labels_csv.display());
            println!("wrote {}", outcome.merges_csv.display());
        }
        Command::Fit {
            model,
            areas,
            adjacency,
            clusters,
            k,
            config,
            out,
            paper_protocol,
        } => {
            let req = FitRequest {
                mechanism: model.into(),
                areas_csv: areas,
                adjacency_csv: adjacency,
                clusters_csv: clusters,
                k,
                config_path: config,
                out_dir: out,
                paper_protocol,
                threads: threads_from_env(),
            };
            let outcome = run_fit_pipeline(&req)?;
            println!(
                "fit complete in {:.1}s: lpml = {}",
                outcome.manifest.wall_time_seconds, outcome.score.lpml
            );
            if outcome.summary.psrf_warnings.is_empty() {
                println!(
                    "all PSRF values within the {} threshold",
                    outcome.summary.psrf_threshold
                );
            } else {
                println!(
                    "PSRF above {} for {} parameter(s): {}",
                    outcome.summary.psrf_threshold,
                    outcome.summary.psrf_warnings.len(),
                    outcome.summary.psrf_warnings.join(", ")
                );
            }
            println!("wrote artifacts to {}", outcome.out_dir.display());
        }
        Command::Compare { run_a, run_b } => {
            let cmp = run_compare(&run_a, &run_b)?;
            println!("{}: lpml = {}", run_a.display(), cmp.lpml_a);
            println!("{}: lpml = {}", run_b.display(), cmp.lpml_b);
            match cmp.preferred {
                Some(0) => println!("preferred: {}", run_a.display()),
                Some(1) => println!("preferred: {}", run_b.display()),
                _ => println!("tie: both runs have equal LPML"),
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(i32::from(err.exit_code()));
    }
}
