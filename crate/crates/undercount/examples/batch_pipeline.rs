//! Drive the whole batch pipeline from code: simulate, fit both models,
//! compare the resulting run directories.
//!
//! This is exactly what the `undercount` binary does, minus the argument
//! parsing, and it leaves a complete set of artifacts (draw files,
//! summaries, score documents, manifests) behind for inspection.
//!
//! ```bash
//! cargo run --example batch_pipeline
//! ```

use std::fs;

use undercount::model::MechanismKind;
use undercount::pipeline::{run_compare, run_fit_pipeline, run_simulate, FitRequest};
use undercount::synthetic::SimDesign;

fn main() -> undercount::Result<()> {
    let root = std::env::temp_dir().join("undercount_batch_example");
    let _ = fs::remove_dir_all(&root);

    let design = SimDesign {
        rows: 6,
        cols: 6,
        beta: vec![0.3, -0.2],
        seed: 31,
        ..SimDesign::default()
    };
    let (areas, adjacency) = run_simulate(&design, &root.join("data"))?;

    // A short sampler budget keeps the example quick; drop the [sampler]
    // section to get the desk-scale defaults instead.
    let config = root.join("config.toml");
    fs::write(&config, "[sampler]\nn_iter = 4000\nburn_in = 1500\nthin = 5\n")
        .map_err(|e| undercount::Error::io(&config, e))?;

    for (mechanism, dir) in [
        (MechanismKind::Clustering, "clustering_run"),
        (MechanismKind::Pogit, "pogit_run"),
    ] {
        let outcome = run_fit_pipeline(&FitRequest {
            mechanism,
            areas_csv: areas.clone(),
            adjacency_csv: adjacency.clone(),
            clusters_csv: None,
            k: Some(3),
            config_path: Some(config.clone()),
            out_dir: root.join(dir),
            paper_protocol: false,
            threads: 1,
        })?;
        println!(
            "{mechanism}: lpml = {:.3}, {} PSRF warnings, wrote {}",
            outcome.score.lpml,
            outcome.summary.psrf_warnings.len(),
            outcome.out_dir.display()
        );
    }

    let cmp = run_compare(&root.join("clustering_run"), &root.join("pogit_run"))?;
    match cmp.preferred {
        Some(0) => println!("preferred: clustering run"),
        Some(1) => println!("preferred: pogit run"),
        _ => println!("tie: equal LPML"),
    }

    println!("\nartifacts under {}:", root.display());
    for entry in fs::read_dir(root.join("clustering_run"))
        .map_err(|e| undercount::Error::io(root.join("clustering_run"), e))?
    {
        let entry = entry.map_err(|e| undercount::Error::io(&root, e))?;
        println!("  {}", entry.file_name().to_string_lossy());
    }
    Ok(())
}
