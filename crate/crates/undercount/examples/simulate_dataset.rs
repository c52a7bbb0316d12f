//! Generate a synthetic areal dataset and write it to disk.
//!
//! The simulator draws covariates, populations, quality indicators, a
//! reporting proxy, spatially structured risk and underreported counts on a
//! regular lattice, and returns the ground truth next to the data.
//!
//! ```bash
//! cargo run --example simulate_dataset
//! ```

use undercount::pipeline::run_simulate;
use undercount::synthetic::{SimDesign, TrueReporting};

fn main() -> undercount::Result<()> {
    let design = SimDesign {
        rows: 8,
        cols: 8,
        beta0: -5.0,
        beta: vec![0.3, -0.2],
        reporting: TrueReporting::Clustering {
            gamma: vec![0.02, 0.15, 0.35],
        },
        seed: 42,
        ..SimDesign::default()
    };

    let out = std::env::temp_dir().join("undercount_simulate_example");
    let (areas_csv, adjacency_csv) = run_simulate(&design, &out)?;
    println!("wrote {}", areas_csv.display());
    println!("wrote {}", adjacency_csv.display());
    println!("wrote {}", out.join("truth.json").display());

    // Read the dataset back the same way the fitting pipeline would.
    let data = undercount::areal::load_dataset(&areas_csv, &adjacency_csv)?;
    println!(
        "\n{} areas, {} adjacency edges, {} covariates",
        data.n_areas(),
        data.adjacency().n_edges(),
        data.covariate_names().len()
    );

    let total_y: u64 = data.y().iter().sum();
    let total_pop: u64 = data.n_pop().iter().sum();
    println!(
        "{total_y} observed cases across a population of {total_pop} \
         ({:.1} per 100,000)",
        1e5 * total_y as f64 / total_pop as f64
    );

    println!("\nfirst five areas:");
    println!("{:<8} {:>6} {:>9} {:>8}", "area", "y", "n_pop", "w");
    let w = data.proxy_w().expect("simulated data always carries a proxy");
    for i in 0..5 {
        println!(
            "{:<8} {:>6} {:>9} {:>8.3}",
            data.area_ids()[i],
            data.y()[i],
            data.n_pop()[i],
            w[i]
        );
    }
    Ok(())
}
