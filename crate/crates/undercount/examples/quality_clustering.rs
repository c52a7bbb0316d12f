//! Group areas into data-quality clusters with Ward linkage.
//!
//! Quality indicators are standardized, clustered agglomeratively, and the
//! resulting groups are ordered so label 1 is the best-reporting group.
//!
//! ```bash
//! cargo run --example quality_clustering
//! ```

use undercount::cluster::{cut_and_order, standardize, ward_cluster};
use undercount::synthetic::{simulate, SimDesign};

fn main() -> undercount::Result<()> {
    // Simulated indicators with three well-separated quality levels.
    let (data, truth) = simulate(&SimDesign {
        rows: 6,
        cols: 6,
        seed: 7,
        ..SimDesign::default()
    })?;
    let indicators = data
        .quality_indicators()
        .expect("simulated data always carries indicators");

    let standardized = standardize(indicators)?;
    let dendrogram = ward_cluster(&standardized)?;

    println!("last five merge heights (should jump where real groups fuse):");
    let merges = dendrogram.merges();
    for m in &merges[merges.len() - 5..] {
        println!("  size {:>3} at height {:.3}", m.size, m.height);
    }

    let clustering = cut_and_order(&dendrogram, &standardized, 3)?;
    println!("\ngroups ordered by quality score (higher = better reporting):");
    for g in 0..clustering.k() {
        println!(
            "  group {}: {} areas, score {:+.3}",
            g + 1,
            clustering.sizes()[g],
            clustering.scores()[g]
        );
    }

    let recovered = clustering.labels();
    let agree = recovered
        .iter()
        .zip(&truth.labels)
        .filter(|(a, b)| a == b)
        .count();
    println!(
        "\nagreement with the generating labels: {agree}/{} areas",
        data.n_areas()
    );
    Ok(())
}
