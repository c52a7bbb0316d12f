//! Fit the clustering model to simulated data and print a summary table.
//!
//! The full path: simulate counts with group-level underreporting, derive
//! the quality groups from the indicators, run two MCMC chains, and report
//! posterior means, HPD intervals and convergence diagnostics.
//!
//! ```bash
//! cargo run --example fit_clustering
//! ```

use undercount::areal::compute_expected_counts;
use undercount::cluster::{cut_and_order, standardize, ward_cluster};
use undercount::diagnostics::{lpml, summarize};
use undercount::model::ModelConfig;
use undercount::sampler::{run_fit, Mechanism, ModelContext, SamplerConfig};
use undercount::synthetic::{simulate, SimDesign, TrueReporting};

fn main() -> undercount::Result<()> {
    let design = SimDesign {
        rows: 6,
        cols: 6,
        beta0: -5.0,
        beta: vec![0.3, -0.2],
        reporting: TrueReporting::Clustering {
            gamma: vec![0.02, 0.15, 0.35],
        },
        seed: 2024,
        ..SimDesign::default()
    };
    let (data, truth) = simulate(&design)?;

    // Quality groups from the indicators, exactly as the batch tool does it.
    let standardized = standardize(data.quality_indicators().unwrap())?;
    let clustering = cut_and_order(&ward_cluster(&standardized)?, &standardized, 3)?;

    let model = ModelConfig::clustering(3);
    let e = compute_expected_counts(&data)?;
    let ctx = ModelContext::new(
        &model,
        &data,
        &e,
        Mechanism::Clustering(clustering.membership()),
    )?;
    let sampler = SamplerConfig {
        n_iter: 8_000,
        burn_in: 3_000,
        thin: 5,
        ..SamplerConfig::default()
    };
    println!(
        "running {} chains x {} iterations on {} areas...",
        sampler.n_chains,
        sampler.n_iter,
        data.n_areas()
    );
    let draws = run_fit(&sampler, &ctx)?;
    let summary = summarize(&draws, &ctx)?;
    let score = lpml(&draws.pooled_loglik())?;

    println!("\n{:<10} {:>9} {:>8} {:>19} {:>7}", "param", "mean", "sd", "hpd 95%", "psrf");
    let truth_by_name = [
        ("beta0", design.beta0),
        ("beta_x1", design.beta[0]),
        ("beta_x2", design.beta[1]),
        ("gamma_1", 0.02),
        ("gamma_2", 0.15),
        ("gamma_3", 0.35),
    ];
    for (name, true_value) in truth_by_name {
        let row = summary
            .params
            .iter()
            .find(|p| p.name == name)
            .expect("parameter present");
        println!(
            "{:<10} {:>9.4} {:>8.4} [{:>8.4}, {:>8.4}] {:>7.3}   (truth {true_value})",
            row.name,
            row.mean,
            row.sd,
            row.hpd_lo,
            row.hpd_hi,
            row.psrf.unwrap_or(f64::NAN),
        );
    }

    println!("\nlpml = {:.3}", score.lpml);
    println!(
        "PSRF warnings above {}: {}",
        summary.psrf_threshold,
        summary.psrf_warnings.len()
    );

    // How well do the corrected risks track the generating ones?
    let corr = correlation(
        &summary.areas.iter().map(|a| a.theta_mean).collect::<Vec<_>>(),
        &truth.theta,
    );
    println!("correlation of posterior mean theta with truth: {corr:.3}");
    Ok(())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (
        a.iter().sum::<f64>() / n,
        b.iter().sum::<f64>() / n,
    );
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let (va, vb): (f64, f64) = (
        a.iter().map(|x| (x - ma) * (x - ma)).sum(),
        b.iter().map(|y| (y - mb) * (y - mb)).sum(),
    );
    cov / (va * vb).sqrt()
}
