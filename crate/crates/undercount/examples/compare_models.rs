//! Fit both reporting models to the same data and compare them by LPML.
//!
//! The data is generated with cluster-level underreporting, so the
//! clustering model should usually score higher (closer to zero).
//!
//! ```bash
//! cargo run --example compare_models
//! ```

use undercount::areal::compute_expected_counts;
use undercount::diagnostics::lpml;
use undercount::model::{orthogonal_poly, ModelConfig};
use undercount::sampler::{run_fit, Mechanism, ModelContext, SamplerConfig};
use undercount::synthetic::{simulate, SimDesign};

fn main() -> undercount::Result<()> {
    let (data, truth) = simulate(&SimDesign {
        rows: 6,
        cols: 6,
        beta: vec![0.3, -0.2],
        seed: 99,
        ..SimDesign::default()
    })?;
    let e = compute_expected_counts(&data)?;
    let sampler = SamplerConfig {
        n_iter: 8_000,
        burn_in: 3_000,
        thin: 5,
        ..SamplerConfig::default()
    };

    // Clustering model, using the true quality groups for brevity.
    let membership = truth.membership()?;
    let clustering_model = ModelConfig::clustering(membership.k());
    let ctx = ModelContext::new(
        &clustering_model,
        &data,
        &e,
        Mechanism::Clustering(&membership),
    )?;
    let clustering_score = lpml(&run_fit(&sampler, &ctx)?.pooled_loglik())?;

    // Pogit model on the reporting proxy.
    let pogit_model = ModelConfig::pogit();
    let basis = orthogonal_poly(data.proxy_w().unwrap(), pogit_model.degree)?;
    let ctx = ModelContext::new(&pogit_model, &data, &e, Mechanism::Pogit(&basis))?;
    let pogit_score = lpml(&run_fit(&sampler, &ctx)?.pooled_loglik())?;

    println!("clustering model: lpml = {:.3}", clustering_score.lpml);
    println!("pogit model:      lpml = {:.3}", pogit_score.lpml);
    if clustering_score.lpml > pogit_score.lpml {
        println!("preferred: clustering model");
    } else if pogit_score.lpml > clustering_score.lpml {
        println!("preferred: pogit model");
    } else {
        println!("tie: equal LPML");
    }

    // CPO breakdown: areas where the preferred model fits much better.
    let mut gains: Vec<(usize, f64)> = clustering_score
        .cpo
        .iter()
        .zip(&pogit_score.cpo)
        .map(|(c, p)| c.ln() - p.ln())
        .enumerate()
        .collect();
    gains.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
    println!("\nlargest per-area log-CPO differences (clustering - pogit):");
    for (i, gain) in gains.iter().take(5) {
        println!("  {}: {gain:+.3}", data.area_ids()[*i]);
    }
    Ok(())
}
