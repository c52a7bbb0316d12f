//! Fit the pogit model: a logistic reporting regression on a proxy.
//!
//! Reporting probability is tied to an observed proxy through an orthogonal
//! cubic polynomial, so no cluster assignments are needed; areas with a
//! stronger proxy signal are estimated to report more completely.
//!
//! ```bash
//! cargo run --example fit_pogit
//! ```

use undercount::areal::compute_expected_counts;
use undercount::diagnostics::summarize;
use undercount::model::{orthogonal_poly, ModelConfig};
use undercount::sampler::{run_fit, Mechanism, ModelContext, SamplerConfig};
use undercount::synthetic::{simulate, SimDesign, TrueReporting};

fn main() -> undercount::Result<()> {
    let design = SimDesign {
        rows: 6,
        cols: 6,
        beta0: -5.0,
        beta: vec![0.3, -0.2],
        reporting: TrueReporting::Pogit {
            alpha0: 2.0,
            alpha: vec![0.5, 0.0, 0.0],
            sigma2_delta: 0.05,
        },
        seed: 515,
        ..SimDesign::default()
    };
    let (data, truth) = simulate(&design)?;

    let model = ModelConfig::pogit();
    let basis = orthogonal_poly(data.proxy_w().unwrap(), model.degree)?;
    let e = compute_expected_counts(&data)?;
    let ctx = ModelContext::new(&model, &data, &e, Mechanism::Pogit(&basis))?;

    let sampler = SamplerConfig {
        n_iter: 8_000,
        burn_in: 3_000,
        thin: 5,
        ..SamplerConfig::default()
    };
    let draws = run_fit(&sampler, &ctx)?;
    let summary = summarize(&draws, &ctx)?;

    println!("reporting regression (truth: alpha0 = 2, alpha = 0.5, 0, 0):");
    for name in ["alpha0", "alpha_1", "alpha_2", "alpha_3"] {
        let row = summary.params.iter().find(|p| p.name == name).unwrap();
        println!(
            "  {:<8} {:>8.4}  [{:>8.4}, {:>8.4}]",
            row.name, row.mean, row.hpd_lo, row.hpd_hi
        );
    }

    let est_mean_eps: f64 =
        summary.areas.iter().map(|a| a.eps_mean).sum::<f64>() / truth.eps.len() as f64;
    let true_mean_eps: f64 = truth.eps.iter().sum::<f64>() / truth.eps.len() as f64;
    println!("\nmean reporting probability: estimated {est_mean_eps:.3}, true {true_mean_eps:.3}");

    // The corrected incidence should exceed the naive observed rate, since
    // part of the counts was never reported.
    let naive: f64 = 1e5 * data.y().iter().sum::<u64>() as f64
        / data.n_pop().iter().sum::<u64>() as f64;
    let corrected: f64 = summary
        .areas
        .iter()
        .zip(data.n_pop())
        .map(|(a, &pop)| a.rate_per_100k * pop as f64)
        .sum::<f64>()
        / data.n_pop().iter().sum::<u64>() as f64;
    println!("incidence per 100,000: naive {naive:.1}, corrected {corrected:.1}");
    Ok(())
}
