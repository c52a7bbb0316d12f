//! Convergence diagnostics, posterior summaries and model comparison.
//!
//! All functions here are pure: they read immutable draw arrays and return
//! plain values. Pooling across chains happens only where stated (means,
//! SDs, HPD intervals, LPML); the potential scale reduction factor keeps
//! chains separate by construction.

use crate::mat::Matrix;
use crate::model::{eps_pogit_one, linear_predictor_one};
use crate::sampler::{Mechanism, ModelContext, ParamLayout, PosteriorDraws};
use crate::{areal, Error, Result};

/// Default HPD probability mass.
pub const DEFAULT_HPD_LEVEL: f64 = 0.95;
/// Default PSRF warning threshold.
pub const DEFAULT_PSRF_THRESHOLD: f64 = 1.1;
/// Minimum number of draws for an HPD interval.
const MIN_HPD_DRAWS: usize = 20;

/// Gelman-Rubin potential scale reduction factor of one scalar parameter.
///
/// With `m >= 2` chains of length `n`, within-chain variance `W` (mean of the
/// per-chain sample variances) and between-chain variance `B` (`n` times the
/// variance of the chain means), the statistic is
/// `sqrt(((n-1)/n * W + B/n) / W)`.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::validation(format!(
            "PSRF needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if n < 2 {
        return Err(Error::validation("PSRF needs at least 2 draws per chain"));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::validation("PSRF chains must have equal lengths"));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| c.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return Err(Error::numerical(
            "PSRF undefined: zero within-chain variance",
        ));
    }
    let grand = mean(&means);
    let b = nf * means.iter().map(|&x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1.0);
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

/// Shortest interval containing `ceil(level * n)` of the sorted draws.
///
/// Ties in width are broken toward the window with the lowest lower
/// endpoint, so the output is deterministic.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation(format!(
            "HPD level must lie in (0, 1), got {level}"
        )));
    }
    if draws.len() < MIN_HPD_DRAWS {
        return Err(Error::validation(format!(
            "HPD interval needs at least {MIN_HPD_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("HPD interval given non-finite draws"));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let k = ((level * n as f64).ceil() as usize).min(n);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=(n - k) {
        let width = sorted[i + k - 1] - sorted[i];
        if width < best_width {
            best_width = width;
            best = i;
        }
    }
    Ok((sorted[best], sorted[best + k - 1]))
}

/// LPML and per-area CPO values.
#[derive(Debug, Clone)]
pub struct ModelScore {
    /// Log pseudo-marginal likelihood, the sum of the per-area log CPOs.
    pub lpml: f64,
    /// Conditional predictive ordinate per area.
    pub cpo: Vec<f64>,
}

/// Model score from an M x A matrix of per-draw per-area log-likelihood
/// contributions.
///
/// `cpo_i` is the harmonic mean of the per-draw likelihoods, evaluated in a
/// log-sum-exp stabilized form: `log cpo_i = log M - logsumexp_m(-ll_mi)`.
pub fn lpml(loglik: &Matrix) -> Result<ModelScore> {
    let (m, a) = (loglik.rows(), loglik.cols());
    if m == 0 || a == 0 {
        return Err(Error::validation(
            "LPML needs at least one draw and one area",
        ));
    }
    if loglik.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "LPML given non-finite log-likelihood draws",
        ));
    }
    let ln_m = (m as f64).ln();
    let mut cpo = Vec::with_capacity(a);
    let mut total = 0.0;
    for i in 0..a {
        let neg: Vec<f64> = (0..m).map(|r| -loglik.get(r, i)).collect();
        let log_cpo = ln_m - logsumexp(&neg);
        total += log_cpo;
        cpo.push(log_cpo.exp());
    }
    Ok(ModelScore { lpml: total, cpo })
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
    /// None with a single chain or when the draws are degenerate.
    pub psrf: Option<f64>,
}

/// Posterior summary of one area.
#[derive(Debug, Clone)]
pub struct AreaSummary {
    pub area_id: String,
    pub theta_mean: f64,
    pub eps_mean: f64,
    pub rate_per_100k: f64,
    /// Quality-cluster label under the clustering model, 1-based.
    pub cluster_label: Option<usize>,
}

/// Full posterior summary of a fit.
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub params: Vec<ParamSummary>,
    pub areas: Vec<AreaSummary>,
    /// Names of parameters whose PSRF exceeded the warning threshold.
    pub psrf_warnings: Vec<String>,
    pub psrf_threshold: f64,
    pub hpd_level: f64,
}

/// Summarize a fit at the default 95% HPD level and PSRF threshold.
pub fn summarize(draws: &PosteriorDraws, ctx: &ModelContext<'_>) -> Result<FitSummary> {
    summarize_with(draws, ctx, DEFAULT_HPD_LEVEL, DEFAULT_PSRF_THRESHOLD)
}

/// Summarize a fit: pooled means and SDs, per-parameter HPD intervals and
/// PSRF, and per-area posterior means of the relative risk, the reporting
/// probability and the corrected incidence rate per 100,000.
pub fn summarize_with(
    draws: &PosteriorDraws,
    ctx: &ModelContext<'_>,
    hpd_level: f64,
    psrf_threshold: f64,
) -> Result<FitSummary> {
    let m_per_chain = draws.draws_per_chain();
    let m_total = draws.n_chains() * m_per_chain;
    if m_total == 0 {
        return Err(Error::validation("cannot summarize an empty set of draws"));
    }
    if draws.param_names.len() != ParamLayout::for_context(ctx).len()
        || draws.area_ids != ctx.data.area_ids()
    {
        return Err(Error::validation(
            "draws do not match the model context they are summarized against",
        ));
    }

    let mut params = Vec::with_capacity(draws.n_params());
    let mut psrf_warnings = Vec::new();
    for p in 0..draws.n_params() {
        let pooled = draws.pooled_param(p);
        let mu = mean(&pooled);
        let sd = if pooled.len() > 1 {
            (pooled.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>()
                / (pooled.len() as f64 - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let (hpd_lo, hpd_hi) = hpd_interval(&pooled, hpd_level)?;
        let r = if draws.n_chains() >= 2 {
            psrf(&draws.param_chains(p)).ok()
        } else {
            None
        };
        if let Some(v) = r {
            if v > psrf_threshold {
                psrf_warnings.push(draws.param_names[p].clone());
            }
        }
        params.push(ParamSummary {
            name: draws.param_names[p].clone(),
            mean: mu,
            sd,
            hpd_lo,
            hpd_hi,
            psrf: r,
        });
    }

    let areas = area_summaries(draws, ctx)?;
    Ok(FitSummary {
        params,
        areas,
        psrf_warnings,
        psrf_threshold,
        hpd_level,
    })
}

/// Replay every retained draw against the design to accumulate per-area
/// posterior means of theta and eps.
fn area_summaries(draws: &PosteriorDraws, ctx: &ModelContext<'_>) -> Result<Vec<AreaSummary>> {
    let layout = ParamLayout::for_context(ctx);
    let a = ctx.n_areas();
    let p = ctx.n_covariates();
    let x = ctx.data.covariates();
    let clamp = ctx.model.exp_clamp;

    let mut theta_sum = vec![0.0; a];
    let mut eps_sum = vec![0.0; a];
    let mut m_total = 0usize;
    let mut beta = vec![0.0; p];
    for chain in &draws.chains {
        for r in 0..chain.draws.rows() {
            let row = chain.draws.row(r);
            for (j, b) in beta.iter_mut().enumerate() {
                *b = row[layout.beta(j)];
            }
            for i in 0..a {
                let (theta, _) = linear_predictor_one(
                    row[layout.beta0()],
                    &beta,
                    x.row(i),
                    row[layout.u(i)],
                    row[layout.s(i)],
                    clamp,
                );
                theta_sum[i] += theta;
                let eps = match ctx.mechanism {
                    Mechanism::Clustering(m) => 1.0 - row[layout.gamma(m.group(i))],
                    Mechanism::Pogit(basis) => {
                        let alpha: Vec<f64> = (0..basis.degree())
                            .map(|j| row[layout.alpha(j)])
                            .collect();
                        let (eps, _) = eps_pogit_one(
                            row[layout.alpha0()],
                            &alpha,
                            basis.matrix().row(i),
                            row[layout.delta(i)],
                            clamp,
                        );
                        eps
                    }
                };
                eps_sum[i] += eps;
            }
            m_total += 1;
        }
    }

    let theta_mean: Vec<f64> = theta_sum.iter().map(|&t| t / m_total as f64).collect();
    let rates = areal::incidence_rate(&theta_mean, ctx.e, ctx.data.n_pop())?;
    Ok((0..a)
        .map(|i| AreaSummary {
            area_id: draws.area_ids[i].clone(),
            theta_mean: theta_mean[i],
            eps_mean: eps_sum[i] / m_total as f64,
            rate_per_100k: rates[i],
            cluster_label: match ctx.mechanism {
                Mechanism::Clustering(m) => Some(m.labels()[i]),
                Mechanism::Pogit(_) => None,
            },
        })
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::areal::{compute_expected_counts, Adjacency, ArealDataset};
    use crate::cluster::Membership;
    use crate::model::ModelConfig;
    use crate::sampler::{run_fit, SamplerConfig};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn psrf_identical_chains_hits_degenerate_floor() {
        let c: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let r = psrf(&[c.clone(), c]).unwrap();
        assert_relative_eq!(r, (49.0f64 / 50.0).sqrt(), epsilon = 1e-12);
        assert!(r < 1.0);
    }

    #[test]
    fn psrf_zero_within_variance_is_an_error() {
        let a = vec![0.0; 30];
        let b = vec![10.0; 30];
        assert!(psrf(&[a, b]).is_err());
    }

    #[test]
    fn psrf_requires_two_equal_length_chains() {
        assert!(psrf(&[vec![1.0, 2.0, 3.0]]).is_err());
        assert!(psrf(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn psrf_iid_normal_chains_stay_below_published_bound() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chains: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..1_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let r = psrf(&chains).unwrap();
            assert!(r < 1.04, "seed {seed}: psrf {r}");
        }
    }

    #[test]
    fn psrf_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chains: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let base = psrf(&chains).unwrap();
        let shifted: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|&x| -2.5 * x + 7.0).collect())
            .collect();
        assert_relative_eq!(psrf(&shifted).unwrap(), base, epsilon = 1e-10);
    }

    #[test]
    fn hpd_all_equal_is_zero_width() {
        let draws = vec![3.25; 40];
        assert_eq!(hpd_interval(&draws, 0.95).unwrap(), (3.25, 3.25));
    }

    #[test]
    fn hpd_1_to_100_first_minimal_window() {
        let draws: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(hpd_interval(&draws, 0.95).unwrap(), (1.0, 95.0));
    }

    #[test]
    fn hpd_uniform_draws_have_level_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let (lo, hi) = hpd_interval(&draws, 0.95).unwrap();
        assert!((hi - lo - 0.95).abs() < 0.02, "width {}", hi - lo);
    }

    #[test]
    fn hpd_matches_exhaustive_oracle() {
        // From-scratch oracle: enumerate every contiguous window over the
        // sorted draws and keep the first narrowest.
        fn oracle(draws: &[f64], level: f64) -> (f64, f64) {
            let mut s = draws.to_vec();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = ((level * s.len() as f64).ceil() as usize).min(s.len());
            let mut best = (f64::INFINITY, 0);
            for i in 0..=(s.len() - k) {
                let w = s[i + k - 1] - s[i];
                if w < best.0 {
                    best = (w, i);
                }
            }
            (s[best.1], s[best.1 + k - 1])
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [20usize, 37, 100, 333, 500] {
            for level in [0.5, 0.9, 0.95, 0.99] {
                let draws: Vec<f64> = (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * z * z
                    })
                    .collect();
                assert_eq!(hpd_interval(&draws, level).unwrap(), oracle(&draws, level));
            }
        }
    }

    #[test]
    fn hpd_contains_median_of_unimodal_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let mut draws: Vec<f64> =
                (0..501).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let (lo, hi) = hpd_interval(&draws, 0.95).unwrap();
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = draws[draws.len() / 2];
            assert!(lo <= median && median <= hi);
        }
    }

    #[test]
    fn hpd_rejects_short_or_degenerate_input() {
        assert!(hpd_interval(&vec![1.0; 19], 0.95).is_err());
        assert!(hpd_interval(&vec![1.0; 30], 1.0).is_err());
        assert!(hpd_interval(&[f64::NAN; 30], 0.95).is_err());
    }

    #[test]
    fn lpml_single_draw_is_the_likelihood() {
        let ll = Matrix::from_rows(&[vec![-1.5, -0.25, -3.0]]).unwrap();
        let score = lpml(&ll).unwrap();
        assert_relative_eq!(score.cpo[0], (-1.5f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(score.cpo[1], (-0.25f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(score.cpo[2], (-3.0f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(score.lpml, -4.75, epsilon = 1e-12);
    }

    #[test]
    fn lpml_two_draws_is_harmonic_mean() {
        let (l1, l2) = (0.2f64, 0.05f64);
        let ll = Matrix::from_rows(&[vec![l1.ln()], vec![l2.ln()]]).unwrap();
        let score = lpml(&ll).unwrap();
        assert_relative_eq!(score.cpo[0], 2.0 / (1.0 / l1 + 1.0 / l2), epsilon = 1e-14);
    }

    #[test]
    fn lpml_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| -5.0 + 4.0 * rng.gen::<f64>()).collect())
            .collect();
        let ll = Matrix::from_rows(&rows).unwrap();
        let score = lpml(&ll).unwrap();
        let mut naive_lpml = 0.0;
        for i in 0..3 {
            let inv_mean: f64 =
                (0..5).map(|m| (-rows[m][i]).exp()).sum::<f64>() / 5.0;
            let cpo = 1.0 / inv_mean;
            naive_lpml += cpo.ln();
            assert_relative_eq!(score.cpo[i], cpo, epsilon = 1e-10);
        }
        assert_relative_eq!(score.lpml, naive_lpml, epsilon = 1e-10);
    }

    #[test]
    fn lpml_permutation_invariant_and_additive() {
        let rows = vec![
            vec![-1.0, -2.0],
            vec![-1.5, -2.5],
            vec![-0.5, -1.75],
        ];
        let base = lpml(&Matrix::from_rows(&rows).unwrap()).unwrap();
        let permuted = vec![rows[2].clone(), rows[0].clone(), rows[1].clone()];
        let perm = lpml(&Matrix::from_rows(&permuted).unwrap()).unwrap();
        assert_relative_eq!(base.lpml, perm.lpml, epsilon = 1e-12);

        let col0 = lpml(&Matrix::from_rows(&rows.iter().map(|r| vec![r[0]]).collect::<Vec<_>>()).unwrap())
            .unwrap();
        let col1 = lpml(&Matrix::from_rows(&rows.iter().map(|r| vec![r[1]]).collect::<Vec<_>>()).unwrap())
            .unwrap();
        assert_relative_eq!(base.lpml, col0.lpml + col1.lpml, epsilon = 1e-12);
    }

    #[test]
    fn cpo_bounded_by_max_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| -10.0 * rng.gen::<f64>()).collect())
            .collect();
        let score = lpml(&Matrix::from_rows(&rows).unwrap()).unwrap();
        for i in 0..4 {
            let max_l = rows.iter().map(|r| r[i].exp()).fold(0.0, f64::max);
            assert!(score.cpo[i] <= max_l + 1e-15);
            assert!(score.cpo[i] > 0.0 && score.cpo[i] <= 1.0);
        }
    }

    #[test]
    fn lpml_rejects_bad_input() {
        assert!(lpml(&Matrix::zeros(0, 3)).is_err());
        assert!(lpml(&Matrix::from_rows(&[vec![f64::NAN]]).unwrap()).is_err());
    }

    fn small_fit() -> (ArealDataset, ModelConfig, Membership) {
        let a = 6;
        let ids: Vec<String> = (0..a).map(|i| format!("a{i}")).collect();
        let edges: Vec<(usize, usize)> = (0..a - 1).map(|i| (i, i + 1)).collect();
        let data = ArealDataset::new(
            ids,
            vec![14, 9, 21, 7, 11, 16],
            vec![1_000; a],
            vec!["x1".into()],
            Matrix::from_rows(
                &(0..a).map(|i| vec![(i as f64) * 0.3]).collect::<Vec<_>>(),
            )
            .unwrap(),
            None,
            vec![],
            None,
            Adjacency::from_edges(a, &edges).unwrap(),
        )
        .unwrap();
        let model = ModelConfig::clustering(2);
        let membership = Membership::new(2, vec![1, 1, 1, 2, 2, 2]).unwrap();
        (data, model, membership)
    }

    #[test]
    fn summarize_reports_means_hpd_and_area_tables() {
        let (data, model, membership) = small_fit();
        let e = compute_expected_counts(&data).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_iter: 3_000,
            burn_in: 1_000,
            thin: 5,
            ..SamplerConfig::default()
        };
        let fit = run_fit(&cfg, &ctx).unwrap();
        let summary = summarize(&fit, &ctx).unwrap();

        assert_eq!(summary.params.len(), fit.n_params());
        for row in &summary.params {
            assert!(row.hpd_lo <= row.hpd_hi, "{}", row.name);
            assert!(row.sd >= 0.0);
            let r = row.psrf.expect("two chains must yield a PSRF");
            assert!(r >= (0.999 * (399.0f64 / 400.0)).sqrt());
        }
        assert_eq!(summary.areas.len(), 6);
        for (i, area) in summary.areas.iter().enumerate() {
            assert!(area.theta_mean > 0.0);
            assert!(area.eps_mean > 0.0 && area.eps_mean <= 1.0);
            assert_eq!(area.cluster_label, Some(membership.labels()[i]));
            let expected_rate =
                1e5 * e.values()[i] * area.theta_mean / data.n_pop()[i] as f64;
            assert_relative_eq!(area.rate_per_100k, expected_rate, epsilon = 1e-9);
        }
        // gamma_1 must sit inside its prior support on average.
        let g1 = &summary.params[fit.param_index("gamma_1").unwrap()];
        assert!(g1.mean > 0.0 && g1.mean < 0.05);
    }

    #[test]
    fn summarize_rejects_mismatched_context() {
        let (data, model, membership) = small_fit();
        let e = compute_expected_counts(&data).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_iter: 1_200,
            burn_in: 400,
            thin: 4,
            ..SamplerConfig::default()
        };
        let fit = run_fit(&cfg, &ctx).unwrap();

        let other_model = ModelConfig::clustering(3);
        let other_membership = Membership::new(3, vec![1, 1, 2, 2, 3, 3]).unwrap();
        let other_ctx = ModelContext::new(
            &other_model,
            &data,
            &e,
            Mechanism::Clustering(&other_membership),
        )
        .unwrap();
        assert!(summarize(&fit, &other_ctx).is_err());
    }
}
