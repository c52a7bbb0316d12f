//! Poisson likelihood, risk linear predictor and reporting probabilities.

use statrs::function::gamma::ln_gamma;

use crate::areal::ExpectedCounts;
use crate::cluster::Membership;
use crate::mat::Matrix;
use crate::model::params::{ClusterReportParams, PogitReportParams};
use crate::{Error, Result};

/// Reporting probabilities from the logistic mechanism are capped at this
/// value so they stay strictly below 1.
pub const EPS_CAP: f64 = 1.0 - 1e-12;

/// One Poisson log-pmf term `y ln(mu) - mu - ln(y!)`. The mean must be
/// positive.
pub fn poisson_logpmf_term(y: u64, mu: f64) -> f64 {
    y as f64 * mu.ln() - mu - ln_gamma(y as f64 + 1.0)
}

/// Poisson log-likelihood with means `mu_i = e_i * theta_i * eps_i`.
pub fn log_likelihood(
    y: &[u64],
    e: &ExpectedCounts,
    theta: &[f64],
    eps: &[f64],
) -> Result<f64> {
    let n = y.len();
    if e.len() != n || theta.len() != n || eps.len() != n {
        return Err(Error::validation(format!(
            "length mismatch: y {}, e {}, theta {}, eps {}",
            n,
            e.len(),
            theta.len(),
            eps.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        let mu = e.values()[i] * theta[i] * eps[i];
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::validation(format!(
                "Poisson mean for area {i} is {mu}; means must be positive and finite"
            )));
        }
        total += poisson_logpmf_term(y[i], mu);
    }
    Ok(total)
}

fn clamp_exponent(eta: f64, clamp: f64) -> (f64, bool) {
    if eta > clamp {
        (clamp, true)
    } else if eta < -clamp {
        (-clamp, true)
    } else {
        (eta, false)
    }
}

/// Relative risk for one area: `exp(beta0 + x_row . beta + u_i + s_i)` with
/// the exponent clamped to `[-clamp, clamp]`. Returns the risk and whether
/// clamping fired.
pub fn linear_predictor_one(
    beta0: f64,
    beta: &[f64],
    x_row: &[f64],
    u_i: f64,
    s_i: f64,
    clamp: f64,
) -> (f64, bool) {
    let dot: f64 = x_row.iter().zip(beta).map(|(x, b)| x * b).sum();
    let (eta, clamped) = clamp_exponent(beta0 + dot + u_i + s_i, clamp);
    (eta.exp(), clamped)
}

/// Relative risks for all areas. Returns the risk vector and the number of
/// clamped exponents.
pub fn linear_predictor(
    beta0: f64,
    beta: &[f64],
    x: &Matrix,
    u: &[f64],
    s: &[f64],
    clamp: f64,
) -> Result<(Vec<f64>, usize)> {
    let a = x.rows();
    if beta.len() != x.cols() {
        return Err(Error::validation(format!(
            "beta has length {} but the design matrix has {} columns",
            beta.len(),
            x.cols()
        )));
    }
    if u.len() != a || s.len() != a {
        return Err(Error::validation(format!(
            "effect lengths (u {}, s {}) do not match {} areas",
            u.len(),
            s.len(),
            a
        )));
    }
    let mut theta = Vec::with_capacity(a);
    let mut clamped = 0;
    for i in 0..a {
        let (t, c) = linear_predictor_one(beta0, beta, x.row(i), u[i], s[i], clamp);
        theta.push(t);
        clamped += usize::from(c);
    }
    Ok((theta, clamped))
}

/// Reporting probabilities under the clustering mechanism:
/// `eps_i = 1 - gamma_{label(i)}`. Values lie in (0, 1] when the ordered
/// underreporting sizes are valid.
pub fn eps_clustering(gamma: &ClusterReportParams, membership: &Membership) -> Result<Vec<f64>> {
    gamma.validate()?;
    if gamma.gamma.len() != membership.k() {
        return Err(Error::validation(format!(
            "gamma has {} entries but the membership has {} clusters",
            gamma.gamma.len(),
            membership.k()
        )));
    }
    Ok((0..membership.n_areas())
        .map(|i| 1.0 - gamma.gamma[membership.group(i)])
        .collect())
}

/// Reporting probability for one area under the logistic mechanism. The
/// logit is clamped to `[-clamp, clamp]` and the probability is capped at
/// [`EPS_CAP`]. Returns the probability and whether clamping fired.
pub fn eps_pogit_one(
    alpha0: f64,
    alpha: &[f64],
    g_row: &[f64],
    delta_i: f64,
    clamp: f64,
) -> (f64, bool) {
    let dot: f64 = g_row.iter().zip(alpha).map(|(g, a)| g * a).sum();
    let (eta, clamped) = clamp_exponent(alpha0 + dot + delta_i, clamp);
    let eps = 1.0 / (1.0 + (-eta).exp());
    (eps.min(EPS_CAP), clamped)
}

/// Reporting probabilities for all areas under the logistic mechanism.
/// Returns the probabilities (all in (0, 1)) and the number of clamped
/// logits.
pub fn eps_pogit(
    params: &PogitReportParams,
    g_basis: &Matrix,
    clamp: f64,
) -> Result<(Vec<f64>, usize)> {
    let a = g_basis.rows();
    if params.alpha.len() != g_basis.cols() {
        return Err(Error::validation(format!(
            "alpha has length {} but the basis has {} columns",
            params.alpha.len(),
            g_basis.cols()
        )));
    }
    if params.delta.len() != a {
        return Err(Error::validation(format!(
            "delta has length {} but the basis has {} rows",
            params.delta.len(),
            a
        )));
    }
    let mut eps = Vec::with_capacity(a);
    let mut clamped = 0;
    for i in 0..a {
        let (e, c) = eps_pogit_one(
            params.alpha0,
            &params.alpha,
            g_basis.row(i),
            params.delta[i],
            clamp,
        );
        eps.push(e);
        clamped += usize::from(c);
    }
    Ok((eps, clamped))
}
