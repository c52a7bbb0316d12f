//! Joint log-prior over a full model state.

use std::f64::consts::{LN_2, PI};

use crate::areal::Adjacency;
use crate::model::config::{MechanismKind, ModelConfig};
use crate::model::icar::icar_logdensity;
use crate::model::params::{ModelState, ReportParams, SUM_TO_ZERO_TOL};

/// Gaussian log-density parametrized by mean and variance.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - 0.5 * d * d / var
}

/// Standard normal truncated to (0, inf): `ln 2 + phi(x)` for positive `x`,
/// negative infinity otherwise.
pub fn trunc_std_normal_logpdf(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        LN_2 + normal_logpdf(x, 0.0, 1.0)
    } else {
        f64::NEG_INFINITY
    }
}

/// Ordered uniform prior over the underreporting sizes:
/// `gamma_1 ~ U(0, b1)` and `gamma_j | gamma_{j-1} ~ U(gamma_{j-1}, bk)`.
/// Returns negative infinity outside the ordered support.
pub fn ordered_gamma_logprior(gamma: &[f64], b1: f64, bk: f64) -> f64 {
    if gamma.is_empty() {
        return f64::NEG_INFINITY;
    }
    if !gamma[0].is_finite() || gamma[0] < 0.0 || gamma[0] > b1 {
        return f64::NEG_INFINITY;
    }
    let mut lp = -b1.ln();
    for j in 1..gamma.len() {
        let (prev, g) = (gamma[j - 1], gamma[j]);
        if !g.is_finite() || g < prev || g >= bk {
            return f64::NEG_INFINITY;
        }
        lp -= (bk - prev).ln();
    }
    lp
}

fn component_sums_centered(s: &[f64], adjacency: &Adjacency) -> bool {
    let comps = adjacency.components();
    let n_comp = comps.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; n_comp];
    for (i, &c) in comps.iter().enumerate() {
        sums[c] += s[i];
    }
    sums.iter().all(|v| v.abs() <= SUM_TO_ZERO_TOL)
}

/// Joint log-prior of a full state. States outside the prior support (or
/// structurally inconsistent with the configuration) get negative infinity
/// so Metropolis steps can reject them without special cases.
pub fn log_prior(state: &ModelState, config: &ModelConfig, adjacency: &Adjacency) -> f64 {
    let r = &state.risk;
    let a = adjacency.n_nodes();
    if r.u.len() != a || r.s.len() != a {
        return f64::NEG_INFINITY;
    }
    if !(r.sigma2_u > 0.0 && r.sigma2_u.is_finite()) {
        return f64::NEG_INFINITY;
    }
    if !(r.sigma2_s > 0.0 && r.sigma2_s.is_finite()) {
        return f64::NEG_INFINITY;
    }
    if !component_sums_centered(&r.s, adjacency) {
        return f64::NEG_INFINITY;
    }

    let pr = &config.prior;
    let mut lp = normal_logpdf(r.beta0, pr.beta0_mean, pr.beta0_var);
    for &b in &r.beta {
        lp += normal_logpdf(b, 0.0, pr.beta_var);
    }
    for &ui in &r.u {
        lp += normal_logpdf(ui, 0.0, r.sigma2_u);
    }
    lp += trunc_std_normal_logpdf(r.sigma2_u);
    lp += trunc_std_normal_logpdf(r.sigma2_s);
    match icar_logdensity(&r.s, r.tau_s(), adjacency) {
        Ok(v) => lp += v,
        Err(_) => return f64::NEG_INFINITY,
    }

    match (&state.report, config.mechanism) {
        (ReportParams::Clustering(c), MechanismKind::Clustering) => {
            if config.k != Some(c.gamma.len()) {
                return f64::NEG_INFINITY;
            }
            lp += ordered_gamma_logprior(&c.gamma, pr.gamma1_upper, pr.gamma_upper);
        }
        (ReportParams::Pogit(p), MechanismKind::Pogit) => {
            if p.alpha.len() != config.degree || p.delta.len() != a {
                return f64::NEG_INFINITY;
            }
            if !(p.sigma2_delta > 0.0 && p.sigma2_delta.is_finite()) {
                return f64::NEG_INFINITY;
            }
            lp += normal_logpdf(p.alpha0, pr.alpha0_mean, pr.alpha0_var);
            for &aj in &p.alpha {
                lp += normal_logpdf(aj, 0.0, pr.alpha_var);
            }
            for &di in &p.delta {
                lp += normal_logpdf(di, 0.0, p.sigma2_delta);
            }
            lp += trunc_std_normal_logpdf(p.sigma2_delta);
        }
        _ => return f64::NEG_INFINITY,
    }
    lp
}
