//! Intrinsic conditional autoregressive (ICAR) log-density.

use crate::areal::Adjacency;
use crate::{Error, Result};

/// Sum of squared differences over unique adjacency edges.
pub fn icar_pairwise_sum(s: &[f64], adjacency: &Adjacency) -> f64 {
    adjacency
        .edges()
        .iter()
        .map(|&(i, j)| {
            let d = s[i] - s[j];
            d * d
        })
        .sum()
}

/// ICAR log-density (up to the constant of the intrinsic prior):
/// `(A - c)/2 * ln(tau) - tau/2 * sum_{i~j} (s_i - s_j)^2` where `c` counts
/// connected components. Callers must keep `s` centered per component; the
/// pairwise sum itself is translation invariant.
pub fn icar_logdensity(s: &[f64], tau: f64, adjacency: &Adjacency) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::validation(format!(
            "ICAR precision must be positive and finite, got {tau}"
        )));
    }
    if s.len() != adjacency.n_nodes() {
        return Err(Error::validation(format!(
            "spatial effect has length {} but the graph has {} nodes",
            s.len(),
            adjacency.n_nodes()
        )));
    }
    let a = adjacency.n_nodes();
    let c = adjacency.n_components();
    let rank = (a - c) as f64;
    Ok(0.5 * rank * tau.ln() - 0.5 * tau * icar_pairwise_sum(s, adjacency))
}
