//! Thinned posterior draws.

use crate::mat::Matrix;

/// Draws retained by one chain.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    pub seed: u64,
    /// One row per retained draw, one column per scalar parameter.
    pub draws: Matrix,
    /// Per-draw per-area log-likelihood contributions (zeros in prior-only
    /// runs); stored during sampling so model scores are exact with respect
    /// to the retained draws.
    pub loglik: Matrix,
    /// Post-burn-in acceptance rate per update block.
    pub accept_rates: Vec<(String, f64)>,
    /// Times an exponent or logit hit the clamping bound.
    pub clamp_events: u64,
}

/// Multi-chain posterior draws. Chains are kept separate; diagnostics decide
/// when to pool.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub param_names: Vec<String>,
    pub area_ids: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.draws.rows())
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// One chain's draw sequence for one parameter.
    pub fn chain_param(&self, chain: usize, param: usize) -> Vec<f64> {
        self.chains[chain].draws.col(param)
    }

    /// Per-chain draw sequences for one parameter, ready for PSRF.
    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains())
            .map(|c| self.chain_param(c, param))
            .collect()
    }

    /// All chains' draws of one parameter concatenated in chain order.
    pub fn pooled_param(&self, param: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_chains() * self.draws_per_chain());
        for c in &self.chains {
            out.extend(c.draws.col(param));
        }
        out
    }

    /// Per-area log-likelihood rows pooled across chains (M x A).
    pub fn pooled_loglik(&self) -> Matrix {
        let a = self.area_ids.len();
        let m: usize = self.chains.iter().map(|c| c.loglik.rows()).sum();
        let mut out = Matrix::zeros(m, a);
        let mut r = 0;
        for c in &self.chains {
            for i in 0..c.loglik.rows() {
                for j in 0..a {
                    out.set(r, j, c.loglik.get(i, j));
                }
                r += 1;
            }
        }
        out
    }
}
