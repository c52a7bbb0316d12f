//! Sampler run configuration.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Settings for a multi-chain adaptive Metropolis-within-Gibbs run.
///
/// The defaults are the desk-scale protocol (20,000 iterations, 5,000
/// burn-in, lag 10), sized so studies finish in minutes. The published
/// protocol (2 chains of 3,000,000 iterations, 1,000,000 burn-in, lag 3,000)
/// is available through [`SamplerConfig::paper_protocol`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    /// Base seed; chain `c` runs with `seed + c`.
    pub seed: u64,
    /// Sweeps between proposal-scale adaptations during burn-in.
    pub adapt_window: usize,
    /// Acceptance rate the scale adaptation drives toward.
    pub target_accept: f64,
    /// Replace the likelihood with a constant, so the chains sample the
    /// joint prior. Used for prior validation.
    pub prior_only: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 2,
            n_iter: 20_000,
            burn_in: 5_000,
            thin: 10,
            seed: 1,
            adapt_window: 50,
            target_accept: 0.44,
            prior_only: false,
        }
    }
}

impl SamplerConfig {
    /// Desk-scale defaults.
    pub fn desk() -> Self {
        SamplerConfig::default()
    }

    /// The published run protocol. Expect hours of compute.
    pub fn paper_protocol() -> Self {
        SamplerConfig {
            n_chains: 2,
            n_iter: 3_000_000,
            burn_in: 1_000_000,
            thin: 3_000,
            ..SamplerConfig::default()
        }
    }

    /// Thinned draws each chain will retain.
    pub fn draws_per_chain(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::validation("n_chains must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::validation("thin must be at least 1"));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::validation(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.draws_per_chain() < 2 {
            return Err(Error::validation(format!(
                "(n_iter - burn_in) / thin must be at least 2, got {}",
                self.draws_per_chain()
            )));
        }
        if self.adapt_window == 0 {
            return Err(Error::validation("adapt_window must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::validation(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        Ok(())
    }
}
