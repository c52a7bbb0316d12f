//! Posterior sampling: adaptive Metropolis-within-Gibbs over the full
//! parameter vector, one independent chain per seed.

mod chain;
mod config;
mod context;
mod draws;

pub use chain::{run_chain, run_fit, run_fit_with_threads};
pub use config::SamplerConfig;
pub use context::{Mechanism, ModelContext, ParamLayout};
pub use draws::{ChainDraws, PosteriorDraws};
