//! Model specification: Poisson likelihood, relative-risk regression,
//! reporting mechanisms and prior log-densities for both models.

mod config;
mod icar;
mod likelihood;
mod params;
mod poly;
mod prior;

pub use config::{MechanismKind, ModelConfig, PriorConfig, DEFAULT_EXP_CLAMP, DEFAULT_GAMMA_UPPER};
pub use icar::{icar_logdensity, icar_pairwise_sum};
pub use likelihood::{
    eps_clustering, eps_pogit, eps_pogit_one, linear_predictor, linear_predictor_one,
    log_likelihood, poisson_logpmf_term, EPS_CAP,
};
pub use params::{ClusterReportParams, ModelState, PogitReportParams, ReportParams, RiskParams};
pub use poly::{orthogonal_poly, PolyBasis};
pub use prior::{log_prior, normal_logpdf, ordered_gamma_logprior, trunc_std_normal_logpdf};
