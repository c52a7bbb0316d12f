//! Model configuration: mechanism choice and prior hyperparameters.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Exponent magnitude bound used when exponentiating linear predictors.
pub const DEFAULT_EXP_CLAMP: f64 = 50.0;

/// Upper bound of the ordered uniform support for the underreporting sizes,
/// kept strictly below 1 so reporting probabilities stay positive.
pub const DEFAULT_GAMMA_UPPER: f64 = 1.0 - 1e-6;

/// Which reporting mechanism the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    /// Cluster-indexed underreporting: `eps_i = 1 - gamma_{label(i)}`.
    Clustering,
    /// Logistic reporting regression on an orthogonal polynomial of a proxy.
    Pogit,
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MechanismKind::Clustering => write!(f, "clustering"),
            MechanismKind::Pogit => write!(f, "pogit"),
        }
    }
}

/// Fixed prior constants, all Gaussians parametrized as (mean, variance).
/// Defaults are the published elicitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub beta0_mean: f64,
    pub beta0_var: f64,
    /// Variance of the zero-mean covariate-effect priors.
    pub beta_var: f64,
    pub alpha0_mean: f64,
    pub alpha0_var: f64,
    /// Variance of the zero-mean polynomial-effect priors.
    pub alpha_var: f64,
    /// Upper bound b1 of the uniform prior on the first (best quality)
    /// underreporting size.
    pub gamma1_upper: f64,
    /// Upper bound of the conditional uniform prior for every later
    /// underreporting size.
    pub gamma_upper: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            beta0_mean: -8.0,
            beta0_var: 1.0,
            beta_var: 100.0,
            alpha0_mean: 2.0,
            alpha0_var: 0.36,
            alpha_var: 100.0,
            gamma1_upper: 0.05,
            gamma_upper: DEFAULT_GAMMA_UPPER,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta0_var", self.beta0_var),
            ("beta_var", self.beta_var),
            ("alpha0_var", self.alpha0_var),
            ("alpha_var", self.alpha_var),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(format!(
                    "prior variance {name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.gamma1_upper > 0.0 && self.gamma1_upper < 1.0) {
            return Err(Error::validation(format!(
                "gamma1_upper must lie in (0, 1), got {}",
                self.gamma1_upper
            )));
        }
        if !(self.gamma_upper >= self.gamma1_upper && self.gamma_upper < 1.0) {
            return Err(Error::validation(format!(
                "gamma_upper must lie in [gamma1_upper, 1), got {}",
                self.gamma_upper
            )));
        }
        Ok(())
    }
}

fn default_degree() -> usize {
    3
}

fn default_exp_clamp() -> f64 {
    DEFAULT_EXP_CLAMP
}

/// Full model specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mechanism: MechanismKind,
    /// Number of quality clusters (clustering mechanism only).
    #[serde(default)]
    pub k: Option<usize>,
    /// Degree of the orthogonal reporting polynomial (pogit mechanism only).
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default)]
    pub prior: PriorConfig,
    /// Linear predictors are clamped to this magnitude on the log or logit
    /// scale before exponentiating; clamping events are counted.
    #[serde(default = "default_exp_clamp")]
    pub exp_clamp: f64,
}

impl ModelConfig {
    /// Clustering model with `k` quality groups and published priors.
    pub fn clustering(k: usize) -> Self {
        ModelConfig {
            mechanism: MechanismKind::Clustering,
            k: Some(k),
            degree: default_degree(),
            prior: PriorConfig::default(),
            exp_clamp: DEFAULT_EXP_CLAMP,
        }
    }

    /// Pogit model with a cubic reporting polynomial and published priors.
    pub fn pogit() -> Self {
        ModelConfig {
            mechanism: MechanismKind::Pogit,
            k: None,
            degree: default_degree(),
            prior: PriorConfig::default(),
            exp_clamp: DEFAULT_EXP_CLAMP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if !(self.exp_clamp > 0.0) || !self.exp_clamp.is_finite() {
            return Err(Error::validation(format!(
                "exp_clamp must be positive and finite, got {}",
                self.exp_clamp
            )));
        }
        match self.mechanism {
            MechanismKind::Clustering => match self.k {
                Some(k) if k >= 1 => {}
                _ => {
                    return Err(Error::validation(
                        "clustering mechanism requires k >= 1 quality groups",
                    ));
                }
            },
            MechanismKind::Pogit => {
                if self.degree < 1 || self.degree > 5 {
                    return Err(Error::validation(format!(
                        "polynomial degree must lie in 1..=5, got {}",
                        self.degree
                    )));
                }
            }
        }
        Ok(())
    }
}
