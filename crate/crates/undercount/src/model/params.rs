//! Parameter containers for both models.
//!
//! Fields are public so samplers can propose and mutate states freely; the
//! `validate` methods check the documented invariants, and the prior returns
//! negative infinity (not an error) for states outside their support.

use crate::{Error, Result};

/// Tolerance on the spatial sum-to-zero identification constraint.
pub const SUM_TO_ZERO_TOL: f64 = 1e-9;

/// Relative-risk parameters shared by both models.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskParams {
    pub beta0: f64,
    pub beta: Vec<f64>,
    /// Unstructured local effects, one per area.
    pub u: Vec<f64>,
    /// ICAR spatial effects, one per area, centered to sum to zero.
    pub s: Vec<f64>,
    pub sigma2_u: f64,
    pub sigma2_s: f64,
}

impl RiskParams {
    /// Zero-centered starting point with unit variances.
    pub fn zeros(p: usize, a: usize) -> Self {
        RiskParams {
            beta0: 0.0,
            beta: vec![0.0; p],
            u: vec![0.0; a],
            s: vec![0.0; a],
            sigma2_u: 1.0,
            sigma2_s: 1.0,
        }
    }

    /// ICAR precision implied by the spatial variance.
    pub fn tau_s(&self) -> f64 {
        1.0 / self.sigma2_s
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.len() != self.s.len() {
            return Err(Error::validation(format!(
                "u has length {} but s has length {}",
                self.u.len(),
                self.s.len()
            )));
        }
        if !(self.sigma2_u > 0.0) || !self.sigma2_u.is_finite() {
            return Err(Error::validation(format!(
                "sigma2_u must be positive and finite, got {}",
                self.sigma2_u
            )));
        }
        if !(self.sigma2_s > 0.0) || !self.sigma2_s.is_finite() {
            return Err(Error::validation(format!(
                "sigma2_s must be positive and finite, got {}",
                self.sigma2_s
            )));
        }
        let sum: f64 = self.s.iter().sum();
        if sum.abs() > SUM_TO_ZERO_TOL {
            return Err(Error::validation(format!(
                "spatial effects must sum to zero within {SUM_TO_ZERO_TOL}, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Ordered cluster underreporting sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReportParams {
    /// `gamma[j]` is the underreporting size of quality cluster `j + 1`;
    /// non-decreasing and inside [0, 1).
    pub gamma: Vec<f64>,
}

impl ClusterReportParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_empty() {
            return Err(Error::validation("gamma must not be empty"));
        }
        let mut prev = 0.0;
        for (j, &g) in self.gamma.iter().enumerate() {
            if !g.is_finite() || g < prev || g >= 1.0 {
                return Err(Error::validation(format!(
                    "gamma must be non-decreasing within [0, 1); entry {j} is {g}"
                )));
            }
            prev = g;
        }
        Ok(())
    }
}

/// Logistic reporting-regression parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PogitReportParams {
    pub alpha0: f64,
    /// Polynomial effects, one per basis column.
    pub alpha: Vec<f64>,
    /// Local reporting effects, one per area.
    pub delta: Vec<f64>,
    pub sigma2_delta: f64,
}

impl PogitReportParams {
    pub fn zeros(degree: usize, a: usize) -> Self {
        PogitReportParams {
            alpha0: 0.0,
            alpha: vec![0.0; degree],
            delta: vec![0.0; a],
            sigma2_delta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_delta > 0.0) || !self.sigma2_delta.is_finite() {
            return Err(Error::validation(format!(
                "sigma2_delta must be positive and finite, got {}",
                self.sigma2_delta
            )));
        }
        Ok(())
    }
}

/// Reporting-mechanism parameters for whichever model is in use.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportParams {
    Clustering(ClusterReportParams),
    Pogit(PogitReportParams),
}

impl ReportParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            ReportParams::Clustering(c) => c.validate(),
            ReportParams::Pogit(p) => p.validate(),
        }
    }
}

/// Complete parameter state of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub risk: RiskParams,
    pub report: ReportParams,
}

impl ModelState {
    pub fn validate(&self) -> Result<()> {
        self.risk.validate()?;
        self.report.validate()
    }
}
