//! Bound model context: configuration, data and reporting-mechanism inputs.

use crate::areal::{ArealDataset, ExpectedCounts};
use crate::cluster::Membership;
use crate::model::{MechanismKind, ModelConfig, PolyBasis};
use crate::{Error, Result};

/// Reporting-mechanism inputs the sampler needs beyond the dataset itself.
#[derive(Debug, Clone, Copy)]
pub enum Mechanism<'a> {
    /// Quality-cluster membership for the clustering model.
    Clustering(&'a Membership),
    /// Fitted orthogonal polynomial basis for the pogit model.
    Pogit(&'a PolyBasis),
}

/// Everything needed to evaluate one model on one dataset. Immutable and
/// shareable across chains.
#[derive(Debug, Clone, Copy)]
pub struct ModelContext<'a> {
    pub model: &'a ModelConfig,
    pub data: &'a ArealDataset,
    pub e: &'a ExpectedCounts,
    pub mechanism: Mechanism<'a>,
}

impl<'a> ModelContext<'a> {
    pub fn new(
        model: &'a ModelConfig,
        data: &'a ArealDataset,
        e: &'a ExpectedCounts,
        mechanism: Mechanism<'a>,
    ) -> Result<Self> {
        model.validate()?;
        let a = data.n_areas();
        if e.len() != a {
            return Err(Error::validation(format!(
                "expected counts have length {} but the dataset has {} areas",
                e.len(),
                a
            )));
        }
        match (&mechanism, model.mechanism) {
            (Mechanism::Clustering(m), MechanismKind::Clustering) => {
                if m.n_areas() != a {
                    return Err(Error::validation(format!(
                        "membership covers {} areas but the dataset has {}",
                        m.n_areas(),
                        a
                    )));
                }
                if model.k != Some(m.k()) {
                    return Err(Error::validation(format!(
                        "model expects k={:?} clusters but the membership has {}",
                        model.k,
                        m.k()
                    )));
                }
            }
            (Mechanism::Pogit(b), MechanismKind::Pogit) => {
                if b.matrix().rows() != a {
                    return Err(Error::validation(format!(
                        "polynomial basis covers {} areas but the dataset has {}",
                        b.matrix().rows(),
                        a
                    )));
                }
                if b.degree() != model.degree {
                    return Err(Error::validation(format!(
                        "model expects degree {} but the basis has degree {}",
                        model.degree,
                        b.degree()
                    )));
                }
            }
            _ => {
                return Err(Error::validation(
                    "reporting-mechanism inputs do not match the configured mechanism",
                ));
            }
        }
        Ok(ModelContext {
            model,
            data,
            e,
            mechanism,
        })
    }

    pub fn n_areas(&self) -> usize {
        self.data.n_areas()
    }

    pub fn n_covariates(&self) -> usize {
        self.data.covariates().cols()
    }
}

/// Names and offsets of the scalar parameters in a draw vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    names: Vec<String>,
    p: usize,
    a: usize,
    mechanism: MechanismKind,
    /// Cluster count or polynomial degree, depending on mechanism.
    report_len: usize,
}

impl ParamLayout {
    pub fn for_context(ctx: &ModelContext<'_>) -> Self {
        let p = ctx.n_covariates();
        let a = ctx.n_areas();
        let ids = ctx.data.area_ids();
        let mut names = Vec::new();
        names.push("beta0".to_string());
        for name in ctx.data.covariate_names() {
            names.push(format!("beta_{name}"));
        }
        for id in ids {
            names.push(format!("u_{id}"));
        }
        for id in ids {
            names.push(format!("s_{id}"));
        }
        names.push("sigma2_u".to_string());
        names.push("sigma2_s".to_string());
        let report_len = match ctx.mechanism {
            Mechanism::Clustering(m) => {
                for j in 1..=m.k() {
                    names.push(format!("gamma_{j}"));
                }
                m.k()
            }
            Mechanism::Pogit(b) => {
                names.push("alpha0".to_string());
                for j in 1..=b.degree() {
                    names.push(format!("alpha_{j}"));
                }
                for id in ids {
                    names.push(format!("delta_{id}"));
                }
                names.push("sigma2_delta".to_string());
                b.degree()
            }
        };
        ParamLayout {
            names,
            p,
            a,
            mechanism: ctx.model.mechanism,
            report_len,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn beta0(&self) -> usize {
        0
    }

    pub fn beta(&self, j: usize) -> usize {
        1 + j
    }

    pub fn u(&self, i: usize) -> usize {
        1 + self.p + i
    }

    pub fn s(&self, i: usize) -> usize {
        1 + self.p + self.a + i
    }

    pub fn sigma2_u(&self) -> usize {
        1 + self.p + 2 * self.a
    }

    pub fn sigma2_s(&self) -> usize {
        self.sigma2_u() + 1
    }

    fn report_base(&self) -> usize {
        self.sigma2_s() + 1
    }

    /// Index of `gamma_{j+1}` (clustering mechanism).
    pub fn gamma(&self, j: usize) -> usize {
        self.report_base() + j
    }

    pub fn alpha0(&self) -> usize {
        self.report_base()
    }

    pub fn alpha(&self, j: usize) -> usize {
        self.report_base() + 1 + j
    }

    pub fn delta(&self, i: usize) -> usize {
        self.report_base() + 1 + self.report_len + i
    }

    pub fn sigma2_delta(&self) -> usize {
        self.report_base() + 1 + self.report_len + self.a
    }

    /// Names of the regression coefficients (risk and, for pogit, reporting),
    /// the parameters convergence is judged on.
    pub fn regression_names(&self) -> Vec<String> {
        let mut out = vec!["beta0".to_string()];
        out.extend(self.names[1..=self.p].iter().cloned());
        if self.mechanism == MechanismKind::Pogit {
            out.push("alpha0".to_string());
            for j in 1..=self.report_len {
                out.push(format!("alpha_{j}"));
            }
        }
        out
    }
}
