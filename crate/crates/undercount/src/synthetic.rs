//! Forward simulator for parameter-recovery and model-selection studies.
//!
//! Generates areal datasets on a regular lattice from either reporting
//! mechanism (or with a constant reporting probability), returning the
//! dataset together with the ground truth that produced it. Everything is
//! deterministic given the design seed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};

use crate::areal::{Adjacency, ArealDataset, ExpectedCounts};
use crate::cluster::Membership;
use crate::mat::Matrix;
use crate::model::{eps_pogit_one, orthogonal_poly, DEFAULT_EXP_CLAMP};
use crate::{Error, Result};

/// Eigenvalues below this are treated as the ICAR null space.
const EIGEN_NULL_TOL: f64 = 1e-9;

/// True reporting mechanism driving the simulated underreporting.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrueReporting {
    /// Cluster-indexed underreporting sizes, one per quality group.
    Clustering { gamma: Vec<f64> },
    /// Logistic reporting regression on the orthogonal polynomial basis of
    /// the simulated proxy.
    Pogit {
        alpha0: f64,
        alpha: Vec<f64>,
        sigma2_delta: f64,
    },
    /// The same reporting probability everywhere.
    Constant { eps: f64 },
}

/// Simulation design: lattice, true risk surface, quality-group structure
/// and reporting mechanism.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SimDesign {
    pub rows: usize,
    pub cols: usize,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub sigma2_u: f64,
    pub sigma2_s: f64,
    /// Number of quality groups areas are assigned to (round-robin).
    pub k_clusters: usize,
    /// Number of simulated quality-indicator columns.
    pub n_indicators: usize,
    /// Gap between consecutive group means on the indicator scale.
    pub indicator_separation: f64,
    /// Indicator noise standard deviation.
    pub indicator_noise: f64,
    /// Proxy noise standard deviation; the proxy tracks the same group
    /// structure but with weaker signal than the indicators.
    pub proxy_noise: f64,
    pub reporting: TrueReporting,
    /// Inclusive population bounds per area.
    pub pop_range: (u64, u64),
    pub seed: u64,
}

impl Default for SimDesign {
    fn default() -> Self {
        SimDesign {
            rows: 10,
            cols: 10,
            beta0: -5.0,
            beta: vec![0.3, -0.2, 0.15, -0.1, 0.05],
            sigma2_u: 0.05,
            sigma2_s: 0.1,
            k_clusters: 3,
            n_indicators: 4,
            indicator_separation: 4.0,
            indicator_noise: 0.5,
            proxy_noise: 2.0,
            reporting: TrueReporting::Clustering {
                gamma: vec![0.02, 0.15, 0.35],
            },
            pop_range: (20_000, 200_000),
            seed: 1,
        }
    }
}

impl SimDesign {
    pub fn n_areas(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::validation(format!(
                "lattice must be at least 2x2, got {}x{}",
                self.rows, self.cols
            )));
        }
        let finite = |v: f64| v.is_finite();
        if !finite(self.beta0) || self.beta.iter().any(|b| !finite(*b)) {
            return Err(Error::validation("non-finite regression coefficients"));
        }
        if !(self.sigma2_u >= 0.0 && finite(self.sigma2_u))
            || !(self.sigma2_s >= 0.0 && finite(self.sigma2_s))
        {
            return Err(Error::validation(
                "variance components must be finite and nonnegative",
            ));
        }
        if self.k_clusters == 0 || self.k_clusters > self.n_areas() {
            return Err(Error::validation(format!(
                "k_clusters {} out of range for {} areas",
                self.k_clusters,
                self.n_areas()
            )));
        }
        if self.n_indicators == 0 {
            return Err(Error::validation("need at least one quality indicator"));
        }
        if !finite(self.indicator_separation)
            || !(self.indicator_noise >= 0.0 && finite(self.indicator_noise))
            || !(self.proxy_noise >= 0.0 && finite(self.proxy_noise))
        {
            return Err(Error::validation("bad indicator noise specification"));
        }
        if self.pop_range.0 < 1 || self.pop_range.0 > self.pop_range.1 {
            return Err(Error::validation(format!(
                "population range ({}, {}) must satisfy 1 <= lo <= hi",
                self.pop_range.0, self.pop_range.1
            )));
        }
        match &self.reporting {
            TrueReporting::Clustering { gamma } => {
                if gamma.len() != self.k_clusters {
                    return Err(Error::validation(format!(
                        "{} underreporting sizes for {} clusters",
                        gamma.len(),
                        self.k_clusters
                    )));
                }
                let mut prev = 0.0;
                for &g in gamma {
                    if !(g >= prev && g < 1.0 && g.is_finite()) {
                        return Err(Error::validation(
                            "true gamma must be nondecreasing within [0, 1)",
                        ));
                    }
                    prev = g;
                }
            }
            TrueReporting::Pogit {
                alpha0,
                alpha,
                sigma2_delta,
            } => {
                if !finite(*alpha0) || alpha.iter().any(|a| !finite(*a)) {
                    return Err(Error::validation("non-finite reporting coefficients"));
                }
                if alpha.is_empty() || alpha.len() > 5 {
                    return Err(Error::validation(
                        "reporting polynomial degree must lie in 1..=5",
                    ));
                }
                if !(*sigma2_delta >= 0.0 && finite(*sigma2_delta)) {
                    return Err(Error::validation(
                        "sigma2_delta must be finite and nonnegative",
                    ));
                }
            }
            TrueReporting::Constant { eps } => {
                if !(*eps > 0.0 && *eps <= 1.0) {
                    return Err(Error::validation(format!(
                        "constant reporting probability {eps} outside (0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything the simulator drew, for recovery checks.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub design: SimDesign,
    /// 1-based quality-group labels.
    pub labels: Vec<usize>,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    /// Pogit area effects; empty under the other mechanisms.
    pub delta: Vec<f64>,
    pub theta: Vec<f64>,
    pub eps: Vec<f64>,
    /// Expected counts used in the Poisson mean (here the populations, so
    /// the intercept carries the baseline rate).
    pub e: ExpectedCounts,
}

impl GroundTruth {
    /// True quality-group membership.
    pub fn membership(&self) -> Result<Membership> {
        Membership::new(self.design.k_clusters, self.labels.clone())
    }
}

/// Rook-neighbourhood adjacency of a rows x cols lattice.
pub fn grid_adjacency(rows: usize, cols: usize) -> Result<Adjacency> {
    if rows < 2 || cols < 2 {
        return Err(Error::validation(format!(
            "lattice must be at least 2x2, got {rows}x{cols}"
        )));
    }
    let idx = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((idx(r, c), idx(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((idx(r, c), idx(r + 1, c)));
            }
        }
    }
    Adjacency::from_edges(rows * cols, &edges)
}

/// Draw a centered ICAR field with marginal scale `sigma2_s` by expanding
/// independent normals along the non-null eigenvectors of the graph
/// Laplacian, weighted by `sqrt(sigma2_s / lambda_k)`.
fn sample_icar(adjacency: &Adjacency, sigma2_s: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = adjacency.n_nodes();
    if sigma2_s == 0.0 {
        return vec![0.0; n];
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for &(i, j) in adjacency.edges() {
        lap[(i, i)] += 1.0;
        lap[(j, j)] += 1.0;
        lap[(i, j)] -= 1.0;
        lap[(j, i)] -= 1.0;
    }
    let eigen = lap.symmetric_eigen();
    let mut s = vec![0.0; n];
    for k in 0..n {
        let lambda = eigen.eigenvalues[k];
        if lambda <= EIGEN_NULL_TOL {
            continue;
        }
        let z: f64 = rng.sample(StandardNormal);
        let w = (sigma2_s / lambda).sqrt() * z;
        for i in 0..n {
            s[i] += w * eigen.eigenvectors[(i, k)];
        }
    }
    // The construction is orthogonal to each component's constant vector;
    // re-centering removes the remaining floating-point drift.
    let comps = adjacency.components();
    let n_comp = comps.iter().copied().max().map_or(0, |m| m + 1);
    for c in 0..n_comp {
        let members: Vec<usize> = (0..n).filter(|&i| comps[i] == c).collect();
        let mean: f64 = members.iter().map(|&i| s[i]).sum::<f64>() / members.len() as f64;
        for &i in &members {
            s[i] -= mean;
        }
    }
    s
}

/// Simulate a dataset and its ground truth from a design.
///
/// Draw order is fixed (covariates, populations, indicators, proxy, u, s,
/// reporting effects, counts) so a given seed always produces the same
/// dataset.
pub fn simulate(design: &SimDesign) -> Result<(ArealDataset, GroundTruth)> {
    design.validate()?;
    let a = design.n_areas();
    let p = design.beta.len();
    let k = design.k_clusters;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);

    let mut covariates = Matrix::zeros(a, p);
    for i in 0..a {
        for j in 0..p {
            covariates.set(i, j, rng.sample(StandardNormal));
        }
    }
    let n_pop: Vec<u64> = (0..a)
        .map(|_| rng.gen_range(design.pop_range.0..=design.pop_range.1))
        .collect();

    // Quality groups: round-robin assignment; group 1 reports best. Group
    // means decrease with the label so the ordering convention used by the
    // clustering stage (higher score = better quality = label 1) holds.
    let labels: Vec<usize> = (0..a).map(|i| 1 + i % k).collect();
    let group_mean =
        |g: usize| design.indicator_separation * (k - g) as f64;
    let mut indicators = Matrix::zeros(a, design.n_indicators);
    for i in 0..a {
        for j in 0..design.n_indicators {
            let z: f64 = rng.sample(StandardNormal);
            indicators.set(i, j, group_mean(labels[i]) + design.indicator_noise * z);
        }
    }
    let proxy: Vec<f64> = (0..a)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            group_mean(labels[i]) + design.proxy_noise * z
        })
        .collect();

    let sd_u = design.sigma2_u.sqrt();
    let u: Vec<f64> = (0..a)
        .map(|_| sd_u * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let adjacency = grid_adjacency(design.rows, design.cols)?;
    let s = sample_icar(&adjacency, design.sigma2_s, &mut rng);

    let theta: Vec<f64> = (0..a)
        .map(|i| {
            (design.beta0 + covariates.row_dot(i, &design.beta) + u[i] + s[i]).exp()
        })
        .collect();

    let (eps, delta) = match &design.reporting {
        TrueReporting::Clustering { gamma } => {
            let eps = (0..a).map(|i| 1.0 - gamma[labels[i] - 1]).collect();
            (eps, Vec::new())
        }
        TrueReporting::Pogit {
            alpha0,
            alpha,
            sigma2_delta,
        } => {
            let basis = orthogonal_poly(&proxy, alpha.len())?;
            let sd = sigma2_delta.sqrt();
            let delta: Vec<f64> = (0..a)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let eps = (0..a)
                .map(|i| {
                    eps_pogit_one(
                        *alpha0,
                        alpha,
                        basis.matrix().row(i),
                        delta[i],
                        DEFAULT_EXP_CLAMP,
                    )
                    .0
                })
                .collect();
            (eps, delta)
        }
        TrueReporting::Constant { eps } => (vec![*eps; a], Vec::new()),
    };

    let e = ExpectedCounts::from_values(n_pop.iter().map(|&v| v as f64).collect())?;
    let mut y = Vec::with_capacity(a);
    for i in 0..a {
        let lambda = e.values()[i] * theta[i] * eps[i];
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::numerical(format!(
                "degenerate Poisson mean {lambda} for area {i}"
            )));
        }
        let pois = Poisson::new(lambda)
            .map_err(|err| Error::numerical(format!("Poisson({lambda}): {err}")))?;
        y.push(rng.sample::<f64, _>(pois) as u64);
    }

    let width = a.to_string().len();
    let area_ids: Vec<String> = (0..a).map(|i| format!("a{i:0width$}")).collect();
    let covariate_names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let indicator_names: Vec<String> =
        (1..=design.n_indicators).map(|j| format!("q{j}")).collect();

    let data = ArealDataset::new(
        area_ids,
        y,
        n_pop,
        covariate_names,
        covariates,
        Some(proxy),
        indicator_names,
        Some(indicators),
        adjacency,
    )?;
    let truth = GroundTruth {
        design: design.clone(),
        labels,
        u,
        s,
        delta,
        theta,
        eps,
        e,
    };
    Ok((data, truth))
}
