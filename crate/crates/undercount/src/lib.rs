/*!
Correction of underreporting bias in areal disease-count data.

Observed counts in disease registries are often a downward-biased fraction of
the true counts, and the bias varies by area. This crate fits two Bayesian
hierarchical Poisson models that estimate area-level relative risks jointly
with area-level reporting probabilities:

* the **Clustering Model**, where reporting probability is constant within
  externally defined data-quality groups and the group-level underreporting
  fractions are ordered (worse quality groups underreport more), and
* the **Pogit Model**, where the logit of the reporting probability is a
  cubic orthogonal-polynomial regression on a reporting proxy plus a local
  random effect.

Both share a log-linear relative-risk regression with iid local effects and
an intrinsic CAR (ICAR) spatial effect over the area adjacency graph.
Inference is adaptive Metropolis-within-Gibbs with multi-chain convergence
diagnostics (PSRF), HPD intervals, and LPML/CPO model comparison.

The main pieces:

* [`areal`] — datasets: counts, populations, covariates, adjacency, expected
  counts, incidence rates, CSV ingestion.
* [`cluster`] — Ward-linkage agglomerative clustering of data-quality
  indicators into ordered quality groups.
* [`model`] — both generative models as evaluable log-density components.
* [`sampler`] — the MCMC engine producing thinned multi-chain draws.
* [`diagnostics`] — PSRF, HPD intervals, posterior summaries, LPML.
* [`synthetic`] — a forward simulator for recovery and model-selection
  studies on lattice geographies.
* [`pipeline`] — batch orchestration (simulate / cluster / fit / compare)
  shared by the `undercount` binary and the runnable examples.

See the `examples/` directory for end-to-end walkthroughs of every
capability; `examples/fit_clustering.rs` is the best starting point.
*/

pub mod areal;
pub mod cluster;
pub mod diagnostics;
mod error;
pub mod mat;
pub mod model;
pub mod pipeline;
pub mod sampler;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
