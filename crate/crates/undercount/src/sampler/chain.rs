//! Adaptive Metropolis-within-Gibbs chains.
//!
//! Every scalar parameter is updated by a single-site Gaussian random-walk
//! proposal with its own step scale. Scales adapt toward a target acceptance
//! rate during burn-in and stay frozen afterward, preserving ergodicity. The
//! sweep order is fixed: intercept, covariate effects, local effects, spatial
//! effects (re-centered per graph component after the block), variances, then
//! the reporting parameters.
//!
//! Each chain caches its per-area log-likelihood terms and the joint
//! log-prior, updating both incrementally; a periodic audit recomputes them
//! from scratch and fails the run if the cached values drifted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::mat::Matrix;
use crate::model::{
    self, ClusterReportParams, ModelState, PogitReportParams, ReportParams, RiskParams, EPS_CAP,
};
use crate::sampler::config::SamplerConfig;
use crate::sampler::context::{Mechanism, ModelContext, ParamLayout};
use crate::sampler::draws::{ChainDraws, PosteriorDraws};
use crate::{Error, Result};

/// Sweeps between cache audits.
const DRIFT_CHECK_EVERY: usize = 1_000;
/// Allowed absolute drift between cached and recomputed log-posterior.
const DRIFT_TOL: f64 = 1e-8;
/// Log-scale bounds for adapted proposal scales.
const LOG_SCALE_MIN: f64 = -20.0;
const LOG_SCALE_MAX: f64 = 5.0;

/// Run a single chain. Deterministic given the seed.
pub fn run_chain(cfg: &SamplerConfig, ctx: &ModelContext<'_>, seed: u64) -> Result<ChainDraws> {
    cfg.validate()?;
    let layout = ParamLayout::for_context(ctx);
    run_chain_inner(cfg, ctx, &layout, seed)
}

/// Run all chains with seeds `cfg.seed + chain_index` and collect the draws.
/// Chains never share mutable state; draws stay separated per chain.
pub fn run_fit(cfg: &SamplerConfig, ctx: &ModelContext<'_>) -> Result<PosteriorDraws> {
    run_fit_with_threads(cfg, ctx, 1)
}

/// Like [`run_fit`], running up to `threads` chains at a time. Results are
/// identical to the sequential run; only wall time changes.
pub fn run_fit_with_threads(
    cfg: &SamplerConfig,
    ctx: &ModelContext<'_>,
    threads: usize,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let layout = ParamLayout::for_context(ctx);
    let seeds: Vec<u64> = (0..cfg.n_chains)
        .map(|c| cfg.seed.wrapping_add(c as u64))
        .collect();

    let mut chains = Vec::with_capacity(cfg.n_chains);
    if threads <= 1 {
        for &seed in &seeds {
            chains.push(run_chain_inner(cfg, ctx, &layout, seed)?);
        }
    } else {
        for group in seeds.chunks(threads) {
            let results: Vec<Result<ChainDraws>> = std::thread::scope(|scope| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|&seed| {
                        let layout = &layout;
                        scope.spawn(move || run_chain_inner(cfg, ctx, layout, seed))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("chain thread panicked"))
                    .collect()
            });
            for r in results {
                chains.push(r?);
            }
        }
    }

    Ok(PosteriorDraws {
        param_names: layout.names().to_vec(),
        area_ids: ctx.data.area_ids().to_vec(),
        chains,
    })
}

fn run_chain_inner(
    cfg: &SamplerConfig,
    ctx: &ModelContext<'_>,
    layout: &ParamLayout,
    seed: u64,
) -> Result<ChainDraws> {
    let mut chain = Chain::init(cfg, *ctx, layout, seed)?;
    let n_draws = cfg.draws_per_chain();
    let mut draws = Matrix::zeros(n_draws, layout.len());
    let mut loglik = Matrix::zeros(n_draws, ctx.n_areas());

    let mut row = 0;
    for t in 1..=cfg.n_iter {
        chain.sweep(t)?;
        if t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            chain.record(row, &mut draws, &mut loglik);
            row += 1;
        }
    }
    debug_assert_eq!(row, n_draws);
    chain.audit()?;

    Ok(ChainDraws {
        seed,
        draws,
        loglik,
        accept_rates: chain.block_accept_rates(),
        clamp_events: chain.clamp_events,
    })
}

/// Natural log of the reporting-probability cap.
fn ln_eps_cap() -> f64 {
    EPS_CAP.ln()
}

/// `ln(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

struct Chain<'a> {
    cfg: &'a SamplerConfig,
    ctx: ModelContext<'a>,
    layout: &'a ParamLayout,
    rng: ChaCha8Rng,
    st: ModelState,
    likelihood_on: bool,
    // Data-derived constants.
    y: Vec<f64>,
    ln_e: Vec<f64>,
    ln_fact: Vec<f64>,
    comp_members: Vec<Vec<usize>>,
    rank: f64,
    cluster_areas: Vec<Vec<usize>>,
    // State caches.
    eta: Vec<f64>,
    geta: Vec<f64>,
    ln_eps: Vec<f64>,
    ll: Vec<f64>,
    ll_sum: f64,
    lp: f64,
    sum_u_sq: f64,
    sum_delta_sq: f64,
    s_pair: f64,
    // Proposal machinery, one slot per scalar parameter.
    scales: Vec<f64>,
    win_acc: Vec<u32>,
    win_try: Vec<u32>,
    post_acc: Vec<u64>,
    post_try: Vec<u64>,
    scratch_ll: Vec<f64>,
    scratch_lneps: Vec<f64>,
    clamp_events: u64,
}

impl<'a> Chain<'a> {
    fn init(
        cfg: &'a SamplerConfig,
        ctx: ModelContext<'a>,
        layout: &'a ParamLayout,
        seed: u64,
    ) -> Result<Self> {
        let a = ctx.n_areas();
        let p = ctx.n_covariates();
        let prior = &ctx.model.prior;

        let report = match ctx.mechanism {
            Mechanism::Clustering(m) => {
                ReportParams::Clustering(ClusterReportParams {
                    gamma: initial_gamma(m.k(), prior.gamma1_upper, prior.gamma_upper),
                })
            }
            Mechanism::Pogit(b) => {
                let mut r = PogitReportParams::zeros(b.degree(), a);
                r.alpha0 = prior.alpha0_mean;
                r.sigma2_delta = 0.5;
                ReportParams::Pogit(r)
            }
        };
        let mut risk = RiskParams::zeros(p, a);
        risk.beta0 = prior.beta0_mean;
        risk.sigma2_u = 0.5;
        risk.sigma2_s = 0.5;
        let st = ModelState { risk, report };

        let comps = ctx.data.adjacency().components();
        let n_comp = comps.iter().copied().max().map_or(0, |m| m + 1);
        let mut comp_members = vec![Vec::new(); n_comp];
        for (i, &c) in comps.iter().enumerate() {
            comp_members[c].push(i);
        }
        let cluster_areas = match ctx.mechanism {
            Mechanism::Clustering(m) => {
                let mut groups = vec![Vec::new(); m.k()];
                for i in 0..a {
                    groups[m.group(i)].push(i);
                }
                groups
            }
            Mechanism::Pogit(_) => Vec::new(),
        };

        let mut scales = vec![0.1; layout.len()];
        scales[layout.sigma2_u()] = 0.25;
        scales[layout.sigma2_s()] = 0.25;
        if let Mechanism::Clustering(m) = ctx.mechanism {
            for j in 0..m.k() {
                scales[layout.gamma(j)] = 0.01;
            }
        } else {
            scales[layout.sigma2_delta()] = 0.25;
        }

        let mut chain = Chain {
            cfg,
            ctx,
            layout,
            rng: ChaCha8Rng::seed_from_u64(seed),
            st,
            likelihood_on: !cfg.prior_only,
            y: ctx.data.y().iter().map(|&v| v as f64).collect(),
            ln_e: ctx.e.values().iter().map(|&v| v.ln()).collect(),
            ln_fact: ctx
                .data
                .y()
                .iter()
                .map(|&v| ln_gamma(v as f64 + 1.0))
                .collect(),
            comp_members,
            rank: (a - n_comp) as f64,
            cluster_areas,
            eta: vec![0.0; a],
            geta: vec![0.0; a],
            ln_eps: vec![0.0; a],
            ll: vec![0.0; a],
            ll_sum: 0.0,
            lp: 0.0,
            sum_u_sq: 0.0,
            sum_delta_sq: 0.0,
            s_pair: 0.0,
            scales,
            win_acc: vec![0; layout.len()],
            win_try: vec![0; layout.len()],
            post_acc: vec![0; layout.len()],
            post_try: vec![0; layout.len()],
            scratch_ll: vec![0.0; a],
            scratch_lneps: vec![0.0; a],
            clamp_events: 0,
        };
        chain.rebuild_caches(true);
        let total = chain.lp + chain.ll_sum;
        if !total.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite log-posterior at initialization ({total})"
            )));
        }
        Ok(chain)
    }

    /// Clamped risk exponent.
    fn clamp(&self, x: f64) -> (f64, bool) {
        let c = self.ctx.model.exp_clamp;
        if x > c {
            (c, true)
        } else if x < -c {
            (-c, true)
        } else {
            (x, false)
        }
    }

    /// Log reporting probability implied by an (unclamped) reporting logit.
    fn ln_eps_of_logit(&self, geta: f64) -> (f64, bool) {
        let (g, clamped) = self.clamp(geta);
        ((-softplus(-g)).min(ln_eps_cap()), clamped)
    }

    /// Per-area log-likelihood term at the given unclamped risk predictor
    /// and log reporting probability.
    fn ll_term(&self, i: usize, eta_i: f64, ln_eps_i: f64) -> (f64, bool) {
        let (etac, clamped) = self.clamp(eta_i);
        let ln_mu = self.ln_e[i] + etac + ln_eps_i;
        (self.y[i] * ln_mu - ln_mu.exp() - self.ln_fact[i], clamped)
    }

    /// Recompute every cache from the current state. When `count_clamps` is
    /// set, clamping during the rebuild is added to the event counter.
    fn rebuild_caches(&mut self, count_clamps: bool) {
        let a = self.ctx.n_areas();
        let x = self.ctx.data.covariates();
        let r = &self.st.risk;
        for i in 0..a {
            self.eta[i] = r.beta0 + x.row_dot(i, &r.beta) + r.u[i] + r.s[i];
        }
        self.sum_u_sq = r.u.iter().map(|v| v * v).sum();
        self.s_pair = model::icar_pairwise_sum(&r.s, self.ctx.data.adjacency());

        match (&self.st.report, self.ctx.mechanism) {
            (ReportParams::Clustering(c), Mechanism::Clustering(m)) => {
                for i in 0..a {
                    self.ln_eps[i] = (-c.gamma[m.group(i)]).ln_1p();
                }
                self.sum_delta_sq = 0.0;
            }
            (ReportParams::Pogit(pg), Mechanism::Pogit(b)) => {
                let g = b.matrix();
                for i in 0..a {
                    self.geta[i] = pg.alpha0 + g.row_dot(i, &pg.alpha) + pg.delta[i];
                    let (le, clamped) = self.ln_eps_of_logit(self.geta[i]);
                    self.ln_eps[i] = le;
                    if clamped && count_clamps {
                        self.clamp_events += 1;
                    }
                }
                self.sum_delta_sq = pg.delta.iter().map(|v| v * v).sum();
            }
            _ => unreachable!("context construction enforces mechanism consistency"),
        }

        self.ll_sum = 0.0;
        for i in 0..a {
            if self.likelihood_on {
                let (term, clamped) = self.ll_term(i, self.eta[i], self.ln_eps[i]);
                self.ll[i] = term;
                if clamped && count_clamps {
                    self.clamp_events += 1;
                }
            } else {
                self.ll[i] = 0.0;
            }
            self.ll_sum += self.ll[i];
        }
        self.lp = model::log_prior(&self.st, self.ctx.model, self.ctx.data.adjacency());
    }

    /// Draw the proposal pair (step, acceptance uniform) and tally the
    /// decision for coordinate `idx`. Returns whether the move is accepted.
    fn decide(&mut self, idx: usize, delta: f64, uni: f64, post_burn: bool) -> bool {
        let accepted = uni.ln() < delta;
        self.win_try[idx] += 1;
        self.win_acc[idx] += u32::from(accepted);
        if post_burn {
            self.post_try[idx] += 1;
            self.post_acc[idx] += u64::from(accepted);
        }
        accepted
    }

    fn propose(&mut self, idx: usize, current: f64) -> (f64, f64) {
        let z: f64 = self.rng.sample(StandardNormal);
        let uni: f64 = self.rng.gen();
        (current + self.scales[idx] * z, uni)
    }

    fn sweep(&mut self, t: usize) -> Result<()> {
        let post = t > self.cfg.burn_in;
        let (a, p) = (self.ctx.n_areas(), self.ctx.n_covariates());

        self.update_risk_global(self.layout.beta0(), None, post);
        for j in 0..p {
            self.update_risk_global(self.layout.beta(j), Some(j), post);
        }
        for i in 0..a {
            self.update_u(i, post);
        }
        for i in 0..a {
            self.update_s(i, post);
        }
        self.recenter_s();
        self.update_sigma2_u(post);
        self.update_sigma2_s(post);

        match self.ctx.mechanism {
            Mechanism::Clustering(m) => {
                for j in 0..m.k() {
                    self.update_gamma(j, post);
                }
            }
            Mechanism::Pogit(_) => {
                self.update_report_global(self.layout.alpha0(), None, post);
                for j in 0..self.layout_degree() {
                    self.update_report_global(self.layout.alpha(j), Some(j), post);
                }
                for i in 0..a {
                    self.update_delta(i, post);
                }
                self.update_sigma2_delta(post);
            }
        }

        #[cfg(debug_assertions)]
        self.assert_invariants();

        if !post && t % self.cfg.adapt_window == 0 {
            self.adapt(t / self.cfg.adapt_window);
        }
        if t % DRIFT_CHECK_EVERY == 0 {
            self.audit()?;
        }
        Ok(())
    }

    fn layout_degree(&self) -> usize {
        match self.ctx.mechanism {
            Mechanism::Pogit(b) => b.degree(),
            Mechanism::Clustering(_) => 0,
        }
    }

    #[cfg(debug_assertions)]
    fn assert_invariants(&self) {
        if let ReportParams::Clustering(c) = &self.st.report {
            let mut prev = 0.0;
            for &g in &c.gamma {
                debug_assert!(g >= prev && g < 1.0, "gamma ordering violated");
                prev = g;
            }
        }
        for members in &self.comp_members {
            let sum: f64 = members.iter().map(|&i| self.st.risk.s[i]).sum();
            debug_assert!(sum.abs() <= 1e-9, "spatial effects not centered: {sum}");
        }
    }

    /// Intercept (`cov = None`) or covariate effect (`cov = Some(j)`).
    fn update_risk_global(&mut self, idx: usize, cov: Option<usize>, post: bool) {
        let cur = match cov {
            None => self.st.risk.beta0,
            Some(j) => self.st.risk.beta[j],
        };
        let (prop, uni) = self.propose(idx, cur);
        let d = prop - cur;
        let pr = &self.ctx.model.prior;
        let prior_delta = match cov {
            None => {
                let (m, v) = (pr.beta0_mean, pr.beta0_var);
                (sq(cur - m) - sq(prop - m)) / (2.0 * v)
            }
            Some(_) => (sq(cur) - sq(prop)) / (2.0 * pr.beta_var),
        };

        let mut ll_delta = 0.0;
        let mut clamps = 0;
        if self.likelihood_on {
            let ctx = self.ctx;
            let x = ctx.data.covariates();
            for i in 0..ctx.n_areas() {
                let shift = match cov {
                    None => d,
                    Some(j) => d * x.get(i, j),
                };
                let (term, clamped) = self.ll_term(i, self.eta[i] + shift, self.ln_eps[i]);
                self.scratch_ll[i] = term;
                ll_delta += term - self.ll[i];
                clamps += u64::from(clamped);
            }
        }

        if self.decide(idx, prior_delta + ll_delta, uni, post) {
            match cov {
                None => self.st.risk.beta0 = prop,
                Some(j) => self.st.risk.beta[j] = prop,
            }
            if self.likelihood_on {
                let ctx = self.ctx;
                let x = ctx.data.covariates();
                for i in 0..ctx.n_areas() {
                    let shift = match cov {
                        None => d,
                        Some(j) => d * x.get(i, j),
                    };
                    self.eta[i] += shift;
                    self.ll[i] = self.scratch_ll[i];
                }
                self.ll_sum += ll_delta;
                self.clamp_events += clamps;
            }
            self.lp += prior_delta;
        }
    }

    fn update_u(&mut self, i: usize, post: bool) {
        let idx = self.layout.u(i);
        let cur = self.st.risk.u[i];
        let (prop, uni) = self.propose(idx, cur);
        let prior_delta = (sq(cur) - sq(prop)) / (2.0 * self.st.risk.sigma2_u);

        let (ll_new, ll_delta, clamped) = if self.likelihood_on {
            let (term, clamped) = self.ll_term(i, self.eta[i] + (prop - cur), self.ln_eps[i]);
            (term, term - self.ll[i], clamped)
        } else {
            (0.0, 0.0, false)
        };

        if self.decide(idx, prior_delta + ll_delta, uni, post) {
            self.sum_u_sq += sq(prop) - sq(cur);
            if self.likelihood_on {
                self.eta[i] += prop - cur;
                self.ll[i] = ll_new;
                self.ll_sum += ll_delta;
                self.clamp_events += u64::from(clamped);
            }
            self.st.risk.u[i] = prop;
            self.lp += prior_delta;
        }
    }

    fn update_s(&mut self, i: usize, post: bool) {
        let idx = self.layout.s(i);
        let cur = self.st.risk.s[i];
        let (prop, uni) = self.propose(idx, cur);

        let mut pair_delta = 0.0;
        for &j in self.ctx.data.adjacency().neighbors(i) {
            let sj = self.st.risk.s[j];
            pair_delta += sq(prop - sj) - sq(cur - sj);
        }
        let tau = self.st.risk.tau_s();
        let prior_delta = -0.5 * tau * pair_delta;

        let (ll_new, ll_delta, clamped) = if self.likelihood_on {
            let (term, clamped) = self.ll_term(i, self.eta[i] + (prop - cur), self.ln_eps[i]);
            (term, term - self.ll[i], clamped)
        } else {
            (0.0, 0.0, false)
        };

        if self.decide(idx, prior_delta + ll_delta, uni, post) {
            self.s_pair += pair_delta;
            if self.likelihood_on {
                self.eta[i] += prop - cur;
                self.ll[i] = ll_new;
                self.ll_sum += ll_delta;
                self.clamp_events += u64::from(clamped);
            }
            self.st.risk.s[i] = prop;
            self.lp += prior_delta;
        }
    }

    /// Center spatial effects within each graph component, then refresh the
    /// caches the shift touched.
    fn recenter_s(&mut self) {
        for members in &self.comp_members {
            let mean: f64 =
                members.iter().map(|&i| self.st.risk.s[i]).sum::<f64>() / members.len() as f64;
            for &i in members {
                self.st.risk.s[i] -= mean;
                self.eta[i] -= mean;
            }
        }
        let new_pair = model::icar_pairwise_sum(&self.st.risk.s, self.ctx.data.adjacency());
        self.lp += -0.5 * self.st.risk.tau_s() * (new_pair - self.s_pair);
        self.s_pair = new_pair;

        if self.likelihood_on {
            self.ll_sum = 0.0;
            for i in 0..self.ctx.n_areas() {
                let (term, _) = self.ll_term(i, self.eta[i], self.ln_eps[i]);
                self.ll[i] = term;
                self.ll_sum += term;
            }
        }
    }

    fn update_sigma2_u(&mut self, post: bool) {
        let idx = self.layout.sigma2_u();
        let cur = self.st.risk.sigma2_u;
        let (prop, uni) = self.propose(idx, cur);
        let delta = if prop > 0.0 {
            let n = self.st.risk.u.len() as f64;
            (sq(cur) - sq(prop)) / 2.0
                - 0.5 * n * (prop.ln() - cur.ln())
                - 0.5 * self.sum_u_sq * (1.0 / prop - 1.0 / cur)
        } else {
            f64::NEG_INFINITY
        };
        if self.decide(idx, delta, uni, post) {
            self.st.risk.sigma2_u = prop;
            self.lp += delta;
        }
    }

    fn update_sigma2_s(&mut self, post: bool) {
        let idx = self.layout.sigma2_s();
        let cur = self.st.risk.sigma2_s;
        let (prop, uni) = self.propose(idx, cur);
        let delta = if prop > 0.0 {
            let (tau_new, tau_old) = (1.0 / prop, 1.0 / cur);
            (sq(cur) - sq(prop)) / 2.0
                + 0.5 * self.rank * (tau_new.ln() - tau_old.ln())
                - 0.5 * self.s_pair * (tau_new - tau_old)
        } else {
            f64::NEG_INFINITY
        };
        if self.decide(idx, delta, uni, post) {
            self.st.risk.sigma2_s = prop;
            self.lp += delta;
        }
    }

    fn update_gamma(&mut self, j: usize, post: bool) {
        let idx = self.layout.gamma(j);
        let pr = &self.ctx.model.prior;
        let (gamma_len, cur, lo, mut hi) = match &self.st.report {
            ReportParams::Clustering(c) => {
                let lo = if j == 0 { 0.0 } else { c.gamma[j - 1] };
                let hi = if j + 1 < c.gamma.len() {
                    c.gamma[j + 1]
                } else {
                    pr.gamma_upper
                };
                (c.gamma.len(), c.gamma[j], lo, hi)
            }
            ReportParams::Pogit(_) => unreachable!("gamma update only runs for clustering"),
        };
        if j == 0 {
            hi = hi.min(pr.gamma1_upper);
        }
        let (prop, uni) = self.propose(idx, cur);

        let delta = if prop <= lo || prop >= hi {
            f64::NEG_INFINITY
        } else {
            // The conditional prior of the next size depends on this one.
            let prior_delta = if j + 1 < gamma_len {
                (pr.gamma_upper - cur).ln() - (pr.gamma_upper - prop).ln()
            } else {
                0.0
            };
            let mut ll_delta = 0.0;
            if self.likelihood_on {
                let new_lneps = (-prop).ln_1p();
                for idx_area in 0..self.cluster_areas[j].len() {
                    let i = self.cluster_areas[j][idx_area];
                    let (term, _) = self.ll_term(i, self.eta[i], new_lneps);
                    self.scratch_ll[i] = term;
                    ll_delta += term - self.ll[i];
                }
            }
            prior_delta + ll_delta
        };

        if self.decide(idx, delta, uni, post) {
            let new_lneps = (-prop).ln_1p();
            if let ReportParams::Clustering(c) = &mut self.st.report {
                c.gamma[j] = prop;
            }
            if self.likelihood_on {
                let mut ll_delta = 0.0;
                for idx_area in 0..self.cluster_areas[j].len() {
                    let i = self.cluster_areas[j][idx_area];
                    self.ln_eps[i] = new_lneps;
                    ll_delta += self.scratch_ll[i] - self.ll[i];
                    self.ll[i] = self.scratch_ll[i];
                }
                self.ll_sum += ll_delta;
            } else {
                for &i in &self.cluster_areas[j] {
                    self.ln_eps[i] = new_lneps;
                }
            }
            let prior_delta = if j + 1 < gamma_len {
                (pr.gamma_upper - cur).ln() - (pr.gamma_upper - prop).ln()
            } else {
                0.0
            };
            self.lp += prior_delta;
        }
    }

    /// Reporting intercept (`col = None`) or polynomial effect
    /// (`col = Some(j)`).
    fn update_report_global(&mut self, idx: usize, col: Option<usize>, post: bool) {
        let pr = &self.ctx.model.prior;
        let cur = match (&self.st.report, col) {
            (ReportParams::Pogit(p), None) => p.alpha0,
            (ReportParams::Pogit(p), Some(j)) => p.alpha[j],
            _ => unreachable!("report global update only runs for pogit"),
        };
        let (prop, uni) = self.propose(idx, cur);
        let d = prop - cur;
        let prior_delta = match col {
            None => {
                let (m, v) = (pr.alpha0_mean, pr.alpha0_var);
                (sq(cur - m) - sq(prop - m)) / (2.0 * v)
            }
            Some(_) => (sq(cur) - sq(prop)) / (2.0 * pr.alpha_var),
        };

        let basis = match self.ctx.mechanism {
            Mechanism::Pogit(b) => b,
            Mechanism::Clustering(_) => unreachable!(),
        };
        let g = basis.matrix();
        let mut ll_delta = 0.0;
        let mut clamps = 0;
        for i in 0..self.ctx.n_areas() {
            let shift = match col {
                None => d,
                Some(j) => d * g.get(i, j),
            };
            let (lneps, c1) = self.ln_eps_of_logit(self.geta[i] + shift);
            self.scratch_lneps[i] = lneps;
            clamps += u64::from(c1);
            if self.likelihood_on {
                let (term, c2) = self.ll_term(i, self.eta[i], lneps);
                self.scratch_ll[i] = term;
                ll_delta += term - self.ll[i];
                clamps += u64::from(c2);
            }
        }

        if self.decide(idx, prior_delta + ll_delta, uni, post) {
            match (&mut self.st.report, col) {
                (ReportParams::Pogit(p), None) => p.alpha0 = prop,
                (ReportParams::Pogit(p), Some(j)) => p.alpha[j] = prop,
                _ => unreachable!(),
            }
            for i in 0..self.ctx.n_areas() {
                let shift = match col {
                    None => d,
                    Some(j) => d * g.get(i, j),
                };
                self.geta[i] += shift;
                self.ln_eps[i] = self.scratch_lneps[i];
                if self.likelihood_on {
                    self.ll[i] = self.scratch_ll[i];
                }
            }
            if self.likelihood_on {
                self.ll_sum += ll_delta;
            }
            self.clamp_events += clamps;
            self.lp += prior_delta;
        }
    }

    fn update_delta(&mut self, i: usize, post: bool) {
        let idx = self.layout.delta(i);
        let (cur, sigma2) = match &self.st.report {
            ReportParams::Pogit(p) => (p.delta[i], p.sigma2_delta),
            ReportParams::Clustering(_) => unreachable!("delta update only runs for pogit"),
        };
        let (prop, uni) = self.propose(idx, cur);
        let prior_delta = (sq(cur) - sq(prop)) / (2.0 * sigma2);

        let (lneps_new, c1) = self.ln_eps_of_logit(self.geta[i] + (prop - cur));
        let (ll_new, ll_delta, c2) = if self.likelihood_on {
            let (term, c2) = self.ll_term(i, self.eta[i], lneps_new);
            (term, term - self.ll[i], c2)
        } else {
            (0.0, 0.0, false)
        };

        if self.decide(idx, prior_delta + ll_delta, uni, post) {
            self.sum_delta_sq += sq(prop) - sq(cur);
            self.geta[i] += prop - cur;
            self.ln_eps[i] = lneps_new;
            if self.likelihood_on {
                self.ll[i] = ll_new;
                self.ll_sum += ll_delta;
            }
            self.clamp_events += u64::from(c1) + u64::from(c2);
            if let ReportParams::Pogit(p) = &mut self.st.report {
                p.delta[i] = prop;
            }
            self.lp += prior_delta;
        }
    }

    fn update_sigma2_delta(&mut self, post: bool) {
        let idx = self.layout.sigma2_delta();
        let cur = match &self.st.report {
            ReportParams::Pogit(p) => p.sigma2_delta,
            ReportParams::Clustering(_) => unreachable!(),
        };
        let (prop, uni) = self.propose(idx, cur);
        let delta = if prop > 0.0 {
            let n = self.ctx.n_areas() as f64;
            (sq(cur) - sq(prop)) / 2.0
                - 0.5 * n * (prop.ln() - cur.ln())
                - 0.5 * self.sum_delta_sq * (1.0 / prop - 1.0 / cur)
        } else {
            f64::NEG_INFINITY
        };
        if self.decide(idx, delta, uni, post) {
            if let ReportParams::Pogit(p) = &mut self.st.report {
                p.sigma2_delta = prop;
            }
            self.lp += delta;
        }
    }

    /// Robbins-Monro step on the log proposal scales, batch `b`.
    fn adapt(&mut self, b: usize) {
        let step = (2.0 / (b as f64).sqrt()).min(1.0);
        for idx in 0..self.scales.len() {
            if self.win_try[idx] == 0 {
                continue;
            }
            let rate = self.win_acc[idx] as f64 / self.win_try[idx] as f64;
            let ln_scale = (self.scales[idx].ln() + step * (rate - self.cfg.target_accept))
                .clamp(LOG_SCALE_MIN, LOG_SCALE_MAX);
            self.scales[idx] = ln_scale.exp();
            self.win_acc[idx] = 0;
            self.win_try[idx] = 0;
        }
    }

    /// Recompute the log-posterior from scratch and compare with the cached
    /// value. Drift beyond tolerance is a numerical failure; otherwise the
    /// caches are resynchronized to the fresh values.
    fn audit(&mut self) -> Result<()> {
        let cached = self.lp + self.ll_sum;
        self.rebuild_caches(false);
        let fresh = self.lp + self.ll_sum;
        if (cached - fresh).abs() > DRIFT_TOL {
            return Err(Error::numerical(format!(
                "cached log-posterior drifted from {fresh} to {cached}; \
                 the incremental updates are inconsistent"
            )));
        }
        Ok(())
    }

    fn record(&self, row: usize, draws: &mut Matrix, loglik: &mut Matrix) {
        let l = self.layout;
        let r = &self.st.risk;
        draws.set(row, l.beta0(), r.beta0);
        for (j, &b) in r.beta.iter().enumerate() {
            draws.set(row, l.beta(j), b);
        }
        for (i, &v) in r.u.iter().enumerate() {
            draws.set(row, l.u(i), v);
        }
        for (i, &v) in r.s.iter().enumerate() {
            draws.set(row, l.s(i), v);
        }
        draws.set(row, l.sigma2_u(), r.sigma2_u);
        draws.set(row, l.sigma2_s(), r.sigma2_s);
        match &self.st.report {
            ReportParams::Clustering(c) => {
                for (j, &g) in c.gamma.iter().enumerate() {
                    draws.set(row, l.gamma(j), g);
                }
            }
            ReportParams::Pogit(p) => {
                draws.set(row, l.alpha0(), p.alpha0);
                for (j, &v) in p.alpha.iter().enumerate() {
                    draws.set(row, l.alpha(j), v);
                }
                for (i, &v) in p.delta.iter().enumerate() {
                    draws.set(row, l.delta(i), v);
                }
                draws.set(row, l.sigma2_delta(), p.sigma2_delta);
            }
        }
        for (i, &v) in self.ll.iter().enumerate() {
            loglik.set(row, i, v);
        }
    }

    /// Post-burn-in acceptance rates aggregated per update block.
    fn block_accept_rates(&self) -> Vec<(String, f64)> {
        let l = self.layout;
        let (a, p) = (self.ctx.n_areas(), self.ctx.n_covariates());
        let rate = |range: Vec<usize>| -> f64 {
            let tries: u64 = range.iter().map(|&i| self.post_try[i]).sum();
            let accs: u64 = range.iter().map(|&i| self.post_acc[i]).sum();
            if tries == 0 {
                0.0
            } else {
                accs as f64 / tries as f64
            }
        };
        let mut out = vec![
            ("beta0".to_string(), rate(vec![l.beta0()])),
            ("beta".to_string(), rate((0..p).map(|j| l.beta(j)).collect())),
            ("u".to_string(), rate((0..a).map(|i| l.u(i)).collect())),
            ("s".to_string(), rate((0..a).map(|i| l.s(i)).collect())),
            ("sigma2_u".to_string(), rate(vec![l.sigma2_u()])),
            ("sigma2_s".to_string(), rate(vec![l.sigma2_s()])),
        ];
        match self.ctx.mechanism {
            Mechanism::Clustering(m) => {
                out.push((
                    "gamma".to_string(),
                    rate((0..m.k()).map(|j| l.gamma(j)).collect()),
                ));
            }
            Mechanism::Pogit(b) => {
                out.push(("alpha0".to_string(), rate(vec![l.alpha0()])));
                out.push((
                    "alpha".to_string(),
                    rate((0..b.degree()).map(|j| l.alpha(j)).collect()),
                ));
                out.push(("delta".to_string(), rate((0..a).map(|i| l.delta(i)).collect())));
                out.push(("sigma2_delta".to_string(), rate(vec![l.sigma2_delta()])));
            }
        }
        if p == 0 {
            out.retain(|(name, _)| name != "beta");
        }
        out
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

/// Deterministic in-support starting point for the ordered underreporting
/// sizes: the first at half its bound, the rest equally spaced over half the
/// remaining range.
fn initial_gamma(k: usize, b1: f64, bk: f64) -> Vec<f64> {
    let g1 = 0.5 * b1.min(bk);
    if k == 1 {
        return vec![g1];
    }
    (0..k)
        .map(|j| g1 + 0.5 * (bk - b1) * j as f64 / (k - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::areal::{compute_expected_counts, Adjacency, ArealDataset, ExpectedCounts};
    use crate::cluster::Membership;
    use crate::model::{orthogonal_poly, ModelConfig};

    fn line_dataset(a: usize, counts: &[u64]) -> ArealDataset {
        let ids: Vec<String> = (0..a).map(|i| format!("r{i}")).collect();
        let edges: Vec<(usize, usize)> = (0..a - 1).map(|i| (i, i + 1)).collect();
        ArealDataset::new(
            ids,
            counts.to_vec(),
            vec![1_000; a],
            vec!["x1".into()],
            Matrix::from_rows(&(0..a).map(|i| vec![(i as f64) / a as f64]).collect::<Vec<_>>())
                .unwrap(),
            Some((0..a).map(|i| i as f64).collect()),
            vec![],
            None,
            Adjacency::from_edges(a, &edges).unwrap(),
        )
        .unwrap()
    }

    fn batch_mean_mcse(series: &[f64]) -> (f64, f64) {
        let nb = 20;
        let bs = series.len() / nb;
        assert!(bs >= 5, "series too short for batch means");
        let means: Vec<f64> = (0..nb)
            .map(|b| series[b * bs..(b + 1) * bs].iter().sum::<f64>() / bs as f64)
            .collect();
        let mean = means.iter().sum::<f64>() / nb as f64;
        let var = means.iter().map(|m| sq(m - mean)).sum::<f64>() / (nb - 1) as f64;
        (mean, (var / nb as f64).sqrt())
    }

    #[test]
    fn initial_gamma_in_support() {
        for k in [1usize, 2, 3, 5, 23] {
            let g = initial_gamma(k, 0.05, 1.0 - 1e-6);
            assert!(g[0] > 0.0 && g[0] <= 0.05);
            for w in g.windows(2) {
                assert!(w[0] < w[1]);
            }
            assert!(*g.last().unwrap() < 1.0 - 1e-6);
        }
    }

    #[test]
    fn same_seed_reproduces_bit_identical_draws() {
        let data = line_dataset(6, &[4, 9, 2, 7, 3, 8]);
        let e = compute_expected_counts(&data).unwrap();
        let model = ModelConfig::clustering(2);
        let membership = Membership::new(2, vec![1, 1, 1, 2, 2, 2]).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_iter: 2_000,
            burn_in: 500,
            thin: 5,
            ..SamplerConfig::default()
        };
        let d1 = run_chain(&cfg, &ctx, 7).unwrap();
        let d2 = run_chain(&cfg, &ctx, 7).unwrap();
        assert_eq!(d1.draws.data(), d2.draws.data());
        assert_eq!(d1.loglik.data(), d2.loglik.data());
        assert_eq!(d1.accept_rates, d2.accept_rates);
    }

    #[test]
    fn distinct_seeds_differ_and_threads_match_sequential() {
        let data = line_dataset(6, &[4, 9, 2, 7, 3, 8]);
        let e = compute_expected_counts(&data).unwrap();
        let model = ModelConfig::clustering(2);
        let membership = Membership::new(2, vec![1, 1, 1, 2, 2, 2]).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_iter: 1_000,
            burn_in: 400,
            thin: 3,
            ..SamplerConfig::default()
        };
        let fit = run_fit(&cfg, &ctx).unwrap();
        assert_eq!(fit.n_chains(), 2);
        assert_eq!(fit.draws_per_chain(), 200);
        assert_ne!(fit.chains[0].draws.data(), fit.chains[1].draws.data());

        let threaded = run_fit_with_threads(&cfg, &ctx, 2).unwrap();
        for (sc, tc) in fit.chains.iter().zip(&threaded.chains) {
            assert_eq!(sc.draws.data(), tc.draws.data());
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let data = line_dataset(4, &[1, 2, 3, 4]);
        let e = compute_expected_counts(&data).unwrap();
        let model = ModelConfig::clustering(2);
        let membership = Membership::new(2, vec![1, 1, 2, 2]).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_iter: 1_000,
            burn_in: 1_000,
            ..SamplerConfig::default()
        };
        assert!(run_chain(&cfg, &ctx, 0).is_err());
    }

    #[test]
    fn prior_only_beta0_recovers_prior_moments() {
        let data = line_dataset(4, &[1, 2, 3, 4]);
        let e = compute_expected_counts(&data).unwrap();
        let model = ModelConfig::clustering(2);
        let membership = Membership::new(2, vec![1, 1, 2, 2]).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_chains: 1,
            n_iter: 120_000,
            burn_in: 20_000,
            thin: 10,
            prior_only: true,
            ..SamplerConfig::default()
        };
        let fit = run_fit(&cfg, &ctx).unwrap();
        let b0 = fit.pooled_param(fit.param_index("beta0").unwrap());

        let (mean, mcse) = batch_mean_mcse(&b0);
        assert!(
            (mean - (-8.0)).abs() < 3.0 * mcse,
            "prior mean {mean} vs -8 (mcse {mcse})"
        );
        let sq_dev: Vec<f64> = b0.iter().map(|x| sq(x + 8.0)).collect();
        let (var, var_mcse) = batch_mean_mcse(&sq_dev);
        assert!(
            (var - 1.0).abs() < 3.0 * var_mcse,
            "prior variance {var} vs 1 (mcse {var_mcse})"
        );
        // Prior-only runs leave the likelihood rows at zero.
        assert!(fit.chains[0].loglik.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gamma_ordering_holds_on_every_draw() {
        let data = line_dataset(4, &[1, 2, 3, 4]);
        let e = compute_expected_counts(&data).unwrap();
        let model = ModelConfig::clustering(3);
        let membership = Membership::new(3, vec![1, 2, 3, 3]).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_chains: 1,
            n_iter: 30_000,
            burn_in: 5_000,
            thin: 5,
            prior_only: true,
            ..SamplerConfig::default()
        };
        let fit = run_fit(&cfg, &ctx).unwrap();
        let g: Vec<Vec<f64>> = (0..3)
            .map(|j| fit.pooled_param(fit.param_index(&format!("gamma_{}", j + 1)).unwrap()))
            .collect();
        for m in 0..g[0].len() {
            assert!(g[0][m] <= g[1][m] && g[1][m] <= g[2][m]);
            assert!(g[0][m] >= 0.0 && g[0][m] <= 0.05);
            assert!(g[2][m] < 1.0);
        }
    }

    #[test]
    fn gamma_prior_matches_direct_simulation() {
        // Two-sample Kolmogorov-Smirnov between prior-only MCMC draws of
        // gamma and direct simulation from the ordered uniform prior. The
        // threshold uses the asymptotic 1% critical value with a 10x
        // discount on the MCMC sample size for autocorrelation.
        let data = line_dataset(4, &[1, 2, 3, 4]);
        let e = compute_expected_counts(&data).unwrap();
        let model = ModelConfig::clustering(3);
        let membership = Membership::new(3, vec![1, 2, 3, 3]).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_chains: 1,
            n_iter: 220_000,
            burn_in: 20_000,
            thin: 20,
            prior_only: true,
            ..SamplerConfig::default()
        };
        let fit = run_fit(&cfg, &ctx).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m_direct = 100_000;
        let (b1, bk) = (0.05, crate::model::DEFAULT_GAMMA_UPPER);
        let mut direct = vec![Vec::with_capacity(m_direct); 3];
        for _ in 0..m_direct {
            let g1: f64 = rng.gen_range(0.0..b1);
            let g2: f64 = rng.gen_range(g1..bk);
            let g3: f64 = rng.gen_range(g2..bk);
            direct[0].push(g1);
            direct[1].push(g2);
            direct[2].push(g3);
        }

        for j in 0..3 {
            let mut mcmc =
                fit.pooled_param(fit.param_index(&format!("gamma_{}", j + 1)).unwrap());
            let mut ref_draws = direct[j].clone();
            mcmc.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ref_draws.sort_by(|a, b| a.partial_cmp(b).unwrap());

            let n = mcmc.len() as f64;
            let m = ref_draws.len() as f64;
            let mut d: f64 = 0.0;
            let (mut i, mut k) = (0usize, 0usize);
            while i < mcmc.len() && k < ref_draws.len() {
                if mcmc[i] <= ref_draws[k] {
                    i += 1;
                } else {
                    k += 1;
                }
                let diff = (i as f64 / n - k as f64 / m).abs();
                d = d.max(diff);
            }
            let crit = 1.628 * (1.0 / (n / 10.0) + 1.0 / m).sqrt();
            assert!(d < crit, "gamma_{} KS statistic {d} >= {crit}", j + 1);
        }
    }

    #[test]
    fn pogit_prior_only_alpha0_moments() {
        let data = line_dataset(5, &[1, 2, 3, 4, 5]);
        let e = compute_expected_counts(&data).unwrap();
        let model = ModelConfig::pogit();
        let basis = orthogonal_poly(data.proxy_w().unwrap(), 3).unwrap();
        let ctx = ModelContext::new(&model, &data, &e, Mechanism::Pogit(&basis)).unwrap();
        let cfg = SamplerConfig {
            n_chains: 1,
            n_iter: 120_000,
            burn_in: 20_000,
            thin: 10,
            prior_only: true,
            ..SamplerConfig::default()
        };
        let fit = run_fit(&cfg, &ctx).unwrap();
        let a0 = fit.pooled_param(fit.param_index("alpha0").unwrap());
        let (mean, mcse) = batch_mean_mcse(&a0);
        assert!((mean - 2.0).abs() < 3.0 * mcse, "{mean} vs 2 ({mcse})");
        let sq_dev: Vec<f64> = a0.iter().map(|x| sq(x - 2.0)).collect();
        let (var, var_mcse) = batch_mean_mcse(&sq_dev);
        assert!((var - 0.36).abs() < 3.0 * var_mcse, "{var} vs 0.36 ({var_mcse})");
    }

    #[test]
    fn likelihood_run_adapts_and_audits() {
        // A short full-likelihood run on a dataset with real counts: the
        // periodic audits must pass, draws must be finite, and the adapted
        // acceptance rates must land near the target.
        let counts: Vec<u64> = (0..12).map(|i| 20 + (i * 7) % 30).collect();
        let data = line_dataset(12, &counts);
        let e = compute_expected_counts(&data).unwrap();
        let model = ModelConfig::clustering(2);
        let membership =
            Membership::new(2, (0..12).map(|i| 1 + (i >= 6) as usize).collect()).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_chains: 1,
            n_iter: 12_000,
            burn_in: 4_000,
            thin: 4,
            ..SamplerConfig::default()
        };
        let fit = run_fit(&cfg, &ctx).unwrap();
        let chain = &fit.chains[0];
        assert_eq!(chain.draws.rows(), 2_000);
        assert!(chain.draws.data().iter().all(|v| v.is_finite()));
        assert!(chain.loglik.data().iter().all(|v| v.is_finite()));
        for (name, rate) in &chain.accept_rates {
            assert!(
                (0.05..=0.9).contains(rate),
                "block {name} acceptance {rate} escaped the adapted range"
            );
        }
    }

    #[test]
    fn initialization_failure_reported_as_numerical() {
        // An absurd expected count drives the initial log-posterior to
        // non-finite territory.
        let data = line_dataset(4, &[1, 2, 3, 4]);
        let e = ExpectedCounts::from_values(vec![1e308, 1e308, 1e308, 1e308]).unwrap();
        let model = ModelConfig::clustering(2);
        let membership = Membership::new(2, vec![1, 1, 2, 2]).unwrap();
        let ctx =
            ModelContext::new(&model, &data, &e, Mechanism::Clustering(&membership)).unwrap();
        let cfg = SamplerConfig {
            n_iter: 100,
            burn_in: 50,
            thin: 1,
            ..SamplerConfig::default()
        };
        let err = run_chain(&cfg, &ctx, 0).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
