use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::louis::louis_flat;
use super::{batch_mean_se, THETA_FLOOR};
use crate::error::{Error, Result};
use crate::intlin::greedy_reorder;
use crate::linalg::Matrix;
use crate::models::{ModelKind, TrafficModel};
use crate::netmodel::{LinkCountSample, RoutingMatrix};
use crate::rng::{substream, ChainRng};
use crate::sampler::{route_flow_caps, Chain, Proposal, ScanOrder};
use crate::special;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Conditional draws per observation in the first E-step.
    pub m_init: usize,
    pub burn_in_per_estep: usize,
    pub pilot_iters: usize,
    pub n_pilot_phases: usize,
    pub max_outer_iters: usize,
    pub m_growth_factor: f64,
    pub m_max: usize,
    /// One-sided confidence level of the ascent bounds.
    pub confidence: f64,
    /// Convergence is declared once the upper ascent bound drops below this.
    pub tol: f64,
    pub alpha_max: f64,
    /// EM updates per E-step on importance-reweighted draws; 1 gives plain
    /// stochastic EM with the `Q̂` ascent test.
    pub reweight_steps: usize,
    /// Reweighting stops once any observation's effective sample size
    /// falls below this fraction of its draws.
    pub min_ess_fraction: f64,
    pub proposal: Proposal,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            m_init: 2000,
            burn_in_per_estep: 2000,
            pilot_iters: 2000,
            n_pilot_phases: 2,
            max_outer_iters: 200,
            m_growth_factor: 1.5,
            m_max: 200_000,
            confidence: 0.95,
            tol: 1e-3,
            alpha_max: 1e3,
            reweight_steps: 50,
            min_ess_fraction: 0.5,
            proposal: Proposal::GibbsExact,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_init == 0 || self.m_max < self.m_init {
            return Err(Error::Invalid("need 1 <= m_init <= m_max".into()));
        }
        if !(self.m_growth_factor > 1.0) {
            return Err(Error::Invalid("m_growth_factor must exceed 1".into()));
        }
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(Error::Invalid("confidence must lie in (0.5, 1)".into()));
        }
        if self.reweight_steps == 0 || !(self.min_ess_fraction > 0.0 && self.min_ess_fraction <= 1.0) {
            return Err(Error::Invalid("need reweight_steps >= 1 and min_ess_fraction in (0, 1]".into()));
        }
        if !(self.tol > 0.0) || !(self.alpha_max > 0.0) {
            return Err(Error::Invalid("tol and alpha_max must be positive".into()));
        }
        Ok(())
    }
}

/// One outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmStep {
    /// Parameters proposed by the M-step.
    pub theta: Vec<f64>,
    pub alpha: Option<f64>,
    pub m: usize,
    /// `Q̂` at the proposed parameters (mean over draws of `Σ_t log f`).
    pub q: f64,
    /// Estimated objective increase and its MC standard error: the `Q̂`
    /// increase for plain steps, the importance-sampling log-likelihood
    /// increase on held-out draws for reweighted steps.
    pub delta: f64,
    pub delta_se: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmResult {
    pub theta_hat: Vec<f64>,
    pub alpha_hat: Option<f64>,
    pub std_errors: Vec<f64>,
    pub info_matrix: Matrix<f64>,
    pub pseudo_inverse: bool,
    pub converged: bool,
    pub trajectory: Vec<EmStep>,
    /// Monte Carlo standard error of the final E-step's mean of `x_j`
    /// (averaged over observations), per route.
    pub estep_se: Vec<f64>,
    pub final_m: usize,
}

struct ObsChain {
    chain: Chain,
    rng: ChainRng,
}

/// Draws in the order `[obs][draw * r + route]`.
struct Draws {
    r: usize,
    m: usize,
    per_obs: Vec<Vec<i64>>,
}

impl Draws {
    fn n(&self) -> usize {
        self.per_obs.len()
    }

    /// First and second half of every observation's draws.
    fn halves(&self) -> (Draws, Draws) {
        let h = self.m / 2;
        let split = |lo: usize, hi: usize| Draws {
            r: self.r,
            m: hi - lo,
            per_obs: self.per_obs.iter().map(|d| d[lo * self.r..hi * self.r].to_vec()).collect(),
        };
        (split(0, h), split(h, self.m))
    }

    /// `log f(x)` for every draw, `[obs][draw]`.
    fn log_masses(&self, m: &TrafficModel<f64>) -> Vec<Vec<f64>> {
        let table = m.table(&self.max_per_route());
        self.per_obs.iter().map(|d| d.chunks(self.r).map(|x| table.log_mass(x)).collect()).collect()
    }

    fn max_per_route(&self) -> Vec<i64> {
        let mut mx = vec![0; self.r];
        for d in &self.per_obs {
            for x in d.chunks(self.r) {
                for (m, &v) in mx.iter_mut().zip(x) {
                    *m = (*m).max(v);
                }
            }
        }
        mx
    }
}

/// Pooled sufficient statistics: per-route totals and survival counts
/// `C_{j,k} = #{draws with x_j > k}`.
struct SuffStats {
    total: f64,
    sums: Vec<f64>,
    survival: Vec<Vec<f64>>,
    log_fact: f64,
}

impl SuffStats {
    fn new(d: &Draws) -> Self {
        Self::weighted(d, None)
    }

    /// Draw weights `w[obs][draw]`, if given, should sum to `M` per observation.
    fn weighted(d: &Draws, w: Option<&[Vec<f64>]>) -> Self {
        let max = d.max_per_route();
        let mut hist: Vec<Vec<f64>> = max.iter().map(|&m| vec![0.0; m as usize + 1]).collect();
        let mut log_fact = 0.0;
        for (t, obs) in d.per_obs.iter().enumerate() {
            for (i, x) in obs.chunks(d.r).enumerate() {
                let wi = w.map_or(1.0, |w| w[t][i]);
                for (h, &v) in hist.iter_mut().zip(x) {
                    h[v as usize] += wi;
                }
            }
        }
        let sums = hist.iter().map(|h| h.iter().enumerate().map(|(v, c)| v as f64 * c).sum()).collect();
        let survival = hist
            .iter()
            .map(|h| {
                let mut s = vec![0.0; h.len().saturating_sub(1)];
                let mut acc = 0.0;
                for v in (1..h.len()).rev() {
                    acc += h[v];
                    s[v - 1] = acc;
                }
                s
            })
            .collect();
        for h in &hist {
            for (v, c) in h.iter().enumerate() {
                if *c > 0.0 {
                    log_fact += c * special::ln_gamma(v as f64 + 1.0);
                }
            }
        }
        SuffStats { total: (d.m * d.n()) as f64, sums, survival, log_fact }
    }

    /// `Σ_k C_k ln(θ + kα)` for route `j`.
    fn log_terms(&self, j: usize, theta: f64, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return self.sums[j] * theta.ln();
        }
        self.survival[j].iter().enumerate().map(|(k, c)| c * (theta + k as f64 * alpha).ln()).sum()
    }

    /// Total of `log f` over all draws (not divided by `M`).
    fn q_total(&self, theta: &[f64], alpha: f64) -> f64 {
        let g = special::log1p_over(alpha);
        let l1p = alpha.ln_1p();
        let mut q = -self.log_fact;
        for (j, &t) in theta.iter().enumerate() {
            q += self.log_terms(j, t, alpha) - self.total * t * g - self.sums[j] * l1p;
        }
        q
    }

    /// Maximiser of the pooled log-likelihood in `θ_j` for fixed `α`.
    fn theta_given_alpha(&self, j: usize, alpha: f64) -> f64 {
        let s = self.sums[j];
        if s == 0.0 {
            return THETA_FLOOR;
        }
        if alpha == 0.0 {
            return (s / self.total).max(THETA_FLOOR);
        }
        let g = special::log1p_over(alpha);
        let target = self.total * g;
        let c = &self.survival[j];
        let score = |t: f64| -> (f64, f64) {
            let mut h = -target;
            let mut dh = 0.0;
            for (k, ck) in c.iter().enumerate() {
                let den = t + k as f64 * alpha;
                h += ck / den;
                dh -= ck / (den * den);
            }
            (h, dh)
        };
        let mut lo = c[0] / target;
        let mut hi = s / target;
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (h, dh) = score(t);
            if h > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - h / dh;
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-13 * hi || h == 0.0 {
                break;
            }
        }
        t.max(THETA_FLOOR)
    }

    fn profile(&self, alpha: f64) -> (Vec<f64>, f64) {
        let theta: Vec<f64> = (0..self.sums.len()).map(|j| self.theta_given_alpha(j, alpha)).collect();
        let q = self.q_total(&theta, alpha);
        (theta, q)
    }
}

fn m_step(stats: &SuffStats, kind: ModelKind, alpha_old: f64, alpha_max: f64) -> (Vec<f64>, f64) {
    if kind == ModelKind::Poisson {
        return (stats.profile(0.0).0, 0.0);
    }
    // golden section on s = ln(1 + α)
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, alpha_max.ln_1p());
    let f = |s: f64| stats.profile(s.exp_m1()).1;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
        if b - a < 1e-10 {
            break;
        }
    }
    let mut best = (0.5 * (a + b)).exp_m1();
    let mut best_q = stats.profile(best).1;
    for cand in [0.0, alpha_old] {
        let q = stats.profile(cand).1;
        if q > best_q {
            best = cand;
            best_q = q;
        }
    }
    (stats.profile(best).0, best)
}

fn model(kind: ModelKind, theta: &[f64], alpha: f64) -> Result<TrafficModel<f64>> {
    TrafficModel::new(kind, theta.to_vec(), alpha)
}

/// Per-draw `Σ_t [log f(x; new) − log f(x; old)]`, draw index outermost.
fn per_draw_delta(d: &Draws, old: &TrafficModel<f64>, new: &TrafficModel<f64>) -> Vec<f64> {
    let caps = d.max_per_route();
    let (to, tn) = (old.table(&caps), new.table(&caps));
    let mut out = vec![0.0; d.m];
    for obs in &d.per_obs {
        for (i, x) in obs.chunks(d.r).enumerate() {
            out[i] += tn.log_mass(x) - to.log_mass(x);
        }
    }
    out
}

/// Self-normalised importance weights `f(x; new) / f(x; old)` scaled to
/// sum to `M` per observation, and the smallest effective sample size as a
/// fraction of `M`.
fn importance_weights(new: &[Vec<f64>], old: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let mut min_ess: f64 = 1.0;
    let w = new
        .iter()
        .zip(old)
        .map(|(ln, lo)| {
            let d: Vec<f64> = ln.iter().zip(lo).map(|(a, b)| a - b).collect();
            let top = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = d.iter().map(|v| (v - top).exp()).collect();
            let (s1, s2) = e.iter().fold((0.0, 0.0), |(a, b), v| (a + v, b + v * v));
            let m = e.len() as f64;
            min_ess = min_ess.min(s1 * s1 / s2 / m);
            e.iter().map(|v| v * m / s1).collect()
        })
        .collect();
    (w, min_ess)
}

/// Importance-sampling estimate of `ℓ(new) − ℓ(old)` from draws at `old`,
/// with a batch-means standard error (delta method per observation).
fn loglik_gain(new: &[Vec<f64>], old: &[Vec<f64>]) -> (f64, f64) {
    let mut gain = 0.0;
    let mut var = 0.0;
    for (ln, lo) in new.iter().zip(old) {
        let d: Vec<f64> = ln.iter().zip(lo).map(|(a, b)| a - b).collect();
        let top = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = d.iter().map(|v| (v - top).exp()).collect();
        let (mean, se) = batch_mean_se(&e);
        gain += top + mean.ln();
        var += (se / mean).powi(2);
    }
    (gain, var.sqrt())
}

/// Repeated M-steps on the first half of the draws, each reweighted to the
/// current parameters, while the weights stay well spread. The first step
/// is the plain M-step and is always taken. Returns the parameters and the
/// held-out log-likelihood gain.
fn reweighted_m_step(
    draws: &Draws,
    kind: ModelKind,
    theta: &[f64],
    alpha: f64,
    cfg: &EmConfig,
) -> Result<(Vec<f64>, f64, f64, f64)> {
    let (fit, test) = draws.halves();
    let old = model(kind, theta, alpha)?;
    let (fit_old, test_old) = (fit.log_masses(&old), test.log_masses(&old));
    let (mut cur_theta, mut cur_alpha) = (theta.to_vec(), alpha);
    let mut weights: Option<Vec<Vec<f64>>> = None;
    for k in 0..cfg.reweight_steps {
        let stats = SuffStats::weighted(&fit, weights.as_deref());
        let (t, a) = m_step(&stats, kind, cur_alpha, cfg.alpha_max);
        let (q0, q1) = (stats.q_total(&cur_theta, cur_alpha), stats.q_total(&t, a));
        assert!(q1 >= q0 - 1e-9 * q0.abs().max(1.0), "M-step decreased Q: {q0} -> {q1}");
        let (w, ess) = importance_weights(&fit.log_masses(&model(kind, &t, a)?), &fit_old);
        if k > 0 && ess < cfg.min_ess_fraction {
            break;
        }
        let moved = t.iter().zip(&cur_theta).map(|(x, y)| (x - y).abs() / y.max(1.0)).fold((a - cur_alpha).abs(), f64::max);
        cur_theta = t;
        cur_alpha = a;
        weights = Some(w);
        if moved < 1e-12 {
            break;
        }
    }
    let (gain, se) = loglik_gain(&test.log_masses(&model(kind, &cur_theta, cur_alpha)?), &test_old);
    Ok((cur_theta, cur_alpha, gain, se))
}

fn e_step(chains: &mut [ObsChain], m: &TrafficModel<f64>, caps: &[i64], draws: usize) -> Draws {
    let table = m.table(caps);
    let r = m.routes();
    let per_obs = chains
        .par_iter_mut()
        .map(|c| {
            let mut acc = vec![0; c.chain.frame().dim()];
            let mut changed = vec![false; r];
            let mut out = Vec::with_capacity(draws * r);
            for _ in 0..draws {
                c.chain.step(&table, &mut c.rng, &mut acc, &mut changed);
                out.extend_from_slice(c.chain.state().x());
            }
            out
        })
        .collect();
    Draws { r, m: draws, per_obs }
}

/// Pilot phases (re-partitioning each chain on its pilot means) and
/// burn-in. Returns the last pilot phase's mean flows over observations.
fn warm_up(
    a: &RoutingMatrix,
    chains: &mut [ObsChain],
    m: &TrafficModel<f64>,
    caps: &[i64],
    cfg: &EmConfig,
) -> Result<Vec<f64>> {
    let table = m.table(caps);
    let r = m.routes();
    let means = chains
        .par_iter_mut()
        .map(|c| -> Result<Vec<f64>> {
            let mut means: Vec<f64> = c.chain.state().x().iter().map(|&v| v as f64).collect();
            for _ in 0..cfg.n_pilot_phases {
                let mut sums = vec![0.0; r];
                let mut acc = vec![0; c.chain.frame().dim()];
                let mut changed = vec![false; r];
                for _ in 0..cfg.pilot_iters {
                    c.chain.step(&table, &mut c.rng, &mut acc, &mut changed);
                    sums.iter_mut().zip(c.chain.state().x()).for_each(|(s, &v)| *s += v as f64);
                }
                if cfg.pilot_iters > 0 {
                    means = sums.iter().map(|s| s / cfg.pilot_iters as f64).collect();
                    c.chain.repartition(a, &greedy_reorder(a, &means)?)?;
                }
            }
            let mut acc = vec![0; c.chain.frame().dim()];
            let mut changed = vec![false; r];
            for _ in 0..cfg.burn_in_per_estep {
                c.chain.step(&table, &mut c.rng, &mut acc, &mut changed);
            }
            Ok(means)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = means.len() as f64;
    Ok((0..r).map(|j| means.iter().map(|m| m[j]).sum::<f64>() / n).collect())
}

/// Stochastic EM for `θ` (and `α` under negbin). Each E-step draws `M`
/// conditional flow vectors per observation from chains that persist
/// across iterations. With `reweight_steps = 1` the M-step maximises `Q̂`
/// once and the ascent test uses the `Q̂` increase. Otherwise the M-step is
/// repeated on importance-reweighted draws from the first half of the
/// E-step and the ascent test uses the log-likelihood gain estimated on the
/// second half. A step is accepted when the lower confidence bound of the
/// increase is positive, otherwise `M` grows. Iteration stops once the
/// upper bound falls below `tol`; standard errors come from a final E-step
/// at the estimate.
pub fn stochastic_em(a: &RoutingMatrix, ys: &LinkCountSample, kind: ModelKind, cfg: &EmConfig) -> Result<EmResult> {
    cfg.validate()?;
    ys.check_dimensions(a)?;
    let r = a.routes();
    let y_red = ys.reduced(a)?;
    let caps = route_flow_caps(a, &y_red);
    let start = greedy_reorder(a, &vec![1.0; r])?;
    let mut chains = Vec::with_capacity(ys.len());
    for (t, (y, yr)) in ys.counts().iter().zip(&y_red).enumerate() {
        let chain = Chain::new(a, yr, &start, cfg.proposal, ScanOrder::Sequential)?;
        if a.original().mul_vec(chain.state().x()) != *y {
            return Err(Error::Infeasible);
        }
        chains.push(ObsChain { chain, rng: substream(cfg.seed, t as u64) });
    }

    // start from pilot means under equal rates, a central point of each
    // feasible set
    let nobs = ys.len() as f64;
    let level = chains.iter().flat_map(|c| c.chain.state().x()).sum::<i64>() as f64 / (nobs * r as f64);
    let flat = vec![level.max(1.0); r];
    let mut alpha = if kind == ModelKind::Negbin { 0.5 } else { 0.0 };
    let pilot_means = warm_up(a, &mut chains, &model(kind, &flat, alpha)?, &caps, cfg)?;
    let mut theta: Vec<f64> = pilot_means.iter().map(|v| v.max(0.5)).collect();
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(cfg.confidence);

    let mut m = cfg.m_init;
    let mut trajectory = Vec::new();
    let mut converged = false;
    for it in 0..cfg.max_outer_iters {
        let old = model(kind, &theta, alpha)?;
        let draws = e_step(&mut chains, &old, &caps, m);
        let stats = SuffStats::new(&draws);
        let (theta_new, alpha_new, dq, se) = if cfg.reweight_steps > 1 && m >= 4 {
            reweighted_m_step(&draws, kind, &theta, alpha, cfg)?
        } else {
            let (t, al) = m_step(&stats, kind, alpha, cfg.alpha_max);
            let (q0, q1) = (stats.q_total(&theta, alpha), stats.q_total(&t, al));
            assert!(q1 >= q0 - 1e-9 * q0.abs().max(1.0), "M-step decreased Q: {q0} -> {q1}");
            let (dq, se) = batch_mean_se(&per_draw_delta(&draws, &old, &model(kind, &t, al)?));
            (t, al, dq, se)
        };
        let q_new = stats.q_total(&theta_new, alpha_new);
        let (lower, upper) = (dq - z * se, dq + z * se);
        let grow = lower < 0.0 && upper >= cfg.tol && m < cfg.m_max;
        trajectory.push(EmStep {
            theta: theta_new.clone(),
            alpha: (kind == ModelKind::Negbin).then_some(alpha_new),
            m,
            q: q_new / m as f64,
            delta: dq,
            delta_se: se,
            accepted: !grow,
        });
        log::debug!("em iteration {it}: M = {m}, gain = {dq:.3e} ± {se:.2e}");
        if grow {
            m = ((m as f64 * cfg.m_growth_factor).ceil() as usize).min(cfg.m_max);
            continue;
        }
        theta = theta_new;
        alpha = alpha_new;
        if upper < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("stochastic EM did not converge in {} iterations", cfg.max_outer_iters);
    }
    for (j, t) in theta.iter().enumerate() {
        if *t <= THETA_FLOOR {
            log::warn!("estimate for route {} is on the boundary and was floored", a.route_ids()[j]);
        }
    }

    let fitted = model(kind, &theta, alpha)?;
    let draws = e_step(&mut chains, &fitted, &caps, m);
    let louis = louis_flat(&fitted, &draws.per_obs)?;
    let estep_se = (0..r)
        .map(|j| {
            let seq: Vec<f64> =
                (0..draws.m).map(|i| draws.per_obs.iter().map(|d| d[i * r + j] as f64).sum::<f64>() / nobs).collect();
            batch_mean_se(&seq).1
        })
        .collect();
    Ok(EmResult {
        theta_hat: theta,
        alpha_hat: (kind == ModelKind::Negbin).then_some(alpha),
        std_errors: louis.std_errors,
        info_matrix: louis.info,
        pseudo_inverse: louis.pseudo_inverse,
        converged,
        trajectory,
        estep_se,
        final_m: m,
    })
}
