use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use super::{batch_mean_se, quantile};
use crate::error::{Error, Result};
use crate::intlin::greedy_reorder;
use crate::models::{PriorSpec, TrafficModel};
use crate::netmodel::RoutingMatrix;
use crate::rng::{substream, ChainRng};
use crate::sampler::{route_flow_caps, Chain, Phase, SamplerConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteSummary {
    pub route: String,
    pub mean: f64,
    /// 2.5% and 97.5% empirical percentiles.
    pub lower: f64,
    pub upper: f64,
    /// Batch-means Monte Carlo standard error of `mean`.
    pub mc_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub sweeps: usize,
    /// Fraction of routes whose flow changed in at least one observation's chain.
    pub update_coverage: f64,
    pub mean_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorResult {
    pub summaries: Vec<RouteSummary>,
    pub phases: Vec<PhaseSummary>,
    pub retained: usize,
    pub warnings: Vec<String>,
    /// Retained `θ` draws.
    #[serde(skip)]
    pub draws: Vec<Vec<f64>>,
    /// Retained flow draws, `[draw][observation]`, when requested.
    #[serde(skip)]
    pub x_draws: Option<Vec<Vec<Vec<i64>>>>,
}

fn draw_theta(prior: &PriorSpec, sums: &[f64], n: f64, rng: &mut ChainRng) -> Result<Vec<f64>> {
    prior
        .shape
        .iter()
        .zip(&prior.rate)
        .zip(sums)
        .map(|((&a, &b), &s)| {
            let g = Gamma::new(a + s, 1.0 / (b + n)).map_err(|e| Error::Numerical(e.to_string()))?;
            Ok(g.sample(rng).max(f64::MIN_POSITIVE))
        })
        .collect()
}

/// Gibbs sampler for Poisson means under independent gamma priors:
/// alternates one sweep of every observation's flow chain given `θ` with
/// `θ_j ~ Gamma(shape_j + Σ_t x_j, rate_j + N)`. Pilot phases re-optimise
/// each chain's partition from its mean flows, starting from
/// `initial_scores` (all ones by default); summaries use the main phase
/// only. With no observations the draws come from the prior.
pub fn bayes_poisson(
    a: &RoutingMatrix,
    ys: &[Vec<i64>],
    prior: &PriorSpec,
    initial_scores: Option<&[f64]>,
    cfg: &SamplerConfig,
    keep_x: bool,
) -> Result<PosteriorResult> {
    cfg.validate()?;
    let r = a.routes();
    if prior.routes() != r {
        return Err(Error::Dimension(format!("prior has {} routes, matrix has {r}", prior.routes())));
    }
    let y_red: Vec<Vec<i64>> = ys
        .iter()
        .map(|y| {
            if y.len() != a.original().rows() {
                return Err(Error::Dimension(format!("{} counts for {} links", y.len(), a.original().rows())));
            }
            Ok(a.kept_rows().iter().map(|&i| y[i]).collect())
        })
        .collect::<Result<_>>()?;
    let caps = route_flow_caps(a, &y_red);
    let ones = vec![1.0; r];
    let start = greedy_reorder(a, initial_scores.unwrap_or(&ones))?;
    let mut chains = Vec::with_capacity(ys.len());
    for (y, yr) in ys.iter().zip(&y_red) {
        let chain = Chain::new(a, yr, &start, cfg.proposal, cfg.scan)?;
        if a.original().mul_vec(chain.state().x()) != *y {
            return Err(Error::Infeasible);
        }
        chains.push(chain);
    }
    let mut rngs: Vec<ChainRng> = (0..ys.len()).map(|t| substream(cfg.seed, t as u64 + 1)).collect();
    let mut theta_rng = substream(cfg.seed, 0);
    let n = ys.len() as f64;
    let mut theta = prior.mean();

    let mut phases = Vec::new();
    let mut warnings = Vec::new();
    let mut draws = Vec::new();
    let mut x_draws = keep_x.then(Vec::new);
    let plan: Vec<(Phase, usize)> = (1..=cfg.n_pilot_phases)
        .map(|k| (Phase::Pilot(k), cfg.pilot_iters))
        .chain([(Phase::BurnIn, cfg.burn_in), (Phase::Main, cfg.main_iters)])
        .collect();
    for (phase, iters) in plan {
        let mut changed = vec![false; r];
        let mut flow_sums = vec![vec![0.0; r]; chains.len()];
        let mut slack = 0.0;
        let mut accepted: Vec<Vec<u64>> = chains.iter().map(|c| vec![0; c.frame().dim()]).collect();
        for k in 0..iters {
            let table = TrafficModel::poisson(theta.clone())?.table(&caps);
            let mut sums = vec![0.0; r];
            for (t, chain) in chains.iter_mut().enumerate() {
                chain.step(&table, &mut rngs[t], &mut accepted[t], &mut changed);
                for (j, &v) in chain.state().x().iter().enumerate() {
                    sums[j] += v as f64;
                    flow_sums[t][j] += v as f64;
                }
                slack += chain.state().slack(chain.frame()) / n;
            }
            theta = draw_theta(prior, &sums, n, &mut theta_rng)?;
            if phase == Phase::Main && (k + 1) % cfg.thin == 0 {
                draws.push(theta.clone());
                if let Some(xd) = x_draws.as_mut() {
                    xd.push(chains.iter().map(|c| c.state().x().to_vec()).collect());
                }
            }
        }
        let any_free = chains.iter().any(|c| c.frame().dim() > 0);
        if iters > 0 && any_free && !changed.iter().any(|&c| c) {
            let msg = format!("flow chains made no moves during {phase} ({iters} iterations)");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        phases.push(PhaseSummary {
            phase,
            sweeps: iters,
            update_coverage: changed.iter().filter(|&&c| c).count() as f64 / r as f64,
            mean_slack: if iters > 0 { slack / iters as f64 } else { 0.0 },
        });
        if let Phase::Pilot(k) = phase {
            if iters > 0 {
                for (t, chain) in chains.iter_mut().enumerate() {
                    let scores: Vec<f64> = flow_sums[t].iter().map(|s| s / iters as f64).collect();
                    let p = greedy_reorder(a, &scores)?;
                    log::debug!("pilot {k}, observation {t}: basis {:?}", p.basis_cols());
                    chain.repartition(a, &p)?;
                }
            }
        }
    }

    let summaries = summarize_draws(&draws, a.route_ids());
    Ok(PosteriorResult { summaries, phases, retained: draws.len(), warnings, draws, x_draws })
}

fn summarize_draws(draws: &[Vec<f64>], ids: &[String]) -> Vec<RouteSummary> {
    ids.iter()
        .enumerate()
        .map(|(j, id)| {
            let route = id.clone();
            let mut v: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            if v.is_empty() {
                return RouteSummary { route, mean: f64::NAN, lower: f64::NAN, upper: f64::NAN, mc_se: f64::NAN };
            }
            let (mean, mc_se) = batch_mean_se(&v);
            v.sort_by(f64::total_cmp);
            RouteSummary { route, mean, lower: quantile(&v, 0.025), upper: quantile(&v, 0.975), mc_se }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(main: usize) -> SamplerConfig {
        SamplerConfig { pilot_iters: 200, n_pilot_phases: 1, burn_in: 100, main_iters: main, seed: 2, ..Default::default() }
    }

    #[test]
    fn no_observations_samples_the_prior() {
        let a = RoutingMatrix::from_rows(&[vec![1, 1]]).unwrap();
        let prior = PriorSpec::new(vec![3.0, 10.0], vec![0.5, 2.0]).unwrap();
        let res = bayes_poisson(&a, &[], &prior, None, &cfg(20_000), false).unwrap();
        for (s, (mean, var)) in res.summaries.iter().zip([(6.0, 12.0), (5.0, 2.5f64)]) {
            assert!((s.mean - mean).abs() < 4.0 * (var / 20_000.0f64).sqrt(), "{} vs {mean}", s.mean);
        }
    }

    #[test]
    fn unique_flow_gives_closed_form_posterior() {
        let a = RoutingMatrix::from_rows(&[vec![1, 0], vec![1, 1]]).unwrap();
        let prior = PriorSpec::new(vec![2.0, 2.0], vec![1.0, 1.0]).unwrap();
        let res = bayes_poisson(&a, &[vec![3, 7]], &prior, None, &cfg(20_000), true).unwrap();
        // Gamma(2 + 3, 2) and Gamma(2 + 4, 2)
        for (s, (mean, var)) in res.summaries.iter().zip([(2.5, 1.25), (3.0, 1.5f64)]) {
            assert!((s.mean - mean).abs() < 4.0 * (var / 20_000.0f64).sqrt());
            assert!(s.lower < s.mean && s.mean < s.upper);
        }
        assert!(res.x_draws.unwrap().iter().all(|d| d[0] == vec![3, 4]));
        assert!(res.warnings.is_empty());
    }

    #[test]
    fn prior_dimension_checked() {
        let a = RoutingMatrix::from_rows(&[vec![1, 1]]).unwrap();
        let prior = PriorSpec::new(vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(bayes_poisson(&a, &[], &prior, None, &cfg(10), false), Err(Error::Dimension(_))));
    }
}
