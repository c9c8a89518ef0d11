use flowtomo::fixtures::*;
use flowtomo::inference::{bayes_poisson, louis_standard_errors, stochastic_em, EmConfig};
use flowtomo::models::{ModelKind, PriorSpec, TrafficModel};
use flowtomo::polytope::enumerate_feasible;
use flowtomo::rng::substream;
use flowtomo::sampler::{run_phased, Proposal, SamplerConfig};
use flowtomo::{LinkCountSample, RoutingMatrix};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma as GammaDist, Poisson};
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::gamma::ln_gamma;

fn poisson_counts(a: &RoutingMatrix, theta: &[f64], n: usize, seed: u64) -> Vec<Vec<i64>> {
    let mut rng = substream(seed, 0);
    (0..n)
        .map(|_| {
            let x: Vec<i64> = theta.iter().map(|&t| Poisson::new(t).unwrap().sample(&mut rng) as i64).collect();
            a.original().mul_vec(&x)
        })
        .collect()
}

/// Marginal posterior of each θ_j on an enumerable fixture is the gamma
/// mixture over feasible x weighted by the prior predictive.
#[test]
fn gibbs_marginals_match_exact_mixture() {
    let a = four_link_network();
    let y = FOUR_LINK_COUNTS_STUCK.to_vec();
    let (shape, rate) = (vec![3.0, 2.0, 6.0, 1.0, 4.0, 5.0], vec![0.5; 6]);
    let prior = PriorSpec::new(shape.clone(), rate.clone()).unwrap();
    let points = enumerate_feasible(&a, &y, 1000).unwrap();
    let logw: Vec<f64> = points
        .iter()
        .map(|p| {
            p.x()
                .iter()
                .zip(shape.iter().zip(&rate))
                .map(|(&x, (&s, &b))| {
                    let x = x as f64;
                    ln_gamma(s + x) - ln_gamma(s) - ln_gamma(x + 1.0) + s * (b / (b + 1.0)).ln() - x * (b + 1.0).ln()
                })
                .sum()
        })
        .collect();
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logw.iter().map(|l| (l - top).exp()).sum();
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp() / z).collect();

    let cfg = SamplerConfig {
        pilot_iters: 2000,
        burn_in: 1000,
        main_iters: 60_000,
        proposal: Proposal::GibbsExact,
        seed: 21,
        ..Default::default()
    };
    let res = bayes_poisson(&a, &[y], &prior, None, &cfg, false).unwrap();
    for j in 0..6 {
        let mut v: Vec<f64> = res.draws.iter().map(|d| d[j]).collect();
        v.sort_by(f64::total_cmp);
        let cdf = |t: f64| -> f64 {
            points
                .iter()
                .zip(&w)
                .map(|(p, wi)| wi * Gamma::new(shape[j] + p.x()[j] as f64, rate[j] + 1.0).unwrap().cdf(t))
                .sum()
        };
        let n = v.len() as f64;
        let ks = v
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let f = cdf(t);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "route {j}: KS distance {ks}");
    }
}

#[test]
fn observed_information_stable_in_draw_count() {
    let a = intersection_network();
    let theta: Vec<f64> = INTERSECTION_THETA.iter().map(|t| t / 10.0).collect();
    let ys = poisson_counts(&a, &theta, 10, 3);
    let m = TrafficModel::poisson(theta).unwrap();
    let se_at = |draws: usize, seed: u64| -> Vec<f64> {
        let cfg = SamplerConfig {
            pilot_iters: 500,
            burn_in: 500,
            main_iters: draws,
            proposal: Proposal::GibbsExact,
            ..Default::default()
        };
        let per_obs: Vec<Vec<Vec<i64>>> = ys
            .iter()
            .enumerate()
            .map(|(t, y)| {
                let out = run_phased(&a, y, &m, None, &cfg, &mut substream(seed, t as u64)).unwrap();
                out.main_records().map(|r| r.x.clone()).collect()
            })
            .collect();
        louis_standard_errors(&m, &per_obs).unwrap().std_errors
    };
    let small: Vec<Vec<f64>> = (0..8).map(|s| se_at(2000, 100 + s)).collect();
    let large = se_at(20_000, 7);
    for j in 0..a.routes() {
        let v: Vec<f64> = small.iter().map(|s| s[j]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((large[j] - mean).abs() <= 4.0 * sd.max(1e-3 * mean), "route {j}: {} vs {mean} ± {sd}", large[j]);
    }
}

#[test]
fn poisson_em_is_nearly_unbiased() {
    let a = intersection_network();
    let reps = 100;
    let mut mean = vec![0.0; 6];
    for rep in 0..reps {
        let ys = poisson_counts(&a, &INTERSECTION_THETA, 5, 500 + rep);
        let res = stochastic_em(
            &a,
            &LinkCountSample::new(ys, None).unwrap(),
            ModelKind::Poisson,
            &EmConfig { seed: rep, ..Default::default() },
        )
        .unwrap();
        for j in 0..6 {
            mean[j] += res.theta_hat[j] / reps as f64;
        }
    }
    for j in 0..6 {
        let bias = (mean[j] - INTERSECTION_THETA[j]) / INTERSECTION_THETA[j];
        assert!(bias.abs() < 0.05, "route {j}: relative bias {bias}");
    }
}

/// Moment estimator: least squares on link means and link covariances,
/// `E y = A θ` and `Cov(y_i, y_k) = Σ_j A_ij A_kj θ_j` under Poisson flows.
fn method_of_moments(a: &RoutingMatrix, ys: &[Vec<i64>]) -> Vec<f64> {
    let m = a.original();
    let (links, r) = (m.rows(), m.cols());
    let n = ys.len() as f64;
    let mean: Vec<f64> = (0..links).map(|i| ys.iter().map(|y| y[i] as f64).sum::<f64>() / n).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..links {
        rows.push((0..r).map(|j| m[(i, j)] as f64).collect());
        rhs.push(mean[i]);
    }
    for i in 0..links {
        for k in i..links {
            rows.push((0..r).map(|j| (m[(i, j)] * m[(k, j)]) as f64).collect());
            let cov = ys.iter().map(|y| (y[i] as f64 - mean[i]) * (y[k] as f64 - mean[k])).sum::<f64>() / (n - 1.0);
            rhs.push(cov);
        }
    }
    let design = DMatrix::from_fn(rows.len(), r, |i, j| rows[i][j]);
    let b = DVector::from_vec(rhs);
    design.svd(true, true).solve(&b, 1e-12).unwrap().iter().cloned().collect()
}

#[test]
fn moment_estimator_can_be_implausible() {
    // overdispersed data at the intersection, five periods as in the
    // field study
    let a = intersection_network();
    let mut implausible = 0;
    for rep in 0..20u64 {
        let mut rng = substream(900 + rep, 0);
        let ys: Vec<Vec<i64>> = (0..5)
            .map(|_| {
                let x: Vec<i64> = INTERSECTION_THETA
                    .iter()
                    .map(|&t| {
                        let lam = GammaDist::new(t / INTERSECTION_ALPHA, INTERSECTION_ALPHA).unwrap().sample(&mut rng);
                        Poisson::new(lam.max(1e-12)).unwrap().sample(&mut rng) as i64
                    })
                    .collect();
                a.original().mul_vec(&x)
            })
            .collect();
        let theta = method_of_moments(&a, &ys);
        let fitted = a.original().map(|&v| v as f64);
        let n = ys.len() as f64;
        let off_by_two = (0..fitted.rows()).any(|i| {
            let f: f64 = (0..6).map(|j| fitted[(i, j)] * theta[j]).sum();
            let ybar = ys.iter().map(|y| y[i] as f64).sum::<f64>() / n;
            f > 2.0 * ybar || 2.0 * f < ybar
        });
        if off_by_two || theta.iter().any(|&t| t < 0.0) {
            implausible += 1;
        }
        // the EM fit reproduces link means exactly
        let em = stochastic_em(
            &a,
            &LinkCountSample::new(ys.clone(), None).unwrap(),
            ModelKind::Poisson,
            &EmConfig { seed: rep, ..Default::default() },
        )
        .unwrap();
        for i in 0..fitted.rows() {
            let f: f64 = (0..6).map(|j| fitted[(i, j)] * em.theta_hat[j]).sum();
            let ybar = ys.iter().map(|y| y[i] as f64).sum::<f64>() / n;
            assert!((f - ybar).abs() < 1e-6 * ybar.max(1.0));
        }
    }
    assert!(implausible > 0);
}
