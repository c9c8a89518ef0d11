//! Likelihood and Bayesian inference for mean route flows.

mod bayes;
mod em;
mod louis;

pub use bayes::{bayes_poisson, PhaseSummary, PosteriorResult, RouteSummary};
pub use em::{stochastic_em, EmConfig, EmResult, EmStep};
pub use louis::{louis_standard_errors, LouisResult};

use crate::error::{Error, Result};
use crate::models::TrafficModel;
use crate::netmodel::RoutingMatrix;
use crate::polytope::enumerate_feasible;

/// Smallest mean flow an estimate is allowed to take.
pub const THETA_FLOOR: f64 = 1e-8;

/// `Σ_t log Σ_{x ∈ X|y_t} f(x)` by enumeration; each `y_t` is in the row
/// order of the matrix as loaded.
pub fn exact_loglik(a: &RoutingMatrix, ys: &[Vec<i64>], m: &TrafficModel<f64>, cap: usize) -> Result<f64> {
    let mut total = 0.0;
    for y in ys {
        if y.len() != a.original().rows() {
            return Err(Error::Dimension(format!("{} counts for {} links", y.len(), a.original().rows())));
        }
        let y_red: Vec<i64> = a.kept_rows().iter().map(|&i| y[i]).collect();
        let logs: Vec<f64> = enumerate_feasible(a, &y_red, cap)?
            .iter()
            .filter(|p| a.original().mul_vec(p.x()) == *y)
            .map(|p| m.log_mass(p.x()))
            .collect::<Result<_>>()?;
        total += log_sum_exp(&logs);
    }
    Ok(total)
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Mean and batch-means standard error of a correlated sequence.
pub(crate) fn batch_mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let b = (n as f64).sqrt().floor() as usize;
    if b < 2 {
        return (mean, f64::INFINITY);
    }
    let size = n / b;
    let means: Vec<f64> = (0..b).map(|k| v[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let bm = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - bm) * (m - bm)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Empirical quantile with linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn unique_solution_loglik_is_log_mass() {
        let a = RoutingMatrix::from_rows(&[vec![1, 0], vec![1, 1]]).unwrap();
        let m = TrafficModel::poisson(vec![2.0, 5.0]).unwrap();
        let v = exact_loglik(&a, &[vec![3, 7]], &m, 100).unwrap();
        assert!((v - m.log_mass(&[3, 4]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn four_link_loglik_sums_eleven_points() {
        let a = fixtures::four_link_network();
        let y = fixtures::FOUR_LINK_COUNTS_STUCK.to_vec();
        let m = TrafficModel::poisson(vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut direct = 0.0f64;
        for k in 0..=10i64 {
            direct += m.log_mass(&[0, 10 - k, k, 0, k, 10 - k]).unwrap().exp();
        }
        let v = exact_loglik(&a, std::slice::from_ref(&y), &m, 100).unwrap();
        assert!((v - direct.ln()).abs() < 1e-12);
        let two = exact_loglik(&a, &[y.clone(), y], &m, 100).unwrap();
        assert!((two - 2.0 * v).abs() < 1e-10);
    }

    #[test]
    fn cap_is_enforced() {
        let a = fixtures::four_link_network();
        let m = TrafficModel::poisson(vec![1.0; 6]).unwrap();
        assert!(matches!(exact_loglik(&a, &[fixtures::FOUR_LINK_COUNTS_STUCK.to_vec()], &m, 5), Err(Error::CapExceeded(5))));
    }

    #[test]
    fn batch_means_of_iid_values() {
        let v: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 101) as f64).collect();
        let (m, se) = batch_mean_se(&v);
        assert!((m - 50.0).abs() < 1.0);
        assert!(se > 0.0 && se < 1.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }
}
