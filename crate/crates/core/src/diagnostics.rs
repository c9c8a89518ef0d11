//! Chain quality summaries and comparison against enumerated conditionals.

use std::collections::HashMap;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::log_sum_exp;
use crate::models::TrafficModel;
use crate::netmodel::RoutingMatrix;
use crate::polytope::enumerate_feasible;
use crate::sampler::{ChainOutput, Phase};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseMetrics {
    pub phase: Phase,
    pub records: usize,
    pub mean_slack: f64,
    /// Fraction of routes whose recorded flow changed within the phase.
    pub update_coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSummary {
    /// Main-phase draws used for ESS, after extra thinning.
    pub draws: usize,
    /// Per route; `None` where the trace has zero variance.
    pub ess: Vec<Option<f64>>,
    pub degenerate: Vec<bool>,
    pub phases: Vec<PhaseMetrics>,
    /// Main-phase acceptance rate per free coordinate, when the chain
    /// carries phase totals.
    pub acceptance_rate: Option<Vec<f64>>,
}

/// Per-phase slack and coverage from the recorded sweeps, and per-route ESS
/// of the main phase after keeping every `thin`-th draw.
pub fn summarize(chain: &ChainOutput, thin: usize) -> Result<ChainSummary> {
    if chain.records.is_empty() {
        return Err(Error::Invalid("chain has no records".into()));
    }
    if thin == 0 {
        return Err(Error::Invalid("thinning factor must be at least 1".into()));
    }
    let r = chain.records[0].x.len();
    let mut phases: Vec<PhaseMetrics> = Vec::new();
    let mut changed: Vec<Vec<bool>> = Vec::new();
    for (k, rec) in chain.records.iter().enumerate() {
        if phases.last().is_none_or(|p| p.phase != rec.phase) {
            phases.push(PhaseMetrics { phase: rec.phase, records: 0, mean_slack: 0.0, update_coverage: 0.0 });
            changed.push(vec![false; r]);
        }
        let p = phases.last_mut().expect("phase pushed");
        p.records += 1;
        p.mean_slack += rec.slack;
        let c = changed.last_mut().expect("phase pushed");
        if rec.n_changed > 0 {
            if let Some(prev) = k.checked_sub(1).map(|i| &chain.records[i]) {
                for j in 0..r {
                    c[j] |= prev.x[j] != rec.x[j];
                }
            }
        }
    }
    for (p, c) in phases.iter_mut().zip(&changed) {
        p.mean_slack /= p.records as f64;
        p.update_coverage = c.iter().filter(|&&v| v).count() as f64 / r as f64;
    }

    let main: Vec<&Vec<i64>> = chain.main_records().step_by(thin).map(|rec| &rec.x).collect();
    let ess: Vec<Option<f64>> =
        (0..r).map(|j| effective_sample_size(&main.iter().map(|x| x[j] as f64).collect::<Vec<_>>())).collect();
    let degenerate = ess.iter().map(Option::is_none).collect();
    let acceptance_rate = chain.phase(Phase::Main).map(|p| p.acceptance_rates());
    Ok(ChainSummary { draws: main.len(), ess, degenerate, phases, acceptance_rate })
}

fn autocovariance(trace: &[f64]) -> Vec<f64> {
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = trace.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect()
}

/// ESS by Geyer's initial positive (and monotone) sequence, capped at the
/// trace length. `None` for traces shorter than 4 or with zero variance.
pub fn effective_sample_size(trace: &[f64]) -> Option<f64> {
    let n = trace.len();
    if n < 4 {
        return None;
    }
    let gamma = autocovariance(trace);
    let scale = trace.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if gamma[0] <= 1e-24 * scale * scale {
        return None;
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = gamma[2 * m] + gamma[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = (2.0 * sum - gamma[0]) / gamma[0];
    Some((n as f64 / tau).min(n as f64))
}

/// Total-variation distance between the main-phase draws and the exact
/// conditional `f(x | y) ∝ f(x)` over the enumerated feasible set.
pub fn tv_distance_vs_oracle(
    chain: &ChainOutput,
    a: &RoutingMatrix,
    y: &[i64],
    m: &TrafficModel<f64>,
    cap: usize,
) -> Result<f64> {
    let y_red: Vec<i64> = a.kept_rows().iter().map(|&i| y[i]).collect();
    let points = enumerate_feasible(a, &y_red, cap)?;
    let logs: Vec<f64> = points.iter().map(|p| m.log_mass(p.x())).collect::<Result<_>>()?;
    let z = log_sum_exp(&logs);
    let mut counts: HashMap<&[i64], usize> = HashMap::new();
    let mut n = 0usize;
    for rec in chain.main_records() {
        *counts.entry(rec.x.as_slice()).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Invalid("chain has no main-phase records".into()));
    }
    let mut tv = 0.0;
    let mut matched = 0usize;
    for (p, l) in points.iter().zip(&logs) {
        let c = counts.get(p.x()).copied().unwrap_or(0);
        matched += c;
        tv += (c as f64 / n as f64 - (l - z).exp()).abs();
    }
    // mass on states outside the feasible set
    tv += (n - matched) as f64 / n as f64;
    Ok((0.5 * tv).min(1.0))
}

/// Ratio of pooled to within-chain variance for equal-length chains.
pub fn r_hat(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains.first()?.len();
    if m < 2 || n < 2 || chains.iter().any(|c| c.len() != n) {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n as f64 / (m - 1) as f64 * means.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    if w <= 0.0 {
        return None;
    }
    let pooled = (n - 1) as f64 / n as f64 * w + b / n as f64;
    Some((pooled / w).sqrt())
}
