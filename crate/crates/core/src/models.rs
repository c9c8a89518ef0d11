//! Independent route-flow models (Poisson and mean-dispersion negative
//! binomial), their log-mass, derivatives, and conjugate gamma priors.
//!
//! The negative binomial with mean `θ` and dispersion `α` has variance
//! `(1 + α) θ`, size `θ / α` and success probability `1 / (1 + α)`. For an
//! integer count `x` its log-mass is evaluated as
//!
//! ```text
//! Σ_{i<x} ln(θ + iα) − ln x! − θ·ln(1+α)/α − x·ln(1+α)
//! ```
//!
//! which reduces to the Poisson log-mass at `α = 0` without cancellation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::polytope::{move_bounds, FlowState, Frame};
use crate::scalar::Real;
use crate::special;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Poisson,
    Negbin,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(ModelKind::Poisson),
            "negbin" => Ok(ModelKind::Negbin),
            _ => Err(Error::Invalid(format!("unknown model '{s}'"))),
        }
    }
}

/// Independent route flows with means `theta` (and dispersion `alpha`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrafficModel<F> {
    kind: ModelKind,
    theta: Vec<F>,
    alpha: F,
}

fn g_over<F: Real>(alpha: F) -> F {
    F::from_f64_lossy(special::log1p_over(alpha.as_f64()))
}

impl<F: Real> TrafficModel<F> {
    pub fn new(kind: ModelKind, theta: Vec<F>, alpha: F) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Invalid("model needs at least one route".into()));
        }
        if let Some(t) = theta.iter().find(|t| !(**t > F::zero()) || !t.is_finite()) {
            return Err(Error::Invalid(format!("mean route flows must be positive, got {t}")));
        }
        if !(alpha >= F::zero()) || !alpha.is_finite() {
            return Err(Error::Invalid(format!("dispersion must be nonnegative, got {alpha}")));
        }
        let alpha = if kind == ModelKind::Poisson { F::zero() } else { alpha };
        Ok(TrafficModel { kind, theta, alpha })
    }

    pub fn poisson(theta: Vec<F>) -> Result<Self> {
        TrafficModel::new(ModelKind::Poisson, theta, F::zero())
    }

    pub fn negbin(theta: Vec<F>, alpha: F) -> Result<Self> {
        TrafficModel::new(ModelKind::Negbin, theta, alpha)
    }

    /// Poisson with every mean equal to one.
    pub fn uniform(routes: usize) -> Self {
        TrafficModel { kind: ModelKind::Poisson, theta: vec![F::one(); routes], alpha: F::zero() }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn theta(&self) -> &[F] {
        &self.theta
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn routes(&self) -> usize {
        self.theta.len()
    }

    pub fn with_theta(&self, theta: Vec<F>) -> Result<Self> {
        TrafficModel::new(self.kind, theta, self.alpha)
    }

    /// Log-mass of a single route's flow.
    pub fn log_mass_route(&self, j: usize, x: i64) -> F {
        let theta = self.theta[j];
        let lfact = F::from_usize_lossy(x as usize + 1).log_gamma();
        if self.alpha == F::zero() {
            return F::from_usize_lossy(x as usize) * theta.ln() - theta - lfact;
        }
        let a = self.alpha;
        let mut acc = F::zero();
        for i in 0..x {
            acc += (theta + F::from_usize_lossy(i as usize) * a).ln();
        }
        acc - lfact - theta * g_over(a) - F::from_usize_lossy(x as usize) * a.ln_1p()
    }

    /// Joint log-mass of a flow vector.
    pub fn log_mass(&self, x: &[i64]) -> Result<F> {
        if x.len() != self.theta.len() {
            return Err(Error::Dimension(format!("{} flows for {} routes", x.len(), self.theta.len())));
        }
        if let Some(v) = x.iter().find(|&&v| v < 0) {
            return Err(Error::Invalid(format!("negative route flow {v}")));
        }
        Ok((0..x.len()).map(|j| self.log_mass_route(j, x[j])).fold(F::zero(), |a, b| a + b))
    }

    /// Per-route log-mass lookup tables for flows `0..=max_flow[j]`.
    pub fn table(&self, max_flow: &[i64]) -> LogMassTable<F> {
        assert_eq!(max_flow.len(), self.theta.len());
        let a = self.alpha;
        let log1p_a = a.ln_1p();
        let tables = self
            .theta
            .iter()
            .zip(max_flow)
            .map(|(&theta, &m)| {
                let m = m.max(0) as usize;
                let mut t = Vec::with_capacity(m + 1);
                let (mut cur, ln_theta) = if a == F::zero() { (-theta, theta.ln()) } else { (-theta * g_over(a), F::zero()) };
                t.push(cur);
                for x in 1..=m {
                    let xf = F::from_usize_lossy(x);
                    cur += if a == F::zero() {
                        ln_theta - xf.ln()
                    } else {
                        (theta + F::from_usize_lossy(x - 1) * a).ln() - xf.ln() - log1p_a
                    };
                    t.push(cur);
                }
                t
            })
            .collect();
        LogMassTable { tables }
    }
}

/// Cached per-route log-mass values.
#[derive(Clone, Debug)]
pub struct LogMassTable<F> {
    tables: Vec<Vec<F>>,
}

impl<F: Real> LogMassTable<F> {
    #[inline]
    pub fn get(&self, j: usize, x: i64) -> F {
        self.tables[j][x as usize]
    }

    pub fn log_mass(&self, x: &[i64]) -> F {
        x.iter().enumerate().map(|(j, &v)| self.get(j, v)).fold(F::zero(), |a, b| a + b)
    }

    /// Change in joint log-mass when free coordinate `j` moves to `t` (only
    /// the free route and basis routes on its direction contribute).
    #[inline]
    pub fn move_delta(&self, state: &FlowState, frame: &Frame, j: usize, t: i64) -> F {
        let x = state.x();
        let col = frame.free_cols()[j];
        let cur = x[col];
        let delta = t - cur;
        let mut acc = self.get(col, t) - self.get(col, cur);
        for &(route, w) in frame.direction(j) {
            let old = x[route];
            acc += self.get(route, old + delta * w) - self.get(route, old);
        }
        acc
    }
}

/// `log f(x†) − log f(x)` for moving free coordinate `j` to `t_new`.
pub fn log_mass_ratio_for_move<F: Real>(
    table: &LogMassTable<F>,
    state: &FlowState,
    frame: &Frame,
    j: usize,
    t_new: i64,
) -> Result<F> {
    let b = move_bounds(state, frame, j);
    if !b.contains(t_new) {
        return Err(Error::Invalid(format!("candidate {t_new} outside feasible range [{}, {}]", b.lo, b.hi)));
    }
    Ok(table.move_delta(state, frame, j, t_new))
}

/// Independent gamma priors (shape-rate) on the mean route flows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
}

impl PriorSpec {
    pub fn new(shape: Vec<f64>, rate: Vec<f64>) -> Result<Self> {
        if shape.len() != rate.len() {
            return Err(Error::Dimension("shape and rate lengths differ".into()));
        }
        if shape.iter().chain(&rate).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("gamma shape and rate must be positive".into()));
        }
        Ok(PriorSpec { shape, rate })
    }

    /// `Gamma(x̆ / d, 1 / d)`, whose mean is the pseudo-count `x̆`.
    pub fn from_pseudo_counts(counts: &[f64], divisor: f64) -> Result<Self> {
        if !(divisor > 0.0) {
            return Err(Error::Invalid("pseudo-count divisor must be positive".into()));
        }
        PriorSpec::new(counts.iter().map(|c| c / divisor).collect(), vec![1.0 / divisor; counts.len()])
    }

    pub fn routes(&self) -> usize {
        self.shape.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.shape.iter().zip(&self.rate).map(|(a, b)| a / b).collect()
    }
}

/// Gamma posterior given complete flow vectors: `shape + Σ x`, `rate + N`.
pub fn conjugate_update(prior: &PriorSpec, kind: ModelKind, x_samples: &[Vec<i64>]) -> Result<PriorSpec> {
    if kind != ModelKind::Poisson {
        return Err(Error::Unsupported("conjugate gamma update requires the Poisson model".into()));
    }
    let r = prior.routes();
    let mut shape = prior.shape.clone();
    for x in x_samples {
        if x.len() != r {
            return Err(Error::Dimension(format!("{} flows for {} routes", x.len(), r)));
        }
        for (s, &v) in shape.iter_mut().zip(x) {
            *s += v as f64;
        }
    }
    let n = x_samples.len() as f64;
    Ok(PriorSpec { shape, rate: prior.rate.iter().map(|b| b + n).collect() })
}

/// Running sums `Σ_{i<x} i^k / (θ + iα)^p` needed by negative binomial
/// derivatives, for `x = 0..=max`.
pub(crate) struct RouteSums {
    /// Σ 1/(θ+iα)
    pub s1: Vec<f64>,
    /// Σ i/(θ+iα)
    pub si: Vec<f64>,
    /// Σ 1/(θ+iα)^2
    pub q1: Vec<f64>,
    /// Σ i/(θ+iα)^2
    pub qi: Vec<f64>,
    /// Σ i^2/(θ+iα)^2
    pub qii: Vec<f64>,
}

impl RouteSums {
    pub fn new(theta: f64, alpha: f64, max: usize) -> Self {
        let mut s = RouteSums {
            s1: Vec::with_capacity(max + 1),
            si: Vec::with_capacity(max + 1),
            q1: Vec::with_capacity(max + 1),
            qi: Vec::with_capacity(max + 1),
            qii: Vec::with_capacity(max + 1),
        };
        let (mut a, mut b, mut c, mut d, mut e) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for x in 0..=max {
            s.s1.push(a);
            s.si.push(b);
            s.q1.push(c);
            s.qi.push(d);
            s.qii.push(e);
            let i = x as f64;
            let den = theta + i * alpha;
            a += 1.0 / den;
            b += i / den;
            c += 1.0 / (den * den);
            d += i / (den * den);
            e += i * i / (den * den);
        }
        s
    }
}

/// Complete-data score and information (negated Hessian) of
/// `Σ_t log f(x^(t))` with respect to `θ` (and `α` last, for negbin).
pub fn score_and_information<F: Real>(m: &TrafficModel<F>, x_samples: &[Vec<i64>]) -> Result<(Vec<F>, Matrix<F>)> {
    let r = m.routes();
    if m.theta.iter().any(|t| !(*t > F::zero())) {
        return Err(Error::Invalid("θ on the boundary".into()));
    }
    for x in x_samples {
        if x.len() != r {
            return Err(Error::Dimension(format!("{} flows for {} routes", x.len(), r)));
        }
        if x.iter().any(|&v| v < 0) {
            return Err(Error::Invalid("negative route flow".into()));
        }
    }
    let theta: Vec<f64> = m.theta.iter().map(|t| t.as_f64()).collect();
    let (score, info) = match m.kind {
        ModelKind::Poisson => poisson_score_info(&theta, x_samples),
        ModelKind::Negbin => {
            let max: Vec<usize> =
                (0..r).map(|j| x_samples.iter().map(|x| x[j] as usize).max().unwrap_or(0)).collect();
            let a = m.alpha.as_f64();
            let sums: Vec<RouteSums> = (0..r).map(|j| RouteSums::new(theta[j], a, max[j])).collect();
            negbin_score_info(&theta, a, &sums, x_samples)
        }
    };
    Ok((score.into_iter().map(F::from_f64_lossy).collect(), info.map(|&v| F::from_f64_lossy(v))))
}

pub(crate) fn poisson_score_info(theta: &[f64], xs: &[Vec<i64>]) -> (Vec<f64>, Matrix<f64>) {
    let r = theta.len();
    let mut score = vec![0.0; r];
    let mut info = Matrix::zeros(r, r);
    for x in xs {
        for j in 0..r {
            score[j] += x[j] as f64 / theta[j] - 1.0;
            info[(j, j)] += x[j] as f64 / (theta[j] * theta[j]);
        }
    }
    (score, info)
}

pub(crate) fn negbin_score_info(theta: &[f64], alpha: f64, sums: &[RouteSums], xs: &[Vec<i64>]) -> (Vec<f64>, Matrix<f64>) {
    let r = theta.len();
    let g = special::log1p_over(alpha);
    let g1 = special::log1p_over_d1(alpha);
    let g2 = special::log1p_over_d2(alpha);
    let mut score = vec![0.0; r + 1];
    let mut info = Matrix::zeros(r + 1, r + 1);
    for x in xs {
        for j in 0..r {
            let k = x[j] as usize;
            let s = &sums[j];
            let xf = x[j] as f64;
            score[j] += s.s1[k] - g;
            score[r] += s.si[k] - xf / (1.0 + alpha) - theta[j] * g1;
            info[(j, j)] += s.q1[k];
            let cross = s.qi[k] + g1;
            info[(j, r)] += cross;
            info[(r, j)] += cross;
            info[(r, r)] += s.qii[k] - xf / ((1.0 + alpha) * (1.0 + alpha)) + theta[j] * g2;
        }
    }
    (score, info)
}
