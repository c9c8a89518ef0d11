//! Componentwise Metropolis-Hastings over the feasible set of route flows:
//! the fixed-partition sweep and the phased sampler that re-optimises the
//! partition from pilot-run flow magnitudes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::intlin::{greedy_reorder, make_partition, Partition};
use crate::models::{LogMassTable, TrafficModel};
use crate::netmodel::RoutingMatrix;
use crate::polytope::{apply_move, initial_feasible, move_bounds, FlowState, Frame, Objective};
use crate::rng::{substream, ChainRng};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    /// Uniform over the feasible range, then a Metropolis accept step.
    #[default]
    Uniform,
    /// Exact draw from the conditional over the feasible range.
    GibbsExact,
}

impl FromStr for Proposal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Proposal::Uniform),
            "gibbs-exact" => Ok(Proposal::GibbsExact),
            _ => Err(Error::Invalid(format!("unknown proposal '{s}'"))),
        }
    }
}

/// Statistic of pilot-phase flows used to rank routes for the basis.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreStatistic {
    #[default]
    Mean,
    LowPercentile(f64),
}

impl FromStr for ScoreStatistic {
    type Err = Error;
    /// `mean` or `percentile:q` with `0 < q < 1`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "mean" {
            return Ok(ScoreStatistic::Mean);
        }
        if let Some(q) = s.strip_prefix("percentile:") {
            let q: f64 = q.parse().map_err(|_| Error::Invalid(format!("bad percentile '{q}'")))?;
            return Ok(ScoreStatistic::LowPercentile(q));
        }
        Err(Error::Invalid(format!("unknown score statistic '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    #[default]
    Sequential,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub pilot_iters: usize,
    pub n_pilot_phases: usize,
    pub main_iters: usize,
    pub burn_in: usize,
    pub proposal: Proposal,
    pub seed: u64,
    pub score_statistic: ScoreStatistic,
    pub scan: ScanOrder,
    /// Keep every `thin`-th sweep.
    pub thin: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            pilot_iters: 10_000,
            n_pilot_phases: 2,
            main_iters: 10_000,
            burn_in: 1_000,
            proposal: Proposal::Uniform,
            seed: 0,
            score_statistic: ScoreStatistic::Mean,
            scan: ScanOrder::Sequential,
            thin: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Invalid("thinning factor must be at least 1".into()));
        }
        if let ScoreStatistic::LowPercentile(q) = self.score_statistic {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Invalid(format!("percentile must lie in (0, 1), got {q}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    /// 1-based pilot phase.
    Pilot(usize),
    BurnIn,
    Main,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Pilot(k) => write!(f, "pilot-{k}"),
            Phase::BurnIn => f.write_str("burn-in"),
            Phase::Main => f.write_str("main"),
        }
    }
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "burn-in" => Ok(Phase::BurnIn),
            "main" => Ok(Phase::Main),
            _ => s
                .strip_prefix("pilot-")
                .and_then(|k| k.parse().ok())
                .map(Phase::Pilot)
                .ok_or_else(|| Error::Invalid(format!("unknown phase '{s}'"))),
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One recorded sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    /// 1-based sweep number counted over all phases.
    pub iter: usize,
    pub phase: Phase,
    /// Flows after the sweep, original route order.
    pub x: Vec<i64>,
    pub n_accepted: usize,
    /// Routes whose flow differs from the start of the sweep.
    pub n_changed: usize,
    /// Mean flow over the basis routes.
    pub slack: f64,
    pub basis_cols: Arc<[usize]>,
}

/// Totals over every sweep of a phase, thinned or not.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseStats {
    pub phase: Phase,
    pub sweeps: usize,
    pub basis_cols: Vec<usize>,
    pub free_cols: Vec<usize>,
    /// Per route: changed at least once during the phase.
    pub changed: Vec<bool>,
    /// Per free coordinate (in `free_cols` order).
    pub accepted: Vec<u64>,
    pub slack_sum: f64,
}

impl PhaseStats {
    fn new(phase: Phase, frame: &Frame, routes: usize) -> Self {
        PhaseStats {
            phase,
            sweeps: 0,
            basis_cols: frame.basis_cols().to_vec(),
            free_cols: frame.free_cols().to_vec(),
            changed: vec![false; routes],
            accepted: vec![0; frame.dim()],
            slack_sum: 0.0,
        }
    }

    pub fn mean_slack(&self) -> f64 {
        if self.sweeps == 0 {
            0.0
        } else {
            self.slack_sum / self.sweeps as f64
        }
    }

    pub fn update_coverage(&self) -> f64 {
        if self.changed.is_empty() {
            return 0.0;
        }
        self.changed.iter().filter(|&&c| c).count() as f64 / self.changed.len() as f64
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .map(|&a| if self.sweeps == 0 { 0.0 } else { a as f64 / self.sweeps as f64 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainOutput {
    /// Recorded sweeps of every phase, thinned.
    pub records: Vec<SweepRecord>,
    pub phases: Vec<PhaseStats>,
    pub final_state: FlowState,
    pub warnings: Vec<String>,
}

impl ChainOutput {
    pub fn main_records(&self) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(|r| r.phase == Phase::Main)
    }

    pub fn phase(&self, phase: Phase) -> Option<&PhaseStats> {
        self.phases.iter().find(|p| p.phase == phase)
    }
}

/// Upper bound on each route flow: the smallest count among its links,
/// maximised over observations. `ys` are in reduced row order.
pub fn route_flow_caps(a: &RoutingMatrix, ys: &[Vec<i64>]) -> Vec<i64> {
    (0..a.routes())
        .map(|j| {
            ys.iter()
                .map(|y| a.route_links(j).iter().map(|&i| y[i]).min().unwrap_or(0))
                .max()
                .unwrap_or(0)
        })
        .collect()
}

/// One pass over the free coordinates. Returns the number of accepted
/// proposals and adds them to `accepted` per coordinate.
pub fn sweep<F: Real, R: Rng + ?Sized>(
    state: &mut FlowState,
    table: &LogMassTable<F>,
    frame: &Frame,
    proposal: Proposal,
    scan: ScanOrder,
    rng: &mut R,
    accepted: &mut [u64],
) -> usize {
    let mut order: Vec<usize> = (0..frame.dim()).collect();
    if scan == ScanOrder::Random {
        order.shuffle(rng);
    }
    let mut n_accepted = 0;
    let mut logw = Vec::new();
    for j in order {
        let b = move_bounds(state, frame, j);
        let cur = state.x()[frame.free_cols()[j]];
        assert!(b.lo <= cur && cur <= b.hi, "state left the feasible set");
        let ok = match proposal {
            Proposal::Uniform => {
                let t = if b.lo == b.hi { cur } else { rng.random_range(b.lo..=b.hi) };
                if t == cur {
                    true
                } else {
                    let ratio = table.move_delta(state, frame, j, t).as_f64();
                    if ratio >= 0.0 || rng.random::<f64>().ln() < ratio {
                        apply_move(state, frame, j, t);
                        true
                    } else {
                        false
                    }
                }
            }
            Proposal::GibbsExact => {
                if b.lo < b.hi {
                    logw.clear();
                    logw.extend((b.lo..=b.hi).map(|t| table.move_delta(state, frame, j, t).as_f64()));
                    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for w in logw.iter_mut() {
                        *w = (*w - top).exp();
                        total += *w;
                    }
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = b.hi;
                    for (k, w) in logw.iter().enumerate() {
                        if u < *w {
                            pick = b.lo + k as i64;
                            break;
                        }
                        u -= w;
                    }
                    apply_move(state, frame, j, pick);
                }
                true
            }
        };
        if ok {
            n_accepted += 1;
            accepted[j] += 1;
        }
    }
    debug_assert!(state.x().iter().all(|&v| v >= 0));
    n_accepted
}

/// A single chain: the current flows and the coordinate frame in use.
#[derive(Clone, Debug)]
pub struct Chain {
    frame: Frame,
    state: FlowState,
    proposal: Proposal,
    scan: ScanOrder,
}

impl Chain {
    /// Starts at a max-L1 feasible point. `y` is in reduced row order.
    pub fn new(a: &RoutingMatrix, y: &[i64], p: &Partition, proposal: Proposal, scan: ScanOrder) -> Result<Self> {
        let state = initial_feasible(a, y, Objective::MaxL1)?;
        Ok(Chain { frame: Frame::new(a, p)?, state, proposal, scan })
    }

    pub fn with_state(frame: Frame, state: FlowState, proposal: Proposal, scan: ScanOrder) -> Self {
        Chain { frame, state, proposal, scan }
    }

    /// Switches coordinates; the flow vector itself is untouched.
    pub fn repartition(&mut self, a: &RoutingMatrix, p: &Partition) -> Result<()> {
        self.frame = Frame::new(a, p)?;
        Ok(())
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    /// One sweep; returns `(n_accepted, n_changed)` and marks changed routes.
    pub fn step<F: Real, R: Rng + ?Sized>(
        &mut self,
        table: &LogMassTable<F>,
        rng: &mut R,
        accepted: &mut [u64],
        changed: &mut [bool],
    ) -> (usize, usize) {
        let before = self.state.x().to_vec();
        let n_acc = sweep(&mut self.state, table, &self.frame, self.proposal, self.scan, rng, accepted);
        let mut n_changed = 0;
        for (k, (&old, &new)) in before.iter().zip(self.state.x()).enumerate() {
            if old != new {
                n_changed += 1;
                changed[k] = true;
            }
        }
        (n_acc, n_changed)
    }
}

struct ScoreAccumulator {
    stat: ScoreStatistic,
    sums: Vec<f64>,
    hist: Vec<Vec<u64>>,
    n: usize,
}

impl ScoreAccumulator {
    fn new(stat: ScoreStatistic, caps: &[i64]) -> Self {
        let hist = match stat {
            ScoreStatistic::Mean => Vec::new(),
            ScoreStatistic::LowPercentile(_) => caps.iter().map(|&c| vec![0; c as usize + 1]).collect(),
        };
        ScoreAccumulator { stat, sums: vec![0.0; caps.len()], hist, n: 0 }
    }

    fn add(&mut self, x: &[i64]) {
        self.n += 1;
        match self.stat {
            ScoreStatistic::Mean => self.sums.iter_mut().zip(x).for_each(|(s, &v)| *s += v as f64),
            ScoreStatistic::LowPercentile(_) => self.hist.iter_mut().zip(x).for_each(|(h, &v)| h[v as usize] += 1),
        }
    }

    fn finish(&self) -> Option<Vec<f64>> {
        if self.n == 0 {
            return None;
        }
        Some(match self.stat {
            ScoreStatistic::Mean => self.sums.iter().map(|s| s / self.n as f64).collect(),
            ScoreStatistic::LowPercentile(q) => {
                let need = (q * self.n as f64).ceil().max(1.0) as u64;
                self.hist
                    .iter()
                    .map(|h| {
                        let mut acc = 0;
                        h.iter()
                            .position(|&c| {
                                acc += c;
                                acc >= need
                            })
                            .unwrap_or(0) as f64
                    })
                    .collect()
            }
        })
    }
}

struct Run<'a, F> {
    table: &'a LogMassTable<F>,
    thin: usize,
    iter: usize,
    out: ChainOutput,
}

impl<F: Real> Run<'_, F> {
    fn phase(
        &mut self,
        chain: &mut Chain,
        phase: Phase,
        iters: usize,
        rng: &mut ChainRng,
        mut scores: Option<&mut ScoreAccumulator>,
    ) {
        let routes = chain.state.x().len();
        let mut stats = PhaseStats::new(phase, &chain.frame, routes);
        let basis: Arc<[usize]> = chain.frame.basis_cols().into();
        for k in 0..iters {
            let (n_accepted, n_changed) = chain.step(self.table, rng, &mut stats.accepted, &mut stats.changed);
            self.iter += 1;
            stats.sweeps += 1;
            let slack = chain.state.slack(&chain.frame);
            stats.slack_sum += slack;
            if let Some(s) = scores.as_deref_mut() {
                s.add(chain.state.x());
            }
            if (k + 1) % self.thin == 0 {
                self.out.records.push(SweepRecord {
                    iter: self.iter,
                    phase,
                    x: chain.state.x().to_vec(),
                    n_accepted,
                    n_changed,
                    slack,
                    basis_cols: basis.clone(),
                });
            }
        }
        if iters > 0 && chain.frame.dim() > 0 && !stats.changed.iter().any(|&c| c) {
            let msg = format!("sampler made no moves during {phase} ({iters} sweeps)");
            log::warn!("{msg}");
            self.out.warnings.push(msg);
        }
        self.out.phases.push(stats);
    }
}

fn prepare<F: Real>(a: &RoutingMatrix, y: &[i64], m: &TrafficModel<F>, cfg: &SamplerConfig) -> Result<Vec<i64>> {
    cfg.validate()?;
    if y.len() != a.original().rows() {
        return Err(Error::Dimension(format!("{} counts for {} links", y.len(), a.original().rows())));
    }
    if m.routes() != a.routes() {
        return Err(Error::Dimension(format!("model has {} routes, matrix has {}", m.routes(), a.routes())));
    }
    Ok(a.kept_rows().iter().map(|&i| y[i]).collect())
}

fn start_chain(a: &RoutingMatrix, y: &[i64], y_red: &[i64], p: &Partition, cfg: &SamplerConfig) -> Result<Chain> {
    let chain = Chain::new(a, y_red, p, cfg.proposal, cfg.scan)?;
    if a.original().mul_vec(chain.state.x()) != y {
        return Err(Error::Infeasible);
    }
    Ok(chain)
}

/// Phased sampler: pilot phases each followed by a greedy re-partition on
/// the pilot flow statistic, then burn-in and the main phase on the frozen
/// partition. `y` is in the row order of the matrix as loaded.
pub fn run_phased<F: Real>(
    a: &RoutingMatrix,
    y: &[i64],
    m: &TrafficModel<F>,
    initial_scores: Option<&[f64]>,
    cfg: &SamplerConfig,
    rng: &mut ChainRng,
) -> Result<ChainOutput> {
    let y_red = prepare(a, y, m, cfg)?;
    let caps = route_flow_caps(a, std::slice::from_ref(&y_red));
    let table = m.table(&caps);
    let ones = vec![1.0; a.routes()];
    let p = greedy_reorder(a, initial_scores.unwrap_or(&ones))?;
    let mut chain = start_chain(a, y, &y_red, &p, cfg)?;
    let mut run = Run { table: &table, thin: cfg.thin, iter: 0, out: empty_output(&chain) };
    for k in 1..=cfg.n_pilot_phases {
        let mut acc = ScoreAccumulator::new(cfg.score_statistic, &caps);
        run.phase(&mut chain, Phase::Pilot(k), cfg.pilot_iters, rng, Some(&mut acc));
        if let Some(scores) = acc.finish() {
            let p = greedy_reorder(a, &scores)?;
            log::debug!("pilot {k}: basis {:?}", p.basis_cols());
            chain.repartition(a, &p)?;
        }
    }
    run.phase(&mut chain, Phase::BurnIn, cfg.burn_in, rng, None);
    run.phase(&mut chain, Phase::Main, cfg.main_iters, rng, None);
    run.out.final_state = chain.state;
    Ok(run.out)
}

/// Sampler on one fixed partition (the given basis, or the greedy basis for
/// equal scores): burn-in then main phase, pilot settings ignored.
pub fn run_fixed<F: Real>(
    a: &RoutingMatrix,
    y: &[i64],
    m: &TrafficModel<F>,
    basis: Option<&[usize]>,
    cfg: &SamplerConfig,
    rng: &mut ChainRng,
) -> Result<ChainOutput> {
    let y_red = prepare(a, y, m, cfg)?;
    let caps = route_flow_caps(a, std::slice::from_ref(&y_red));
    let table = m.table(&caps);
    let p = match basis {
        Some(b) => make_partition(a, b)?,
        None => greedy_reorder(a, &vec![1.0; a.routes()])?,
    };
    let mut chain = start_chain(a, y, &y_red, &p, cfg)?;
    let mut run = Run { table: &table, thin: cfg.thin, iter: 0, out: empty_output(&chain) };
    run.phase(&mut chain, Phase::BurnIn, cfg.burn_in, rng, None);
    run.phase(&mut chain, Phase::Main, cfg.main_iters, rng, None);
    run.out.final_state = chain.state;
    Ok(run.out)
}

fn empty_output(chain: &Chain) -> ChainOutput {
    ChainOutput { records: Vec::new(), phases: Vec::new(), final_state: chain.state.clone(), warnings: Vec::new() }
}

/// `k` independent phased chains in parallel, chain `c` on stream `c` of
/// `cfg.seed`.
pub fn run_chains<F: Real>(
    a: &RoutingMatrix,
    y: &[i64],
    m: &TrafficModel<F>,
    cfg: &SamplerConfig,
    k: usize,
) -> Result<Vec<ChainOutput>> {
    (0..k)
        .into_par_iter()
        .map(|c| run_phased(a, y, m, None, cfg, &mut substream(cfg.seed, c as u64)))
        .collect()
}
