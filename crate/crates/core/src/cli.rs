//! Command-line front end. Results go to `--out` or standard output,
//! diagnostics to standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, ChainSummary};
use crate::error::Error;
use crate::inference::{bayes_poisson, stochastic_em, EmConfig};
use crate::intlin::TuStatus;
use crate::io;
use crate::models::{ModelKind, TrafficModel};
use crate::netmodel::{self, LinkCountSample, RoutingMatrix};
use crate::polytope::{enumerate_feasible, DEFAULT_ENUMERATION_CAP};
use crate::rng::substream;
use crate::sampler::{run_phased, Proposal, SamplerConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(e) if e.is_numerical() => 3,
            CliError::Run(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Enumerate,
    Sample,
    Em,
    Bayes,
    Summarize,
}

#[derive(Debug, Parser)]
#[command(name = "flowtomo", version, about = "Route flows from link counts")]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Structural checks on the routing matrix (and counts, if given)
    Check(Options),
    /// List every feasible route-flow vector
    Enumerate(Options),
    /// Sample route flows given link counts
    Sample(Options),
    /// Maximum likelihood by stochastic EM
    Em(Options),
    /// Gibbs sampling of Poisson means under gamma priors
    Bayes(Options),
    /// Diagnostics for a chain trace
    Summarize(Options),
}

/// Every setting, from flags or a JSON config file. Flags win.
#[derive(Clone, Debug, Default, clap::Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    /// Incidence matrix CSV (links by routes)
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Link counts CSV (one row per period)
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Gamma priors CSV
    #[arg(long)]
    pub priors: Option<PathBuf>,
    /// Route means CSV (route_id,theta with optional alpha row) for sample/summarize
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Chain trace CSV for summarize
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Output file; per-chain files get a suffix
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub pilot_iters: Option<usize>,
    #[arg(long)]
    pub pilot_phases: Option<usize>,
    /// Main-phase sweeps (sample, bayes) or initial E-step draws (em)
    #[arg(long)]
    pub iters: Option<usize>,
    /// Burn-in sweeps (per E-step for em)
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub proposal: Option<Proposal>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Largest feasible set to enumerate
    #[arg(long)]
    pub cap: Option<usize>,
    /// Gamma shape divisor for pseudo-count priors
    #[arg(long)]
    pub prior_divisor: Option<f64>,
    /// EM ascent tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    /// JSON file supplying any of these settings
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Options {
    fn overlay(self, base: Options) -> Options {
        Options {
            matrix: self.matrix.or(base.matrix),
            counts: self.counts.or(base.counts),
            priors: self.priors.or(base.priors),
            theta: self.theta.or(base.theta),
            chain: self.chain.or(base.chain),
            out: self.out.or(base.out),
            model: self.model.or(base.model),
            pilot_iters: self.pilot_iters.or(base.pilot_iters),
            pilot_phases: self.pilot_phases.or(base.pilot_phases),
            iters: self.iters.or(base.iters),
            burn_in: self.burn_in.or(base.burn_in),
            proposal: self.proposal.or(base.proposal),
            seed: self.seed.or(base.seed),
            chains: self.chains.or(base.chains),
            thin: self.thin.or(base.thin),
            cap: self.cap.or(base.cap),
            prior_divisor: self.prior_divisor.or(base.prior_divisor),
            tol: self.tol.or(base.tol),
            max_outer_iters: self.max_outer_iters.or(base.max_outer_iters),
            config: self.config,
        }
    }
}

/// A validated invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub options: Options,
}

impl RunConfig {
    pub fn new(command: Command, options: Options) -> CliResult<Self> {
        let options = match &options.config {
            Some(path) => {
                let text = read(path)?;
                let base: Options =
                    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                options.overlay(base)
            }
            None => options,
        };
        let o = &options;
        let need = |present: bool, flag: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::Usage(format!("{command:?} requires --{flag}").to_lowercase()))
            }
        };
        match command {
            Command::Check => need(o.matrix.is_some(), "matrix")?,
            Command::Enumerate => {
                need(o.matrix.is_some(), "matrix")?;
                need(o.counts.is_some(), "counts")?;
            }
            Command::Sample | Command::Em | Command::Bayes => {
                need(o.matrix.is_some(), "matrix")?;
                need(o.counts.is_some(), "counts")?;
                need(o.seed.is_some(), "seed")?;
                if command == Command::Bayes {
                    need(o.priors.is_some(), "priors")?;
                }
            }
            Command::Summarize => need(o.chain.is_some(), "chain")?,
        }
        if o.chains == Some(0) || o.thin == Some(0) {
            return Err(CliError::Usage("--chains and --thin must be at least 1".into()));
        }
        Ok(RunConfig { command, options })
    }

    fn sampler_config(&self) -> SamplerConfig {
        let o = &self.options;
        let d = SamplerConfig::default();
        SamplerConfig {
            pilot_iters: o.pilot_iters.unwrap_or(d.pilot_iters),
            n_pilot_phases: o.pilot_phases.unwrap_or(d.n_pilot_phases),
            main_iters: o.iters.unwrap_or(d.main_iters),
            burn_in: o.burn_in.unwrap_or(d.burn_in),
            proposal: o.proposal.unwrap_or(d.proposal),
            seed: o.seed.unwrap_or(d.seed),
            thin: o.thin.unwrap_or(d.thin),
            ..d
        }
    }

    fn em_config(&self) -> EmConfig {
        let o = &self.options;
        let d = EmConfig::default();
        EmConfig {
            m_init: o.iters.unwrap_or(d.m_init),
            burn_in_per_estep: o.burn_in.unwrap_or(d.burn_in_per_estep),
            pilot_iters: o.pilot_iters.unwrap_or(d.pilot_iters),
            n_pilot_phases: o.pilot_phases.unwrap_or(d.n_pilot_phases),
            max_outer_iters: o.max_outer_iters.unwrap_or(d.max_outer_iters),
            tol: o.tol.unwrap_or(d.tol),
            proposal: o.proposal.unwrap_or(d.proposal),
            seed: o.seed.unwrap_or(d.seed),
            ..d
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (command, options) = match cli.command {
        CommandArgs::Check(o) => (Command::Check, o),
        CommandArgs::Enumerate(o) => (Command::Enumerate, o),
        CommandArgs::Sample(o) => (Command::Sample, o),
        CommandArgs::Em(o) => (Command::Em, o),
        CommandArgs::Bayes(o) => (Command::Bayes, o),
        CommandArgs::Summarize(o) => (Command::Summarize, o),
    };
    match RunConfig::new(command, options).and_then(|cfg| run(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    match cfg.command {
        Command::Check => check(cfg),
        Command::Enumerate => enumerate(cfg),
        Command::Sample => sample(cfg),
        Command::Em => em(cfg),
        Command::Bayes => bayes(cfg),
        Command::Summarize => summarize(cfg),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Run(Error::Invalid(format!("{}: {e}", path.display()))))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(Error::from)?,
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(Error::from)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    emit(out, &text)
}

fn load_matrix(cfg: &RunConfig) -> CliResult<RoutingMatrix> {
    let path = cfg.options.matrix.as_deref().expect("validated");
    Ok(netmodel::load_network(&read(path)?)?)
}

/// Counts checked against the matrix, including nonnegative feasibility.
fn load_counts(cfg: &RunConfig, a: &RoutingMatrix) -> CliResult<LinkCountSample> {
    let path = cfg.options.counts.as_deref().expect("validated");
    let ys = io::parse_counts_csv(&read(path)?)?;
    if !netmodel::consistency_check(a, &ys)? {
        return Err(Error::Infeasible.into());
    }
    Ok(ys)
}

fn load_model(cfg: &RunConfig, a: &RoutingMatrix) -> CliResult<TrafficModel<f64>> {
    let kind = cfg.options.model.unwrap_or_default();
    match &cfg.options.theta {
        Some(path) => {
            let (theta, alpha) = io::parse_theta_csv(&read(path)?, a.route_ids())?;
            match (kind, alpha) {
                (ModelKind::Negbin, None) => {
                    Err(Error::Invalid("negbin model needs an alpha row in the theta file".into()).into())
                }
                (ModelKind::Negbin, Some(al)) => Ok(TrafficModel::negbin(theta, al)?),
                (ModelKind::Poisson, _) => Ok(TrafficModel::poisson(theta)?),
            }
        }
        None if kind == ModelKind::Negbin => {
            Err(CliError::Usage("negbin sampling needs --theta with an alpha row".into()))
        }
        None => Ok(TrafficModel::uniform(a.routes())),
    }
}

#[derive(Serialize)]
struct CheckReport {
    links: usize,
    routes: usize,
    route_ids: Vec<String>,
    identifiable: bool,
    tu_status: TuStatus,
    rows_removed: Vec<usize>,
    duplicate_columns: Vec<(usize, usize)>,
    basis_routes: Vec<usize>,
    basis_coprime: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    counts_consistent: Option<bool>,
}

fn check(cfg: &RunConfig) -> CliResult<()> {
    let a = load_matrix(cfg)?;
    let report = netmodel::check_identifiability_preconditions(&a);
    let counts_consistent = match &cfg.options.counts {
        Some(path) => Some(netmodel::consistency_check(&a, &io::parse_counts_csv(&read(path)?)?)?),
        None => None,
    };
    emit_json(
        cfg.options.out.as_deref(),
        &CheckReport {
            links: a.original().rows(),
            routes: a.routes(),
            route_ids: a.route_ids().to_vec(),
            identifiable: report.identifiability_ok,
            tu_status: report.tu_status,
            rows_removed: report.rows_removed,
            duplicate_columns: report.duplicate_columns,
            basis_routes: a.basis_block().to_vec(),
            basis_coprime: report.coprime_ok,
            counts_consistent,
        },
    )
}

fn enumerate(cfg: &RunConfig) -> CliResult<()> {
    let a = load_matrix(cfg)?;
    let ys = load_counts(cfg, &a)?;
    let cap = cfg.options.cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let mut text = String::new();
    for (t, y) in ys.reduced(&a)?.iter().enumerate() {
        let points = enumerate_feasible(&a, y, cap)?;
        let csv = io::write_points_csv(&a, &points)?;
        if ys.len() == 1 {
            text = csv;
        } else {
            // one block per period, separated by a comment line
            text.push_str(&format!("# period {}\n", t + 1));
            text.push_str(&csv);
        }
    }
    emit(cfg.options.out.as_deref(), &text)
}

/// `out` with `_obs{t}` / `_chain{c}` inserted before the extension.
fn suffixed(out: &Path, obs: Option<usize>, chain: Option<usize>) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut name = stem;
    if let Some(t) = obs {
        name.push_str(&format!("_obs{}", t + 1));
    }
    if let Some(c) = chain {
        name.push_str(&format!("_chain{}", c + 1));
    }
    if let Some(ext) = out.extension() {
        name.push('.');
        name.push_str(&ext.to_string_lossy());
    }
    out.with_file_name(name)
}

fn sample(cfg: &RunConfig) -> CliResult<()> {
    let a = load_matrix(cfg)?;
    let ys = load_counts(cfg, &a)?;
    let m = load_model(cfg, &a)?;
    let sc = cfg.sampler_config();
    sc.validate()?;
    let k = cfg.options.chains.unwrap_or(1);
    let n = ys.len();
    let single = k == 1 && n == 1;
    if !single && cfg.options.out.is_none() {
        return Err(CliError::Usage("several chains or periods need --out".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|t| (0..k).map(move |c| (t, c))).collect();
    let outputs = jobs
        .par_iter()
        .map(|&(t, c)| {
            let mut rng = substream(sc.seed, (t * k + c) as u64);
            run_phased(&a, &ys.counts()[t], &m, None, &sc, &mut rng)
        })
        .collect::<crate::Result<Vec<_>>>()?;
    for (&(t, c), chain) in jobs.iter().zip(&outputs) {
        for w in &chain.warnings {
            eprintln!("warning: period {} chain {}: {w}", t + 1, c + 1);
        }
        let text = io::write_chain_csv(chain, a.routes())?;
        let path = cfg.options.out.as_deref().map(|p| {
            if single {
                p.to_path_buf()
            } else {
                suffixed(p, (n > 1).then_some(t), (k > 1).then_some(c))
            }
        });
        emit(path.as_deref(), &text)?;
    }
    Ok(())
}

fn em(cfg: &RunConfig) -> CliResult<()> {
    let a = load_matrix(cfg)?;
    let ys = load_counts(cfg, &a)?;
    let ec = cfg.em_config();
    let res = stochastic_em(&a, &ys, cfg.options.model.unwrap_or_default(), &ec)?;
    if !res.converged {
        eprintln!("warning: EM did not converge in {} iterations", ec.max_outer_iters);
    }
    if res.pseudo_inverse {
        eprintln!("warning: information matrix is singular; standard errors use a pseudo-inverse");
    }
    emit_json(cfg.options.out.as_deref(), &res)
}

fn bayes(cfg: &RunConfig) -> CliResult<()> {
    let a = load_matrix(cfg)?;
    let ys = load_counts(cfg, &a)?;
    if cfg.options.model == Some(ModelKind::Negbin) {
        return Err(Error::Unsupported("Bayesian inference is implemented for the Poisson model only".into()).into());
    }
    let path = cfg.options.priors.as_deref().expect("validated");
    let prior = io::parse_priors_csv(&read(path)?, a.route_ids(), cfg.options.prior_divisor.unwrap_or(2.0))?;
    let res = bayes_poisson(&a, ys.counts(), &prior, None, &cfg.sampler_config(), false)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    emit_json(cfg.options.out.as_deref(), &res)
}

#[derive(Serialize)]
struct TraceReport {
    #[serde(flatten)]
    summary: ChainSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    tv_distance: Option<f64>,
}

fn summarize(cfg: &RunConfig) -> CliResult<()> {
    let path = cfg.options.chain.as_deref().expect("validated");
    let chain = io::parse_chain_csv(&read(path)?)?;
    let summary = diagnostics::summarize(&chain, cfg.options.thin.unwrap_or(1))?;
    // distance to the exact conditional when the fixture is given
    let tv_distance = match (&cfg.options.matrix, &cfg.options.counts) {
        (Some(_), Some(_)) => {
            let a = load_matrix(cfg)?;
            let ys = load_counts(cfg, &a)?;
            if ys.len() != 1 {
                return Err(Error::Invalid("summarize compares against a single period of counts".into()).into());
            }
            let m = load_model(cfg, &a)?;
            let cap = cfg.options.cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
            Some(diagnostics::tv_distance_vs_oracle(&chain, &a, &ys.counts()[0], &m, cap)?)
        }
        _ => None,
    };
    emit_json(cfg.options.out.as_deref(), &TraceReport { summary, tv_distance })
}
