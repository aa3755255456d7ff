//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or format error, 4 fit
//! without any training exceedance.

use std::path::{Path, PathBuf};

use blindsearch_core::engine::pulsar::{GridSpec, PulsarEvaluator, PulsarNullModel};
use blindsearch_core::engine::{SearchOptions, SearchOutcome, StatisticEvaluator};
use blindsearch_core::fit::{fit_strategy, FitConfig, FitWarning};
use blindsearch_core::stats::{chi2_2_quantile, chi2_2_upper_quantile, simulate_photons, FreqDrift, SignalSpec};
use blindsearch_core::tree::{NodeId, TreeConfig};
use blindsearch_core::stream_rng;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, ConfigFile, Settings};
use crate::eval::{self, DeskConfig, OracleSpec, TradeoffSpec};
use crate::io::{self, DetectionRow, FormatError, GridDto, ObservedRow, StrategyFile, SummaryRow, TradeoffRow};
use crate::manifest::{sidecar_path, RunManifest};
use crate::parallel;

pub const VERSION: &str =
    "0.1.0 (strategy format 1, photon format 1, csv format 1, manifest format 1)";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Data(anyhow::Error),
    #[error("{0}")]
    DegenerateFit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::DegenerateFit(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.into())
    }
}

impl From<blindsearch_core::Error> for CliError {
    fn from(e: blindsearch_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "blindsearch",
    version = VERSION,
    about = "Cost-constrained hierarchical blind search for periodic photon sources"
)]
pub struct Cli {
    /// Settings file (TOML, `key = value`) or a run manifest to replay.
    /// Flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate photon arrival times from a sinusoidally modulated source.
    Simulate(SimulateArgs),
    /// Fit a search strategy under the global null.
    Fit(FitArgs),
    /// Run a fitted strategy over a photon file.
    Search(SearchArgs),
    /// Exhaustive search of every leaf.
    Naive(NaiveArgs),
    /// Trace cost/power tradeoff curves.
    Evaluate(EvaluateArgs),
    /// Compare a fitted strategy with exact backward induction.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Pulsed fraction (0 gives uniform arrivals).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Frequency (Hz).
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    /// Frequency drift (Hz/s).
    #[arg(long, allow_hyphen_values = true)]
    pub omegadot: Option<f64>,
    #[arg(long)]
    pub photons: Option<usize>,
    /// Observation span T (seconds).
    #[arg(long)]
    pub span: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Search grid. Defaults to the desk-scale configuration.
#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub omega_min: Option<f64>,
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub omegadot_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub omegadot_max: Option<f64>,
    /// Number of tree layers G.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub oversampling: Option<f64>,
    /// Per-layer observation costs (comma separated, G values).
    #[arg(long, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
}

const GRID_KEYS: &[&str] = &[
    "omega_min",
    "omega_max",
    "omegadot_min",
    "omegadot_max",
    "layers",
    "oversampling",
    "costs",
];

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of training paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Null quantile of the leaf statistic used as training threshold.
    #[arg(long)]
    pub qtrain_quantile: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Observation span T (seconds) of the data to be searched.
    #[arg(long)]
    pub span: Option<f64>,
    /// Photons per simulated training series.
    #[arg(long)]
    pub photons: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Rejection threshold: `--qreject`, or `--alpha` (default 0.05) spread
/// over `--n-effective` hypotheses.
#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub qreject: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Defaults to the number of leaves divided by 9.
    #[arg(long)]
    pub n_effective: Option<f64>,
}

const THRESHOLD_KEYS: &[&str] = &["qreject", "alpha", "n_effective"];

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub strategy: Option<PathBuf>,
    #[arg(long)]
    pub photons: Option<PathBuf>,
    /// Overrides the photon file's `# T=` header.
    #[arg(long)]
    pub span: Option<f64>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    /// Also write every observed node (observed.csv).
    #[arg(long)]
    pub emit_observed: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NaiveArgs {
    #[arg(long)]
    pub photons: Option<PathBuf>,
    /// Overrides the photon file's `# T=` header.
    #[arg(long)]
    pub span: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Comma-separated lambda grid.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Comma-separated signal strengths.
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    /// Data sets per signal strength (and null data sets for cost).
    #[arg(long)]
    pub sims: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub qtrain_quantile: Option<f64>,
    #[arg(long)]
    pub qreject: Option<f64>,
    /// Root subtrees searched per null data set.
    #[arg(long)]
    pub null_roots: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub span: Option<f64>,
    #[arg(long)]
    pub photons: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Only `gaussian-chain` is available.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Detection threshold on the leaf statistic.
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Discretization levels of the statistic.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub roots: Option<u64>,
    #[arg(long)]
    pub branching: Option<u64>,
    /// Levels cover [-half_width, half_width].
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Fresh simulations used to estimate the fitted payoff.
    #[arg(long)]
    pub mc_runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report file; printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const SIMULATE_KEYS: &[&str] = &["theta", "omega", "omegadot", "photons", "span", "seed", "out"];
const FIT_KEYS: &[&str] = &[
    "lambda",
    "paths",
    "qtrain_quantile",
    "span",
    "photons",
    "seed",
    "out",
];
const SEARCH_KEYS: &[&str] = &["strategy", "photons", "span", "emit_observed", "out_dir"];
const NAIVE_KEYS: &[&str] = &["photons", "span", "out_dir"];
const EVALUATE_KEYS: &[&str] = &[
    "lambdas",
    "thetas",
    "sims",
    "paths",
    "qtrain_quantile",
    "qreject",
    "null_roots",
    "span",
    "photons",
    "seed",
    "out",
];
const ORACLE_KEYS: &[&str] = &[
    "model",
    "rho",
    "lambda",
    "q",
    "paths",
    "levels",
    "layers",
    "roots",
    "branching",
    "half_width",
    "mc_runs",
    "seed",
    "out",
];

fn keys_for(command: &str) -> Vec<&'static str> {
    let mut keys: Vec<&str> = match command {
        "simulate" => SIMULATE_KEYS.to_vec(),
        "fit" => [FIT_KEYS, GRID_KEYS].concat(),
        "search" => [SEARCH_KEYS, THRESHOLD_KEYS].concat(),
        "naive" => [NAIVE_KEYS, GRID_KEYS, THRESHOLD_KEYS].concat(),
        "evaluate" => [EVALUATE_KEYS, GRID_KEYS].concat(),
        "oracle" => ORACLE_KEYS.to_vec(),
        _ => Vec::new(),
    };
    keys.sort_unstable();
    keys.dedup();
    keys
}

fn all_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = ["simulate", "fit", "search", "naive", "evaluate", "oracle"]
        .iter()
        .flat_map(|c| keys_for(c))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let name = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Fit(_) => "fit",
        Command::Search(_) => "search",
        Command::Naive(_) => "naive",
        Command::Evaluate(_) => "evaluate",
        Command::Oracle(_) => "oracle",
    };
    let settings = file.for_command(name, &keys_for(name), &all_keys())?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, settings),
        Command::Fit(a) => cmd_fit(a, settings),
        Command::Search(a) => cmd_search(a, settings),
        Command::Naive(a) => cmd_naive(a, settings),
        Command::Evaluate(a) => cmd_evaluate(a, settings),
        Command::Oracle(a) => cmd_oracle(a, settings),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing required setting --{flag}")))
}

fn manifest(command: &str, s: &Settings) -> RunManifest {
    RunManifest::new(command, s.resolved().clone())
}

fn resolve_grid(a: GridArgs, s: &mut Settings, span: f64) -> Result<(GridSpec, Option<Vec<f64>>)> {
    let desk = DeskConfig::desk_scale().grid;
    let grid = GridSpec {
        omega_min: s.pick("omega_min", a.omega_min, desk.omega_min)?,
        omega_max: s.pick("omega_max", a.omega_max, desk.omega_max)?,
        omegadot_min: s.pick("omegadot_min", a.omegadot_min, desk.omegadot_min)?,
        omegadot_max: s.pick("omegadot_max", a.omegadot_max, desk.omegadot_max)?,
        layers: s.pick("layers", a.layers, desk.layers)?,
        oversampling: s.pick("oversampling", a.oversampling, desk.oversampling)?,
        span,
    };
    grid.validate().map_err(|e| usage(format!("invalid grid: {e}")))?;
    let costs = s.pick_opt("costs", a.costs)?;
    Ok((grid, costs))
}

fn grid_tree(grid: &GridSpec, costs: Option<Vec<f64>>) -> Result<TreeConfig> {
    let tree = match costs {
        Some(c) => grid.tree_with_costs(c),
        None => grid.tree(),
    };
    tree.map_err(|e| usage(format!("invalid grid: {e}")))
}

fn resolve_threshold(a: ThresholdArgs, s: &mut Settings, leaves: u64) -> Result<f64> {
    let q = s.pick_opt("qreject", a.qreject)?;
    let alpha = s.pick_opt("alpha", a.alpha)?;
    let n_eff = s.pick_opt("n_effective", a.n_effective)?;
    match (q, alpha) {
        (Some(_), Some(_)) => Err(usage("give either --qreject or --alpha, not both")),
        (Some(q), None) => {
            if n_eff.is_some() {
                return Err(usage("--n-effective only applies with --alpha"));
            }
            if q.is_nan() {
                return Err(usage("--qreject must be a number"));
            }
            Ok(q)
        }
        (None, alpha) => {
            let alpha = s.pick("alpha", alpha, eval::DEFAULT_ALPHA)?;
            let n = s.pick("n_effective", n_eff, (leaves as f64 / eval::GRID_POINTS_PER_HYPOTHESIS).max(1.0))?;
            if !(n >= 1.0 && n.is_finite()) {
                return Err(usage("--n-effective must be at least 1"));
            }
            let q = chi2_2_upper_quantile(alpha / n).map_err(|e| usage(format!("--alpha: {e}")))?;
            s.pick("qreject", None, q)?;
            Ok(q)
        }
    }
}

fn cmd_simulate(a: SimulateArgs, mut s: Settings) -> Result<()> {
    let theta = s.pick("theta", a.theta, 0.0)?;
    let omega = s.pick("omega", a.omega, eval::REFERENCE_OMEGA)?;
    let omegadot = s.pick("omegadot", a.omegadot, eval::REFERENCE_OMEGADOT)?;
    let photons = s.pick("photons", a.photons, eval::REFERENCE_PHOTONS)?;
    let span = s.pick("span", a.span, eval::REFERENCE_SPAN)?;
    let seed = s.pick("seed", a.seed, 0u64)?;
    let out: PathBuf = required(s.pick_opt("out", a.out)?, "out")?;
    let freq = FreqDrift::new(omega, omegadot).map_err(|e| usage(e.to_string()))?;
    let spec = SignalSpec {
        theta,
        freq,
        photons,
        span,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let series = simulate_photons(&spec, &mut stream_rng(seed, 0))?;
    let comments = vec![
        format!("theta={theta}"),
        format!("omega={omega}"),
        format!("omegadot={omegadot:e}"),
        format!("seed={seed}"),
    ];
    io::write_photons(&out, &series, &comments)?;
    let mut m = manifest("simulate", &s);
    m.output(&out);
    m.write(&sidecar_path(&out))?;
    Ok(())
}

fn check_quantile(q: f64, flag: &str) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--{flag} must lie in (0, 1)")))
    }
}

fn cmd_fit(a: FitArgs, mut s: Settings) -> Result<()> {
    let desk = DeskConfig::desk_scale();
    let lambda = s.pick("lambda", a.lambda, 0.03)?;
    let paths = s.pick("paths", a.paths, 500_000usize)?;
    let quantile = s.pick("qtrain_quantile", a.qtrain_quantile, eval::DEFAULT_QTRAIN_QUANTILE)?;
    let span = s.pick("span", a.span, desk.grid.span)?;
    let photons = s.pick("photons", a.photons, desk.photons)?;
    let seed = s.pick("seed", a.seed, 0u64)?;
    let (grid, costs) = resolve_grid(a.grid, &mut s, span)?;
    let out: PathBuf = required(s.pick_opt("out", a.out)?, "out")?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(usage("--lambda must be finite and >= 0"));
    }
    check_quantile(quantile, "qtrain-quantile")?;
    if paths < 2 {
        return Err(usage("--paths must be at least 2"));
    }
    if photons == 0 {
        return Err(usage("--photons must be positive"));
    }
    let tree = grid_tree(&grid, costs)?;
    let q_train = chi2_2_quantile(quantile)?;
    let model = PulsarNullModel::with_tree(grid, photons, tree.clone())?;
    let samples = parallel::with_pool(|| parallel::sample_paths(&model, paths, seed))?;
    let fit = fit_strategy(
        &samples,
        &FitConfig {
            tree,
            lambda,
            q_train,
            seed,
        },
    )?;
    for w in &fit.warnings {
        match w {
            FitWarning::NoExceedances => {
                return Err(CliError::DegenerateFit(format!(
                    "degenerate fit: none of the {paths} training paths reached q_train = {q_train:.4} \
                     in the leaf layer, so the strategy would carry no information. Lower \
                     --qtrain-quantile (the threshold should be exceeded by roughly a fraction beta \
                     of null leaves, where beta is the cost fraction you can afford) or raise --paths."
                )))
            }
            FitWarning::DegenerateLayer { layer } => {
                eprintln!("warning: all training values in layer {layer} are equal; its decisions are constant");
            }
        }
    }
    let file = StrategyFile::from_strategy(&fit.strategy, Some(GridDto::new(&grid, photons)));
    file.write(&out)?;
    let mut m = manifest("fit", &s);
    m.output(&out);
    m.write(&sidecar_path(&out))?;
    println!(
        "fitted lambda={lambda} q_train={q_train:.4} paths={paths} mean_root_payoff={:.6e}",
        fit.mean_root_payoff
    );
    Ok(())
}

fn node_params(grid: &GridSpec, g: usize, leaf: u64) -> Result<FreqDrift> {
    Ok(grid.node_params(NodeId::new(g, leaf))?)
}

/// Writes detections, per-layer summary and optionally the observation log.
fn write_search_outputs(
    dir: &Path,
    grid: &GridSpec,
    tree: &TreeConfig,
    out: &SearchOutcome,
    m: &mut RunManifest,
) -> Result<()> {
    let g = tree.num_layers();
    let detections = out
        .detections
        .iter()
        .map(|d| {
            let p = node_params(grid, g, d.leaf)?;
            Ok(DetectionRow {
                omega_hz: p.omega,
                omegadot_s2: p.omega_dot,
                statistic: d.value,
                leaf_index: d.leaf,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = dir.join("detections.csv");
    io::write_text(&path, &io::format_csv(&detections, &io::DETECTION_HEADER)?)?;
    m.output(&path);

    let summary: Vec<SummaryRow> = out
        .per_layer_observed
        .iter()
        .enumerate()
        .map(|(i, &n)| SummaryRow {
            layer: i + 1,
            observed_count: n,
            cost: n as f64 * tree.costs()[i],
        })
        .collect();
    let path = dir.join("summary.csv");
    io::write_text(&path, &io::format_csv(&summary, &io::SUMMARY_HEADER)?)?;
    m.output(&path);

    if let Some(log) = &out.observed_log {
        let rows = log
            .iter()
            .map(|o| {
                let p = grid.node_params(o.node)?;
                Ok(ObservedRow {
                    layer: o.node.layer,
                    node_index: o.node.index,
                    omega_hz: p.omega,
                    omegadot_s2: p.omega_dot,
                    statistic: o.value,
                    action: o.action.code(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let path = dir.join("observed.csv");
        io::write_text(&path, &io::format_csv(&rows, &io::OBSERVED_HEADER)?)?;
        m.output(&path);
    }
    Ok(())
}

fn load_evaluator(photons: &Path, span: Option<f64>, grid: GridSpec, tree: TreeConfig) -> Result<PulsarEvaluator> {
    let series = io::read_photons(photons, span)?;
    let eval = PulsarEvaluator::with_tree(series, grid, tree).map_err(|e| {
        CliError::Data(anyhow::anyhow!(
            "{}: photons do not fit the search grid: {e}",
            photons.display()
        ))
    })?;
    Ok(eval)
}

fn cmd_search(a: SearchArgs, mut s: Settings) -> Result<()> {
    let strategy_path: PathBuf = required(s.pick_opt("strategy", a.strategy)?, "strategy")?;
    let photons: PathBuf = required(s.pick_opt("photons", a.photons)?, "photons")?;
    let span = s.pick_opt("span", a.span)?;
    let emit = s.pick_switch("emit_observed", a.emit_observed)?;
    let out_dir: PathBuf = required(s.pick_opt("out_dir", a.out_dir)?, "out-dir")?;
    let file = StrategyFile::read(&strategy_path)?;
    let strategy = file.to_strategy()?;
    let grid = file
        .grid
        .ok_or_else(|| CliError::Data(anyhow::anyhow!("{}: strategy file has no search grid", strategy_path.display())))?
        .spec();
    let tree = strategy.tree().clone();
    let q = resolve_threshold(a.threshold, &mut s, tree.leaf_count())?;
    let eval = load_evaluator(&photons, span, grid, tree.clone())?;
    let out = parallel::with_pool(|| {
        parallel::run_search(&strategy, &eval, q, SearchOptions { keep_log: emit })
    })??;
    let mut m = manifest("search", &s);
    m.input(&strategy_path);
    m.input(&photons);
    write_search_outputs(&out_dir, &grid, &tree, &out, &mut m)?;
    m.write(&out_dir.join("manifest.json"))?;
    print_outcome(&out, &tree);
    Ok(())
}

fn print_outcome(out: &SearchOutcome, tree: &TreeConfig) {
    let naive = tree.leaf_count() as f64 * tree.costs()[tree.num_layers() - 1];
    println!(
        "detections={} observed={} cost={} cost_fraction={:.6e}",
        out.detections.len(),
        out.observed_total(),
        out.total_cost,
        out.total_cost / naive
    );
}

fn cmd_naive(a: NaiveArgs, mut s: Settings) -> Result<()> {
    let photons: PathBuf = required(s.pick_opt("photons", a.photons)?, "photons")?;
    let span_flag = s.pick_opt("span", a.span)?;
    let out_dir: PathBuf = required(s.pick_opt("out_dir", a.out_dir)?, "out-dir")?;
    let series = io::read_photons(&photons, span_flag)?;
    let (grid, costs) = resolve_grid(a.grid, &mut s, series.span())?;
    let tree = grid_tree(&grid, costs)?;
    let q = resolve_threshold(a.threshold, &mut s, tree.leaf_count())?;
    let eval = PulsarEvaluator::with_tree(series, grid, tree.clone())?;
    let out = parallel::with_pool(|| parallel::naive_search(&eval, q))?;
    let mut m = manifest("naive", &s);
    m.input(&photons);
    write_search_outputs(&out_dir, &grid, eval.tree(), &out, &mut m)?;
    m.write(&out_dir.join("manifest.json"))?;
    print_outcome(&out, &tree);
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, mut s: Settings) -> Result<()> {
    let desk = DeskConfig::desk_scale();
    let lambdas = s.pick("lambdas", a.lambdas, eval::DEFAULT_LAMBDAS.to_vec())?;
    let thetas = s.pick("thetas", a.thetas, eval::REFERENCE_THETAS.to_vec())?;
    let sims = s.pick("sims", a.sims, 1000usize)?;
    let paths = s.pick("paths", a.paths, 500_000usize)?;
    let quantile = s.pick("qtrain_quantile", a.qtrain_quantile, eval::DEFAULT_QTRAIN_QUANTILE)?;
    let null_roots = s.pick("null_roots", a.null_roots, desk.null_roots)?;
    let span = s.pick("span", a.span, desk.grid.span)?;
    let photons = s.pick("photons", a.photons, desk.photons)?;
    let seed = s.pick("seed", a.seed, 0u64)?;
    let (grid, costs) = resolve_grid(a.grid, &mut s, span)?;
    let leaves = grid_tree(&grid, None)?.leaf_count();
    let default_q = eval::grid_q_reject(eval::DEFAULT_ALPHA, leaves)?;
    let q_reject = s.pick("qreject", a.qreject, default_q)?;
    let out: PathBuf = required(s.pick_opt("out", a.out)?, "out")?;
    if lambdas.is_empty() || thetas.is_empty() {
        return Err(usage("--lambdas and --thetas must not be empty"));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(usage("lambdas must be finite and >= 0"));
    }
    if thetas.iter().any(|t| !(0.0..1.0).contains(t)) {
        return Err(usage("thetas must lie in [0, 1)"));
    }
    if sims == 0 || paths < 2 || null_roots == 0 || photons == 0 {
        return Err(usage("--sims, --null-roots and --photons must be positive and --paths at least 2"));
    }
    check_quantile(quantile, "qtrain-quantile")?;
    if costs.is_some() {
        return Err(usage("evaluate measures cost in unit costs per layer; --costs is not supported"));
    }
    let cfg = DeskConfig {
        grid,
        photons,
        q_reject,
        q_train: chi2_2_quantile(quantile)?,
        train_paths: paths,
        null_roots,
    };
    let spec = TradeoffSpec {
        lambdas,
        thetas,
        sims,
        seed,
    };
    let report = parallel::with_pool(|| eval::estimate_tradeoff(&cfg, &spec))??;
    for f in &report.fits {
        if f.warnings.contains(&FitWarning::NoExceedances) {
            return Err(CliError::DegenerateFit(format!(
                "degenerate fit at lambda = {}: no training path reached q_train; lower \
                 --qtrain-quantile or raise --paths",
                f.strategy.lambda()
            )));
        }
    }
    let rows: Vec<TradeoffRow> = report.points.iter().copied().map(TradeoffRow::from).collect();
    io::write_text(&out, &io::format_csv(&rows, &io::TRADEOFF_HEADER)?)?;
    let mut m = manifest("evaluate", &s);
    m.output(&out);
    m.write(&sidecar_path(&out))?;
    for r in &rows {
        println!(
            "theta={} lambda={} cost_fraction={:.4e} power_fraction={:.4}",
            r.theta, r.lambda, r.cost_fraction, r.power_fraction
        );
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs, mut s: Settings) -> Result<()> {
    let defaults = OracleSpec::default_chain();
    let model: String = s.pick("model", a.model, "gaussian-chain".to_string())?;
    if model != "gaussian-chain" {
        return Err(usage(format!("unknown model {model:?}; only gaussian-chain is available")));
    }
    let rho = s.pick("rho", a.rho, defaults.rho)?;
    let lambda = s.pick("lambda", a.lambda, defaults.lambda)?;
    let q = s.pick("q", a.q, defaults.q)?;
    let paths = s.pick("paths", a.paths, defaults.paths)?;
    let levels = s.pick("levels", a.levels, defaults.levels)?;
    let layers = s.pick("layers", a.layers, defaults.tree.num_layers())?;
    let roots = s.pick("roots", a.roots, defaults.tree.root_count())?;
    let branching = s.pick("branching", a.branching, defaults.tree.branching()[0])?;
    let half_width = s.pick("half_width", a.half_width, defaults.half_width)?;
    let mc_runs = s.pick("mc_runs", a.mc_runs, defaults.mc_runs)?;
    let seed = s.pick("seed", a.seed, 0u64)?;
    let out: Option<PathBuf> = s.pick_opt("out", a.out)?;
    let tree = TreeConfig::uniform(layers, roots, branching).map_err(|e| usage(format!("invalid tree: {e}")))?;
    if paths < 2 || mc_runs == 0 {
        return Err(usage("--paths must be at least 2 and --mc-runs positive"));
    }
    let spec = OracleSpec {
        tree,
        rho,
        levels,
        half_width,
        lambda,
        q,
        paths,
        mc_runs,
        seed,
    };
    let cmp = parallel::with_pool(|| eval::compare_with_oracle(&spec))??;
    let report = eval::oracle_report(&cmp);
    print!("{report}");
    if let Some(path) = out {
        io::write_text(&path, &report)?;
        let mut m = manifest("oracle", &s);
        m.output(&path);
        m.write(&sidecar_path(&path))?;
    }
    Ok(())
}
