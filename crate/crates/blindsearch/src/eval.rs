//! Experiment harness: naive power, cost/power tradeoff curves on the
//! desk-scale pulsar grid, and the fitted-versus-exact comparison on a small
//! Gaussian chain.

use std::cell::RefCell;
use std::collections::HashMap;

use anyhow::{bail, ensure, Context};
use blindsearch_core::engine::pulsar::{GridSpec, PulsarEvaluator, PulsarNullModel};
use blindsearch_core::engine::{run_search, search_subtree, SearchOptions, StatisticEvaluator};
use blindsearch_core::fit::{fit_strategy, Action, FitConfig, FitOutcome, Strategy};
use blindsearch_core::models::DiscreteGaussianChain;
use blindsearch_core::oracle::{evaluate_policy, exact_dp_oracle, OracleSolution};
use blindsearch_core::stats::{
    chi2_2_quantile, chi2_2_upper_quantile, rayleigh_power, simulate_photons, FreqDrift, SignalSpec,
};
use blindsearch_core::tree::{NodeId, TreeConfig};
use blindsearch_core::stream_rng;
use rand::Rng;
use rayon::prelude::*;

use crate::parallel;

/// Observation span of the reference data set (seconds).
pub const REFERENCE_SPAN: f64 = 1_205_197.0;
pub const REFERENCE_PHOTONS: usize = 1072;
/// Frequency and drift of the reference pulsar.
pub const REFERENCE_OMEGA: f64 = 9.761175993;
pub const REFERENCE_OMEGADOT: f64 = -8.827879e-12;
/// Hypotheses in the full-scale search; sets the Bonferroni threshold.
pub const REFERENCE_HYPOTHESES: f64 = 1e9;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const REFERENCE_THETAS: [f64; 4] = [0.24, 0.26, 0.29, 0.34];
pub const DEFAULT_QTRAIN_QUANTILE: f64 = 0.999;

/// Default lambda grid for tradeoff curves.
pub const DEFAULT_LAMBDAS: [f64; 6] = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1];

/// Familywise 5% threshold over 10^9 hypotheses, about 47.44.
pub fn default_q_reject() -> f64 {
    chi2_2_upper_quantile(DEFAULT_ALPHA / REFERENCE_HYPOTHESES).expect("constant tail probability")
}

/// Grid points per effectively independent hypothesis. Neighbouring grid
/// points overlap heavily, so a grid of `n` points counts as `n / 9`.
pub const GRID_POINTS_PER_HYPOTHESIS: f64 = 9.0;

/// Familywise level-`alpha` threshold for a grid with `leaves` points.
pub fn grid_q_reject(alpha: f64, leaves: u64) -> blindsearch_core::Result<f64> {
    let n = (leaves as f64 / GRID_POINTS_PER_HYPOTHESIS).max(1.0);
    chi2_2_upper_quantile(alpha / n)
}

/// Search configuration for tradeoff experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskConfig {
    pub grid: GridSpec,
    pub photons: usize,
    pub q_reject: f64,
    pub q_train: f64,
    pub train_paths: usize,
    /// Root subtrees searched per null data set when estimating cost.
    pub null_roots: usize,
}

impl DeskConfig {
    /// The reference setup scaled down so that an exhaustive sweep is
    /// cheap: span `T / 32`, a narrow frequency band, five layers and
    /// oversampling 3, giving 248 roots and 1,015,808 leaves.
    pub fn desk_scale() -> Self {
        let grid = GridSpec {
                omega_min: 1.0,
                omega_max: 1.035,
                omegadot_min: -5e-11,
                omegadot_max: 0.0,
                layers: 5,
                oversampling: 3.0,
                span: REFERENCE_SPAN / 32.0,
        };
        let leaves = grid.tree().expect("valid grid").leaf_count();
        DeskConfig {
            grid,
            photons: REFERENCE_PHOTONS,
            q_reject: grid_q_reject(DEFAULT_ALPHA, leaves).expect("valid level"),
            q_train: chi2_2_quantile(DEFAULT_QTRAIN_QUANTILE).expect("constant quantile"),
            train_paths: 100_000,
            null_roots: 8,
        }
    }

    pub fn tree(&self) -> anyhow::Result<TreeConfig> {
        Ok(self.grid.tree()?)
    }
}

/// Mixes a label into a seed so that independent experiment parts use
/// unrelated generators.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const LABEL_TRAIN: u64 = 1;
const LABEL_SIGNAL: u64 = 2;
const LABEL_NULL: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub power: f64,
    pub std_error: f64,
    pub n_sims: usize,
}

/// Monte-Carlo probability that the Rayleigh power at the true frequency
/// reaches `q_reject`, for the reference span and pulsar parameters.
pub fn naive_power_check(
    theta: f64,
    photons: usize,
    q_reject: f64,
    n_sims: usize,
    seed: u64,
) -> anyhow::Result<PowerEstimate> {
    ensure!(n_sims > 0, "need at least one simulation");
    let freq = FreqDrift::new(REFERENCE_OMEGA, REFERENCE_OMEGADOT)?;
    let spec = SignalSpec {
        theta,
        freq,
        photons,
        span: REFERENCE_SPAN,
    };
    spec.validate()?;
    let hits: Vec<bool> = (0..n_sims)
        .into_par_iter()
        .map(|i| {
            let p = simulate_photons(&spec, &mut stream_rng(seed, i as u64)).expect("validated spec");
            rayleigh_power(&p, freq) >= q_reject
        })
        .collect();
    let k = hits.iter().filter(|&&h| h).count() as f64;
    let n = n_sims as f64;
    let power = k / n;
    Ok(PowerEstimate {
        power,
        std_error: (power * (1.0 - power) / n).sqrt(),
        n_sims,
    })
}

/// One point of a cost/power tradeoff curve. Fractions are relative to the
/// exhaustive search on the same data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub theta: f64,
    pub lambda: f64,
    pub cost_fraction: f64,
    pub power_fraction: f64,
    pub cost_se: f64,
    pub power_se: f64,
    pub n_sims: usize,
    /// Exhaustive-search success rate on the signal data sets.
    pub naive_power: f64,
}

#[derive(Debug, Clone)]
pub struct TradeoffSpec {
    pub lambdas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub sims: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TradeoffReport {
    pub points: Vec<TradeoffPoint>,
    pub fits: Vec<FitOutcome>,
}

/// Memoizes node statistics of one data set so that strategies fitted for
/// different lambdas share evaluations.
struct Cached<'a> {
    inner: &'a PulsarEvaluator,
    values: RefCell<HashMap<NodeId, f64>>,
}

impl<'a> Cached<'a> {
    fn new(inner: &'a PulsarEvaluator) -> Self {
        Cached {
            inner,
            values: RefCell::new(HashMap::new()),
        }
    }
}

impl StatisticEvaluator for Cached<'_> {
    fn tree(&self) -> &TreeConfig {
        self.inner.tree()
    }

    fn evaluate(&self, node: NodeId) -> f64 {
        if let Some(&v) = self.values.borrow().get(&node) {
            return v;
        }
        let v = self.inner.evaluate(node);
        self.values.borrow_mut().insert(node, v);
        v
    }
}

/// Fits one strategy per lambda from a single shared set of null paths.
pub fn fit_lambda_grid(cfg: &DeskConfig, lambdas: &[f64], seed: u64) -> anyhow::Result<Vec<FitOutcome>> {
    ensure!(!lambdas.is_empty(), "empty lambda grid");
    let model = PulsarNullModel::new(cfg.grid, cfg.photons)?;
    let paths = parallel::sample_paths(&model, cfg.train_paths, derive_seed(seed, LABEL_TRAIN));
    let tree = cfg.tree()?;
    lambdas
        .par_iter()
        .map(|&lambda| {
            let fit = FitConfig {
                tree: tree.clone(),
                lambda,
                q_train: cfg.q_train,
                seed,
            };
            fit_strategy(&paths, &fit).with_context(|| format!("fitting lambda = {lambda}"))
        })
        .collect()
}

fn within_radius(grid: &GridSpec, node: NodeId, truth: FreqDrift) -> bool {
    let p = grid.node_params(node).expect("node inside the grid");
    let t = grid.span;
    (p.omega - truth.omega).abs() <= 1.0 / t && (p.omega_dot - truth.omega_dot).abs() <= 1.0 / (t * t)
}

/// Per data set: whether the exhaustive search succeeds, and whether each
/// strategy does.
fn signal_trial(
    cfg: &DeskConfig,
    strategies: &[Strategy],
    theta: f64,
    seed: u64,
    index: u64,
) -> anyhow::Result<(bool, Vec<bool>)> {
    let grid = &cfg.grid;
    let mut rng = stream_rng(seed, index);
    let truth = FreqDrift::new(
        rng.random_range(grid.omega_min..=grid.omega_max),
        rng.random_range(grid.omegadot_min..=grid.omegadot_max),
    )?;
    let spec = SignalSpec {
        theta,
        freq: truth,
        photons: cfg.photons,
        span: grid.span,
    };
    let photons = simulate_photons(&spec, &mut rng)?;
    let eval = PulsarEvaluator::new(photons, *grid)?;
    let cached = Cached::new(&eval);
    let t = grid.span;
    let roots = grid.roots_near(truth.omega, truth.omega_dot, 1.0 / t, 1.0 / (t * t))?;
    let tree = eval.tree();
    let g = tree.num_layers();
    let per_root = tree.span(1, g)?;

    let mut naive = false;
    'roots: for &root in &roots {
        for leaf in root * per_root..(root + 1) * per_root {
            let node = NodeId::new(g, leaf);
            if within_radius(grid, node, truth) && cached.evaluate(node) >= cfg.q_reject {
                naive = true;
                break 'roots;
            }
        }
    }
    let mut found = Vec::with_capacity(strategies.len());
    for strategy in strategies {
        let mut hit = false;
        // Strategy detections are a subset of the exhaustive ones.
        if naive {
            for &root in &roots {
                let out = search_subtree(strategy, &cached, cfg.q_reject, root, SearchOptions::default())?;
                if out
                    .detections
                    .iter()
                    .any(|d| within_radius(grid, NodeId::new(g, d.leaf), truth))
                {
                    hit = true;
                    break;
                }
            }
        }
        found.push(hit);
    }
    Ok((naive, found))
}

/// Per null data set: each strategy's cost as a fraction of the naive cost,
/// estimated from a random sample of root subtrees.
fn null_trial(cfg: &DeskConfig, strategies: &[Strategy], seed: u64, index: u64) -> anyhow::Result<Vec<f64>> {
    let grid = &cfg.grid;
    let mut rng = stream_rng(seed, index);
    let spec = SignalSpec {
        theta: 0.0,
        freq: FreqDrift::new(grid.omega_min, 0.0)?,
        photons: cfg.photons,
        span: grid.span,
    };
    let photons = simulate_photons(&spec, &mut rng)?;
    let eval = PulsarEvaluator::new(photons, *grid)?;
    let cached = Cached::new(&eval);
    let tree = eval.tree();
    let n1 = tree.root_count();
    let k = cfg.null_roots.max(1);
    let roots: Vec<u64> = (0..k).map(|_| rng.random_range(0..n1)).collect();
    let g = tree.num_layers();
    let naive_cost = tree.leaf_count() as f64 * tree.costs()[g - 1];
    let scale = n1 as f64 / k as f64 / naive_cost;
    strategies
        .iter()
        .map(|s| {
            let mut cost = 0.0;
            for &root in &roots {
                cost += search_subtree(s, &cached, cfg.q_reject, root, SearchOptions::default())?.total_cost;
            }
            Ok(cost * scale)
        })
        .collect()
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Evaluates already fitted strategies: cost under the global null, power on
/// signal injections at uniformly random `(omega, omegadot)` in the box.
pub fn evaluate_strategies(
    cfg: &DeskConfig,
    strategies: &[Strategy],
    thetas: &[f64],
    sims: usize,
    seed: u64,
) -> anyhow::Result<Vec<TradeoffPoint>> {
    ensure!(!strategies.is_empty(), "empty lambda grid");
    ensure!(!thetas.is_empty(), "empty theta grid");
    ensure!(sims > 0, "need at least one simulation");
    let tree = cfg.tree()?;
    for s in strategies {
        if s.tree() != &tree {
            bail!("strategy tree does not match the search grid");
        }
    }
    let null_seed = derive_seed(seed, LABEL_NULL);
    let costs: Vec<Vec<f64>> = (0..sims as u64)
        .into_par_iter()
        .map(|i| null_trial(cfg, strategies, null_seed, i))
        .collect::<anyhow::Result<_>>()?;

    let mut points = Vec::new();
    for (ti, &theta) in thetas.iter().enumerate() {
        let signal_seed = derive_seed(derive_seed(seed, LABEL_SIGNAL), ti as u64);
        let trials: Vec<(bool, Vec<bool>)> = (0..sims as u64)
            .into_par_iter()
            .map(|i| signal_trial(cfg, strategies, theta, signal_seed, i))
            .collect::<anyhow::Result<_>>()?;
        let n = sims as f64;
        let naive: Vec<f64> = trials.iter().map(|t| f64::from(u8::from(t.0))).collect();
        let naive_mean = naive.iter().sum::<f64>() / n;
        for (si, strategy) in strategies.iter().enumerate() {
            let hit: Vec<f64> = trials.iter().map(|t| f64::from(u8::from(t.1[si]))).collect();
            let hit_mean = hit.iter().sum::<f64>() / n;
            let (power_fraction, power_se) = if naive_mean > 0.0 {
                let r = hit_mean / naive_mean;
                // Delta method for a ratio of paired means.
                let resid: Vec<f64> = hit.iter().zip(&naive).map(|(a, b)| a - r * b).collect();
                let (_, se) = mean_and_se(&resid);
                (r, se / naive_mean)
            } else {
                (f64::NAN, f64::NAN)
            };
            let cost: Vec<f64> = costs.iter().map(|c| c[si]).collect();
            let (cost_fraction, cost_se) = mean_and_se(&cost);
            points.push(TradeoffPoint {
                theta,
                lambda: strategy.lambda(),
                cost_fraction,
                power_fraction,
                cost_se,
                power_se,
                n_sims: sims,
                naive_power: naive_mean,
            });
        }
    }
    Ok(points)
}

/// Fits one strategy per lambda and traces the tradeoff curve for every
/// signal strength.
pub fn estimate_tradeoff(cfg: &DeskConfig, spec: &TradeoffSpec) -> anyhow::Result<TradeoffReport> {
    ensure!(!spec.lambdas.is_empty(), "empty lambda grid");
    let fits = fit_lambda_grid(cfg, &spec.lambdas, spec.seed)?;
    let strategies: Vec<Strategy> = fits.iter().map(|f| f.strategy.clone()).collect();
    let points = evaluate_strategies(cfg, &strategies, &spec.thetas, spec.sims, spec.seed)?;
    Ok(TradeoffReport { points, fits })
}

/// Setup of the fitted-versus-exact comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub tree: TreeConfig,
    pub rho: f64,
    pub levels: usize,
    pub half_width: f64,
    pub lambda: f64,
    pub q: f64,
    pub paths: usize,
    pub mc_runs: usize,
    pub seed: u64,
}

impl OracleSpec {
    /// Three layers, 4 roots, 8 children per node: 256 leaves.
    pub fn default_chain() -> Self {
        OracleSpec {
            tree: TreeConfig::new(4, vec![8, 8], vec![1.0; 3]).expect("constant tree"),
            rho: 0.7,
            levels: 200,
            half_width: 5.0,
            lambda: 0.05,
            q: 2.0,
            paths: 100_000,
            mc_runs: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub oracle: OracleSolution,
    pub fitted: FitOutcome,
    /// Exact expected payoff of the fitted strategy.
    pub fitted_exact: f64,
    /// Fresh-simulation estimate of the fitted strategy's payoff.
    pub fitted_mc: f64,
    pub fitted_mc_se: f64,
}

impl OracleComparison {
    /// Fitted payoff (simulated) over the optimum.
    pub fn ratio(&self) -> f64 {
        self.fitted_mc / self.oracle.payoff()
    }
}

/// Payoff of one search: detections minus `lambda` times the cost below the
/// root layer.
fn realized_payoff(tree: &TreeConfig, observed: &[u64], detections: usize, lambda: f64) -> f64 {
    let cost: f64 = tree.costs()[1..]
        .iter()
        .zip(&observed[1..])
        .map(|(c, &n)| c * n as f64)
        .sum();
    detections as f64 - lambda * cost
}

pub fn compare_with_oracle(spec: &OracleSpec) -> anyhow::Result<OracleComparison> {
    let model = DiscreteGaussianChain::new(spec.tree.clone(), spec.rho, spec.levels, spec.half_width)?;
    let oracle = exact_dp_oracle(&model, spec.lambda, spec.q)?;
    let paths = parallel::sample_paths(&model, spec.paths, derive_seed(spec.seed, LABEL_TRAIN));
    let fitted = fit_strategy(
        &paths,
        &FitConfig {
            tree: spec.tree.clone(),
            lambda: spec.lambda,
            q_train: spec.q,
            seed: spec.seed,
        },
    )?;
    let fitted_exact = evaluate_policy(&model, &fitted.strategy, spec.lambda, spec.q)?;
    ensure!(spec.mc_runs > 0, "need at least one simulation run");
    let sim_seed = derive_seed(spec.seed, LABEL_SIGNAL);
    let payoffs: Vec<f64> = (0..spec.mc_runs as u64)
        .into_par_iter()
        .map(|i| {
            let r = model.sample_realization(&mut stream_rng(sim_seed, i));
            let out = run_search(&fitted.strategy, &r, spec.q, SearchOptions::default())?;
            Ok(realized_payoff(
                &spec.tree,
                &out.per_layer_observed,
                out.detections.len(),
                spec.lambda,
            ))
        })
        .collect::<anyhow::Result<_>>()?;
    let (fitted_mc, fitted_mc_se) = mean_and_se(&payoffs);
    Ok(OracleComparison {
        oracle,
        fitted,
        fitted_exact,
        fitted_mc,
        fitted_mc_se,
    })
}

fn describe_regions(regions: &[(f64, Action)]) -> String {
    regions
        .iter()
        .map(|(x, a)| match a {
            Action::Stop => format!("x>={x:.4}:stop"),
            Action::Jump(s) => format!("x>={x:.4}:jump{s}"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Plain-text report: payoffs and per-layer decision regions.
pub fn oracle_report(cmp: &OracleComparison) -> String {
    let mut out = String::new();
    let o = &cmp.oracle;
    out.push_str(&format!("lambda\t{}\nq\t{}\n", o.lambda(), o.q()));
    out.push_str(&format!("oracle_payoff\t{:.6}\n", o.payoff()));
    out.push_str(&format!("fitted_payoff_exact\t{:.6}\n", cmp.fitted_exact));
    out.push_str(&format!(
        "fitted_payoff_mc\t{:.6}\t(se {:.6})\n",
        cmp.fitted_mc, cmp.fitted_mc_se
    ));
    let gap = if o.payoff() != 0.0 {
        1.0 - cmp.fitted_mc / o.payoff()
    } else {
        cmp.fitted_mc.abs()
    };
    out.push_str(&format!("payoff_gap\t{gap:.4}\n"));
    out.push_str("layer\tsource\tregions\n");
    let oracle_regions = o.decision_regions();
    for layer in 1..cmp.fitted.strategy.tree().num_layers() {
        out.push_str(&format!(
            "{layer}\toracle\t{}\n",
            describe_regions(&oracle_regions[layer - 1])
        ));
        out.push_str(&format!(
            "{layer}\tfitted\t{}\n",
            describe_regions(&cmp.fitted.strategy.decision_regions(layer))
        ));
    }
    out
}
