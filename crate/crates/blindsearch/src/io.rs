//! File formats: photon lists, strategy JSON and the CSV tables.
//!
//! Floats are written in shortest round-trip form, so every format reads
//! back to the identical values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use blindsearch_core::engine::pulsar::GridSpec;
use blindsearch_core::fit::Strategy;
use blindsearch_core::isotonic::MonotoneFn;
use blindsearch_core::stats::PhotonSeries;
use blindsearch_core::tree::TreeConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const PHOTON_FORMAT_VERSION: u32 = 1;
pub const STRATEGY_FORMAT_VERSION: u32 = 1;
pub const CSV_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Photon { line: usize, msg: String },
    #[error("photon file gives no span: add a '# T=<seconds>' line or pass --span")]
    MissingSpan,
    #[error("invalid strategy file: {0}")]
    Strategy(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] blindsearch_core::Error),
}

type Result<T, E = FormatError> = std::result::Result<T, E>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `contents`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    let io = |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

// ---------------------------------------------------------------- photons

/// Span declared by a `# T=<seconds>` comment, if `line` is one.
fn header_span(line: &str) -> Option<&str> {
    let rest = line.strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix('T')?.trim_start();
    Some(rest.strip_prefix('=')?.trim())
}

/// Parses a photon list: one arrival time (seconds) per line, `#` comments.
/// `span` overrides any `# T=` header.
pub fn parse_photons(text: &str, span: Option<f64>) -> Result<PhotonSeries> {
    let mut times = Vec::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = header_span(line) {
                let t: f64 = v.parse().map_err(|_| FormatError::Photon {
                    line: i + 1,
                    msg: format!("bad span {v:?}"),
                })?;
                header = Some(t);
            }
            continue;
        }
        let t: f64 = line.parse().map_err(|_| FormatError::Photon {
            line: i + 1,
            msg: format!("not a number: {line:?}"),
        })?;
        times.push(t);
    }
    let span = span.or(header).ok_or(FormatError::MissingSpan)?;
    Ok(PhotonSeries::new(times, span)?)
}

pub fn read_photons(path: &Path, span: Option<f64>) -> Result<PhotonSeries> {
    parse_photons(&read_text(path)?, span)
}

/// Photon file text; `comments` become extra `#` lines after the span.
pub fn format_photons(p: &PhotonSeries, comments: &[String]) -> String {
    let mut out = String::with_capacity(24 * p.len() + 64);
    let _ = writeln!(out, "# T={}", p.span());
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    for t in p.times() {
        let _ = writeln!(out, "{t}");
    }
    out
}

pub fn write_photons(path: &Path, p: &PhotonSeries, comments: &[String]) -> Result<()> {
    write_text(path, &format_photons(p, comments))
}

// ---------------------------------------------------------------- strategy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDto {
    #[serde(rename = "G")]
    pub g: usize,
    pub n1: u64,
    pub branching: Vec<u64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDto {
    pub s: usize,
    pub breakpoints: Vec<f64>,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDto {
    pub layer: usize,
    pub actions: Vec<ActionDto>,
}

/// Search grid a strategy was trained on, so searches can rebuild it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDto {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omegadot_min: f64,
    pub omegadot_max: f64,
    pub layers: usize,
    pub oversampling: f64,
    pub span: f64,
    /// Photons per training series.
    pub photons: usize,
}

impl GridDto {
    pub fn new(grid: &GridSpec, photons: usize) -> Self {
        GridDto {
            omega_min: grid.omega_min,
            omega_max: grid.omega_max,
            omegadot_min: grid.omegadot_min,
            omegadot_max: grid.omegadot_max,
            layers: grid.layers,
            oversampling: grid.oversampling,
            span: grid.span,
            photons,
        }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            omegadot_min: self.omegadot_min,
            omegadot_max: self.omegadot_max,
            layers: self.layers,
            oversampling: self.oversampling,
            span: self.span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyFile {
    pub format_version: u32,
    pub tree: TreeDto,
    pub lambda: f64,
    pub q_train: f64,
    pub layers: Vec<LayerDto>,
    pub seed: u64,
    pub num_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDto>,
}

impl StrategyFile {
    pub fn from_strategy(s: &Strategy, grid: Option<GridDto>) -> Self {
        let tree = s.tree();
        let g = tree.num_layers();
        let layers = (1..g)
            .map(|layer| LayerDto {
                layer,
                actions: s
                    .layer_functions(layer)
                    .iter()
                    .enumerate()
                    .map(|(k, f)| ActionDto {
                        s: layer + 1 + k,
                        breakpoints: f.breakpoints().to_vec(),
                        levels: f.levels().to_vec(),
                    })
                    .collect(),
            })
            .collect();
        StrategyFile {
            format_version: STRATEGY_FORMAT_VERSION,
            tree: TreeDto {
                g,
                n1: tree.root_count(),
                branching: tree.branching().to_vec(),
                costs: tree.costs().to_vec(),
            },
            lambda: s.lambda(),
            q_train: s.q_train(),
            layers,
            seed: s.seed(),
            num_paths: s.num_paths(),
            grid,
        }
    }

    pub fn to_strategy(&self) -> Result<Strategy> {
        let bad = |msg: String| FormatError::Strategy(msg);
        if self.format_version != STRATEGY_FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {} (expected {STRATEGY_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let t = &self.tree;
        if t.costs.len() != t.g || t.branching.len() + 1 != t.g {
            return Err(bad(format!("tree with G = {} needs {} costs and {} branching factors", t.g, t.g, t.g.saturating_sub(1))));
        }
        let tree = TreeConfig::new(t.n1, t.branching.clone(), t.costs.clone())?;
        if self.layers.len() + 1 != t.g {
            return Err(bad(format!("expected {} layers, found {}", t.g - 1, self.layers.len())));
        }
        let mut continuation = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            if l.layer != i + 1 {
                return Err(bad(format!("layer entries must be ordered 1..G-1, found {} at position {}", l.layer, i + 1)));
            }
            if l.actions.len() != t.g - l.layer {
                return Err(bad(format!("layer {} needs {} actions", l.layer, t.g - l.layer)));
            }
            let mut fns = Vec::with_capacity(l.actions.len());
            for (k, a) in l.actions.iter().enumerate() {
                if a.s != l.layer + 1 + k {
                    return Err(bad(format!("layer {}: actions must list s = {}..{} in order", l.layer, l.layer + 1, t.g)));
                }
                fns.push(MonotoneFn::new(a.breakpoints.clone(), a.levels.clone())?);
            }
            continuation.push(fns);
        }
        if let Some(grid) = &self.grid {
            let spec = grid.spec();
            let expected = spec.tree()?;
            if expected.root_count() != tree.root_count() || expected.branching() != tree.branching() {
                return Err(bad("grid does not produce the strategy's tree".into()));
            }
        }
        Ok(Strategy::from_parts(
            tree,
            self.lambda,
            self.q_train,
            continuation,
            self.seed,
            self.num_paths,
        )?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("strategy serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FormatError::Strategy(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }
}

// ---------------------------------------------------------------- tables

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub omega_hz: f64,
    pub omegadot_s2: f64,
    pub statistic: f64,
    pub leaf_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub layer: usize,
    pub observed_count: u64,
    pub cost: f64,
}

/// One observed node, for plots of where the search looked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedRow {
    pub layer: usize,
    pub node_index: u64,
    pub omega_hz: f64,
    pub omegadot_s2: f64,
    pub statistic: f64,
    /// `0` for stop, otherwise the target layer; leaves always show 0.
    pub action: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub lambda: f64,
    pub cost_fraction: f64,
    pub power_fraction: f64,
    pub cost_se: f64,
    pub power_se: f64,
    pub n_sims: usize,
    pub theta: f64,
    pub naive_power: f64,
}

impl From<crate::eval::TradeoffPoint> for TradeoffRow {
    fn from(p: crate::eval::TradeoffPoint) -> Self {
        TradeoffRow {
            lambda: p.lambda,
            cost_fraction: p.cost_fraction,
            power_fraction: p.power_fraction,
            cost_se: p.cost_se,
            power_se: p.power_se,
            n_sims: p.n_sims,
            theta: p.theta,
            naive_power: p.naive_power,
        }
    }
}

/// CSV text with a header row, even when `rows` is empty.
pub fn format_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(FormatError::from)).collect()
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_csv(&read_text(path)?)
}

pub const DETECTION_HEADER: [&str; 4] = ["omega_hz", "omegadot_s2", "statistic", "leaf_index"];
pub const SUMMARY_HEADER: [&str; 3] = ["layer", "observed_count", "cost"];
pub const OBSERVED_HEADER: [&str; 6] = ["layer", "node_index", "omega_hz", "omegadot_s2", "statistic", "action"];
pub const TRADEOFF_HEADER: [&str; 8] = [
    "lambda",
    "cost_fraction",
    "power_fraction",
    "cost_se",
    "power_se",
    "n_sims",
    "theta",
    "naive_power",
];
