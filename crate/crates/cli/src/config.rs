//! Experiment configuration: a TOML file with one table per subcommand.
//!
//! ```toml
//! seed = 7
//!
//! [simulate]
//! graph = { kind = "bgw", law = { kind = "power_law", b = 2.5, k0 = 1 } }
//! kernel = { kind = "sigma", alpha = 0.3, sigma = 1.0 }
//! lambda = [0.5, 1.0, 2.0]
//! horizon = 20.0
//! replicas = 1000
//! ```

use std::path::{Path, PathBuf};

use cpdg::closedform::TailClass;
use cpdg::engine::{BackgroundInit, ProcessVariant};
use cpdg::experiments::GraphSpec;
use cpdg::graph::{GraphView, OffspringLaw, TreeCaps};
use cpdg::kernels::{KernelParams, KernelSpec};
use cpdg::lyapunov::WeightFunction;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

fn one() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Sigma {
        alpha: f64,
        #[serde(default)]
        sigma: f64,
        #[serde(default = "one")]
        kappa: f64,
        #[serde(default)]
        eta: f64,
        #[serde(default = "one")]
        nu: f64,
    },
    /// Degree-independent p and v.
    Constant { p: f64, v: f64 },
}

impl KernelConfig {
    pub fn build(&self) -> cpdg::Result<KernelSpec> {
        match *self {
            KernelConfig::Sigma { alpha, sigma, kappa, eta, nu } => {
                KernelSpec::from_params(KernelParams { alpha, sigma, kappa, eta, nu })
            }
            KernelConfig::Constant { p, v } => KernelSpec::constant(p, v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    /// Edge list inline.
    Finite {
        edges: Vec<(u32, u32)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degrees: Option<Vec<u32>>,
    },
    /// Edge-list file, one `u v` pair per line.
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degrees: Option<Vec<u32>>,
    },
    Bgw {
        law: OffspringLaw,
        #[serde(default)]
        caps: TreeCaps,
    },
    Star { law: OffspringLaw, n: u32, l: u32 },
}

impl GraphConfig {
    pub fn to_spec(&self) -> cpdg::Result<GraphSpec> {
        Ok(match self {
            GraphConfig::Finite { edges, degrees } => GraphSpec::Finite { edges: edges.clone(), degrees: degrees.clone() },
            GraphConfig::File { path, degrees } => {
                let g = cpdg::graph::load(path)?;
                let edges = g.edges().iter().map(|&(a, b)| (a.0, b.0)).collect();
                GraphSpec::Finite { edges, degrees: degrees.clone() }
            }
            GraphConfig::Bgw { law, caps } => GraphSpec::Bgw { law: law.clone(), caps: *caps },
            GraphConfig::Star { law, n, l } => GraphSpec::Star { law: law.clone(), n: *n, l: *l },
        })
    }

    /// The graph itself, for commands that need a finite one.
    pub fn finite(&self) -> cpdg::Result<GraphView> {
        match self.to_spec()? {
            GraphSpec::Finite { edges, degrees } => {
                let g = GraphView::build_finite(&edges)?;
                match degrees {
                    Some(d) => g.with_degrees(&d),
                    None => Ok(g),
                }
            }
            _ => Err(cpdg::Error::NotMaterialized),
        }
    }
}

/// A single value or a grid; each entry is one experiment unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    One(f64),
    Many(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::One(x) => vec![*x],
            Grid::Many(xs) => xs.clone(),
        }
    }
}

fn default_max_infected() -> usize {
    1_000_000
}

fn default_variant() -> ProcessVariant {
    ProcessVariant::Cpdg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub graph: GraphConfig,
    pub kernel: KernelConfig,
    pub lambda: Grid,
    pub horizon: f64,
    pub replicas: u64,
    #[serde(default = "default_max_infected")]
    pub max_infected: usize,
    #[serde(default = "default_variant")]
    pub variant: ProcessVariant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarConfig {
    pub law: OffspringLaw,
    pub ns: Vec<u32>,
    pub l: u32,
    pub lambda: f64,
    pub kernel: KernelConfig,
    pub replicas: u64,
    /// Horizon of the restricted process; without it only the good-neighbour
    /// traces are computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

fn default_background() -> BackgroundInit {
    BackgroundInit::Stationary
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub rs: Vec<u32>,
    /// Degree the kernel sees at every path vertex.
    pub degree: u32,
    pub lambda: f64,
    pub kernel: KernelConfig,
    pub replicas: u64,
    #[serde(default = "default_background")]
    pub background: BackgroundInit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub alpha: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub eta: f64,
    pub tail: TailClass,
    #[serde(default, skip_serializing_if = "is_false")]
    pub zero_offspring: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeLawConfig {
    pub lambda: f64,
    pub v: f64,
    pub p: f64,
    /// Times at which to report the conditional transmission-time tail.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tail_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub graph: GraphConfig,
    pub kernel: KernelConfig,
    pub lambda: f64,
    pub t: f64,
    /// Initially infected vertices; defaults to the root.
    #[serde(default = "root_only")]
    pub init: Vec<u32>,
}

fn root_only() -> Vec<u32> {
    vec![0]
}

fn default_weight() -> WeightFunction {
    WeightFunction::Linear
}

fn default_ball() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub graph: GraphConfig,
    pub kernel: KernelConfig,
    pub lambda: f64,
    #[serde(default = "default_weight")]
    pub weight: WeightFunction,
    /// Depth of the ball materialized when the graph is a lazy tree.
    #[serde(default = "default_ball")]
    pub ball_depth: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub star: Option<StarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseConfig>,
    #[serde(default, rename = "edge-law", skip_serializing_if = "Option::is_none")]
    pub edge_law: Option<EdgeLawConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckConfig>,
}

/// Every problem found in a configuration, one `path: message` per entry.
#[derive(Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

struct Checker(Vec<String>);

impl Checker {
    fn require(&mut self, ok: bool, path: &str, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(format!("{path}: {}", msg()));
        }
    }

    fn finite_nonneg(&mut self, x: f64, path: &str) {
        self.require(x.is_finite() && x >= 0.0, path, || format!("must be finite and >= 0, got {x}"));
    }

    fn kernel(&mut self, k: &KernelConfig, path: &str) {
        if let Err(e) = k.build() {
            match e {
                cpdg::Error::InvalidParameter { field, reason } => {
                    let leaf = field.rsplit('.').next().unwrap_or(&field).to_string();
                    self.0.push(format!("{path}.{leaf}: {reason}"));
                }
                other => self.0.push(format!("{path}: {other}")),
            }
        }
    }

    fn law(&mut self, law: &OffspringLaw, path: &str) {
        if let Err(e) = cpdg::graph::OffspringDistribution::new(law.clone()) {
            self.0.push(format!("{path}: {e}"));
        }
    }

    fn graph(&mut self, g: &GraphConfig, path: &str) {
        match g {
            GraphConfig::Finite { edges, degrees } => {
                let built = GraphView::build_finite(edges).and_then(|g| match degrees {
                    Some(d) => g.with_degrees(d),
                    None => Ok(g),
                });
                if let Err(e) = built {
                    self.0.push(format!("{path}: {e}"));
                }
            }
            GraphConfig::File { .. } => {}
            GraphConfig::Bgw { law, .. } => self.law(law, &format!("{path}.law")),
            GraphConfig::Star { law, n, l } => {
                self.law(law, &format!("{path}.law"));
                self.require(*l >= 1 && n >= l, path, || format!("need n >= l >= 1, got n = {n}, l = {l}"));
            }
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut c = Checker(Vec::new());
        if let Some(s) = &self.simulate {
            c.graph(&s.graph, "simulate.graph");
            c.kernel(&s.kernel, "simulate.kernel");
            let lambdas = s.lambda.values();
            c.require(!lambdas.is_empty(), "simulate.lambda", || "grid is empty".into());
            for (i, l) in lambdas.iter().enumerate() {
                c.finite_nonneg(*l, &format!("simulate.lambda[{i}]"));
            }
            c.finite_nonneg(s.horizon, "simulate.horizon");
            c.require(s.replicas >= 100, "simulate.replicas", || format!("must be >= 100, got {}", s.replicas));
            c.require(s.max_infected >= 1, "simulate.max_infected", || "must be >= 1".into());
        }
        if let Some(s) = &self.star {
            c.law(&s.law, "star.law");
            c.kernel(&s.kernel, "star.kernel");
            c.require(!s.ns.is_empty(), "star.ns", || "must not be empty".into());
            for (i, n) in s.ns.iter().enumerate() {
                c.require(*n >= s.l && s.l >= 1, &format!("star.ns[{i}]"), || format!("need n >= l >= 1, got {n}"));
            }
            c.finite_nonneg(s.lambda, "star.lambda");
            c.require(s.replicas >= 1, "star.replicas", || "must be >= 1".into());
            if let Some(h) = s.horizon {
                c.finite_nonneg(h, "star.horizon");
            }
        }
        if let Some(s) = &self.path {
            c.kernel(&s.kernel, "path.kernel");
            c.require(!s.rs.is_empty() && s.rs.iter().all(|&r| r >= 1), "path.rs", || "need a non-empty list of r >= 1".into());
            c.require(s.degree >= 2, "path.degree", || format!("must be >= 2, got {}", s.degree));
            c.finite_nonneg(s.lambda, "path.lambda");
            c.require(s.replicas >= 1, "path.replicas", || "must be >= 1".into());
        }
        if let Some(s) = &self.phase {
            c.finite_nonneg(s.alpha, "phase.alpha");
            c.require((0.0..=1.0).contains(&s.sigma), "phase.sigma", || format!("must lie in [0,1], got {}", s.sigma));
            c.require(s.eta.is_finite(), "phase.eta", || "must be finite".into());
            match s.tail {
                TailClass::PowerLaw { b } => c.require(b > 2.0, "phase.tail.b", || format!("must exceed 2, got {b}")),
                TailClass::Stretched { beta } => {
                    c.require(beta > 0.0 && beta < 1.0, "phase.tail.beta", || format!("must lie in (0,1), got {beta}"))
                }
            }
        }
        if let Some(s) = &self.edge_law {
            c.require(s.lambda > 0.0 && s.lambda.is_finite(), "edge-law.lambda", || format!("must be > 0, got {}", s.lambda));
            c.require(s.v > 0.0 && s.v.is_finite(), "edge-law.v", || format!("must be > 0, got {}", s.v));
            c.require((0.0..=1.0).contains(&s.p), "edge-law.p", || format!("must lie in [0,1], got {}", s.p));
            for (i, t) in s.tail_times.iter().enumerate() {
                c.finite_nonneg(*t, &format!("edge-law.tail_times[{i}]"));
            }
        }
        if let Some(s) = &self.oracle {
            c.graph(&s.graph, "oracle.graph");
            c.kernel(&s.kernel, "oracle.kernel");
            c.finite_nonneg(s.lambda, "oracle.lambda");
            c.finite_nonneg(s.t, "oracle.t");
        }
        if let Some(s) = &self.check {
            c.graph(&s.graph, "check.graph");
            c.kernel(&s.kernel, "check.kernel");
            c.finite_nonneg(s.lambda, "check.lambda");
        }
        if c.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(c.0))
        }
    }

    /// Sorted-key JSON of the whole configuration, defaults included.
    pub fn canonical_json(&self) -> String {
        // serde_json maps are ordered by key, so this is canonical.
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical JSON, in hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigErrors(vec![e.to_string().trim().to_string()]))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
    parse_config(&text)
}
